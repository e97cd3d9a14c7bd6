/** Typed client for the review service; fetch is injectable for tests. */
import type {
  ClusterView,
  JobStatus,
  LabelRequest,
  SegmentPage,
  ServiceStats,
} from './types';

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  constructor(
    public status: number,
    public detail: string,
  ) {
    super(`HTTP ${status}: ${detail}`);
  }
}

export class ApiClient {
  constructor(
    private baseUrl: string,
    private fetchImpl: FetchLike = (...args) => fetch(...args),
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const response = await this.fetchImpl(`${this.baseUrl}${path}`, init);
    if (!response.ok) {
      let detail = response.statusText;
      try {
        const body = await response.json();
        if (body && typeof body.detail === 'string') detail = body.detail;
      } catch {
        // non-JSON error body; keep the status text
      }
      throw new ApiError(response.status, detail);
    }
    return (await response.json()) as T;
  }

  private post<T>(path: string, body: unknown): Promise<T> {
    return this.request<T>(path, {
      method: 'POST',
      headers: { 'content-type': 'application/json' },
      body: JSON.stringify(body),
    });
  }

  clusters(): Promise<ClusterView[]> {
    return this.request<ClusterView[]>('/api/clusters');
  }

  clusterSegments(clusterId: number, page = 0, pageSize = 100): Promise<SegmentPage> {
    return this.request<SegmentPage>(
      `/api/clusters/${clusterId}/segments?page=${page}&page_size=${pageSize}`,
    );
  }

  async allClusterSegments(clusterId: number): Promise<SegmentPage> {
    const first = await this.clusterSegments(clusterId, 0);
    const segments = [...first.segments];
    let page = 1;
    while (segments.length < first.total) {
      const next = await this.clusterSegments(clusterId, page);
      if (next.segments.length === 0) break;
      segments.push(...next.segments);
      page += 1;
    }
    return { ...first, segments };
  }

  labelSegment(segmentId: string, body: LabelRequest): Promise<{ ok: boolean; seq: number }> {
    return this.post(`/api/segments/${segmentId}/label`, body);
  }

  validateCluster(
    clusterId: number,
    body: { label?: string; annotator?: string; decision_id?: string },
  ): Promise<{ ok: boolean; label: string; count: number }> {
    return this.post(`/api/clusters/${clusterId}/validate`, body);
  }

  rejectCluster(
    clusterId: number,
    body: { annotator?: string; decision_id?: string } = {},
  ): Promise<{ ok: boolean; count: number }> {
    return this.post(`/api/clusters/${clusterId}/reject`, body);
  }

  recluster(maxIterations = 3): Promise<{ job_id: string }> {
    return this.post('/api/recluster', { max_iterations: maxIterations });
  }

  job(jobId: string): Promise<JobStatus> {
    return this.request<JobStatus>(`/api/jobs/${jobId}`);
  }

  stats(): Promise<ServiceStats> {
    return this.request<ServiceStats>('/api/stats');
  }

  spectrogramUrl(segmentId: string): string {
    return `${this.baseUrl}/api/segments/${segmentId}/spectrogram.png`;
  }

  audioUrl(segmentId: string): string {
    return `${this.baseUrl}/api/segments/${segmentId}/audio.wav`;
  }
}
