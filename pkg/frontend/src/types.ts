/** Payload types mirroring the review service API. */

export interface ClusterProgress {
  validated: number;
  rejected: number;
  pending: number;
}

export interface ClusterView {
  cluster_id: number;
  size: number;
  suggested_label: string | null;
  iteration: number;
  progress: ClusterProgress;
}

export interface SegmentView {
  segment_id: string;
  source_id: string;
  t_start_s: number;
  t_end_s: number;
  species_hint: string | null;
  membership_strength: number;
  xy: [number, number] | null;
  current_label: string | null;
  current_status: string | null;
}

export interface SegmentPage {
  cluster_id: number;
  page: number;
  page_size: number;
  total: number;
  segments: SegmentView[];
}

export interface JobStatus {
  job_id: string;
  status: 'running' | 'done' | 'failed';
  new_clusters?: number;
  error?: string;
}

export interface ServiceStats {
  total_segments: number;
  decisions: number;
  labels: Record<string, { validated: number; rejected: number; suggested: number }>;
  noise_count: number;
  clusters: number;
}

export interface LabelRequest {
  label: string;
  status?: string;
  annotator?: string;
  note?: string | null;
  decision_id?: string;
}

export const NEGATIVE_LABEL = 'NEGATIVE';
