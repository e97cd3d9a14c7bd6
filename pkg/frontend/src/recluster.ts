/** Noise re-clustering control: trigger the job and poll to completion. */
import { ApiClient } from './api';
import type { JobStatus } from './types';

const sleep = (ms: number) => new Promise<void>((resolve) => setTimeout(resolve, ms));

export async function pollJob(
  api: ApiClient,
  jobId: string,
  intervalMs = 500,
  maxAttempts = 600,
): Promise<JobStatus> {
  for (let attempt = 0; attempt < maxAttempts; attempt += 1) {
    const job = await api.job(jobId);
    if (job.status === 'done') return job;
    if (job.status === 'failed') throw new Error(job.error ?? 'recluster job failed');
    await sleep(intervalMs);
  }
  throw new Error(`job ${jobId} still running after ${maxAttempts} polls`);
}

export class ReclusterPanel {
  noiseCount = 0;
  running = false;
  lastNewClusters: number | null = null;

  constructor(private api: ApiClient) {}

  async refresh(): Promise<void> {
    const stats = await this.api.stats();
    this.noiseCount = stats.noise_count;
  }

  get buttonEnabled(): boolean {
    return this.noiseCount > 0 && !this.running;
  }

  /** Trigger a recluster run; returns the ids of clusters created by it. */
  async run(maxIterations = 3, intervalMs = 500): Promise<Set<number>> {
    if (!this.buttonEnabled) return new Set();
    this.running = true;
    try {
      const before = new Set((await this.api.clusters()).map((c) => c.cluster_id));
      const { job_id } = await this.api.recluster(maxIterations);
      const job = await pollJob(this.api, job_id, intervalMs);
      this.lastNewClusters = job.new_clusters ?? 0;
      const after = await this.api.clusters();
      await this.refresh();
      return new Set(after.map((c) => c.cluster_id).filter((id) => !before.has(id)));
    } finally {
      this.running = false;
    }
  }
}

export function renderReclusterPanel(panel: ReclusterPanel): string {
  const status = panel.running
    ? '<span class="spinner">re-clustering&hellip;</span>'
    : panel.lastNewClusters !== null
      ? `<span class="result">${panel.lastNewClusters} new clusters</span>`
      : '';
  return (
    `<div class="recluster-panel">` +
    `<span class="noise-count">${panel.noiseCount} noise segments</span>` +
    `<button id="recluster"${panel.buttonEnabled ? '' : ' disabled'}>Re-cluster noise</button>` +
    status +
    `</div>`
  );
}
