/** Review session state: navigation, keyboard decisions, retry bookkeeping.
 *
 * Every decision carries a client-generated idempotency key, so a retried
 * POST can never duplicate a label record on the server. Failed decisions
 * are re-queued and the segment stays flagged until an ack arrives.
 */
import { ApiClient } from './api';
import { NEGATIVE_LABEL } from './types';
import type { ClusterView, SegmentView } from './types';

export interface PendingDecision {
  decisionId: string;
  segmentId: string;
  label: string;
  status: string;
  attempts: number;
}

export type SessionEvent =
  | { kind: 'decided'; segmentId: string; label: string }
  | { kind: 'queued'; segmentId: string; label: string }
  | { kind: 'advanced'; index: number }
  | { kind: 'closed-cluster' };

function newDecisionId(): string {
  const cryptoObj = globalThis.crypto;
  if (cryptoObj && 'randomUUID' in cryptoObj) return cryptoObj.randomUUID();
  return `d-${Date.now()}-${Math.random().toString(36).slice(2, 10)}`;
}

export class ReviewSession {
  clusters: ClusterView[] = [];
  currentCluster: ClusterView | null = null;
  segments: SegmentView[] = [];
  index = 0;
  keyboardMode = true;
  annotator: string;
  /** decisions sent but not yet acknowledged, by idempotency key */
  pending = new Map<string, PendingDecision>();
  /** decisions whose POST failed; retryFailed() resends them */
  failed: PendingDecision[] = [];
  events: SessionEvent[] = [];

  constructor(
    private api: ApiClient,
    public speciesList: string[],
    annotator = 'reviewer',
  ) {
    this.annotator = annotator;
  }

  async loadGallery(): Promise<ClusterView[]> {
    this.clusters = await this.api.clusters();
    return this.clusters;
  }

  async openCluster(clusterId: number): Promise<void> {
    const cluster = this.clusters.find((c) => c.cluster_id === clusterId);
    if (!cluster) throw new Error(`unknown cluster ${clusterId}`);
    const page = await this.api.allClusterSegments(clusterId);
    this.currentCluster = cluster;
    this.segments = page.segments;
    this.index = 0;
  }

  currentSegment(): SegmentView | null {
    return this.segments[this.index] ?? null;
  }

  /** Keyboard mapping: a = accept suggestion, r = reject (NEGATIVE),
   * digits = species list, arrows = navigate. */
  async handleKey(key: string): Promise<void> {
    if (!this.keyboardMode || !this.currentCluster) return;
    if (key === 'ArrowRight') {
      this.advance();
      return;
    }
    if (key === 'ArrowLeft') {
      this.index = Math.max(0, this.index - 1);
      this.events.push({ kind: 'advanced', index: this.index });
      return;
    }
    if (key === 'a') {
      const suggestion = this.currentCluster.suggested_label;
      if (suggestion) await this.decide(suggestion);
      return;
    }
    if (key === 'r') {
      await this.decide(NEGATIVE_LABEL);
      return;
    }
    if (/^[1-9]$/.test(key)) {
      const species = this.speciesList[Number(key) - 1];
      if (species) await this.decide(species);
    }
  }

  /** POST one decision for the current segment, then advance. */
  async decide(label: string, status = 'validated'): Promise<void> {
    const segment = this.currentSegment();
    if (!segment) return;
    const decision: PendingDecision = {
      decisionId: newDecisionId(),
      segmentId: segment.segment_id,
      label,
      status,
      attempts: 0,
    };
    await this.send(decision);
    this.advance();
  }

  private async send(decision: PendingDecision): Promise<void> {
    decision.attempts += 1;
    this.pending.set(decision.decisionId, decision);
    try {
      await this.api.labelSegment(decision.segmentId, {
        label: decision.label,
        status: decision.status,
        annotator: this.annotator,
        decision_id: decision.decisionId,
      });
      this.pending.delete(decision.decisionId);
      const row = this.segments.find((s) => s.segment_id === decision.segmentId);
      if (row) {
        row.current_label = decision.label;
        row.current_status = decision.status;
      }
      this.events.push({ kind: 'decided', segmentId: decision.segmentId, label: decision.label });
    } catch {
      // keep the idempotency key: a retry can never double-record
      this.pending.delete(decision.decisionId);
      this.failed.push(decision);
      this.events.push({ kind: 'queued', segmentId: decision.segmentId, label: decision.label });
    }
  }

  /** Resend queued decisions with their original idempotency keys. */
  async retryFailed(): Promise<number> {
    const queue = this.failed;
    this.failed = [];
    let delivered = 0;
    for (const decision of queue) {
      await this.send(decision);
      if (!this.failed.includes(decision)) delivered += 1;
    }
    return delivered;
  }

  /** Segments whose decision is still queued (shown flagged in the UI). */
  flaggedSegments(): string[] {
    return this.failed.map((d) => d.segmentId);
  }

  advance(): void {
    if (this.index + 1 < this.segments.length) {
      this.index += 1;
      this.events.push({ kind: 'advanced', index: this.index });
    } else {
      this.currentCluster = null;
      this.segments = [];
      this.index = 0;
      this.events.push({ kind: 'closed-cluster' });
    }
  }
}
