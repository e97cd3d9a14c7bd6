/** Cluster gallery rendering (pure HTML-string functions, DOM-free). */
import { ApiClient } from './api';
import type { ClusterView, SegmentView } from './types';

function escapeHtml(text: string): string {
  return text
    .replace(/&/g, '&amp;')
    .replace(/</g, '&lt;')
    .replace(/>/g, '&gt;')
    .replace(/"/g, '&quot;');
}

export function sortClusters(clusters: ClusterView[]): ClusterView[] {
  return [...clusters].sort(
    (a, b) => b.size - a.size || a.cluster_id - b.cluster_id,
  );
}

export function isComplete(cluster: ClusterView): boolean {
  return cluster.progress.pending === 0 && cluster.size > 0;
}

export function renderClusterTile(
  cluster: ClusterView,
  thumbnails: string[],
  highlight = false,
): string {
  const done = isComplete(cluster);
  const classes = ['cluster-tile'];
  if (done) classes.push('complete');
  if (highlight) classes.push('new-cluster');
  const badge = cluster.suggested_label
    ? `<span class="badge">${escapeHtml(cluster.suggested_label)}</span>`
    : '';
  const reviewed = cluster.progress.validated + cluster.progress.rejected;
  const pct = cluster.size ? Math.round((100 * reviewed) / cluster.size) : 0;
  const thumbs = thumbnails
    .map((url) => `<img class="thumb" src="${escapeHtml(url)}" alt="spectrogram">`)
    .join('');
  return (
    `<div class="${classes.join(' ')}" data-cluster-id="${cluster.cluster_id}">` +
    `<h3>cluster ${cluster.cluster_id} (${cluster.size})</h3>` +
    badge +
    `<div class="thumbs">${thumbs}</div>` +
    `<div class="progress"><div class="bar" style="width:${pct}%"></div></div>` +
    `<span class="counts">${reviewed}/${cluster.size} reviewed</span>` +
    (done ? '<span class="done-mark">complete</span>' : '') +
    `</div>`
  );
}

export function renderGallery(
  clusters: ClusterView[],
  thumbnailsByCluster: Map<number, string[]>,
  highlightIds: Set<number> = new Set(),
): string {
  if (clusters.length === 0) {
    return '<div class="empty-state">No clusters yet. Run the pipeline first.</div>';
  }
  const tiles = sortClusters(clusters)
    .map((c) =>
      renderClusterTile(c, thumbnailsByCluster.get(c.cluster_id) ?? [], highlightIds.has(c.cluster_id)),
    )
    .join('\n');
  return `<div class="gallery">${tiles}</div>`;
}

export function renderSegmentPane(
  api: ApiClient,
  segment: SegmentView,
  suggestion: string | null,
  speciesList: string[],
  flagged: boolean,
): string {
  const shortcuts = speciesList
    .map((sp, i) => `<li><kbd>${i + 1}</kbd> ${escapeHtml(sp)}</li>`)
    .join('');
  return (
    `<div class="segment-pane${flagged ? ' flagged' : ''}" data-segment-id="${segment.segment_id}">` +
    `<img class="spectrogram" src="${escapeHtml(api.spectrogramUrl(segment.segment_id))}" alt="spectrogram">` +
    `<audio controls src="${escapeHtml(api.audioUrl(segment.segment_id))}"></audio>` +
    `<p>${escapeHtml(segment.source_id)} ` +
    `[${segment.t_start_s.toFixed(2)}, ${segment.t_end_s.toFixed(2)}] s</p>` +
    `<p>current: ${escapeHtml(segment.current_label ?? 'unlabeled')}</p>` +
    `<ul class="shortcuts">` +
    `<li><kbd>a</kbd> accept ${escapeHtml(suggestion ?? '(no suggestion)')}</li>` +
    `<li><kbd>r</kbd> reject (NEGATIVE)</li>` +
    shortcuts +
    `<li><kbd>&larr;</kbd>/<kbd>&rarr;</kbd> navigate</li>` +
    `</ul></div>`
  );
}
