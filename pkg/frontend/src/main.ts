/** Browser bootstrap: wires the gallery, review pane, and recluster panel. */
import { ApiClient } from './api';
import { renderGallery, renderSegmentPane, sortClusters } from './gallery';
import { ReclusterPanel, renderReclusterPanel } from './recluster';
import { ReviewSession } from './session';

const api = new ApiClient('');
let session: ReviewSession | null = null;
let panel: ReclusterPanel | null = null;
let speciesList: string[] = [];
let highlight = new Set<number>();

function el(id: string): HTMLElement {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing #${id}`);
  return node;
}

async function speciesFromStats(): Promise<string[]> {
  const stats = await api.stats();
  return Object.keys(stats.labels)
    .filter((label) => label !== 'NEGATIVE' && label !== 'background')
    .sort();
}

async function showGallery(): Promise<void> {
  if (!session || !panel) return;
  const clusters = await session.loadGallery();
  const thumbnails = new Map<number, string[]>();
  for (const cluster of sortClusters(clusters).slice(0, 24)) {
    const page = await api.clusterSegments(cluster.cluster_id, 0, 3);
    thumbnails.set(
      cluster.cluster_id,
      page.segments.map((s) => api.spectrogramUrl(s.segment_id)),
    );
  }
  await panel.refresh();
  el('gallery').innerHTML = renderGallery(clusters, thumbnails, highlight);
  el('recluster-panel').innerHTML = renderReclusterPanel(panel);
  el('review').innerHTML = '';
  document.querySelectorAll('.cluster-tile').forEach((tile) => {
    tile.addEventListener('click', () => {
      const id = Number((tile as HTMLElement).dataset.clusterId);
      void openCluster(id);
    });
  });
  const button = document.getElementById('recluster');
  if (button) {
    button.addEventListener('click', () => {
      void panel!.run().then((fresh) => {
        highlight = fresh;
        void showGallery();
      });
    });
  }
}

async function openCluster(clusterId: number): Promise<void> {
  if (!session) return;
  await session.openCluster(clusterId);
  renderCurrent();
}

function renderCurrent(): void {
  if (!session) return;
  const segment = session.currentSegment();
  if (!segment || !session.currentCluster) {
    void showGallery();
    return;
  }
  const flagged = session.flaggedSegments().includes(segment.segment_id);
  el('review').innerHTML = renderSegmentPane(
    api,
    segment,
    session.currentCluster.suggested_label,
    speciesList,
    flagged,
  );
}

window.addEventListener('keydown', (event) => {
  if (!session || !session.currentCluster) return;
  void session.handleKey(event.key).then(renderCurrent);
});

window.addEventListener('DOMContentLoaded', () => {
  void (async () => {
    speciesList = await speciesFromStats();
    session = new ReviewSession(api, speciesList);
    panel = new ReclusterPanel(api);
    await showGallery();
  })();
});
