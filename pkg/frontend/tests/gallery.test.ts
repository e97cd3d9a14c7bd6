import { describe, expect, it } from 'vitest';

import { ApiClient } from '../src/api';
import { isComplete, renderGallery, renderSegmentPane, sortClusters } from '../src/gallery';
import { clusterFixture, segmentFixture } from './fakes';

describe('gallery rendering', () => {
  it('sorts clusters by size descending, id ascending on ties', () => {
    const clusters = [clusterFixture(3, 5), clusterFixture(1, 9), clusterFixture(2, 5)];
    expect(sortClusters(clusters).map((c) => c.cluster_id)).toEqual([1, 2, 3]);
  });

  it('renders an empty state without clusters', () => {
    expect(renderGallery([], new Map())).toContain('empty-state');
  });

  it('shows the suggestion badge and thumbnails', () => {
    const cluster = clusterFixture(0, 4, 'owl');
    const html = renderGallery([cluster], new Map([[0, ['http://x/s1.png']]]));
    expect(html).toContain('class="badge"');
    expect(html).toContain('owl');
    expect(html).toContain('s1.png');
    expect(html).toContain('data-cluster-id="0"');
  });

  it('marks fully reviewed clusters complete', () => {
    const done = {
      ...clusterFixture(0, 4),
      progress: { validated: 3, rejected: 1, pending: 0 },
    };
    expect(isComplete(done)).toBe(true);
    const html = renderGallery([done], new Map());
    expect(html).toContain('complete');
    expect(html).toContain('done-mark');
  });

  it('highlights clusters found by a recluster run', () => {
    const html = renderGallery([clusterFixture(7, 4)], new Map(), new Set([7]));
    expect(html).toContain('new-cluster');
  });

  it('escapes labels in html output', () => {
    const html = renderGallery([clusterFixture(0, 2, '<script>')], new Map());
    expect(html).not.toContain('<script>');
    expect(html).toContain('&lt;script&gt;');
  });
});

describe('segment pane', () => {
  const api = new ApiClient('http://h');

  it('includes spectrogram, audio, shortcuts, and the suggestion', () => {
    const html = renderSegmentPane(api, segmentFixture('s1'), 'owl', ['dove', 'frog'], false);
    expect(html).toContain('spectrogram.png');
    expect(html).toContain('audio.wav');
    expect(html).toContain('<kbd>a</kbd> accept owl');
    expect(html).toContain('<kbd>1</kbd> dove');
    expect(html).toContain('<kbd>2</kbd> frog');
    expect(html).not.toContain('flagged');
  });

  it('flags segments with queued decisions', () => {
    const html = renderSegmentPane(api, segmentFixture('s1'), null, [], true);
    expect(html).toContain('flagged');
  });
});
