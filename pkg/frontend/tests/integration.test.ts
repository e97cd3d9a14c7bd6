/** Scripted review session against the real Python service.
 *
 * Validates one cluster, rejects one, labels 5 segments by keyboard, and
 * triggers a recluster run; then checks the server label log contains
 * exactly those decisions (bulk ops expanded per segment) with no
 * duplicates, and that /api/stats agrees.
 */
import { spawn, type ChildProcess } from 'node:child_process';
import { readFileSync } from 'node:fs';
import { join } from 'node:path';
import { afterAll, beforeAll, describe, expect, it } from 'vitest';

import { ApiClient } from '../src/api';
import { ReclusterPanel } from '../src/recluster';
import { ReviewSession } from '../src/session';

const SPECIES = ['sp_one', 'sp_two', 'sp_three'];

let child: ChildProcess;
let api: ApiClient;
let storeDir: string;

async function waitForService(base: string, attempts = 100): Promise<void> {
  for (let i = 0; i < attempts; i += 1) {
    try {
      const response = await fetch(`${base}/api/stats`);
      if (response.ok) return;
    } catch {
      // not up yet
    }
    await new Promise((resolve) => setTimeout(resolve, 200));
  }
  throw new Error('service never came up');
}

beforeAll(async () => {
  const fixture = join(__dirname, 'serve_fixture.py');
  child = spawn('python3', [fixture], { stdio: ['ignore', 'pipe', 'inherit'] });
  const line: string = await new Promise((resolve, reject) => {
    let buffer = '';
    child.stdout!.on('data', (chunk: Buffer) => {
      buffer += chunk.toString();
      const nl = buffer.indexOf('\n');
      if (nl >= 0) resolve(buffer.slice(0, nl));
    });
    child.on('exit', (code) => reject(new Error(`fixture exited early (${code})`)));
  });
  const info = JSON.parse(line) as { port: number; store: string };
  storeDir = info.store;
  const base = `http://127.0.0.1:${info.port}`;
  api = new ApiClient(base);
  await waitForService(base);
}, 60_000);

afterAll(() => {
  child?.kill();
});

describe('review loop integrity', () => {
  it('runs the scripted session and leaves a consistent label log', async () => {
    const session = new ReviewSession(api, SPECIES, 'integration');
    const clusters = await session.loadGallery();
    expect(clusters.map((c) => c.cluster_id).sort()).toEqual([0, 1, 2]);

    // 1. validate cluster 0 via its suggestion (bulk, 8 segments)
    const validated = await api.validateCluster(0, {
      annotator: 'integration',
      decision_id: 'it-validate-0',
    });
    expect(validated.label).toBe('sp_three');
    expect(validated.count).toBe(8);

    // 2. reject cluster 1 (bulk NEGATIVE, 8 segments)
    const rejected = await api.rejectCluster(1, {
      annotator: 'integration',
      decision_id: 'it-reject-1',
    });
    expect(rejected.count).toBe(8);

    // 3. label 5 segments of cluster 2 by keyboard
    await session.openCluster(2);
    for (const key of ['1', '2', 'r', '1', '2']) {
      await session.handleKey(key);
    }
    expect(session.flaggedSegments()).toEqual([]);
    const decided = session.events.filter((e) => e.kind === 'decided');
    expect(decided).toHaveLength(5);

    // 4. trigger recluster on the noise set and wait for the job
    const panel = new ReclusterPanel(api);
    await panel.refresh();
    expect(panel.noiseCount).toBe(24);
    const fresh = await panel.run(3, 200);
    expect(fresh.size).toBeGreaterThanOrEqual(1);
    expect(panel.noiseCount).toBeLessThan(24);

    // server label log: exactly the 7 decisions (2 bulk expanded + 5 keyboard)
    const log = readFileSync(join(storeDir, 'labels.jsonl'), 'utf8')
      .trim()
      .split('\n')
      .map((l) => JSON.parse(l) as { segment_id: string; label: string; decision_id: string });
    expect(log).toHaveLength(8 + 8 + 5);
    const decisionIds = log.map((r) => r.decision_id);
    expect(new Set(decisionIds).size).toBe(log.length); // no duplicates
    expect(decisionIds.filter((d) => d.startsWith('it-validate-0'))).toHaveLength(8);
    expect(decisionIds.filter((d) => d.startsWith('it-reject-1'))).toHaveLength(8);

    const byLabel = new Map<string, number>();
    for (const record of log) {
      byLabel.set(record.label, (byLabel.get(record.label) ?? 0) + 1);
    }
    expect(byLabel.get('sp_three')).toBe(8);
    expect(byLabel.get('NEGATIVE')).toBe(8 + 1);
    expect(byLabel.get('sp_one')).toBe(2);
    expect(byLabel.get('sp_two')).toBe(2);

    // /api/stats matches the log
    const stats = await api.stats();
    expect(stats.decisions).toBe(21);
    expect(stats.labels['sp_three'].validated).toBe(8);
    expect(stats.labels['NEGATIVE'].validated).toBe(9);
    expect(stats.labels['sp_one'].validated).toBe(2);
    expect(stats.labels['sp_two'].validated).toBe(2);

    // replaying a decision with its idempotency key never duplicates
    const firstKeyboard = log.find((r) => r.label === 'sp_one')!;
    await api.labelSegment(firstKeyboard.segment_id, {
      label: 'sp_one',
      status: 'validated',
      annotator: 'integration',
      decision_id: firstKeyboard.decision_id,
    });
    const after = await api.stats();
    expect(after.decisions).toBe(21);
  }, 120_000);

  it('reconstructs UI state purely from server endpoints', async () => {
    // a fresh session sees the decisions made by the previous one
    const session = new ReviewSession(api, SPECIES, 'second-annotator');
    const clusters = await session.loadGallery();
    const cluster0 = clusters.find((c) => c.cluster_id === 0)!;
    expect(cluster0.progress.validated).toBe(8);
    expect(cluster0.progress.pending).toBe(0);
    await session.openCluster(0);
    expect(session.currentSegment()!.current_label).toBe('sp_three');
  }, 30_000);
});
