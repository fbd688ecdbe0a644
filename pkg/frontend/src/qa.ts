/**
 * QA comparison: difference overlay between two annotators' masks plus the
 * server-computed inter-rater metrics (the displayed dice always comes from
 * the server; the local overlay is purely visual).
 */

import { ApiClient } from './api.js';
import { VoxelMask, decodeDense } from './rle.js';

export interface DiffOverlay {
  /** per-voxel code: 0 background, 1 only A, 2 only B, 3 both */
  codes: Uint8Array;
  dims: [number, number, number];
  onlyA: number;
  onlyB: number;
  both: number;
}

export function diffOverlay(a: VoxelMask, b: VoxelMask): DiffOverlay {
  if (a.dims.join() !== b.dims.join()) throw new Error('mask dims differ');
  const da = decodeDense(a);
  const db = decodeDense(b);
  const codes = new Uint8Array(da.length);
  let onlyA = 0;
  let onlyB = 0;
  let both = 0;
  for (let i = 0; i < da.length; i++) {
    const code = (da[i] ? 1 : 0) | (db[i] ? 2 : 0);
    codes[i] = code;
    if (code === 1) onlyA++;
    else if (code === 2) onlyB++;
    else if (code === 3) both++;
  }
  return { codes, dims: a.dims, onlyA, onlyB, both };
}

export interface InterRaterPair {
  series_id: string;
  author_a: string;
  author_b: string;
  dice: number;
  iou: number;
}

export interface QaPanelState {
  available: boolean;
  statusText: string;
  pair: InterRaterPair | null;
}

/** Server metrics for one series/author pair, or why they are unavailable. */
export async function qaCompare(
  api: ApiClient,
  projectId: string,
  seriesId: string,
  userA: string,
  userB: string,
): Promise<QaPanelState> {
  const reportData = await api.getReport(projectId, 'inter_rater');
  const pairs = (reportData.pairs ?? []) as InterRaterPair[];
  const pair = pairs.find(
    (p) =>
      p.series_id === seriesId &&
      ((p.author_a === userA && p.author_b === userB) ||
        (p.author_a === userB && p.author_b === userA)),
  );
  if (!pair) {
    return {
      available: false,
      statusText: 'comparison needs two signed-off annotations on this series',
      pair: null,
    };
  }
  return { available: true, statusText: `dice ${pair.dice.toFixed(3)}`, pair };
}
