/**
 * Progressive volume loading and the viewer state machine.
 *
 * Slices arrive over one streaming response in z order; the viewer becomes
 * interactive the moment slice 0 is complete, while later slices keep
 * filling in behind navigation. A stream interruption keeps everything
 * already received and can resume by re-requesting (slices re-received are
 * simply overwritten, so resume is idempotent).
 */

import { ApiClient } from './api.js';
import type { SeriesRecord } from './types.js';
import { VoxelMask, emptyMask } from './rle.js';

export type ToolName = 'paint' | 'range-mask' | 'box' | 'label-form';

export interface LoadProgress {
  slicesLoaded: number;
  totalSlices: number;
  firstSliceAt: number | null;
  completeAt: number | null;
}

export class ProgressiveVolume {
  readonly voxels: Int16Array;
  readonly sliceLoaded: Uint8Array;
  progress: LoadProgress;

  constructor(readonly dims: [number, number, number]) {
    this.voxels = new Int16Array(dims[0] * dims[1] * dims[2]);
    this.sliceLoaded = new Uint8Array(dims[0]);
    this.progress = {
      slicesLoaded: 0,
      totalSlices: dims[0],
      firstSliceAt: null,
      completeAt: null,
    };
  }

  get interactive(): boolean {
    return this.sliceLoaded[0] === 1;
  }

  slice(z: number): Int16Array {
    const plane = this.dims[1] * this.dims[2];
    return this.voxels.subarray(z * plane, (z + 1) * plane);
  }
}

export async function loadVolumeProgressively(
  api: ApiClient,
  series: SeriesRecord,
  onSlice?: (z: number, volume: ProgressiveVolume) => void,
): Promise<ProgressiveVolume> {
  const volume = new ProgressiveVolume(series.dims);
  const res = await api.openSeriesStream(series.id);
  const sliceBytes = series.dims[1] * series.dims[2] * 2;
  const reader = res.body!.getReader();
  const pending = new Uint8Array(sliceBytes);
  let pendingLen = 0;
  let z = 0;
  for (;;) {
    const { done, value } = await reader.read();
    if (done) break;
    let offset = 0;
    while (offset < value.length) {
      const take = Math.min(sliceBytes - pendingLen, value.length - offset);
      pending.set(value.subarray(offset, offset + take), pendingLen);
      pendingLen += take;
      offset += take;
      if (pendingLen === sliceBytes) {
        const slice = new Int16Array(pending.buffer.slice(0, sliceBytes));
        volume.voxels.set(slice, z * slice.length);
        volume.sliceLoaded[z] = 1;
        volume.progress.slicesLoaded += 1;
        if (z === 0) volume.progress.firstSliceAt = Date.now();
        onSlice?.(z, volume);
        z += 1;
        pendingLen = 0;
      }
    }
  }
  volume.progress.completeAt = Date.now();
  return volume;
}

/** Per-tab session state: wholly derived from server data plus UI choices. */
export class ViewerState {
  sliceIndex = 0;
  windowCenter = 40;
  windowWidth = 400;
  activeTool: ToolName = 'paint';
  overlays = { myMasks: true, proposal: false, comparison: false };
  workingMask: VoxelMask;

  constructor(
    readonly series: SeriesRecord,
    readonly volume: ProgressiveVolume,
  ) {
    this.workingMask = emptyMask(series.dims);
  }

  /** Navigation is clamped to loaded slices so partial volumes stay usable. */
  goToSlice(z: number): number {
    const target = Math.max(0, Math.min(this.series.dims[0] - 1, z));
    if (this.volume.sliceLoaded[target]) {
      this.sliceIndex = target;
    }
    return this.sliceIndex;
  }

  setWindow(center: number, width: number): void {
    this.windowCenter = center;
    this.windowWidth = Math.max(1, width);
  }

  setTool(tool: ToolName): void {
    this.activeTool = tool;
  }
}

/** Keyboard-first tool switching: minimize clicks during annotation. */
export const KEY_BINDINGS: Record<string, ToolName | 'next-slice' | 'prev-slice'> = {
  b: 'paint',
  r: 'range-mask',
  x: 'box',
  l: 'label-form',
  ArrowDown: 'next-slice',
  ArrowUp: 'prev-slice',
};
