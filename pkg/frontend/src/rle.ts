/**
 * Voxel mask binary format: little-endian uint32 header (nz, ny, nx,
 * label_len), UTF-8 label bytes, uint32 run_count, then (start, length)
 * uint32 pairs over the flattened z-major grid. Runs must be sorted,
 * non-overlapping, and maximally merged; this codec keeps that invariant.
 */

export interface VoxelMask {
  dims: [number, number, number];
  /** flat pairs: [start0, len0, start1, len1, ...] */
  runs: Uint32Array;
  label: string;
}

export function voxelCount(mask: VoxelMask): number {
  let total = 0;
  for (let i = 1; i < mask.runs.length; i += 2) total += mask.runs[i];
  return total;
}

export function emptyMask(dims: [number, number, number], label = ''): VoxelMask {
  return { dims, runs: new Uint32Array(0), label };
}

/** Dense boolean grid -> canonical runs. */
export function encodeDense(dense: Uint8Array, dims: [number, number, number], label = ''): VoxelMask {
  const total = dims[0] * dims[1] * dims[2];
  if (dense.length !== total) {
    throw new Error(`dense grid has ${dense.length} voxels, dims imply ${total}`);
  }
  const runs: number[] = [];
  let i = 0;
  while (i < total) {
    if (dense[i]) {
      const start = i;
      while (i < total && dense[i]) i++;
      runs.push(start, i - start);
    } else {
      i++;
    }
  }
  return { dims, runs: Uint32Array.from(runs), label };
}

export function decodeDense(mask: VoxelMask): Uint8Array {
  const total = mask.dims[0] * mask.dims[1] * mask.dims[2];
  const dense = new Uint8Array(total);
  for (let i = 0; i < mask.runs.length; i += 2) {
    const start = mask.runs[i];
    const length = mask.runs[i + 1];
    if (length < 1 || start + length > total) {
      throw new Error(`corrupt run (${start}, ${length}) for grid of ${total}`);
    }
    dense.fill(1, start, start + length);
  }
  return dense;
}

export function maskToBytes(mask: VoxelMask): Uint8Array {
  const labelBytes = new TextEncoder().encode(mask.label);
  const size = 16 + labelBytes.length + 4 + mask.runs.length * 4;
  const out = new Uint8Array(size);
  const view = new DataView(out.buffer);
  view.setUint32(0, mask.dims[0], true);
  view.setUint32(4, mask.dims[1], true);
  view.setUint32(8, mask.dims[2], true);
  view.setUint32(12, labelBytes.length, true);
  out.set(labelBytes, 16);
  let off = 16 + labelBytes.length;
  view.setUint32(off, mask.runs.length / 2, true);
  off += 4;
  for (let i = 0; i < mask.runs.length; i++, off += 4) {
    view.setUint32(off, mask.runs[i], true);
  }
  return out;
}

export function maskFromBytes(data: Uint8Array): VoxelMask {
  if (data.length < 20) throw new Error('mask payload shorter than fixed header');
  const view = new DataView(data.buffer, data.byteOffset, data.byteLength);
  const nz = view.getUint32(0, true);
  const ny = view.getUint32(4, true);
  const nx = view.getUint32(8, true);
  const labelLen = view.getUint32(12, true);
  const label = new TextDecoder().decode(data.subarray(16, 16 + labelLen));
  let off = 16 + labelLen;
  const runCount = view.getUint32(off, true);
  off += 4;
  if (data.length !== off + runCount * 8) {
    throw new Error(`mask payload is ${data.length} bytes, header implies ${off + runCount * 8}`);
  }
  const runs = new Uint32Array(runCount * 2);
  for (let i = 0; i < runs.length; i++, off += 4) {
    runs[i] = view.getUint32(off, true);
  }
  let prevEnd = -1;
  const total = nz * ny * nx;
  for (let i = 0; i < runs.length; i += 2) {
    const start = runs[i];
    const length = runs[i + 1];
    if (length < 1 || start <= prevEnd || start + length > total) {
      throw new Error(`corrupt run (${start}, ${length})`);
    }
    prevEnd = start + length;
  }
  return { dims: [nz, ny, nx], runs, label };
}

export function maskToBase64(mask: VoxelMask): string {
  const bytes = maskToBytes(mask);
  let binary = '';
  for (let i = 0; i < bytes.length; i += 0x8000) {
    binary += String.fromCharCode(...bytes.subarray(i, i + 0x8000));
  }
  return btoa(binary);
}

export function maskFromBase64(encoded: string): VoxelMask {
  const binary = atob(encoded);
  const bytes = new Uint8Array(binary.length);
  for (let i = 0; i < binary.length; i++) bytes[i] = binary.charCodeAt(i);
  return maskFromBytes(bytes);
}

/** Dice/IoU of two masks on the same grid (both empty scores 1 by convention). */
export function overlap(a: VoxelMask, b: VoxelMask): { dice: number; iou: number } {
  if (a.dims.join() !== b.dims.join()) throw new Error('mask dims differ');
  let inter = 0;
  let i = 0;
  let j = 0;
  while (i < a.runs.length && j < b.runs.length) {
    const a0 = a.runs[i];
    const a1 = a0 + a.runs[i + 1];
    const b0 = b.runs[j];
    const b1 = b0 + b.runs[j + 1];
    const lo = Math.max(a0, b0);
    const hi = Math.min(a1, b1);
    if (hi > lo) inter += hi - lo;
    if (a1 <= b1) i += 2;
    else j += 2;
  }
  const na = voxelCount(a);
  const nb = voxelCount(b);
  if (na === 0 && nb === 0) return { dice: 1, iou: 1 };
  const union = na + nb - inter;
  return { dice: (2 * inter) / (na + nb), iou: union ? inter / union : 1 };
}
