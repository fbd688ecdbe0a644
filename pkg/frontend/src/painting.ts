/**
 * Mask editing tools with the same semantics as the server's mask algebra:
 * multi-slice stencil painting (add/erase) and intensity range masking
 * (include/exclude). Edits run on a dense working grid and re-encode to
 * canonical runs for upload.
 */

import { VoxelMask, decodeDense, encodeDense } from './rle.js';

export type PaintMode = 'add' | 'erase';
export type RangeMode = 'include' | 'exclude';

/** Circular brush stencil over one slice plane. */
export function brushStencil(
  ny: number,
  nx: number,
  cy: number,
  cx: number,
  radius: number,
): Uint8Array {
  const stencil = new Uint8Array(ny * nx);
  const r2 = radius * radius;
  const y0 = Math.max(0, Math.floor(cy - radius));
  const y1 = Math.min(ny - 1, Math.ceil(cy + radius));
  const x0 = Math.max(0, Math.floor(cx - radius));
  const x1 = Math.min(nx - 1, Math.ceil(cx + radius));
  for (let y = y0; y <= y1; y++) {
    for (let x = x0; x <= x1; x++) {
      const dy = y - cy;
      const dx = x - cx;
      if (dy * dy + dx * dx <= r2) stencil[y * nx + x] = 1;
    }
  }
  return stencil;
}

/** Apply a 2-D stencil to every slice in [z0, z1] (inclusive). */
export function paintStencil(
  mask: VoxelMask,
  z0: number,
  z1: number,
  stencil: Uint8Array,
  mode: PaintMode,
): VoxelMask {
  const [nz, ny, nx] = mask.dims;
  if (z0 < 0 || z1 < z0 || z1 >= nz) throw new Error(`slice range [${z0}, ${z1}] out of bounds`);
  if (stencil.length !== ny * nx) throw new Error('stencil does not fit the slice plane');
  const dense = decodeDense(mask);
  const plane = ny * nx;
  for (let z = z0; z <= z1; z++) {
    const base = z * plane;
    for (let i = 0; i < plane; i++) {
      if (stencil[i]) dense[base + i] = mode === 'add' ? 1 : 0;
    }
  }
  return encodeDense(dense, mask.dims, mask.label);
}

/** Select voxels with lo <= value <= hi and merge with the base mask. */
export function rangeMask(
  voxels: Int16Array,
  dims: [number, number, number],
  lo: number,
  hi: number,
  base: VoxelMask | null,
  mode: RangeMode,
): VoxelMask {
  if (lo > hi) throw new Error(`intensity range rejected: lo ${lo} > hi ${hi}`);
  const total = dims[0] * dims[1] * dims[2];
  if (voxels.length !== total) throw new Error('volume does not match dims');
  const dense = base ? decodeDense(base) : new Uint8Array(total);
  if (base && base.dims.join() !== dims.join()) throw new Error('base mask dims mismatch');
  for (let i = 0; i < total; i++) {
    const inRange = voxels[i] >= lo && voxels[i] <= hi;
    if (mode === 'include') {
      if (inRange) dense[i] = 1;
    } else if (inRange) {
      dense[i] = 0;
    }
  }
  return encodeDense(dense, dims, base?.label ?? '');
}
