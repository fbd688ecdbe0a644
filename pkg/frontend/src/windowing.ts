/**
 * Window/level mapping from signed 16-bit intensities to display grayscale,
 * computed client-side. Presets cover the usual CT reading contexts.
 */

export interface WindowPreset {
  name: string;
  center: number;
  width: number;
}

export const CT_PRESETS: WindowPreset[] = [
  { name: 'Soft tissue', center: 40, width: 400 },
  { name: 'Lung', center: -600, width: 1500 },
  { name: 'Bone', center: 400, width: 1800 },
  { name: 'Brain', center: 40, width: 80 },
];

/** Map one intensity to 0..255 under (center, width). */
export function windowValue(value: number, center: number, width: number): number {
  const lo = center - width / 2;
  if (value <= lo) return 0;
  if (value >= lo + width) return 255;
  return Math.round(((value - lo) / width) * 255);
}

/** Render an int16 slice into an RGBA buffer (premade or fresh). */
export function windowSlice(
  slice: Int16Array,
  center: number,
  width: number,
  out?: Uint8ClampedArray,
): Uint8ClampedArray {
  const rgba = out ?? new Uint8ClampedArray(slice.length * 4);
  const lo = center - width / 2;
  for (let i = 0; i < slice.length; i++) {
    // same arithmetic as windowValue so the two paths agree exactly
    let g = Math.round(((slice[i] - lo) / width) * 255);
    if (g < 0) g = 0;
    else if (g > 255) g = 255;
    const o = i * 4;
    rgba[o] = rgba[o + 1] = rgba[o + 2] = g;
    rgba[o + 3] = 255;
  }
  return rgba;
}
