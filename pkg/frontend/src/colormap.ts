// Scalar -> RGB maps for field rendering.

export type Colormap = (t: number) => [number, number, number];

export const SOLID_RGB: [number, number, number] = [46, 46, 52];
export const NAN_RGB: [number, number, number] = [255, 0, 255];

const VIRIDIS_STOPS: [number, number, number][] = [
  [68, 1, 84],
  [71, 44, 122],
  [59, 81, 139],
  [44, 113, 142],
  [33, 144, 141],
  [39, 173, 129],
  [92, 200, 99],
  [170, 220, 50],
  [253, 231, 37],
];

function lerpStops(stops: [number, number, number][], t: number): [number, number, number] {
  t = Math.max(0, Math.min(1, t));
  const pos = t * (stops.length - 1);
  const i = Math.min(stops.length - 2, Math.floor(pos));
  const f = pos - i;
  const a = stops[i], b = stops[i + 1];
  return [
    Math.round(a[0] + (b[0] - a[0]) * f),
    Math.round(a[1] + (b[1] - a[1]) * f),
    Math.round(a[2] + (b[2] - a[2]) * f),
  ];
}

export const viridis: Colormap = (t) => lerpStops(VIRIDIS_STOPS, t);

const COOLWARM_STOPS: [number, number, number][] = [
  [59, 76, 192],
  [144, 178, 254],
  [221, 221, 221],
  [245, 156, 125],
  [180, 4, 38],
];

export const coolwarm: Colormap = (t) => lerpStops(COOLWARM_STOPS, t);

export const grayscale: Colormap = (t) => {
  const v = Math.round(Math.max(0, Math.min(1, t)) * 255);
  return [v, v, v];
};

export const COLORMAPS: Record<string, Colormap> = { viridis, coolwarm, grayscale };

/** Finite min/max of a frame; degenerate or empty ranges widen to size 1. */
export function valueRange(values: Float32Array): [number, number] {
  let lo = Infinity;
  let hi = -Infinity;
  for (let i = 0; i < values.length; i++) {
    const v = values[i];
    if (!Number.isFinite(v)) continue;
    if (v < lo) lo = v;
    if (v > hi) hi = v;
  }
  if (lo > hi) return [0, 1];
  if (lo === hi) return [lo - 0.5, hi + 0.5];
  return [lo, hi];
}

/** Range centered on zero, for sign-carrying fields with coolwarm. */
export function symmetricRange(values: Float32Array): [number, number] {
  const [lo, hi] = valueRange(values);
  const m = Math.max(Math.abs(lo), Math.abs(hi), 1e-12);
  return [-m, m];
}

/** Signed fields get the diverging map; magnitudes get viridis. */
export function defaultColormapFor(field: string): string {
  return ["p", "a_z", "z", "v_z", "v_x", "v_y"].includes(field)
    ? "coolwarm" : "viridis";
}
