/** SVG path strings for small pattern curves. */

export function sparklinePath(values: number[], width: number, height: number, pad = 2): string {
  if (values.length === 0) return "";
  const lo = Math.min(...values);
  const hi = Math.max(...values);
  const span = hi - lo || 1; // flat curves draw a midline
  const innerW = width - 2 * pad;
  const innerH = height - 2 * pad;
  const step = values.length > 1 ? innerW / (values.length - 1) : 0;
  return values
    .map((v, i) => {
      const x = pad + i * step;
      const y = pad + innerH * (1 - (v - lo) / span);
      return `${i === 0 ? "M" : "L"}${x.toFixed(2)},${y.toFixed(2)}`;
    })
    .join(" ");
}

/** Map a vertical pixel position back to a curve value (editor drags). */
export function pixelToValue(y: number, height: number, lo: number, hi: number, pad = 2): number {
  const innerH = height - 2 * pad;
  const clamped = Math.min(Math.max(y, pad), pad + innerH);
  return hi - ((clamped - pad) / innerH) * (hi - lo);
}
