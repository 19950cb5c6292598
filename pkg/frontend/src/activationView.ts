/** Stacked per-instance activation bars; heights are the server's path
 * weights, which conserve to 1 per instance. */

import type { ActivationEntry } from "./types.js";

export interface StackSegment {
  leafId: number;
  weight: number;
  y0: number;
  y1: number;
}

export function buildStack(entry: ActivationEntry): StackSegment[] {
  let offset = 0;
  return entry.leaves.map((l) => {
    const segment = { leafId: l.leaf_id, weight: l.weight, y0: offset, y1: offset + l.weight };
    offset += l.weight;
    return segment;
  });
}

export function stackTotal(entry: ActivationEntry): number {
  return entry.leaves.reduce((acc, l) => acc + l.weight, 0);
}

const PALETTE = [
  "#4c78a8", "#f58518", "#54a24b", "#e45756", "#72b7b2",
  "#eeca3b", "#b279a2", "#ff9da6", "#9d755d", "#bab0ac",
];

export function colorForLeaf(leafId: number): string {
  return PALETTE[((leafId % PALETTE.length) + PALETTE.length) % PALETTE.length];
}

export function renderActivationBars(
  entries: ActivationEntry[],
  width: number,
  height: number,
): string {
  if (entries.length === 0) return `<svg width="${width}" height="${height}"></svg>`;
  const barW = width / entries.length;
  const rects = entries
    .map((entry, i) =>
      buildStack(entry)
        .map((seg) => {
          const y = height * (1 - seg.y1);
          const h = height * seg.weight;
          return (
            `<rect data-instance="${entry.instance_index}" data-leaf="${seg.leafId}" ` +
            `x="${(i * barW).toFixed(2)}" y="${y.toFixed(2)}" ` +
            `width="${Math.max(barW - 0.5, 0.5).toFixed(2)}" height="${h.toFixed(2)}" ` +
            `fill="${colorForLeaf(seg.leafId)}"><title>instance ${entry.instance_index} ` +
            `leaf ${seg.leafId}: ${seg.weight.toFixed(3)}</title></rect>`
          );
        })
        .join(""),
    )
    .join("");
  return `<svg class="activation-bars" width="${width}" height="${height}">${rects}</svg>`;
}
