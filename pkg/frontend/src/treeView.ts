/** Render the prototype hierarchy as layered cards with pattern sparklines. */

import { buildTreeLayout } from "./layout.js";
import { sparklinePath } from "./sparkline.js";
import type { TreePayload } from "./types.js";

const CARD_W = 120;
const CARD_H = 72;
const GAP_X = 16;
const GAP_Y = 44;

export function renderTree(tree: TreePayload, selected: number | null): string {
  const layout = buildTreeLayout(tree);
  const colW = CARD_W + GAP_X;
  const rowH = CARD_H + GAP_Y;
  const width = Math.max(layout.leafCount * colW, CARD_W) + GAP_X;
  const height = (layout.depth + 1) * rowH;

  const centers = new Map(
    layout.placed.map((p) => [
      p.node.id,
      { cx: GAP_X / 2 + p.x * colW + CARD_W / 2, top: p.depth * rowH, bottom: p.depth * rowH + CARD_H },
    ]),
  );

  const edges = layout.edges
    .map((e) => {
      const a = centers.get(e.from)!;
      const b = centers.get(e.to)!;
      return `<line x1="${a.cx}" y1="${a.bottom}" x2="${b.cx}" y2="${b.top}" class="tree-edge"/>`;
    })
    .join("");

  const cards = layout.placed
    .map((p) => {
      const c = centers.get(p.node.id)!;
      const x = c.cx - CARD_W / 2;
      const y = p.depth * rowH;
      const classes = [
        "node-card",
        p.node.is_leaf ? "leaf" : "internal",
        p.node.id === selected ? "selected" : "",
      ].join(" ");
      const label = p.node.label ?? `prototype ${p.node.id}`;
      const lock = p.node.pattern_locked ? `<text x="${CARD_W - 14}" y="16" class="lock-badge">L</text>` : "";
      const spark = sparklinePath(p.node.pattern, CARD_W - 12, 30);
      return (
        `<g class="${classes}" data-node="${p.node.id}" transform="translate(${x},${y})">` +
        `<rect width="${CARD_W}" height="${CARD_H}" rx="6"/>` +
        `<text x="6" y="16" class="node-title">${label}</text>` +
        lock +
        `<path d="${spark}" transform="translate(6,24)" class="node-spark"/>` +
        `<text x="6" y="${CARD_H - 6}" class="node-meta">${p.node.is_leaf ? "leaf" : `${p.node.children.length} children`}</text>` +
        `</g>`
      );
    })
    .join("");

  return `<svg class="tree-canvas" width="${width}" height="${height}">${edges}${cards}</svg>`;
}
