/** Layered tree layout: roots on top, children below their parent.
 * Pure geometry from the exact server topology; no reordering. */

import type { TreeNode, TreePayload } from "./types.js";

export interface PlacedNode {
  node: TreeNode;
  depth: number;
  /** abstract x in leaf-index units; multiply by column width to get pixels */
  x: number;
}

export interface Edge {
  from: number;
  to: number;
}

export interface TreeLayout {
  placed: PlacedNode[];
  edges: Edge[];
  depth: number;
  leafCount: number;
}

export function buildTreeLayout(tree: TreePayload): TreeLayout {
  const byId = new Map(tree.nodes.map((n) => [n.id, n]));
  const placed: PlacedNode[] = [];
  const edges: Edge[] = [];
  let nextLeafX = 0;
  let maxDepth = 0;

  const place = (id: number, depth: number): number => {
    const node = byId.get(id);
    if (!node) throw new Error(`tree payload references missing node ${id}`);
    maxDepth = Math.max(maxDepth, depth);
    let x: number;
    if (node.children.length === 0) {
      x = nextLeafX++;
    } else {
      const xs = node.children.map((c) => {
        edges.push({ from: id, to: c });
        return place(c, depth + 1);
      });
      x = xs.reduce((a, b) => a + b, 0) / xs.length;
    }
    placed.push({ node, depth, x });
    return x;
  };

  for (const root of tree.roots) place(root, 0);

  if (placed.length !== tree.nodes.length) {
    throw new Error(
      `layout placed ${placed.length} nodes but payload has ${tree.nodes.length}`,
    );
  }
  return { placed, edges, depth: maxDepth, leafCount: nextLeafX };
}
