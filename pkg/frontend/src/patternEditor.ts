/** Pattern editor rendering: an SVG curve with one drag handle per point. */

import { sparklinePath } from "./sparkline.js";
import type { EditorState } from "./state.js";

export const EDITOR_W = 560;
export const EDITOR_H = 220;
export const EDITOR_PAD = 10;

export interface EditorScale {
  lo: number;
  hi: number;
}

/** Fixed value range while dragging so the axes do not swim under the cursor. */
export function editorScale(editor: EditorState): EditorScale {
  const all = [...editor.original, ...editor.curve];
  const lo = Math.min(...all, 0);
  const hi = Math.max(...all, 0);
  const margin = 0.15 * (hi - lo || 1);
  return { lo: lo - margin, hi: hi + margin };
}

export function handlePositions(editor: EditorState, scale: EditorScale): { x: number; y: number }[] {
  const innerW = EDITOR_W - 2 * EDITOR_PAD;
  const innerH = EDITOR_H - 2 * EDITOR_PAD;
  const step = editor.curve.length > 1 ? innerW / (editor.curve.length - 1) : 0;
  return editor.curve.map((v, i) => ({
    x: EDITOR_PAD + i * step,
    y: EDITOR_PAD + innerH * (1 - (v - scale.lo) / (scale.hi - scale.lo)),
  }));
}

export function renderEditor(editor: EditorState): string {
  const scale = editorScale(editor);
  const positions = handlePositions(editor, scale);
  const scaled = (values: number[]) =>
    sparklinePath(
      values.map((v) => (v - scale.lo) / (scale.hi - scale.lo)),
      EDITOR_W,
      EDITOR_H,
      EDITOR_PAD,
    );
  const handles = positions
    .map(
      (p, i) =>
        `<circle class="editor-handle" data-point="${i}" cx="${p.x.toFixed(2)}" cy="${p.y.toFixed(2)}" r="5"/>`,
    )
    .join("");
  return (
    `<svg class="editor-canvas" width="${EDITOR_W}" height="${EDITOR_H}">` +
    `<path d="${scaled(editor.original)}" class="editor-original"/>` +
    `<path d="${scaled(editor.curve)}" class="editor-curve"/>` +
    handles +
    `</svg>`
  );
}
