/** Application state and its pure transitions.
 *
 * The UI renders a pure function of (latest fetched payloads, local unsaved
 * edits); no forecasting math happens client-side — every number comes from
 * the API.
 */

import type { ActivationsPayload, TrainStatus, TreePayload } from "./types.js";

export interface EditorState {
  nodeId: number;
  original: number[];
  curve: number[];
  lock: boolean;
  dirty: boolean;
}

export interface AppState {
  tree: TreePayload | null;
  activations: ActivationsPayload | null;
  training: TrainStatus | null;
  editor: EditorState | null;
  selected: number | null;
  banner: string | null;
  /** server moved past what we rendered (e.g. a training job committed) */
  stale: boolean;
}

export function initialState(): AppState {
  return {
    tree: null,
    activations: null,
    training: null,
    editor: null,
    selected: null,
    banner: null,
    stale: false,
  };
}

export function beginEdit(tree: TreePayload, nodeId: number): EditorState {
  const node = tree.nodes.find((n) => n.id === nodeId);
  if (!node) throw new Error(`no node ${nodeId}`);
  return {
    nodeId,
    original: [...node.pattern],
    curve: [...node.pattern],
    lock: node.pattern_locked,
    dirty: false,
  };
}

export function updateCurvePoint(editor: EditorState, index: number, value: number): EditorState {
  if (index < 0 || index >= editor.curve.length) return editor;
  const curve = [...editor.curve];
  curve[index] = value;
  return { ...editor, curve, dirty: true };
}

export function toggleLock(editor: EditorState): EditorState {
  return { ...editor, lock: !editor.lock, dirty: true };
}

/** Cancel restores the server-fetched pattern exactly. */
export function cancelEdit(editor: EditorState): EditorState {
  return { ...editor, curve: [...editor.original], lock: editor.lock, dirty: false };
}

/** Client-side validation mirroring the server contract; null means valid. */
export function validateCurve(curve: number[], period: number): string | null {
  if (curve.length !== period) {
    return `pattern must have exactly ${period} points, got ${curve.length}`;
  }
  const bad = curve.findIndex((v) => !Number.isFinite(v));
  if (bad >= 0) return `point ${bad} is not a finite number`;
  return null;
}

/** A fetched payload carries the authoritative revision; anything newer than
 * the rendered tree flags the view as stale. */
export function isStale(renderedRevision: number | null, serverRevision: number): boolean {
  return renderedRevision !== null && serverRevision > renderedRevision;
}

/** Splitting is only offered on leaves; the precondition is surfaced by
 * disabling the action rather than letting the server reject it. */
export function canSplit(tree: TreePayload, nodeId: number): boolean {
  const node = tree.nodes.find((n) => n.id === nodeId);
  return node !== undefined && node.is_leaf;
}
