/** Payload shapes of the steering service API. */

export interface TreeNode {
  id: number;
  children: number[];
  label: string | null;
  pattern_locked: boolean;
  is_leaf: boolean;
  mu: number[];
  pattern: number[];
}

export interface TreePayload {
  revision: number;
  period: number;
  depth: number;
  roots: number[];
  nodes: TreeNode[];
}

export interface ActivationLeaf {
  leaf_id: number;
  weight: number;
}

export interface ActivationEntry {
  instance_index: number;
  leaves: ActivationLeaf[];
}

export interface ActivationsPayload {
  revision: number;
  entries: ActivationEntry[];
}

export interface Contribution {
  leaf_id: number;
  weight: number;
  curve: number[];
}

export interface ExplanationPayload {
  revision: number;
  instance_index: number;
  prediction: number[];
  contributions: Contribution[];
  residual: number[];
}

export interface MetricsPayload {
  revision: number;
  mse: number;
  mae: number;
  per_step_mae: number[];
  count: number;
}

export interface TrainStatus {
  status: "idle" | "running" | "failed";
  progress: number;
  message: string;
  job_id: number;
  revision: number;
}

export interface SplitResponse {
  revision: number;
  tree: TreePayload;
}
