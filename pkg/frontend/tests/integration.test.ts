/**
 * UI contract against a real served checkpoint: builds a small planted
 * dataset and model through the Python CLI, launches the steering service,
 * and drives it through the same client and view-model code the browser
 * uses. Requires the `protocast` Python package to be installed.
 */

import { spawn, spawnSync, type ChildProcess } from "node:child_process";
import { mkdtempSync, rmSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";

import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { ApiClient, ConflictError } from "../src/api.js";
import { buildStack, stackTotal } from "../src/activationView.js";
import { buildTreeLayout } from "../src/layout.js";
import { beginEdit, canSplit, isStale, validateCurve } from "../src/state.js";
import { renderTree } from "../src/treeView.js";

const PYTHON = process.env.PYTHON ?? "python3";
const PORT = 8730 + Math.floor(Math.random() * 200);

const RUN_CONFIG = {
  synth: {
    regimes: 2,
    period: 8,
    n_periods: 60,
    noise: 0.08,
    lookback: 8,
    horizon: 4,
    regime_block: 3,
  },
  model: { d: 8, d_bottle: 3, n_blocks: 1, n_roots: 2 },
  train: {
    lr: 0.01,
    max_epochs: 3,
    patience: 3,
    batch_size: 32,
    entropy_weight: 0.01,
    seed: 2,
    stage_plan: [{ m: 2, k: 1, alpha: 100.0 }],
  },
  data: { stride: 2 },
};

let workdir: string;
let server: ChildProcess | null = null;
let api: ApiClient;

function cli(...args: string[]): void {
  const result = spawnSync(PYTHON, ["-m", "protocast.cli", ...args], {
    cwd: workdir,
    encoding: "utf-8",
  });
  if (result.status !== 0) {
    throw new Error(`CLI ${args[0]} failed:\n${result.stdout}\n${result.stderr}`);
  }
}

async function waitForServer(timeoutMs: number): Promise<void> {
  const deadline = Date.now() + timeoutMs;
  while (Date.now() < deadline) {
    try {
      await api.fetchTree();
      return;
    } catch {
      await new Promise((resolve) => setTimeout(resolve, 300));
    }
  }
  throw new Error("steering service did not come up in time");
}

async function waitForIdle(timeoutMs: number): Promise<void> {
  const deadline = Date.now() + timeoutMs;
  for (;;) {
    const status = await api.trainStatus();
    if (status.status !== "running") {
      if (status.status === "failed") throw new Error(`training failed: ${status.message}`);
      return;
    }
    if (Date.now() > deadline) throw new Error("training job did not finish in time");
    await new Promise((resolve) => setTimeout(resolve, 500));
  }
}

beforeAll(async () => {
  workdir = mkdtempSync(join(tmpdir(), "steering-ui-"));
  writeFileSync(join(workdir, "run.json"), JSON.stringify(RUN_CONFIG));
  cli("synth", "--config", "run.json", "--out", "data", "--seed", "2");
  cli(
    "train",
    "--config", "run.json",
    "--data", "data/data.csv",
    "--schema", "data/schema.json",
    "--out", "run",
  );
  server = spawn(
    PYTHON,
    [
      "-m", "protocast.cli", "serve",
      "--config", "run.json",
      "--checkpoint", "run/checkpoint.bin",
      "--data", "data/data.csv",
      "--schema", "data/schema.json",
      "--bind", `127.0.0.1:${PORT}`,
    ],
    { cwd: workdir, stdio: ["ignore", "pipe", "pipe"] },
  );
  api = new ApiClient(`http://127.0.0.1:${PORT}`);
  await waitForServer(30_000);
}, 180_000);

afterAll(() => {
  server?.kill("SIGTERM");
  if (workdir) rmSync(workdir, { recursive: true, force: true });
});

describe("steering UI contract", () => {
  it("renders every node the server reports", async () => {
    const tree = await api.fetchTree();
    expect(tree.nodes.length).toBeGreaterThanOrEqual(6); // 2 roots split into 2 each
    const layout = buildTreeLayout(tree);
    expect(layout.placed.length).toBe(tree.nodes.length);
    const html = renderTree(tree, null);
    for (const node of tree.nodes) {
      expect(html).toContain(`data-node="${node.id}"`);
    }
    for (const node of tree.nodes) {
      expect(node.pattern.length).toBe(tree.period);
    }
  });

  it("splits a leaf and shows M children after the refresh round trip", async () => {
    const before = await api.fetchTree();
    const leaf = before.nodes.find((n) => n.is_leaf)!;
    expect(canSplit(before, leaf.id)).toBe(true);
    const internal = before.nodes.find((n) => !n.is_leaf)!;
    expect(canSplit(before, internal.id)).toBe(false);

    await api.splitNode(leaf.id, 3, 1);
    const after = await api.fetchTree();
    const grown = after.nodes.find((n) => n.id === leaf.id)!;
    expect(grown.children.length).toBe(3);
    expect(grown.is_leaf).toBe(false);
    expect(after.revision).toBeGreaterThan(before.revision);
    expect(isStale(before.revision, after.revision)).toBe(true);
    // splitting the same node again must now conflict server-side too
    await expect(api.splitNode(leaf.id, 2)).rejects.toThrowError(ConflictError);
  });

  it("keeps a locked pattern edit bit-exact through a retrain", async () => {
    const tree = await api.fetchTree();
    const leaf = tree.nodes.find((n) => n.is_leaf)!;
    const editor = beginEdit(tree, leaf.id);
    const curve = editor.curve.map((_, i) => Math.round(100 * Math.sin(i)) / 100);
    expect(validateCurve(curve, tree.period)).toBeNull();
    expect(validateCurve(curve.slice(1), tree.period)).toMatch(/exactly/);

    await api.patchPattern(leaf.id, curve, true);
    await api.startTraining({ max_epochs: 2 });
    await waitForIdle(120_000);

    const after = await api.fetchTree();
    const node = after.nodes.find((n) => n.id === leaf.id)!;
    expect(node.pattern_locked).toBe(true);
    expect(node.pattern).toEqual(curve);
  }, 150_000);

  it("activation bars sum to 1 per instance within rendering tolerance", async () => {
    const tree = await api.fetchTree();
    const leafCount = tree.nodes.filter((n) => n.is_leaf).length;
    const activations = await api.fetchActivations("test", leafCount);
    expect(activations.entries.length).toBeGreaterThan(0);
    for (const entry of activations.entries) {
      expect(Math.abs(stackTotal(entry) - 1)).toBeLessThan(1e-6);
      const stack = buildStack(entry);
      expect(stack[stack.length - 1].y1).toBeCloseTo(1, 6);
      for (let i = 1; i < stack.length; i++) {
        expect(stack[i].y0).toBeCloseTo(stack[i - 1].y1, 12);
      }
    }
  });

  it("serves explanations whose contributions sum to the prediction", async () => {
    const explanation = await api.fetchExplanation(0, "test");
    const total = explanation.contributions.reduce((acc, c) => acc + c.weight, 0);
    expect(Math.abs(total - 1)).toBeLessThan(1e-9);
    expect(Math.max(...explanation.residual.map(Math.abs))).toBeLessThan(1e-8);
  });
});
