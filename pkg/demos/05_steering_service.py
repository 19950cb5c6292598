#!/usr/bin/env python3
"""The expert steering loop, end to end, against a live service.

Starts the HTTP service in-process, then walks the workflow a domain expert
would drive from the browser UI: inspect the tree, split a leaf, edit and
lock a pattern, retrain, and confirm the edit survived. Run 03 first.
"""

import threading
import time
from pathlib import Path

import httpx
import uvicorn

from protocast.checkpoint import load_model
from protocast.data import SynthConfig, synth_generate
from protocast.service import SteeringSession, create_app
from protocast.trainer import TrainConfig

here = Path(__file__).parent
ckpt = here / "03_checkpoint.bin"
if not ckpt.exists():
    raise SystemExit("run demos/03_train_and_refine.py first")

model = load_model(ckpt)
config = SynthConfig(regimes=4, period=24, n_periods=200, noise=0.1,
                     lookback=24, horizon=12, regime_block=3)
bundle, schema, _ = synth_generate(config, seed=11)
session = SteeringSession(
    model, bundle, schema,
    train_config=TrainConfig(lr=0.005, max_epochs=3, patience=3, seed=11),
    stride=2,
)

server = uvicorn.Server(uvicorn.Config(create_app(session), host="127.0.0.1", port=8761, log_level="error"))
threading.Thread(target=server.run, daemon=True).start()
while not server.started:
    time.sleep(0.05)

api = httpx.Client(base_url="http://127.0.0.1:8761", timeout=60.0)

tree = api.get("/model/tree").json()
leaves = [n for n in tree["nodes"] if n["is_leaf"]]
print(f"revision {tree['revision']}: {len(tree['nodes'])} nodes, {len(leaves)} leaves, depth {tree['depth']}")
print(f"test MAE before steering: {api.get('/model/metrics').json()['mae']:.4f}")

# 1. split a leaf the expert believes hides two behaviors
victim = leaves[0]["id"]
resp = api.post(f"/prototypes/{victim}/split", json={"M": 2, "seed": 7}).json()
print(f"split leaf {victim} -> revision {resp['revision']}, "
      f"{len([n for n in resp['tree']['nodes'] if n['is_leaf']])} leaves")

# 2. edit another leaf's pattern by hand and lock it against training
target = leaves[1]["id"]
curve = [round(0.5 * (i % 24) / 24 - 0.25, 4) for i in range(tree["period"])]
api.patch(f"/prototypes/{target}/pattern", json={"pattern": curve, "lock": True})
print(f"edited and locked leaf {target}")

# 3. retrain in the background, polling like the UI does
job = api.post("/train", json={"max_epochs": 3}).json()
print(f"training job {job['job_id']} started")
while True:
    status = api.get("/train/status").json()
    if status["status"] != "running":
        break
    print(f"  ... running, progress {status['progress']:.0%}")
    time.sleep(1.0)
print(f"job finished: {status['status']}, revision {status['revision']}")

# 4. the locked pattern must be exactly what the expert wrote
after = api.get("/model/tree").json()
node = next(n for n in after["nodes"] if n["id"] == target)
print(f"locked pattern unchanged: {node['pattern'] == curve}")
print(f"test MAE after steering:  {api.get('/model/metrics').json()['mae']:.4f}")

server.should_exit = True
