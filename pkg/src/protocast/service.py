"""HTTP steering surface: inspect the tree and activations, split and edit
prototypes, launch background retraining, and save/load checkpoints.

Mutations are serialized behind one lock and bump a monotonically increasing
revision number; a training job works on a clone snapshotted at launch, so
reads keep serving the pre-job revision until the job commits. Exactly one
job runs at a time; mutations during a running job are rejected with 409.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass
from typing import Optional

from fastapi import Body, FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from . import checkpoint as ckpt_io
from .data import DatasetBundle, VariableSchema, make_windows
from .errors import CheckpointError, ContractError, ProtocastError, UnsupportedVersionError
from .evaluation import activation_report, evaluate, explain
from .model import ForecastModel
from .prototypes import edit_pattern, split
from .trainer import TrainConfig, TrainReport, WindowSet, staged_train


class SplitBody(BaseModel):
    M: int = 2
    seed: int = 0


class PatternBody(BaseModel):
    pattern: list[float]
    lock: bool = False


class PathBody(BaseModel):
    path: str


@dataclass
class JobState:
    status: str = "idle"  # idle | running | failed
    progress: float = 0.0
    message: str = ""
    job_id: int = 0


class SteeringSession:
    """Owns the live model, the dataset it is steered against, and job state."""

    def __init__(
        self,
        model: ForecastModel,
        bundle: DatasetBundle,
        schema: VariableSchema,
        train_config: TrainConfig | None = None,
        stride: int = 1,
    ):
        self.schema = schema
        self.raw_bundle = bundle
        self.stride = stride
        self.model = model
        self.train_config = train_config or TrainConfig()
        self.revision = 0
        self.lock = threading.Lock()
        self.job = JobState()
        self.last_report: TrainReport | None = None
        self._thread: Optional[threading.Thread] = None
        self._rebuild_windows()

    def _rebuild_windows(self) -> None:
        normalizer = self.model.normalizer
        bundle = normalizer.apply(self.raw_bundle) if normalizer else self.raw_bundle
        self.windows = {
            name: make_windows(bundle, self.schema, stride=self.stride, split=name)
            for name in ("train", "val", "test")
        }

    def window_split(self, name: str) -> list:
        if name not in self.windows:
            raise ContractError(f"unknown split {name!r}")
        return self.windows[name]

    # -- mutations ---------------------------------------------------------

    def split_node(self, node_id: int, m: int, seed: int) -> int:
        with self.lock:
            self._reject_if_running()
            self.model.tree = split(self.model.tree, node_id, m, seed)
            self.revision += 1
            return self.revision

    def edit_node_pattern(self, node_id: int, pattern: list[float], lock: bool) -> int:
        with self.lock:
            self._reject_if_running()
            self.model.tree = edit_pattern(self.model.tree, node_id, pattern, lock)
            self.revision += 1
            return self.revision

    def start_training(self, overrides: dict) -> int:
        with self.lock:
            self._reject_if_running()
            merged = self.train_config.to_dict()
            merged.update(overrides or {})
            config = TrainConfig.from_dict(merged)
            snapshot = self.model.clone()
            self.job = JobState(status="running", progress=0.0, job_id=self.job.job_id + 1)
            planned = max(1, (len(config.stage_plan) + 1) * config.max_epochs)

        def progress(done_epochs: int) -> None:
            self.job.progress = min(1.0, done_epochs / planned)

        def run() -> None:
            try:
                report = staged_train(
                    snapshot,
                    WindowSet(train=self.windows["train"], val=self.windows["val"], test=self.windows["test"]),
                    config,
                    progress_cb=progress,
                )
            except Exception as exc:  # surfaced through /train/status
                with self.lock:
                    self.job.status = "failed"
                    self.job.message = str(exc)
                return
            with self.lock:
                self.model = snapshot
                self.last_report = report
                self.revision += 1
                self.job.status = "idle"
                self.job.progress = 1.0

        self._thread = threading.Thread(target=run, daemon=True)
        self._thread.start()
        return self.job.job_id

    def save_checkpoint(self, path: str) -> None:
        with self.lock:
            self._reject_if_running()
            ckpt_io.save_model(self.model, path, train_config=self.train_config.to_dict())

    def load_checkpoint(self, path: str) -> int:
        with self.lock:
            self._reject_if_running()
            loaded = ckpt_io.load_model(path)
            if loaded.schema != self.schema:
                raise ContractError("checkpoint schema does not match the served dataset")
            self.model = loaded
            self._rebuild_windows()
            self.revision += 1
            return self.revision

    def _reject_if_running(self) -> None:
        if self.job.status == "running":
            raise TrainingBusy("a training job is running; retry after it finishes")

    def wait_for_job(self, timeout: float = 300.0) -> None:
        """Test helper: block until the background job finishes."""
        if self._thread is not None:
            self._thread.join(timeout)


class TrainingBusy(ProtocastError):
    pass


def tree_payload(session: SteeringSession) -> dict:
    tree = session.model.tree
    return {
        "revision": session.revision,
        "period": tree.period,
        "depth": tree.depth,
        "roots": list(tree.roots),
        "nodes": [
            {
                "id": nid,
                "children": list(tree.nodes[nid].children),
                "label": tree.nodes[nid].label,
                "pattern_locked": tree.nodes[nid].pattern_locked,
                "is_leaf": tree.nodes[nid].is_leaf,
                "mu": [float(v) for v in tree.nodes[nid].mu.data],
                "pattern": [float(v) for v in tree.nodes[nid].pattern.data],
            }
            for nid in sorted(tree.nodes)
        ],
    }


def create_app(session: SteeringSession, ui_dir: str | None = None) -> FastAPI:
    app = FastAPI(title="protocast steering service")
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"]
    )

    @app.exception_handler(RequestValidationError)
    async def validation_handler(request: Request, exc: RequestValidationError):
        detail = [
            {"field": ".".join(str(p) for p in err["loc"]), "message": err["msg"]}
            for err in exc.errors()
        ]
        return JSONResponse(status_code=400, content={"error": "validation", "detail": detail})

    @app.exception_handler(TrainingBusy)
    async def busy_handler(request: Request, exc: TrainingBusy):
        return JSONResponse(status_code=409, content={"error": "conflict", "detail": str(exc)})

    @app.exception_handler(ContractError)
    async def contract_handler(request: Request, exc: ContractError):
        return JSONResponse(status_code=409, content={"error": "conflict", "detail": str(exc)})

    @app.exception_handler(CheckpointError)
    async def checkpoint_handler(request: Request, exc: CheckpointError):
        code = 409 if isinstance(exc, UnsupportedVersionError) else 422
        return JSONResponse(status_code=code, content={"error": "checkpoint", "detail": str(exc)})

    @app.exception_handler(ProtocastError)
    async def domain_handler(request: Request, exc: ProtocastError):
        return JSONResponse(status_code=400, content={"error": "domain", "detail": str(exc)})

    @app.get("/model/tree")
    def get_tree():
        return tree_payload(session)

    @app.get("/model/activations")
    def get_activations(split: str = "test", k: int = 1):
        timeline = activation_report(session.model, session.window_split(split), k=k)
        payload = timeline.to_dict()
        payload["revision"] = session.revision
        return payload

    @app.get("/model/explain/{instance}")
    def get_explain(instance: int, split: str = "test"):
        windows = session.window_split(split)
        if not 0 <= instance < len(windows):
            raise ContractError(f"instance must be in [0, {len(windows)}), got {instance}")
        payload = explain(session.model, windows[instance]).to_dict()
        payload["revision"] = session.revision
        return payload

    @app.get("/model/metrics")
    def get_metrics(split: str = "test"):
        payload = evaluate(session.model, session.window_split(split)).to_dict()
        payload["revision"] = session.revision
        return payload

    @app.post("/prototypes/{node_id}/split")
    def post_split(node_id: int, body: SplitBody):
        revision = session.split_node(node_id, body.M, body.seed)
        return {"revision": revision, "tree": tree_payload(session)}

    @app.patch("/prototypes/{node_id}/pattern")
    def patch_pattern(node_id: int, body: PatternBody):
        revision = session.edit_node_pattern(node_id, body.pattern, body.lock)
        return {"revision": revision}

    @app.post("/train")
    def post_train(overrides: dict = Body(default={})):
        job_id = session.start_training(overrides)
        return {"job_id": job_id}

    @app.get("/train/status")
    def train_status():
        job = session.job
        return {
            "status": job.status,
            "progress": job.progress,
            "message": job.message,
            "job_id": job.job_id,
            "revision": session.revision,
        }

    @app.post("/checkpoint/save")
    def post_save(body: PathBody):
        session.save_checkpoint(body.path)
        return {"saved": body.path, "revision": session.revision}

    @app.post("/checkpoint/load")
    def post_load(body: PathBody):
        revision = session.load_checkpoint(body.path)
        return {"loaded": body.path, "revision": revision}

    if ui_dir is not None:
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=ui_dir, html=True), name="ui")

    return app


def serve(
    session: SteeringSession,
    host: str = "127.0.0.1",
    port: int = 8760,
    ui_dir: str | None = None,
) -> None:
    """Run the steering service until interrupted."""
    import uvicorn

    uvicorn.run(create_app(session, ui_dir=ui_dir), host=host, port=port, log_level="warning")
