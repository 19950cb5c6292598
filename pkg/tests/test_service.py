"""HTTP steering surface: endpoints, revisioning, conflicts, validation."""

import numpy as np
from fastapi.testclient import TestClient

from protocast.service import SteeringSession, create_app
from protocast.trainer import TrainConfig

from helpers import tiny_dataset, tiny_model


def make_session(n_roots=6, max_epochs=2, seed=40):
    bundle, schema, norm, windows, _ = tiny_dataset(seed=seed, periods=30)
    model = tiny_model(schema, norm, n_roots=n_roots, seed=seed)
    session = SteeringSession(
        model, bundle, schema, train_config=TrainConfig(lr=1e-2, max_epochs=max_epochs, seed=seed)
    )
    return session, TestClient(create_app(session))


def test_tree_endpoint_lists_every_root_with_patterns():
    session, client = make_session(n_roots=6)
    payload = client.get("/model/tree").json()
    assert len(payload["roots"]) == 6
    assert len(payload["nodes"]) == 6
    T = session.schema.period_T
    assert all(len(n["pattern"]) == T for n in payload["nodes"])
    assert payload["revision"] == 0


def test_split_creates_children_and_bumps_revision():
    session, client = make_session()
    r = client.post("/prototypes/0/split", json={"M": 3, "seed": 5})
    assert r.status_code == 200
    body = r.json()
    assert body["revision"] == 1
    node0 = [n for n in body["tree"]["nodes"] if n["id"] == 0][0]
    assert len(node0["children"]) == 3
    assert not node0["is_leaf"]


def test_split_non_leaf_conflicts():
    session, client = make_session()
    client.post("/prototypes/0/split", json={"M": 2, "seed": 1})
    r = client.post("/prototypes/0/split", json={"M": 2, "seed": 1})
    assert r.status_code == 409


def test_pattern_patch_round_trips_through_get():
    session, client = make_session()
    T = session.schema.period_T
    curve = [float(v) for v in np.linspace(-2.0, 2.0, T)]
    r = client.patch("/prototypes/1/pattern", json={"pattern": curve, "lock": True})
    assert r.status_code == 200
    tree = client.get("/model/tree").json()
    node = [n for n in tree["nodes"] if n["id"] == 1][0]
    assert np.max(np.abs(np.array(node["pattern"]) - np.array(curve))) < 1e-9
    assert node["pattern_locked"]


def test_malformed_body_is_400_with_field_path():
    _, client = make_session()
    r = client.patch("/prototypes/1/pattern", json={"pattern": "not-a-curve"})
    assert r.status_code == 400
    detail = r.json()["detail"]
    assert any("pattern" in item["field"] for item in detail)


def test_wrong_length_pattern_conflicts():
    _, client = make_session()
    r = client.patch("/prototypes/1/pattern", json={"pattern": [1.0, 2.0]})
    assert r.status_code == 409


def test_unknown_node_conflicts():
    _, client = make_session()
    assert client.post("/prototypes/99/split", json={"M": 2}).status_code == 409


def test_metrics_explain_activations_shapes():
    session, client = make_session()
    metrics = client.get("/model/metrics", params={"split": "test"}).json()
    assert metrics["count"] == len(session.windows["test"])
    assert metrics["mse"] >= 0.0

    acts = client.get("/model/activations", params={"split": "test", "k": 6}).json()
    for entry in acts["entries"]:
        total = sum(l["weight"] for l in entry["leaves"])
        assert abs(total - 1.0) <= 1e-9

    exp = client.get("/model/explain/0", params={"split": "test"}).json()
    assert abs(sum(c["weight"] for c in exp["contributions"]) - 1.0) <= 1e-9
    assert max(abs(v) for v in exp["residual"]) < 1e-8

    assert client.get("/model/explain/99999").status_code == 409


def test_training_job_lifecycle_and_conflicts():
    session, client = make_session(max_epochs=40)
    r = client.post("/train", json={"max_epochs": 40})
    assert r.status_code == 200
    job_id = r.json()["job_id"]
    assert job_id == 1

    status = client.get("/train/status").json()
    assert status["status"] == "running"
    # mutations and new jobs conflict while the job runs
    assert client.post("/prototypes/0/split", json={"M": 2}).status_code == 409
    assert client.patch("/prototypes/0/pattern", json={"pattern": [0.0] * session.schema.period_T}).status_code == 409
    assert client.post("/train", json={}).status_code == 409

    session.wait_for_job()
    status = client.get("/train/status").json()
    assert status["status"] == "idle"
    assert status["progress"] == 1.0
    assert status["revision"] == 1  # training commit bumped the revision


def test_training_commits_new_model_and_reads_see_old_until_then():
    session, client = make_session(max_epochs=30)
    before = client.get("/model/tree").json()["nodes"][0]["pattern"]
    client.post("/train", json={"max_epochs": 30})
    during = client.get("/model/tree").json()["nodes"][0]["pattern"]
    assert during == before  # reads serve the pre-job revision
    session.wait_for_job()
    after = client.get("/model/tree").json()["nodes"][0]["pattern"]
    assert after != before


def test_locked_pattern_edit_survives_retrain():
    session, client = make_session(max_epochs=3)
    T = session.schema.period_T
    curve = [float(v) for v in np.linspace(1.0, -1.0, T)]
    client.patch("/prototypes/0/pattern", json={"pattern": curve, "lock": True})
    client.post("/train", json={"max_epochs": 3})
    session.wait_for_job()
    node = [n for n in client.get("/model/tree").json()["nodes"] if n["id"] == 0][0]
    assert node["pattern"] == curve
    assert node["pattern_locked"]


def test_checkpoint_save_and_load_endpoints(tmp_path):
    session, client = make_session()
    path = str(tmp_path / "served.bin")
    assert client.post("/checkpoint/save", json={"path": path}).status_code == 200
    client.post("/prototypes/0/split", json={"M": 2})
    assert len(client.get("/model/tree").json()["nodes"]) == 8
    r = client.post("/checkpoint/load", json={"path": path})
    assert r.status_code == 200
    assert len(client.get("/model/tree").json()["nodes"]) == 6

    missing = client.post("/checkpoint/load", json={"path": str(tmp_path / "nope.bin")})
    assert missing.status_code in (400, 404, 422)


def test_failed_job_reports_message():
    session, client = make_session()
    session.model.encoder.w_agg.data[0, 0] = np.nan
    client.post("/train", json={"max_epochs": 2})
    session.wait_for_job()
    status = client.get("/train/status").json()
    assert status["status"] == "failed"
    assert "batch" in status["message"]
