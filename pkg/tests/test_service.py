"""End-to-end HTTP service tests over a temporary on-disk store."""

import base64
import time

import numpy as np
import pytest
from fastapi.testclient import TestClient

from conftest import cantilever_spec
from topoforge.core import DensityField, field_from_pgm, pgm_to_base64
from topoforge.corpus import CorpusItem, save_corpus
from topoforge.diffusion import Denoiser, make_schedule
from topoforge.metrics import compliance, joint_locations
from topoforge.service import create_app


@pytest.fixture(scope="module")
def model():
    return Denoiser(widths=(4, 8, 8, 8), resolution=16, seed=0).eval()


def ring_field():
    # closed ring plus cross: tolerant of holes anywhere in the interior
    v = np.zeros((16, 16))
    v[0:2, :] = 1.0
    v[14:16, :] = 1.0
    v[:, 0:2] = 1.0
    v[:, 14:16] = 1.0
    v[7:9, :] = 1.0
    v[:, 7:9] = 1.0
    return DensityField.from_array(v)


def plus_field():
    v = np.zeros((16, 16))
    v[7:9, :] = 1.0
    v[:, 7:9] = 1.0
    return DensityField.from_array(v)


@pytest.fixture(scope="module")
def smooth_field():
    # refine assumes an optimizer-shaped field, so build one
    from topoforge.fem import optimize

    return optimize(cantilever_spec(16, 16), 5).field


@pytest.fixture(scope="module")
def corpus_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("corpus")
    spec = cantilever_spec(16, 16)
    f = ring_field()
    save_corpus([CorpusItem("d000", 0, spec, f, compliance(f, spec), 0.01)], d,
                seed=0, iterations=60)
    return d


@pytest.fixture
def store_dir(tmp_path):
    return tmp_path / "store"


@pytest.fixture
def client(model, store_dir, corpus_dir):
    app = create_app(
        model,
        store_dir=store_dir,
        corpus_dir=corpus_dir,
        schedule=make_schedule(10),
        checkpoint_hash="feedc0de",
    )
    return TestClient(app)


def decode_field(b64: str) -> DensityField:
    return field_from_pgm(base64.b64decode(b64))


def open_session(client, field=None):
    field = ring_field() if field is None else field
    payload = {"field": pgm_to_base64(field), "spec": cantilever_spec(16, 16).to_doc()}
    r = client.post("/sessions", json=payload)
    assert r.status_code == 201, r.text
    return r.json()["session_id"]


def nodesign_payload(num_samples=2, center=(0.25, 0.25), radius=0.06, **cfg):
    config = {"partial_steps": 0, "num_samples": num_samples, "seed": 0, **cfg}
    return {"kind": "nodesign", "center": list(center), "radius": radius,
            "config": config}


def warp_payload(dx=0.02, dy=0.0, sigma=0.08, **cfg):
    config = {"partial_steps": 0, "num_samples": 2, "seed": 0, "refine_steps": 0,
              **cfg}
    return {
        "kind": "warp",
        "warp": {"handles": [{"x": 0.5, "y": 0.5, "dx": dx, "dy": dy,
                              "sigma": sigma}]},
        "config": config,
    }


def wait_done(client, edit_id, timeout=30.0):
    deadline = time.monotonic() + timeout
    while time.monotonic() < deadline:
        body = client.get(f"/edits/{edit_id}").json()
        if body["status"] in ("done", "failed"):
            return body
        time.sleep(0.02)
    raise AssertionError(f"edit {edit_id} still {body['status']} after {timeout}s")


def assert_error(resp, status, code=None, needle=None):
    assert resp.status_code == status, resp.text
    body = resp.json()
    assert set(body) == {"schema", "code", "message"}
    assert body["schema"] == 1
    if code is not None:
        assert body["code"] == code
    if needle is not None:
        assert needle in body["message"]


class TestMeta:
    def test_healthz(self, client):
        body = client.get("/healthz").json()
        assert body == {"schema": 1, "status": "ok"}

    def test_model_info(self, client, model):
        body = client.get("/model").json()
        assert body["schema"] == 1
        assert body["arch_hash"] == model.arch_hash()
        assert body["parameter_count"] == model.parameter_count()
        assert body["checkpoint_hash"] == "feedc0de"
        assert body["schedule"]["total_steps"] == 10
        assert len(body["schedule"]["alpha_bar"]) == 11
        assert body["schedule"]["alpha_bar"][0] == 1.0

    def test_ui_mount_serves_assets_behind_api(self, model, tmp_path):
        from topoforge.service import mount_ui

        ui = tmp_path / "ui"
        ui.mkdir()
        (ui / "index.html").write_text("<h1>editor</h1>")
        app = create_app(model, store_dir=tmp_path / "store")
        mount_ui(app, ui)
        c = TestClient(app)
        assert "editor" in c.get("/").text
        # API routes win over the static catch-all
        assert c.get("/healthz").json() == {"schema": 1, "status": "ok"}


class TestSessions:
    def test_create_and_topology(self, client):
        sid = open_session(client, plus_field())
        assert sid.startswith("s_")
        body = client.get(f"/sessions/{sid}/topology").json()
        assert body["schema"] == 1
        assert (body["width"], body["height"]) == (16, 16)
        stored = decode_field(body["field"])
        assert np.abs(stored.values - plus_field().values).max() <= 1 / 510
        assert body["compliance"] > 0
        assert body["volume_fraction"] == pytest.approx(stored.values.mean())
        assert body["spec"] == cantilever_spec(16, 16).to_doc()
        assert body["history"] == []

    def test_joints_match_field(self, client):
        sid = open_session(client, plus_field())
        body = client.get(f"/sessions/{sid}/topology").json()
        expected = [list(j) for j in joint_locations(decode_field(body["field"]))]
        assert body["joints"] == expected
        assert len(expected) >= 1

    def test_skeleton_is_binary(self, client):
        sid = open_session(client)
        body = client.get(f"/sessions/{sid}/topology").json()
        sk = decode_field(body["skeleton"])
        assert (sk.height, sk.width) == (16, 16)
        assert set(np.unique(sk.values)) <= {0.0, 1.0}

    def test_create_from_corpus_item(self, client):
        r = client.post("/sessions", json={"corpus_item": "d000"})
        assert r.status_code == 201
        sid = r.json()["session_id"]
        body = client.get(f"/sessions/{sid}/topology").json()
        assert (body["width"], body["height"]) == (16, 16)

    def test_unknown_corpus_item(self, client):
        r = client.post("/sessions", json={"corpus_item": "nope"})
        assert_error(r, 422, code="invalid_request")

    def test_corpus_item_rejects_paths(self, client):
        for name in ("../d000", "a/b", "..\\x"):
            r = client.post("/sessions", json={"corpus_item": name})
            assert_error(r, 422, code="invalid_request", needle="plain design name")

    def test_missing_parts(self, client):
        r = client.post("/sessions", json={"field": pgm_to_base64(ring_field())})
        assert_error(r, 422, code="invalid_request")

    def test_bad_body_shape(self, client):
        r = client.post("/sessions", json=[1, 2, 3])
        assert_error(r, 422, code="invalid_request")

    def test_unknown_session(self, client):
        assert_error(client.get("/sessions/s_missing/topology"), 404,
                     code="unknown_session")
        assert_error(client.post("/sessions/s_missing/edits",
                                 json=nodesign_payload()), 404,
                     code="unknown_session")
        assert_error(client.post("/sessions/s_missing/refine", json={"steps": 1}),
                     404, code="unknown_session")


class TestEdits:
    def test_nodesign_flow(self, client):
        sid = open_session(client)
        r = client.post(f"/sessions/{sid}/edits", json=nodesign_payload())
        assert r.status_code == 202
        edit_id = r.json()["edit_id"]
        assert edit_id.startswith("e_")
        body = wait_done(client, edit_id)
        assert body["status"] == "done", body["error"]
        assert body["kind"] == "nodesign"
        assert body["best_index"] in (0, 1)
        assert len(body["candidates"]) == 2
        for cand in body["candidates"]:
            f = decode_field(cand["field"])
            assert (f.height, f.width) == (16, 16)
            assert "compliance" in cand["metrics"]
            assert "violation" in cand["metrics"]
        # keep-out leaves the boundary conditions alone
        assert body["updated_spec"] == cantilever_spec(16, 16).to_doc()
        ref = decode_field(body["reference"])
        assert np.abs(ref.values - ring_field().values).max() <= 1 / 510

    def test_warp_candidates_have_ce_and_de(self, client):
        sid = open_session(client)
        r = client.post(f"/sessions/{sid}/edits", json=warp_payload())
        assert r.status_code == 202
        body = wait_done(client, r.json()["edit_id"])
        assert body["status"] == "done", body["error"]
        for cand in body["candidates"]:
            assert "ce" in cand["metrics"]
            assert "de" in cand["metrics"]

    def test_warp_rejects_contraction_breach(self, client):
        sid = open_session(client)
        r = client.post(f"/sessions/{sid}/edits",
                        json=warp_payload(dx=0.1, sigma=0.05))
        assert_error(r, 422, code="invalid_request", needle="invertibility")

    def test_unknown_kind(self, client):
        sid = open_session(client)
        r = client.post(f"/sessions/{sid}/edits", json={"kind": "bogus"})
        assert_error(r, 422, code="invalid_request")

    def test_unknown_edit_404(self, client):
        assert_error(client.get("/edits/e_missing"), 404, code="unknown_edit")

    def test_job_failure_is_reported(self, client):
        # a floating island is singular for the baseline solve; the request
        # parses fine, so the failure surfaces on the job, not the submit
        island = np.pad(np.ones((2, 2)), ((7, 7), (7, 7)))
        sid = open_session(client, DensityField.from_array(island))
        r = client.post(f"/sessions/{sid}/edits", json=nodesign_payload())
        assert r.status_code == 202
        body = wait_done(client, r.json()["edit_id"])
        assert body["status"] == "failed"
        assert "FemError" in body["error"]


class TestSelect:
    def test_select_commits_working(self, client):
        sid = open_session(client)
        r = client.post(f"/sessions/{sid}/edits", json=nodesign_payload())
        edit = wait_done(client, r.json()["edit_id"])
        assert edit["status"] == "done"
        idx = edit["best_index"]
        r = client.post(f"/edits/{edit['edit_id']}/select",
                        json={"candidate_index": idx})
        assert r.status_code == 200, r.text
        sel = r.json()
        assert sel["candidate_index"] == idx
        topo = client.get(f"/sessions/{sid}/topology").json()
        assert topo["field"] == sel["working"]
        assert len(topo["history"]) == 1
        entry = topo["history"][0]
        assert entry["edit_id"] == edit["edit_id"]
        assert entry["candidate_index"] == idx
        assert "at" in entry

    def test_select_index_validation(self, client):
        sid = open_session(client)
        r = client.post(f"/sessions/{sid}/edits",
                        json=nodesign_payload(num_samples=1))
        edit = wait_done(client, r.json()["edit_id"])
        url = f"/edits/{edit['edit_id']}/select"
        assert_error(client.post(url, json={"candidate_index": 5}), 422,
                     needle="out of range")
        assert_error(client.post(url, json={"candidate_index": -1}), 422)
        assert_error(client.post(url, json={"candidate_index": "0"}), 422,
                     needle="integer")
        assert_error(client.post(url, json={"candidate_index": True}), 422)
        assert_error(client.post(url, json={}), 422)

    def test_select_requires_done(self, client):
        # created directly in the store, never submitted, so it stays queued
        sid = open_session(client)
        store = client.app.state.store
        edit_id = store.create_edit(sid, nodesign_payload())
        r = client.post(f"/edits/{edit_id}/select", json={"candidate_index": 0})
        assert_error(r, 422, needle="queued")

    def test_select_unknown_edit(self, client):
        r = client.post("/edits/e_missing/select", json={"candidate_index": 0})
        assert_error(r, 404, code="unknown_edit")


class TestRefine:
    def test_refine_updates_working(self, client, smooth_field):
        sid = open_session(client, smooth_field)
        r = client.post(f"/sessions/{sid}/refine", json={"steps": 2})
        assert r.status_code == 200, r.text
        body = r.json()
        assert body["steps"] == 2
        assert np.isfinite(body["compliance"])
        refined = decode_field(body["working"])
        assert (refined.height, refined.width) == (16, 16)
        topo = client.get(f"/sessions/{sid}/topology").json()
        assert topo["field"] == body["working"]
        assert topo["history"][0]["refine_steps"] == 2

    def test_refine_step_validation(self, client):
        sid = open_session(client)
        url = f"/sessions/{sid}/refine"
        assert_error(client.post(url, json={"steps": 0}), 422, needle="positive")
        assert_error(client.post(url, json={"steps": -3}), 422)
        assert_error(client.post(url, json={"steps": "two"}), 422)
        assert_error(client.post(url, json={}), 422)


class TestIdempotency:
    def test_session_create_replay(self, client, store_dir):
        payload = {"field": pgm_to_base64(ring_field()),
                   "spec": cantilever_spec(16, 16).to_doc()}
        h = {"Idempotency-Key": "create-1"}
        first = client.post("/sessions", json=payload, headers=h).json()
        second = client.post("/sessions", json=payload, headers=h).json()
        assert first == second
        assert len(list((store_dir / "sessions").iterdir())) == 1

    def test_refine_replay_commits_once(self, client, smooth_field):
        sid = open_session(client, smooth_field)
        h = {"Idempotency-Key": "refine-1"}
        first = client.post(f"/sessions/{sid}/refine", json={"steps": 1},
                            headers=h).json()
        second = client.post(f"/sessions/{sid}/refine", json={"steps": 1},
                             headers=h).json()
        assert first == second
        topo = client.get(f"/sessions/{sid}/topology").json()
        assert len(topo["history"]) == 1

    def test_edit_replay_returns_same_id(self, client):
        sid = open_session(client)
        h = {"Idempotency-Key": "edit-1"}
        url = f"/sessions/{sid}/edits"
        first = client.post(url, json=nodesign_payload(), headers=h).json()
        second = client.post(url, json=nodesign_payload(), headers=h).json()
        assert first["edit_id"] == second["edit_id"]

    def test_keys_scoped_per_endpoint(self, client, smooth_field):
        payload = {"field": pgm_to_base64(smooth_field),
                   "spec": cantilever_spec(16, 16).to_doc()}
        h = {"Idempotency-Key": "shared"}
        sid = client.post("/sessions", json=payload, headers=h).json()["session_id"]
        r = client.post(f"/sessions/{sid}/refine", json={"steps": 1}, headers=h)
        assert r.status_code == 200
        assert "session_id" in r.json() and "working" in r.json()

    def test_errors_not_cached(self, client, smooth_field):
        sid = open_session(client, smooth_field)
        h = {"Idempotency-Key": "retry-1"}
        url = f"/sessions/{sid}/refine"
        assert client.post(url, json={"steps": 0}, headers=h).status_code == 422
        assert client.post(url, json={"steps": 1}, headers=h).status_code == 200


class TestRestart:
    def test_identical_reads_after_restart(self, model, store_dir, corpus_dir):
        app1 = create_app(model, store_dir=store_dir, corpus_dir=corpus_dir)
        c1 = TestClient(app1)
        sid = open_session(c1)
        r = c1.post(f"/sessions/{sid}/edits", json=nodesign_payload())
        edit = wait_done(c1, r.json()["edit_id"])
        assert edit["status"] == "done"
        c1.post(f"/edits/{edit['edit_id']}/select",
                json={"candidate_index": edit["best_index"]})
        topo1 = c1.get(f"/sessions/{sid}/topology").json()
        edit1 = c1.get(f"/edits/{edit['edit_id']}").json()

        app2 = create_app(model, store_dir=store_dir, corpus_dir=corpus_dir)
        c2 = TestClient(app2)
        assert c2.get(f"/sessions/{sid}/topology").json() == topo1
        assert c2.get(f"/edits/{edit['edit_id']}").json() == edit1

    def test_restart_marks_interrupted(self, model, store_dir):
        app1 = create_app(model, store_dir=store_dir)
        c1 = TestClient(app1)
        sid = open_session(c1)
        edit_id = app1.state.store.create_edit(sid, nodesign_payload())

        app2 = create_app(model, store_dir=store_dir)
        c2 = TestClient(app2)
        body = c2.get(f"/edits/{edit_id}").json()
        assert body["status"] == "failed"
        assert "interrupted" in body["error"]

    def test_no_corpus_configured(self, model, store_dir):
        app = create_app(model, store_dir=store_dir)
        r = TestClient(app).post("/sessions", json={"corpus_item": "d000"})
        assert_error(r, 422, needle="no corpus")
