import json

import numpy as np
import pytest
from fastapi.testclient import TestClient

from birdcorpus.audio_io import decode_and_resample
from birdcorpus.config import load_config
from birdcorpus.manifest import read_manifest
from birdcorpus.pipeline import run_stage
from birdcorpus.segments import SegmentCandidate, extract
from birdcorpus.server import AuditState, create_app
from birdcorpus.synth import (write_fixture_config, write_negative_fixture,
                              write_positive_fixture)


@pytest.fixture(scope="module")
def audit_workspace(tmp_path_factory):
    """Small pipeline run through audit-sample, shared by the service tests."""
    root = tmp_path_factory.mktemp("fixture")
    ws = tmp_path_factory.mktemp("ws")
    write_positive_fixture(root / "positive", n_recordings=24, n_species=6, seed=5)
    write_negative_fixture(root / "negative", seed=5,
                           dcase_sizes={"birdvox": 12, "freefield1010": 8, "warblr": 6})
    write_fixture_config(root, n_target=40)
    cfg = load_config(root / "fixture_config.yaml", workspace=ws, overrides={
        "balance": {"n_target": 40},
        "audit": {"round_seeds": [42], "round_size": 12},
        "negatives": {"sources": [
            {"name": "birdvox", "root": str(root / "negative" / "birdvox"),
             "quota": 10, "policy": "center_crop", "excluded": [], "priority": []},
            {"name": "freefield1010", "root": str(root / "negative" / "freefield1010"),
             "quota": 6, "policy": "center_crop", "excluded": [], "priority": []},
            {"name": "warblr", "root": str(root / "negative" / "warblr"),
             "quota": 4, "policy": "center_crop", "excluded": [], "priority": []},
        ]}})
    for stage in ("fetch-metadata", "download", "dedup", "extract", "balance",
                  "curate-negatives", "merge", "split", "audit-sample"):
        run_stage(stage, cfg)
    return ws


@pytest.fixture
def client(audit_workspace):
    state = AuditState(audit_workspace, round_id=1)
    return TestClient(create_app(state)), state


class TestEndpoints:
    def test_plan_and_progress(self, client):
        http, state = client
        data = http.get("/api/plan").json()
        assert data["n0"] > 0
        assert data["progress"]["total"] == len(data["sampled_clip_ids"])

    def test_next_then_audio_and_spectrogram(self, client):
        http, _ = client
        nxt = http.get("/api/clips/next?auditor=me").json()
        clip_id = nxt["clip_id"]
        assert clip_id is not None
        audio = http.get(f"/api/clips/{clip_id}/audio.wav")
        assert audio.status_code == 200
        assert len(audio.content) == 44 + 2 * 48000
        png = http.get(f"/api/clips/{clip_id}/spectrogram.png")
        assert png.status_code == 200
        assert png.content[:8] == b"\x89PNG\r\n\x1a\n"
        src = http.get(f"/api/clips/{clip_id}/source-spectrogram.png")
        assert src.status_code == 200

    def test_verdict_flow_with_side_effects(self, client):
        http, state = client
        # correct: no file changes
        clip_id = http.get("/api/clips/next").json()["clip_id"]
        before = state.clip_path(clip_id).read_bytes()
        r = http.post("/api/verdicts", json={"clip_id": clip_id, "outcome": "correct",
                                             "auditor": "t"})
        assert r.status_code == 200
        assert state.clip_path(clip_id).read_bytes() == before

        # wrong onset: clip re-extracted sample-exactly at the corrected start
        clip_id = http.get("/api/clips/next").json()["clip_id"]
        info = http.get(f"/api/clips/{clip_id}/source-info").json()
        corrected = 0.0 if info["start_s"] >= 1.5 else round(info["duration_s"] - 3.0, 1)
        r = http.post("/api/verdicts", json={
            "clip_id": clip_id, "outcome": "wrong_onset",
            "corrected_start_s": corrected, "auditor": "t"})
        assert r.status_code == 200
        source = decode_and_resample(state.source_flac(info["catalog_id"]))
        expected = extract(source, SegmentCandidate(start_s=corrected, rms=0.0))
        got = decode_and_resample(state.clip_path(clip_id))
        assert np.array_equal(got.samples, np.round(expected.samples * 32768)
                              .clip(-32768, 32767) / 32768.0)
        row = state.manifest_row(clip_id)
        assert row.start_s == corrected

        # duplicate rejected
        r = http.post("/api/verdicts", json={"clip_id": clip_id, "outcome": "correct"})
        assert r.status_code == 409

        # unknown clip 404
        r = http.post("/api/verdicts", json={"clip_id": "XC0_0", "outcome": "correct"})
        assert r.status_code == 404

        # no_bird: removed and replaced from the same recording when possible
        clip_id = http.get("/api/clips/next").json()["clip_id"]
        manifest_before = {r.clip_id for r in state.manifest_rows()}
        r = http.post("/api/verdicts", json={"clip_id": clip_id, "outcome": "no_bird"})
        assert r.status_code == 200
        assert not (state.root / "clips" / "pos" / f"{clip_id}.wav").exists()
        manifest_after = {r.clip_id for r in state.manifest_rows()}
        assert clip_id not in manifest_after
        replacement = r.json().get("replacement_clip_id")
        if replacement:
            assert replacement in manifest_after
            assert (state.root / "clips" / "pos" / f"{replacement}.wav").exists()

    def test_summary_incomplete_409(self, client):
        http, _ = client
        assert http.get("/api/summary").status_code == 409

    def test_log_replay_reconstructs_state(self, client, audit_workspace):
        http, state = client
        judged = state.judged_ids()
        fresh = AuditState(audit_workspace, round_id=1)
        assert fresh.judged_ids() == judged

    def test_invalid_outcome_422(self, client):
        http, _ = client
        r = http.post("/api/verdicts", json={"clip_id": "x", "outcome": "meh"})
        assert r.status_code == 422


class TestAuth:
    def test_token_required_when_configured(self, audit_workspace):
        state = AuditState(audit_workspace, round_id=1, token="hunter2")
        http = TestClient(create_app(state))
        assert http.get("/api/plan").status_code == 401
        assert http.get("/api/plan", headers={"X-Auth-Token": "wrong"}).status_code == 401
        assert http.get("/api/plan", headers={"X-Auth-Token": "hunter2"}).status_code == 200
