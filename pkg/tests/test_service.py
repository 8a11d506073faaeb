import numpy as np
import pytest
from fastapi.testclient import TestClient

from qmdp.serialize import embedded_model_to_json, mdp_to_json, qomdp_to_json
from qmdp.embedding import embed_model
from qmdp.service import create_app

from helpers import random_mdp


@pytest.fixture(scope="module")
def client():
    return TestClient(create_app())


@pytest.fixture(scope="module")
def mdp_doc():
    return mdp_to_json(random_mdp(3, 2, 0.9, np.random.default_rng(0)))


def test_health(client):
    response = client.get("/health")
    assert response.status_code == 200
    assert response.json() == {"status": "ok"}


class TestValidateEndpoint:
    def test_good_channel(self, client):
        doc = {"in_dim": 2, "out_dim": 2, "kraus": [[[[1, 0], [0, 0]], [[0, 0], [1, 0]]]]}
        response = client.post("/validate", json={"document": doc})
        assert response.status_code == 200
        body = response.json()
        assert body["passed"] and body["objects"][0]["kind"] == "channel"

    def test_double_identity_fails_in_body(self, client):
        eye = [[[1, 0], [0, 0]], [[0, 0], [1, 0]]]
        doc = {"in_dim": 2, "out_dim": 2, "kraus": [eye, eye]}
        response = client.post("/validate", json={"document": doc})
        assert response.status_code == 200
        body = response.json()
        assert not body["passed"]
        residual = body["objects"][0]["checks"]["completeness_residual"]
        assert abs(residual - np.sqrt(2.0)) < 1e-12

    def test_unknown_schema_is_400(self, client):
        response = client.post("/validate", json={"document": {"nonsense": 1}})
        assert response.status_code == 400

    def test_mixed_object_list(self, client, mdp_doc):
        density = {"dim": 2, "matrix": [[[0.5, 0.0], [0.0, 0.0]], [[0.0, 0.0], [0.5, 0.0]]]}
        response = client.post("/validate", json={"document": {"objects": [density, mdp_doc]}})
        assert response.status_code == 200
        assert response.json()["passed"]


class TestSolveClassicalEndpoint:
    def test_happy_path_matches_library(self, client, mdp_doc):
        from qmdp.classical import value_iteration
        from qmdp.serialize import mdp_from_json

        response = client.post("/solve-classical", json={"mdp": mdp_doc, "eps": 1e-6})
        assert response.status_code == 200
        body = response.json()
        values, policy = value_iteration(mdp_from_json(mdp_doc), 1e-6)
        assert body["values"] == [float(v) for v in values]
        assert body["policy"] == [int(a) for a in policy]

    def test_parse_error_is_400(self, client):
        response = client.post("/solve-classical", json={"mdp": {"p": []}})
        assert response.status_code == 400

    def test_invariant_error_is_422(self, client, mdp_doc):
        bad = dict(mdp_doc)
        bad["beta"] = 1.5
        response = client.post("/solve-classical", json={"mdp": bad})
        assert response.status_code == 422


class TestEmbedEndpoint:
    def test_embed_then_validate_closes_loop(self, client, mdp_doc):
        response = client.post("/embed", json={"mdp": mdp_doc})
        assert response.status_code == 200
        model = response.json()["model"]
        check = client.post("/validate", json={"document": model})
        assert check.status_code == 200 and check.json()["passed"]


class TestSolveQmdpEndpoint:
    def test_solve_and_nonconvergence(self, client):
        mdp = random_mdp(2, 2, 0.9, np.random.default_rng(1), deterministic=True)
        model_doc = embedded_model_to_json(embed_model(mdp))
        request = {"model": model_doc, "n": 1, "seed": 5, "sources": ["classical"]}
        response = client.post("/solve-qmdp", json=request)
        assert response.status_code == 200
        body = response.json()
        assert body["converged"] and body["net_size"] == 4
        capped = dict(request, max_iters=1)
        response = client.post("/solve-qmdp", json=capped)
        assert response.status_code == 409
        assert response.json()["error"] == "non-convergence"

    def test_missing_seed_rejected_by_model(self, client):
        mdp = random_mdp(2, 2, 0.9, np.random.default_rng(2))
        model_doc = embedded_model_to_json(embed_model(mdp))
        response = client.post("/solve-qmdp", json={"model": model_doc, "n": 1})
        assert response.status_code == 422  # pydantic: seed is required

    def test_unknown_source_is_400(self, client):
        mdp = random_mdp(2, 2, 0.9, np.random.default_rng(3))
        model_doc = embedded_model_to_json(embed_model(mdp))
        response = client.post(
            "/solve-qmdp", json={"model": model_doc, "n": 1, "seed": 1, "sources": ["bogus"]}
        )
        assert response.status_code == 400


class TestSolveQomdpEndpoint:
    def test_runs_and_trend(self, client):
        from qmdp.approximation import build_channel_net, build_finite_action_qmdp

        mdp = random_mdp(2, 2, 0.9, np.random.default_rng(4))
        net = build_channel_net(2, 2, 1, seed=6)
        qom = build_finite_action_qmdp(embed_model(mdp), net)
        request = {
            "model": qomdp_to_json(qom),
            "n": [1, 2],
            "seed": 7,
            "traj": 64,
            "horizon": 40,
        }
        response = client.post("/solve-qomdp", json=request)
        assert response.status_code == 200
        body = response.json()
        assert len(body["runs"]) == 2 and len(body["trend"]) == 2
        assert body["trend"][-1]["gap_to_finest"] == 0.0


class TestStatePrepEndpoint:
    def test_basis_target(self, client):
        request = {"dim_x": 2, "dim_a": 2, "target": 0, "n": 1, "seed": 9, "horizon": 60}
        response = client.post("/state-prep", json=request)
        assert response.status_code == 200
        body = response.json()
        assert len(body["fidelities"]) == 60
        assert all(0.0 <= 1.0 - f <= 1.0 + 1e-9 for f in body["fidelities"])
        assert body["rollout"]["value"] <= body["baseline"]["value"] + 1e-6

    def test_vector_target(self, client):
        target = [[1 / np.sqrt(2), 0.0], [1 / np.sqrt(2), 0.0]]
        request = {"dim_x": 2, "dim_a": 2, "target": target, "n": 1, "seed": 9, "horizon": 30}
        response = client.post("/state-prep", json=request)
        assert response.status_code == 200

    def test_bad_target_index_is_400(self, client):
        request = {"dim_x": 2, "dim_a": 2, "target": 7, "n": 1, "seed": 9}
        response = client.post("/state-prep", json=request)
        assert response.status_code == 400
