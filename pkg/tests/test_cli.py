import json

import numpy as np
import pytest

from qmdp.classical import FiniteMDP, value_iteration
from qmdp.cli import main
from qmdp.embedding import embed_model
from qmdp.serialize import embedded_model_to_json, mdp_to_json, qomdp_to_json

from helpers import random_mdp


def write(tmp_path, name, doc):
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return str(path)


def load(path):
    with open(path) as fh:
        return json.load(fh)


class TestSolveClassical:
    def test_geometric_series(self, tmp_path, capsys):
        doc = mdp_to_json(FiniteMDP(p=np.ones((1, 1, 1)), c=np.array([[1.0]]), beta=0.9))
        out = str(tmp_path / "report.json")
        code = main(["solve-classical", "--input", write(tmp_path, "m.json", doc), "--output", out])
        assert code == 0
        report = load(out)
        assert abs(report["values"][0] - 10.0) < 1e-6

    def test_zero_cost(self, tmp_path):
        mdp = random_mdp(3, 2, 0.9, np.random.default_rng(0))
        doc = mdp_to_json(FiniteMDP(p=mdp.p, c=np.zeros((3, 2)), beta=0.9))
        out = str(tmp_path / "report.json")
        assert main(["solve-classical", "--input", write(tmp_path, "m.json", doc), "--output", out]) == 0
        assert all(abs(v) < 1e-9 for v in load(out)["values"])

    def test_matches_library_bit_for_bit(self, tmp_path):
        mdp = random_mdp(4, 3, 0.9, np.random.default_rng(1))
        out = str(tmp_path / "report.json")
        code = main([
            "solve-classical", "--input", write(tmp_path, "m.json", mdp_to_json(mdp)),
            "--eps", "1e-7", "--output", out,
        ])
        assert code == 0
        values, policy = value_iteration(mdp, 1e-7)
        report = load(out)
        assert report["values"] == [float(v) for v in values]
        assert report["policy"] == [int(a) for a in policy]


class TestValidate:
    def test_identity_channel_passes(self, tmp_path):
        doc = {"in_dim": 2, "out_dim": 2, "kraus": [[[[1, 0], [0, 0]], [[0, 0], [1, 0]]]]}
        assert main(["validate", "--input", write(tmp_path, "ch.json", doc)]) == 0

    def test_double_identity_exits_one_with_residual(self, tmp_path):
        eye = [[[1, 0], [0, 0]], [[0, 0], [1, 0]]]
        doc = {"in_dim": 2, "out_dim": 2, "kraus": [eye, eye]}
        out = str(tmp_path / "report.json")
        code = main(["validate", "--input", write(tmp_path, "ch.json", doc), "--output", out])
        assert code == 1
        residual = load(out)["objects"][0]["checks"]["completeness_residual"]
        assert abs(residual - np.sqrt(2.0)) < 1e-12

    def test_embed_output_validates_clean(self, tmp_path):
        mdp_path = write(tmp_path, "m.json", mdp_to_json(random_mdp(3, 2, 0.9, np.random.default_rng(2))))
        emb_path = str(tmp_path / "emb.json")
        assert main(["embed", "--input", mdp_path, "--output", emb_path]) == 0
        model_path = write(tmp_path, "model.json", load(emb_path)["model"])
        assert main(["validate", "--input", model_path]) == 0

    def test_unparseable_file_exits_two(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text("{not json")
        assert main(["validate", "--input", str(bad)]) == 2

    def test_missing_file_exits_two(self):
        assert main(["validate", "--input", "/nonexistent/nope.json"]) == 2


class TestSolveQmdp:
    def test_classical_sources_match_classical_solver(self, tmp_path):
        mdp = random_mdp(3, 2, 0.9, np.random.default_rng(3), deterministic=True)
        model_path = write(tmp_path, "emb.json", embedded_model_to_json(embed_model(mdp)))
        out = str(tmp_path / "report.json")
        code = main([
            "solve-qmdp", "--input", model_path, "--n", "1", "--seed", "4",
            "--eps", "2.5e-7", "--sources", "classical", "--output", out,
        ])
        assert code == 0
        report = load(out)
        values, _ = value_iteration(mdp, 2.5e-7)
        # basis states occupy the first grid indices by construction
        for x in range(3):
            assert abs(report["grid_values"][x] - values[x]) <= 1e-6

    def test_single_channel_net_equals_rollout(self, tmp_path):
        from qmdp.policies import MarkovQuantumPolicy
        from qmdp.solver import rollout

        p = np.ones((1, 1, 1))
        mdp = FiniteMDP(p=p, c=np.array([[0.7]]), beta=0.9)
        em = embed_model(mdp)
        model_path = write(tmp_path, "emb.json", embedded_model_to_json(em))
        out = str(tmp_path / "report.json")
        code = main([
            "solve-qmdp", "--input", model_path, "--n", "1", "--seed", "5",
            "--sources", "classical", "--output", out,
        ])
        assert code == 0
        report = load(out)
        assert report["net_size"] == 1
        from qmdp.embedding import embed_classical_policy

        gamma = embed_classical_policy(np.ones((1, 1)))
        roll = rollout(
            MarkovQuantumPolicy(tail=gamma), em.transition_channel, em.cost,
            __import__("qmdp").DensityOperator.basis_state(1, 0), 0.9, 600,
        )
        assert abs(report["grid_values"][0] - roll.value) <= 1e-5

    def test_nonconvergence_exits_three(self, tmp_path):
        mdp = random_mdp(2, 2, 0.9, np.random.default_rng(5))
        model_path = write(tmp_path, "emb.json", embedded_model_to_json(embed_model(mdp)))
        code = main([
            "solve-qmdp", "--input", model_path, "--n", "1", "--seed", "6",
            "--max-iters", "1",
        ])
        assert code == 3

    def test_missing_seed_is_usage_error(self, tmp_path):
        mdp = random_mdp(2, 2, 0.9, np.random.default_rng(6))
        model_path = write(tmp_path, "emb.json", embedded_model_to_json(embed_model(mdp)))
        with pytest.raises(SystemExit) as err:
            main(["solve-qmdp", "--input", model_path, "--n", "1"])
        assert err.value.code == 2

    def test_rerun_byte_identical(self, tmp_path):
        mdp = random_mdp(2, 2, 0.9, np.random.default_rng(7))
        model_path = write(tmp_path, "emb.json", embedded_model_to_json(embed_model(mdp)))
        out1, out2 = str(tmp_path / "a.json"), str(tmp_path / "b.json")
        args = ["solve-qmdp", "--input", model_path, "--n", "2", "--seed", "8"]
        assert main(args + ["--output", out1]) == 0
        assert main(args + ["--output", out2]) == 0
        assert open(out1, "rb").read() == open(out2, "rb").read()


class TestSolveQomdp:
    def make_model_doc(self):
        from qmdp.approximation import build_channel_net, build_finite_action_qmdp

        mdp = random_mdp(2, 2, 0.9, np.random.default_rng(8))
        net = build_channel_net(2, 2, 1, seed=9)
        return qomdp_to_json(build_finite_action_qmdp(embed_model(mdp), net))

    def test_trend_table_and_determinism(self, tmp_path):
        model_path = write(tmp_path, "q.json", self.make_model_doc())
        out1, out2 = str(tmp_path / "a.json"), str(tmp_path / "b.json")
        args = [
            "solve-qomdp", "--input", model_path, "--n", "1,2", "--seed", "10",
            "--traj", "64", "--horizon", "40",
        ]
        assert main(args + ["--output", out1]) == 0
        assert main(args + ["--output", out2]) == 0
        assert open(out1, "rb").read() == open(out2, "rb").read()
        report = load(out1)
        assert [run["n"] for run in report["runs"]] == [1, 2]
        assert len(report["trend"]) == 2


class TestStatePrep:
    def test_report_shape_and_determinism(self, tmp_path):
        out1, out2 = str(tmp_path / "a.json"), str(tmp_path / "b.json")
        args = [
            "state-prep", "--dim-x", "2", "--dim-a", "2", "--target", "0",
            "--n", "1", "--seed", "11", "--horizon", "50",
        ]
        assert main(args + ["--output", out1]) == 0
        assert main(args + ["--output", out2]) == 0
        assert open(out1, "rb").read() == open(out2, "rb").read()
        report = load(out1)
        assert len(report["fidelities"]) == 50
        assert all(0.0 - 1e-12 <= c <= 1.0 + 1e-12 for c in report["rollout"]["stage_costs"])

    def test_vector_target_cli_parsing(self, tmp_path):
        target = json.dumps([[1 / np.sqrt(2), 0.0], [1 / np.sqrt(2), 0.0]])
        code = main([
            "state-prep", "--dim-x", "2", "--dim-a", "2", "--target", target,
            "--n", "1", "--seed", "12", "--horizon", "20",
        ])
        assert code == 0

    def test_bad_target_exits_two(self):
        code = main([
            "state-prep", "--dim-x", "2", "--dim-a", "2", "--target", "9",
            "--n", "1", "--seed", "13",
        ])
        assert code == 2
