import json
import subprocess
import sys

import numpy as np
import pytest

from cskl.cli import main
from cskl.core import DiracMixture, FeatureKind, FeatureScheme
from cskl.evaluation import baseline_exact_pca
from cskl.experiment import read_results, success_rates
from cskl.frequencies import draw_frequencies
from cskl.io import dump_json, model_to_dict, read_sketch, write_csv_dataset, write_sketch
from cskl.sketching import as_sketch, model_sketch


@pytest.fixture
def blobs(tmp_path):
    r = np.random.default_rng(0)
    X = np.concatenate([r.normal(-3, 0.5, (200, 2)), r.normal(3, 0.5, (200, 2))])
    r.shuffle(X)
    write_csv_dataset(tmp_path / "all.csv", X)
    write_csv_dataset(tmp_path / "a.csv", X[:150])
    write_csv_dataset(tmp_path / "b.csv", X[150:])
    return tmp_path


SK = ["--task", "kmeans", "--m", "32", "--lambda", "0.7", "--seed", "3"]


class TestSketchCommand:
    def test_shape_and_count(self, tmp_path, capsys):
        write_csv_dataset(tmp_path / "d.csv", np.arange(6.0).reshape(3, 2))
        assert main(["sketch", str(tmp_path / "d.csv"), "-o", str(tmp_path / "s"), "--task", "kmeans",
                     "--m", "8", "--lambda", "1"]) == 0
        scheme, sk = read_sketch(tmp_path / "s")
        assert sk.values.shape == (8,) and np.iscomplexobj(sk.values) and sk.count == 3
        out = capsys.readouterr().out
        assert "m=8" in out and "n=3" in out and scheme.fingerprint().hex() in out

    def test_byte_identical(self, blobs):
        for name in ("s1", "s2"):
            assert main(["sketch", str(blobs / "all.csv"), "-o", str(blobs / name)] + SK) == 0
        assert (blobs / "s1").read_bytes() == (blobs / "s2").read_bytes()

    def test_merge_equals_whole(self, blobs):
        for part in ("a", "b", "all"):
            assert main(["sketch", str(blobs / f"{part}.csv"), "-o", str(blobs / f"{part}.sk")] + SK) == 0
        assert main(["merge", str(blobs / "a.sk"), str(blobs / "b.sk"), "-o", str(blobs / "ab.sk")]) == 0
        _, whole = read_sketch(blobs / "all.sk")
        _, merged = read_sketch(blobs / "ab.sk")
        assert merged.count == whole.count
        np.testing.assert_allclose(merged.values, whole.values, rtol=1e-12)

    def test_epsilon_sets_lambda(self, blobs):
        assert main(["sketch", str(blobs / "a.csv"), "-o", str(blobs / "e.sk"), "--task", "kmeans",
                     "--m", "8", "--epsilon", "2.0", "--k", "2"]) == 0
        from cskl.kernels import lambda_for_separation

        assert read_sketch(blobs / "e.sk")[0].lam == pytest.approx(lambda_for_separation(2.0, 2))

    def test_gmm_covariance_file(self, blobs):
        np.savetxt(blobs / "cov.csv", np.array([[2.0, 0.0], [0.0, 1.0]]), delimiter=",")
        assert main(["sketch", str(blobs / "a.csv"), "-o", str(blobs / "g.sk"), "--task", "gmm", "--m", "8",
                     "--lambda", "0.5", "--covariance", str(blobs / "cov.csv")]) == 0
        np.testing.assert_array_equal(read_sketch(blobs / "g.sk")[0].covariance, np.diag([2.0, 1.0]))


class TestLearnEval:
    def test_learn_noiseless_dirac(self, tmp_path):
        scheme = FeatureScheme(FeatureKind.WEIGHTED_FOURIER, 2, 16, lam=1.0, seed=4)
        freq = draw_frequencies(scheme)
        c = np.array([0.7, -1.3])
        write_sketch(tmp_path / "s", scheme, as_sketch(model_sketch(DiracMixture(c[None], np.ones(1)), freq), freq))
        assert main(["learn", str(tmp_path / "s"), "--task", "kmeans", "--k", "1", "--radius", "3",
                     "-o", str(tmp_path / "m.json")]) == 0
        doc = json.loads((tmp_path / "m.json").read_text())
        assert np.linalg.norm(np.array(doc["parameters"]["centroids"][0]) - c) <= 1e-6
        assert doc["schema_version"] == 1 and doc["wall_clock"] is None
        assert doc["decoder_options"]["k"] == 1

    def test_learn_and_eval_clustering(self, blobs, capsys):
        main(["sketch", str(blobs / "all.csv"), "-o", str(blobs / "s")] + SK)
        assert main(["learn", str(blobs / "s"), "--task", "kmeans", "--k", "2", "--radius", "5",
                     "-o", str(blobs / "m.json")]) == 0
        capsys.readouterr()
        assert main(["eval", str(blobs / "m.json"), str(blobs / "all.csv")]) == 0
        report = json.loads(capsys.readouterr().out)
        assert report["task"] == "kmeans" and report["risk"] < 1.0

    def test_eval_exact_pca(self, tmp_path, capsys):
        X = np.random.default_rng(1).normal(size=(50, 2)) @ np.random.default_rng(2).normal(size=(2, 5))
        write_csv_dataset(tmp_path / "d.csv", X)
        sub = baseline_exact_pca(X, 2)
        dump_json(tmp_path / "m.json", model_to_dict("pca", (X.T @ X / 50, sub), 0.0))
        assert main(["eval", str(tmp_path / "m.json"), str(tmp_path / "d.csv")]) == 0
        assert json.loads(capsys.readouterr().out)["risk"] <= 1e-10

    def test_learn_pca(self, tmp_path):
        X = np.random.default_rng(1).normal(size=(80, 4))
        write_csv_dataset(tmp_path / "d.csv", X)
        assert main(["sketch", str(tmp_path / "d.csv"), "-o", str(tmp_path / "s"), "--task", "pca", "--m", "30"]) == 0
        assert main(["learn", str(tmp_path / "s"), "--task", "pca", "--k", "2", "-o", str(tmp_path / "m.json")]) == 0
        doc = json.loads((tmp_path / "m.json").read_text())
        B = np.array(doc["parameters"]["basis"])
        np.testing.assert_allclose(B.T @ B, np.eye(2), atol=1e-10)


class TestExitCodes:
    def test_fingerprint_mismatch(self, blobs):
        main(["sketch", str(blobs / "a.csv"), "-o", str(blobs / "a.sk")] + SK)
        main(["sketch", str(blobs / "b.csv"), "-o", str(blobs / "b.sk"), "--task", "kmeans", "--m", "32",
              "--lambda", "0.7", "--seed", "4"])
        assert main(["merge", str(blobs / "a.sk"), str(blobs / "b.sk"), "-o", str(blobs / "x")]) == 2

    def test_io_errors(self, tmp_path):
        assert main(["sketch", str(tmp_path / "missing.csv"), "-o", str(tmp_path / "s")] + SK) == 1
        (tmp_path / "bad.csv").write_text("1,2\n3\n")
        assert main(["sketch", str(tmp_path / "bad.csv"), "-o", str(tmp_path / "s")] + SK) == 1
        (tmp_path / "junk").write_bytes(b"not a sketch")
        assert main(["learn", str(tmp_path / "junk"), "--task", "kmeans", "--k", "1", "--radius", "1",
                     "-o", str(tmp_path / "m")]) == 1

    def test_task_scheme_pairing(self, blobs):
        main(["sketch", str(blobs / "a.csv"), "-o", str(blobs / "a.sk")] + SK)
        assert main(["learn", str(blobs / "a.sk"), "--task", "gmm", "--k", "1", "--radius", "1",
                     "-o", str(blobs / "m")]) == 1

    def test_usage_error_code(self):
        with pytest.raises(SystemExit) as exc:
            main(["sketch"])
        assert exc.value.code == 1

    def test_numerical_failure(self, tmp_path):
        grid = {"task": "kmeans", "d_values": [2], "k_values": [3], "m_values": [6], "trials": 1, "n": 50,
                "data_radius": 0.1, "separation": 4.0}
        (tmp_path / "g.json").write_text(json.dumps(grid))
        assert main(["experiment", str(tmp_path / "g.json"), "-o", str(tmp_path / "r.csv")]) == 3

    def test_module_entry_point(self, tmp_path):
        r = subprocess.run([sys.executable, "-m", "cskl", "merge", str(tmp_path / "nope"), str(tmp_path / "nope2"),
                            "-o", str(tmp_path / "x")], capture_output=True, text=True)
        assert r.returncode == 1 and "cskl: error" in r.stderr


class TestExperiment:
    GRID = {"task": "kmeans", "d_values": [2], "k_values": [3], "m_values": [6, 30], "trials": 3, "n": 2000,
            "seed": 1, "restarts": 4}

    def test_resume_matches_uninterrupted(self, tmp_path):
        (tmp_path / "g.json").write_text(json.dumps(self.GRID))
        assert main(["experiment", str(tmp_path / "g.json"), "-o", str(tmp_path / "full.csv")]) == 0
        full = (tmp_path / "full.csv").read_text()
        lines = full.splitlines(keepends=True)
        assert lines[0] == "d,k,m,trial,success,risk,baseline_risk,runtime\n"
        assert len(lines) == 1 + 6
        (tmp_path / "part.csv").write_text("".join(lines[:3]))
        assert main(["experiment", str(tmp_path / "g.json"), "-o", str(tmp_path / "part.csv")]) == 0
        assert (tmp_path / "part.csv").read_text() == full

    def test_parallel_matches_serial(self, tmp_path):
        (tmp_path / "g.json").write_text(json.dumps(self.GRID))
        main(["experiment", str(tmp_path / "g.json"), "-o", str(tmp_path / "a.csv"), "--jobs", "1"])
        main(["experiment", str(tmp_path / "g.json"), "-o", str(tmp_path / "b.csv"), "--jobs", "2"])
        assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()

    def test_timing_column(self, tmp_path):
        grid = dict(self.GRID, m_values=[6], trials=1)
        (tmp_path / "g.json").write_text(json.dumps(grid))
        main(["experiment", str(tmp_path / "g.json"), "-o", str(tmp_path / "r.csv"), "--timing"])
        assert float(read_results(tmp_path / "r.csv")[0]["runtime"]) > 0

    @pytest.mark.slow
    def test_phase_transition_monotone(self, tmp_path):
        grid = {"task": "kmeans", "d_values": [2], "k_values": [3], "m_factors": [1, 5, 10], "trials": 20,
                "n": 10_000, "seed": 0}
        (tmp_path / "g.json").write_text(json.dumps(grid))
        assert main(["experiment", str(tmp_path / "g.json"), "-o", str(tmp_path / "r.csv")]) == 0
        rates = [v for _, v in sorted(success_rates(read_results(tmp_path / "r.csv")).items())]
        assert rates == sorted(rates)
