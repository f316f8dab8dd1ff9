import json
import os

import numpy as np
import pytest

from nsm import io
from nsm.cli import main


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture
def small(tmp_path, capsys):
    x = tmp_path / "x.fvecs"
    code, _, _ = run(
        capsys, "synth", "--kind", "gaussian_mixture", "--param", "components=6", "--param", "per=50",
        "--param", "d=4", "--param", "sigma=1", "--param", "n_queries=30", "--seed", 1,
        "--out", x, "--labels", tmp_path / "lab.ivecs", "--queries", tmp_path / "q.fvecs",
    )
    assert code == 0
    return tmp_path


def test_knn_cluster_quality_chain(small, capsys):
    t = small
    assert run(capsys, "knn", "--data", t / "x.fvecs", "--k", 1, "--out", t / "nn.ivecs")[0] == 0
    assert io.read_ivecs(t / "nn.ivecs").shape == (300, 1)
    assert run(capsys, "knn", "--data", t / "x.fvecs", "--approx", "--clusters", 20, "--out", t / "nna.ivecs")[0] == 0
    code, _, _ = run(
        capsys, "cluster", "--data", t / "x.fvecs", "--algo", "spherical", "--t", 0.5, "--iters", 5,
        "--seed", 2, "--out", t / "a.ivecs", "--centroids", t / "c.fvecs",
    )
    assert code == 0
    meta = json.loads((t / "a.ivecs.json").read_text())
    assert meta["config"]["variant"] == "spherical" and meta["meta"]["seed"] == 2
    code, _, _ = run(
        capsys, "quality", "--data", t / "x.fvecs", "--assign", t / "a.ivecs", "--nn", t / "nn.ivecs",
        "--measures", "nsm,dunn,db,db-weighted", "--out", t / "rep.json",
    )
    assert code == 0
    rep = json.loads((t / "rep.json").read_text())
    assert set(rep) >= {"nsm", "dunn", "db", "db_weighted", "metadata"}


def test_quality_all_singletons(tmp_path, capsys):
    io.write_fvecs(tmp_path / "x.fvecs", np.array([[0.0], [1.0], [10.0], [11.0]]))
    io.write_assignment(tmp_path / "a.ivecs", [0, 1, 2, 3])
    run(capsys, "knn", "--data", tmp_path / "x.fvecs", "--out", tmp_path / "nn.ivecs")
    code, _, _ = run(
        capsys, "quality", "--data", tmp_path / "x.fvecs", "--assign", tmp_path / "a.ivecs",
        "--nn", tmp_path / "nn.ivecs", "--out", tmp_path / "r.json",
    )
    assert code == 0
    assert json.loads((tmp_path / "r.json").read_text())["nsm"] == 0.0


def test_point_nsm_and_ivf_eval(small, capsys):
    t = small
    run(capsys, "knn", "--data", t / "x.fvecs", "--k", 7, "--out", t / "nn7.ivecs")
    code, out, _ = run(capsys, "point-nsm", "--data", t / "x.fvecs", "--nn", t / "nn7.ivecs", "--radius", 8, "--sample", 0.1, "--out", t / "d.csv")
    assert code == 0 and set(json.loads(out)) == {"mean", "q0.1"}
    assert len(io.read_csv(t / "d.csv")) == 30
    run(capsys, "knn", "--data", t / "x.fvecs", "--queries", t / "q.fvecs", "--k", 10, "--out", t / "gt.ivecs")
    run(capsys, "cluster", "--data", t / "x.fvecs", "--clusters", 8, "--out", t / "a.ivecs", "--centroids", t / "c.fvecs")
    code, _, _ = run(
        capsys, "ivf-eval", "--data", t / "x.fvecs", "--queries", t / "q.fvecs", "--gt", t / "gt.ivecs",
        "--assign", t / "a.ivecs", "--centroids", t / "c.fvecs", "--k", "5,10", "--nprobe", "1..8", "--out", t / "acc.csv",
    )
    assert code == 0
    rows = io.read_csv(t / "acc.csv")
    assert len(rows) == 16
    full = [float(r["accuracy"]) for r in rows if r["nprobe"] == "8"]
    assert full == [1.0, 1.0]


def test_correlate_linear(tmp_path, capsys):
    io.write_csv(tmp_path / "t.csv", [{"x": v, "y": 2 * v + 1} for v in range(6)], ("x", "y"))
    code, _, _ = run(capsys, "correlate", "--table", tmp_path / "t.csv", "--x", "x", "--y", "y", "--out", tmp_path / "c.csv")
    assert code == 0
    assert float(io.read_csv(tmp_path / "c.csv")[0]["rho"]) == 1.0


def test_protocol_command(tmp_path, capsys):
    from nsm.synth import gaussian_mixture

    res = gaussian_mixture(components=40, per=250, sigma=1, sep=6, d=16, seed=0, intrinsic_dim=6, heterogeneity=0.5)
    io.write_fvecs(tmp_path / "g.fvecs", res.dataset.points)
    code, _, err = run(capsys, "protocol", "--data", tmp_path / "g.fvecs", "--seed", 0, "--out", tmp_path / "out")
    assert code == 0, err
    runs = io.read_csv(tmp_path / "out" / "runs.csv")
    corr = io.read_csv(tmp_path / "out" / "correlations.csv")
    for measure in ("nsm", "dunn", "db", "db_weighted"):
        for k in ("5", "10"):
            assert sum(1 for r in runs if r["k"] == k and r[measure] != "") == 8
            assert sum(1 for r in corr if r["k"] == k and r["measure"] == measure) == 1
    meta = json.loads((tmp_path / "out" / "metadata.json").read_text())
    assert meta["config"]["seed"] == 0 and "numpy" in meta["versions"]


def test_threads_do_not_change_output(small, capsys):
    t = small
    run(capsys, "--threads", 1, "cluster", "--data", t / "x.fvecs", "--clusters", 9, "--out", t / "a1.ivecs")
    run(capsys, "--threads", 3, "cluster", "--data", t / "x.fvecs", "--clusters", 9, "--out", t / "a3.ivecs")
    run(capsys, "--threads", 1, "knn", "--data", t / "x.fvecs", "--k", 4, "--out", t / "n1.ivecs")
    run(capsys, "--threads", 3, "knn", "--data", t / "x.fvecs", "--k", 4, "--out", t / "n3.ivecs")
    os.environ.pop("NSM_THREADS", None)
    assert (t / "a1.ivecs").read_bytes() == (t / "a3.ivecs").read_bytes()
    assert (t / "n1.ivecs").read_bytes() == (t / "n3.ivecs").read_bytes()


class TestExitCodes:
    def test_usage(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["knn"])
        assert exc.value.code == 2

    def test_format_error_leaves_no_output(self, tmp_path, capsys):
        (tmp_path / "bad.fvecs").write_bytes(b"\x02\x00\x00\x00\x00")
        code, _, err = run(capsys, "knn", "--data", tmp_path / "bad.fvecs", "--out", tmp_path / "o.ivecs")
        assert code == 3
        assert json.loads(err)["error"] == "TruncatedRecord"
        assert not (tmp_path / "o.ivecs").exists()

    def test_numeric_error(self, tmp_path, capsys):
        io.write_fvecs(tmp_path / "x.fvecs", np.array([[0.0], [1.0], [2.0]]))
        code, _, err = run(capsys, "knn", "--data", tmp_path / "x.fvecs", "--k", 5, "--out", tmp_path / "o.ivecs")
        assert code == 4 and json.loads(err)["error"] == "KTooLarge"

    def test_missing_file(self, tmp_path, capsys):
        code, _, err = run(capsys, "knn", "--data", tmp_path / "nope.fvecs", "--out", tmp_path / "o.ivecs")
        assert code == 3 and json.loads(err)["exit_code"] == 3

    def test_unknown_measure(self, tmp_path, capsys):
        io.write_fvecs(tmp_path / "x.fvecs", np.array([[0.0], [1.0], [2.0]]))
        io.write_assignment(tmp_path / "a.ivecs", [0, 0, 1])
        code, _, err = run(
            capsys, "quality", "--data", tmp_path / "x.fvecs", "--assign", tmp_path / "a.ivecs",
            "--measures", "silhouette", "--out", tmp_path / "r.json",
        )
        assert code == 4 and json.loads(err)["error"] == "UnknownMeasure"
