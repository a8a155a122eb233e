import csv
import json
import os

import numpy as np
import pytest

from pxg.cli import main
from pxg.traceio import load_trace


def _read_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    sim = root / "sim"
    assert main(["simulate", "--example", "1", "--n-per", "8",
                 "--seed", "3", "--out", str(sim)]) == 0
    fit = root / "fit"
    assert main(["fit", "--y", str(sim / "Y.csv"), "--x", str(sim / "X.csv"),
                 "--backend", "gwishart", "--iters", "30", "--burn", "10",
                 "--seed", "11", "--out", str(fit)]) == 0
    pooled = root / "pooled"
    assert main(["fit", "--y", str(sim / "Y.csv"), "--x", str(sim / "X.csv"),
                 "--backend", "gwishart", "--iters", "20", "--burn", "5",
                 "--seed", "12", "--pooled", "--out", str(pooled)]) == 0
    return root


class TestSimulate:
    def test_outputs(self, workdir):
        sim = workdir / "sim"
        header, rows = _read_csv(sim / "Y.csv")
        assert header == ["y1", "y2", "y3"]
        assert len(rows) == 24
        header, rows = _read_csv(sim / "X.csv")
        assert header == ["x1"]
        assert len(rows) == 24
        truth = json.loads((sim / "truth.json").read_text())
        assert truth["example"] == 1 and truth["seed"] == 3
        assert len(truth["labels"]) == 24
        assert sorted(set(truth["labels"])) == [1, 2, 3]
        obs = truth["observations"][0]
        assert obs["obs"] == 1
        assert all(1 <= s < t <= 3 for s, t in obs["edges"])
        assert np.asarray(obs["omega"]).shape == (3, 3)

    def test_rerun_byte_identical(self, workdir, tmp_path):
        again = tmp_path / "sim2"
        assert main(["simulate", "--example", "1", "--n-per", "8",
                     "--seed", "3", "--out", str(again)]) == 0
        for name in ("Y.csv", "X.csv", "truth.json"):
            assert (again / name).read_bytes() == \
                (workdir / "sim" / name).read_bytes()

    def test_example3_shape_flags(self, tmp_path):
        out = tmp_path / "sim3"
        assert main(["simulate", "--example", "3", "--n-per", "5", "--q", "6",
                     "--p", "2", "--sparsity", "0.2", "--seed", "1",
                     "--out", str(out)]) == 0
        header, rows = _read_csv(out / "Y.csv")
        assert len(header) == 6 and len(rows) == 10


class TestFit:
    def test_manifest_and_loglik(self, workdir):
        fit = workdir / "fit"
        manifest = json.loads((fit / "manifest.json").read_text())
        assert manifest["backend"] == "gwishart"
        assert manifest["pooled"] is False
        assert manifest["version"].startswith("pxg-")
        assert manifest["schedule"] == {"iterations": 30, "burn_in": 10, "thin": 1}
        assert manifest["n"] == 24 and manifest["q"] == 3 and manifest["p"] == 1
        assert manifest["summary_stats"]["n_retained"] == 20
        assert np.isfinite(manifest["summary_stats"]["mean_loglik_y"])
        header, rows = _read_csv(fit / "loglik.csv")
        assert header == ["iteration", "loglik_y", "loglik_x"]
        assert [int(r[0]) for r in rows] == list(range(11, 31))
        trace = load_trace(fit / "trace.bin")
        assert trace.n_draws == 20

    def test_rerun_byte_identical(self, workdir, tmp_path):
        sim = workdir / "sim"
        again = tmp_path / "fit2"
        assert main(["fit", "--y", str(sim / "Y.csv"), "--x", str(sim / "X.csv"),
                     "--backend", "gwishart", "--iters", "30", "--burn", "10",
                     "--seed", "11", "--out", str(again)]) == 0
        for name in ("trace.bin", "loglik.csv"):
            assert (again / name).read_bytes() == \
                (workdir / "fit" / name).read_bytes()
        m1 = json.loads((workdir / "fit" / "manifest.json").read_text())
        m2 = json.loads((again / "manifest.json").read_text())
        assert m1["summary_stats"] == m2["summary_stats"]

    def test_threads_do_not_change_draws(self, workdir, tmp_path):
        sim = workdir / "sim"
        out = tmp_path / "fit_mt"
        assert main(["fit", "--y", str(sim / "Y.csv"), "--x", str(sim / "X.csv"),
                     "--backend", "gwishart", "--iters", "30", "--burn", "10",
                     "--seed", "11", "--threads", "2", "--out", str(out)]) == 0
        t1 = load_trace(workdir / "fit" / "trace.bin")
        t2 = load_trace(out / "trace.bin")
        assert np.array_equal(t1.omegas, t2.omegas)
        assert np.array_equal(t1.z, t2.z)

    def test_center_flag_removes_offset(self, workdir, tmp_path):
        sim = workdir / "sim"
        Y = np.loadtxt(sim / "Y.csv", delimiter=",", skiprows=1)
        shifted = tmp_path / "Yshift.csv"
        with open(shifted, "w") as fh:
            fh.write("y1,y2,y3\n")
            np.savetxt(fh, Y + 5.0, delimiter=",", fmt="%.17g")
        out1, out2 = tmp_path / "c1", tmp_path / "c2"
        base = ["--x", str(sim / "X.csv"), "--backend", "gwishart",
                "--iters", "6", "--burn", "1", "--seed", "4", "--center"]
        assert main(["fit", "--y", str(sim / "Y.csv"), *base,
                     "--out", str(out1)]) == 0
        assert main(["fit", "--y", str(shifted), *base,
                     "--out", str(out2)]) == 0
        a = load_trace(out1 / "trace.bin")
        b = load_trace(out2 / "trace.bin")
        # the two centered inputs agree up to CSV round-trip noise
        assert np.allclose(a.Y, b.Y, atol=1e-13)
        assert np.max(np.abs(a.Y.mean(axis=0))) < 1e-13
        assert np.max(np.abs(b.Y.mean(axis=0))) < 1e-13

    def test_pooled_manifest(self, workdir):
        manifest = json.loads((workdir / "pooled" / "manifest.json").read_text())
        assert manifest["pooled"] is True
        trace = load_trace(workdir / "pooled" / "trace.bin")
        assert trace.K == 1

    def test_missing_input_exits_2(self, workdir, tmp_path, capsys):
        sim = workdir / "sim"
        code = main(["fit", "--y", str(sim / "nope.csv"),
                     "--x", str(sim / "X.csv"), "--backend", "pseudo",
                     "--iters", "5", "--out", str(tmp_path / "o")])
        assert code == 2
        assert "nope.csv" in capsys.readouterr().err

    def test_bad_schedule_exits_2(self, workdir, tmp_path):
        sim = workdir / "sim"
        assert main(["fit", "--y", str(sim / "Y.csv"), "--x", str(sim / "X.csv"),
                     "--backend", "pseudo", "--iters", "5", "--burn", "5",
                     "--out", str(tmp_path / "o")]) == 2

    def test_row_mismatch_exits_2(self, workdir, tmp_path):
        sim = workdir / "sim"
        short = tmp_path / "Xshort.csv"
        lines = (sim / "X.csv").read_text().splitlines()
        short.write_text("\n".join(lines[:-2]) + "\n")
        assert main(["fit", "--y", str(sim / "Y.csv"), "--x", str(short),
                     "--backend", "pseudo", "--iters", "5",
                     "--out", str(tmp_path / "o")]) == 2

    def test_unknown_config_key_exits_2(self, workdir, tmp_path, capsys):
        sim = workdir / "sim"
        cfg = tmp_path / "cfg.json"
        cfg.write_text('{"no_such_key": 1}\n')
        code = main(["fit", "--y", str(sim / "Y.csv"), "--x", str(sim / "X.csv"),
                     "--backend", "pseudo", "--iters", "5",
                     "--config", str(cfg), "--out", str(tmp_path / "o")])
        assert code == 2
        assert "no_such_key" in capsys.readouterr().err

    def test_gwishart_size_gate(self, tmp_path, capsys):
        rng = np.random.default_rng(0)
        q = 16
        ypath = tmp_path / "Ybig.csv"
        xpath = tmp_path / "Xbig.csv"
        with open(ypath, "w") as fh:
            fh.write(",".join(f"y{j+1}" for j in range(q)) + "\n")
            np.savetxt(fh, rng.standard_normal((20, q)), delimiter=",", fmt="%.8g")
        with open(xpath, "w") as fh:
            fh.write("x1\n")
            np.savetxt(fh, rng.standard_normal((20, 1)), delimiter=",", fmt="%.8g")
        code = main(["fit", "--y", str(ypath), "--x", str(xpath),
                     "--backend", "gwishart", "--iters", "2",
                     "--out", str(tmp_path / "o")])
        assert code == 2
        assert "--force" in capsys.readouterr().err
        cfg = tmp_path / "cfg.json"
        cfg.write_text('{"K": 2, "alpha_g": 0.05}\n')
        assert main(["fit", "--y", str(ypath), "--x", str(xpath),
                     "--backend", "gwishart", "--iters", "2", "--burn", "1",
                     "--config", str(cfg), "--force",
                     "--out", str(tmp_path / "forced")]) == 0


@pytest.fixture(scope="module")
def summary(workdir):
    out = workdir / "summary"
    assert main(["summarize", "--trace", str(workdir / "fit" / "trace.bin"),
                 "--out", str(out)]) == 0
    return out


class TestSummarize:
    def test_allocation(self, summary):
        header, rows = _read_csv(summary / "allocation.csv")
        assert header == ["obs", "cluster"]
        assert [int(r[0]) for r in rows] == list(range(1, 25))
        assert all(int(r[1]) >= 1 for r in rows)

    def test_edge_probabilities(self, summary):
        header, rows = _read_csv(summary / "edge_prob.csv")
        assert header == ["obs", "s", "t", "prob"]
        assert len(rows) == 24 * 6  # ordered pairs s != t
        probs = {}
        for r in rows:
            obs, s, t, p = int(r[0]), int(r[1]), int(r[2]), float(r[3])
            assert s != t
            assert 0.0 <= p <= 1.0
            probs[(obs, s, t)] = p
        for (obs, s, t), p in probs.items():
            assert probs[(obs, t, s)] == p

    def test_precision_table(self, summary):
        header, rows = _read_csv(summary / "precision.csv")
        assert header == ["obs", "s", "t", "omega_hat", "partial_corr"]
        assert len(rows) == 24 * 9  # all pairs including the diagonal
        for r in rows:
            if r[1] == r[2]:
                assert float(r[4]) == 1.0
                assert float(r[3]) > 0.0

    def test_graphs_json(self, summary, workdir):
        data = json.loads((summary / "graphs.json").read_text())
        assert data["cutoff"] == 0.5
        members = sorted(m for c in data["clusters"] for m in c["members"])
        assert members == list(range(1, 25))
        for c in data["clusters"]:
            for s, t in c["edges"]:
                assert 1 <= s < t <= 3
            ps = [p for _, _, p in c["edge_probabilities"]]
            assert ps == sorted(ps, reverse=True)
            listed = {(s, t): p for s, t, p in c["edge_probabilities"]}
            for s, t in c["edges"]:
                assert listed[(s, t)] >= 0.5

    def test_cutoff_monotonicity(self, summary, workdir, tmp_path):
        strict = tmp_path / "strict"
        assert main(["summarize", "--trace", str(workdir / "fit" / "trace.bin"),
                     "--cutoff", "0.9", "--out", str(strict)]) == 0
        loose = json.loads((summary / "graphs.json").read_text())
        tight = json.loads((strict / "graphs.json").read_text())
        loose_edges = {(c["cluster"], tuple(e))
                       for c in loose["clusters"] for e in c["edges"]}
        tight_edges = {(c["cluster"], tuple(e))
                       for c in tight["clusters"] for e in c["edges"]}
        assert tight_edges <= loose_edges


class TestPredict:
    def _xnew(self, path, values):
        with open(path, "w") as fh:
            fh.write("x1\n")
            for v in values:
                fh.write(f"{v}\n")

    def test_output_table(self, workdir, tmp_path):
        xnew = tmp_path / "xnew.csv"
        self._xnew(xnew, [-0.5, 0.0, 0.5])
        out = tmp_path / "pred"
        assert main(["predict", "--trace", str(workdir / "fit" / "trace.bin"),
                     "--xnew", str(xnew), "--out", str(out)]) == 0
        header, rows = _read_csv(out / "predictions.csv")
        assert header == ["row", "s", "t", "prob", "omega_hat", "partial_corr"]
        assert len(rows) == 3 * 9
        for r in rows:
            assert 0.0 <= float(r[3]) <= 1.0 or r[1] == r[2]

    def test_sampled_mode_deterministic(self, workdir, tmp_path):
        xnew = tmp_path / "xnew.csv"
        self._xnew(xnew, [0.1])
        o1, o2 = tmp_path / "p1", tmp_path / "p2"
        args = ["predict", "--trace", str(workdir / "fit" / "trace.bin"),
                "--xnew", str(xnew), "--mode", "sampled", "--seed", "9"]
        assert main([*args, "--out", str(o1)]) == 0
        assert main([*args, "--out", str(o2)]) == 0
        assert (o1 / "predictions.csv").read_bytes() == \
            (o2 / "predictions.csv").read_bytes()

    def test_sampled_near_rb(self, workdir, tmp_path):
        xnew = tmp_path / "xnew.csv"
        self._xnew(xnew, [0.2])
        orb, osa = tmp_path / "rb", tmp_path / "sa"
        base = ["predict", "--trace", str(workdir / "fit" / "trace.bin"),
                "--xnew", str(xnew)]
        assert main([*base, "--out", str(orb)]) == 0
        assert main([*base, "--mode", "sampled", "--seed", "2",
                     "--out", str(osa)]) == 0
        _, rb_rows = _read_csv(orb / "predictions.csv")
        _, sa_rows = _read_csv(osa / "predictions.csv")
        tol = 3 * np.sqrt(0.25 / 20) + 1e-9  # 20 retained draws
        for a, b in zip(rb_rows, sa_rows):
            if a[1] != a[2]:
                assert abs(float(a[3]) - float(b[3])) < tol

    def test_empty_xnew(self, workdir, tmp_path):
        xnew = tmp_path / "empty.csv"
        xnew.write_text("x1\n")
        out = tmp_path / "pe"
        assert main(["predict", "--trace", str(workdir / "fit" / "trace.bin"),
                     "--xnew", str(xnew), "--out", str(out)]) == 0
        header, rows = _read_csv(out / "predictions.csv")
        assert header == ["row", "s", "t", "prob", "omega_hat", "partial_corr"]
        assert rows == []

    def test_column_mismatch_exits_2(self, workdir, tmp_path):
        xnew = tmp_path / "wide.csv"
        xnew.write_text("x1,x2\n0.1,0.2\n")
        assert main(["predict", "--trace", str(workdir / "fit" / "trace.bin"),
                     "--xnew", str(xnew), "--out", str(tmp_path / "o")]) == 2


class TestDic:
    def test_without_pooled_companion(self, workdir, tmp_path):
        out = tmp_path / "dic"
        assert main(["dic", "--trace", str(workdir / "fit" / "trace.bin"),
                     "--out", str(out)]) == 0
        data = json.loads((out / "dic.json").read_text())
        assert np.isfinite(data["full"]) and np.isfinite(data["graph_only"])
        assert data["cov_only"] is None
        assert "--pooled" in data["cov_only_note"]

    def test_with_pooled_companion(self, workdir, tmp_path):
        out = tmp_path / "dic"
        assert main(["dic", "--trace", str(workdir / "fit" / "trace.bin"),
                     "--pooled-trace", str(workdir / "pooled" / "trace.bin"),
                     "--out", str(out)]) == 0
        data = json.loads((out / "dic.json").read_text())
        assert np.isfinite(data["cov_only"])
        assert "cov_only_note" not in data

    def test_non_pooled_companion_exits_2(self, workdir, tmp_path):
        assert main(["dic", "--trace", str(workdir / "fit" / "trace.bin"),
                     "--pooled-trace", str(workdir / "fit" / "trace.bin"),
                     "--out", str(tmp_path / "o")]) == 2

    def test_missing_trace_exits_2(self, tmp_path, capsys):
        assert main(["dic", "--trace", str(tmp_path / "none.bin"),
                     "--out", str(tmp_path / "o")]) == 2
        assert "none.bin" in capsys.readouterr().err
