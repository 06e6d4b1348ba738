"""Command-line surface: flows, exit codes, output formats."""

import csv
import io
import json
from pathlib import Path

import numpy as np
import pytest
from click.testing import CliRunner

from artifact.cli import main


@pytest.fixture(scope="module")
def runner():
    return CliRunner()


@pytest.fixture(scope="module")
def trained_run(runner, tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    config = root / "glm.toml"
    out = root / "run"
    config.write_text(
        "schema_version = 1\n\n[experiment]\npreset = \"glm\"\nseed = 0\n"
        f"out = \"{out}\"\n"
    )
    res = runner.invoke(main, ["train", "--config", str(config)])
    assert res.exit_code == 0, res.output
    return root, config, out


def domain_points(run_dir, k=3):
    rows = list(csv.reader(open(run_dir / "model" / "domain.csv")))[1:]
    return [rows[i][0] for i in range(k)]


class TestTrainEval:
    def test_train_wrote_run_dir(self, trained_run):
        _, _, out = trained_run
        for name in ("resolved.json", "trainlog.csv", "potential.svg"):
            assert (out / name).exists()
        assert (out / "model" / "bins.csv").exists()

    def test_eval_emits_reports(self, runner, trained_run):
        _, _, out = trained_run
        res = runner.invoke(main, ["eval", "--run", str(out), "--acceptance"])
        assert res.exit_code == 0, res.output
        assert "within_bound=True" in res.output
        header = (out / "regret.csv").read_text().splitlines()[0]
        assert header.startswith("loss_id,omni_loss,best_name,best_loss,regret")
        assert (out / "indist.csv").exists()
        assert (out / "regret.svg").exists()

    def test_eval_reproducible_bytes(self, runner, trained_run, tmp_path):
        root, config, out = trained_run
        out2 = tmp_path / "run2"
        res = runner.invoke(main, ["train", "--config", str(config), "--out", str(out2)])
        assert res.exit_code == 0, res.output
        for res2 in (
            runner.invoke(main, ["eval", "--run", str(out)]),
            runner.invoke(main, ["eval", "--run", str(out2)]),
        ):
            assert res2.exit_code == 0, res2.output
        for name in ("regret.csv", "indist.csv", "trainlog.csv", "resolved.json", "potential.svg", "regret.svg"):
            assert (out / name).read_bytes() == (out2 / name).read_bytes(), name

    def test_train_requires_out_somewhere(self, runner, tmp_path):
        cfg = tmp_path / "no-out.toml"
        cfg.write_text('schema_version = 1\n\n[experiment]\npreset = "glm"\n')
        res = runner.invoke(main, ["train", "--config", str(cfg)])
        assert res.exit_code == 2

    def test_invalid_toml_syntax(self, runner, tmp_path):
        cfg = tmp_path / "broken.toml"
        cfg.write_text("schema_version = [unclosed\n")
        res = runner.invoke(main, ["train", "--config", str(cfg), "--out", str(tmp_path / "x")])
        assert res.exit_code == 2
        assert "TOML" in res.output

    def test_schema_version_enforced(self, runner, tmp_path):
        cfg = tmp_path / "v9.toml"
        cfg.write_text('schema_version = 9\n\n[experiment]\npreset = "glm"\n')
        res = runner.invoke(main, ["train", "--config", str(cfg), "--out", str(tmp_path / "x")])
        assert res.exit_code == 2

    def test_sampled_mode_refused_over_budget(self, runner, tmp_path):
        cfg = tmp_path / "sample.toml"
        cfg.write_text('schema_version = 1\n\n[experiment]\npreset = "glm"\nmode = "sample"\n')
        res = runner.invoke(main, ["train", "--config", str(cfg), "--out", str(tmp_path / "x")])
        assert res.exit_code == 3
        assert "budget" in res.output


class TestAct:
    def test_actions_csv(self, runner, trained_run, tmp_path):
        _, _, out = trained_run
        xs = domain_points(out)
        xfile = tmp_path / "xs.txt"
        xfile.write_text("\n".join(xs))
        res = runner.invoke(main, ["act", "--model", str(out), "--loss", "glm-square", "--x", str(xfile)])
        assert res.exit_code == 0, res.output
        rows = list(csv.reader(io.StringIO(res.output)))
        assert rows[0] == ["x", "action"]
        assert len(rows) == 1 + len(xs)
        acts = {float(r[1]) for r in rows[1:]}
        assert all(-1.0 <= a <= 1.0 for a in acts)

    def test_model_subdir_also_accepted(self, runner, trained_run, tmp_path):
        _, _, out = trained_run
        xfile = tmp_path / "one.txt"
        xfile.write_text(domain_points(out, 1)[0])
        res = runner.invoke(main, ["act", "--model", str(out / "model"), "--loss", "glm-square", "--x", str(xfile)])
        assert res.exit_code == 0, res.output

    def test_unknown_loss(self, runner, trained_run, tmp_path):
        _, _, out = trained_run
        xfile = tmp_path / "xs2.txt"
        xfile.write_text("0.0")
        res = runner.invoke(main, ["act", "--model", str(out), "--loss", "l7", "--x", str(xfile)])
        assert res.exit_code == 2
        assert "glm-square" in res.output

    def test_point_outside_domain(self, runner, trained_run, tmp_path):
        _, _, out = trained_run
        xfile = tmp_path / "xs3.txt"
        xfile.write_text("0.123456789")
        res = runner.invoke(main, ["act", "--model", str(out), "--loss", "glm-square", "--x", str(xfile)])
        assert res.exit_code == 2

    def test_garbage_point_file(self, runner, trained_run, tmp_path):
        _, _, out = trained_run
        xfile = tmp_path / "xs4.txt"
        xfile.write_text("zero point five")
        res = runner.invoke(main, ["act", "--model", str(out), "--loss", "glm-square", "--x", str(xfile)])
        assert res.exit_code == 2


class TestCalibrateReport:
    def test_header_and_gap_column(self, runner, trained_run):
        _, _, out = trained_run
        res = runner.invoke(main, ["calibrate", "report", "--model", str(out)])
        assert res.exit_code == 0, res.output
        rows = list(csv.reader(io.StringIO(res.output)))
        assert rows[0] == ["bin", "count", "mean_stats", "corner", "linf_gap"]
        assert len(rows) > 1
        total = sum(int(r[1]) for r in rows[1:])
        assert total == 64
        for r in rows[1:]:
            mean = [float(v) for v in r[2].split(";")]
            corner = [float(v) for v in r[3].split(";")]
            gap = max(abs(a - b) for a, b in zip(mean, corner))
            assert float(r[4]) == pytest.approx(gap)


class TestBasisCommands:
    def test_build_and_certify_roundtrip(self, runner, tmp_path):
        target = tmp_path / "b.npz"
        res = runner.invoke(main, ["basis", "build", "--delta", "0.125", "--seed", "0", "--out", str(target)])
        assert res.exit_code == 0, res.output
        assert target.exists()
        res = runner.invoke(main, ["basis", "certify", "--path", str(target)])
        assert res.exit_code == 0, res.output
        assert "size=20" in res.output.replace(" ", "")

    def test_tampered_file_exits_four(self, runner, tmp_path):
        target = tmp_path / "b.npz"
        runner.invoke(main, ["basis", "build", "--delta", "0.125", "--seed", "0", "--out", str(target)])
        blobs = dict(np.load(target))
        blobs["level0"] = blobs["level0"].copy()
        blobs["level0"][0, 0] *= 2.0
        np.savez_compressed(tmp_path / "bad.npz", **blobs)
        res = runner.invoke(main, ["basis", "certify", "--path", str(tmp_path / "bad.npz")])
        assert res.exit_code == 4

    def test_invalid_delta_exits_two(self, runner, tmp_path):
        res = runner.invoke(main, ["basis", "build", "--delta", "0.9", "--out", str(tmp_path / "b.npz")])
        assert res.exit_code == 2


class TestSweepCheb:
    def test_sweep_csv(self, runner, tmp_path):
        out = tmp_path / "sweep.csv"
        res = runner.invoke(main, ["sweep-basis", "-m", "8", "-m", "16", "--convex", "2", "--out", str(out)])
        assert res.exit_code == 0, res.output
        rows = list(csv.reader(open(out)))
        assert rows[0][:4] == ["m", "size", "relu_err", "convex_err"]
        assert rows[0][-1] == "wall_s"
        assert [r[0] for r in rows[1:]] == ["8", "16"]

    def test_sweep_rejects_odd_m(self, runner, tmp_path):
        res = runner.invoke(main, ["sweep-basis", "-m", "12", "--out", str(tmp_path / "s.csv")])
        assert res.exit_code == 2

    def test_cheb_summary_row(self, runner):
        res = runner.invoke(main, ["cheb", "--power", "8", "--eps", "0.01"])
        assert res.exit_code == 0, res.output
        rows = list(csv.reader(io.StringIO(res.output)))
        assert rows[0] == ["power", "eps", "degree", "terms", "grid_error"]
        assert rows[1][2] == "7"
        assert float(rows[1][4]) == 0.0078125

    def test_cheb_coeff_rows(self, runner, tmp_path):
        out = tmp_path / "c.csv"
        res = runner.invoke(main, ["cheb", "--power", "4", "--eps", "1e-9", "--coeffs", "--out", str(out)])
        assert res.exit_code == 0, res.output
        rows = list(csv.reader(open(out)))
        assert rows[0] == ["degree", "weight"]
        # full-degree expansion of x^4: degrees 0, 2, 4
        assert [r[0] for r in rows[1:]] == ["0", "2", "4"]
        got = sum(float(r[1]) for r in rows[1:])
        assert got == pytest.approx(1.0)
