"""Command surface over the library: build, sweep, train, eval, act.

Every command exits 0 on success; configuration problems exit 2,
refused budgets exit 3, and detected guarantee violations (including
corrupt saved artifacts and non-terminating training) exit 4.
"""

from __future__ import annotations

import csv
import functools
import io
import json
import sys
from pathlib import Path

import click
import numpy as np

try:
    import tomllib
except ModuleNotFoundError:
    import tomli as tomllib

from . import harness
from .cvxbasis import build_cvx_basis, certify_basis, load_basis, save_basis
from .errors import (
    ArtifactError,
    CorruptBasisError,
    GuaranteeViolationError,
    InvalidConfigError,
    NonTerminationError,
)
from .losses import chebyshev_monomial
from .omni import evaluate_omni, indistinguishability_check, omnipredict


def _exit_code(err: ArtifactError) -> int:
    code = getattr(err, "exit_code", None)
    if code is not None:
        return code
    if isinstance(err, (CorruptBasisError, NonTerminationError)):
        return 4
    return 2


def cli_errors(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except ArtifactError as err:
            click.echo(f"error: {err}", err=True)
            sys.exit(_exit_code(err))

    return wrapper


@click.group()
def main():
    """Sufficient-statistic omniprediction toolkit."""


@main.group()
def basis():
    """Build and re-verify spanning families for convex 1-slope losses."""


@basis.command("build")
@click.option("--delta", type=float, required=True, help="Target sup-norm accuracy in (0, 1/4].")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", "out_path", type=click.Path(dir_okay=False), required=True)
@cli_errors
def basis_build(delta, seed, out_path):
    """Construct, certify, and save a basis as .npz."""
    b = build_cvx_basis(delta, seed=seed)
    report = certify_basis(b)
    save_basis(b, out_path)
    click.echo(f"m={b.m} size={b.size} mu={b.mu:g} worst_offdiag={report['worst_offdiag']:g}")
    if "worst_hinge_error" in report:
        click.echo(f"worst_hinge_error={report['worst_hinge_error']:g}")
    click.echo(f"saved {out_path}")


@basis.command("certify")
@click.option("--path", "npz_path", type=click.Path(exists=True, dir_okay=False), required=True)
@cli_errors
def basis_certify(npz_path):
    """Reload a saved basis and re-run every certificate."""
    try:
        b = load_basis(npz_path)
    except CorruptBasisError:
        raise
    except (ArtifactError, KeyError, ValueError) as err:
        raise CorruptBasisError(f"saved basis failed to load: {err}") from None
    report = certify_basis(b)
    for k, v in sorted(report.items()):
        click.echo(f"{k}={v}")


@main.command("sweep-basis")
@click.option("-m", "ms", type=int, multiple=True, required=True, help="Grid sizes (powers of two); repeatable.")
@click.option("--convex", "n_convex", type=int, default=32, show_default=True, help="Random convex targets per size.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", "out_path", type=click.Path(dir_okay=False), required=True)
@cli_errors
def sweep_basis_cmd(ms, n_convex, seed, out_path):
    """Size/error/wall-time curve across grid sizes."""
    rows = harness.sweep_basis(sorted(ms), n_convex=n_convex, seed=seed)
    harness.write_sweep_csv(rows, out_path, timing=True)
    for r in rows:
        click.echo(
            f"m={r['m']} size={r['size']} relu_err={r['relu_err']:.4g} "
            f"convex_err={r['convex_err']:.4g} wall={r['wall_s']:.2f}s"
        )
    click.echo(f"wrote {out_path}")


@main.command("cheb")
@click.option("--power", type=int, required=True, help="Monomial power to compress.")
@click.option("--eps", type=float, required=True, help="Target sup error on [-1, 1].")
@click.option("--out", "out_path", type=click.Path(dir_okay=False), default=None)
@click.option("--coeffs", is_flag=True, help="Emit one row per kept degree instead of the summary.")
@cli_errors
def cheb_cmd(power, eps, out_path, coeffs):
    """Low-degree monomial compression: degree, terms, achieved error."""
    approx = chebyshev_monomial(power, eps)
    if coeffs:
        header = ["degree", "weight"]
        rows = [[str(j), repr(w)] for j, w in sorted(approx.coeffs.items())]
    else:
        header = ["power", "eps", "degree", "terms", "grid_error"]
        rows = [[str(power), repr(eps), str(approx.d), str(len(approx.coeffs)), repr(approx.grid_error)]]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    if out_path:
        Path(out_path).write_text(buf.getvalue())
        click.echo(f"wrote {out_path}")
    else:
        click.echo(buf.getvalue(), nl=False)


def _read_config(path) -> dict:
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except tomllib.TOMLDecodeError as err:
        raise InvalidConfigError(f"config is not valid TOML: {err}") from None


def _resolve_run_dir(path) -> Path:
    """Accept a run directory or its inner model directory."""
    p = Path(path)
    if (p / "resolved.json").exists():
        return p
    if (p / "meta.json").exists() and (p.parent / "resolved.json").exists():
        return p.parent
    raise InvalidConfigError(f"{path} is not a run directory (no resolved.json)")


def _load_run(path):
    run = _resolve_run_dir(path)
    res = json.loads((run / "resolved.json").read_text())
    if res.get("schema_version") != 1:
        raise InvalidConfigError(f"unsupported run schema {res.get('schema_version')!r}")
    bundle = harness.build_preset(res["preset"], res["epsilon"], res["seed"], res["mode"])
    model = harness.load_model(run / "model", family=bundle.family)
    return run, res, bundle, model


@main.command("train")
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--out", "out_dir", type=click.Path(file_okay=False), default=None, help="Overrides experiment.out.")
@cli_errors
def train_cmd(config_path, out_dir):
    """Train a model from a TOML config; writes a run directory."""
    settings = harness.parse_experiment_config(_read_config(config_path))
    target = out_dir or settings["out"]
    if not target:
        raise InvalidConfigError("no output directory: set experiment.out or pass --out")
    bundle = harness.build_preset(settings["preset"], settings["epsilon"], settings["seed"], settings["mode"])
    model = harness.train_bundle(bundle)
    out = Path(target)
    out.mkdir(parents=True, exist_ok=True)
    harness.save_model(model, out / "model")
    with open(out / "resolved.json", "w") as fh:
        json.dump(harness.resolved_report(bundle, model), fh, indent=2, sort_keys=True)
        fh.write("\n")
    harness._write_csv(out / "trainlog.csv", harness.TRAINLOG_HEADER, harness.trainlog_rows(model.log))
    harness.plot_potential(model.log, out / "potential.svg")
    click.echo(
        f"preset={bundle.name} loops={model.log.loops} wl_calls={model.log.total_wl_calls} "
        f"recals={len(model.log.recal_events)}"
    )
    click.echo(f"wrote {out}")


@main.command("eval")
@click.option("--run", "run_path", type=click.Path(exists=True, file_okay=False), required=True)
@click.option("--acceptance", is_flag=True, help="Exit 4 if any measured guarantee fails.")
@cli_errors
def eval_cmd(run_path, acceptance):
    """Evaluate a trained run: regret table, audit report, figures."""
    run, res, bundle, model = _load_run(run_path)
    rows, reports = harness.evaluate_bundle(bundle, model)
    harness._write_csv(run / "regret.csv", harness.REGRET_HEADER, harness.regret_rows_csv(rows))
    harness._write_csv(run / "indist.csv", harness.INDIST_HEADER, harness.indist_rows_csv(reports))
    harness.plot_regret(rows, run / "regret.svg")
    if bundle.name == "cvx":
        curve = harness.sweep_basis([8, 16, 32, 64], n_convex=8, seed=0)
        harness.write_sweep_csv(curve, run / "basis_curve.csv", timing=False)
        harness.plot_basis_curve(curve, run / "basis_curve.svg")
    failures = []
    for r in rows:
        click.echo(
            f"{r.loss_id}: omni={r.omni_loss:.6f} best={r.best_loss:.6f} ({r.best_name}) "
            f"regret={r.regret:.6f} bound={r.bound:.6f} within_bound={r.within_bound} "
            f"within_epsilon={r.within_epsilon}"
        )
        if not r.within_bound:
            failures.append(f"{r.loss_id}: regret {r.regret} exceeds composite bound {r.bound}")
        if r.within_epsilon is False:
            failures.append(f"{r.loss_id}: regret {r.regret} exceeds epsilon {r.epsilon}")
    for rep in reports:
        click.echo(
            f"{rep.loss_id}: identity={rep.identity_gap:.2e} sim_loss={rep.sim_loss_gap:.2e}/"
            f"{rep.sim_loss_bound:.2e} cma={rep.cma_gap:.2e}/{rep.cma_bound:.2e} ok={rep.ok}"
        )
        if not rep.ok:
            failures.append(f"{rep.loss_id}: indistinguishability audit failed")
    click.echo(f"wrote {run / 'regret.csv'} and {run / 'indist.csv'}")
    if acceptance and failures:
        raise GuaranteeViolationError("; ".join(failures))


@main.command("act")
@click.option("--model", "model_path", type=click.Path(exists=True, file_okay=False), required=True)
@click.option("--loss", "loss_spec", required=True, help="Loss id from the run's resolved.json.")
@click.option("--x", "x_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--out", "out_path", type=click.Path(dir_okay=False), default=None)
@cli_errors
def act_cmd(model_path, loss_spec, x_path, out_path):
    """Post-process saved predictions into actions for one loss."""
    run, res, bundle, model = _load_run(model_path)
    matches = [ua for ua in bundle.uas if ua.loss_id == loss_spec]
    if not matches:
        raise InvalidConfigError(f"loss {loss_spec!r} not in this run; available: {res['losses']}")
    ua = matches[0]
    xs = []
    for tok in Path(x_path).read_text().split():
        try:
            xs.append(float(tok))
        except ValueError:
            raise InvalidConfigError(f"point file holds a non-number: {tok!r}") from None
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["x", "action"])
    for x in xs:
        w.writerow([repr(x), repr(float(omnipredict(model, ua, x)))])
    if out_path:
        Path(out_path).write_text(buf.getvalue())
        click.echo(f"wrote {out_path}")
    else:
        click.echo(buf.getvalue(), nl=False)


@main.group()
def calibrate():
    """Inspect the calibration state of a saved model."""


@calibrate.command("report")
@click.option("--model", "model_path", type=click.Path(exists=True, file_okay=False), required=True)
@click.option("--out", "out_path", type=click.Path(dir_okay=False), default=None)
@cli_errors
def calibrate_report(model_path, out_path):
    """Per-bin occupancy, statistic means, corners, sup-gaps."""
    run, res, bundle, model = _load_run(model_path)
    counts = {}
    with open(run / "model" / "bins.csv", newline="") as fh:
        rd = csv.reader(fh)
        next(rd)
        for row in rd:
            counts[row[0]] = row[1]
    table = model.bin_table
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["bin", "count", "mean_stats", "corner", "linf_gap"])
    for b, key in enumerate(table.keys):
        bin_id = ";".join(str(k) for k in key)
        gap = float(np.max(np.abs(table.means[b] - table.corners[b])))
        w.writerow(
            [
                bin_id,
                counts.get(bin_id, "0"),
                ";".join(repr(float(v)) for v in table.means[b]),
                ";".join(repr(float(v)) for v in table.corners[b]),
                repr(gap),
            ]
        )
    if out_path:
        Path(out_path).write_text(buf.getvalue())
        click.echo(f"wrote {out_path}")
    else:
        click.echo(buf.getvalue(), nl=False)


if __name__ == "__main__":
    main()
