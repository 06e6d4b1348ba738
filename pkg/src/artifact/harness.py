"""Experiment plumbing: presets, reports, plots, model directories.

Three scripted settings exercise the full pipeline at desk scale: a
one-statistic matching loss, a moment family serving two power losses
from one model, and the convex-loss basis serving inventory losses.
Everything downstream of a config is deterministic, so reports are
byte-reproducible; wall-clock columns are the only exception and are
confined to the basis sweep.
"""

from __future__ import annotations

import csv
import io
import json
import math
import time
from dataclasses import dataclass
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .calibrate import BinTable, bin_indices
from .cvxbasis import (
    build_cvx_basis,
    certify_basis,
    convex_error_sweep,
    relu_error_sweep,
)
from .errors import InfeasibleBudgetError, InvalidConfigError
from .gridfn import random_convex_lipschitz
from .losses import cvx_family, glm_family, l1_loss, lp_monomial_family, newsvendor
from .multiacc import TestClass, compose_tests
from .omni import (
    LoopRecord,
    OmniModel,
    RecalEvent,
    TrainConfig,
    TrainLog,
    evaluate_omni,
    indistinguishability_check,
    learn_omni,
)
from .stats import (
    AUDIT_GRID,
    UniformApproximation,
    action_grid,
    moment_family,
    verify_uniform_approx,
)
from .synthdist import random_histogram_dist

matplotlib.rcParams["svg.hashsalt"] = "artifact"

_MEM_BUDGET = 10**7


def snap(space, value: float):
    """Nearest action; hypothesis outputs always land in the space."""
    acts = np.asarray(space.actions, dtype=np.float64)
    return space.actions[int(np.argmin(np.abs(acts - value)))]


def constant_rule(space, value: float):
    a = snap(space, value)
    return (f"const@{a:g}", lambda x, a=a: a)


def threshold_rule(space, theta: float, lo: float, hi: float):
    a_lo, a_hi = snap(space, lo), snap(space, hi)
    return (
        f"step@{theta:g}->{a_hi:g}",
        lambda x, t=theta, a=a_lo, b=a_hi: b if x >= t else a,
    )


def default_hypotheses(space, low: float = 0.0, high: float = 1.0):
    """16 rules: 8 constants plus 8 single-threshold step rules."""
    consts = [constant_rule(space, v) for v in np.linspace(low, high, 8)]
    steps = []
    for i, theta in enumerate(np.linspace(0.15, 0.85, 8)):
        lo = low + (high - low) * (0.1 + 0.05 * i)
        hi = high - (high - low) * 0.05 * i
        steps.append(threshold_rule(space, float(theta), float(lo), float(hi)))
    return consts + steps


def embed_moment_ua(ua: UniformApproximation, family) -> UniformApproximation:
    """Re-express a lower-moment expansion over a larger moment family.

    Extra statistics get zero coefficients; the residual and masses are
    re-measured rather than copied.
    """
    if family.d < ua.family.d:
        raise InvalidConfigError("target family is smaller than the source family")
    pad = family.d - ua.family.d
    base = ua.r

    def r(t):
        return np.concatenate([np.asarray(base(t), dtype=np.float64), np.zeros(pad)])

    fresh = UniformApproximation(family, ua.loss_id, r, 0.0, 0.0, 0.0, ua.action_space, loss=ua.loss, scale=ua.scale)
    delta, lam = verify_uniform_approx(fresh, ua.loss, AUDIT_GRID, ua.action_space)
    from .stats import measure_lambdas

    _, lam_tail = measure_lambdas(fresh)
    return UniformApproximation(
        family, ua.loss_id, r, lam, lam_tail, delta, ua.action_space, loss=ua.loss, scale=ua.scale
    )


@dataclass(frozen=True)
class ExperimentBundle:
    """Everything a run needs, fully constructed and certified."""

    name: str
    dist: object
    family: object
    uas: tuple
    hyps: tuple
    tc: TestClass
    config: TrainConfig
    family_delta: float
    family_descriptor: dict


def _bundle(name, dist, family, uas, hyps, epsilon, seed, mode, descriptor) -> ExperimentBundle:
    tc = compose_tests(list(uas), list(hyps), dist.xs)
    lam = max(ua.lam_tail for ua in uas)
    family_delta = max(ua.delta for ua in uas)
    if family_delta > epsilon / 4.0 + 1e-12:
        raise InvalidConfigError(
            f"family residual {family_delta} exceeds epsilon/4 = {epsilon / 4.0}; raise epsilon or refine the family"
        )
    config = TrainConfig.derive(epsilon, family.d, lam, kappa=tc.kappa, seed=seed, mode=mode)
    return ExperimentBundle(name, dist, family, tuple(uas), tuple(hyps), tc, config, family_delta, descriptor)


def preset_glm(epsilon: float = 0.2, seed: int = 0, mode: str = "exact") -> ExperimentBundle:
    """One statistic, matching loss g(t) - t y with g(t) = t^2 / 2."""
    dist = random_histogram_dist(64, grid_size=17, seed=seed, name="glm")
    family = moment_family(1)
    space = action_grid(65, -1.0, 1.0)

    def g(t):
        return 0.5 * float(np.asarray(t)) ** 2

    ua = glm_family(g, family, space, loss_id="glm-square")
    hyps = default_hypotheses(space, low=0.0, high=1.0)
    descriptor = {"preset": "glm", "builder": "moments", "p": 1}
    return _bundle("glm", dist, family, [ua], hyps, epsilon, seed, mode, descriptor)


def preset_moments(epsilon: float = 0.6, seed: int = 0, mode: str = "exact") -> ExperimentBundle:
    """Degree-4 moments; squared and fourth-power losses share a model."""
    dist = random_histogram_dist(64, grid_size=17, seed=seed, name="moments")
    family = moment_family(4)
    space = action_grid(65, 0.0, 1.0)
    ua2 = embed_moment_ua(lp_monomial_family(2, action_space=space), family)
    ua4 = lp_monomial_family(4, action_space=space)
    hyps = default_hypotheses(space)
    descriptor = {"preset": "moments", "builder": "moments", "p": 4}
    return _bundle("moments", dist, family, [ua2, ua4], hyps, epsilon, seed, mode, descriptor)


def preset_cvx(epsilon: float = 1.0, seed: int = 0, mode: str = "exact", delta: float = 1 / 8) -> ExperimentBundle:
    """Spanning family for all convex 1-slope losses at accuracy delta."""
    dist = random_histogram_dist(64, grid_size=17, seed=seed, name="cvx")
    family, build = cvx_family(delta, seed=0)
    space = action_grid(8, 0.0, 1.0)
    uas = [build(newsvendor(c), space) for c in (0.2, 0.5, 0.8)]
    uas.append(build(l1_loss(), space))
    hyps = default_hypotheses(space)
    descriptor = {"preset": "cvx", "builder": "cvx", "delta": delta, "basis_seed": 0}
    return _bundle("cvx", dist, family, uas, hyps, epsilon, seed, mode, descriptor)


_PRESETS = {"glm": preset_glm, "moments": preset_moments, "cvx": preset_cvx}


def build_preset(name: str, epsilon: float | None = None, seed: int = 0, mode: str = "exact") -> ExperimentBundle:
    if name not in _PRESETS:
        raise InvalidConfigError(f"unknown preset {name!r}; choose one of {sorted(_PRESETS)}")
    kw = {"seed": seed, "mode": mode}
    if epsilon is not None:
        kw["epsilon"] = epsilon
    return _PRESETS[name](**kw)


def check_bin_budget(config: TrainConfig, n_points: int, budget: int = _MEM_BUDGET) -> int:
    """Occupied bins are bounded by the domain size; refuse past budget.

    The dense table would hold (2 ceil(1/delta_bin))^d cells, far past
    any memory; only bins that some point occupies are materialized, so
    the binding constraint is the domain (or sample) size.
    """
    per_axis = 2 * math.ceil(1.0 / config.delta_bin)
    dense = per_axis**config.d
    occupied = min(dense, n_points)
    if occupied > budget:
        raise InfeasibleBudgetError(
            f"bin table needs {occupied} cells against a budget of {budget}; "
            "use a coarser bin width (larger epsilon) or a smaller family"
        )
    return occupied


def guarantee_epsilon(config: TrainConfig, family_delta: float) -> float:
    """Slack the composite bound promises for the configured run."""
    return 3.0 * (config.d * config.alpha + config.lam * config.beta + family_delta)


def _write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return repr(x)
    return str(x)


def trainlog_rows(log: TrainLog) -> list[list[str]]:
    rows = []
    for rec in log.records:
        ev = rec.recal
        rows.append(
            [
                str(rec.index),
                ";".join(str(i) for i in rec.ma_iterations),
                str(rec.wl_calls),
                _fmt(rec.est_value),
                _fmt(rec.potential_after_ma),
                _fmt(ev.potential_before if ev else None),
                _fmt(ev.potential_after if ev else None),
                _fmt(ev.ece_disc if ev else None),
                _fmt(ev.delta_bin if ev else None),
            ]
        )
    return rows


TRAINLOG_HEADER = [
    "loop",
    "ma_iterations",
    "wl_calls",
    "est_ece",
    "potential_after_ma",
    "recal_potential_before",
    "recal_potential_after",
    "recal_ece_disc",
    "recal_delta_bin",
]


def save_model(model: OmniModel, path) -> None:
    """Directory layout: meta.json, domain.csv, bins.csv, trainlog.csv."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    cfg = model.config
    meta = {
        "schema_version": 1,
        "name": model.name,
        "kappa": cfg.kappa,
        "family": {"name": model.family.name, "d": model.family.d},
        "config": {
            "epsilon": cfg.epsilon,
            "d": cfg.d,
            "lam": cfg.lam,
            "kappa": cfg.kappa,
            "alpha": cfg.alpha,
            "beta": cfg.beta,
            "delta_bin": cfg.delta_bin,
            "rho": cfg.rho,
            "sigma": cfg.sigma,
            "mode": cfg.mode,
            "seed": cfg.seed,
        },
        "log": {"p0_potential": model.log.p0_potential, "loop_bound": model.log.loop_bound},
        "n_points": len(model.xs),
    }
    with open(path / "meta.json", "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
    d = model.family.d
    _write_csv(
        path / "domain.csv",
        ["x"] + [f"q{i}" for i in range(d)],
        [[_fmt(float(x))] + [_fmt(float(v)) for v in model.q[:, i]] for i, x in enumerate(model.xs)],
    )
    table = model.bin_table
    j = bin_indices(model.q, cfg.delta_bin)
    counts = {}
    for i in range(j.shape[1]):
        key = tuple(j[:, i].tolist())
        counts[key] = counts.get(key, 0) + 1
    _write_csv(
        path / "bins.csv",
        ["key", "count", "mass", "corner", "mean"],
        [
            [
                ";".join(str(k) for k in key),
                str(counts.get(tuple(key), 0)),
                _fmt(float(table.mass[b])),
                ";".join(_fmt(float(v)) for v in table.corners[b]),
                ";".join(_fmt(float(v)) for v in table.means[b]),
            ]
            for b, key in enumerate(table.keys)
        ],
    )
    _write_csv(path / "trainlog.csv", TRAINLOG_HEADER, trainlog_rows(model.log))


def _opt_float(s: str):
    return None if s == "" else float(s)


def load_model(path, family=None) -> OmniModel:
    """Rebuild a model directory; the family comes from its descriptor."""
    path = Path(path)
    try:
        meta = json.loads((path / "meta.json").read_text())
    except FileNotFoundError:
        raise InvalidConfigError(f"{path} is not a model directory (no meta.json)") from None
    if meta.get("schema_version") != 1:
        raise InvalidConfigError(f"unsupported model schema {meta.get('schema_version')!r}")
    c = meta["config"]
    config = TrainConfig(
        epsilon=c["epsilon"],
        d=c["d"],
        lam=c["lam"],
        kappa=c["kappa"],
        alpha=c["alpha"],
        beta=c["beta"],
        delta_bin=c["delta_bin"],
        rho=c["rho"],
        sigma=c["sigma"],
        mode=c["mode"],
        seed=c["seed"],
    )
    if family is None:
        family = moment_family(meta["family"]["d"])
        if family.name != meta["family"]["name"]:
            raise InvalidConfigError(
                f"model family {meta['family']['name']!r} is not a moment family; pass it explicitly"
            )
    if family.d != meta["family"]["d"] or family.name != meta["family"]["name"]:
        raise InvalidConfigError("supplied family does not match the stored descriptor")
    xs, cols = [], []
    with open(path / "domain.csv", newline="") as fh:
        rd = csv.reader(fh)
        next(rd)
        for row in rd:
            xs.append(float(row[0]))
            cols.append([float(v) for v in row[1:]])
    q = np.array(cols, dtype=np.float64).T
    keys, mass, corners, means = [], [], [], []
    with open(path / "bins.csv", newline="") as fh:
        rd = csv.reader(fh)
        next(rd)
        for row in rd:
            keys.append(tuple(int(v) for v in row[0].split(";")))
            mass.append(float(row[2]))
            corners.append([float(v) for v in row[3].split(";")])
            means.append([float(v) for v in row[4].split(";")])
    table = BinTable(
        config.delta_bin,
        family.d,
        tuple(keys),
        np.array(mass),
        np.array(means),
        np.array(corners),
    )
    records = []
    with open(path / "trainlog.csv", newline="") as fh:
        rd = csv.reader(fh)
        next(rd)
        for row in rd:
            ev = None
            if row[7] != "":
                ev = RecalEvent(_opt_float(row[5]), _opt_float(row[6]), float(row[7]), float(row[8]))
            records.append(
                LoopRecord(
                    int(row[0]),
                    tuple(int(v) for v in row[1].split(";")),
                    int(row[2]),
                    float(row[3]),
                    _opt_float(row[4]),
                    ev,
                )
            )
    log = TrainLog(meta["log"]["p0_potential"], meta["log"]["loop_bound"], records)
    return OmniModel(family, config, None, tuple(xs), q, table, log, name=meta["name"])


def _savefig(fig, path) -> None:
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def plot_regret(rows, path) -> None:
    fig, ax = plt.subplots(figsize=(6, 3.5))
    idx = np.arange(len(rows))
    ax.scatter(idx, [r.omni_loss for r in rows], marker="o", label="trained predictor")
    ax.scatter(idx, [r.best_loss for r in rows], marker="s", label="best hypothesis")
    if any(r.bound is not None for r in rows):
        ax.plot(idx, [r.best_loss + r.bound for r in rows], "k--", lw=0.8, label="composite bound")
    ax.set_xticks(idx, [r.loss_id for r in rows], rotation=20)
    ax.set_ylabel("expected loss")
    ax.legend(fontsize=8)
    fig.tight_layout()
    _savefig(fig, path)


def plot_potential(log: TrainLog, path) -> None:
    labels, values = [], []
    if log.p0_potential is not None:
        labels.append("start")
        values.append(log.p0_potential)
    for rec in log.records:
        if rec.potential_after_ma is not None:
            labels.append(f"L{rec.index} boost")
            values.append(rec.potential_after_ma)
        if rec.recal is not None and rec.recal.potential_after is not None:
            labels.append(f"L{rec.index} recal")
            values.append(rec.recal.potential_after)
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.plot(np.arange(len(values)), values, "o-")
    ax.set_xticks(np.arange(len(labels)), labels, rotation=30, fontsize=7)
    ax.set_ylabel("squared distance to statistic map")
    fig.tight_layout()
    _savefig(fig, path)


def sweep_basis(ms, n_convex: int = 32, seed: int = 0):
    """Size/error/time curve per grid size, with the indicator baseline.

    Wall-clock seconds are measured, so that one column varies between
    runs; every other column is deterministic.
    """
    rows = []
    for m in ms:
        if m < 2 or m & (m - 1):
            raise InvalidConfigError(f"grid sizes must be powers of two, got {m}")
        start = time.perf_counter()
        basis = build_cvx_basis(1.0 / m, seed=seed)
        certify_basis(basis)
        relu_err = float(relu_error_sweep(basis).max())
        rng = np.random.default_rng(seed)
        fs = [random_convex_lipschitz(m, rng) for _ in range(n_convex)]
        cvx_err = float(convex_error_sweep(basis, fs).max())
        wall = time.perf_counter() - start
        bound = 4.0 * m ** (2.0 / 3.0) * math.log2(m) ** 3
        rows.append(
            {
                "m": m,
                "size": basis.size,
                "relu_err": relu_err,
                "convex_err": cvx_err,
                "size_over_m": basis.size / m,
                "size_bound": bound,
                "baseline_size": m,
                "baseline_err": 1.0 / m,
                "wall_s": wall,
            }
        )
    return rows


SWEEP_HEADER = [
    "m",
    "size",
    "relu_err",
    "convex_err",
    "size_over_m",
    "size_bound",
    "baseline_size",
    "baseline_err",
    "wall_s",
]


def write_sweep_csv(rows, path, timing: bool = True) -> None:
    """Emit the sweep; timing=False keeps report directories byte-stable."""
    header = SWEEP_HEADER if timing else SWEEP_HEADER[:-1]
    _write_csv(
        Path(path),
        header,
        [[_fmt(r[k]) if k != "wall_s" else f"{r[k]:.3f}" for k in header] for r in rows],
    )


def plot_basis_curve(rows, path) -> None:
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ms = [r["m"] for r in rows]
    ax.plot(ms, [r["size"] for r in rows], "o-", label="spanning family")
    ax.plot(ms, [r["size_bound"] for r in rows], "--", label="size bound")
    ax.plot(ms, [r["baseline_size"] for r in rows], ":", label="indicator baseline")
    ax.set_xscale("log", base=2)
    ax.set_yscale("log", base=2)
    ax.set_xlabel("grid size")
    ax.set_ylabel("family size")
    ax.legend(fontsize=8)
    fig.tight_layout()
    _savefig(fig, path)


REGRET_HEADER = [
    "loss_id",
    "omni_loss",
    "best_name",
    "best_loss",
    "regret",
    "delta_support",
    "bound",
    "within_bound",
    "epsilon",
    "within_epsilon",
    "stderr",
]

INDIST_HEADER = [
    "loss_id",
    "identity_gap",
    "sim_loss_gap",
    "sim_loss_bound",
    "cma_gap",
    "cma_bound",
    "alpha_exact",
    "beta_exact",
    "ok",
]


def regret_rows_csv(rows) -> list[list[str]]:
    return [
        [
            r.loss_id,
            _fmt(r.omni_loss),
            r.best_name,
            _fmt(r.best_loss),
            _fmt(r.regret),
            _fmt(r.delta_support),
            _fmt(r.bound),
            _fmt(r.within_bound),
            _fmt(r.epsilon),
            _fmt(r.within_epsilon),
            _fmt(r.stderr),
        ]
        for r in rows
    ]


def indist_rows_csv(reports) -> list[list[str]]:
    return [
        [
            rep.loss_id,
            _fmt(rep.identity_gap),
            _fmt(rep.sim_loss_gap),
            _fmt(rep.sim_loss_bound),
            _fmt(rep.cma_gap),
            _fmt(rep.cma_bound),
            _fmt(rep.alpha_exact),
            _fmt(rep.beta_exact),
            _fmt(rep.ok),
        ]
        for rep in reports
    ]


def train_bundle(bundle: ExperimentBundle) -> OmniModel:
    check_bin_budget(bundle.config, bundle.dist.n_points)
    return learn_omni(None, bundle.config, bundle.dist, bundle.family, bundle.tc)


def evaluate_bundle(bundle: ExperimentBundle, model: OmniModel):
    rows = evaluate_omni(
        model,
        bundle.uas,
        bundle.hyps,
        bundle.dist,
        tc=bundle.tc,
        epsilon=bundle.config.epsilon,
        mode="exact",
    )
    reports = [indistinguishability_check(model, ua, bundle.dist, bundle.hyps, bundle.tc) for ua in bundle.uas]
    return rows, reports


def resolved_report(bundle: ExperimentBundle, model: OmniModel | None = None) -> dict:
    cfg = bundle.config
    out = {
        "schema_version": 1,
        "preset": bundle.name,
        "family": dict(bundle.family_descriptor, name=bundle.family.name),
        "certified": {"d": cfg.d, "lam": cfg.lam, "delta": bundle.family_delta},
        "epsilon": cfg.epsilon,
        "guarantee_epsilon": guarantee_epsilon(cfg, bundle.family_delta),
        "alpha": cfg.alpha,
        "beta": cfg.beta,
        "delta_bin": cfg.delta_bin,
        "rho": cfg.rho,
        "sigma": cfg.sigma,
        "kappa": cfg.kappa,
        "mode": cfg.mode,
        "seed": cfg.seed,
        "n_points": bundle.dist.n_points,
        "losses": [ua.loss_id for ua in bundle.uas],
        "hypotheses": [name for name, _ in bundle.hyps],
        "n_tests": len(bundle.tc.tests),
    }
    if model is not None:
        out["training"] = {
            "loops": model.log.loops,
            "loop_bound": model.log.loop_bound,
            "wl_calls": model.log.total_wl_calls,
            "p0_potential": model.log.p0_potential,
            "recal_events": len(model.log.recal_events),
        }
    return out


def run_experiment(config: dict, out_dir) -> dict:
    """Train, evaluate, audit, and write the full report directory."""
    settings = parse_experiment_config(config)
    bundle = build_preset(settings["preset"], settings["epsilon"], settings["seed"], settings["mode"])
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    model = train_bundle(bundle)
    rows, reports = evaluate_bundle(bundle, model)
    save_model(model, out / "model")
    with open(out / "resolved.json", "w") as fh:
        json.dump(resolved_report(bundle, model), fh, indent=2, sort_keys=True)
        fh.write("\n")
    _write_csv(out / "regret.csv", REGRET_HEADER, regret_rows_csv(rows))
    _write_csv(out / "indist.csv", INDIST_HEADER, indist_rows_csv(reports))
    _write_csv(out / "trainlog.csv", TRAINLOG_HEADER, trainlog_rows(model.log))
    plot_regret(rows, out / "regret.svg")
    plot_potential(model.log, out / "potential.svg")
    if bundle.name == "cvx":
        curve = sweep_basis([8, 16, 32, 64], n_convex=8, seed=0)
        write_sweep_csv(curve, out / "basis_curve.csv", timing=False)
        plot_basis_curve(curve, out / "basis_curve.svg")
    return {
        "bundle": bundle,
        "model": model,
        "regret_rows": rows,
        "indist_reports": reports,
        "out_dir": out,
    }


_EXPERIMENT_KEYS = {"preset", "seed", "epsilon", "mode", "out"}


def parse_experiment_config(config: dict) -> dict:
    """Strict schema check for the [experiment] table."""
    if not isinstance(config, dict):
        raise InvalidConfigError("config root must be a table")
    if config.get("schema_version") != 1:
        raise InvalidConfigError(f"schema_version must be 1, got {config.get('schema_version')!r}")
    extra_top = set(config) - {"schema_version", "experiment"}
    if extra_top:
        raise InvalidConfigError(f"unknown top-level keys: {sorted(extra_top)}")
    exp = config.get("experiment")
    if not isinstance(exp, dict):
        raise InvalidConfigError("missing [experiment] table")
    unknown = set(exp) - _EXPERIMENT_KEYS
    if unknown:
        raise InvalidConfigError(f"unknown experiment keys: {sorted(unknown)}")
    preset = exp.get("preset")
    if preset not in _PRESETS:
        raise InvalidConfigError(f"preset must be one of {sorted(_PRESETS)}, got {preset!r}")
    seed = exp.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool):
        raise InvalidConfigError(f"seed must be an integer, got {seed!r}")
    epsilon = exp.get("epsilon")
    if epsilon is not None and (not isinstance(epsilon, (int, float)) or isinstance(epsilon, bool) or epsilon <= 0):
        raise InvalidConfigError(f"epsilon must be a positive number, got {epsilon!r}")
    mode = exp.get("mode", "exact")
    if mode not in ("exact", "sample"):
        raise InvalidConfigError(f"mode must be exact or sample, got {mode!r}")
    return {
        "preset": preset,
        "seed": seed,
        "epsilon": None if epsilon is None else float(epsilon),
        "mode": mode,
        "out": exp.get("out"),
    }
