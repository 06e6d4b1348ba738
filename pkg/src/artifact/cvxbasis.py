"""A sublinear basis that approximately spans admissible grid functions.

The construction layers three kinds of elements over a power-of-two grid
of size ``m``:

* for every dyadic level ``h``, the columns of a certified sign code for
  ``m / 2^h`` rows, each column stretched ``2^h``-fold so it is constant
  on aligned blocks (section ``w``);
* hinges ``relu(i * t)`` for spacing ``t``, scaled by ``1 / (m - 1)``
  so values stay in ``[0, 1]`` (section ``relu``);
* the constant function 1.

Row ``a`` of the level-``h`` code supplies coefficients reproducing the
indicator of the ``a``-th aligned block within the code's certified
off-diagonal bound ``mu``.  Chaining the canonical dyadic cover, hinge
differencing, and the exact second-order expansion then yields
coefficients for every interval, every hinge, and finally every
admissible (convex, 1-slope) function, with errors compounding as

    interval <= 2 mu log2(m),  hinge <= (t - 1) * interval,  admissible <= 3 * hinge.

With the tuned parameters ``t = ceil(m^(1/3))`` and
``mu = 1 / (12 t log2 m)`` the hinge error stays below ``1/6`` and the
admissible error below ``1/2`` in grid value units, while the element
count grows like ``m^(2/3) log2(m)^3``, sublinear in ``m``.

Certificates are honest: every ``sup_error`` in this module is recomputed
from the actual coefficient vector against the exact target on the full
grid, never taken from the bound.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import ceil, log2

import numpy as np
from scipy.optimize import linprog

from .codes import CodeMatrix, build_code_matrix, gram
from .errors import (
    CorruptBasisError,
    IndexOutOfRangeError,
    InvalidConfigError,
    NotConvexLipschitzError,
    NumericalError,
    ShapeError,
)
from .gridfn import (
    DyadicInterval,
    GridFunction,
    dyadic_decompose,
    is_discrete_convex_lipschitz,
    taylor_expand,
)
from .stats import StatisticsFamily

__all__ = [
    "Basis",
    "ApproxCertificate",
    "build_what",
    "build_cvx_basis",
    "spaced_hinge_basis",
    "approximate_dyadic_interval",
    "approximate_interval",
    "approximate_relu",
    "approximate_convex",
    "relu_error_sweep",
    "convex_error_sweep",
    "lift_to_unit_interval",
    "lifted_element_order",
    "minimax_fit",
    "certify_basis",
    "save_basis",
    "load_basis",
]


@dataclass(frozen=True, eq=False)
class ApproxCertificate:
    """Coefficients for one target plus the residual they actually achieve.

    ``sup_error`` is the exact maximum absolute residual over the grid.
    ``lam`` sums absolute coefficients over non-constant elements; the
    constant element is exempt because a constant shift never affects
    the comparisons the coefficients feed into downstream.
    """

    target: str
    sup_error: float
    lam: float
    coef_vec: np.ndarray
    names: tuple[str, ...]
    const_index: int | None

    @property
    def coefficients(self) -> dict[str, float]:
        """Sparse name-to-coefficient view of :attr:`coef_vec`."""
        idx = np.nonzero(self.coef_vec)[0]
        return {self.names[i]: float(self.coef_vec[i]) for i in idx}


@dataclass(frozen=True, eq=False)
class Basis:
    """Ordered element collection with per-level codes and hinge rows.

    Element order is: level sections ``h = 0 .. log2(m)`` (each holding
    the columns of that level's code), then hinge elements, then the
    constant.  A basis built by :func:`build_what` has no hinge or
    constant section; operations that need them raise
    :class:`CorruptBasisError`.

    ``size_constant`` records ``size / (m^(2/3) log2(m)^3)`` so growth
    claims are checkable numbers, not asymptotics.
    """

    m: int
    mu: float
    t: int | None
    seed: int
    codes: tuple[CodeMatrix, ...]
    level_slices: tuple[tuple[int, int], ...]
    relu_offsets: tuple[int, ...]
    relu_start: int
    const_index: int | None
    names: tuple[str, ...]
    relu_values: np.ndarray | None
    size_constant: float
    _grams: dict = field(default_factory=dict, repr=False)
    _relu_certs: dict = field(default_factory=dict, repr=False)

    @property
    def size(self) -> int:
        return len(self.names)

    @property
    def level_index(self) -> dict[int, tuple[int, int]]:
        return {h: self.level_slices[h] for h in range(len(self.level_slices))}

    @property
    def relu_index(self) -> dict[int, int]:
        return {i: self.relu_start + i for i in range(len(self.relu_offsets))}

    def level_gram(self, h: int) -> np.ndarray:
        if h not in self._grams:
            self._grams[h] = gram(self.codes[h])
        return self._grams[h]

    def element_values(self, pos: int) -> np.ndarray:
        """Values of element ``pos`` on the grid, bounded in [-1, 1]."""
        if not 0 <= pos < self.size:
            raise IndexOutOfRangeError(f"element {pos} outside basis of size {self.size}")
        for h, (start, stop) in enumerate(self.level_slices):
            if start <= pos < stop:
                col = self.codes[h].entries[:, pos - start]
                return np.repeat(col, 1 << h)
        if self.relu_values is not None and self.relu_start <= pos < self.relu_start + len(self.relu_offsets):
            return self.relu_values[pos - self.relu_start].copy()
        return np.ones(self.m)  # the constant element

    def elements(self) -> list[tuple[str, GridFunction]]:
        """Materialize every element; O(size * m) memory, test-scale only."""
        return [(name, GridFunction(self.m, self.element_values(i))) for i, name in enumerate(self.names)]


def _check_power_of_two(m: int) -> int:
    if m < 2 or m & (m - 1):
        raise ShapeError(f"basis construction needs m a power of two >= 2, got {m}")
    return m.bit_length() - 1


def _size_constant(size: int, m: int) -> float:
    return size / (m ** (2.0 / 3.0) * log2(m) ** 3)


def build_what(mu: float, m: int, seed: int = 0) -> Basis:
    """Level sections only: one certified code per dyadic level.

    Level ``h`` holds a code for ``m / 2^h`` rows at bound ``mu``; its
    columns, stretched ``2^h``-fold, are the elements.  Row ``a`` of the
    code then reproduces the indicator of dyadic block ``(h, a)`` within
    ``mu``, which :func:`approximate_dyadic_interval` certifies.
    """
    r = _check_power_of_two(m)
    if not 0.0 < mu <= 1.0:
        raise InvalidConfigError(f"interval error bound must lie in (0, 1], got {mu}")
    codes = []
    names: list[str] = []
    slices = []
    for h in range(r + 1):
        code = build_code_matrix(m >> h, mu, seed=seed * 8192 + h)
        start = len(names)
        names.extend(f"w{h}.{c}" for c in range(code.k))
        slices.append((start, len(names)))
        codes.append(code)
    return Basis(
        m=m,
        mu=mu,
        t=None,
        seed=seed,
        codes=tuple(codes),
        level_slices=tuple(slices),
        relu_offsets=(),
        relu_start=-1,
        const_index=None,
        names=tuple(names),
        relu_values=None,
        size_constant=_size_constant(len(names), m),
    )


def _hinge_rows(m: int, offsets: tuple[int, ...]) -> np.ndarray:
    y = np.arange(m, dtype=np.float64)
    rows = np.maximum(y[None, :] - np.asarray(offsets, dtype=np.float64)[:, None], 0.0)
    rows /= m - 1
    rows.flags.writeable = False
    return rows


def build_cvx_basis(delta: float, seed: int = 0) -> Basis:
    """Full construction tuned for target accuracy ``delta``.

    Sets ``m`` to the next power of two at or above ``1 / delta``,
    hinge spacing ``t = ceil(m^(1/3))``, and per-interval bound
    ``mu = 1 / (12 t log2 m)``, then appends hinges at multiples of
    ``t`` and the constant element.
    """
    if not 0.0 < delta <= 0.25:
        raise InvalidConfigError(f"target accuracy must lie in (0, 1/4], got {delta}")
    m = 2 ** ceil(log2(1.0 / delta))
    m = max(m, 2)
    r = m.bit_length() - 1
    t = ceil(m ** (1.0 / 3.0))
    # cube roots of exact cubes land just above the integer; snap down
    if (t - 1) ** 3 >= m:
        t -= 1
    mu = 1.0 / (12.0 * t * r)
    base = build_what(mu, m, seed=seed)
    offsets = tuple(range(0, m, t))
    names = list(base.names)
    relu_start = len(names)
    names.extend(f"relu{i}" for i in offsets)
    const_index = len(names)
    names.append("const")
    return Basis(
        m=m,
        mu=mu,
        t=t,
        seed=seed,
        codes=base.codes,
        level_slices=base.level_slices,
        relu_offsets=offsets,
        relu_start=relu_start,
        const_index=const_index,
        names=tuple(names),
        relu_values=_hinge_rows(m, offsets),
        size_constant=_size_constant(len(names), m),
    )


def spaced_hinge_basis(m: int, spacing: int) -> Basis:
    """Hinges at multiples of ``spacing`` plus the constant; no levels.

    A budget-matched probe collection for :func:`minimax_fit`
    comparisons; it carries no interval machinery.
    """
    _check_power_of_two(m)
    if spacing < 1:
        raise InvalidConfigError(f"spacing must be positive, got {spacing}")
    offsets = tuple(range(0, m, spacing))
    names = [f"relu{i}" for i in offsets]
    const_index = len(names)
    names.append("const")
    return Basis(
        m=m,
        mu=1.0,
        t=spacing,
        seed=0,
        codes=(),
        level_slices=(),
        relu_offsets=offsets,
        relu_start=0,
        const_index=const_index,
        names=tuple(names),
        relu_values=_hinge_rows(m, offsets),
        size_constant=_size_constant(len(names), m),
    )


def _combine_values(basis: Basis, coef_vec: np.ndarray) -> np.ndarray:
    """Evaluate the linear combination ``coef_vec`` over the grid."""
    out = np.zeros(basis.m)
    for h, (start, stop) in enumerate(basis.level_slices):
        seg = coef_vec[start:stop]
        if np.any(seg):
            out += np.repeat(basis.codes[h].entries @ seg, 1 << h)
    n_relu = len(basis.relu_offsets)
    if n_relu:
        seg = coef_vec[basis.relu_start : basis.relu_start + n_relu]
        if np.any(seg):
            out += seg @ basis.relu_values
    if basis.const_index is not None and coef_vec[basis.const_index]:
        out += coef_vec[basis.const_index]
    return out


def _mk_cert(basis: Basis, target: str, coef_vec: np.ndarray, target_values: np.ndarray) -> ApproxCertificate:
    approx = _combine_values(basis, coef_vec)
    sup = float(np.max(np.abs(approx - target_values)))
    lam = float(np.sum(np.abs(coef_vec)))
    if basis.const_index is not None:
        lam -= abs(float(coef_vec[basis.const_index]))
    return ApproxCertificate(target, sup, lam, coef_vec, basis.names, basis.const_index)


def approximate_dyadic_interval(basis: Basis, iv: DyadicInterval) -> ApproxCertificate:
    """Coefficients for one aligned block: a single code row."""
    if iv.m != basis.m:
        raise ShapeError(f"interval grid {iv.m} does not match basis grid {basis.m}")
    if iv.level >= len(basis.level_slices):
        raise CorruptBasisError(f"basis has no level {iv.level}")
    start, stop = basis.level_slices[iv.level]
    coef = np.zeros(basis.size)
    coef[start:stop] = basis.codes[iv.level].entries[iv.offset]
    vals = np.zeros(basis.m)
    vals[iv.lo : iv.hi + 1] = 1.0
    return _mk_cert(basis, f"dyadic_h{iv.level}_a{iv.offset}", coef, vals)


def _interval_coef(basis: Basis, a: int, b: int) -> np.ndarray:
    coef = np.zeros(basis.size)
    for iv in dyadic_decompose(a, b, basis.m):
        start, stop = basis.level_slices[iv.level]
        coef[start:stop] += basis.codes[iv.level].entries[iv.offset]
    return coef


def approximate_interval(basis: Basis, a: int, b: int) -> ApproxCertificate:
    """Coefficients for the indicator of ``{a, ..., b}``.

    Sums the code rows of the canonical dyadic cover; the certified
    error is at most ``mu`` per cover piece, hence
    ``2 mu log2(m)`` overall.
    """
    if not basis.level_slices:
        raise CorruptBasisError("basis carries no level sections")
    vals = np.zeros(basis.m)
    vals[a : b + 1] = 1.0  # bounds validated by dyadic_decompose
    return _mk_cert(basis, f"interval_{a}_{b}", _interval_coef(basis, a, b), vals)


def _require_hinges(basis: Basis):
    if basis.t is None or basis.relu_values is None or basis.const_index is None:
        raise CorruptBasisError("operation needs hinge and constant sections; build with build_cvx_basis")


def _relu_coef(basis: Basis, j: int) -> np.ndarray:
    """Coefficient vector for the unnormalized hinge at ``j`` (cached)."""
    if j in basis._relu_certs:
        return basis._relu_certs[j]
    anchor = j // basis.t
    coef = np.zeros(basis.size)
    coef[basis.relu_start + anchor] = basis.m - 1  # undo element normalization
    # peel one tail indicator per step down from the anchor hinge
    for i in range(basis.relu_offsets[anchor] + 1, j + 1):
        coef -= _interval_coef(basis, i, basis.m - 1)
    basis._relu_certs[j] = coef
    return coef


def approximate_relu(basis: Basis, j: int) -> ApproxCertificate:
    """Coefficients for the hinge ``y -> max(y - j, 0)``.

    Starts from the stored hinge at ``t * floor(j / t)`` and subtracts
    one interval certificate per step, using the identity that
    consecutive hinges differ by a tail indicator.  At most ``t - 1``
    intervals are spent, so the certified error is bounded by
    ``(t - 1) * 2 mu log2(m)``.
    """
    _require_hinges(basis)
    if not 0 <= j <= basis.m - 1:
        raise IndexOutOfRangeError(f"hinge location {j} outside grid of size {basis.m}")
    y = np.arange(basis.m, dtype=np.float64)
    return _mk_cert(basis, f"relu_{j}", _relu_coef(basis, j).copy(), np.maximum(y - j, 0.0))


def approximate_convex(basis: Basis, f: GridFunction, tol: float = 1e-9, target_name: str = "convex") -> ApproxCertificate:
    """Coefficients for any admissible function via its hinge expansion.

    Expands ``f`` exactly into a constant, the identity hinge, and
    nonnegative curvature weights, then routes each hinge through
    :func:`approximate_relu`.  The curvature weights sum to at most 2
    and the slope term has weight at most 1, so the error is at most
    three times the worst hinge error.
    """
    _require_hinges(basis)
    if f.m != basis.m:
        raise ShapeError(f"target grid {f.m} does not match basis grid {basis.m}")
    if f.m >= 2 and np.max(np.abs(np.diff(f.values))) > 1.0 + tol:
        raise NotConvexLipschitzError("slope exceeds 1", constraint="lipschitz")
    if f.m >= 3 and np.min(np.diff(f.values, n=2)) < -tol:
        raise NotConvexLipschitzError("second difference below 0", constraint="convexity")
    c0, c1, c2 = taylor_expand(f)
    coef = np.zeros(basis.size)
    coef[basis.const_index] = c0
    if c1:
        coef += c1 * _relu_coef(basis, 0)
    for i, w in enumerate(c2):
        if w:
            coef += w * _relu_coef(basis, i + 1)
    return _mk_cert(basis, target_name, coef, f.values)


def _interval_approx_values(basis: Basis, a: int, b: int) -> np.ndarray:
    """Grid values of the interval approximation, via cached Grams."""
    out = np.zeros(basis.m)
    for iv in dyadic_decompose(a, b, basis.m):
        out += np.repeat(basis.level_gram(iv.level)[iv.offset], 1 << iv.level)
    return out


def _relu_approx_rows(basis: Basis):
    """Yield ``(j, approx_values)`` for every hinge, sharing work per block."""
    _require_hinges(basis)
    m = basis.m
    for a, i0 in enumerate(basis.relu_offsets):
        approx = basis.relu_values[a] * (m - 1)
        yield i0, approx.copy()
        for j in range(i0 + 1, min(i0 + basis.t, m)):
            approx = approx - _interval_approx_values(basis, j, m - 1)
            yield j, approx


def relu_error_sweep(basis: Basis, with_lambda: bool = False):
    """Certified residuals for every hinge target on the grid.

    Streams block by block so the full approximation matrix is never
    held.  With ``with_lambda`` the coefficient vectors are accumulated
    too and their non-constant absolute sums returned alongside.
    """
    m = basis.m
    y = np.arange(m, dtype=np.float64)
    errors = np.empty(m)
    lambdas = np.empty(m) if with_lambda else None
    coef = None
    for j, approx in _relu_approx_rows(basis):
        errors[j] = np.max(np.abs(approx - np.maximum(y - j, 0.0)))
        if with_lambda:
            if j % basis.t == 0:
                coef = np.zeros(basis.size)
                coef[basis.relu_start + j // basis.t] = m - 1
            else:
                coef = coef - _interval_coef(basis, j, m - 1)
            lambdas[j] = np.sum(np.abs(coef))
    return (errors, lambdas) if with_lambda else errors


def convex_error_sweep(basis: Basis, fs: list[GridFunction]) -> np.ndarray:
    """Certified residuals for a batch of admissible targets.

    Materializes the hinge approximation matrix once (O(m^2) memory),
    then each target costs one matrix-vector product.  Residuals are
    exact; only the route to them is shared.
    """
    m = basis.m
    A = np.empty((m, m))
    for j, approx in _relu_approx_rows(basis):
        A[j] = approx
    out = np.empty(len(fs))
    for i, f in enumerate(fs):
        if f.m != m:
            raise ShapeError(f"target grid {f.m} does not match basis grid {m}")
        if not is_discrete_convex_lipschitz(f, 1e-9):
            raise NotConvexLipschitzError(f"target {i} is not admissible")
        c0, c1, c2 = taylor_expand(f)
        w = np.zeros(m)
        w[0] = c1
        w[1 : m - 1] = c2
        out[i] = np.max(np.abs(c0 + w @ A - f.values))
    return out


def lifted_element_order(basis: Basis) -> list[int]:
    """Element positions in family order: constant first, rest as stored."""
    _require_hinges(basis)
    return [basis.const_index] + [p for p in range(basis.size) if p != basis.const_index]


def lift_to_unit_interval(basis: Basis, delta: float) -> StatisticsFamily:
    """Read basis elements as statistics of a label in [0, 1].

    Statistic ``s_e(y)`` is element ``e`` evaluated at grid point
    ``floor(y * m)`` (clamped at the top).  The constant element becomes
    ``s_0``.  Any convex 1-slope function of the label is then a
    coefficient combination of these statistics within ``3 delta / 2``:
    snapping ``y`` to its grid point costs at most ``1/m <= delta``, and
    the grid-level certificate costs at most ``1/2`` in grid value
    units, which divides down by ``m``.

    Materializes all element values; meant for the moderate ``m`` this
    accuracy regime needs, not for size sweeps.
    """
    _require_hinges(basis)
    m = basis.m
    if m < 1.0 / delta - 1e-9:
        raise InvalidConfigError(f"grid of size {m} is too coarse for target accuracy {delta}")
    order = lifted_element_order(basis)
    rows = [basis.element_values(p) for p in order]

    def reader(row):
        def stat(y):
            idx = np.clip((np.asarray(y, dtype=np.float64) * m).astype(np.int64), 0, m - 1)
            return row[idx]

        return stat

    return StatisticsFamily(f"cvx_lift_m{m}", tuple(reader(r) for r in rows), basis.size - 1)


def minimax_fit(basis: Basis, target: GridFunction) -> tuple[dict[str, float], float]:
    """Best-possible sup-norm fit of ``target`` over the basis span.

    Solves the linear program ``min eps  s.t.  |E c - target| <= eps``
    over all elements plus a constant (added if the basis lacks one).
    Returns the coefficient map and the residual of the returned
    solution, recomputed outside the solver.
    """
    if target.m != basis.m:
        raise ShapeError(f"target grid {target.m} does not match basis grid {basis.m}")
    m, n = basis.m, basis.size
    E = np.empty((m, n))
    for pos in range(n):
        E[:, pos] = basis.element_values(pos)
    names = list(basis.names)
    if basis.const_index is None:
        E = np.hstack([E, np.ones((m, 1))])
        names.append("const")
        n += 1
    c = np.zeros(n + 1)
    c[-1] = 1.0
    col = -np.ones((m, 1))
    A_ub = np.block([[E, col], [-E, col]])
    b_ub = np.concatenate([target.values, -target.values])
    res = linprog(c, A_ub=A_ub, b_ub=b_ub, bounds=[(None, None)] * n + [(0, None)], method="highs")
    if not res.success:
        raise NumericalError(f"sup-norm fit did not converge: {res.message}")
    coef = res.x[:-1]
    resid = float(np.max(np.abs(E @ coef - target.values)))
    out = {names[i]: float(coef[i]) for i in np.nonzero(np.abs(coef) > 1e-12)[0]}
    return out, resid


def certify_basis(basis: Basis) -> dict:
    """Re-verify a basis from scratch; used by the CLI after reload.

    Checks element ranges, code certificates against the stored ``mu``,
    and (when hinge sections exist) the full hinge error sweep against
    the construction bound.  Raises :class:`CorruptBasisError` on any
    violation; returns a summary of what was measured.
    """
    report: dict = {"m": basis.m, "mu": basis.mu, "size": basis.size}
    worst_off = 0.0
    for h, code in enumerate(basis.codes):
        g = np.abs(gram(code))
        if np.max(np.abs(np.diagonal(g) - 1.0)) > 1e-9:
            raise CorruptBasisError(f"level {h} rows lost unit norm")
        np.fill_diagonal(g, 0.0)
        worst = float(g.max()) if g.size else 0.0
        if worst > basis.mu:
            raise CorruptBasisError(f"level {h} off-diagonal {worst} exceeds bound {basis.mu}")
        worst_off = max(worst_off, worst)
    report["worst_offdiag"] = worst_off
    if basis.relu_values is not None:
        expect = _hinge_rows(basis.m, basis.relu_offsets)
        if not np.array_equal(expect, basis.relu_values):
            raise CorruptBasisError("hinge rows do not match their offsets")
        if basis.t is not None and basis.level_slices:
            errors = relu_error_sweep(basis)
            bound = (basis.t - 1) * 2.0 * basis.mu * log2(basis.m) + 1e-9
            if float(errors.max()) > bound:
                raise CorruptBasisError(f"hinge error {errors.max()} exceeds bound {bound}")
            report["worst_hinge_error"] = float(errors.max())
    return report


def save_basis(basis: Basis, path) -> None:
    """Dump to .npz; :func:`load_basis` restores and revalidates shape."""
    payload = {
        "m": basis.m,
        "mu": basis.mu,
        "t": -1 if basis.t is None else basis.t,
        "seed": basis.seed,
        "has_const": basis.const_index is not None,
        "relu_offsets": np.asarray(basis.relu_offsets, dtype=np.int64),
        "n_levels": len(basis.codes),
    }
    for h, code in enumerate(basis.codes):
        payload[f"level{h}"] = code.entries
        payload[f"level{h}_seed"] = code.seed
    np.savez_compressed(path, **payload)


def load_basis(path) -> Basis:
    with np.load(path) as data:
        m = int(data["m"])
        mu = float(data["mu"])
        t = int(data["t"])
        seed = int(data["seed"])
        has_const = bool(data["has_const"])
        offsets = tuple(int(i) for i in data["relu_offsets"])
        codes = []
        names: list[str] = []
        slices = []
        for h in range(int(data["n_levels"])):
            entries = data[f"level{h}"]
            code = CodeMatrix(entries.shape[0], entries.shape[1], entries, mu, int(data[f"level{h}_seed"]))
            start = len(names)
            names.extend(f"w{h}.{c}" for c in range(code.k))
            slices.append((start, len(names)))
            codes.append(code)
    relu_start = len(names) if offsets else -1
    names.extend(f"relu{i}" for i in offsets)
    const_index = None
    if has_const:
        const_index = len(names)
        names.append("const")
    return Basis(
        m=m,
        mu=mu,
        t=None if t < 0 else t,
        seed=seed,
        codes=tuple(codes),
        level_slices=tuple(slices),
        relu_offsets=offsets,
        relu_start=relu_start,
        const_index=const_index,
        names=tuple(names),
        relu_values=_hinge_rows(m, offsets) if offsets else None,
        size_constant=_size_constant(len(names), m),
    )
