"""Certified low-rank sign factorizations of the identity.

A code matrix is an ``n x k`` array with entries ``+-1/sqrt(k)`` whose
Gram matrix ``V V^T`` has unit diagonal exactly and off-diagonal entries
bounded by ``mu`` in magnitude.  Rows act as nearly orthogonal unit
vectors of low ambient dimension; downstream, row ``i`` stands in for
the ``i``-th standard basis vector at a ``k / n`` compression.

Two construction routes, both certified by an explicit Gram computation:

* when the next power of two above ``n`` does not exceed the generic
  column budget, rows are drawn from a Sylvester orthogonal sign matrix,
  making the Gram matrix the identity exactly;
* otherwise entries are i.i.d. uniform signs, and construction retries
  over derived seeds until the measured off-diagonal bound holds.

The column budget is ``k = ceil(2 (2 ln n + ln 200) / mu^2)``, a union
bound sized so a random attempt fails with probability at most 1%.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import ceil, log

import numpy as np
from scipy.linalg import hadamard

from .errors import CodeConstructionError, InvalidConfigError, ShapeError

__all__ = [
    "CodeMatrix",
    "column_budget",
    "build_code_matrix",
    "gram",
    "gram_offdiag_max",
    "save_code_matrix",
    "load_code_matrix",
]

_MAX_ATTEMPTS = 16


@dataclass(frozen=True, eq=False)
class CodeMatrix:
    """An ``n x k`` sign matrix scaled to unit rows, with its certificate.

    ``mu`` is the off-diagonal bound the instance was certified against
    at construction, not merely requested.  ``seed`` records the base
    seed so the construction replays exactly.
    """

    n: int
    k: int
    entries: np.ndarray
    mu: float
    seed: int

    def __post_init__(self):
        ent = np.asarray(self.entries, dtype=np.float64)
        if ent.shape != (self.n, self.k):
            raise ShapeError(f"entries shape {ent.shape} does not match ({self.n}, {self.k})")
        scale = 1.0 / np.sqrt(self.k)
        if not np.all(np.abs(np.abs(ent) - scale) < 1e-12):
            raise ShapeError("entries must all have magnitude 1/sqrt(k)")
        ent = ent.copy()
        ent.flags.writeable = False
        object.__setattr__(self, "entries", ent)


def column_budget(n: int, mu: float) -> int:
    """Generic column count for ``n`` rows at off-diagonal bound ``mu``."""
    return max(1, ceil(2.0 * (2.0 * log(n) + log(200.0)) / (mu * mu)))


def gram(code: CodeMatrix) -> np.ndarray:
    """The full ``n x n`` Gram matrix ``V V^T``."""
    return code.entries @ code.entries.T


def gram_offdiag_max(code: CodeMatrix) -> float:
    """Largest off-diagonal Gram magnitude, computed exactly; 0 if n = 1."""
    if code.n == 1:
        return 0.0
    g = np.abs(gram(code))
    np.fill_diagonal(g, 0.0)
    return float(g.max())


def _certify(entries: np.ndarray, mu: float) -> tuple[bool, float]:
    g = entries @ entries.T
    d = np.abs(np.diagonal(g) - 1.0)
    if d.max() > 1e-12:
        return False, float("inf")
    g = np.abs(g)
    np.fill_diagonal(g, 0.0)
    worst = float(g.max()) if g.size else 0.0
    return worst <= mu, worst


def build_code_matrix(n: int, mu: float, seed: int = 0, max_attempts: int = _MAX_ATTEMPTS) -> CodeMatrix:
    """Construct and certify a code matrix for ``n`` rows at bound ``mu``.

    Deterministic in ``(n, mu, seed)``.  Prefers the exact orthogonal
    route whenever it needs no more columns than the generic budget;
    that route certifies with off-diagonal exactly zero.  The random
    route redraws from seeds derived from ``(seed, attempt)`` until the
    measured bound holds, and raises after ``max_attempts`` redraws with
    the best bound seen attached.
    """
    if n < 1:
        raise InvalidConfigError(f"need at least one row, got n={n}")
    if not 0.0 < mu <= 1.0:
        raise InvalidConfigError(f"off-diagonal bound must lie in (0, 1], got {mu}")
    k_generic = column_budget(n, mu)
    k_exact = 1 << max(0, (n - 1).bit_length())
    if k_exact <= k_generic:
        h = hadamard(k_exact).astype(np.float64)[:n] / np.sqrt(k_exact)
        ok, worst = _certify(h, mu)
        if not ok:  # orthogonal rows cannot fail; guard against misuse
            raise CodeConstructionError("exact route failed certification", worst)
        return CodeMatrix(n, k_exact, h, mu, seed)
    best = float("inf")
    for attempt in range(max_attempts):
        rng = np.random.default_rng([seed, attempt])
        signs = rng.integers(0, 2, size=(n, k_generic)).astype(np.float64) * 2.0 - 1.0
        entries = signs / np.sqrt(k_generic)
        ok, worst = _certify(entries, mu)
        best = min(best, worst)
        if ok:
            return CodeMatrix(n, k_generic, entries, mu, seed)
    raise CodeConstructionError(
        f"no certificate after {max_attempts} attempts (n={n}, mu={mu})", best
    )


def save_code_matrix(code: CodeMatrix, path) -> None:
    """Dump to an .npz file; :func:`load_code_matrix` restores it."""
    np.savez(
        path,
        n=code.n,
        k=code.k,
        entries=code.entries,
        mu=code.mu,
        seed=code.seed,
    )


def load_code_matrix(path) -> CodeMatrix:
    with np.load(path) as data:
        return CodeMatrix(
            int(data["n"]),
            int(data["k"]),
            data["entries"],
            float(data["mu"]),
            int(data["seed"]),
        )
