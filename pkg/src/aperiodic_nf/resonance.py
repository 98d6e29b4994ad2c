"""Resonance modules, non-resonance checks and convexity constants."""
from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np


# ----------------------------------------------------------------------
# integer normal form


def smith_diagonal(rows: Sequence[Sequence[int]]) -> list[int]:
    """Nonzero diagonal of the Smith normal form of an integer matrix.

    Entries are positive and each divides the next; their count is the rank.
    """
    A = [[int(x) for x in r] for r in rows]
    m = len(A)
    n = len(A[0]) if m else 0
    diag = []
    t = 0
    while t < min(m, n):
        pivot = None
        for i in range(t, m):
            for j in range(t, n):
                if A[i][j] and (pivot is None or abs(A[i][j]) < abs(A[pivot[0]][pivot[1]])):
                    pivot = (i, j)
        if pivot is None:
            break
        i, j = pivot
        A[t], A[i] = A[i], A[t]
        for row in A:
            row[t], row[j] = row[j], row[t]
        while True:
            a = A[t][t]
            moved = False
            for i in range(t + 1, m):
                q = A[i][t] // a
                if q:
                    A[i] = [x - q * y for x, y in zip(A[i], A[t])]
                if A[i][t]:
                    A[t], A[i] = A[i], A[t]
                    moved = True
                    break
            if moved:
                continue
            for j in range(t + 1, n):
                q = A[t][j] // a
                if q:
                    for row in A:
                        row[j] -= q * row[t]
                if A[t][j]:
                    for row in A:
                        row[t], row[j] = row[j], row[t]
                    moved = True
                    break
            if moved:
                continue
            # row t and column t are clear; enforce divisibility of the rest
            bad = next(((i, j) for i in range(t + 1, m) for j in range(t + 1, n)
                        if A[i][j] % a), None)
            if bad is None:
                break
            A[t] = [x + y for x, y in zip(A[t], A[bad[0]])]
        diag.append(abs(A[t][t]))
        t += 1
    return diag


@dataclass(frozen=True)
class ModuleCheck:
    is_module: bool
    reason: str
    elementary_divisors: tuple[int, ...]
    rank: int


def check_module(basis: Sequence[Sequence[int]], n: int | None = None) -> ModuleCheck:
    """Decide whether ``basis`` spans a resonance module (saturated lattice)."""
    basis = [tuple(int(x) for x in b) for b in basis]
    if not basis:
        return ModuleCheck(True, "zero module", (), 0)
    dims = {len(b) for b in basis}
    if len(dims) != 1 or (n is not None and dims != {n}):
        raise ValueError("basis vectors must share the ambient dimension")
    divs = tuple(smith_diagonal(basis))
    if len(divs) < len(basis):
        return ModuleCheck(False, f"dependent basis: rank {len(divs)} < {len(basis)} vectors",
                           divs, len(divs))
    if any(d != 1 for d in divs):
        return ModuleCheck(False, f"not saturated: elementary divisors {divs}", divs, len(divs))
    return ModuleCheck(True, "saturated", divs, len(divs))


def is_resonance_module(basis: Sequence[Sequence[int]]) -> bool:
    return check_module(basis).is_module


@dataclass(frozen=True)
class ResonanceModule:
    """A saturated sublattice of Z^n given by a basis (empty basis = {0})."""

    n: int
    basis: tuple[tuple[int, ...], ...] = ()

    def __post_init__(self):
        basis = tuple(tuple(int(x) for x in b) for b in self.basis)
        object.__setattr__(self, "basis", basis)
        if any(len(b) != self.n for b in basis):
            raise ValueError(f"basis vectors must have {self.n} components")
        chk = check_module(basis, self.n)
        if not chk.is_module:
            raise ValueError(f"not a resonance module: {chk.reason}")

    @classmethod
    def zero(cls, n: int) -> "ResonanceModule":
        return cls(n, ())

    @classmethod
    def full(cls, n: int) -> "ResonanceModule":
        return cls(n, tuple(tuple(int(i == j) for j in range(n)) for i in range(n)))

    @property
    def dim(self) -> int:
        return len(self.basis)

    def _projector(self) -> np.ndarray:
        if not self.basis:
            return np.zeros((self.n, self.n))
        B = np.array(self.basis, dtype=float).T
        Q, _ = np.linalg.qr(B)
        return Q @ Q.T

    def contains(self, k) -> np.ndarray | bool:
        """Membership for one harmonic or an array of harmonics (rows).

        Saturation makes membership equivalent to lying in the real span.
        """
        K = np.atleast_2d(np.asarray(k, dtype=float))
        if not self.basis:
            out = ~K.any(axis=1)
        else:
            resid = K - K @ self._projector()
            out = np.abs(resid).max(axis=1) <= 1e-9 * np.maximum(1.0, np.abs(K).max(axis=1))
        return bool(out[0]) if np.ndim(k) == 1 else out

    def span_projector(self) -> np.ndarray:
        return self._projector()


# ----------------------------------------------------------------------
# frequency geometry


def _hessian_at(h, I) -> np.ndarray:
    n = h.n
    H = np.empty((n, n))
    for i in range(n):
        di = h.partial_action(i)
        for j in range(n):
            H[i, j] = di.partial_action(j).evaluate(I, np.zeros(n), 0.0).real
    return 0.5 * (H + H.T)


def frequency(h, I) -> np.ndarray:
    """``omega(I) = grad h(I)`` for an action-only series ``h``."""
    return np.array([h.partial_action(i).evaluate(I, np.zeros(h.n), 0.0).real
                     for i in range(h.n)])


def action_grid(lower, upper, points: int = 11) -> np.ndarray:
    """Uniform grid with ``points`` nodes per dimension on a box."""
    lower = np.atleast_1d(np.asarray(lower, dtype=float))
    upper = np.atleast_1d(np.asarray(upper, dtype=float))
    axes = [np.linspace(a, b, points) for a, b in zip(lower, upper)]
    return np.array(list(itertools.product(*axes)))


@dataclass(frozen=True)
class ConvexityReport:
    m: float
    M: float
    convex: bool


def convexity_constants(spec, sample) -> ConvexityReport:
    """Smallest |<H v, v>| / |v|^2 and largest operator norm of the Hessian."""
    h = getattr(spec, "h", spec)
    sample = np.atleast_2d(np.asarray(sample, dtype=float))
    if len(sample) == 0:
        raise ValueError("sample must be nonempty")
    m_min, M_max = np.inf, 0.0
    for I in sample:
        ev = np.linalg.eigvalsh(_hessian_at(h, I))
        M_max = max(M_max, float(np.abs(ev).max()))
        definite = ev.min() > 0 or ev.max() < 0
        m_min = min(m_min, float(np.abs(ev).min()) if definite else 0.0)
    return ConvexityReport(m=m_min, M=M_max, convex=m_min > 0)


def harmonics_below(n: int, N: int) -> np.ndarray:
    """All nonzero k in Z^n with |k| < N, with a positive first nonzero entry."""
    rng = range(-(N - 1), N)
    ks = [k for k in itertools.product(rng, repeat=n)
          if 0 < sum(map(abs, k)) < N and next(x for x in k if x) > 0]
    return np.array(ks, dtype=np.int64).reshape(-1, n)


@dataclass
class NonresonanceReport:
    passed: bool
    min_divisor: float
    offender: tuple[int, ...] | None
    point: tuple[float, ...] | None
    alpha: float
    N: int
    delta: float
    hessian_bound: float
    rows: list = field(default_factory=list, repr=False)

    def margin(self, k) -> float:
        return self.hessian_bound * self.delta * float(np.abs(k).sum())

    def to_dict(self) -> dict:
        return {"passed": self.passed, "min_divisor": self.min_divisor,
                "offender": list(self.offender) if self.offender else None,
                "point": list(self.point) if self.point else None,
                "alpha": self.alpha, "N": self.N, "delta": self.delta,
                "hessian_bound": self.hessian_bound,
                "margin_rule": "M_hess * delta * |k|"}

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            n = len(self.rows[0][0]) if self.rows else 0
            w.writerow([f"I{i + 1}" for i in range(n)]
                       + ["min_slack", "divisor"] + [f"k{i + 1}" for i in range(n)] + ["ok"])
            for I, slack, div, k, ok in self.rows:
                w.writerow([repr(float(x)) for x in I] + [repr(slack), repr(div)]
                           + [int(x) for x in k] + [int(ok)])


def check_nonresonance(spec, sample, module: ResonanceModule, alpha: float, N: int,
                       delta: float, hessian_bound: float | None = None) -> NonresonanceReport:
    """Verify ``|<omega(I), k>| > alpha + M_hess*delta*|k|`` for k outside the module.

    Every sample point and every ``0 < |k| < N`` not in ``module`` is checked;
    the Lipschitz margin covers the complex ``delta``-extension of each point.
    """
    if N < 1 or alpha <= 0:
        raise ValueError("need N >= 1 and alpha > 0")
    h = getattr(spec, "h", spec)
    sample = np.atleast_2d(np.asarray(sample, dtype=float))
    if hessian_bound is None:
        hessian_bound = convexity_constants(h, sample).M
    ks = harmonics_below(h.n, N)
    if len(ks):
        ks = ks[~np.asarray(module.contains(ks), dtype=bool).reshape(-1)]
    rows = []
    best = (np.inf, None, None)      # (divisor - margin - alpha, k, I)
    min_div = np.inf
    for I in sample:
        if len(ks) == 0:
            rows.append((tuple(I), np.inf, np.inf, (0,) * h.n, True))
            continue
        om = frequency(h, I)
        div = np.abs(ks @ om)
        slack = div - hessian_bound * delta * np.abs(ks).sum(axis=1) - alpha
        j = int(np.argmin(slack))
        rows.append((tuple(I), float(slack[j]), float(div[j]), tuple(ks[j]), bool(slack[j] > 0)))
        min_div = min(min_div, float(div.min()))
        if slack[j] < best[0]:
            best = (float(slack[j]), tuple(int(x) for x in ks[j]), tuple(float(x) for x in I))
    passed = all(r[4] for r in rows)
    if best[1] is not None:
        jmin = [r for r in rows if r[3] == best[1] and r[0] == best[2]][0]
        md = jmin[2]
    else:
        md = np.inf
    return NonresonanceReport(passed=passed, min_divisor=float(md), offender=best[1],
                              point=best[2], alpha=alpha, N=N, delta=delta,
                              hessian_bound=float(hessian_bound), rows=rows)


def fast_drift_distance(I, I0, module: ResonanceModule) -> float:
    """Euclidean distance from ``I`` to the plane ``I0 + span(module)``."""
    I = np.asarray(I, dtype=float)
    I0 = np.asarray(I0, dtype=float)
    if I.shape != (module.n,) or I0.shape != (module.n,):
        raise ValueError("dimension mismatch")
    v = I - I0
    return float(np.linalg.norm(v - module.span_projector() @ v))
