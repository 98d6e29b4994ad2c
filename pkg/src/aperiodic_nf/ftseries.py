"""Truncated Fourier-Taylor series in (phi, I - I0, xi).

A series is a finite sum

    sum c[k, m, p] * (I - I0)**m * exp(i k.phi) * xi**p

with harmonics ``|k| <= K_max``, action degree ``|m| <= D_I`` and slow-time
degree ``p <= D_xi`` (``|.|`` is the l1 norm). Storage is one coefficient row
per harmonic; a row holds every admissible ``(m, p)`` monomial in a fixed
layout shared by all series with the same dimension and caps.

Products are truncated at the caps. Coefficients dropped by truncation or by
pruning are tallied in :attr:`FTSeries.defect`: the sum of their magnitudes,
carried through sums additively and through products weighted by the l1 size
of the other factor. It is a diagnostic, so truncation is never silent, not
a rigorous error bound.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from itertools import product as iproduct
from math import comb
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy.signal import convolve2d

DEFAULT_PRUNE = 1e-300


class StructureError(ValueError):
    """Raised when two series live in incompatible spaces."""


@dataclass(frozen=True)
class Caps:
    """Truncation caps: max harmonic l1 norm, action degree, xi degree."""

    harmonics: int
    action_degree: int
    xi_degree: int

    def __post_init__(self):
        if min(self.harmonics, self.action_degree, self.xi_degree) < 0:
            raise ValueError(f"caps must be nonnegative, got {self}")


@dataclass(frozen=True)
class DomainParams:
    """Analyticity widths of the complex domain the norms are taken on.

    ``delta`` is the action radius, ``sigma`` the strip width in the angles and
    in xi, ``d`` a restriction fraction: norms are evaluated at the widths
    ``(1 - d) * (delta, sigma)``. ``xi_window`` is the half-width ``X`` of the
    real xi interval on which polynomial xi-dependence is considered.
    """

    delta: float
    sigma: float
    d: float = 0.0
    xi_window: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.delta <= 1.0:
            raise ValueError(f"delta must lie in (0, 1], got {self.delta}")
        if not 0.0 < self.sigma <= 1.0:
            raise ValueError(f"sigma must lie in (0, 1], got {self.sigma}")
        if not 0.0 <= self.d < 1.0:
            raise ValueError(f"d must lie in [0, 1), got {self.d}")
        if self.xi_window < 0.0:
            raise ValueError(f"xi_window must be nonnegative, got {self.xi_window}")

    @property
    def widths(self) -> tuple[float, float]:
        return (1.0 - self.d) * self.delta, (1.0 - self.d) * self.sigma

    def restricted(self, d: float) -> "DomainParams":
        return DomainParams(self.delta, self.sigma, d, self.xi_window)


class _Layout:
    """Index tables for the (m, p) monomials of one (n, D_I, D_xi) space."""

    def __init__(self, n: int, action_degree: int, xi_degree: int):
        self.n = n
        self.action_degree = action_degree
        self.xi_degree = xi_degree
        ms = [m for m in iproduct(range(action_degree + 1), repeat=n)
              if sum(m) <= action_degree]
        ms.sort(key=lambda m: (sum(m), tuple(-x for x in m)))
        monos = [m + (p,) for m in ms for p in range(xi_degree + 1)]
        self.monos = np.array(monos, dtype=np.int64).reshape(len(monos), n + 1)
        self.size = len(monos)
        P = self.size
        box = (action_degree + 1,) * n + (xi_degree + 1,)
        lookup = np.full(box, P, dtype=np.int64)
        lookup[tuple(self.monos.T)] = np.arange(P)
        self.lookup = lookup
        self.degree = self.monos[:, :n].sum(axis=1)
        self.power = self.monos[:, n]

        # product table: out[c] = sum_b a[G[c, b]] * b[b]
        diff = self.monos[:, None, :] - self.monos[None, :, :]
        ok = (diff >= 0).all(axis=2)
        G = np.full((P, P), P, dtype=np.int64)
        G[ok] = lookup[tuple(diff[ok].T)]
        self.mult = G

        # derivative tables: out[c] = factor[c] * in[src[c]]
        self.d_action = []
        for i in range(n):
            up = self.monos.copy()
            up[:, i] += 1
            valid = self.degree + 1 <= action_degree
            src = np.full(P, P, dtype=np.int64)
            src[valid] = lookup[tuple(up[valid].T)]
            self.d_action.append((src, (self.monos[:, i] + 1).astype(float)))
        up = self.monos.copy()
        up[:, n] += 1
        valid = self.power + 1 <= xi_degree
        src = np.full(P, P, dtype=np.int64)
        src[valid] = lookup[tuple(up[valid].T)]
        self.d_xi = (src, (self.power + 1).astype(float))

        # (degree, power) bins, used to bound the mass lost to degree truncation
        self.bins = self.degree * (xi_degree + 1) + self.power
        self.nbins = (action_degree + 1, xi_degree + 1)

    def index(self, m: Sequence[int], p: int) -> int | None:
        m = tuple(int(x) for x in m)
        if len(m) != self.n or min(m, default=0) < 0 or p < 0:
            return None
        if sum(m) > self.action_degree or p > self.xi_degree:
            return None
        return int(self.lookup[m + (int(p),)])

    def weights(self, delta: float, xi_bound: float) -> np.ndarray:
        return delta ** self.degree.astype(float) * xi_bound ** self.power.astype(float)


@lru_cache(maxsize=64)
def _layout(n: int, action_degree: int, xi_degree: int) -> _Layout:
    return _Layout(n, action_degree, xi_degree)


def _merge(harmonics: np.ndarray, blocks: np.ndarray):
    """Sum rows sharing a harmonic; return lexicographically sorted rows."""
    if len(harmonics) == 0:
        return harmonics, blocks
    uniq, inv = np.unique(harmonics, axis=0, return_inverse=True)
    inv = inv.ravel()
    if len(uniq) == len(harmonics):
        out = np.empty_like(blocks)
        out[inv] = blocks
        return uniq, out
    order = np.argsort(inv, kind="stable")
    starts = np.flatnonzero(np.r_[True, np.diff(inv[order]) != 0])
    return uniq, np.add.reduceat(blocks[order], starts, axis=0)


class FTSeries:
    """Immutable truncated Fourier-Taylor-xi series.

    Parameters
    ----------
    n : int
        Number of angle/action pairs.
    center : array_like
        Taylor expansion point ``I0``.
    caps : Caps
        Truncation caps.
    harmonics : array_like, shape (N, n)
        Integer harmonics of the stored rows.
    blocks : array_like, shape (N, P)
        Coefficient rows in the monomial layout of ``(n, caps)``.
    real : bool
        If set, the series is symmetrized so that
        ``c[-k, m, p] == conj(c[k, m, p])``.
    defect : float
        Inherited truncation/pruning mass.
    prune : float
        Coefficients with magnitude below this are dropped (mass -> defect).
    """

    __slots__ = ("n", "center", "caps", "harmonics", "blocks", "real",
                 "defect", "prune", "_layout")

    def __init__(self, n, center, caps, harmonics=None, blocks=None, real=False,
                 defect=0.0, prune=DEFAULT_PRUNE, _canonical=False):
        self.n = int(n)
        if self.n < 1:
            raise ValueError("n must be a positive integer")
        center = np.array(center, dtype=float).reshape(-1)
        if center.shape != (self.n,):
            raise StructureError(f"center must have {self.n} components")
        self.center = center
        self.center.flags.writeable = False
        self.caps = caps
        self.prune = float(prune)
        self._layout = _layout(self.n, caps.action_degree, caps.xi_degree)
        P = self._layout.size
        if harmonics is None:
            harmonics = np.zeros((0, self.n), dtype=np.int64)
            blocks = np.zeros((0, P), dtype=complex)
        harmonics = np.asarray(harmonics, dtype=np.int64).reshape(-1, self.n)
        blocks = np.asarray(blocks, dtype=complex).reshape(len(harmonics), P)
        defect = float(defect)
        if not _canonical:
            keep = np.abs(harmonics).sum(axis=1) <= caps.harmonics
            if not keep.all():
                defect += float(np.abs(blocks[~keep]).sum())
                harmonics, blocks = harmonics[keep], blocks[keep]
            harmonics, blocks = _merge(harmonics, blocks)
            if real:
                both_h = np.concatenate([harmonics, -harmonics])
                both_b = np.concatenate([blocks, blocks.conj()])
                harmonics, blocks = _merge(both_h, both_b)
                blocks = 0.5 * blocks
            small = np.abs(blocks) < self.prune
            if small.any():
                defect += float(np.abs(blocks[small]).sum())
                blocks = np.where(small, 0.0, blocks)
            nz = (blocks != 0).any(axis=1)
            harmonics, blocks = harmonics[nz], blocks[nz]
        self.harmonics = harmonics
        self.blocks = blocks
        self.harmonics.flags.writeable = False
        self.blocks.flags.writeable = False
        self.real = bool(real)
        self.defect = defect

    # ------------------------------------------------------------------
    # construction helpers

    def _new(self, harmonics, blocks, real=None, defect=0.0, canonical=False):
        return FTSeries(self.n, self.center, self.caps, harmonics, blocks,
                        real=self.real if real is None else real,
                        defect=defect, prune=self.prune, _canonical=canonical)

    def zero_like(self, real=True) -> "FTSeries":
        return self._new(None, None, real=real, canonical=True)

    @classmethod
    def from_terms(cls, terms: Mapping, n, caps, center=None, real=False,
                   prune=DEFAULT_PRUNE) -> "FTSeries":
        """Build a series from ``{(k, m, p): coeff}``.

        With ``real=True`` the result is the real part of the given sum.
        Terms outside the caps raise ``ValueError``.
        """
        center = np.zeros(n) if center is None else center
        lay = _layout(int(n), caps.action_degree, caps.xi_degree)
        rows: dict[tuple, np.ndarray] = {}
        for (k, m, p), c in terms.items():
            k = tuple(int(x) for x in k)
            if len(k) != n:
                raise StructureError(f"harmonic {k} does not have {n} components")
            idx = lay.index(m, p)
            if idx is None or sum(abs(x) for x in k) > caps.harmonics:
                raise ValueError(f"term {(k, tuple(m), p)} exceeds caps {caps}")
            row = rows.setdefault(k, np.zeros(lay.size, dtype=complex))
            row[idx] += complex(c)
        if rows:
            h = np.array(list(rows.keys()), dtype=np.int64)
            b = np.array(list(rows.values()))
        else:
            h = b = None
        return cls(n, center, caps, h, b, real=real, prune=prune)

    @classmethod
    def constant(cls, value, n, caps, center=None, real=None) -> "FTSeries":
        if real is None:
            real = complex(value).imag == 0.0
        return cls.from_terms({((0,) * n, (0,) * n, 0): value}, n, caps,
                              center, real=real)

    @classmethod
    def action(cls, i, n, caps, center=None) -> "FTSeries":
        """The shifted action coordinate ``I_i - I0_i``."""
        m = [0] * n
        m[i] = 1
        return cls.from_terms({((0,) * n, tuple(m), 0): 1.0}, n, caps, center,
                              real=True)

    @classmethod
    def slow_time(cls, n, caps, center=None) -> "FTSeries":
        return cls.from_terms({((0,) * n, (0,) * n, 1): 1.0}, n, caps, center,
                              real=True)

    # ------------------------------------------------------------------
    # inspection

    @property
    def layout(self) -> _Layout:
        return self._layout

    @property
    def coeffs(self) -> dict:
        """Nonzero coefficients as ``{(k, m, p): complex}``."""
        out = {}
        n = self.n
        for k, row in zip(self.harmonics, self.blocks):
            for j in np.flatnonzero(row):
                mono = self._layout.monos[j]
                out[(tuple(int(x) for x in k), tuple(int(x) for x in mono[:n]),
                     int(mono[n]))] = complex(row[j])
        return out

    def coeff(self, k, m, p) -> complex:
        idx = self._layout.index(m, p)
        if idx is None:
            return 0j
        row = self._row_index(k)
        return 0j if row is None else complex(self.blocks[row, idx])

    def _row_index(self, k):
        k = np.asarray(k, dtype=np.int64)
        hit = np.flatnonzero((self.harmonics == k).all(axis=1))
        return int(hit[0]) if len(hit) else None

    def row(self, k) -> np.ndarray:
        r = self._row_index(k)
        if r is None:
            return np.zeros(self._layout.size, dtype=complex)
        return self.blocks[r]

    @property
    def is_zero(self) -> bool:
        return len(self.harmonics) == 0

    def max_abs(self) -> float:
        return float(np.abs(self.blocks).max()) if len(self.blocks) else 0.0

    def l1(self) -> float:
        """Unweighted sum of coefficient magnitudes."""
        return float(np.abs(self.blocks).sum())

    def harmonic_norms(self) -> np.ndarray:
        return np.abs(self.harmonics).sum(axis=1)

    def __repr__(self):
        return (f"FTSeries(n={self.n}, center={self.center.tolist()}, caps={self.caps}, "
                f"rows={len(self.harmonics)}, real={self.real})")

    # ------------------------------------------------------------------
    # structure checks

    def _check(self, other: "FTSeries"):
        if not isinstance(other, FTSeries):
            raise StructureError(f"expected FTSeries, got {type(other).__name__}")
        if other.n != self.n:
            raise StructureError(f"dimension mismatch: {self.n} vs {other.n}")
        if not np.array_equal(other.center, self.center):
            raise StructureError("expansion centers differ")
        if other.caps != self.caps:
            raise StructureError(f"caps differ: {self.caps} vs {other.caps}")

    # ------------------------------------------------------------------
    # linear operations

    def __add__(self, other):
        if isinstance(other, (int, float, complex)):
            other = FTSeries.constant(other, self.n, self.caps, self.center)
        self._check(other)
        return self._new(np.concatenate([self.harmonics, other.harmonics]),
                         np.concatenate([self.blocks, other.blocks]),
                         real=self.real and other.real,
                         defect=self.defect + other.defect)

    __radd__ = __add__

    def __neg__(self):
        return self._new(self.harmonics, -self.blocks, defect=self.defect,
                         canonical=True)

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def scale(self, c) -> "FTSeries":
        c = complex(c)
        if c == 0:
            return self.zero_like(real=self.real)
        real = self.real and c.imag == 0.0
        return self._new(self.harmonics, c * self.blocks, real=real,
                         defect=abs(c) * self.defect, canonical=True)

    def __mul__(self, other):
        if isinstance(other, (int, float, complex, np.number)):
            return self.scale(other)
        return mul(self, other)

    def __rmul__(self, other):
        return self.__mul__(other)

    def __truediv__(self, c):
        return self.scale(1.0 / complex(c))

    def conj_reflect(self) -> "FTSeries":
        """The series of the complex conjugate function (for real arguments)."""
        return self._new(-self.harmonics, self.blocks.conj(), defect=self.defect)

    def select(self, mask) -> "FTSeries":
        """Keep the rows where ``mask`` (over harmonics) is true."""
        mask = np.asarray(mask, dtype=bool)
        return self._new(self.harmonics[mask], self.blocks[mask],
                         defect=self.defect, canonical=True)

    def truncate_degree(self, action_degree: int | None = None) -> "FTSeries":
        """Drop monomials of action degree above ``action_degree``."""
        lay = self._layout
        keep = lay.degree <= (self.caps.action_degree if action_degree is None
                              else action_degree)
        lost = float(np.abs(self.blocks[:, ~keep]).sum())
        return self._new(self.harmonics, np.where(keep, self.blocks, 0.0),
                         defect=self.defect + lost)

    def with_caps(self, caps: Caps) -> "FTSeries":
        """Re-express in another cap set; terms beyond the new caps go to defect."""
        new = _layout(self.n, caps.action_degree, caps.xi_degree)
        out = np.zeros((len(self.harmonics), new.size), dtype=complex)
        lost = 0.0
        for j, mono in enumerate(self._layout.monos):
            idx = new.index(mono[:self.n], mono[self.n])
            if idx is None:
                lost += float(np.abs(self.blocks[:, j]).sum())
            else:
                out[:, idx] = self.blocks[:, j]
        return FTSeries(self.n, self.center, caps, self.harmonics, out,
                        real=self.real, defect=self.defect + lost, prune=self.prune)

    # ------------------------------------------------------------------
    # derivatives

    def partial_phi(self, i: int) -> "FTSeries":
        fac = 1j * self.harmonics[:, i]
        return self._new(self.harmonics, fac[:, None] * self.blocks,
                         defect=self.defect)

    def partial_action(self, i: int) -> "FTSeries":
        src, fac = self._layout.d_action[i]
        return self._apply_shift(src, fac)

    def partial_xi(self) -> "FTSeries":
        src, fac = self._layout.d_xi
        return self._apply_shift(src, fac)

    def _apply_shift(self, src, fac):
        ext = np.concatenate([self.blocks, np.zeros((len(self.blocks), 1))], axis=1)
        return self._new(self.harmonics, ext[:, src] * fac, defect=self.defect)

    # ------------------------------------------------------------------

    def evaluate(self, I, phi, xi) -> complex:
        return evaluate(self, I, phi, xi)

    def to_records(self) -> list[dict]:
        return to_records(self)


def action_polynomial(terms: Iterable, n: int, caps: Caps, center=None,
                      about_origin: bool = False) -> FTSeries:
    """Real action-only series from ``[(m, c), ...]``.

    The monomials are ``(I - I0)**m`` or, with ``about_origin``, ``I**m``, in
    which case they are re-expanded about the center ``I0``.
    """
    center = np.zeros(n) if center is None else np.asarray(center, dtype=float)
    out: dict = {}
    zero = (0,) * n
    for m, c in terms:
        m = tuple(int(x) for x in m)
        if len(m) != n or min(m) < 0:
            raise ValueError(f"bad action exponent {m}")
        if not about_origin:
            out[m] = out.get(m, 0.0) + c
            continue
        # prod_i (x_i + I0_i)^{m_i} = sum_j prod_i binom(m_i, j_i) I0_i^{m_i - j_i} x_i^{j_i}
        for j in iproduct(*(range(mi + 1) for mi in m)):
            w = c
            for mi, ji, ci in zip(m, j, center):
                w *= comb(mi, ji) * ci ** (mi - ji)
            if w != 0:
                out[j] = out.get(j, 0.0) + w
    return FTSeries.from_terms({(zero, m, 0): c for m, c in out.items()}, n, caps, center,
                               real=True)


# ----------------------------------------------------------------------
# ring operations


def add(f: FTSeries, g: FTSeries) -> FTSeries:
    return f + g


def mul(f: FTSeries, g: FTSeries) -> FTSeries:
    """Truncated product; the magnitude lost to the caps is added to ``defect``."""
    f._check(g)
    real = f.real and g.real
    # first-order propagation of the inherited defects, plus the new overflow
    defect = f.defect * g.l1() + g.defect * f.l1() + f.defect * g.defect
    if f.is_zero or g.is_zero:
        return f._new(None, None, real=real, defect=defect, canonical=True)
    if len(f.harmonics) > len(g.harmonics):
        f, g = g, f
    lay = f._layout
    P = lay.size
    Na, Nb = len(f.harmonics), len(g.harmonics)
    ext = np.concatenate([f.blocks, np.zeros((Na, 1))], axis=1)
    MA = ext[:, lay.mult]                       # (Na, P, P)
    prod = MA.reshape(Na * P, P) @ g.blocks.T   # (Na*P, Nb)
    prod = prod.reshape(Na, P, Nb).transpose(0, 2, 1).reshape(Na * Nb, P)
    harm = (f.harmonics[:, None, :] + g.harmonics[None, :, :]).reshape(-1, f.n)

    defect += _degree_overflow_bound(f, g)
    return f._new(harm, prod, real=real, defect=defect)


def _degree_overflow_bound(f: FTSeries, g: FTSeries) -> float:
    """Upper bound on the coefficient mass of the product beyond the degree caps."""
    lay = f._layout
    sa = np.bincount(lay.bins, np.abs(f.blocks).sum(axis=0), minlength=np.prod(lay.nbins))
    sb = np.bincount(lay.bins, np.abs(g.blocks).sum(axis=0), minlength=np.prod(lay.nbins))
    full = convolve2d(sa.reshape(lay.nbins), sb.reshape(lay.nbins))
    kept = full[:lay.nbins[0], :lay.nbins[1]].sum()
    return max(float(full.sum() - kept), 0.0)


def poisson_bracket(f: FTSeries, g: FTSeries) -> FTSeries:
    """Reduced bracket ``sum_i d_phi_i f * d_I_i g - d_I_i f * d_phi_i g``."""
    f._check(g)
    out = f.zero_like(real=f.real and g.real)
    for i in range(f.n):
        out = out + mul(f.partial_phi(i), g.partial_action(i))
        out = out - mul(f.partial_action(i), g.partial_phi(i))
    return out


def partial_xi(f: FTSeries) -> FTSeries:
    return f.partial_xi()


# ----------------------------------------------------------------------
# norms and splitting


def majorant_norm(f: FTSeries, delta: float, sigma: float, xi_window: float) -> float:
    """``sum_k M_k exp(|k| sigma)`` with the coefficient majorant

    ``M_k = sum_{m,p} |c[k,m,p]| delta**|m| (xi_window + sigma)**p``,
    an upper bound for ``sup |f_k|`` on the complex polydisc of radius
    ``delta`` around ``I0`` times the xi rectangle.
    """
    if f.is_zero:
        return 0.0
    w = f._layout.weights(delta, xi_window + sigma)
    Mk = np.abs(f.blocks) @ w
    return float(Mk @ np.exp(sigma * f.harmonic_norms()))


def fourier_norm(f: FTSeries, dom: DomainParams) -> float:
    delta, sigma = dom.widths
    return majorant_norm(f, delta, sigma, dom.xi_window)


def harmonic_split(f: FTSeries, K: int) -> list[FTSeries]:
    """Split ``f`` into blocks ``(s-1)K <= |k| < sK``, ``s = 1, 2, ...``.

    The list has ``ceil((K_max + 1) / K)`` entries and sums to ``f`` exactly.
    """
    if K < 1:
        raise ValueError(f"K must be a positive integer, got {K}")
    count = -(-(f.caps.harmonics + 1) // K)
    norms = f.harmonic_norms()
    parts = []
    for s in range(1, count + 1):
        mask = (norms >= (s - 1) * K) & (norms < s * K)
        parts.append(f.select(mask))
    return parts


def evaluate(f: FTSeries, I, phi, xi) -> complex:
    """Point value ``sum c (I-I0)^m exp(i k.phi) xi^p``."""
    if f.is_zero:
        return 0j
    x = np.asarray(I, dtype=float).reshape(-1) - f.center
    phi = np.asarray(phi, dtype=float).reshape(-1)
    lay = f._layout
    monos = lay.monos
    vals = np.prod(x[None, :] ** monos[:, :f.n], axis=1) * float(xi) ** monos[:, f.n]
    waves = np.exp(1j * (f.harmonics @ phi))
    return complex(waves @ (f.blocks @ vals))


# ----------------------------------------------------------------------
# literal format


def to_records(f: FTSeries) -> list[dict]:
    """Header record followed by one record per nonzero coefficient."""
    header = {"n": f.n, "center": [float(x) for x in f.center],
              "caps": {"K_max": f.caps.harmonics, "D_I": f.caps.action_degree,
                       "D_xi": f.caps.xi_degree},
              "real": f.real}
    recs = [header]
    for (k, m, p), c in sorted(f.coeffs.items()):
        recs.append({"k": list(k), "m": list(m), "p": p, "re": c.real, "im": c.imag})
    return recs


def from_records(records: Iterable[Mapping], caps: Caps | None = None,
                 center=None, n: int | None = None, real: bool | None = None) -> FTSeries:
    """Inverse of :func:`to_records`.

    The header record (the one without a ``k`` field) may be omitted when
    ``n``, ``caps`` and ``center`` are passed explicitly; explicit arguments
    override the header.
    """
    records = list(records)
    header = next((r for r in records if "k" not in r), {})
    terms = [r for r in records if "k" in r]
    if caps is None:
        c = header.get("caps")
        if c is None:
            raise ValueError("series literal needs caps (header record or argument)")
        caps = Caps(int(c["K_max"]), int(c["D_I"]), int(c["D_xi"]))
    if n is None:
        n = header.get("n")
        if n is None:
            n = len(terms[0]["k"]) if terms else None
        if n is None:
            raise ValueError("series literal needs n")
    if center is None:
        center = header.get("center", [0.0] * n)
    if real is None:
        real = bool(header.get("real", False))
    coeffs: dict = {}
    for r in terms:
        key = (tuple(r["k"]), tuple(r.get("m", [0] * n)), int(r.get("p", 0)))
        coeffs[key] = coeffs.get(key, 0j) + complex(r.get("re", 0.0), r.get("im", 0.0))
    return FTSeries.from_terms(coeffs, n, caps, center, real=real)


def allclose(f: FTSeries, g: FTSeries, atol: float = 0.0, rtol: float = 0.0) -> bool:
    """Coefficientwise comparison; ``rtol`` is relative to the largest coefficient."""
    d = f - g
    scale = max(f.max_abs(), g.max_abs())
    return d.max_abs() <= atol + rtol * scale
