"""Lie-transform partial normal form for slowly, aperiodically forced systems.

The extended Hamiltonian is ``H = h(I) + mu*eta + eps*f(I, phi, xi)`` with
``xi = mu*t`` and ``eta`` its conjugate momentum. ``eta`` never appears as a
variable: the generators do not depend on it, so ``L_chi eta = -d_xi chi``
and every Lie image of ``eta`` is an ordinary series.

Conventions: ``L_chi g = {g, chi}`` with the reduced bracket of
:func:`~aperiodic_nf.ftseries.poisson_bracket`, and the homological operator
is ``L_h chi = {chi, h}``, which multiplies the ``k``-th harmonic by
``i <k, omega(I)>``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .ftseries import (DomainParams, FTSeries, fourier_norm, harmonic_split,
                       majorant_norm, poisson_bracket)
from .resonance import ResonanceModule, harmonics_below


class SmallDivisorError(ValueError):
    """A harmonic that must be eliminated has a divisor at or below alpha."""

    def __init__(self, k, divisor, alpha):
        self.k = tuple(int(x) for x in k)
        self.divisor = float(divisor)
        self.alpha = alpha
        super().__init__(f"small divisor |<k, omega(I0)>| = {self.divisor:.3e} <= "
                         f"alpha = {alpha} at k = {self.k}")


class NormalizationStateError(RuntimeError):
    """Raised when a step is requested before its prerequisites exist."""


@dataclass
class HamiltonianSpec:
    """``h(I) + mu*eta + eps*f(I, phi, xi)`` on the domain ``dom``.

    ``h`` must be a real series without angle or xi dependence; ``f`` must
    share its dimension, center and caps. ``C_f`` defaults to the coefficient
    majorant of ``f`` on the doubled angle strip, and a smaller value is
    rejected.
    """

    h: FTSeries
    f: FTSeries
    eps: float
    mu: float
    dom: DomainParams
    C_f: float | None = None

    def __post_init__(self):
        self.h._check(self.f)
        if self.eps < 0 or self.mu < 0:
            raise ValueError("eps and mu must be nonnegative")
        if not self.h.is_zero:
            if np.abs(self.h.harmonics).any():
                raise ValueError("h must not depend on the angles")
            if np.abs(self.h.blocks[:, self.h.layout.power > 0]).max(initial=0.0) > 0:
                raise ValueError("h must not depend on xi")
        bound = majorant_norm(self.f, self.dom.delta, 2 * self.dom.sigma, self.dom.xi_window)
        if self.C_f is None:
            self.C_f = bound
        elif self.C_f < bound * (1 - 1e-12):
            raise ValueError(f"C_f = {self.C_f} is below the majorant bound {bound} of f")
        self.eps = float(self.eps)
        self.mu = float(self.mu)
        self.C_f = float(self.C_f)

    @property
    def n(self) -> int:
        return self.h.n

    @property
    def center(self) -> np.ndarray:
        return self.h.center

    def omega0(self) -> np.ndarray:
        """Frequencies ``grad h`` at the expansion center."""
        return np.array([self.h.partial_action(i).coeff((0,) * self.n, (0,) * self.n, 0).real
                         for i in range(self.n)])

    def hamiltonian(self) -> FTSeries:
        """``h + eps*f`` (the eta term is implicit)."""
        return self.h + self.f.scale(self.eps)


# ----------------------------------------------------------------------
# Lie operators


def lie_derivative(g: FTSeries, chi: FTSeries) -> FTSeries:
    """``L_chi g = {g, chi}``."""
    return poisson_bracket(g, chi)


def eta_derivative(chi: FTSeries) -> FTSeries:
    """``L_chi eta = -d_xi chi``: the Lie action of a generator on ``eta``."""
    return -chi.partial_xi()


class LieTable:
    """Lazily grown table of ``E_t g`` for a (possibly growing) generator list.

    Either ``base`` (the series ``g = E_0 g``) or ``seed`` (a map
    ``chi -> L_chi g`` for a coordinate ``g`` that is not itself a series,
    such as ``eta`` or an angle) must be given. Generators beyond the end of
    ``chi`` count as zero.
    """

    def __init__(self, chi: list, base: FTSeries | None = None,
                 seed: Callable[[FTSeries], FTSeries] | None = None):
        if (base is None) == (seed is None):
            raise ValueError("give exactly one of base and seed")
        self.chi = chi
        self.seed = seed
        self.terms: list = [base]

    def _L0(self, j):
        c = self.chi[j - 1]
        return self.seed(c) if self.seed is not None else lie_derivative(self.terms[0], c)

    def __getitem__(self, t: int) -> FTSeries:
        while len(self.terms) <= t:
            s = len(self.terms)
            acc = None
            for j in range(1, min(s, len(self.chi)) + 1):
                if self.chi[j - 1].is_zero:
                    continue
                term = self._L0(j) if j == s else lie_derivative(self.terms[s - j], self.chi[j - 1])
                term = term.scale(j / s)
                acc = term if acc is None else acc + term
            if acc is None:
                acc = self.chi[0].zero_like() if self.chi else self._zero()
            self.terms.append(acc)
        return self.terms[t]

    def _zero(self):
        if self.terms[0] is not None:
            return self.terms[0].zero_like()
        raise NormalizationStateError("no generators to build a zero series from")


def E_op(s: int, chi: Sequence[FTSeries], g: FTSeries) -> FTSeries:
    """``E_0 = id``, ``E_s = (1/s) sum_{j=1}^s j L_{chi_j} E_{s-j}``."""
    if s < 0:
        raise ValueError("s must be nonnegative")
    if s > len(chi):
        raise ValueError(f"E_{s} needs {s} generators, only {len(chi)} given")
    return LieTable(list(chi), base=g)[s]


def eta_image(s: int, chi: Sequence[FTSeries]) -> FTSeries:
    """``E_s eta`` for ``s >= 1`` (missing generators count as zero)."""
    if s < 1:
        raise ValueError("s must be positive")
    if not chi:
        raise ValueError("need at least one generator")
    return LieTable(list(chi), seed=eta_derivative)[s]


def psi_step(s: int, chi: Sequence[FTSeries], Z: Sequence[FTSeries],
             H_parts: Sequence[FTSeries], mu: float, cache: dict | None = None) -> FTSeries:
    """Known term ``psi_s`` of the order-``s`` homological equation.

    ``psi_1 = H_1`` and, for ``s >= 2``,

        psi_s = H_s + (1/s) sum_{j<s} j [L_{chi_j} Z_{s-j} + E_{s-j} H_j]
                + (mu/s) [(s-1) L_{chi_{s-1}} eta + E_{s-1} eta],

    which is the order-``s`` part of ``T_chi (h + mu*eta + sum H_j)`` with
    ``chi_s`` set to zero, after the lower-order equations have been used to
    eliminate ``E_s h``. ``cache`` may hold :class:`LieTable` objects reused
    across steps; it is keyed by ``("H", j)`` and ``"eta"``.
    """
    if s < 1:
        raise ValueError("s must be positive")
    if len(chi) < s - 1 or len(Z) < s - 1:
        raise NormalizationStateError(f"psi_{s} needs chi and Z up to order {s - 1}")
    if not H_parts:
        raise ValueError("H_parts must be nonempty")
    cache = {} if cache is None else cache
    chi = list(chi[:s - 1])
    out = H_parts[s - 1] if s <= len(H_parts) else H_parts[0].zero_like()
    if s == 1:
        return out
    for j in range(1, s):
        acc = lie_derivative(Z[s - j - 1], chi[j - 1])
        if j <= len(H_parts):
            tab = cache.get(("H", j))
            if tab is None or tab.chi is not _chi_source(cache, chi):
                tab = cache[("H", j)] = LieTable(_chi_source(cache, chi), base=H_parts[j - 1])
            acc = acc + tab[s - j]
        out = out + acc.scale(j / s)
    if mu:
        tab = cache.get("eta")
        if tab is None or tab.chi is not _chi_source(cache, chi):
            tab = cache["eta"] = LieTable(_chi_source(cache, chi), seed=eta_derivative)
        eta_terms = eta_derivative(chi[s - 2]).scale(s - 1) + tab[s - 1]
        out = out + eta_terms.scale(mu / s)
    return out


def _chi_source(cache: dict, chi: list) -> list:
    # tables must share one generator list; keep the longest prefix seen
    src = cache.get("_chi")
    if src is None or len(src) > len(chi) or any(a is not b for a, b in zip(src, chi)):
        src = cache["_chi"] = list(chi)
        for key in [k for k in cache if k != "_chi"]:
            del cache[key]
    else:
        src.extend(chi[len(src):])
    return src


# ----------------------------------------------------------------------
# homological equation


def _rowwise_mul(a: np.ndarray, b: np.ndarray, lay, chunk: int = 256) -> np.ndarray:
    """Truncated monomial product of matching rows of two block arrays."""
    out = np.empty_like(a, dtype=complex)
    P = lay.size
    for i in range(0, len(a), chunk):
        ext = np.concatenate([a[i:i + chunk], np.zeros((len(a[i:i + chunk]), 1))], axis=1)
        out[i:i + chunk] = np.einsum("icb,ib->ic", ext[:, lay.mult], b[i:i + chunk])
    return out[:, :P]


def _omega_blocks(h: FTSeries) -> np.ndarray:
    """Rows ``W[i]`` holding ``d h / d I_i`` in the monomial layout."""
    W = np.zeros((h.n, h.layout.size), dtype=complex)
    for i in range(h.n):
        W[i] = h.partial_action(i).row((0,) * h.n)
    return W


def divisor_floor(k, h: FTSeries, delta: float) -> float:
    """``|<k, omega(I0)>| - sup_{|I-I0| <= delta} |<k, omega(I) - omega(I0)>|`` (majorant).

    When positive it bounds ``|<k, omega(I)>|`` from below on the complex
    action polydisc of radius ``delta``.
    """
    K = np.atleast_2d(np.asarray(k, dtype=float))
    D = K @ _omega_blocks(h)
    w = h.layout.weights(delta, 0.0)
    w[0] = 0.0
    out = np.abs(D[:, 0]) - np.abs(D) @ w
    return float(out[0]) if np.ndim(k) == 1 else out


def _solve(psi: FTSeries, module: ResonanceModule, W: np.ndarray, alpha):
    harm = psi.harmonics
    res = ~harm.any(axis=1)
    if len(harm) and module.dim:
        res |= np.asarray(module.contains(harm), dtype=bool).reshape(-1)
    Z = psi.select(res)
    v = psi.select(~res)
    if v.is_zero:
        return psi.zero_like(), Z, np.zeros((0, psi.n), dtype=np.int64), np.zeros(0)
    lay = psi.layout
    D = v.harmonics.astype(float) @ W
    d0 = D[:, 0].real
    bad = np.abs(d0) <= (alpha if alpha is not None else 0.0)
    if bad.any():
        j = int(np.flatnonzero(bad)[np.argmin(np.abs(d0[bad]))])
        raise SmallDivisorError(v.harmonics[j], abs(d0[j]), alpha)
    e = D / d0[:, None]
    e[:, 0] = 0.0
    one = np.zeros_like(D)
    one[:, 0] = 1.0
    inv = one.copy()
    for _ in range(psi.caps.action_degree):
        inv = one - _rowwise_mul(e, inv, lay)
    inv = inv / d0[:, None]
    c = -1j * _rowwise_mul(v.blocks, inv, lay)
    defect = v.defect / float(np.abs(d0).min())
    chi = FTSeries(psi.n, psi.center, psi.caps, v.harmonics, c, real=psi.real,
                   defect=defect, prune=psi.prune)
    return chi, Z, v.harmonics, d0


def solve_homological(psi: FTSeries, module: ResonanceModule, spec: HamiltonianSpec,
                      alpha: float) -> tuple[FTSeries, FTSeries]:
    """Solve ``L_h chi + Z = psi``.

    Harmonics in ``module`` (and ``k = 0``) go to ``Z`` unchanged, keeping
    their xi-dependence. The others are divided by ``i <k, omega(I)>``, the
    inverse divisor being its Taylor series about ``I0`` truncated at the
    action-degree cap.

    Raises
    ------
    SmallDivisorError
        If ``|<k, omega(I0)>| <= alpha`` for a harmonic to be eliminated.
    """
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    spec.h._check(psi)
    chi, Z, _, _ = _solve(psi, module, _omega_blocks(spec.h), alpha)
    return chi, Z


def homological_residual(chi: FTSeries, Z: FTSeries, psi: FTSeries, h: FTSeries) -> FTSeries:
    """``L_h chi + Z - psi`` with ``L_h chi = {chi, h}``."""
    return poisson_bracket(chi, h) + Z - psi


# ----------------------------------------------------------------------
# normalization driver


@dataclass
class NormalFormResult:
    chi: list
    Z: list
    psi: list
    remainder: FTSeries
    step_norms: list
    divisor_min: float
    alpha: float
    alpha_rigorous: bool
    residuals: list
    remainder_norm: float
    lie_orders: int
    lie_tail: float
    converged: bool
    r: int
    K: int
    module: ResonanceModule
    dom: DomainParams
    solved_harmonics: np.ndarray = field(repr=False, default=None)

    @property
    def defect(self) -> float:
        """Truncation/pruning mass carried by the generators and the remainder."""
        return float(self.remainder.defect + sum(c.defect for c in self.chi))

    @property
    def normal_part(self) -> FTSeries:
        """``sum_s Z_s``."""
        out = self.Z[0].zero_like()
        for z in self.Z:
            out = out + z
        return out

    def to_report(self) -> dict:
        def hist(f):
            c = {}
            for v in f.harmonic_norms().tolist():
                c[str(v)] = c.get(str(v), 0) + 1
            return dict(sorted(c.items(), key=lambda kv: int(kv[0])))

        return {
            "r": self.r, "K": self.K,
            "module_basis": [list(b) for b in self.module.basis],
            "alpha": _finite(self.alpha), "alpha_rigorous": self.alpha_rigorous,
            "divisor_min": _finite(self.divisor_min),
            "step_norms": self.step_norms,
            "homological_residuals": self.residuals,
            "remainder_norm_3_4": self.remainder_norm,
            "remainder_lie_orders": self.lie_orders,
            "remainder_lie_tail": self.lie_tail,
            "remainder_converged": self.converged,
            "truncation_defect": self.defect,
            "support": {"Z": hist(self.normal_part), "chi": [hist(c) for c in self.chi],
                        "remainder": hist(self.remainder)},
        }


def _finite(x):
    return x if x is None or math.isfinite(x) else str(x)


def normalize(spec: HamiltonianSpec, r: int, K: int, module: ResonanceModule,
              alpha: float | None = None, max_order: int | None = None,
              tail_rtol: float = 1e-15) -> NormalFormResult:
    """Partial normal form of order ``r``.

    Parameters
    ----------
    spec : HamiltonianSpec
    r : int
        Normalization order.
    K : int
        Harmonic block width used to split ``eps*f`` into ``H_1, H_2, ...``.
    module : ResonanceModule
        Harmonics kept in the normal form.
    alpha : float, optional
        Divisor threshold. By default it is 90% of the smallest divisor floor
        (see :func:`divisor_floor`) over the harmonics actually eliminated,
        evaluated at the action width ``spec.dom.delta``.
    max_order : int, optional
        Highest order of the Lie series summed for the remainder
        (default ``3r + 6``).
    tail_rtol : float
        The Lie series is stopped once an order contributes less than this
        fraction of the accumulated remainder norm.

    Returns
    -------
    NormalFormResult
        The remainder is ``T_chi(h + mu*eta + eps*f) - (h + mu*eta + sum Z_s)``
        summed order by order; its norm is taken at ``3/4 (delta, sigma)``.
    """
    if r < 1 or K < 1:
        raise ValueError("r and K must be positive")
    if module.n != spec.n:
        raise ValueError("module dimension differs from the spec")
    if alpha is not None and alpha <= 0:
        raise ValueError("alpha must be positive")
    h, dom, mu = spec.h, spec.dom, spec.mu
    H = harmonic_split(spec.f.scale(spec.eps), K)
    W = _omega_blocks(h)

    chi: list = []
    Z: list = []
    psi: list = []
    cache: dict = {}
    solved = []
    divisors = []
    for s in range(1, r + 1):
        p = psi_step(s, chi, Z, H, mu, cache)
        c, z, ks, d0 = _solve(p, module, W, alpha)
        chi.append(c)
        Z.append(z)
        psi.append(p)
        solved.append(ks)
        divisors.append(np.abs(d0))
    solved_k = np.unique(np.concatenate(solved), axis=0) if solved else np.zeros((0, spec.n))
    all_d = np.concatenate(divisors)
    divisor_min = float(all_d.min()) if len(all_d) else math.inf

    rigorous = True
    if alpha is None:
        cand = solved_k
        if len(cand) == 0:
            cand = harmonics_below(spec.n, r * K)
            if len(cand):
                cand = cand[np.abs(cand).sum(axis=1) <= h.caps.harmonics]
                cand = cand[~np.asarray(module.contains(cand), dtype=bool).reshape(-1)]
        if len(cand) == 0:
            alpha = math.inf
        else:
            floors = np.atleast_1d(divisor_floor(cand, h, dom.delta))
            if floors.min() > 0:
                alpha = 0.9 * float(floors.min())
            else:
                rigorous = False
                alpha = 0.9 * float(np.abs(cand @ spec.omega0()).min())

    step_norms, residuals = [], []
    for c, z, p in zip(chi, Z, psi):
        pn = fourier_norm(p, dom)
        step_norms.append({"chi": fourier_norm(c, dom), "Z": fourier_norm(z, dom), "psi": pn})
        res = homological_residual(c, z, p, h)
        residuals.append(res.max_abs() / p.max_abs() if not p.is_zero else res.max_abs())

    remainder, orders, tail, converged = _remainder(spec, H, chi, Z, max_order or 3 * r + 6,
                                                    tail_rtol)
    check = dom.restricted(0.25)
    return NormalFormResult(
        chi=chi, Z=Z, psi=psi, remainder=remainder, step_norms=step_norms,
        divisor_min=divisor_min, alpha=alpha, alpha_rigorous=rigorous,
        residuals=residuals, remainder_norm=fourier_norm(remainder, check),
        lie_orders=orders, lie_tail=tail, converged=converged, r=r, K=K,
        module=module, dom=dom, solved_harmonics=solved_k)


def _order_part(t: int, tabs: dict, H: list, mu: float) -> FTSeries:
    """Order-``t`` part of ``T_chi(h + mu*eta + sum H_j)`` (``t >= 1``)."""
    out = tabs["h"][t]
    for j in range(1, min(t, len(H)) + 1):
        out = out + tabs[("H", j)][t - j]
    if mu and t >= 2:
        out = out + tabs["eta"][t - 1].scale(mu)
    return out


def _tables(spec: HamiltonianSpec, H: list, chi: list) -> dict:
    tabs = {"h": LieTable(chi, base=spec.h), "eta": LieTable(chi, seed=eta_derivative)}
    for j, part in enumerate(H, 1):
        tabs[("H", j)] = LieTable(chi, base=part)
    return tabs


def _remainder(spec, H, chi, Z, max_order, tail_rtol):
    tabs = _tables(spec, H, chi)
    r = len(chi)
    check = spec.dom.restricted(0.25)
    R = spec.h.zero_like()
    for t in range(1, r + 1):
        R = R + (_order_part(t, tabs, H, spec.mu) - Z[t - 1])
    tail, converged, t = 0.0, False, r
    for t in range(r + 1, max(max_order, r + 1) + 1):
        phi = _order_part(t, tabs, H, spec.mu)
        R = R + phi
        tail = fourier_norm(phi, check)
        if phi.is_zero or tail <= tail_rtol * fourier_norm(R, check):
            converged = True
            break
    return R, t, tail, converged


def normalize_autonomous(spec: HamiltonianSpec, r: int, K: int,
                         module: ResonanceModule) -> NormalFormResult:
    """Reference construction for ``mu = 0`` by direct composition.

    ``psi_s`` is taken as the order-``s`` part of ``T_chi(h + sum H_j)``
    computed with ``chi_s = 0``, without any recursion shortcut. ``spec.mu`` is
    ignored.
    """
    h = spec.h
    H = harmonic_split(spec.f.scale(spec.eps), K)
    W = _omega_blocks(h)
    chi, Z, psi = [], [], []
    for s in range(1, r + 1):
        trial = chi + [h.zero_like()]
        tabs = {"h": LieTable(trial, base=h)}
        for j, part in enumerate(H, 1):
            tabs[("H", j)] = LieTable(trial, base=part)
        p = _order_part(s, tabs, H, 0.0)
        c, z, _, _ = _solve(p, module, W, None)
        chi.append(c)
        Z.append(z)
        psi.append(p)
    auto = HamiltonianSpec(spec.h, spec.f, spec.eps, 0.0, spec.dom, spec.C_f)
    R, orders, tail, conv = _remainder(auto, H, chi, Z, 3 * r + 6, 1e-15)
    dom = spec.dom
    norms = [{"chi": fourier_norm(c, dom), "Z": fourier_norm(z, dom), "psi": fourier_norm(p, dom)}
             for c, z, p in zip(chi, Z, psi)]
    return NormalFormResult(chi=chi, Z=Z, psi=psi, remainder=R, step_norms=norms,
                            divisor_min=math.nan, alpha=math.nan, alpha_rigorous=False,
                            residuals=[], remainder_norm=fourier_norm(R, dom.restricted(0.25)),
                            lie_orders=orders, lie_tail=tail, converged=conv, r=r, K=K,
                            module=module, dom=dom)


# ----------------------------------------------------------------------
# coordinate map


@dataclass
class CoordinateMap:
    """Near-identity map ``(I, phi, xi) -> (T_chi I, T_chi phi, xi)``.

    ``actions[i]`` is the series of ``T_chi I_i - I0_i`` and
    ``angle_shifts[i]`` that of ``T_chi phi_i - phi_i``. The slow time is
    not transformed.
    """

    actions: list
    angle_shifts: list
    center: np.ndarray
    order: int

    @property
    def series(self) -> list:
        return list(self.actions) + list(self.angle_shifts)

    def __call__(self, I, phi, xi):
        I = np.asarray(I, dtype=float)
        phi = np.asarray(phi, dtype=float)
        newI = self.center + np.array([a.evaluate(I, phi, xi).real for a in self.actions])
        newphi = phi + np.array([a.evaluate(I, phi, xi).real for a in self.angle_shifts])
        return newI, newphi, xi

    def inverse(self, I, phi, xi, tol: float = 1e-14, maxiter: int = 100):
        """Solve ``self(J, psi, xi) = (I, phi, xi)`` by fixed-point iteration."""
        I = np.asarray(I, dtype=float)
        phi = np.asarray(phi, dtype=float)
        J, ps = I.copy(), phi.copy()
        for _ in range(maxiter):
            a, b, _ = self(J, ps, xi)
            dJ, dp = I - a, phi - b
            J, ps = J + dJ, ps + dp
            if max(np.abs(dJ).max(), np.abs(dp).max()) <= tol * max(1.0, np.abs(J).max()):
                return J, ps, xi
        raise RuntimeError("coordinate inverse did not converge")


def map_coordinates(chi: Sequence[FTSeries], order: int | None = None) -> CoordinateMap:
    """Lie-transform images of the action and angle coordinates.

    The series are summed up to ``order`` (default ``len(chi)``), using
    ``L_chi I_i = -d chi / d phi_i`` and ``L_chi phi_i = d chi / d I_i``.
    """
    chi = list(chi)
    if not chi:
        raise ValueError("need at least one generator")
    order = len(chi) if order is None else order
    n = chi[0].n
    actions, shifts = [], []
    for i in range(n):
        ti = LieTable(chi, seed=lambda c, i=i: -c.partial_phi(i))
        tp = LieTable(chi, seed=lambda c, i=i: c.partial_action(i))
        a = FTSeries.action(i, n, chi[0].caps, chi[0].center) if chi[0].caps.action_degree \
            else chi[0].zero_like()
        b = chi[0].zero_like()
        for t in range(1, order + 1):
            a = a + ti[t]
            b = b + tp[t]
        actions.append(a)
        shifts.append(b)
    return CoordinateMap(actions, shifts, np.array(chi[0].center), order)
