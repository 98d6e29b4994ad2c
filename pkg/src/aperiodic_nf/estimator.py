"""Explicit constants, recurrences and the stability parameter chain."""
from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, field
from typing import Iterable

import numpy as np

E = math.e
KAPPA_FLOOR = 1.0 / (8.0 + 3.0 * E ** 2)


def _up(x: float) -> float:
    """Round a bound one ulp upwards (exact zeros stay zero)."""
    return float(np.nextafter(x, np.inf)) if math.isfinite(x) and x != 0 else x


def f_tilde(C_f: float, n: int, sigma: float) -> float:
    """``C_f ((1 + e^{-sigma/2}) / (1 - e^{-sigma/2}))**n``."""
    if not 0 < sigma <= 1:
        raise ValueError(f"sigma must lie in (0, 1], got {sigma}")
    if n < 1:
        raise ValueError("n must be positive")
    q = math.exp(-sigma / 2)
    return _up(C_f * ((1 + q) / (1 - q)) ** n)


def lambda_param(eps: float, mu: float, F: float) -> float:
    """Combined smallness parameter ``mu + e*F*eps``."""
    return mu + E * F * eps


def h_decay(K: int, sigma: float) -> float:
    return math.exp(-K * sigma / 2)


@dataclass(frozen=True)
class DeltaCheck:
    Delta: float
    smallness_ok: bool
    kappa_ok: bool


def delta_threshold(r: int, alpha: float, delta: float, sigma: float, lam: float,
                    K: int) -> DeltaCheck:
    """``Delta = 2^8 r lam / (alpha delta sigma) + 4 e^{-K sigma / 2}`` and its two flags."""
    hd = h_decay(K, sigma)
    D = _up(2.0 ** 8 * r * lam / (alpha * delta * sigma) + 4 * hd)
    return DeltaCheck(D, D <= 0.5, hd >= KAPPA_FLOOR)


def minunmezzo_check(F: float, d: float, alpha: float, delta: float, sigma: float,
                     b: float) -> bool:
    """``2 e F / (d^2 alpha delta sigma) + b <= 1/2``."""
    if not 0 < d < 0.25:
        raise ValueError("d must lie in (0, 1/4)")
    return 2 * E * F / (d * d * alpha * delta * sigma) + b <= 0.5


def remainder_bound(eps: float, F: float, Delta: float, r: int) -> float:
    """``8 eps F Delta**r``."""
    if not 0 < Delta < 1:
        raise ValueError("Delta must lie in (0, 1)")
    return _up(8 * eps * F * Delta ** r)


def t_star(delta: float, eps: float, Delta: float, r: int, C1: float) -> float:
    """``e^2 delta / (C1 eps Delta**r)``; infinite for ``eps = 0`` or ``Delta = 0``."""
    if C1 <= 0:
        raise ValueError("C1 must be positive")
    den = C1 * eps * Delta ** r
    return math.inf if den == 0 else E ** 2 * delta / den


# ----------------------------------------------------------------------
# analytic constants of the normalization


def c_r(r: int, F: float, alpha: float, d: float, delta: float, sigma: float) -> float:
    """``4 (r - 1) F / (alpha e d^2 delta sigma)``."""
    return 4 * (r - 1) * F / (alpha * E * d * d * delta * sigma)


def d_sequence(d: float, r: int) -> np.ndarray:
    """``d_s = d sqrt((s-1)/(r-1))`` for ``s = 1..r`` (all zero when ``r = 1``)."""
    s = np.arange(1, r + 1)
    if r == 1:
        return np.zeros(1)
    return d * np.sqrt((s - 1) / (r - 1))


@dataclass(frozen=True)
class AnalyticConstants:
    F_tilde: float
    F: float
    lam: float
    h_decay: float
    Gamma: float
    C_r: float
    b: float
    tau: float
    d: float
    d_s: tuple
    lemma_hypotheses: bool

    def to_dict(self) -> dict:
        out = asdict(self)
        out["d_s"] = list(self.d_s)
        return out


def analytic_constants(C_f: float, n: int, eps: float, mu: float, alpha: float,
                       delta: float, sigma: float, K: int, r: int,
                       d: float = 0.125) -> AnalyticConstants:
    """All constants entering the step estimates of an order-``r`` normalization."""
    if not 0 < d < 0.25:
        raise ValueError("d must lie in (0, 1/4)")
    Ft = f_tilde(C_f, n, sigma)
    F = eps * Ft
    hd = h_decay(K, sigma)
    Gamma = 1.0 / (alpha * d * sigma)
    Cr = c_r(r, F, alpha, d, delta, sigma)
    b = 4 * (hd + Cr + mu * Gamma)
    return AnalyticConstants(
        F_tilde=Ft, F=F, lam=lambda_param(eps, mu, Ft), h_decay=hd, Gamma=Gamma,
        C_r=Cr, b=b, tau=b - 2 * Cr, d=d, d_s=tuple(d_sequence(d, r).tolist()),
        lemma_hypotheses=bool(2 * Cr <= 3 * hd and b < 1))


@dataclass
class SequenceTriple:
    """Majorant sequences ``beta_s, theta_s, gamma_s`` (index ``s - 1``; ``theta`` from 0)."""

    beta: np.ndarray
    theta: np.ndarray
    gamma: np.ndarray
    beta_bound: np.ndarray
    theta_bound: np.ndarray
    gamma_bound: np.ndarray
    tau: float
    b: float
    hypotheses_ok: bool

    def violations(self, rtol: float = 0.0) -> dict:
        """Indices ``s`` where a sequence exceeds its closed-form bound."""
        s = np.arange(1, len(self.beta) + 1)
        return {
            "beta": s[self.beta > self.beta_bound * (1 + rtol)].tolist(),
            "theta": s[self.theta[1:] > self.theta_bound * (1 + rtol)].tolist(),
            "gamma": s[self.gamma > self.gamma_bound * (1 + rtol)].tolist(),
        }


def run_recurrences(r: int, h: float, mu: float, Gamma: float, C_r: float) -> SequenceTriple:
    """Exact values of the recurrence system and of its closed-form bounds.

    ``beta_1 = 1``, ``theta_0 = 1``, ``gamma_1 = Gamma`` and for ``s >= 2``

        beta_s  = h^{s-1} + mu gamma_{s-1} + (1/s) sum_{l<s} l h^{l-1} theta_{s-l}
                  + (C_r/s) sum_{l<s} l beta_l h^{s-l-1}
        theta_s = (C_r/s) sum_{l<=s} l beta_l theta_{s-l}
        gamma_s = (C_r/s) sum_{l<s} l beta_l gamma_{s-l} + Gamma beta_s
    """
    if r < 1:
        raise ValueError("r must be positive")
    if min(h, mu, Gamma, C_r) < 0:
        raise ValueError("parameters must be nonnegative")
    beta = np.zeros(r + 1)
    theta = np.zeros(r + 1)
    gamma = np.zeros(r + 1)
    theta[0] = 1.0
    for s in range(1, r + 1):
        if s == 1:
            beta[1] = 1.0
        else:
            l = np.arange(1, s)
            beta[s] = (h ** (s - 1) + mu * gamma[s - 1]
                       + np.sum(l * h ** (l - 1) * theta[s - l]) / s
                       + C_r * np.sum(l * beta[l] * h ** (s - l - 1)) / s)
        l = np.arange(1, s + 1)
        theta[s] = C_r * np.sum(l * beta[l] * theta[s - l]) / s
        l = np.arange(1, s)
        gamma[s] = C_r * np.sum(l * beta[l] * gamma[s - l]) / s + Gamma * beta[s]
    b = 4 * (h + C_r + mu * Gamma)
    tau = b - 2 * C_r
    s = np.arange(1, r + 1)
    return SequenceTriple(
        beta=beta[1:], theta=theta, gamma=gamma[1:],
        beta_bound=tau ** (s - 1) / s,
        theta_bound=C_r * (tau + C_r) ** (s - 1) / s,
        gamma_bound=Gamma * (tau + C_r) ** (s - 1) / s,
        tau=tau, b=b, hypotheses_ok=bool(2 * C_r <= 3 * h and b < 1))


def psi_domination_bounds(F: float, b: float, r: int) -> np.ndarray:
    """``F b^{s-1} / s`` for ``s = 1..r``."""
    s = np.arange(1, r + 1)
    return F * b ** (s - 1) / s


# ----------------------------------------------------------------------
# stability plan


@dataclass
class StabilityPlan:
    inputs: dict
    a: int
    Sigma: float
    K: int
    delta_star: float
    Delta_star: float
    F_tilde: float
    lam: float
    threshold: float
    threshold_ok: bool
    delta: float
    r: int
    beta0_delta0: float
    Delta0: float
    radius: float
    time: float
    applicable: bool
    notes: list = field(default_factory=list)

    def to_dict(self) -> dict:
        out = {k: v for k, v in asdict(self).items() if k != "inputs"}
        out.update({f"input_{k}": v for k, v in self.inputs.items()})
        out["time_formula"] = "(T/eps) * exp((1/(Delta_star*lam))**(1/(2a)))"
        out["radius_formula"] = "(Delta_star*lam)**(1/4) * rho"
        return {k: (v if not isinstance(v, float) or math.isfinite(v) else str(v))
                for k, v in sorted(out.items())}


def nekhoroshev_plan(rho: float, sigma: float, M: float, m: float, C_f: float, n: int,
                     eps: float, mu: float, T: float = 1.0) -> StabilityPlan:
    """Parameter synthesis for the exponential stability estimate.

    When ``lam >= 1/(81 Delta_star)`` the plan is returned with
    ``applicable = False``; radius and time are still evaluated from the same
    formulas but carry no stability claim.
    """
    if not (M >= m > 0):
        raise ValueError("need M >= m > 0")
    if not (0 < rho <= 1 and 0 < sigma <= 1):
        raise ValueError("rho and sigma must lie in (0, 1]")
    if n < 1:
        raise ValueError("n must be positive")
    a = n * n + n
    Sigma = 2 * (1 + 3 * math.log(2)) / sigma
    K = math.ceil(Sigma)
    dstar = math.factorial(n + 2) * (4 * M / m) ** (n + 1) * K ** (a / 2)
    Dstar = _up(2 ** 11 * E * dstar * M / (sigma * K * m * m * rho * rho))
    Ft = f_tilde(C_f, n, sigma)
    lam = lambda_param(eps, mu, Ft)
    threshold = 1.0 / (81 * Dstar)
    ok = lam < threshold
    notes = []
    if lam > 0:
        x = Dstar * lam
        delta = x ** 0.25 * rho
        r = math.floor((delta ** 2 / (Dstar * rho ** 2 * lam)) ** (1 / a))
        time = (T / eps) * math.exp((1 / x) ** (1 / (2 * a))) if eps > 0 else math.inf
        Delta0 = Dstar * r ** a * rho ** 2 * lam / (2 * E * delta ** 2) + 4 * h_decay(K, sigma)
        b0d0 = K * delta ** 2 * m * m * r / (dstar ** 2 * M * r ** a) if r >= 1 else 0.0
    else:
        delta, r, time, b0d0 = 0.0, 0, math.inf, 0.0
        Delta0 = 4 * h_decay(K, sigma)
        notes.append("lam = 0: no drift, radius 0 and infinite time")
    if not ok:
        notes.append("threshold lam < 1/(81 Delta_star) violated: no stability claim")
    if ok and r < 1:
        notes.append("r < 1 despite the threshold")
    return StabilityPlan(
        inputs={"rho": rho, "sigma": sigma, "M": M, "m": m, "C_f": C_f, "n": n,
                "eps": eps, "mu": mu, "T": T},
        a=a, Sigma=Sigma, K=K, delta_star=dstar, Delta_star=Dstar, F_tilde=Ft, lam=lam,
        threshold=threshold, threshold_ok=ok, delta=delta, r=r, beta0_delta0=b0d0,
        Delta0=Delta0, radius=delta, time=time, applicable=bool(ok and r >= 1),
        notes=notes)


SWEEP_COLUMNS = ("eps", "mu", "lam", "Delta_star", "r", "K", "delta", "radius", "time",
                 "threshold_ok")


def sweep(pairs: Iterable[tuple[float, float]], rho, sigma, M, m, C_f, n, T=1.0) -> list[dict]:
    """Plan rows for a list of ``(eps, mu)`` pairs."""
    rows = []
    for eps, mu in pairs:
        p = nekhoroshev_plan(rho, sigma, M, m, C_f, n, eps, mu, T)
        rows.append({"eps": eps, "mu": mu, "lam": p.lam, "Delta_star": p.Delta_star,
                     "r": p.r, "K": p.K, "delta": p.delta, "radius": p.radius,
                     "time": p.time, "threshold_ok": p.threshold_ok})
    return rows


def write_sweep_csv(rows: list[dict], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SWEEP_COLUMNS)
        for row in rows:
            w.writerow([repr(row[c]) if isinstance(row[c], float) else int(row[c])
                        for c in SWEEP_COLUMNS])
