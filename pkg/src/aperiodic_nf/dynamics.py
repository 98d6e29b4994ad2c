"""Implicit-midpoint integration of ``h(I) + eps f(I, phi, mu t)``."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numba as nb
import numpy as np

from .estimator import t_star
from .ftseries import FTSeries


class IntegrationError(RuntimeError):
    pass


# ----------------------------------------------------------------------
# flattened Hamiltonian


@dataclass(frozen=True)
class TermTable:
    """Nonzero terms ``c (I - I0)^m xi^p e^{i k.phi}`` of ``h + eps f``."""

    k: np.ndarray        # (T, n) float
    m: np.ndarray        # (T, n) int
    p: np.ndarray        # (T,) int
    re: np.ndarray
    im: np.ndarray
    center: np.ndarray

    @classmethod
    def from_series(cls, series: FTSeries) -> "TermTable":
        items = sorted(series.coeffs.items())
        n = series.n
        T = len(items)
        k = np.zeros((T, n))
        m = np.zeros((T, n), dtype=np.int64)
        p = np.zeros(T, dtype=np.int64)
        c = np.zeros(T, dtype=complex)
        for j, ((kk, mm, pp), cc) in enumerate(items):
            k[j], m[j], p[j], c[j] = kk, mm, pp, cc
        return cls(k, m, p, c.real.copy(), c.imag.copy(), np.array(series.center))

    @property
    def args(self):
        return self.k, self.m, self.p, self.re, self.im, self.center


def hamiltonian_series(spec) -> FTSeries:
    return spec.h + spec.f.scale(spec.eps)


@nb.njit(cache=True)
def _eval(k, m, p, re, im, c0, I, phi, xi, grad_I, grad_phi):
    """Value of the real Hamiltonian; fills its action/angle gradients, returns (H, dH/dxi)."""
    n = I.shape[0]
    H = 0.0
    Hxi = 0.0
    for i in range(n):
        grad_I[i] = 0.0
        grad_phi[i] = 0.0
    x = I - c0
    for t in range(k.shape[0]):
        arg = 0.0
        for i in range(n):
            arg += k[t, i] * phi[i]
        ca = math.cos(arg)
        sa = math.sin(arg)
        wr = re[t] * ca - im[t] * sa        # Re(c e^{i arg})
        wi = re[t] * sa + im[t] * ca        # Im(c e^{i arg})
        mono = 1.0
        for i in range(n):
            mono *= x[i] ** m[t, i]
        xp = xi ** p[t]
        H += wr * mono * xp
        if p[t] > 0:
            Hxi += wr * mono * p[t] * xi ** (p[t] - 1)
        for i in range(n):
            grad_phi[i] += -k[t, i] * wi * mono * xp
            if m[t, i] > 0:
                d = m[t, i] * x[i] ** (m[t, i] - 1)
                for j in range(n):
                    if j != i:
                        d *= x[j] ** m[t, j]
                grad_I[i] += wr * d * xp
    return H, Hxi


@nb.njit(cache=True)
def _midpoint_step(k, m, p, re, im, c0, mu, I, phi, t, dt, tol, maxiter, gI, gp):
    """One implicit-midpoint step; returns (I1, phi1, converged)."""
    n = I.shape[0]
    I1 = I.copy()
    phi1 = phi.copy()
    xi = mu * (t + 0.5 * dt)
    # explicit Euler predictor
    _eval(k, m, p, re, im, c0, I, phi, mu * t, gI, gp)
    for i in range(n):
        I1[i] = I[i] - dt * gp[i]
        phi1[i] = phi[i] + dt * gI[i]
    Im = np.empty(n)
    Pm = np.empty(n)
    for it in range(maxiter):
        for i in range(n):
            Im[i] = 0.5 * (I[i] + I1[i])
            Pm[i] = 0.5 * (phi[i] + phi1[i])
        _eval(k, m, p, re, im, c0, Im, Pm, xi, gI, gp)
        change = 0.0
        scale = 1.0
        for i in range(n):
            a = I[i] - dt * gp[i]
            b = phi[i] + dt * gI[i]
            change = max(change, abs(a - I1[i]), abs(b - phi1[i]))
            scale = max(scale, abs(a), abs(b))
            I1[i] = a
            phi1[i] = b
        if change <= tol * scale:
            return I1, phi1, True
    return I1, phi1, False


@nb.njit(cache=True)
def _step_adaptive(k, m, p, re, im, c0, mu, I, phi, t, dt, tol, maxiter, max_halvings, gI, gp):
    """Advance by ``dt``, halving into ``2^j`` substeps when the iteration stalls."""
    for j in range(max_halvings + 1):
        sub = 2 ** j
        h = dt / sub
        Ic = I.copy()
        pc = phi.copy()
        ok = True
        for q in range(sub):
            Ic, pc, conv = _midpoint_step(k, m, p, re, im, c0, mu, Ic, pc, t + q * h, h,
                                          tol, maxiter, gI, gp)
            if not conv:
                ok = False
                break
        if ok:
            return Ic, pc, j
    return I, phi, -1


@nb.njit(cache=True)
def _run(k, m, p, re, im, c0, mu, I0, phi0, t0, dt, nsteps, thin, proj, tol, maxiter,
         max_halvings):
    n = I0.shape[0]
    nrec = nsteps // thin + 1
    if nsteps % thin != 0:
        nrec += 1
    times = np.empty(nrec)
    Is = np.empty((nrec, n))
    phis = np.empty((nrec, n))
    drift = np.empty(nrec)
    plane = np.empty(nrec)
    energy = np.empty(nrec)
    gI = np.empty(n)
    gp = np.empty(n)
    I = I0.copy()
    phi = phi0.copy()
    H, _ = _eval(k, m, p, re, im, c0, I, phi, mu * t0, gI, gp)
    times[0] = t0
    Is[0] = I
    phis[0] = phi
    drift[0] = 0.0
    plane[0] = 0.0
    energy[0] = H
    maxd = 0.0
    maxp = 0.0
    halvings = 0
    rec = 1
    v = np.empty(n)
    for s in range(1, nsteps + 1):
        t = t0 + (s - 1) * dt
        I, phi, j = _step_adaptive(k, m, p, re, im, c0, mu, I, phi, t, dt, tol, maxiter,
                                   max_halvings, gI, gp)
        if j < 0:
            return times[:rec], Is[:rec], phis[:rec], drift[:rec], plane[:rec], \
                energy[:rec], maxd, maxp, halvings, s
        halvings += j
        d2 = 0.0
        for i in range(n):
            v[i] = I[i] - I0[i]
            d2 += v[i] * v[i]
        maxd = max(maxd, math.sqrt(d2))
        pd2 = 0.0
        for i in range(n):
            w = v[i]
            for j2 in range(n):
                w -= proj[i, j2] * v[j2]
            pd2 += w * w
        maxp = max(maxp, math.sqrt(pd2))
        if s % thin == 0 or s == nsteps:
            H, _ = _eval(k, m, p, re, im, c0, I, phi, mu * (t0 + s * dt), gI, gp)
            times[rec] = t0 + s * dt
            Is[rec] = I
            phis[rec] = phi
            drift[rec] = maxd
            plane[rec] = maxp
            energy[rec] = H
            rec += 1
    return times[:rec], Is[:rec], phis[:rec], drift[:rec], plane[:rec], energy[:rec], \
        maxd, maxp, halvings, -1


# ----------------------------------------------------------------------
# public interface


def vector_field(spec, I, phi, t):
    """Canonical equations ``dI = -d_phi H``, ``dphi = d_I H`` at ``xi = mu t``."""
    H = hamiltonian_series(spec)
    xi = spec.mu * t
    n = spec.n
    dI = np.array([-H.partial_phi(i).evaluate(I, phi, xi).real for i in range(n)])
    dphi = np.array([H.partial_action(i).evaluate(I, phi, xi).real for i in range(n)])
    return dI, dphi


@dataclass
class Trajectory:
    """Recorded states of an integration (every ``thin``-th step and the last).

    ``drift`` and ``plane_dev`` are running maxima over all steps, not only
    the recorded ones.
    """

    times: np.ndarray
    I: np.ndarray
    phi_unwrapped: np.ndarray
    drift: np.ndarray
    plane_dev: np.ndarray
    energy: np.ndarray
    max_drift: float
    max_plane_dev: float
    steps: int
    step: float
    halvings: int
    init: tuple = field(default=None)

    @property
    def phi(self) -> np.ndarray:
        return np.mod(self.phi_unwrapped, 2 * np.pi)

    def to_csv(self, path, thin: int = 1) -> None:
        n = self.I.shape[1]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t"] + [f"I{i + 1}" for i in range(n)]
                       + [f"phi{i + 1}" for i in range(n)] + ["drift", "H"])
            for j in range(0, len(self.times), thin):
                w.writerow([repr(float(self.times[j]))]
                           + [repr(float(x)) for x in self.I[j]]
                           + [repr(float(x)) for x in self.phi[j]]
                           + [repr(float(self.drift[j])), repr(float(self.energy[j]))])


def integrate(spec, init, t_span, step: float, thin: int = 1, module=None,
              tol: float = 1e-14, maxiter: int = 50, max_halvings: int = 10) -> Trajectory:
    """Implicit-midpoint trajectory from ``init = (I, phi)`` over ``t_span = (t0, t1)``.

    The number of steps is ``round((t1 - t0) / step)``; a negative span
    integrates backwards. Each step solves the midpoint equation by
    fixed-point iteration to relative tolerance ``tol``; if that fails within
    ``maxiter`` iterations the step is split in halves, up to
    ``max_halvings`` times, before :class:`IntegrationError` is raised.
    """
    if step <= 0:
        raise ValueError("step must be positive")
    I0 = np.asarray(init[0], dtype=float).reshape(-1).copy()
    phi0 = np.asarray(init[1], dtype=float).reshape(-1).copy()
    if I0.shape != (spec.n,) or phi0.shape != (spec.n,):
        raise ValueError("init must hold two vectors of length n")
    t0, t1 = float(t_span[0]), float(t_span[1])
    nsteps = int(round(abs(t1 - t0) / step))
    if nsteps < 1:
        raise ValueError("t_span shorter than one step")
    dt = math.copysign(step, t1 - t0)
    tab = TermTable.from_series(hamiltonian_series(spec))
    proj = module.span_projector() if module is not None else np.zeros((spec.n, spec.n))
    out = _run(*tab.args, float(spec.mu), I0, phi0, t0, dt, nsteps, max(1, int(thin)),
               np.ascontiguousarray(proj, dtype=float), tol, maxiter, max_halvings)
    times, Is, phis, drift, plane, energy, maxd, maxp, halvings, fail = out
    if fail >= 0:
        raise IntegrationError(
            f"midpoint iteration failed at step {fail} (t = {t0 + (fail - 1) * dt!r}, "
            f"I = {Is[-1].tolist()}, phi = {phis[-1].tolist()}) after {max_halvings} halvings")
    return Trajectory(times=times, I=Is, phi_unwrapped=phis, drift=drift, plane_dev=plane,
                      energy=energy, max_drift=float(maxd), max_plane_dev=float(maxp),
                      steps=nsteps, step=step, halvings=int(halvings),
                      init=(I0.tolist(), phi0.tolist()))


def step_map(spec, I, phi, t, step, tol=1e-14, maxiter=50):
    """One implicit-midpoint step ``(I, phi) -> (I', phi')`` starting at time ``t``."""
    tab = TermTable.from_series(hamiltonian_series(spec))
    n = spec.n
    I1, p1, ok = _midpoint_step(*tab.args, float(spec.mu), np.asarray(I, dtype=float).copy(),
                                np.asarray(phi, dtype=float).copy(), float(t), float(step),
                                tol, maxiter, np.empty(n), np.empty(n))
    if not ok:
        raise IntegrationError("midpoint iteration did not converge")
    return I1, p1


def step_jacobian(spec, I, phi, t, step, fd: float = 1e-5) -> np.ndarray:
    """Central finite-difference Jacobian of :func:`step_map` in ``(I, phi)``."""
    n = spec.n
    z = np.concatenate([np.asarray(I, dtype=float), np.asarray(phi, dtype=float)])
    J = np.empty((2 * n, 2 * n))
    for j in range(2 * n):
        e = np.zeros(2 * n)
        e[j] = fd
        a = np.concatenate(step_map(spec, (z + e)[:n], (z + e)[n:], t, step))
        b = np.concatenate(step_map(spec, (z - e)[:n], (z - e)[n:], t, step))
        J[:, j] = (a - b) / (2 * fd)
    return J


def symplecticity_defect(J: np.ndarray) -> float:
    """``max |J^T Omega J - Omega|`` with ``Omega`` for the ordering ``(I, phi)``."""
    n = J.shape[0] // 2
    Om = np.block([[np.zeros((n, n)), -np.eye(n)], [np.eye(n), np.zeros((n, n))]])
    return float(np.abs(J.T @ Om @ J - Om).max())


def energy_values(spec, I, phi, t):
    """``H(I, phi, t)`` and ``eps mu d_xi f`` at the given state."""
    tab = TermTable.from_series(hamiltonian_series(spec))
    n = spec.n
    H, Hxi = _eval(*tab.args, np.asarray(I, dtype=float), np.asarray(phi, dtype=float),
                   spec.mu * t, np.empty(n), np.empty(n))
    return H, spec.mu * Hxi


def energy_rate_residual(spec, init, t_span, step) -> float:
    """Max over steps of ``(H_{j+1} - H_j)/dt - eps mu d_xi f`` at the midpoint."""
    traj = integrate(spec, init, t_span, step)
    res = 0.0
    for j in range(len(traj.times) - 1):
        t0, t1 = traj.times[j], traj.times[j + 1]
        H0, _ = energy_values(spec, traj.I[j], traj.phi_unwrapped[j], t0)
        H1, _ = energy_values(spec, traj.I[j + 1], traj.phi_unwrapped[j + 1], t1)
        _, rate = energy_values(spec, 0.5 * (traj.I[j] + traj.I[j + 1]),
                                0.5 * (traj.phi_unwrapped[j] + traj.phi_unwrapped[j + 1]),
                                0.5 * (t0 + t1))
        res = max(res, abs((H1 - H0) / (t1 - t0) - rate))
    return res


# ----------------------------------------------------------------------
# drift report


def drift_report(traj: Trajectory, plan, module=None, C1: float | None = None,
                 Delta0: float | None = None) -> dict:
    """Compare a trajectory against a stability plan.

    The radius comparison is made whatever the plan's applicability; the
    report carries the plan's ``applicable`` flag so a passing comparison is
    not mistaken for a verified stability claim. ``covered_fraction`` is the
    simulated time span over the plan's stability time. With a module and
    ``C1`` the fast-drift-plane deviation is compared with ``delta/2`` on
    ``|t - t0| <= t0*``.
    """
    elapsed = float(abs(traj.times[-1] - traj.times[0]))
    rep = {
        "max_drift": traj.max_drift,
        "radius": plan.radius,
        "within_radius": bool(traj.max_drift < plan.radius),
        "plan_applicable": plan.applicable,
        "plan_threshold_ok": plan.threshold_ok,
        "lam": plan.lam,
        "threshold": plan.threshold,
        "elapsed_time": elapsed,
        "stability_time": plan.time if math.isfinite(plan.time) else "inf",
        "covered_fraction": (elapsed / plan.time) if plan.time > 0 and math.isfinite(plan.time)
        else 0.0,
        "steps": traj.steps,
        "step": traj.step,
        "halvings": traj.halvings,
        "energy_spread": float(traj.energy.max() - traj.energy.min()),
    }
    if module is not None:
        rep["max_plane_dev"] = traj.max_plane_dev
        rep["half_delta"] = plan.delta / 2
        if C1 is not None and plan.r >= 1:
            D0 = plan.Delta0 if Delta0 is None else Delta0
            eps = plan.inputs["eps"]
            t0s = t_star(plan.delta, eps, D0, plan.r, C1) if 0 < D0 < 1 else 0.0
            mask = np.abs(traj.times - traj.times[0]) <= t0s
            dev = float(traj.plane_dev[mask].max()) if mask.any() else 0.0
            rep["t0_star"] = t0s if math.isfinite(t0s) else "inf"
            rep["plane_dev_within_t0_star"] = dev
            rep["plane_ok"] = bool(dev <= plan.delta / 2)
    return rep
