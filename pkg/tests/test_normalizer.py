import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from aperiodic_nf.dynamics import symplecticity_defect
from aperiodic_nf.estimator import delta_threshold, f_tilde, lambda_param
from aperiodic_nf.ftseries import Caps, DomainParams, FTSeries, fourier_norm, harmonic_split, \
    poisson_bracket
from aperiodic_nf.normalizer import (E_op, HamiltonianSpec, NormalizationStateError,
                                     SmallDivisorError, eta_image, homological_residual,
                                     lie_derivative, map_coordinates, normalize,
                                     normalize_autonomous, psi_step, solve_homological)
from aperiodic_nf.resonance import ResonanceModule
from _support import cos_series, criterion_spec, pendulum_spec, quadratic_h, random_series

C1 = Caps(6, 3, 2)
ZERO1 = ResonanceModule.zero(1)


def wave(k, c=1.0, caps=C1, center=(1.0,), m=(0,), p=0):
    return FTSeries.from_terms({((k,), m, p): c}, 1, caps, center)


# ----------------------------------------------------------------------
# Lie operators


def test_lie_derivative_examples():
    chi = wave(1, 0.3, m=(1,))
    assert lie_derivative(FTSeries.constant(2.0, 1, C1, (1.0,)), chi).is_zero
    I = FTSeries.action(0, 1, C1, (1.0,))
    assert lie_derivative(wave(1), I).coeffs == {((1,), (0,), 0): 1j}
    g = wave(2, m=(1,))
    a = 2.5
    assert (lie_derivative(g, chi.scale(a)) - lie_derivative(g, chi).scale(a)).max_abs() == 0.0


def test_E_op_examples():
    rng = np.random.default_rng(0)
    g = random_series(rng, 1, C1, [1.0], kmax=1, dmax=1)
    c1 = random_series(rng, 1, C1, [1.0], kmax=1, dmax=1, pmax=1)
    c2 = random_series(rng, 1, C1, [1.0], kmax=1, dmax=1, pmax=1)
    assert E_op(0, [c1], g) is g
    assert (E_op(1, [c1], g) - lie_derivative(g, c1)).max_abs() == 0.0
    twice = lie_derivative(lie_derivative(g, c1), c1).scale(0.5)
    assert (E_op(2, [c1, c1.zero_like()], g) - twice).max_abs() <= 1e-15
    assert (E_op(2, [c1, c2], g) - twice - lie_derivative(g, c2)).max_abs() <= 1e-15
    with pytest.raises(ValueError):
        E_op(3, [c1, c2], g)


def test_eta_image_examples():
    assert eta_image(1, [wave(1)]).is_zero
    xi = FTSeries.from_terms({((0,), (0,), 1): 1.0}, 1, C1, (1.0,))
    assert eta_image(1, [xi]).coeffs == {((0,), (0,), 0): -1 + 0j}
    chi1 = wave(1, p=1)
    expected = lie_derivative(wave(1).scale(-1.0), chi1).scale(0.5)
    assert (eta_image(2, [chi1, chi1.zero_like()]) - expected).max_abs() <= 1e-15
    with pytest.raises(ValueError):
        eta_image(0, [chi1])


def test_psi_step_examples():
    rng = np.random.default_rng(1)
    H1 = random_series(rng, 1, C1, [1.0], kmax=1, dmax=1)
    chi1 = random_series(rng, 1, C1, [1.0], kmax=1, dmax=1, pmax=1)
    zero = H1.zero_like()
    assert psi_step(1, [], [], [H1], 0.3) is H1
    # mu = 0, H_2 = 0, Z_1 = 0: only (1/2) E_1 H_1 survives
    p = psi_step(2, [chi1], [zero], [H1, zero], 0.0)
    assert (p - lie_derivative(H1, chi1).scale(0.5)).max_abs() <= 1e-15
    # H_1 = H_2 = 0: only the aperiodic term survives
    mu = 0.01
    p = psi_step(2, [chi1], [zero], [zero, zero], mu)
    assert (p - eta_image(1, [chi1]).scale(mu)).max_abs() <= 1e-15
    with pytest.raises(NormalizationStateError):
        psi_step(3, [chi1], [zero], [H1], 0.0)


def _brute_order(s, chi, h, H, mu):
    """Order-``s`` part of ``T_chi(h + mu eta + sum H_j)`` from the raw recursion."""
    def images(base, seed, upto):
        out = [base]
        for t in range(1, upto + 1):
            acc = chi[0].zero_like()
            for j in range(1, t + 1):
                if j > len(chi):
                    continue
                if t == j and seed is not None:
                    term = seed(chi[j - 1])
                else:
                    term = poisson_bracket(out[t - j], chi[j - 1])
                acc = acc + term.scale(j / t)
            out.append(acc)
        return out

    total = images(h, None, s)[s]
    for j in range(1, min(s, len(H)) + 1):
        total = total + images(H[j - 1], None, s - j)[s - j]
    if s >= 2:
        total = total + images(None, lambda c: -c.partial_xi(), s - 1)[s - 1].scale(mu)
    return total


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10 ** 6), st.floats(0.0, 0.5), st.integers(1, 2))
def test_psi_step_matches_brute_force(seed, mu, n):
    rng = np.random.default_rng(seed)
    caps = Caps(12, 6, 6)
    c = rng.uniform(0.5, 1.5, n)
    h = quadratic_h(np.diag(rng.uniform(0.5, 2, n)), c, caps)
    r = 3
    H = [random_series(rng, n, caps, c, nterms=3, kmax=1, dmax=1, pmax=1) for _ in range(r)]
    chi = [random_series(rng, n, caps, c, nterms=3, kmax=1, dmax=1, pmax=1) for _ in range(r)]
    # Z_j chosen consistently with the generators (the lower-order equations hold exactly)
    Z = [_brute_order(j, chi, h, H, mu) for j in range(1, r + 1)]
    for s in range(1, r + 1):
        trial = chi[:s - 1] + [chi[0].zero_like()] * (r - s + 1)
        brute = _brute_order(s, trial, h, H, mu)
        got = psi_step(s, chi, Z, H, mu)
        assert (got - brute).max_abs() <= 1e-12 * max(1.0, brute.max_abs())


# ----------------------------------------------------------------------
# homological equation


def _spec1(center=1.0, caps=C1):
    h = quadratic_h([[1.0]], [center], caps)
    return HamiltonianSpec(h, cos_series(1, caps, [center], (1,)), 0.0, 0.0,
                           DomainParams(0.5, 0.5))


def test_solve_homological_examples():
    spec = _spec1()
    g = FTSeries.from_terms({((0,), (0,), 1): 2.0, ((0,), (1,), 0): 1.0}, 1, C1, (1.0,))
    chi, Z = solve_homological(g, ZERO1, spec, 0.1)
    assert chi.is_zero and (Z - g).max_abs() == 0.0
    psi = wave(1)
    chi, Z = solve_homological(psi, ZERO1, spec, 0.1)
    assert Z.is_zero
    assert chi.coeff((1,), (0,), 0) == pytest.approx(-1j)
    assert homological_residual(chi, Z, psi, spec.h).max_abs() <= 1e-15
    chi, Z = solve_homological(psi, ResonanceModule.full(1), spec, 0.1)
    assert chi.is_zero and (Z - psi).max_abs() == 0.0


def test_small_divisor_error_names_harmonic():
    spec = _spec1(center=0.01)
    with pytest.raises(SmallDivisorError) as err:
        solve_homological(wave(1, center=(0.01,)), ZERO1, spec, 0.1)
    assert err.value.k == (1,)
    assert err.value.divisor == pytest.approx(0.01)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10 ** 6))
def test_homological_residual_vanishes(seed):
    rng = np.random.default_rng(seed)
    caps = Caps(4, 4, 2)
    c = np.array([1.0, (math.sqrt(5) - 1) / 2])
    h = quadratic_h(np.diag(rng.uniform(0.5, 2, 2)), c, caps)
    spec = HamiltonianSpec(h, h.zero_like(), 0.0, 0.0, DomainParams(0.01, 0.5))
    psi = random_series(rng, 2, caps, c, nterms=6, kmax=4, dmax=0)
    chi, Z = solve_homological(psi, ResonanceModule.zero(2), spec, 1e-6)
    res = homological_residual(chi, Z, psi, spec.h)
    # the truncated inverse divisor is exact at every kept action degree
    scale = max(psi.max_abs(), chi.max_abs())
    assert res.max_abs() <= 1e-13 * scale


# ----------------------------------------------------------------------
# normalize


def test_normalize_unperturbed_is_trivial():
    spec = pendulum_spec(0.0, 1e-3)
    res = normalize(spec, 3, 3, ZERO1)
    assert all(c.is_zero for c in res.chi)
    assert all(z.is_zero for z in res.Z)
    assert res.remainder.is_zero and res.remainder_norm == 0.0
    assert res.alpha > 0


def test_normalize_full_module_keeps_everything():
    spec = pendulum_spec(1e-3, 1e-3)
    res = normalize(spec, 2, 3, ResonanceModule.full(1))
    assert all(c.is_zero for c in res.chi)
    first = harmonic_split(spec.f.scale(spec.eps), 3)[0]
    assert (res.Z[0] - first).max_abs() == 0.0
    assert math.isinf(res.alpha)


def test_normalize_pendulum_example_against_estimate():
    # h = I^2/2, f = cos(phi)(1 + xi), eps = mu = 1e-3, r = 2, K = 3, M = {0}
    caps = Caps(12, 6, 4)
    h = quadratic_h([[1.0]], [1.0], caps)
    f = cos_series(1, caps, [1.0], (1,)) + cos_series(1, caps, [1.0], (1,), p=1)
    dom = DomainParams(0.5, 1.0, xi_window=1.0)
    spec = HamiltonianSpec(h, f, 1e-3, 1e-3, dom)
    res = normalize(spec, 2, 3, ZERO1)
    Ft = f_tilde(spec.C_f, 1, dom.sigma)
    chk = delta_threshold(2, res.alpha, dom.delta, dom.sigma,
                          lambda_param(spec.eps, spec.mu, Ft), 3)
    # at these values Delta exceeds one, so the bound is a loose formula value
    bound = 8 * spec.eps * Ft * chk.Delta ** 2
    assert res.remainder_norm <= bound
    assert res.converged and max(res.residuals) <= 1e-13


def test_normalize_report_is_json():
    res = normalize(pendulum_spec(1e-4, 1e-4), 2, 3, ZERO1)
    rep = json.loads(json.dumps(res.to_report()))
    assert rep["r"] == 2 and len(rep["step_norms"]) == 2
    assert set(rep["support"]["Z"]) == {"0"}


def test_normalize_propagates_small_divisor():
    spec = pendulum_spec(1e-3, 0.0, center=(0.01,))
    with pytest.raises(SmallDivisorError):
        normalize(spec, 2, 3, ZERO1, alpha=0.1)


@settings(max_examples=8, deadline=None)
@given(st.integers(0, 10 ** 4), st.integers(1, 2))
def test_step_inequalities_and_support(seed, r):
    spec, r, K = criterion_spec(seed, r)
    module = ResonanceModule.zero(spec.n)
    res = normalize(spec, r, K, module)
    assert res.alpha_rigorous
    for s, (c, z, p) in enumerate(zip(res.chi, res.Z, res.psi), 1):
        pn = fourier_norm(p, spec.dom)
        assert fourier_norm(z, spec.dom) <= pn * (1 + 1e-12)
        assert res.alpha * fourier_norm(c, spec.dom) <= pn * (1 + 1e-12)
        norms = z.harmonic_norms()
        assert (norms == 0).all() and (norms < r * K).all()
        assert c.harmonics.any(axis=1).all()       # no zero harmonic in chi
    assert max(res.residuals) <= 1e-12


def test_mu_zero_matches_autonomous_normalization():
    spec = pendulum_spec(1e-3, 0.0, caps=Caps(8, 4, 2), delta=0.5)
    a = normalize(spec, 3, 3, ZERO1)
    b = normalize_autonomous(spec, 3, 3, ZERO1)
    scale = max(x.max_abs() for x in a.chi + a.Z)
    for x, y in zip(a.chi + a.Z, b.chi + b.Z):
        assert (x - y).max_abs() <= 1e-14 * scale
    assert (a.remainder - b.remainder).max_abs() <= 1e-14 * max(1.0, a.remainder.max_abs())


@pytest.mark.parametrize("mu", [0.0, 1e-3])
def test_pointwise_normal_form_identity(mu):
    # H(C(z)) + mu (T_chi eta - eta)(z) = (h + sum Z + R)(z) when the caps are generous
    caps = Caps(24, 12, 4)
    spec = pendulum_spec(1e-3, mu, caps=caps, delta=0.5)
    res = normalize(spec, 2, 3, ZERO1)
    order = 10
    C = map_coordinates(res.chi, order=order)
    eta = res.chi[0].zero_like()
    for t in range(1, order + 1):
        eta = eta + eta_image(t, res.chi)
    H = spec.hamiltonian()
    rhs_series = spec.h + res.normal_part + res.remainder
    rng = np.random.default_rng(4)
    for _ in range(10):
        I = np.array([1.0 + rng.uniform(-0.1, 0.1)])
        phi = np.array([rng.uniform(0, 2 * np.pi)])
        xi = rng.uniform(-1, 1)
        a, b, x = C(I, phi, xi)
        assert x == xi
        lhs = H.evaluate(a, b, xi).real + mu * eta.evaluate(I, phi, xi).real
        assert lhs == pytest.approx(rhs_series.evaluate(I, phi, xi).real, abs=1e-14)


# ----------------------------------------------------------------------
# coordinate map


def test_map_coordinates_identity_for_zero_generator():
    C = map_coordinates([FTSeries.constant(0.0, 1, C1, (1.0,))])
    I, phi, xi = C(np.array([1.3]), np.array([0.4]), 0.7)
    assert I[0] == pytest.approx(1.3) and phi[0] == pytest.approx(0.4) and xi == 0.7


def test_map_coordinates_sine_generator():
    c = 1e-3
    chi = FTSeries.from_terms({((1,), (0,), 0): c / 2j, ((-1,), (0,), 0): -c / 2j}, 1, C1,
                              (1.0,), real=True)
    C = map_coordinates([chi])
    for phi in (0.0, 0.8, 2.5):
        I, ph, _ = C(np.array([1.2]), np.array([phi]), 0.0)
        assert I[0] == pytest.approx(1.2 - c * math.cos(phi), abs=1e-15)
        assert ph[0] == pytest.approx(phi, abs=1e-15)
    J, ps, _ = C.inverse(*C(np.array([1.2]), np.array([0.8]), 0.0))
    assert J[0] == pytest.approx(1.2, abs=1e-14) and ps[0] == pytest.approx(0.8, abs=1e-14)


def _map_defect(eps, r):
    spec = pendulum_spec(eps, 0.0, caps=Caps(8, 4, 2), delta=0.5)
    C = map_coordinates(normalize(spec, r, 3, ZERO1).chi)
    z = np.array([1.05, 0.7])
    fd = 1e-6
    J = np.zeros((2, 2))
    for j in range(2):
        e = np.zeros(2)
        e[j] = fd
        a = np.concatenate(C(z[:1] + e[:1], z[1:] + e[1:], 0.3)[:2])
        b = np.concatenate(C(z[:1] - e[:1], z[1:] - e[1:], 0.3)[:2])
        J[:, j] = (a - b) / (2 * fd)
    return symplecticity_defect(J)


@pytest.mark.parametrize("r", [1, 2])
def test_coordinate_map_canonical_at_order(r):
    d1, d2 = _map_defect(1e-2, r), _map_defect(1e-3, r)
    # fitted exponent of the symplecticity defect in eps (finite-difference noise ~1e-10)
    assert math.log10(d1 / d2) >= 1.99
