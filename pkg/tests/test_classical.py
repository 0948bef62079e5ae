import numpy as np
import pytest

from spinfid import _kernels, classical, twospin
from spinfid.analysis import envelope, first_zero
from spinfid.classical import (ClassicalSpinState, InitialDistributionSpec, IntegrationControls,
                               IntegrationError, dipolar_field, init_linear, init_random, integrate,
                               integrate_rotating_secular, rhs, rhs_explicit)
from spinfid.geometry import build_cubic, build_explicit, dipolar_tensor

from conftest import random_unit

ZPAIR = build_explicit([[0, 0, 0], [0, 0, 1]])


def tensor_field(e, g):
    D = dipolar_tensor(g)
    return -np.einsum("klab,lb->ka", D, e)


def brute_field(e, g):
    n = g.n_spins
    H = np.zeros((n, 3))
    for k in range(n):
        for l in range(n):
            if l == k:
                continue
            r = g.sites[l] - g.sites[k]
            d = np.linalg.norm(r)
            H[k] += 3 * r * np.dot(e[l], r) / d**5 - e[l] / d**3
    return H


def zpair_state(e1, e2):
    return ClassicalSpinState(np.array([e1, e2], dtype=float))


# --- initial distributions -------------------------------------------------

def test_linear_small():
    st = init_linear(build_cubic(1, 1, 4), 0.5, seed=0)
    assert np.sum(st.spins[:, 0] > 0) == 3
    assert st.polarization()[0] == 0.5


def test_linear_full():
    st = init_linear(build_cubic(5, 5, 5), 1.0)
    assert np.all(st.spins[:, 0] == 1.0)


def test_linear_343_rounding():
    st = init_linear(build_cubic(7, 7, 7), 0.5, seed=4)
    assert np.sum(st.spins[:, 0] > 0) == 257
    assert st.polarization()[0] == pytest.approx(171 / 343, abs=1e-15)


def test_linear_seed_changes_sites_only():
    g = build_cubic(3, 3, 3)
    a, b = init_linear(g, 0.2, seed=1), init_linear(g, 0.2, seed=2)
    assert a.polarization()[0] == b.polarization()[0]
    assert not np.array_equal(a.spins, b.spins)


def test_langevin_inverse():
    for s in (-0.7, 0.01, 0.5, 0.99):
        k = classical.langevin_kappa(s)
        assert 1 / np.tanh(k) - 1 / k == pytest.approx(s, abs=1e-12)


def test_random_isotropic():
    st = init_random(build_cubic(5, 5, 5), 0.0, seed=3)
    assert np.all(np.abs(st.polarization()) < 3 / np.sqrt(125))


def test_random_343_target():
    st = init_random(build_cubic(7, 7, 7), 0.5, seed=0)
    assert 0.499 <= st.polarization()[0] <= 0.501
    assert np.allclose(np.linalg.norm(st.spins, axis=1), 1.0, atol=1e-15)


def test_random_full_polarization_falls_back(caplog):
    g = build_cubic(2, 2, 2)
    st = init_random(g, 1.0)
    assert np.array_equal(st.spins, init_linear(g, 1.0).spins)
    assert "linear" in caplog.text


@pytest.mark.parametrize("s", [1.5, -1.01])
def test_polarization_out_of_range(s):
    with pytest.raises(ValueError):
        init_linear(build_cubic(2, 1, 1), s)
    with pytest.raises(ValueError):
        init_random(build_cubic(2, 1, 1), s)


def test_near_full_random_matches_linear():
    # at very high polarization the two kinds of initial distribution give the same FID
    g = build_cubic(5, 5, 5)
    lin = integrate(init_linear(g, 1.0), g, 0.01, 400.0)
    rnd = integrate(init_random(g, 0.9999, seed=0), g, 0.01, 400.0)
    t_star = first_zero(lin.trace.t, envelope(lin.trace))
    early = lin.trace.t < 0.5 * t_star
    assert np.abs(rnd.trace.sx - lin.trace.sx)[early].max() < 1e-2


# --- fields and right-hand sides --------------------------------------------

def test_field_zpair_examples():
    e = np.array([[0, 0, 1.0], [0, 0, 1.0]])
    assert np.allclose(dipolar_field(e, ZPAIR)[1], [0, 0, 2])
    e = np.array([[1.0, 0, 0], [1.0, 0, 0]])
    assert np.allclose(dipolar_field(e, ZPAIR)[1], [-1, 0, 0])


def test_field_oracles(rng):
    g = build_cubic(3, 3, 3)
    e = random_unit(rng, 27)
    H = dipolar_field(e, g)
    assert np.abs(H - tensor_field(e, g)).max() < 1e-12
    assert np.abs(H - brute_field(e, g)).max() < 1e-12


def test_pure_larmor(rng):
    e = random_unit(rng, 5)
    d = rhs(e, np.zeros((5, 3)), 0.0)
    assert np.allclose(d, np.column_stack([e[:, 1], -e[:, 0], np.zeros(5)]))


def test_zpair_rhs_term_by_term(rng):
    e = random_unit(rng, 2)
    (x1, y1, z1), (x2, y2, z2) = e
    p = 0.3
    d = rhs(e, dipolar_field(e, ZPAIR), p)
    assert d[0, 0] == pytest.approx(y1 + p * (2 * y1 * z2 + y2 * z1), abs=1e-15)
    assert d[0, 1] == pytest.approx(-x1 - p * (2 * x1 * z2 + x2 * z1), abs=1e-15)
    assert d[0, 2] == pytest.approx(p * (-x1 * y2 + y1 * x2), abs=1e-15)


@pytest.mark.parametrize("dims", [(3, 3, 3), (5, 1, 1), (2, 3, 2), (4, 4, 1)])
def test_form_equivalence(rng, dims):
    g = build_cubic(*dims)
    c = g.coefficients
    for _ in range(25):
        e = random_unit(rng, g.n_spins)
        p = rng.uniform(0.001, 0.5)
        a = rhs(e, dipolar_field(e, g), p)
        b = rhs_explicit(e, c, p)
        assert np.abs(a - b).max() < 1e-12


def test_secular_form_equivalence(rng):
    g = build_cubic(3, 2, 2)
    Ds = classical.coupling_matrix(g, secular=True)
    for _ in range(10):
        e = random_unit(rng, g.n_spins)
        a = rhs(e, _kernels.field(e, Ds), 0.1, larmor=0.0)
        b = rhs_explicit(e, g.coefficients, 0.1, larmor=0.0, secular_only=True)
        assert np.abs(a - b).max() < 1e-12


# --- integration ----------------------------------------------------------------

def test_single_spin_precession():
    g = build_explicit([[0, 0, 0]])
    res = integrate(ClassicalSpinState(np.array([[1.0, 0, 0]])), g, 0.01, 2000.0)
    t = res.trace.t
    assert np.abs(res.trace.sx - np.cos(t)).max() < 1e-6
    assert np.abs(res.trace.sy + np.sin(t)).max() < 1e-6


def test_frozen_in_rotating_frame_without_coupling(rng):
    g = build_cubic(2, 2, 1)
    st = ClassicalSpinState(random_unit(rng, 4))
    res = integrate_rotating_secular(st, g, 1e-300, 50.0)
    assert np.allclose(res.final.spins, st.spins, atol=1e-13)


def test_norms_over_long_run():
    g = build_cubic(3, 3, 3)
    res = integrate(init_random(g, 0.5, seed=2), g, 0.01, 1e4, dt_out=5.0)
    # every accepted step passed the length gate before projection
    assert 0 < res.step_stats.max_norm_deviation <= 1e-8
    assert np.abs(np.linalg.norm(res.final.spins, axis=1) - 1).max() < 1e-14


def test_halving_alone_cannot_hold_lengths():
    # without projection the length error accumulates until no step passes the gate
    g = build_cubic(3, 3, 3)
    ctl = IntegrationControls(renormalize=False)
    with pytest.raises(IntegrationError) as err:
        integrate(init_random(g, 0.5, seed=2), g, 0.01, 1e4, dt_out=5.0, controls=ctl)
    assert err.value.diagnostics["t"] < 1e4


def test_short_run_without_renormalization():
    g = build_cubic(3, 3, 3)
    ctl = IntegrationControls(renormalize=False)
    res = integrate(init_random(g, 0.5, seed=2), g, 0.01, 50.0, controls=ctl)
    assert res.max_norm_error <= 1e-8


def test_step_underflow_raises():
    g = build_cubic(2, 1, 1)
    ctl = IntegrationControls(tol=1e-30, h_min=1e-2)
    with pytest.raises(IntegrationError) as err:
        integrate(init_linear(g, 0.0), g, 0.5, 10.0, controls=ctl)
    assert "t" in err.value.diagnostics


def test_deterministic():
    g = build_cubic(3, 3, 2)
    spec = InitialDistributionSpec("random", 0.5, 7)
    a = integrate(classical.initial_state(g, spec), g, 0.01, 200.0)
    b = integrate(classical.initial_state(g, spec), g, 0.01, 200.0)
    assert np.array_equal(a.trace.sx, b.trace.sx)
    assert np.array_equal(a.final.spins, b.final.spins)


def _tilted(theta, phi):
    return np.array([np.sin(theta) * np.cos(phi), np.sin(theta) * np.sin(phi), np.cos(theta)])


def test_zpair_satisfies_reduced_equations():
    p = 0.01
    st = zpair_state(_tilted(1.1, 0.3), _tilted(2.2, 0.0))
    Dm = classical.coupling_matrix(ZPAIR, secular=True)
    worst = 0.0
    for _ in range(30):
        st = integrate_rotating_secular(st, ZPAIR, p, 100.0, dt_out=100.0).final
        e = st.spins
        de = rhs(e, _kernels.field(e, Dm), p, larmor=0.0) / p  # d/dtau
        th = np.arccos(e[:, 2])
        dth = -de[:, 2] / np.sin(th)
        dphi = (e[:, 0] * de[:, 1] - e[:, 1] * de[:, 0]) / (e[:, 0] ** 2 + e[:, 1] ** 2)
        red = twospin.reduced_from_spins(*e)
        want = twospin.reduced_rhs(red)
        got = np.array([dth[0], dth[1], dphi[0] - dphi[1]])
        worst = max(worst, np.abs(got - want).max())
    assert worst < 1e-6


def test_zpair_follows_reduced_trajectory():
    p = 0.01
    e1, e2 = _tilted(1.1, 0.3), _tilted(2.2, 0.0)
    t = np.arange(0, 1001, 100.0)
    ref = twospin.integrate_reduced(twospin.reduced_from_spins(e1, e2), p * t)
    st = zpair_state(e1, e2)
    for k in range(1, t.size):
        st = integrate_rotating_secular(st, ZPAIR, p, 100.0, dt_out=100.0).final
        r = twospin.reduced_from_spins(*st.spins)
        assert abs(r.theta1 - ref[k, 0]) < 1e-6
        assert abs(r.theta2 - ref[k, 1]) < 1e-6
        assert abs(np.angle(np.exp(1j * (r.Phi - ref[k, 2])))) < 1e-6


def test_zpair_rotating_frame_closed_equations():
    # dX1/dt = p (2 Y1 z2 + Y2 z1) and the cyclic partners, integrated independently
    from scipy.integrate import solve_ivp
    p = 0.05
    e0 = np.array([[0.6, 0.0, 0.8], [0.0, 0.6, -0.8]])

    def f(_, y):
        (X1, Y1, z1), (X2, Y2, z2) = y.reshape(2, 3)
        return [p * (2 * Y1 * z2 + Y2 * z1), -p * (2 * X1 * z2 + X2 * z1), p * (-X1 * Y2 + Y1 * X2),
                p * (2 * Y2 * z1 + Y1 * z2), -p * (2 * X2 * z1 + X1 * z2), p * (-X2 * Y1 + Y2 * X1)]

    t = np.arange(0, 400.5, 0.5)
    ref = solve_ivp(f, (0, 400), e0.ravel(), method="DOP853", t_eval=t, rtol=1e-13, atol=1e-14)
    res = integrate_rotating_secular(ClassicalSpinState(e0), ZPAIR, p, 400.0)
    assert np.abs(res.trace.sx - ref.y[[0, 3]].mean(axis=0)).max() < 1e-8
    assert np.abs(res.trace.sy - ref.y[[1, 4]].mean(axis=0)).max() < 1e-8


def test_zpair_integrals_of_motion():
    p = 0.01
    st = zpair_state([np.sin(1.2), 0, np.cos(1.2)], [np.sin(1.7) * np.cos(0.4),
                                                    np.sin(1.7) * np.sin(0.4), np.cos(1.7)])
    M0, E0 = twospin.invariants(*twospin.reduced_from_spins(*st.spins).as_array())
    for _ in range(10):
        st = integrate_rotating_secular(st, ZPAIR, p, 1000.0, dt_out=1000.0).final
        M, E = twospin.invariants(*twospin.reduced_from_spins(*st.spins).as_array())
        assert abs(M - M0) < 1e-6 and abs(E - E0) < 1e-6


def test_long_period_envelope_near_separatrix():
    p = 0.01
    d = np.arccos(0.9999)
    st = zpair_state([np.cos(d), 0, np.sin(d)], [np.cos(d), 0, -np.sin(d)])
    _, E = twospin.invariants(*twospin.reduced_from_spins(*st.spins).as_array())
    expected = twospin.period_T(E) / p
    res = integrate(st, ZPAIR, p, 4.5 * expected, dt_out=0.5)
    env = envelope(res.trace)
    # envelope maxima recur once per period of c^2
    t = res.trace.t
    inner = (env[1:-1] > env[:-2]) & (env[1:-1] >= env[2:]) & (env[1:-1] > 0.999)
    peaks = t[1:-1][inner]
    peaks = peaks[np.concatenate([[True], np.diff(peaks) > 0.5 * expected])]
    measured = np.diff(peaks).mean()
    assert measured == pytest.approx(expected, rel=0.05)


def test_lab_and_rotating_envelopes_agree():
    g = build_cubic(3, 3, 1)
    st = init_random(g, 0.5, seed=1)
    lab = integrate(st, g, 0.001, 1500.0, secular_only=True)
    rot = integrate_rotating_secular(st, g, 0.001, 1500.0)
    assert np.abs(envelope(lab.trace) - envelope(rot.trace)).max() < 1e-3
