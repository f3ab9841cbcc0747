import numpy as np
import pytest
from scipy.integrate import solve_ivp

from semiprop import (GridSpec, MaslovError, VanVleckPropagator, builtin_model, find_branches,
                      free_kernel, hessian_phi, integrate_flow, kernel_column, maslov_index,
                      mehler_kernel, vanvleck_kernel)
from semiprop.experiments import model_potential
from semiprop.van_vleck import caustic_index, correction_coefficients, ehrenfest_diagnostics


def test_free_branch():
    found = find_branches(builtin_model("free"), 2.0, 1.0, 0.0, (-5, 5))
    assert len(found) == 1
    b = found[0]
    assert b.eta[0] == pytest.approx(0.5, abs=1e-10)
    assert b.action == pytest.approx(0.25, abs=1e-10)
    assert b.mixed_hessian[0, 0] == pytest.approx(-0.5, abs=1e-10)
    assert b.maslov == 0


def test_harmonic_quarter_period_branch():
    t = np.pi / 2
    found = find_branches(builtin_model("harmonic", [1.0]), t, 0.7, 0.2, (-5, 5))
    assert len(found) == 1
    b = found[0]
    assert b.eta[0] == pytest.approx(0.7, abs=1e-9)
    assert b.action == pytest.approx(-0.7 * 0.2, abs=1e-9)
    assert b.maslov == 0


def _quartic_scan_oracle(lam, t, x, y, lo, hi, n=6000):
    """Dense scan of q_t(y, eta) - x with a plain ODE solve, then bisection."""
    def shoot(etas):
        k = etas.size

        def rhs(s, u):
            q, p = u[:k], u[k:]
            return np.concatenate([p, -(q + 4 * lam * q ** 3)])

        sol = solve_ivp(rhs, (0, t), np.concatenate([np.full(k, y), etas]), method="DOP853",
                        rtol=1e-12, atol=1e-12)
        return sol.y[:k, -1] - x

    etas = np.linspace(lo, hi, n)
    f = shoot(etas)
    idx = np.nonzero(np.sign(f[:-1]) != np.sign(f[1:]))[0]
    a, b = etas[idx], etas[idx + 1]
    fa = f[idx]
    for _ in range(45):
        m = 0.5 * (a + b)
        fm = shoot(m)
        left = np.sign(fm) == np.sign(fa)
        a = np.where(left, m, a)
        fa = np.where(left, fm, fa)
        b = np.where(left, b, m)
    return 0.5 * (a + b)


def test_quartic_branches_match_dense_scan():
    found = find_branches(builtin_model("quartic", (0.1,)), 6.0, 0.0, 0.0, (-3, 3))
    ours = np.array([b.eta[0] for b in found])
    oracle = _quartic_scan_oracle(0.1, 6.0, 0.0, 0.0, -3.0, 3.0)
    assert ours.size == oracle.size == 3
    np.testing.assert_allclose(ours, np.sort(oracle), atol=1e-8)
    assert ours[1] == pytest.approx(0.0, abs=1e-10)


@pytest.mark.parametrize("t,expected", [(0.5, 0), (2.0, 0), (4.0, 1), (7.0, 2), (9.5, 3)])
def test_harmonic_maslov_indices(t, expected):
    found = find_branches(builtin_model("harmonic", [1.0]), t, 0.3, 0.2, (-20, 20))
    assert len(found) == 1
    b = found[0]
    assert b.maslov == expected
    assert caustic_index(b.traj) == expected


def test_backward_free_maslov():
    tr = integrate_flow(builtin_model("free"), [0.0, 1.0], -1.0)
    assert maslov_index(tr) == -1
    assert caustic_index(tr) == -1


def test_maslov_rejects_endpoint_caustic():
    tr = integrate_flow(builtin_model("harmonic", [1.0]), [0.2, 0.5], np.pi)
    with pytest.raises(MaslovError):
        maslov_index(tr)


def test_hessian_at_time_zero():
    tr = integrate_flow(builtin_model("harmonic", [1.0]), [0.1, 0.3], 0.0)
    rep = hessian_phi(tr)
    assert rep.inv_block is None
    assert rep.det_error < 1e-12


def test_hessian_harmonic_quarter_period():
    tr = integrate_flow(builtin_model("harmonic", [1.0]), [0.2, 0.7], np.pi / 4)
    rep = hessian_phi(tr)
    # M = C - B - i(A + D) with A = D = cos, B = -C = sin
    c = s = np.sqrt(0.5)
    assert rep.det_direct == pytest.approx((-(-s - s - 2j * c)) * s, abs=1e-9)
    assert rep.inv_error < 1e-10


def test_hessian_random_configurations():
    rng = np.random.default_rng(3)
    models = [builtin_model("harmonic", [1.0, 1.4]), builtin_model("quartic", (0.1,)),
              builtin_model("inverted_harmonic", [0.8])]
    for _ in range(12):
        m = models[rng.integers(len(models))]
        z0 = rng.uniform(-1, 1, 2 * m.dim)
        t = rng.uniform(0.3, 2.5)
        rep = hessian_phi(integrate_flow(m, z0, t))
        assert rep.inv_error < 1e-8
        assert rep.det_error < 1e-8


def test_vanvleck_free_exact():
    found = find_branches(builtin_model("free"), 2.0, 1.0, 0.0, (-5, 5))
    v = vanvleck_kernel(found.branches, 0.1)
    ref = free_kernel(2.0, 1.0, 0.0, 0.1)
    assert abs(v.value - ref) / abs(ref) < 1e-10
    assert not v.no_classical_path


@pytest.mark.parametrize("t", [1.0, 4.0])
def test_vanvleck_harmonic_exact(t):
    found = find_branches(builtin_model("harmonic", [1.0]), t, 0.3, 0.2, (-8, 8))
    v = vanvleck_kernel(found.branches, 0.05)
    ref = mehler_kernel(t, 0.3, 0.2, 1.0, 0.05)
    assert abs(v.value - ref) / abs(ref) < 1e-8


def test_vanvleck_two_dimensional_harmonic():
    m = builtin_model("harmonic", [1.0, 1.3])
    for t in (1.0, 3.0):
        found = find_branches(m, t, [0.3, -0.1], [0.2, 0.4], (-8, 8))
        assert len(found) == 1
        v = vanvleck_kernel(found.branches, 0.1)
        ref = mehler_kernel(t, 0.3, 0.2, 1.0, 0.1) * mehler_kernel(t, -0.1, 0.4, 1.3, 0.1)
        assert abs(v.value - ref) / abs(ref) < 1e-8


def test_no_classical_path():
    found = find_branches(builtin_model("free"), 1.0, 4.0, 0.0, (-2, 2))
    v = vanvleck_kernel(found.branches, 0.1)
    assert v.no_classical_path
    assert v.value == 0


def test_caustic_roots_are_flagged_not_summed():
    found = find_branches(builtin_model("harmonic", [1.0]), np.pi, -0.2, 0.2, (-2, 2))
    assert found.branches == []
    assert found.degenerate


def test_correction_coefficients_harmonic_vanish():
    found = find_branches(builtin_model("harmonic", [1.0]), 1.0, 0.3, 0.2, (-5, 5))
    b = correction_coefficients(found[0], 0.05, 3)
    assert abs(b[0] - 1) < 1e-8
    assert abs(b[1]) < 1e-7 and abs(b[2]) < 1e-6


def test_second_order_improves_quartic():
    m = builtin_model("quartic", (0.1,))
    h, t, y = 0.05, 2.0, 0.2
    n = int(2 ** np.ceil(np.log2(16 * 9 / (np.pi * h))))
    col = kernel_column(model_potential(m), t, y, GridSpec.from_bounds(-8, 8, n, h), 4000,
                        band=(-6, 6), taper=1.0)
    for x in (-0.4, 0.0, 0.3):
        found = find_branches(m, t, x, y, (-8, 8))
        ref = col.value_at(x, [b.eta[0] for b in found])
        e1 = abs(vanvleck_kernel(found.branches, h, 1).value - ref)
        e2 = abs(vanvleck_kernel(found.branches, h, 2).value - ref)
        assert e2 < e1


def test_ehrenfest_diagnostics():
    found = find_branches(builtin_model("harmonic", [1.0]), 1.0, 0.3, 0.2, (-5, 5))
    diag = ehrenfest_diagnostics(found.branches, 0.05, omega=1.0)
    assert diag["lambda"] == 0.0
    assert 0 < diag["ehrenfest_margin"] <= 1


def test_estimator_predict():
    est = VanVleckPropagator(model=builtin_model("harmonic", [1.0]), t=1.0, hbar=0.05).fit()
    X = np.array([[0.3, 0.2], [-0.5, 0.1]])
    out = est.predict(X)
    ref = [mehler_kernel(1.0, x, y, 1.0, 0.05) for x, y in X]
    np.testing.assert_allclose(out, ref, rtol=1e-8)
    assert est.get_params()["t"] == 1.0


def test_estimator_requires_model():
    with pytest.raises(ValueError):
        VanVleckPropagator().fit()
