import numpy as np
import pytest
from sklearn.base import clone

from semiprop._validation import NotFittedError
from semiprop.flow import integrate_flow
from semiprop.hamiltonians import builtin_model
from semiprop.herman_kluk import (HermanKlukPropagator, PhaseSpaceQuadrature,
                                  QuadratureCoverageWarning, ThetaMultiplier, apply_theta,
                                  hk_kernel, hk_normalization, hk_phase, propagate_hk)
from semiprop.reference import (NyquistError, free_gaussian, free_kernel, harmonic_potential,
                                mehler_kernel, split_step_propagate)
from semiprop.wavefunction import GridSpec, gaussian_packet


def test_phase_on_shell_and_off_shell():
    tr = integrate_flow(builtin_model("free"), [0.0, 2.0], 3.0)
    assert hk_phase(tr, 6.0, 0.0) == pytest.approx(6.0, abs=1e-10)
    assert hk_phase(tr, 7.0, 0.0) == pytest.approx(8.0 + 0.5j, abs=1e-10)
    q = integrate_flow(builtin_model("quartic", [0.1]), [0.3, -0.4], 1.2)
    assert abs(hk_phase(q, q.zt.q, q.z0.q).imag) < 1e-14


def test_normalization_constant():
    assert hk_normalization(1) == pytest.approx(np.exp(0.25j * np.pi))
    assert hk_normalization(2) == pytest.approx(1j)


@pytest.mark.parametrize("t,x,y", [(1.0, 0.3, 0.2), (2.5, -0.4, 0.1)])
def test_kernel_harmonic(t, x, y):
    h = 0.1
    m = builtin_model("harmonic", [1.0])
    quad = PhaseSpaceQuadrature.for_kernel(m, t, x, y, h)
    k = hk_kernel(m, t, x, y, quad, h)
    ref = mehler_kernel(t, x, y, 1.0, h)
    assert abs(k - ref) / abs(ref) < 1e-4


def test_kernel_free():
    h = 0.1
    m = builtin_model("free")
    quad = PhaseSpaceQuadrature.for_kernel(m, 2.0, 1.0, 0.0, h)
    k = hk_kernel(m, 2.0, 1.0, 0.0, quad, h)
    assert abs(k - free_kernel(2.0, 1.0, 0.0, h)) / abs(k) < 1e-4


def test_identity_at_zero_time():
    g = GridSpec.from_bounds(-6, 6, 256, 0.1)
    psi = gaussian_packet(g, 0.4, -0.6, width=0.7)
    out = propagate_hk(builtin_model("quartic", [0.1]), psi, 0.0)
    assert out.relative_error(psi) < 1e-6


def test_free_gaussian_evolution():
    g = GridSpec.from_bounds(-6, 6, 256, 0.1)
    psi = gaussian_packet(g, -0.5, 0.8)
    out = propagate_hk(builtin_model("free"), psi, 1.0)
    assert out.relative_error(free_gaussian(g, -0.5, 0.8, 1.0)) < 1e-4


def test_harmonic_against_split_step():
    g = GridSpec.from_bounds(-5, 5, 256, 0.05)
    psi = gaussian_packet(g, 1.0, 0.0)
    m = builtin_model("harmonic", [1.0])
    out = propagate_hk(m, psi, np.pi / 4)
    ref = split_step_propagate(harmonic_potential(1.0), psi, np.pi / 4, 2000)
    assert out.relative_error(ref) < 1e-3


def test_coverage_warning_for_small_box():
    h = 0.1
    m = builtin_model("harmonic", [1.0])
    quad = PhaseSpaceQuadrature.tensor([(0.0, 0.4), (-0.2, 0.6)], [20, 20])
    with pytest.warns(QuadratureCoverageWarning):
        hk_kernel(m, 1.0, 0.3, 0.2, quad, h)


def test_quadrature_constructors():
    q = PhaseSpaceQuadrature.tensor([(-1, 1), (-2, 2)], [11, 21])
    assert q.size == 231 and q.weights.sum() == pytest.approx(8.0)
    s = PhaseSpaceQuadrature.sobol([(-1, 1), (-2, 2)], 256, seed=3)
    assert s.size == 256 and s.weights.sum() == pytest.approx(8.0)


def test_theta_identity_zero_and_bump():
    g = GridSpec.from_bounds(-6, 6, 256, 0.1)
    psi = gaussian_packet(g, 0.0, 1.0)
    ones = ThetaMultiplier.window(-3.0, 3.0, 0.5)
    assert apply_theta(psi, ones).distance(psi) < 1e-10
    assert apply_theta(psi, ThetaMultiplier.zero()).norm() == 0.0
    bump = ThetaMultiplier.window(-0.5, 2.5, 0.3)  # margin 1.5 >> sqrt(hbar)
    assert apply_theta(psi, bump).relative_error(psi) < 1e-6
    with pytest.raises(NyquistError):
        apply_theta(psi, ThetaMultiplier.window(-40.0, 40.0, 1.0))


def test_theta_validation():
    with pytest.raises(ValueError):
        ThetaMultiplier(lambda p: np.ones(p.shape[0]), [(-1.0, 1.0)])


def test_estimator_api():
    g = GridSpec.from_bounds(-6, 6, 128, 0.1)
    psi = gaussian_packet(g, 0.3, 0.0)
    est = HermanKlukPropagator(model=builtin_model("free"), t=0.5)
    with pytest.raises(NotFittedError):
        est.transform(psi)
    out = est.fit(psi).transform(psi)
    assert out.relative_error(free_gaussian(g, 0.3, 0.0, 0.5)) < 1e-4
    assert est.n_nodes_ == est.quad_.size
    params = clone(est).get_params()
    assert params["t"] == 0.5 and params["spacing_factor"] == pytest.approx(1 / 3)
