import numpy as np
import pytest

from semiprop.hamiltonians import HamiltonianModel, PhasePoint, builtin_model, check_gradients


def test_harmonic_energy():
    m = builtin_model("harmonic", [1.0])
    assert m.eval(0.0, [1.0, 0.0]) == pytest.approx(0.5)


def test_free_gradient():
    m = builtin_model("free")
    np.testing.assert_allclose(m.grad(0.0, [3.0, 2.0]), [0.0, 2.0])


def test_quartic_hessian():
    m = builtin_model("quartic", [0.1])
    np.testing.assert_allclose(m.hess(0.0, [1.0, 0.0]), np.diag([2.2, 1.0]), atol=1e-14)


def test_batched_evaluation_shapes():
    m = builtin_model("quartic", [0.1, 2])
    z = np.random.default_rng(0).normal(size=(7, 4))
    assert m.eval(0.0, z).shape == (7,)
    assert m.grad(0.0, z).shape == (7, 4)
    assert m.hess(0.0, z).shape == (7, 4, 4)


def test_harmonic_gradients_exact():
    m = builtin_model("harmonic", [1.0])
    pts = np.random.default_rng(1).normal(size=(10, 2))
    rep = check_gradients(m, pts, tol=1e-5)
    assert rep.passed and rep.max_deviation < 1e-5


def test_quartic_gradients_pass():
    m = builtin_model("quartic", [0.1])
    rng = np.random.default_rng(2)
    pts = [PhasePoint([q], [p]) for q, p in zip(rng.uniform(-2, 2, 10), rng.normal(size=10))]
    assert check_gradients(m, pts, tol=1e-4).passed


def test_wrong_gradient_flagged():
    good = builtin_model("harmonic", [1.0])
    bad = HamiltonianModel(1, "bad", good.eval, lambda t, z: 2.0 * good.grad(t, z), good.hess)
    rep = check_gradients(bad, [[0.5, 0.3], [1.0, -1.0]], tol=1e-5)
    assert not rep.passed
    assert ("grad", 0) in rep.flagged and ("grad", 1) in rep.flagged


def test_unknown_model_and_bad_params():
    with pytest.raises(ValueError):
        builtin_model("morse")
    with pytest.raises(ValueError):
        builtin_model("harmonic", [np.nan])
    with pytest.raises(ValueError):
        builtin_model("harmonic", [])


def test_phase_point_validation():
    with pytest.raises(ValueError):
        PhasePoint([1.0, 2.0], [0.0])
    z = PhasePoint.from_z([1.0, 2.0, 3.0, 4.0])
    np.testing.assert_array_equal(z.q, [1.0, 2.0])
