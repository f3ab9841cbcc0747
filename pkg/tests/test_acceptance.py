"""Acceptance criteria 1-11, each printing a single pass/fail line."""
import numpy as np
import pytest

from semiprop import (GridSpec, PhaseSpaceQuadrature, builtin_model, estimate_omega, find_branches,
                      free_kernel, gaussian_packet, hessian_phi, hk_kernel, mehler_kernel,
                      propagate_hk, vanvleck_kernel)
from semiprop.experiments import ExperimentConfig, flow_check, parse_config, run_sweep, statphase_check
from semiprop.van_vleck import caustic_index

STATPHASE_HBARS = [2.0 ** -k for k in range(4, 11)]


@pytest.fixture(scope="module")
def flow_set():
    return flow_check(n_traj=50, t_max=5.0, box=2.0, seed=0)


def test_c01_symplectic_integrity(flow_set, report):
    rows, summary = flow_set
    w = summary["worst"]
    ok = (len(rows) == 50 and {r["model"] for r in rows} == {"free", "harmonic", "inverted_harmonic", "quartic"}
          and max(w["AtC"], w["BtD"], w["AtD_CtB"]) <= 1e-7 and w["det"] <= 1e-7)
    assert report(1, "symplectic identities on 50 trajectories", ok,
                  f"max residual {max(w['AtC'], w['BtD'], w['AtD_CtB']):.1e}, det dev {w['det']:.1e}")


def test_c02_y_matrix_bound(flow_set, report):
    _, summary = flow_set
    w = summary["worst"]
    ok = w["Y_smin"] >= 2 - 1e-6 and w["Y_resid"] <= 1e-6
    assert report(2, "Y_t singular values and Y*Y - Z*Z = 4I", ok,
                  f"min sv {w['Y_smin']:.9f}, residual {w['Y_resid']:.1e}")


def test_c03_identity_at_zero_time(report):
    h = 0.1
    rng = np.random.default_rng(11)
    g = GridSpec.from_bounds(-6, 6, 256, h)
    models = ["free", "harmonic", "inverted_harmonic", "quartic", "harmonic"]
    errs = []
    for name in models:
        psi = gaussian_packet(g, rng.uniform(-1.5, 1.5), rng.uniform(-1.5, 1.5), width=rng.uniform(0.5, 2.0))
        quad = PhaseSpaceQuadrature.for_wavefunction(psi, spacing_factor=1 / 3)
        params = {"quartic": (0.1,), "free": ()}.get(name, (1.0,))
        errs.append(propagate_hk(builtin_model(name, params), psi, 0.0, quad=quad).relative_error(psi))
    ok = max(errs) < 1e-6
    assert report(3, "Herman-Kluk identity at t = 0 on 5 packets", ok, f"max L2 rel error {max(errs):.1e}")


def test_c04_quadratic_exactness(report):
    points = [(0.3, 0.2), (-0.5, 0.1)]
    hk_err, vv_err = 0.0, 0.0
    for name in ("free", "harmonic"):
        m = builtin_model(name, () if name == "free" else (1.0,))
        for h in (0.2, 0.1, 0.05):
            for t in (0.7, 1.0, 2.5):
                for x, y in points:
                    ref = free_kernel(t, x, y, h) if name == "free" else mehler_kernel(t, x, y, 1.0, h)
                    quad = PhaseSpaceQuadrature.for_kernel(m, t, x, y, h)
                    hk = hk_kernel(m, t, x, y, quad, h)
                    vv = vanvleck_kernel(find_branches(m, t, x, y, (-10, 10)).branches, h).value
                    hk_err = max(hk_err, abs(hk - ref) / abs(ref))
                    vv_err = max(vv_err, abs(vv - ref) / abs(ref))
    ok = hk_err <= 1e-4 and vv_err <= 1e-8
    assert report(4, "quadratic exactness vs free and Mehler kernels", ok,
                  f"HK {hk_err:.1e}, Van Vleck {vv_err:.1e}")


def test_c05_maslov_index(report):
    m = builtin_model("harmonic", [1.0])
    got = []
    ok = True
    for t in (0.5, 2.0, 4.0, 7.0, 9.5):
        found = find_branches(m, t, 0.3, 0.2, (-20, 20))
        b = found[0]
        got.append(b.maslov)
        ok &= len(found) == 1 and b.maslov == int(np.floor(t / np.pi)) == caustic_index(b.traj)
    assert report(5, "harmonic Maslov indices", ok, f"theta {got}")


def test_c06_hessian_identities(report):
    rng = np.random.default_rng(5)
    models = [builtin_model("free"), builtin_model("harmonic", [1.0]),
              builtin_model("inverted_harmonic", [1.0]), builtin_model("quartic", (0.1,))]
    worst_inv = worst_det = 0.0
    n = 0
    while n < 50:
        m = models[rng.integers(len(models))]
        t = rng.uniform(0.3, 3.0)
        x, y = rng.uniform(-1, 1, 2)
        for b in find_branches(m, t, x, y, (-8, 8)):
            rep = hessian_phi(b.traj, rtol=np.inf)
            worst_inv = max(worst_inv, rep.inv_error)
            worst_det = max(worst_det, rep.det_error)
            n += 1
    ok = worst_inv <= 1e-8 and worst_det <= 1e-8
    assert report(6, f"Hessian inverse and determinant on {n} branches", ok,
                  f"inverse {worst_inv:.1e}, det {worst_det:.1e}")


def test_c07_stationary_phase_classical(report):
    rep = statphase_check(0.0, 0.0, 0.0, ks=(1, 2, 3), hbars=STATPHASE_HBARS)
    orders = [r["fit"]["order"] for r in rep["results"]]
    ok = all(r["fit"]["status"] == "fit" and r["fit"]["order"] >= r["k"] - 0.2 for r in rep["results"])
    assert report(7, "stationary phase exponents >= k - 0.2", ok,
                  ", ".join(f"k={k}: {o:.2f}" for k, o in zip((1, 2, 3), orders)))


def test_c08_stationary_phase_hbar_dependent(report):
    mu, nu, sigma = 0.05, 0.02, 0.05
    rep = statphase_check(mu, nu, sigma, ks=(2,), hbars=STATPHASE_HBARS)
    r = rep["results"][0]
    need = 2 * (1 - 5 * mu - 6 * sigma - 2 * nu) - 0.1
    ok = r["fit"]["status"] == "fit" and r["fit"]["order"] >= need
    assert report(8, "hbar-dependent family, k = 2", ok, f"exponent {r['fit']['order']:.2f} >= {need:.2f}")


def test_c09_anharmonic_convergence(report):
    cfg = ExperimentConfig.from_sections(parse_config("""
[model]
name = quartic
params = 0.1
[sweep]
hbar = 0.1 0.05 0.025
t = 2
points = -0.4:0.2, 0.0:0.2, 0.3:0.2
methods = vanvleck split_step
order = 1
"""))
    rows, summary = run_sweep(cfg)
    fit = summary["fits"][0]
    ok = summary["failed_cells"] == 0 and fit["fit"]["status"] == "fit" and fit["rate"] >= 0.8
    assert report(9, "quartic Van Vleck vs split-step order", ok,
                  f"order {fit['rate']:.2f}, errors {', '.join(f'{e:.1e}' for e in fit['max_rel_error'])}")


def test_c10_ehrenfest_time(report):
    cfg = ExperimentConfig.from_sections(parse_config("""
[model]
name = inverted_harmonic
params = 1.0
[sweep]
hbar = 0.1 0.05 0.025 0.0125
ehrenfest_c = 0.25
points = 0.3:0.2, -0.4:0.1
methods = vanvleck closed_form
"""))
    rows, summary = run_sweep(cfg)
    err = max(r["rel_error"] for r in rows if r["method"] == "vanvleck")
    T = 0.25 * np.log(1 / 0.0125)
    rng = np.random.default_rng(2)
    om = estimate_omega(builtin_model("inverted_harmonic", [1.0]), 3 * T, rng.uniform(-1, 1, (10, 2)))
    ok = summary["failed_cells"] == 0 and err <= 1e-6 and abs(om.gamma_fit - 1) <= 0.05
    assert report(10, "inverted oscillator at t = 0.25 log(1/hbar)", ok,
                  f"max rel error {err:.1e}, gamma {om.gamma_fit:.3f}")


def test_c11_empty_branch(report):
    t, x, y = 1.0, 4.0, 0.0  # the only momentum is (x - y)/t = 4
    found = find_branches(builtin_model("free"), t, x, y, (-2, 2))
    res = vanvleck_kernel(found.branches, 0.1)
    ok = len(found) == 0 and res.value == 0 and res.no_classical_path
    assert report(11, "empty branch set gives 0 with no-classical-path flag", ok,
                  f"value {res.value}, flag {res.no_classical_path}")
