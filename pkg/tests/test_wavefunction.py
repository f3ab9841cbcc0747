import warnings

import numpy as np
import pytest

from semiprop.wavefunction import (BoundaryMassWarning, GridSpec, WaveFunction, gaussian_packet,
                                   read_wavefunction, write_wavefunction)


def test_grid_from_bounds():
    g = GridSpec.from_bounds(-5, 5, 100, 0.1)
    assert g.spacing == (0.1,) and g.counts == (100,) and g.dim == 1
    assert g.max_momentum()[0] == pytest.approx(np.pi * 0.1 / 0.1)
    g2 = GridSpec.from_bounds([-1, -2], [1, 2], [8, 16], 0.2)
    assert g2.points().shape == (128, 2)


def test_grid_validation():
    with pytest.raises(ValueError):
        GridSpec((0.0,), (0.1,), (1,), 0.1)
    with pytest.raises(ValueError):
        GridSpec((0.0,), (-0.1,), (10,), 0.1)
    with pytest.raises(ValueError):
        GridSpec((0.0,), (0.1,), (10,), 0.0)


def test_gaussian_normalised_1d_and_2d():
    g = GridSpec.from_bounds(-6, 6, 256, 0.1)
    assert gaussian_packet(g, 0.5, 1.0).norm() == pytest.approx(1.0, abs=1e-12)
    g2 = GridSpec.from_bounds([-4, -4], [4, 4], [96, 96], 0.2)
    assert gaussian_packet(g2, [0.3, -0.2], [0.5, 0.0]).norm() == pytest.approx(1.0, abs=1e-10)


def test_round_trip(tmp_path):
    g = GridSpec.from_bounds([-3, -2], [3, 2], [6, 4], 0.3)
    psi = gaussian_packet(g, [0.1, 0.2], [1.0, -1.0])
    path = tmp_path / "psi.dat"
    write_wavefunction(psi, path)
    back = read_wavefunction(path)
    assert back.grid == psi.grid
    np.testing.assert_array_equal(back.values, psi.values)
    header = path.read_text().splitlines()[0].split()
    assert header[:4] == ["2", "0.3", "6", "4"]


def test_read_rejects_bad_counts(tmp_path):
    path = tmp_path / "bad.dat"
    path.write_text("1 0.1 4 0.0 0.25\n1 0\n2 0\n")
    with pytest.raises(ValueError):
        read_wavefunction(path)


def test_boundary_warning():
    g = GridSpec.from_bounds(-2, 2, 64, 0.1)
    psi = gaussian_packet(g, 1.9, 0.0)
    with pytest.warns(BoundaryMassWarning):
        psi.check_boundary()
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        gaussian_packet(g, 0.0, 0.0).check_boundary()


def test_inner_and_distance():
    g = GridSpec.from_bounds(-6, 6, 256, 0.1)
    a = gaussian_packet(g, 0.0, 0.0)
    assert a.inner(a) == pytest.approx(1.0)
    assert a.distance(a.copy()) == 0.0
    other = WaveFunction(GridSpec.from_bounds(-6, 6, 128, 0.1), np.zeros(128))
    with pytest.raises(ValueError):
        a.inner(other)
