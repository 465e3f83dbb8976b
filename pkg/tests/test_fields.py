import numpy as np
import pytest

from asyncfv.fields import (cell_velocity_means, fracture_walk,
                            langmuir_rate_coefficients, peclet,
                            sample_gaussian_field, sample_lognormal_diffusivity,
                            solve_darcy, uniform_face_velocity, velocity_field)
from asyncfv.grid import build_cartesian_grid


# -------------------------------------------------------------- fracture_walk

def test_walk_on_strip_is_full_column():
    g = build_cartesian_grid(1, 8, 1, 1, 8, 1)
    cells = fracture_walk(g, seed=4, y_bias=0.6)
    assert set(cells) == set(range(8))


def test_walk_forced_straight_column():
    g = build_cartesian_grid(6, 5, 1, 6, 5, 1)
    cells = fracture_walk(g, seed=11, y_bias=1.0)
    assert len(cells) == 5
    xs = {g.cell_coords(j)[0] for j in cells}
    ys = sorted(g.cell_coords(j)[1] for j in cells)
    assert len(xs) == 1
    assert ys == list(range(5))


def test_walk_connects_both_y_edges():
    g = build_cartesian_grid(30, 30, 1, 10, 10, 10)
    for seed in (0, 1, 2, 3):
        cells = fracture_walk(g, seed=seed, y_bias=0.7)
        coords = [g.cell_coords(j) for j in cells]
        ys = {c[1] for c in coords}
        assert 0 in ys and g.ny - 1 in ys
        # connectivity: every cell has a 4-neighbour in the set (or is alone)
        cellset = set(map(tuple, coords))
        for ix, iy, _ in coords:
            neighbours = {(ix + 1, iy, 0), (ix - 1, iy, 0), (ix, iy + 1, 0), (ix, iy - 1, 0)}
            assert cellset & neighbours or len(cellset) == 1


def test_walk_deterministic_per_seed():
    g = build_cartesian_grid(12, 12, 1, 12, 12, 1)
    assert np.array_equal(fracture_walk(g, 5, 0.7), fracture_walk(g, 5, 0.7))
    assert not np.array_equal(fracture_walk(g, 5, 0.7), fracture_walk(g, 6, 0.7))


def test_walk_rejects_bad_arguments():
    g3 = build_cartesian_grid(2, 2, 2, 1, 1, 1)
    with pytest.raises(ValueError):
        fracture_walk(g3, 0, 0.5)
    g = build_cartesian_grid(4, 4, 1, 1, 1, 1)
    with pytest.raises(ValueError):
        fracture_walk(g, 0, 0.0)
    with pytest.raises(ValueError):
        fracture_walk(g, 0, 0.5, start_ix=7)


# ---------------------------------------------------------------- solve_darcy

def test_darcy_uniform_column_is_linear():
    g = build_cartesian_grid(1, 50, 1, 1, 10, 1)
    k = np.ones(g.n_cells)
    p = solve_darcy(g, k, k, p_low_edge=0.0, p_high_edge=1.0)
    expected = 1.0 - g.centroids[:, 1] / 10.0
    assert np.max(np.abs(p - expected)) <= 1e-10


def test_darcy_blocked_top_row_still_well_defined():
    g = build_cartesian_grid(5, 5, 1, 5, 5, 1)
    kx = np.ones(g.n_cells)
    ky = np.ones(g.n_cells)
    top = [g.cell_index(ix, g.ny - 1) for ix in range(g.nx)]
    ky[top] = 0.0
    p = solve_darcy(g, kx, ky, p_low_edge=0.0, p_high_edge=1.0)
    assert np.all(np.isfinite(p))
    v = velocity_field(g, p, kx, ky)
    # every face touching the blocked row carries no flow
    for k in range(g.n_faces):
        if g.face_cells[k, 0] in top or g.face_cells[k, 1] in top:
            assert v[k] == 0.0


def test_darcy_symmetric_permeability_gives_symmetric_pressure():
    g = build_cartesian_grid(2, 2, 1, 2, 2, 1)
    rng = np.random.default_rng(2)
    ky_col = rng.uniform(0.5, 2.0, 2)
    ky = np.array([ky_col[0], ky_col[0], ky_col[1], ky_col[1]])
    kx = np.ones(4)
    p = solve_darcy(g, kx, ky, 0.0, 1.0)
    assert abs(p[0] - p[1]) <= 1e-10
    assert abs(p[2] - p[3]) <= 1e-10


def test_darcy_all_zero_permeability_fails():
    g = build_cartesian_grid(3, 3, 1, 3, 3, 1)
    z = np.zeros(g.n_cells)
    with pytest.raises(ValueError):
        solve_darcy(g, z, z, 0.0, 1.0)


# ------------------------------------------------------------- velocity_field

def test_velocity_zero_for_uniform_pressure():
    g = build_cartesian_grid(6, 6, 1, 6, 6, 1)
    p = np.full(g.n_cells, 0.7)
    v = velocity_field(g, p, np.ones(g.n_cells), np.ones(g.n_cells))
    assert np.all(v == 0.0)


def test_velocity_linear_pressure_by_hand():
    g = build_cartesian_grid(1, 100, 1, 1, 10, 1)
    k = np.ones(g.n_cells)
    p = solve_darcy(g, k, k, 0.0, 1.0)
    v = velocity_field(g, p, k, k)
    assert np.allclose(v, 0.1, rtol=1e-10)


def test_velocity_uses_harmonic_mean_permeability():
    g = build_cartesian_grid(2, 1, 1, 2, 1, 1)
    p = np.array([1.0, 0.0])
    v = velocity_field(g, p, np.array([2000.0, 1.0]), np.ones(2))
    # dx = 1, dp = -1, Kbar = 2*2000/2001
    assert v[0] == pytest.approx(2 * 2000 / 2001, rel=1e-12)


# ------------------------------------------------------ random diffusivity

def test_random_field_deterministic_and_positive():
    g = build_cartesian_grid(10, 10, 1, 10, 10, 10)
    d1 = sample_lognormal_diffusivity(g, 9.0, seed=42)
    d2 = sample_lognormal_diffusivity(g, 9.0, seed=42)
    assert np.array_equal(d1, d2)
    assert np.all(d1 > 0)


def test_random_field_long_correlation_is_nearly_constant():
    g = build_cartesian_grid(8, 8, 1, 1, 1, 1)
    spreads = [np.std(sample_gaussian_field(g, 1e6, seed)) for seed in range(40)]
    assert np.median(spreads) < 0.02


def test_random_field_mean_zero_over_seeds():
    g = build_cartesian_grid(10, 10, 1, 10, 10, 10)
    n_seeds = 200
    acc = np.zeros(g.n_cells)
    for seed in range(n_seeds):
        acc += sample_gaussian_field(g, 9.0, seed)
    mean = acc / n_seeds
    assert np.max(np.abs(mean)) <= 4.0 / np.sqrt(n_seeds)


def test_paper_setting_correlation_length_valid():
    g = build_cartesian_grid(20, 20, 1, 10, 10, 10)
    d = sample_lognormal_diffusivity(g, 9.0, seed=0)
    assert np.all(d > 0) and np.all(np.isfinite(d))


# ------------------------------------------------------------------- peclet

def test_peclet_zero_velocity():
    g = build_cartesian_grid(5, 5, 1, 5, 5, 1)
    pe = peclet(g, np.full(g.n_cells, 0.3), np.zeros(g.n_faces))
    assert np.all(pe == 0.0)


def test_peclet_definition_arithmetic():
    g = build_cartesian_grid(10, 1, 1, 1, 1, 1)  # h = 0.1 along x
    v = uniform_face_velocity(g, (1.0, 0.0, 0.0))
    pe = peclet(g, np.full(g.n_cells, 0.01), v)
    assert pe[4] == pytest.approx(10.0, rel=1e-12)


def test_peclet_zero_diffusivity_is_infinite():
    g = build_cartesian_grid(3, 1, 1, 1, 1, 1)
    d = np.array([0.0, 1.0, 1.0])
    pe = peclet(g, d, uniform_face_velocity(g, (1.0, 0.0, 0.0)))
    assert np.isinf(pe[0])


def test_fracture_setup_peclet_spans_five_decades():
    # paper-style 100x100 fracture flow: the top row is blocked except where
    # the fracture crosses it, so all flow funnels through the fracture and
    # the Peclet number varies over >= 5 orders
    g = build_cartesian_grid(100, 100, 1, 10, 10, 10)
    frac = fracture_walk(g, seed=1, y_bias=0.8, start_ix=60)
    cells = np.arange(g.n_cells)
    kx = np.ones(g.n_cells)
    kx[cells % g.nx == g.nx - 1] = 0.0
    ky = np.ones(g.n_cells)
    ky[(cells // g.nx) % g.ny == g.ny - 1] = 0.0
    ky[frac] = 2000.0
    p = solve_darcy(g, kx, ky, 0.0, 1.0)
    v = velocity_field(g, p, kx, ky)
    pe = peclet(g, np.full(g.n_cells, 0.01), v)
    pe = pe[np.isfinite(pe) & (pe > 0)]
    assert np.log10(pe.max() / pe.min()) >= 5.0
    # the largest y-velocity sits inside the fracture
    vy = cell_velocity_means(g, v)[:, 1]
    assert np.argmax(np.abs(vy)) in set(frac)


def test_cell_velocity_means_and_uniform_velocity():
    g = build_cartesian_grid(3, 3, 1, 3, 3, 1)
    v = uniform_face_velocity(g, (2.0, -1.0, 0.0))
    means = cell_velocity_means(g, v)
    assert np.allclose(means[:, 0], 2.0)
    assert np.allclose(means[:, 1], -1.0)
    assert np.all(means[:, 2] == 0.0)


def test_langmuir_rate_coefficients():
    d = np.array([0.1, 100.0])
    r = langmuir_rate_coefficients(d, strength=0.02)
    assert r[0] == pytest.approx(2.0, rel=1e-14)
    assert r[1] == pytest.approx(2e-6, rel=1e-14)
    with pytest.raises(ValueError):
        langmuir_rate_coefficients(np.array([0.0, 1.0]))
