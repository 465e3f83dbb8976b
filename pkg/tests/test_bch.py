import numpy as np
import pytest
import scipy.linalg as sla

from asyncfv.bch import (commutator, effective_generator, fit_exponents,
                         remainder_decay_study)
from asyncfv.discretization import (Connection, all_connections,
                                    build_face_coefficients,
                                    dense_connection_matrix)
from asyncfv.engine import SchemeConfig, run_scheme
from asyncfv.grid import build_cartesian_grid


def _study_problem():
    g = build_cartesian_grid(3, 3, 1, 3, 3, 1)
    coeffs = build_face_coefficients(g, np.full(9, 0.05))
    rng = np.random.default_rng(42)
    m0 = rng.uniform(0.5, 1.5, 9) * g.cell_volumes
    return g, coeffs, m0


# --------------------------------------------------------- effective_generator

def test_single_event_generator_is_the_event():
    conn = Connection(0, 1, 0.7, 1.3)
    dec = effective_generator([(conn, 0.37)], 3)
    expected = 0.37 * dense_connection_matrix(conn, 3)
    assert np.max(np.abs(dec.Z - expected)) <= 1e-13
    assert dec.r_norm <= 1e-13


def test_commuting_events_have_no_remainder():
    c1 = Connection(0, 1, 0.7, 1.3)
    c2 = Connection(2, 3, 0.5, 0.6)  # shares no cell with c1
    dec = effective_generator([(c1, 0.4), (c2, 0.3)], 4)
    expected = 0.4 * dense_connection_matrix(c1, 4) + 0.3 * dense_connection_matrix(c2, 4)
    assert np.max(np.abs(dec.Z - expected)) <= 1e-13
    assert dec.r_norm <= 1e-13


def test_noncommuting_remainder_matches_leading_commutator():
    # second event applied after the first: leading term 0.5*dt1*dt2*[L2, L1],
    # with a third-order residual (ratio ~8 under dt halving)
    c1 = Connection(0, 1, 0.7, 1.3)
    c2 = Connection(1, 2, 0.9, 0.4)
    l1 = dense_connection_matrix(c1, 3)
    l2 = dense_connection_matrix(c2, 3)
    residuals = []
    for halving in range(4):
        dt1 = 0.4 / 2**halving
        dt2 = 0.3 / 2**halving
        dec = effective_generator([(c1, dt1), (c2, dt2)], 3)
        lead = 0.5 * dt1 * dt2 * commutator(l2, l1)
        residuals.append(np.linalg.norm(dec.R - lead))
    for coarse, fine in zip(residuals, residuals[1:]):
        assert 6.0 <= coarse / fine <= 10.0


def test_product_of_nonassociated_connections_vanishes():
    g = build_cartesian_grid(3, 3, 1, 3, 3, 1)
    coeffs = build_face_coefficients(g, np.full(9, 0.3))
    conns = all_connections(g, coeffs)
    mats = [dense_connection_matrix(c, 9) for c in conns]
    checked = 0
    for i, ci in enumerate(conns):
        for j, cj in enumerate(conns):
            shared = {ci.j1, ci.j2} & {cj.j1, cj.j2}
            if not shared:
                assert np.all(mats[i] @ mats[j] == 0.0)
                checked += 1
    assert checked > 0


def test_generator_reproduces_final_state():
    g, coeffs, m0 = _study_problem()
    from asyncfv.discretization import connection_at

    final, stats = run_scheme(g, m0, coeffs, SchemeConfig("eas", 5e-3, 2.0),
                              record_events=True)
    events = [(connection_at(g, coeffs, k), dt) for k, dt in stats.events]
    dec = effective_generator(events, g.n_cells)
    replay = sla.expm(dec.Z) @ m0
    assert np.linalg.norm(replay - final) <= 1e-10 * np.linalg.norm(m0)


# ------------------------------------------------------- remainder_decay_study

def test_decay_study_first_order_part_and_trend():
    g, coeffs, m0 = _study_problem()
    study = remainder_decay_study(g, coeffs, m0, 3.0, [2e-2, 1e-2, 5e-3, 2.5e-3])
    assert len(study.rows) == 4
    assert study.r_norm_decreasing
    norms = [r.r_norm for r in study.rows]
    assert all(b < a for a, b in zip(norms, norms[1:]))
    assert all(np.isfinite(r.min_event_rate) for r in study.rows)


def test_decay_study_zero_flux_has_zero_remainder():
    g = build_cartesian_grid(3, 3, 1, 3, 3, 1)
    coeffs = build_face_coefficients(g, np.full(9, 0.05))
    m0 = 0.8 * g.cell_volumes  # uniform concentration: every event is a sync
    study = remainder_decay_study(g, coeffs, m0, 1.0, [1e-2, 1e-3])
    for row in study.rows:
        assert row.n_events == g.n_faces
        assert row.r_norm <= 1e-12


def test_decay_study_rejects_large_grids():
    g = build_cartesian_grid(10, 10, 1, 10, 10, 1)
    coeffs = build_face_coefficients(g, np.full(100, 0.05))
    with pytest.raises(ValueError):
        remainder_decay_study(g, coeffs, np.ones(100), 1.0, [1e-2])


# ---------------------------------------------------------------- fit_exponents

def test_fit_recovers_exact_power_law():
    dms = [1e-1, 1e-2, 1e-3, 1e-4, 1e-5]
    rows = [(dm, 3.0 / dm, 0.2 * dm) for dm in dms]
    fit = fit_exponents(rows)
    assert fit.d1 == pytest.approx(1.0, abs=1e-12)
    assert fit.d2 == pytest.approx(1.0, abs=1e-12)
    assert fit.d3 == pytest.approx(1.0, abs=1e-12)
    assert max(fit.halfwidths) <= 1e-10
    assert max(fit.residuals) <= 1e-12


def test_fit_constant_data_has_zero_slope():
    rows = [(dm, 7.0, 0.3) for dm in (1e-1, 1e-2, 1e-3, 1e-4)]
    fit = fit_exponents(rows)
    assert fit.d1 == pytest.approx(0.0, abs=1e-12)
    assert fit.d2 == pytest.approx(0.0, abs=1e-12)


def test_fit_requires_spread_and_points():
    with pytest.raises(ValueError):
        fit_exponents([(1e-1, 1.0, 1.0), (1e-2, 2.0, 0.5), (1e-3, 4.0, 0.2)])
    with pytest.raises(ValueError):
        fit_exponents([(1e-1, 1, 1), (8e-2, 2, 1), (6e-2, 3, 1), (5e-2, 4, 1)])
