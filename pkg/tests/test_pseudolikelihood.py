import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gibbsmple import (
    ConfigurationError,
    InfeasibleData,
    InvalidParameter,
    ModelSpec,
    PointPattern,
    Window,
    build_quadrature,
    cell_gradients,
    erode_window,
    lpl,
    lpl_gradient,
    lpl_hessian,
)
from gibbsmple.pseudolikelihood import Contrast, lpl_report
from support import MODELS, lpl_fixture, random_pattern, random_theta, rel_err


def fd_gradient(f, th, h=1e-5):
    g = np.zeros(len(th))
    for j in range(len(th)):
        e = np.zeros(len(th))
        e[j] = h
        g[j] = (f(th + e) - f(th - e)) / (2 * h)
    return g


def fd_jacobian(f, th, h=1e-5):
    return np.column_stack([(f(th + h * e) - f(th - h * e)) / (2 * h) for e in np.eye(len(th))])


def test_poisson_empty_pattern():
    m = ModelSpec.poisson()
    w = Window(0, 5, 0, 4)
    pat = PointPattern([], [], [], w, m.mark_space)
    q = build_quadrature(w, m.mark_space, (10, 10))
    assert lpl(m, (0.7,), pat, w, q) == pytest.approx(-20 * math.exp(-0.7), rel=1e-14)
    assert lpl_gradient(m, (0.7,), pat, w, q)[0] == pytest.approx(20 * math.exp(-0.7), rel=1e-14)


# geyer needs theta3 > 0 and hard-core nodes stay excluded at any theta
@pytest.mark.parametrize("name", sorted(set(MODELS) - {"geyer_triplet", "multi_strauss_hard"}))
def test_zero_theta_gives_minus_area(name):
    m = MODELS[name]
    rng = np.random.default_rng(3)
    pat, fw, q = lpl_fixture(m, rng)
    assert lpl(m, np.zeros(m.p), pat, fw, q) == pytest.approx(-fw.area, rel=1e-12)


def test_poisson_balanced_gradient_is_zero():
    m = ModelSpec.poisson()
    rng = np.random.default_rng(0)
    pat = PointPattern(rng.uniform(0, 10, 37), rng.uniform(0, 10, 37), np.ones(37), Window(0, 10, 0, 10), m.mark_space)
    q = build_quadrature(pat.window, m.mark_space, (5, 5))
    th = -math.log(37 / 100)
    assert abs(lpl_gradient(m, (th,), pat, pat.window, q)[0]) < 1e-12


@pytest.mark.parametrize("name", sorted(MODELS))
def test_empty_pattern_gradient_is_integral(name):
    m = MODELS[name]
    pat = PointPattern([], [], [], Window(0, 6, 0, 6), m.mark_space)
    w = erode_window(pat.window, m.D)
    q = build_quadrature(w, m.mark_space, (8, 8), 4)
    th = random_theta(m, np.random.default_rng(1))
    c = Contrast(m, pat, w, q)
    we = c._weights(th)
    assert np.allclose(lpl_gradient(m, th, pat, w, q), we @ c.node_stats, rtol=1e-13, atol=0)


@pytest.mark.parametrize("name", sorted(MODELS))
def test_gradient_and_hessian_match_finite_differences(name):
    m = MODELS[name]
    rng = np.random.default_rng(7)
    for _ in range(3):
        pat, fw, q = lpl_fixture(m, rng)
        c = Contrast(m, pat, fw, q)
        th = random_theta(m, rng)
        assert rel_err(c.gradient(th), fd_gradient(c.lpl, th)) < 1e-6
        # LPL2 is the curvature of -LPL, so it equals minus the Jacobian of LPL1
        assert rel_err(c.hessian(th), -fd_jacobian(c.gradient, th)) < 1e-5


@pytest.mark.parametrize("name", sorted(MODELS))
def test_hessian_symmetric_psd(name):
    m = MODELS[name]
    rng = np.random.default_rng(8)
    pat, fw, q = lpl_fixture(m, rng)
    H = lpl_hessian(m, random_theta(m, rng), pat, fw, q)
    assert np.array_equal(H, H.T)
    assert np.min(np.linalg.eigvalsh(H)) >= -1e-10 * np.trace(H)


@pytest.mark.parametrize("name", sorted(MODELS))
def test_cell_gradients_sum_to_gradient(name):
    m = MODELS[name]
    rng = np.random.default_rng(9)
    pat = random_pattern(m, rng, 60, 3 * m.D + 2 * m.D)
    fw = erode_window(pat.window, m.D)  # side 3D, nine cells of side D
    q = build_quadrature(fw, m.mark_space, (30, 30), 4)
    th = random_theta(m, rng)
    cells = cell_gradients(m, th, pat, fw, m.D, q)
    assert len(cells) == 9
    total = np.sum(list(cells.values()), axis=0)
    assert rel_err(total, lpl_gradient(m, th, pat, fw, q)) < 1e-9


def test_single_cell_equals_gradient():
    m = MODELS["overlap_area"]
    rng = np.random.default_rng(2)
    pat = random_pattern(m, rng, 20, 3.0)
    fw = Window(1, 2, 1, 2)
    q = build_quadrature(fw, m.mark_space, (16, 16))
    th = random_theta(m, rng)
    cells = cell_gradients(m, th, pat, fw, 1.0, q)
    assert list(cells) == [(2, 2)]
    assert np.allclose(cells[(2, 2)], lpl_gradient(m, th, pat, fw, q), rtol=1e-12, atol=1e-14)


def test_empty_pattern_cells_hold_integrals():
    m = ModelSpec.poisson()
    w = Window(-0.5, 1.5, -0.5, 1.5)
    q = build_quadrature(w, m.mark_space, (8, 8))
    cells = cell_gradients(m, (0.0,), PointPattern([], [], [], w, m.mark_space), w, 1.0, q)
    assert sorted(cells) == [(0, 0), (0, 1), (1, 0), (1, 1)]
    for v in cells.values():
        assert v[0] == pytest.approx(1.0, rel=1e-14)


def test_report_bundles_everything():
    m = MODELS["strauss_disc"]
    rng = np.random.default_rng(4)
    pat, fw, q = lpl_fixture(m, rng)
    th = random_theta(m, rng)
    r = lpl_report(m, th, pat, fw, q, 1.0)
    assert r.lpl == lpl(m, th, pat, fw, q)
    assert np.array_equal(r.gradient, lpl_gradient(m, th, pat, fw, q))
    assert r.cell_size == 1.0 and r.fit_window == fw


@given(st.sampled_from(sorted(MODELS)), st.integers(0, 2**32 - 1))
def test_negative_lpl_is_convex(name, seed):
    m = MODELS[name]
    rng = np.random.default_rng(seed)
    pat, fw, q = lpl_fixture(m, rng, n=20, grid=(10, 10), mark_nodes=3)
    c = Contrast(m, pat, fw, q)
    a, b = random_theta(m, rng), random_theta(m, rng)
    fa, fb = -c.lpl(a), -c.lpl(b)
    for t in (0.25, 0.5, 0.75):
        assert -c.lpl(t * a + (1 - t) * b) <= t * fa + (1 - t) * fb + 1e-10 * max(1.0, abs(fa), abs(fb))


def test_containment_violation():
    m = ModelSpec.strauss(1.0)
    pat = PointPattern([1.0], [1.0], [1], Window(0, 4, 0, 4), m.mark_space)
    fw = Window(0.5, 3.5, 0.5, 3.5)
    q = build_quadrature(fw, m.mark_space, (4, 4))
    with pytest.raises(ConfigurationError, match="erode"):
        lpl(m, (0.0, 0.5), pat, fw, q)


def test_hard_core_violation_is_infeasible():
    m = ModelSpec.strauss(1.0, hard_core=0.3)
    pat = PointPattern([2.0, 2.1], [2.0, 2.0], [1, 1], Window(0, 4, 0, 4), m.mark_space)
    fw = Window(1, 3, 1, 3)
    q = build_quadrature(fw, m.mark_space, (4, 4))
    with pytest.raises(InfeasibleData, match="hard-core"):
        lpl(m, (0.0, 0.5), pat, fw, q)


def test_invalid_theta_rejected():
    m = ModelSpec.overlap_area(1.0)
    pat = PointPattern([2.0], [2.0], window=Window(0, 4, 0, 4))
    fw = Window(1, 3, 1, 3)
    q = build_quadrature(fw, m.mark_space, (4, 4))
    with pytest.raises(InvalidParameter):
        lpl(m, (0.0, -1.0), pat, fw, q)


def test_strauss_two_points_matches_reference_grid():
    m = ModelSpec.strauss(1.0)
    pat = PointPattern([2.0, 2.6], [2.0, 2.3], [1, 1], Window(0, 4, 0, 4), m.mark_space)
    fw = Window(1, 3, 1, 3)
    th = (0.2, 0.7)
    ref = lpl(m, th, pat, fw, build_quadrature(fw, m.mark_space, (2048, 2048)))
    got = lpl(m, th, pat, fw, build_quadrature(fw, m.mark_space, (512, 512)))
    assert got == pytest.approx(ref, rel=1e-4)


@pytest.mark.parametrize("name", ["overlap_area", "multi_strauss", "area_interaction"])
def test_grid_refinement_changes_lpl_little(name):
    m = MODELS[name]
    rng = np.random.default_rng(12)
    pat = random_pattern(m, rng, 40, 7.0)
    fw = erode_window(pat.window, m.D)
    th = random_theta(m, rng)
    a = lpl(m, th, pat, fw, build_quadrature(fw, m.mark_space, (256, 256)))
    b = lpl(m, th, pat, fw, build_quadrature(fw, m.mark_space, (512, 512)))
    assert a == pytest.approx(b, rel=1e-3)


def test_hessian_poisson_limit_under_strong_inhibition():
    m = ModelSpec.strauss(0.5)
    pat = PointPattern([2.0], [2.0], [1], Window(0, 4, 0, 4), m.mark_space)
    fw = Window(0.5, 3.5, 0.5, 3.5)
    q = build_quadrature(fw, m.mark_space, (64, 64))
    H = lpl_hessian(m, (0.3, 40.0), pat, fw, q)
    free = fw.area - np.sum((np.hypot(q.x - 2, q.y - 2) < 0.5)) * fw.area / q.size
    expected = np.diag([math.exp(-0.3) * free, 0.0])
    assert np.allclose(H, expected, rtol=1e-12, atol=1e-12)
