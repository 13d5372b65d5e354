import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gibbsmple import (
    ConfigurationError,
    InvalidInput,
    InvalidParameter,
    MarkSpace,
    ModelDataMismatch,
    ModelSpec,
    PointPattern,
    Window,
    global_statistics,
    local_energy,
    local_statistics,
    stability_bound,
    validate_theta,
)
from gibbsmple.models import _geyer_min_triangles, data_statistics, hard_core_violations, node_statistics
from support import MODELS, random_points, random_theta

seeds = st.integers(0, 2**32 - 1)
family = st.sampled_from(sorted(MODELS))


def test_dimensions_and_ranges():
    assert (ModelSpec.overlap_area(1.5).p, ModelSpec.overlap_area(1.5).D) == (2, 1.5)
    assert (ModelSpec.strauss_disc(0.4).p, ModelSpec.strauss_disc(0.4).D) == (2, 0.8)
    assert (ModelSpec.geyer_triplet(2.0).p, ModelSpec.geyer_triplet(2.0).D) == (3, 2.0)
    assert (ModelSpec.area_interaction(0.5).p, ModelSpec.area_interaction(0.5).D) == (2, 1.0)
    ms = MODELS["multi_strauss"]
    # M + sum over pairs of (grid length - 1) = 2 + 2 + 1 + 2
    assert ms.p == 7 and ms.D == 1.0
    knn = MODELS["knn_multi_strauss"]
    assert knn.p == 2 + 2 + 1 + 1 and knn.D == 2.0


def test_multitype_parameter_order():
    ms = MODELS["multi_strauss"]
    assert ms.names == (
        "theta1[1,1]", "theta2[1,1]", "theta3[1,1]", "theta2[1,2]",
        "theta1[2,2]", "theta2[2,2]", "theta3[2,2]",
    )


def test_poisson_model_is_counts_only():
    m = ModelSpec.poisson(3)
    assert m.p == 3 and m.D == 0.0
    pts = [(0.1, 0.1, 1.0), (0.2, 0.1, 3.0), (0.4, 0.4, 3.0)]
    assert list(global_statistics(m, pts)) == [1, 0, 2]


def test_config_round_trip():
    for m in MODELS.values():
        assert ModelSpec.from_dict(m.to_dict()) == m
    cfg = {"family": "multi_strauss", "marks": 1, "ranges": [0.0, 0.5], "theta": [0, 1]}
    assert ModelSpec.from_dict(cfg) == ModelSpec.strauss(0.5)
    with pytest.raises(ConfigurationError):
        ModelSpec.from_dict({"family": "nope"})
    with pytest.raises(ConfigurationError):
        ModelSpec.from_dict({"family": "overlap_area", "R": 1, "k": 2})
    with pytest.raises(ConfigurationError):
        ModelSpec.from_dict({"family": "knn_multi_strauss", "ranges": [0, 1]})


def test_bad_hyperparameters():
    with pytest.raises(ConfigurationError):
        ModelSpec.overlap_area(0.0)
    with pytest.raises(ConfigurationError):
        ModelSpec.multi_strauss([0.5, 0.2])
    with pytest.raises(ConfigurationError):
        ModelSpec.multi_strauss({"1,1": [0, 1]}, M=2)


@pytest.mark.parametrize("name", sorted(MODELS))
def test_empty_pattern_gives_zero_vector(name):
    m = MODELS[name]
    assert np.array_equal(global_statistics(m, []), np.zeros(m.p))


def test_geyer_triangle_fixture():
    m = ModelSpec.geyer_triplet(1.0)
    tri = [(0, 0), (0.5, 0), (0.25, 0.25 * math.sqrt(3))]
    assert list(global_statistics(m, tri)) == [3, 3, 1]
    assert list(local_statistics(m, (0, 0), tri[1:])) == [1, 2, 1]


def test_overlap_fixture():
    m = ModelSpec.overlap_area(1.0)
    v = global_statistics(m, [(0, 0), (0.5, 0)])
    assert v[0] == 2 and v[1] == pytest.approx(0.307092425, abs=1e-9)


def test_area_isolated_point():
    m = ModelSpec.area_interaction(0.7)
    v = local_statistics(m, (0, 0), [(1.41, 0), (0, -1.5)])
    assert v[0] == 1 and v[1] == pytest.approx(math.pi * 0.49, abs=1e-12)


def test_strauss_disc_pair():
    m = ModelSpec.strauss_disc(0.5)
    assert list(local_statistics(m, (0, 0, 0.3), [(0.55, 0, 0.25)])) == [1, 1]
    assert list(local_statistics(m, (0, 0, 0.3), [(0.56, 0, 0.25)])) == [1, 0]


def test_multi_strauss_bands():
    m = MODELS["multi_strauss"]
    phi = [(0.3, 0, 1), (0.6, 0, 1), (0, 0.65, 2), (0, -0.95, 2)]
    v = local_statistics(m, (0, 0, 1), phi)
    # (1,1) pairs at 0.3 and 0.6 fall in bands [0,0.5) and [0.5,1); (1,2) at 0.65 in [0,0.7)
    assert list(v) == [1, 1, 1, 1, 0, 0, 0]
    v2 = local_statistics(m, (0, 0, 2), phi[:2])
    assert list(v2) == [0, 0, 0, 2, 1, 0, 0]


def test_statistics_reject_wrong_marks():
    with pytest.raises(ModelDataMismatch):
        global_statistics(MODELS["multi_strauss"], [(0, 0, 3)])
    p = PointPattern([0.5], [0.5], None, Window(0, 1, 0, 1), MarkSpace.unit())
    with pytest.raises(ModelDataMismatch):
        global_statistics(MODELS["strauss_disc"], p)


def test_local_statistics_rejects_member_point():
    with pytest.raises(InvalidInput):
        local_statistics(ModelSpec.overlap_area(1.0), (0.5, 0.5), [(0.5, 0.5), (1, 1)])


def test_local_energy_examples():
    m = ModelSpec.overlap_area(1.0)
    assert local_energy(m, (0, 0), (0, 0), [(0.3, 0.1)]) == 0
    assert local_energy(m, (-0.7, 2.0), (0, 0), [(5, 5)]) == -0.7
    hc = ModelSpec.strauss(1.0, hard_core=0.4)
    assert local_energy(hc, (0, 0.5), (0, 0), [(0.2, 0)]) == math.inf
    assert local_energy(hc, (0, 0.5), (0, 0), [(0.5, 0)]) == 0.5


def test_hard_core_violations():
    hc = ModelSpec.strauss(1.0, hard_core=0.4)
    assert hard_core_violations(hc, [(0, 0), (0.3, 0), (5, 5)]) == [(0, 1)]
    assert hard_core_violations(ModelSpec.strauss(1.0), [(0, 0), (0.3, 0)]) == []


def test_validate_theta_examples():
    bad = validate_theta(ModelSpec.overlap_area(1.0), (0.5, -0.1))
    assert not bad.ok and "theta2" in bad.violations[0]
    assert validate_theta(ModelSpec.area_interaction(1.0), (-3, -2)).ok
    g = validate_theta(ModelSpec.geyer_triplet(1.0), (0, 0, 0))
    assert not g.ok and "theta3" in g.violations[0]
    assert not validate_theta(MODELS["multi_strauss"], [0, 0, -1, 0, 0, 0, 0]).ok
    assert validate_theta(MODELS["multi_strauss_hard"], [0, -1, -1, -1, 0, -1, 0][: MODELS["multi_strauss_hard"].p]).ok
    assert validate_theta(MODELS["knn_multi_strauss"], -np.ones(6)).ok
    with pytest.raises(InvalidParameter):
        validate_theta(ModelSpec.overlap_area(1.0), (1, 2, 3))


def test_stability_bound_examples():
    assert stability_bound(ModelSpec.overlap_area(1.0), (-2, 1)) == 2
    for m in MODELS.values():
        if m.family != "geyer_triplet":
            assert stability_bound(m, np.zeros(m.p)) == 0
    # theta3 = 0 is outside the Geyer parameter space; the nearest interaction-free choice
    assert stability_bound(ModelSpec.geyer_triplet(1.0), (0, 0, 1)) == 0
    knn = ModelSpec.knn_multi_strauss([0.0, 1.0], k=1)
    assert stability_bound(knn, (0, -1)) == 13


def test_stability_bound_rejects_unbounded_attraction():
    with pytest.raises(InvalidParameter):
        stability_bound(ModelSpec.strauss(1.0, hard_core=None), (0, -1))
    with pytest.raises(InvalidParameter):
        stability_bound(ModelSpec.overlap_area(1.0), (0, -1))


def test_geyer_min_triangles_small_cases():
    # n <= 7 points can be spread one per cell, so no triangle is forced
    assert [_geyer_min_triangles(n) for n in range(8)] == [0] * 8
    assert _geyer_min_triangles(8) == 1
    assert _geyer_min_triangles(14) == 7


@given(family, seeds)
def test_oracle_identity(name, seed):
    m = MODELS[name]
    rng = np.random.default_rng(seed)
    x, y, mk = random_points(m, rng, int(rng.integers(0, 20)), -1.5, 1.5, admissible=False)
    phi = list(zip(x, y, mk))
    q = (float(rng.uniform(-1, 1)), float(rng.uniform(-1, 1)), float(random_points(m, rng, 1, 0, 1)[2][0]))
    diff = global_statistics(m, phi + [q]) - global_statistics(m, phi)
    assert np.allclose(local_statistics(m, q, phi), diff, rtol=0, atol=1e-9)


@given(family, seeds)
def test_locality(name, seed):
    m = MODELS[name]
    rng = np.random.default_rng(seed)
    x, y, mk = random_points(m, rng, 15, -1.5, 1.5, admissible=False)
    phi = list(zip(x, y, mk))
    ang = rng.uniform(0, 2 * math.pi)
    r = m.D * (1 + 1e-6) + rng.exponential(1.0)
    far = (r * math.cos(ang), r * math.sin(ang), float(random_points(m, rng, 1, 0, 1)[2][0]))
    q = (0.0, 0.0, float(random_points(m, rng, 1, 0, 1)[2][0]))
    assert np.array_equal(local_statistics(m, q, phi), local_statistics(m, q, phi + [far]))


@given(family, seeds, st.floats(-100, 100), st.floats(-100, 100))
def test_translation_invariance(name, seed, tx, ty):
    m = MODELS[name]
    rng = np.random.default_rng(seed)
    x, y, mk = random_points(m, rng, 12, 0, 2.5, admissible=False)
    a = global_statistics(m, list(zip(x, y, mk)))
    b = global_statistics(m, list(zip(x + tx, y + ty, mk)))
    assert np.allclose(a, b, rtol=0, atol=1e-9)


@given(family, seeds)
def test_stability_bound_holds(name, seed):
    m = MODELS[name]
    rng = np.random.default_rng(seed)
    x, y, mk = random_points(m, rng, int(rng.integers(0, 30)), -m.D, m.D)
    phi = list(zip(x, y, mk))
    q = (0.0, 0.0, float(random_points(m, rng, 1, 0, 1)[2][0]))
    th = random_theta(m, rng)
    if np.any((x == 0) & (y == 0)):
        return
    assert local_energy(m, th, q, phi) >= -stability_bound(m, th) - 1e-9


def test_node_and_data_statistics_agree_with_local():
    m = MODELS["multi_strauss"]
    rng = np.random.default_rng(3)
    x, y, mk = random_points(m, rng, 25, 0, 4)
    p = PointPattern(x, y, mk, Window(0, 4, 0, 4), m.mark_space)
    qx, qy, qm = random_points(m, rng, 10, 0, 4)
    st_, hard = node_statistics(m, p, qx, qy, qm)
    for i in range(10):
        assert np.array_equal(st_[i], local_statistics(m, (qx[i], qy[i], qm[i]), p.points))
    ds, _ = data_statistics(m, p, [0, 3])
    pts = p.points
    for row, i in zip(ds, [0, 3]):
        assert np.array_equal(row, local_statistics(m, pts[i], pts[:i] + pts[i + 1:]))
    assert not hard.any()


def test_threads_do_not_change_results():
    m = MODELS["area_interaction"]
    rng = np.random.default_rng(4)
    x, y, mk = random_points(m, rng, 40, 0, 5)
    p = PointPattern(x, y, mk, Window(0, 5, 0, 5), m.mark_space)
    q = rng.uniform(0, 5, (2, 5000))
    a, _ = node_statistics(m, p, q[0], q[1], np.zeros(5000), threads=1)
    b, _ = node_statistics(m, p, q[0], q[1], np.zeros(5000), threads=3)
    assert np.array_equal(a, b)
