import math

import numpy as np
import pytest

from geoggm import geometry as geo

import oracles


class PointCloud:
    """Minimal graph stand-in: points plus a torus."""

    def __init__(self, pts, s):
        self.points = np.asarray(pts, float)
        self.torus = geo.Torus(s)


def test_torus_distance_wraparound():
    t = geo.Torus(10.0)
    assert geo.torus_distance((1, 1), (9, 9), t) == pytest.approx(2 * math.sqrt(2))


def test_torus_distance_identity():
    t = geo.Torus(10.0)
    assert geo.torus_distance((3.2, 7.7), (3.2, 7.7), t) == 0.0


def test_torus_distance_antipodal():
    t = geo.Torus(10.0)
    assert geo.torus_distance((0, 0), (5, 0), t) == pytest.approx(5.0)


def test_torus_distance_symmetry_and_triangle():
    t = geo.Torus(7.0)
    rng = np.random.default_rng(0)
    for _ in range(200):
        a, b, c = rng.uniform(0, 7, (3, 2))
        dab = geo.torus_distance(a, b, t)
        assert dab == pytest.approx(geo.torus_distance(b, a, t))
        assert dab <= geo.torus_distance(a, c, t) + geo.torus_distance(c, b, t) + 1e-12


def test_matching_distance_simple():
    F = [(0, 0), (1, 0)]
    H = [(0, 0.1), (1, 0)]
    assert geo.matching_distance(F, H) == pytest.approx(0.1)


def test_matching_distance_identity():
    F = np.random.default_rng(1).uniform(0, 3, (5, 2))
    assert geo.matching_distance(F, F) == 0.0


def test_matching_distance_size_mismatch():
    with pytest.raises(ValueError):
        geo.matching_distance([(0, 0)], [(0, 0), (1, 1)])


def test_matching_distance_vs_brute_force():
    rng = np.random.default_rng(2)
    for _ in range(40):
        r = int(rng.integers(1, 7))
        F = rng.uniform(0, 5, (r, 2))
        H = rng.uniform(0, 5, (r, 2))
        assert geo.matching_distance(F, H) == pytest.approx(
            oracles.brute_matching(F, H), abs=1e-12
        )


def test_matching_distance_metric_properties():
    rng = np.random.default_rng(3)
    for _ in range(25):
        r = int(rng.integers(2, 7))
        A, B, C = rng.uniform(0, 4, (3, r, 2))
        dab = geo.matching_distance(A, B)
        assert dab == pytest.approx(geo.matching_distance(B, A), abs=1e-12)
        assert geo.matching_distance(A, A) == 0.0
        assert dab <= (
            geo.matching_distance(A, C) + geo.matching_distance(C, B) + 1e-9
        )


def test_similarity_exact_rigid_copy_on_grid_angle():
    rng = np.random.default_rng(4)
    F = rng.uniform(0, 2, (4, 2))
    ang = 2 * math.pi * 17 / 360  # on the 360 grid
    H = geo.rotate(F, ang) + np.array([5.0, -3.0])
    assert geo.similarity(F, H, 360) <= 1e-12


def test_similarity_identity():
    F = np.random.default_rng(5).uniform(0, 2, (3, 2))
    assert geo.similarity(F, F, 8) <= 1e-12


def test_similarity_monotone_under_grid_refinement():
    rng = np.random.default_rng(6)
    F = rng.uniform(0, 2, (3, 2))
    H = rng.uniform(0, 2, (3, 2))
    coarse = geo.similarity(F, H, 90)
    fine = geo.similarity(F, H, 360)  # integer refinement of the 90 grid
    assert fine <= coarse + 1e-12


def test_similarity_vs_dense_sweep():
    rng = np.random.default_rng(7)
    F = rng.uniform(0, 2, (3, 2))
    H = geo.rotate(F, 2 * math.pi * 17 / 360) + np.array([1.0, 2.0])
    got = geo.similarity(F, H, 360)
    dense = oracles.dense_angle_similarity(F, H, 36000)
    assert got <= geo.matching_distance(
        F, geo.rotate(H - H.mean(0), -2 * math.pi * 17 / 360) + F.mean(0)
    ) + 1e-12
    assert abs(got - dense) <= 1e-3


def test_similarity_grid_rotation_invariance():
    rng = np.random.default_rng(8)
    F = rng.uniform(0, 2, (4, 2))
    H = rng.uniform(0, 2, (4, 2))
    base = geo.similarity(F, H, 36)
    RH = geo.rotate(H, 2 * math.pi * 5 / 36) + np.array([0.4, -0.7])
    assert geo.similarity(F, RH, 36) == pytest.approx(base, abs=1e-9)


def test_convex_hull_triangle():
    hull = geo.convex_hull([(0, 0), (2, 0), (1, 1)])
    assert len(hull) == 3


def test_convex_hull_interior_point_dropped():
    hull = geo.convex_hull([(0, 0), (4, 0), (0, 4), (1, 1)])
    assert len(hull) == 3
    assert (1, 1) not in set(map(tuple, hull.tolist()))


def test_convex_hull_collinear_degenerates_to_segment():
    hull = geo.convex_hull([(0, 0), (1, 0), (2, 0), (3, 0)])
    assert len(hull) == 2
    assert set(map(tuple, hull.tolist())) == {(0.0, 0.0), (3.0, 0.0)}


def test_convex_hull_counterclockwise_and_vs_gift_wrap():
    rng = np.random.default_rng(9)
    for _ in range(20):
        pts = rng.uniform(0, 10, (100, 2))
        hull = geo.convex_hull(pts)
        area2 = 0.0
        for i in range(len(hull)):
            a, b = hull[i], hull[(i + 1) % len(hull)]
            area2 += a[0] * b[1] - b[0] * a[1]
        assert area2 > 0  # counterclockwise
        oracle = oracles.gift_wrap_hull(pts)
        assert set(map(tuple, hull.tolist())) == set(map(tuple, oracle.tolist()))


def test_is_contiguous_basic():
    g = PointCloud([(0, 0), (2, 0), (1, 1)], 10)
    assert geo.is_contiguous([0, 1], g) is True
    g2 = PointCloud([(0, 0), (2, 0), (1, 0)], 10)
    assert geo.is_contiguous([0, 1], g2) is False


def test_is_contiguous_empty_rejected():
    g = PointCloud([(0, 0), (1, 1)], 10)
    with pytest.raises(ValueError):
        geo.is_contiguous([], g)


def test_is_contiguous_nonlocal_rejected():
    g = PointCloud([(0, 0), (3, 0), (5.5, 0), (2, 5)], 8.0)
    with pytest.raises(ValueError):
        geo.is_contiguous([0, 1, 2], g)  # spans more than s/2 on the x axis


def test_is_contiguous_vs_membership_oracle():
    rng = np.random.default_rng(10)
    s = 20.0
    for trial in range(30):
        pts = rng.uniform(0, 5, (12, 2)) + 6.0  # local cluster, no wrap
        g = PointCloud(pts, s)
        size = int(rng.integers(2, 6))
        ids = sorted(rng.choice(12, size=size, replace=False).tolist())
        assert geo.is_contiguous(ids, g) == oracles.contiguity_scan(ids, pts, s)


def test_is_contiguous_wraparound_chart():
    # cluster straddling the torus seam, plus one far vertex
    g = PointCloud([(9.9, 9.9), (0.1, 0.1), (0.4, 9.8), (5, 5)], 10.0)
    assert geo.is_contiguous([0, 1, 2], g) is True


def test_quantize_example():
    g = PointCloud([(0.7, 0.2), (3.0, 3.0)], 10.0)
    lat = geo.quantize(g, 0.5)
    assert lat.node_of_vertex[0] == (1, 0)
    disp = geo.torus_distance(
        (0.7, 0.2), lat.node_position((1, 0)), g.torus
    )
    assert disp == pytest.approx(math.sqrt(0.08))
    assert disp <= 0.5 / math.sqrt(2)


def test_quantize_on_node_zero_displacement():
    g = PointCloud([(1.5, 2.0)], 10.0)
    lat = geo.quantize(g, 0.5)
    assert lat.node_of_vertex[0] == (3, 4)
    assert geo.torus_distance((1.5, 2.0), lat.node_position((3, 4)), g.torus) == 0.0


def test_quantize_displacement_bound_exhaustive():
    rng = np.random.default_rng(11)
    s = 40.0
    pts = rng.uniform(0, s, (1000, 2))
    g = PointCloud(pts, s)
    eps = 0.01  # collision-free at this density with this seed
    lat = geo.quantize(g, eps)
    bound = eps / math.sqrt(2) + 1e-12
    for v in range(1000):
        node = lat.node_of_vertex[v]
        assert geo.torus_distance(pts[v], lat.node_position(node), g.torus) <= bound


def test_quantize_collision_raises_with_pair():
    g = PointCloud([(1.01, 1.01), (1.02, 1.02)], 10.0)
    with pytest.raises(geo.CollisionError) as exc:
        geo.quantize(g, 0.5)
    assert {exc.value.vertex_a, exc.value.vertex_b} == {0, 1}


def test_quantize_requires_divisible_side():
    g = PointCloud([(1, 1)], 10.0)
    with pytest.raises(ValueError):
        geo.quantize(g, 0.3)


def test_quantize_tie_rounds_down():
    # 0.25/0.5 = 0.5 exactly: ties go to the lower node index
    g = PointCloud([(0.25, 0.75)], 10.0)
    lat = geo.quantize(g, 0.5)
    assert lat.node_of_vertex[0] == (0, 1)


def test_quantize_seam_wraps_to_node_zero():
    g = PointCloud([(9.9, 0.2)], 10.0)
    lat = geo.quantize(g, 0.5)
    assert lat.node_of_vertex[0] == (0, 0)
    assert lat.L == 21 and lat.period == 20


def test_pattern_template_normalization():
    t = geo.PatternTemplate.from_offsets([(2, 3), (3, 4), (2, 5)])
    assert min(a for a, _ in t.offsets) == 0
    assert min(b for _, b in t.offsets) == 0
    assert t.k == 3
    with pytest.raises(ValueError):
        geo.PatternTemplate(k=2, offsets=((1, 1),))


def test_pattern_template_rotation_cycle():
    t = geo.PatternTemplate.from_offsets([(0, 0), (0, 1), (1, 2)])
    assert t.rotated(4).offsets == t.offsets
    seen = {t.rotated(q).offsets for q in range(4)}
    assert len(seen) == 4  # this shape has no rotational symmetry


def test_pattern_template_interior_cells():
    square = geo.PatternTemplate.from_offsets([(0, 0), (0, 2), (2, 0), (2, 2)])
    assert set(square.interior_cells()) == {(0, 1), (1, 0), (1, 1), (1, 2), (2, 1)}
    segment = geo.PatternTemplate.from_offsets([(0, 0), (1, 2)])
    assert segment.interior_cells() == ()
