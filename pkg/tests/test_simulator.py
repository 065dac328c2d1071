import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from rcmlab.connfn import exponential, hard_disk, make_variant
from rcmlab.quadrature import Region, unit_box
from rcmlab.simulator import (
    LatticeRegion,
    SimulationError,
    SimWindow,
    _candidate_pairs,
    component_cell_counts,
    connect,
    count_components,
    count_isolated,
    count_truncation_family,
    dump_realization,
    margin_policy,
    pair_uniform,
    regraph,
    sample_points,
    simulate_graph,
)


def seeded(k):
    return np.random.SeedSequence(entropy=12345, spawn_key=(k,))


class TestPairUniform:
    def test_range_and_determinism(self):
        i = np.arange(0, 1000, dtype=np.int64)
        j = i + 7
        u1 = pair_uniform(99, i, j)
        u2 = pair_uniform(99, i, j)
        assert np.array_equal(u1, u2)
        assert np.all((u1 >= 0.0) & (u1 < 1.0))

    def test_unordered(self):
        i = np.array([3, 10], dtype=np.int64)
        j = np.array([8, 2], dtype=np.int64)
        assert np.array_equal(pair_uniform(5, i, j), pair_uniform(5, j, i))

    def test_key_sensitivity(self):
        i = np.arange(100, dtype=np.int64)
        j = i + 1
        assert not np.array_equal(pair_uniform(1, i, j), pair_uniform(2, i, j))

    def test_uniformity(self):
        n = 200_000
        i = np.zeros(n, dtype=np.int64)
        j = np.arange(1, n + 1, dtype=np.int64)
        u = np.sort(pair_uniform(7, i, j))
        ks = np.max(np.abs(u - np.arange(1, n + 1) / n))
        assert ks < 0.005


class TestSamplePoints:
    def test_fixed_seed_reproduces(self):
        box = unit_box(2)
        rng1 = np.random.default_rng(seeded(0))
        rng2 = np.random.default_rng(seeded(0))
        assert np.array_equal(sample_points(50.0, box, rng1), sample_points(50.0, box, rng2))

    def test_poisson_count(self):
        box = unit_box(2)
        rng = np.random.default_rng(seeded(1))
        counts = [sample_points(200.0, box, rng).shape[0] for _ in range(3000)]
        assert abs(np.mean(counts) - 200.0) < 3 * math.sqrt(200.0 / 3000)

    def test_near_zero_intensity(self):
        rng = np.random.default_rng(seeded(2))
        assert sample_points(1e-9, unit_box(2), rng).shape == (0, 2)

    def test_points_inside_box(self):
        box = Region((-1.0, 2.0), (3.0, 0.5))
        rng = np.random.default_rng(seeded(3))
        pts = sample_points(100.0, box, rng)
        assert np.all(pts >= np.array(box.lower)) and np.all(pts <= np.array(box.upper))


class TestConnect:
    def _graph(self, g, lam=30.0, key=11, reach=None, k=4):
        rng = np.random.default_rng(seeded(k))
        window = SimWindow(K=unit_box(2), margin=0.0)
        pts = sample_points(lam, window.box, rng)
        return connect(pts, g, window, reach or (g.support_radius or 1.0), key, lam)

    def test_bernoulli_one_edges_are_geometric_graph(self):
        g = hard_disk(0.3)
        graph = self._graph(g)
        pts = graph.points
        n = pts.shape[0]
        expect = {
            (i, j)
            for i in range(n)
            for j in range(i + 1, n)
            if np.linalg.norm(pts[i] - pts[j]) <= 0.3
        }
        got = set(zip(graph.edge_i.tolist(), graph.edge_j.tolist()))
        assert got == expect

    def test_zero_function_gives_empty_graph(self):
        g = hard_disk(0.3).truncate_inside(0.0)
        graph = self._graph(g, reach=0.3)
        assert graph.edge_i.size == 0

    def test_two_point_edge_frequency(self):
        g = exponential(1.0)
        x = 0.8
        pts = np.array([[0.0, 0.0], [x, 0.0]])
        window = SimWindow(K=unit_box(2), margin=0.0)
        hits = 0
        trials = 10_000
        for key in range(trials):
            graph = connect(pts, g, window, 5.0, key, 2.0)
            hits += graph.edge_i.size
        p = g.eval(x)
        se = math.sqrt(p * (1 - p) / trials)
        assert abs(hits / trials - p) <= 3 * se

    def test_candidate_paths_agree(self):
        # brute-force path and the tree path must produce identical pairs
        rng = np.random.default_rng(seeded(5))
        pts = rng.random((2100, 2)) * 3.0
        reach = 0.11
        i_tree, j_tree, d_tree = _candidate_pairs(pts, reach)
        i, j = np.triu_indices(2100, k=1)
        dist = np.linalg.norm(pts[i] - pts[j], axis=1)
        keep = dist <= reach
        assert np.array_equal(i_tree, i[keep])
        assert np.array_equal(j_tree, j[keep])
        assert np.allclose(d_tree, dist[keep])


class TestCounts:
    def test_empty_graph(self):
        window = SimWindow(K=unit_box(2), margin=0.0)
        graph = connect(np.empty((0, 2)), hard_disk(1.0), window, 1.0, 1, 1.0)
        assert count_isolated(graph, window.K) == 0
        assert count_truncation_family(graph, window.K, 0.5) == (0, 0)

    def test_single_point(self):
        window = SimWindow(K=unit_box(2), margin=0.0)
        graph = connect(np.array([[0.5, 0.5]]), hard_disk(1.0), window, 1.0, 1, 1.0)
        assert count_isolated(graph, window.K) == 1

    def test_family_additivity_and_monotonicity(self):
        g = exponential(0.2)
        cfg_reach = 3.0
        graph = simulate_graph(g, 40.0, 2, unit_box(2), seeded(6), min_reach=cfg_reach,
                               min_margin=cfg_reach)
        K = unit_box(2)
        I = count_isolated(graph, K)
        prev_j = None
        for r0 in (0.0, 0.2, 0.5, 1.0, 2.0, 3.0):
            J, L = count_truncation_family(graph, K, r0)
            assert J == I + L if r0 >= cfg_reach else True
            assert J - L == I  # J = I + L exactly on every realization
            if prev_j is not None:
                assert J <= prev_j  # larger exclusion radius: harder to qualify
            prev_j = J

    def test_r0_zero_counts_everyone(self):
        graph = simulate_graph(exponential(0.2), 40.0, 2, unit_box(2), seeded(7),
                               min_reach=1.0, min_margin=1.0)
        K = unit_box(2)
        J, L = count_truncation_family(graph, K, 0.0)
        n_in_k = int(np.count_nonzero(K.contains(graph.points)))
        assert J == n_in_k
        assert L == J - count_isolated(graph, K)

    def test_r0_at_reach_kills_far_side(self):
        graph = simulate_graph(hard_disk(0.4), 40.0, 2, unit_box(2), seeded(8))
        K = unit_box(2)
        J, L = count_truncation_family(graph, K, 0.4)
        assert L == 0
        assert J == count_isolated(graph, K)

    def test_r0_beyond_reach_rejected(self):
        graph = simulate_graph(hard_disk(0.4), 10.0, 2, unit_box(2), seeded(9))
        with pytest.raises(SimulationError):
            count_truncation_family(graph, unit_box(2), 2.0)


class TestCoupling:
    @given(st.integers(0, 30))
    def test_shared_randomness_identity(self, rep):
        g = exponential(1.0)
        n, R = 2.0, 1.0
        g_n = make_variant(g, "scaled", n=n)
        graph = simulate_graph(g_n, 3.0, 1, unit_box(1), seeded(100 + rep),
                               min_reach=R / n, min_margin=R / n)
        J, _ = count_truncation_family(graph, unit_box(1), R / n)
        twin = regraph(graph, make_variant(g, "cut_then_scale", R=R, n=n))
        assert J == count_isolated(twin, unit_box(1))


class TestComponents:
    def _graph(self, lam=20.0, a=0.3, r=3, seed=20):
        g = hard_disk(a)
        return simulate_graph(g, lam, 2, unit_box(2), seeded(seed), min_margin=r * a)

    def test_r1_matches_isolated(self):
        graph = self._graph()
        assert count_components(graph, unit_box(2), 1) == count_isolated(graph, unit_box(2))

    def test_single_edge_pair(self):
        window = SimWindow(K=unit_box(2), margin=1.0)
        pts = np.array([[0.4, 0.5], [0.6, 0.5], [0.2, 0.2]])
        graph = connect(pts, hard_disk(0.25), window, 0.25, 3, 1.0)
        assert count_components(graph, unit_box(2), 2) == pytest.approx(1.0)

    def test_unbounded_support_rejected(self):
        graph = simulate_graph(exponential(0.3), 10.0, 2, unit_box(2), seeded(21),
                               min_margin=2.0)
        with pytest.raises(SimulationError):
            count_components(graph, unit_box(2), 1)

    def test_insufficient_margin_rejected(self):
        graph = simulate_graph(hard_disk(0.3), 10.0, 2, unit_box(2), seeded(22))
        # margin is one support radius; size-3 components need three
        with pytest.raises(SimulationError):
            count_components(graph, unit_box(2), 3)

    def test_cell_counts_sum_to_region_count(self):
        lattice = LatticeRegion((0, 0), (3, 3))
        g = hard_disk(0.3)
        graph = simulate_graph(g, 15.0, 2, lattice.bounding_region, seeded(23),
                               min_margin=2 * 0.3)
        Y = component_cell_counts(graph, lattice, 2)
        total = count_components(graph, lattice.bounding_region, 2)
        assert Y.shape == (3, 3)
        assert Y.sum() == pytest.approx(total)


class TestLattice:
    def test_sizes(self):
        lat = LatticeRegion((0, 0), (4, 4))
        assert lat.size == 16
        assert lat.boundary_size == 16 - 4
        assert lat.boundary_size <= lat.size
        assert LatticeRegion((0,), (1,)).boundary_size == 1

    def test_cell_region(self):
        cell = LatticeRegion((2, 3), (4, 4)).cell((2, 3))
        assert cell.lower == (2.0, 3.0)
        assert cell.sides == (1.0, 1.0)


class TestMarginPolicy:
    def test_bounded_support_exact(self):
        win = margin_policy(hard_disk(0.5), 2, 10.0, unit_box(2), 1e-4)
        assert win.margin == 0.5
        assert win.bias_bound == 0.0

    def test_exponential_analytic(self):
        # lam vol * omega_1 * a * e^{-t/a} = eps  (d = 1 tail)
        lam, eps, a = 2.0, 1e-4, 1.0
        win = margin_policy(exponential(a), 1, lam, unit_box(1), eps)
        expect = a * math.log(2 * a * lam / (0.5 * eps))  # solver aims at eps/2
        assert win.margin == pytest.approx(expect, rel=1e-6)

    def test_huge_budget_no_margin(self):
        win = margin_policy(exponential(1.0), 1, 1.0, unit_box(1), 1e6)
        assert win.margin == 0.0


class TestDeterminism:
    def test_same_seed_same_graph(self):
        a = simulate_graph(exponential(0.2), 30.0, 2, unit_box(2), seeded(30))
        b = simulate_graph(exponential(0.2), 30.0, 2, unit_box(2), seeded(30))
        assert np.array_equal(a.points, b.points)
        assert np.array_equal(a.edge_i, b.edge_i)
        assert np.array_equal(a.edge_dist, b.edge_dist)

    def test_dump_realization(self, tmp_path):
        graph = simulate_graph(hard_disk(0.3), 20.0, 2, unit_box(2), seeded(31))
        path = tmp_path / "real.txt"
        dump_realization(graph, str(path))
        lines = path.read_text().splitlines()
        assert sum(1 for ln in lines if ln.startswith("point ")) == graph.n_points
        assert sum(1 for ln in lines if ln.startswith("edge ")) == graph.edge_i.size
