import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import walkdp as wd
from walkdp.errors import FormatError, GraphValidationError

from conftest import random_connected_graph


class TestBuildTransition:
    def test_two_node_lazy(self, two_node_lazy):
        assert np.allclose(two_node_lazy.matrix, [[0.5, 0.5], [0.5, 0.5]], atol=0)

    def test_triangle_metropolis(self):
        spec = wd.GraphSpec(n=3, edges=((0, 1), (1, 2), (0, 2)))
        w = wd.build_transition(spec, "metropolis_hastings")
        assert np.allclose(w.matrix, np.full((3, 3), 1.0 / 3.0))

    def test_explicit_passthrough(self):
        rows = np.array([[0.5, 0.5], [0.5, 0.5]])
        spec = wd.GraphSpec(n=2, edges=((0, 1),), matrix=rows)
        w = wd.build_transition(spec, "explicit")
        assert np.array_equal(w.matrix, rows)

    def test_disconnected_rejected(self):
        spec = wd.GraphSpec(n=4, edges=((0, 1), (2, 3)))
        with pytest.raises(GraphValidationError):
            wd.build_transition(spec, "metropolis_hastings")

    def test_non_stochastic_rows_rejected(self):
        spec = wd.GraphSpec(n=2, edges=((0, 1),), matrix=np.array([[0.5, 0.4], [0.5, 0.5]]))
        with pytest.raises(FormatError):
            wd.build_transition(spec, "explicit")

    def test_duplicate_edge_rejected(self):
        with pytest.raises(GraphValidationError):
            wd.GraphSpec(n=3, edges=((0, 1), (1, 0)))

    def test_self_loop_edge_rejected(self):
        with pytest.raises(GraphValidationError):
            wd.GraphSpec(n=3, edges=((1, 1),))

    def test_rows_stochastic_and_symmetric(self):
        rng = np.random.default_rng(5)
        for _ in range(5):
            spec = random_connected_graph(rng, 7)
            for scheme in ("metropolis_hastings",):
                w = wd.build_transition(spec, scheme)
                assert np.allclose(w.matrix.sum(axis=1), 1.0, atol=1e-12)
                assert w.is_symmetric()


class TestAnalyze:
    def test_rank_one_kernel(self, two_node_lazy):
        rep = wd.analyze(two_node_lazy)
        assert rep.lambda2 == pytest.approx(0.0, abs=1e-12)
        assert rep.spectral_gap == pytest.approx(1.0, abs=1e-12)
        assert np.allclose(rep.stationary, [0.5, 0.5], atol=1e-10)

    def test_three_cycle_zero_diagonal(self):
        # circulant eigenvalues 1, -1/2, -1/2; an odd cycle is aperiodic,
        # confirmed by the gcd-of-return-times oracle below
        m = np.array([[0, 0.5, 0.5], [0.5, 0, 0.5], [0.5, 0.5, 0]])
        spec = wd.GraphSpec(n=3, edges=((0, 1), (1, 2), (0, 2)), matrix=m)
        rep = wd.analyze(wd.build_transition(spec, "explicit"))
        assert rep.lambda2 == pytest.approx(-0.5, abs=1e-12)
        assert rep.spectral_gap == pytest.approx(1.5, abs=1e-12)
        assert rep.is_irreducible
        support = m > 0
        returns = []
        p = np.eye(3, dtype=bool)
        for t in range(1, 7):
            p = (p @ support) > 0
            if p[0, 0]:
                returns.append(t)
        assert np.gcd.reduce(returns) == 1
        assert rep.is_aperiodic

    def test_hypercube_matches_reported_gap(self):
        # the reference table lists 0.33333 for the 32-node hypercube, which
        # is the spectral gap of the Metropolis-Hastings kernel
        w = wd.build_transition(wd.named_graph("hypercube:32"), "metropolis_hastings")
        rep = wd.analyze(w)
        assert rep.spectral_gap == pytest.approx(0.33333, abs=5e-6)

    def test_cliques_matches_reported_gap(self):
        w = wd.build_transition(wd.named_graph("cliques:3x6"), "metropolis_hastings")
        rep = wd.analyze(w)
        assert rep.spectral_gap == pytest.approx(0.05634, abs=2e-5)

    def test_asymmetric_needs_flag(self):
        m = np.array([[0.2, 0.8], [0.5, 0.5]])
        spec = wd.GraphSpec(n=2, edges=((0, 1),), matrix=m)
        w = wd.build_transition(spec, "explicit")
        with pytest.raises(GraphValidationError):
            wd.analyze(w)
        rep = wd.analyze(w, allow_asymmetric=True)
        assert abs(rep.lambda2) <= 1.0

    def test_stationary_uniform_on_symmetric(self):
        rng = np.random.default_rng(11)
        for _ in range(4):
            spec = random_connected_graph(rng, 6)
            rep = wd.analyze(wd.build_transition(spec, "metropolis_hastings"))
            assert rep.is_irreducible
            assert np.allclose(rep.stationary, 1.0 / 6.0, atol=1e-10)
            assert -1.0 <= rep.lambda2 < 1.0


class TestHittingWeights:
    def test_two_node_geometric(self, two_node_lazy):
        hw = wd.hitting_weights(two_node_lazy, 0, 1, 5)
        assert np.allclose(hw.weights, [0.5**t for t in range(1, 6)], atol=1e-15)
        assert hw.residual == pytest.approx(0.5**5, abs=1e-15)

    def test_complete_with_self_loops_first_success(self):
        n = 5
        m = np.full((n, n), 1.0 / n)
        edges = tuple((i, j) for i in range(n) for j in range(i + 1, n))
        spec = wd.GraphSpec(n=n, edges=edges, matrix=m)
        w = wd.build_transition(spec, "explicit")
        hw = wd.hitting_weights(w, 0, 2, 8)
        expected = [(1 / n) * ((n - 1) / n) ** (t - 1) for t in range(1, 9)]
        assert np.allclose(hw.weights, expected, atol=1e-15)

    def test_unreachable_within_horizon(self):
        spec = wd.named_graph("path:3")
        w = wd.build_transition(spec, "metropolis_hastings")
        hw = wd.hitting_weights(w, 0, 2, 1)
        assert hw.weights[0] == 0.0
        assert hw.residual == pytest.approx(1.0)

    def test_first_return_allowed(self, two_node_lazy):
        hw = wd.hitting_weights(two_node_lazy, 1, 1, 4)
        assert np.allclose(hw.weights, [0.5**t for t in range(1, 5)])

    def test_bad_horizon(self, two_node_lazy):
        with pytest.raises(GraphValidationError):
            wd.hitting_weights(two_node_lazy, 0, 1, 0)
        with pytest.raises(GraphValidationError):
            wd.hitting_weights(two_node_lazy, 0, 5, 3)

    @settings(max_examples=20, deadline=None)
    @given(seed=st.integers(0, 10_000), n=st.integers(2, 8), horizon=st.integers(1, 24))
    def test_mass_conservation(self, seed, n, horizon):
        rng = np.random.default_rng(seed)
        spec = random_connected_graph(rng, n)
        w = wd.build_transition(spec, "metropolis_hastings")
        i, j = rng.integers(0, n, size=2)
        hw = wd.hitting_weights(w, int(i), int(j), horizon)
        assert np.all(hw.weights >= 0)
        assert hw.residual >= 0
        assert hw.total() == pytest.approx(1.0, abs=1e-12)


class TestMonteCarloOracle:
    def test_matches_recursion_within_three_se(self, two_node_lazy):
        samples = 100_000
        hw = wd.hitting_weights(two_node_lazy, 0, 1, 5)
        mc = wd.mc_hitting_oracle(two_node_lazy, 0, 1, 5, samples, seed=42)
        for t in range(5):
            p = hw.weights[t]
            se = np.sqrt(p * (1 - p) / samples)
            assert abs(mc.weights[t] - p) <= 3 * se + 1e-12

    def test_deterministic_chain_exact(self):
        m = np.array([[0.0, 1.0], [1.0, 0.0]])
        spec = wd.GraphSpec(n=2, edges=((0, 1),), matrix=m)
        w = wd.build_transition(spec, "explicit")
        mc = wd.mc_hitting_oracle(w, 0, 1, 3, samples=1, seed=0)
        assert np.array_equal(mc.weights, [1.0, 0.0, 0.0])

    def test_seed_determinism(self, ring8_mh):
        a = wd.mc_hitting_oracle(ring8_mh, 0, 3, 10, 5_000, seed=7)
        b = wd.mc_hitting_oracle(ring8_mh, 0, 3, 10, 5_000, seed=7)
        assert np.array_equal(a.weights, b.weights)


class TestFiedler:
    def test_ring_four(self):
        assert wd.laplacian_fiedler(wd.named_graph("ring:4")) == pytest.approx(2.0, abs=1e-10)

    def test_k2_and_p2_identical(self):
        k2 = wd.laplacian_fiedler(wd.GraphSpec(n=2, edges=((0, 1),)))
        p2 = wd.laplacian_fiedler(wd.named_graph("path:2"))
        assert k2 == pytest.approx(2.0, abs=1e-12)
        assert p2 == k2

    def test_disconnected_rejected(self):
        with pytest.raises(GraphValidationError):
            wd.laplacian_fiedler(wd.GraphSpec(n=4, edges=((0, 1), (2, 3))))

    def test_positive_iff_connected(self):
        rng = np.random.default_rng(3)
        for _ in range(5):
            spec = random_connected_graph(rng, 6)
            assert wd.laplacian_fiedler(spec) > 1e-9


class TestIO:
    def test_graph_json_roundtrip(self, tmp_path):
        payload = {"n": 3, "edges": [[0, 1], [1, 2]], "scheme": "lazy_simple_walk"}
        path = tmp_path / "g.json"
        path.write_text(json.dumps(payload))
        spec, scheme = wd.load_graph_json(path)
        assert spec.n == 3 and scheme == "lazy_simple_walk"
        assert spec.edges == ((0, 1), (1, 2))

    def test_transition_csv(self, tmp_path, two_node_lazy):
        path = tmp_path / "w.csv"
        two_node_lazy.to_csv(path)
        rows = path.read_text().strip().splitlines()
        assert rows[0] == "w0,w1"
        assert [float(x) for x in rows[1].split(",")] == [0.5, 0.5]

    def test_weights_csv(self, tmp_path, two_node_lazy):
        hw = wd.hitting_weights(two_node_lazy, 0, 1, 3)
        path = tmp_path / "hw.csv"
        hw.to_csv(path)
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "t,weight"
        assert lines[-1].startswith("residual,")
