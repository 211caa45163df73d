import numpy as np
import pytest

import walkdp as wd
from walkdp.errors import WalkDpError
from walkdp.simulate import logistic_objective


@pytest.fixture(scope="module")
def ring4():
    spec = wd.named_graph("ring:4")
    return spec, wd.build_transition(spec, "metropolis_hastings")


@pytest.fixture(scope="module")
def data4():
    return wd.synth_logreg_data(4, 64, 5, seed=13)


class TestDataGenerator:
    def test_norm_bound(self, data4):
        x = np.vstack(data4.features + [data4.test_features])
        assert np.linalg.norm(x, axis=1).max() <= 1.0

    def test_balanced_at_scale(self):
        data = wd.synth_logreg_data(16, 640, 5, seed=3)
        y = np.concatenate(data.labels)
        assert len(y) >= 10_000
        assert abs(float(y.mean()) - 0.5) < 0.05

    def test_split_sizes(self, data4):
        n_train = sum(len(f) for f in data4.features)
        n_test = len(data4.test_labels)
        assert n_train == 4 * 64
        assert n_test == pytest.approx(n_train / 4, abs=2)  # 80/20 split

    def test_determinism(self):
        a = wd.synth_logreg_data(3, 8, 4, seed=5)
        b = wd.synth_logreg_data(3, 8, 4, seed=5)
        assert all(np.array_equal(x, y) for x, y in zip(a.features, b.features))
        assert np.array_equal(a.test_labels, b.test_labels)


class TestWalkSim:
    def test_noiseless_descent(self, ring4, data4):
        _spec, w = ring4
        cfg = wd.SimConfig(horizon=300, eta=0.5, clip=1.0, seed=1, sigma=0.0,
                           batch=64, eval_every=50)
        m = wd.run_walk_dpsgd(w, cfg, data4)
        assert np.all(np.diff(m.objective) < 1e-12)

    def test_determinism(self, ring4, data4):
        _spec, w = ring4
        cfg = wd.SimConfig(horizon=100, eta=0.3, clip=1.0, seed=7, sigma=0.5, batch=8)
        a = wd.run_walk_dpsgd(w, cfg, data4)
        b = wd.run_walk_dpsgd(w, cfg, data4)
        assert a.params_hash == b.params_hash
        assert np.array_equal(a.visit_counts, b.visit_counts)

    def test_visit_counts_sum_to_horizon(self, ring4, data4):
        _spec, w = ring4
        cfg = wd.SimConfig(horizon=250, eta=0.1, clip=1.0, seed=2, batch=4)
        m = wd.run_walk_dpsgd(w, cfg, data4)
        assert m.visit_counts.sum() == 250

    def test_visit_frequencies_near_uniform(self):
        spec = wd.named_graph("hypercube:8")
        w = wd.build_transition(spec, "metropolis_hastings")
        data = wd.synth_logreg_data(8, 8, 3, seed=0)
        horizon = 10_000
        cfg = wd.SimConfig(horizon=horizon, eta=0.1, clip=1.0, seed=9, batch=2,
                           dim=3, eval_every=horizon)
        m = wd.run_walk_dpsgd(w, cfg, data)
        p = 1.0 / 8.0
        band = 3.0 * np.sqrt(p * (1 - p) * horizon)
        assert np.all(np.abs(m.visit_counts - horizon * p) <= band)

    def test_empirical_first_visits_match_recursion(self):
        spec = wd.named_graph("ring:5")
        w = wd.build_transition(spec, "metropolis_hastings")
        horizon, runs = 12, 40_000
        hw = wd.hitting_weights(w, 0, 2, horizon)
        mc = wd.mc_hitting_oracle(w, 0, 2, horizon, runs, seed=21)
        for t in range(horizon):
            se = np.sqrt(max(hw.weights[t] * (1 - hw.weights[t]), 1e-12) / runs)
            assert abs(mc.weights[t] - hw.weights[t]) <= 3 * se + 1e-9

    def test_capped_node_only_adds_noise(self, ring4, data4):
        _spec, w = ring4
        cfg = wd.SimConfig(horizon=200, eta=0.3, clip=1.0, seed=3, sigma=0.0,
                           batch=64, cap_contributions=1, eval_every=200)
        capped = wd.run_walk_dpsgd(w, cfg, data4)
        free = wd.run_walk_dpsgd(
            wd.build_transition(wd.named_graph("ring:4"), "metropolis_hastings"),
            wd.SimConfig(horizon=200, eta=0.3, clip=1.0, seed=3, sigma=0.0,
                         batch=64, eval_every=200),
            data4,
        )
        # capping freezes updates once budgets are spent, hurting progress
        assert capped.objective[-1] >= free.objective[-1] - 1e-12

    def test_empty_shard_rejected(self, ring4):
        _spec, w = ring4
        bad = wd.Dataset(
            features=[np.zeros((0, 3))] + [np.zeros((2, 3))] * 3,
            labels=[np.zeros(0)] + [np.zeros(2)] * 3,
            test_features=np.zeros((1, 3)),
            test_labels=np.zeros(1),
        )
        cfg = wd.SimConfig(horizon=5, eta=0.1, clip=1.0, seed=0, dim=3)
        with pytest.raises(WalkDpError):
            wd.run_walk_dpsgd(w, cfg, bad)


class TestDecor:
    def test_noise_cancellation_identity(self, ring4, data4):
        spec, w = ring4
        cfg = wd.SimConfig(horizon=120, eta=0.2, clip=1.0, seed=5, sigma_cor=4.0,
                           sigma_dp=0.3, batch=8, eval_every=40)
        m = wd.run_decor(w, spec, cfg, data4)
        assert m.noise_imbalance <= 1e-10

    def test_reduces_to_parallel_local_dp(self, ring4, data4):
        spec, w = ring4
        cfg = wd.SimConfig(horizon=50, eta=0.2, clip=1.0, seed=5, sigma_cor=0.0,
                           sigma_dp=0.5, batch=8, eval_every=25)
        m = wd.run_decor(w, spec, cfg, data4)
        assert m.noise_imbalance == 0.0
        assert len(m.objective) == 2

    def test_mean_trajectory_unaffected_by_correlated_noise(self, data4):
        # uniform gossip makes every node carry the average, on which the
        # pair-cancelling noise sums to zero
        spec = wd.named_graph("complete:4")
        w = wd.build_transition(spec, "metropolis_hastings")
        base = dict(horizon=40, eta=0.2, clip=1.0, seed=11, batch=64, eval_every=40)
        noisy = wd.run_decor(w, spec, wd.SimConfig(sigma_cor=10.0, **base), data4)
        clean = wd.run_decor(w, spec, wd.SimConfig(sigma_cor=0.0, **base), data4)
        assert noisy.objective[-1] == pytest.approx(clean.objective[-1], abs=1e-10)

    def test_determinism(self, ring4, data4):
        spec, w = ring4
        cfg = wd.SimConfig(horizon=30, eta=0.2, clip=1.0, seed=8, sigma_cor=1.0,
                           sigma_dp=0.2, batch=4, eval_every=10)
        a = wd.run_decor(w, spec, cfg, data4)
        b = wd.run_decor(w, spec, cfg, data4)
        assert a.params_hash == b.params_hash


class TestMetricsExport:
    def test_csv(self, tmp_path, ring4, data4):
        from walkdp.simulate import metrics_to_csv

        _spec, w = ring4
        cfg = wd.SimConfig(horizon=20, eta=0.1, clip=1.0, seed=0, batch=4, eval_every=10)
        m = wd.run_walk_dpsgd(w, cfg, data4)
        path = tmp_path / "metrics.csv"
        metrics_to_csv(m, path)
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "step,objective,accuracy"
        assert len(lines) == len(m.steps) + 1

    def test_objective_helper_matches_manual(self, data4):
        theta = np.zeros(5)
        # log(2) at the origin for balanced-ish labels
        assert logistic_objective(theta, data4) == pytest.approx(np.log(2.0), rel=1e-12)
