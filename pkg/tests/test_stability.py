import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from chronospike import stability as sb
from chronospike.config import TrainConfig
from chronospike.model import ChronoSpike
from oracles import partition, wl_sorting


# --------------------------------------------------------------------------
# membrane bound


@pytest.mark.parametrize("tau, v_th, M, expected", [
    (1.0, 1.0, 2.0, 2.0),
    (3.0, 0.7, 0.0, 0.7),
    (2.0, 1.0, 1.0, 1.0),
])
def test_bound_examples(tau, v_th, M, expected):
    assert sb.membrane_bound(tau, v_th, M) == pytest.approx(expected, rel=1e-15)


def test_bound_near_the_stability_edge():
    lam = abs(1 - 1 / 0.51)
    assert round(lam, 4) == 0.9608
    assert sb.membrane_bound(0.51, 1.0, 2.0) == pytest.approx(2.0 / (0.51 * (1 - lam)), rel=1e-12)


def test_bound_outside_hypothesis():
    with pytest.raises(ValueError):
        sb.membrane_bound(0.5, 1.0, 1.0)
    with pytest.raises(ValueError):
        sb.membrane_bound(2.0, 1.0, -1.0)


def test_bound_with_reset_offset():
    # |u_r| + (M + |u_r|) / (tau (1 - |lambda|)) at tau = 2
    assert sb.membrane_bound(2.0, 0.0, 1.0, u_reset=-0.5) == pytest.approx(0.5 + 1.5, rel=1e-15)


def test_small_grid_simulation_stays_bounded():
    reports = sb.verify_boundedness(taus=(0.51, 0.6, 1.0, 5.0), Ms=(0.5, 5.0), v_ths=(0.5, 2.0),
                                    steps=400, seeds=4, rng=np.random.default_rng(1))
    assert len(reports) == 4 * 2 * 2 * 2
    assert all(r.passed for r in reports), [r.line() for r in reports if not r.passed]
    assert {r.stream for r in reports} == {"uniform", "constant+M"}


def test_grid_rejects_unstable_tau():
    with pytest.raises(ValueError):
        sb.verify_boundedness(taus=(0.4,), steps=5, seeds=1)


@given(st.floats(0.52, 8.0), st.floats(0.0, 5.0), st.floats(0.1, 3.0), st.integers(0, 10_000))
def test_single_neuron_never_exceeds_bound(tau, M, v_th, seed):
    r = sb.verify_boundedness(taus=(tau,), Ms=(M,), v_ths=(v_th,), steps=200, seeds=2,
                              rng=np.random.default_rng(seed))
    assert all(x.passed for x in r)


def test_network_bound_holds_on_short_runs():
    reports = sb.verify_network_bound(steps=500, nets=2, rng=np.random.default_rng(3))
    assert len(reports) == 4 and all(r.passed for r in reports)
    assert all(r.fan_in <= 5 and r.w_max <= 0.5 for r in reports)


# --------------------------------------------------------------------------
# contraction


def test_contraction_factor_examples():
    assert sb.contraction_factor([1.0, 1.0], 1.0, np.zeros((2, 2))) == 0.0
    W = np.array([[0.1, -0.2], [0.05, 0.0]])
    assert sb.contraction_factor([2.0, 2.0], 1.0, W) == pytest.approx(0.8, abs=1e-15)
    base = sb.contraction_factor([2.0], 1.0, W) - 0.5
    assert sb.contraction_factor([2.0], 1.0, 2 * W) - 0.5 == pytest.approx(2 * base, abs=1e-15)


def _net(W, tau, v_th=1.0):
    n = W.shape[0]
    return sb.RecurrentNet(W, np.full(n, tau), np.full(n, v_th))


def test_zero_factor_net_has_no_temporal_path():
    rep = sb.verify_contraction(_net(np.zeros((6, 6)), 1.0), horizon=10)
    assert rep.rho < 1e-12
    assert max(rep.norms[:-1]) < 1e-12 and rep.norms[-1] > 0


def test_small_weight_net_contracts_backward():
    rng = np.random.default_rng(2)
    W = rng.uniform(-1, 1, size=(10, 10))
    W *= 0.4 / np.abs(W).sum(axis=1).max()
    rep = sb.verify_contraction(_net(W, 1.0), horizon=25, rng=rng)
    assert not rep.skipped and rep.passed
    assert all(a <= b + 1e-12 for a, b in zip(rep.norms, rep.norms[1:]))


def test_factor_above_one_skips_envelope():
    W = np.full((4, 4), 0.3)
    rep = sb.verify_contraction(_net(W, 2.0), horizon=10)
    assert rep.rho > 1 and rep.skipped and rep.finite
    assert "SKIP" in rep.line()


def test_random_contractive_nets_land_in_target():
    rng = np.random.default_rng(5)
    for _ in range(10):
        net = sb.random_contractive_net(12, rng)
        rho = sb.contraction_factor(net.effective_tau(), net.alpha, net.weights)
        assert 0.3 - 1e-12 <= rho <= 0.95 + 1e-12
        assert np.all(net.effective_tau() >= 1.0 - 1e-12)


def test_model_factors_are_finite():
    model = ChronoSpike(TrainConfig(hidden=(8, 4), heads=2, temporal_heads=2), 5, 2)
    f = sb.model_contraction_factors(model)
    assert set(f) == {"layer0", "layer1"} and all(np.isfinite(v) for v in f.values())


# --------------------------------------------------------------------------
# colour refinement


def test_complete_graph_keeps_one_colour():
    for hist in sb.wl_refinement(*sb.complete(4)):
        assert len(hist) == 1


def test_star_and_path_are_distinguished():
    assert sb.wl_distinguishes(sb.star(3), sb.path(4))


def test_two_triangles_and_hexagon_are_not():
    assert not sb.wl_distinguishes(sb.two_triangles(), sb.cycle(6))


def test_self_loops_rejected():
    with pytest.raises(ValueError):
        sb.wl_refinement(2, [(0, 0)])


def _random_graph(rng, n):
    return [(u, v) for u, v in itertools.combinations(range(n), 2) if rng.random() < 0.3]


def test_hash_refinement_matches_sorting_refinement():
    rng = np.random.default_rng(0)
    for _ in range(100):
        n = int(rng.integers(1, 12))
        edges = _random_graph(rng, n)
        hashed = sb.wl_partitions(n, edges)
        sorted_ = [partition(c) for c in wl_sorting(n, edges, n)]
        assert hashed == sorted_


@given(st.integers(0, 10_000), st.integers(2, 9))
def test_relabelled_graph_has_same_histograms(seed, n):
    rng = np.random.default_rng(seed)
    edges = _random_graph(rng, n)
    perm = rng.permutation(n)
    moved = [(int(perm[u]), int(perm[v])) for u, v in edges]
    assert sb.wl_refinement(n, edges) == sb.wl_refinement(n, moved)


def test_spiking_encoder_separates_star_from_path():
    res = sb.wl_separation_check(sb.star(3), sb.path(4))
    assert res.separated and not res.skipped and res.gamma in (0.5, 1.0, 2.0, 4.0)


def test_isomorphic_pair_is_never_separated():
    n, edges = sb.path(4)
    relabelled = (n, [(3, 2), (2, 1), (1, 0)])
    for gamma in (0.5, 1.0, 2.0, 4.0):
        a = sorted(map(tuple, sb.spike_counts(n, edges, gamma).tolist()))
        b = sorted(map(tuple, sb.spike_counts(*relabelled, gamma).tolist()))
        assert a == b


def test_separation_skipped_when_refinement_fails():
    res = sb.wl_separation_check(sb.two_triangles(), sb.cycle(6))
    assert res.skipped and not res.separated


# --------------------------------------------------------------------------
# complexity


def test_doubling_nodes_doubles_spatial_term():
    a = sb.complexity_estimate(100, 10, 5, 2, 16, 32)
    b = sb.complexity_estimate(200, 10, 5, 2, 16, 32)
    assert b.spatial_ops == 2 * a.spatial_ops
    assert b.memory == a.memory


@pytest.mark.parametrize("S", [3, 5])
def test_published_log_ratio_is_reproduced(S):
    dblp = sb.complexity_estimate(28_085, 27, S, 2, 128, 1024)
    tmall = sb.complexity_estimate(577_314, 19, S, 2, 128, 1024)
    assert tmall.spatial_ops / dblp.spatial_ops == pytest.approx(1.08e12 / 7.45e10, rel=5e-3)
    if S == 3:
        assert dblp.spatial_ops == pytest.approx(7.45e10, rel=1e-3)
        assert tmall.spatial_ops == pytest.approx(1.08e12, rel=5e-3)
        assert dblp.full_memory == pytest.approx(9.71e7, rel=1e-3)


def test_batched_memory_example():
    est = sb.complexity_estimate(28_085, 27, 5, 2, 128, 1024)
    assert est.memory == 1024 * 27 * 128 + 1024 * 5 * 2 * 128


def test_complexity_rejects_non_positive():
    with pytest.raises(ValueError):
        sb.complexity_estimate(0, 1, 1, 1, 1, 1)


def test_measured_macs_are_linear_on_small_grid():
    reps = sb.mac_linearity(n_grid=(20, 40, 60, 80), t_grid=(2, 3, 4, 5), fixed_T=2, fixed_N=30)
    assert all(r.r2 > 0.99 for r in reps)


def test_r_squared_of_a_line():
    assert sb.r_squared([1, 2, 3], [2, 4, 6]) == pytest.approx(1.0)
