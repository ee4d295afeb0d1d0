import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.testing import assert_allclose

from sensor_scheduler.processing.errors import InfeasibleBudgetError, InvalidParamsError, InvalidTripletError
from sensor_scheduler.processing.network_exchange import (
    ExchangeNetwork, SensingNode, admissible_triplets, advance, balance_metrics,
    brute_force_exchange, deliver, exact_utility_curvature, f_marginal, g_marginal, greedy_exchange,
    proposition1_bound, random_observations, simulate_exchange, utility, utility_marginal,
)
from sensor_scheduler.processing.scheduler import FisherState, marginal_gain
from sensor_scheduler.processing.state_space import filtered_covariance, random_spd


def _network(seed=0, state_dim=3, local_sizes=(2, 2), sigmas=None):
    rng = np.random.default_rng(seed)
    sigmas = sigmas or [1.0] * len(local_sizes)
    H_list = [rng.normal(size=(size, state_dim)) for size in local_sizes]
    priors = [random_spd(rng, state_dim, 5.0) for _ in local_sizes]
    return ExchangeNetwork.from_priors(H_list, sigmas, priors, 0.9 * np.eye(state_dim), 0.1 * np.eye(state_dim))


def _fixed_network(F_invs, sigmas=None, H=None):
    sigmas = sigmas or [1.0] * len(F_invs)
    nodes = tuple(SensingNode(H=np.eye(F.shape[0])[:1] if H is None else H[i], sigma=s, F_inv=F)
                  for i, (F, s) in enumerate(zip(F_invs, sigmas)))
    d = F_invs[0].shape[0]
    return ExchangeNetwork(nodes=nodes, A_dyn=np.eye(d), Q=np.eye(d))


# balance term

def test_g_marginal_examples():
    assert_allclose(g_marginal([0], [1], 0), math.log(2))
    assert_allclose(g_marginal([3], [5], 0), math.log(1 + 1 / 8))
    assert_allclose(g_marginal([3], [5], 0), 0.1178, atol=1e-4)


def test_g_marginal_needs_local_measurements():
    with pytest.raises(InvalidParamsError):
        g_marginal([0, 0], [1, 0], 1)


def test_g_marginal_depends_only_on_receiver():
    network = _network(local_sizes=(2, 3, 1))
    for dst in range(3):
        values = {utility_marginal(network, t, 1.0) - f_marginal(network, t)
                  for t in admissible_triplets(network) if t.dst == dst}
        assert_allclose(list(values), g_marginal(network.received_counts, network.local_sizes, dst))


@given(st.lists(st.tuples(st.integers(0, 20), st.integers(0, 20), st.integers(1, 20)), min_size=1, max_size=5),
       st.data())
def test_g_has_diminishing_returns(nodes, data):
    counts = [c for c, _, _ in nodes]
    larger = [c + extra for c, extra, _ in nodes]
    local = [size for _, _, size in nodes]
    dst = data.draw(st.integers(0, len(nodes) - 1))
    assert g_marginal(counts, local, dst) >= g_marginal(larger, local, dst)
    assert g_marginal(counts, local, dst) > 0


# information term

def test_f_marginal_zero_row():
    network = _fixed_network([np.eye(2), np.eye(2)], H=[np.zeros((1, 2)), np.zeros((1, 2))])
    assert f_marginal(network, (0, 1, 0)) == 0.0


def test_f_marginal_matches_single_sensor_gain():
    network = _network(seed=1, sigmas=[0.5, 2.0])
    for t in admissible_triplets(network):
        fisher = FisherState.initial(network.nodes[t.dst].F_inv, network.nodes[t.src].sigma)
        assert_allclose(f_marginal(network, t), marginal_gain(fisher, network.row(t)), rtol=1e-10)


def test_f_marginal_matches_direct_inversion():
    network = _network(seed=2, local_sizes=(2, 3, 2))
    for t in admissible_triplets(network):
        before = network.nodes[t.dst]
        h = network.row(t)
        F = np.linalg.inv(before.F_inv) + np.outer(h, h) / network.nodes[t.src].sigma**2
        expected = before.mse - np.trace(np.linalg.inv(F))
        assert_allclose(f_marginal(network, t), expected, rtol=1e-8)
        assert_allclose(deliver(network, t).nodes[t.dst].mse, before.mse - expected, rtol=1e-8)


def test_utility_marginal_examples():
    network = _network(seed=3)
    t = admissible_triplets(network)[0]
    assert utility_marginal(network, t, 0.0) == f_marginal(network, t)
    expected = f_marginal(network, t) + 200 * g_marginal(network.received_counts, network.local_sizes, t.dst)
    assert_allclose(utility_marginal(network, t, 200.0), expected, rtol=1e-12)

    pure_balance = _fixed_network([np.eye(2), np.eye(2)], H=[np.ones((1, 2)), np.zeros((1, 2))])
    assert_allclose(utility_marginal(pure_balance, (0, 1, 0), 1.0), math.log(2))


@pytest.mark.parametrize("triplet", [(0, 0, 0), (0, 1, 2), (2, 0, 0), (0, -1, 0)])
def test_inadmissible_triplets(triplet):
    network = _network()
    with pytest.raises(InvalidTripletError):
        f_marginal(network, triplet)


def test_admissible_triplets_are_lexicographic():
    network = _network(local_sizes=(1, 2, 1))
    triplets = admissible_triplets(network)
    assert triplets == sorted(triplets)
    assert all(t.dst != t.src for t in triplets)
    assert len(triplets) == (2 + 1) + (1 + 1) + (1 + 2)


def test_utility_of_empty_schedule_is_zero():
    assert utility(_network(), [], 5.0) == 0.0


def test_utility_rejects_repeated_triplets():
    with pytest.raises(InvalidTripletError):
        utility(_network(), [(0, 1, 0), (0, 1, 0)], 1.0)


def test_negative_gamma():
    with pytest.raises(InvalidParamsError):
        utility_marginal(_network(), (0, 1, 0), -1.0)


# greedy relay

@pytest.mark.parametrize("gamma", [0.0, 1.0, 200.0])
def test_greedy_utility_matches_recomputation(gamma):
    network = _network(seed=4, state_dim=4, local_sizes=(3, 2, 4))
    schedule = greedy_exchange(network, 6, gamma)
    assert len(schedule.triplets) == 6
    assert len(set(schedule.triplets)) == 6
    assert_allclose(schedule.utility, utility(network, schedule.triplets, gamma), rtol=1e-8)
    assert_allclose(schedule.per_node_mse, [n.mse for n in schedule.network_after.nodes])
    assert sum(schedule.network_after.received_counts) == 6


def test_greedy_is_deterministic():
    network = _network(seed=5)
    assert greedy_exchange(network, 3, 1.0).triplets == greedy_exchange(network, 3, 1.0, seed=99).triplets


def test_greedy_saturates_network():
    network = _network(seed=6, local_sizes=(2, 1, 2), sigmas=[0.5, 1.0, 2.0])
    total = len(admissible_triplets(network))
    schedule = greedy_exchange(network, total + 3, 0.0)
    assert schedule.truncated
    assert len(schedule.triplets) == total
    for dst, node in enumerate(schedule.network_after.nodes):
        F = np.linalg.inv(network.nodes[dst].F_inv)
        for src, other in enumerate(network.nodes):
            if src != dst:
                F = F + other.H.T @ other.H / other.sigma**2
        assert_allclose(node.F_inv, np.linalg.inv(F), rtol=1e-8, atol=1e-12)


def test_greedy_with_huge_gamma_balances_counts():
    network = _network(seed=7, state_dim=3, local_sizes=(4, 1, 2))
    schedule = greedy_exchange(network, 8, 1e12)
    replay = network
    for t in schedule.triplets:
        load = [c + size for c, size in zip(replay.received_counts, replay.local_sizes)]
        taken = set(schedule.triplets[:schedule.triplets.index(t)])
        open_nodes = {u.dst for u in admissible_triplets(replay) if u not in taken}
        assert load[t.dst] == min(load[d] for d in open_nodes)
        replay = deliver(replay, t)


def test_greedy_rejects_empty_budget():
    with pytest.raises(InfeasibleBudgetError):
        greedy_exchange(_network(), 0, 1.0)


def test_greedy_matches_brute_force_on_toy_network():
    network = _network(seed=8, state_dim=2, local_sizes=(2, 2))
    greedy = greedy_exchange(network, 2, 0.0)
    best = brute_force_exchange(network, 2, 0.0)
    assert best.utility >= greedy.utility - 1e-12
    assert_allclose(best.utility, utility(network, best.triplets, 0.0))


@pytest.mark.slow
def test_greedy_guarantee_on_small_networks():
    for seed in range(20):
        rng = np.random.default_rng(seed)
        local_sizes = tuple(int(s) for s in rng.integers(1, 3, size=3))
        network = _network(seed=seed, state_dim=int(rng.integers(2, 4)), local_sizes=local_sizes)
        assert len(admissible_triplets(network)) <= 12
        for gamma in (0.0, 1.0):
            report = exact_utility_curvature(network, gamma)
            c = max(1.0, report.C_max) if math.isfinite(report.C_max) else 1.0
            for K in (1, 2, 3):
                greedy = greedy_exchange(network, K, gamma)
                best = brute_force_exchange(network, K, gamma)
                assert best.utility >= greedy.utility - 1e-10
                assert greedy.utility >= (1 - math.exp(-1 / c)) * best.utility - 1e-10


# curvature bound, metrics and dynamics

def test_proposition1_equal_spectra():
    result = proposition1_bound(_fixed_network([0.5 * np.eye(2), 0.5 * np.eye(2)]),
                                H_stacked=np.zeros((1, 2)))
    assert_allclose(result.bound, 8.0)
    assert result.condition_holds


def test_proposition1_spread_spectra():
    result = proposition1_bound(_fixed_network([np.diag([0.25, 1.0]), np.eye(2)]))
    assert_allclose([result.lambda_M, result.lambda_m], [4.0, 1.0])
    assert_allclose(result.bound, 512.0)


def test_proposition1_condition_fails_for_strong_observations():
    result = proposition1_bound(_fixed_network([np.eye(2), np.eye(2)]), H_stacked=10 * np.eye(2))
    assert not result.condition_holds


def test_proposition1_needs_common_noise():
    with pytest.raises(InvalidParamsError):
        proposition1_bound(_fixed_network([np.eye(2), np.eye(2)], sigmas=[1.0, 2.0]))


def test_proposition1_bounds_exact_curvature():
    checked = 0
    for seed in range(30):
        rng = np.random.default_rng(seed)
        d = int(rng.integers(2, 4))
        sizes = [int(s) for s in rng.integers(1, 3, size=3)]
        H_list = [0.3 * rng.normal(size=(s, d)) for s in sizes]
        priors = [0.1 * random_spd(rng, d, 3.0) for _ in sizes]
        network = ExchangeNetwork.from_priors(H_list, [1.0] * 3, priors, 0.9 * np.eye(d), 0.1 * np.eye(d))
        result = proposition1_bound(network)
        if not result.condition_holds:
            continue
        report = exact_utility_curvature(network, 0.0)
        assert math.isfinite(report.C_max)
        assert report.C_max <= result.bound
        checked += 1
    assert checked >= 20


def test_nodes_must_share_the_state_dimension():
    nodes = (SensingNode(H=np.ones((1, 2)), sigma=1.0, F_inv=np.eye(2)),
             SensingNode(H=np.ones((1, 3)), sigma=1.0, F_inv=np.eye(3)))
    with pytest.raises(InvalidParamsError, match="state dimension"):
        ExchangeNetwork(nodes=nodes, A_dyn=np.eye(2), Q=np.eye(2))
    with pytest.raises(InvalidParamsError, match="A_dyn"):
        ExchangeNetwork(nodes=nodes[:1] * 2, A_dyn=np.eye(3), Q=np.eye(2))


def test_balance_metrics_examples():
    network = _fixed_network([0.5 * np.eye(2), np.eye(2), 2 * np.eye(2)])
    metrics = balance_metrics(network)
    assert_allclose(metrics.total_mse, 7.0)
    assert_allclose(metrics.pairwise_mse_distance_sum, 6.0)
    assert balance_metrics(_fixed_network([np.eye(2)] * 3)).pairwise_mse_distance_sum == 0.0


def test_advance_predicts_then_fuses():
    network = _network(seed=9)
    after = greedy_exchange(network, 2, 1.0).network_after
    nxt = advance(after)
    for old, new in zip(after.nodes, nxt.nodes):
        P = network.A_dyn @ old.F_inv @ network.A_dyn.T + network.Q
        assert_allclose(new.F_inv, filtered_covariance(P, old.H, old.sigma), rtol=1e-10)
        assert new.received == 0


def test_random_observations_ranks():
    H_list = random_observations(np.random.default_rng(0), 10, (3, 7))
    assert [H.shape for H in H_list] == [(3, 10), (7, 10)]


def test_simulate_local_only():
    H_list = random_observations(np.random.default_rng(1), 5, (2, 3))
    run = simulate_exchange(H_list, [0.3, 0.3], 0.8 * np.eye(5), 0.2 * np.eye(5), np.eye(5), K=0, gamma=0.0, T=4)
    assert run.per_node_mse.shape == (4, 2)
    assert_allclose(run.utility, 0.0)
    P = 0.64 * np.eye(5) + 0.2 * np.eye(5)
    assert_allclose(run.per_node_mse[0, 0], np.trace(filtered_covariance(P, H_list[0], 0.3)))
    assert_allclose(run.total_mse, run.per_node_mse.sum(axis=1))


def test_exchange_never_hurts_total_mse():
    H_list = random_observations(np.random.default_rng(2), 6, (2, 4, 1))
    args = ([0.3] * 3, 0.8 * np.eye(6), 0.2 * np.eye(6), np.eye(6))
    local = simulate_exchange(H_list, *args, K=0, gamma=0.0, T=5)
    shared = simulate_exchange(H_list, *args, K=4, gamma=10.0, T=5)
    assert np.all(shared.per_node_mse <= local.per_node_mse + 1e-10)
