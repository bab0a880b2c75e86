import math

import numpy as np
import pytest

from leoqoe.allocator import (
    AllocationConfig,
    MctsNode,
    MctsParams,
    Problem,
    SimSettings,
    backpropagate,
    bandwidth_grid,
    baseline_sequential,
    capacity_cost,
    epsilon_schedule,
    evaluate,
    reward,
    reward_value,
    run_episode,
    train,
)
from leoqoe.routes import NoRouteError, RouteCandidate, enumerate_routes
from leoqoe.traffic import rng_for

import oracles
from oracles import flow, grid_adjacency, grid_delays, profile, simple_paths, topology

SIM = SimSettings(slot_s=1e-3, window_slots=300)


def toy_problem(seed=0, k=2, b_w=2, window=300):
    topo = topology(grid_delays(2, 2, 0.002))
    flows = [
        flow(0, (0, 0), (1, 1), profile("VC", "EF", throughput=(0.2, 0.6))),
        flow(1, (0, 1), (1, 0), profile("FT", "BE", (0.1, 0.8, 0.1), latency=(0.05, 0.5), throughput=(0.3, 0.7))),
    ]
    sim = SimSettings(slot_s=1e-3, window_slots=window)
    return Problem(flows, topo, sim, k_routes=k, b_w=b_w, seed=seed)


def brute_force_best(problem, lam):
    return max(reward(problem.config(c), problem, lam) for c in oracles.product_configs(problem))


# -- routes -------------------------------------------------------------

def test_single_edge_route():
    topo = topology(grid_delays(1, 2))
    routes = enumerate_routes(flow(0, (0, 0), (0, 1)), topo.to_digraph(), 4)
    assert [r.nodes for r in routes] == [((0, 0), (0, 1))]


def test_two_by_two_diagonal_has_two_routes():
    topo = topology(grid_delays(2, 2))
    routes = enumerate_routes(flow(0, (0, 0), (1, 1)), topo.to_digraph(), 4)
    expected = simple_paths(grid_adjacency(2, 2), (0, 0), (1, 1))
    assert sorted(r.nodes for r in routes) == sorted(expected)
    assert all(r.hop_count == 2 for r in routes)


def test_corner_to_corner_shortest_first():
    topo = topology(grid_delays(4, 4, 0.002))
    routes = enumerate_routes(flow(0, (0, 0), (3, 3)), topo.to_digraph(), 3, slot_s=1e-3)
    paths = simple_paths(grid_adjacency(4, 4), (0, 0), (3, 3))
    shortest = min(len(p) for p in paths) - 1
    assert len(routes) == 3
    assert all(r.hop_count >= 6 for r in routes)
    assert all(r.nodes in paths for r in routes)
    assert routes[0].hop_count == shortest
    assert routes[0].fixed_delay(1e-3) == pytest.approx(6 * 0.003)


def test_disconnected_endpoints():
    topo = topology({("a", "b"): 0.001, ("c", "d"): 0.001})
    with pytest.raises(NoRouteError):
        enumerate_routes(flow(0, "a", "d"), topo.to_digraph(), 2)


# -- pure formulas -------------------------------------------------------

def test_bandwidth_grid():
    f = flow(0, "a", "b", profile(throughput=(0.1, 0.5)))
    assert bandwidth_grid(f, 5) == pytest.approx([0.1, 0.2, 0.3, 0.4, 0.5], rel=1e-9)
    assert bandwidth_grid(f, 2) == [0.1, 0.5]
    with pytest.raises(ValueError):
        bandwidth_grid(f, 1)


def _cfg(loads):
    routes, bws = {}, {}
    for i, (nodes, bw) in enumerate(loads):
        routes[i] = RouteCandidate(i, tuple(nodes), (0.001,) * (len(nodes) - 1))
        bws[i] = bw
    return AllocationConfig(routes, bws)


def test_capacity_cost_examples():
    assert capacity_cost(_cfg([("ab", 0.4), ("ab", 0.5)])) == 0
    assert capacity_cost(_cfg([("ab", 0.7), ("ab", 0.8)])) == pytest.approx(0.5, rel=1e-9)
    assert capacity_cost(_cfg([("ab", 0.6), ("ab", 0.6), ("cd", 0.7), ("cd", 0.6)])) == pytest.approx(0.5, rel=1e-9)
    assert capacity_cost(_cfg([("ab", 3.0)]), capacity=2.0) == pytest.approx(0.5, rel=1e-9)


def test_reward_arithmetic():
    assert reward_value(0.8, 0.5, 0.4) == pytest.approx(0.6, rel=1e-9)
    assert reward_value(0.73, 0.0, 9.0) == 0.73
    assert reward_value(1.0, 0.0, 1.0) == 1.0


def test_epsilon_schedule():
    p = MctsParams(epsilon_0=0.5, a_0=100, b_0=10, epsilon_min=0.05)
    assert epsilon_schedule(0, p) == pytest.approx(0.5, rel=1e-9)
    assert epsilon_schedule(9900, p) == 0.05
    assert epsilon_schedule(500, p) == pytest.approx(1 - 0.5 * math.log10(15), rel=1e-9)
    with pytest.raises(ValueError):
        epsilon_schedule(-1, p)


def test_backpropagate_max_semantics():
    a, b, c = MctsNode(), MctsNode(), MctsNode()
    a.q_value, b.q_value = 0.7, 0.5
    backpropagate([a, b, c], 0.6)
    assert (a.q_value, b.q_value, c.q_value) == (0.7, 0.6, 0.6)


# -- search -------------------------------------------------------------

def test_toy_leaf_space_is_sixteen():
    assert toy_problem().leaf_count() == 16


def test_reward_cache_reuses_evaluations():
    pb = toy_problem()
    c = pb.config({0: (0, 0), 1: (1, 1)})
    r1 = reward(c, pb)
    n = pb.evaluations
    assert reward(c, pb) == r1 and pb.evaluations == n


def test_all_max_scores_give_reward_one():
    pb = toy_problem()
    for c in oracles.product_configs(pb):
        ev = evaluate(pb.config(c), pb)
        if ev.cost == 0 and all(s == 5 for s in ev.scores.values()):
            assert reward_value(ev.objective, ev.cost, 1.0) == pytest.approx(1.0)


def test_greedy_episode_follows_argmax_path():
    pb = toy_problem()
    params = MctsParams(episodes=1)
    root = MctsNode()
    rng = rng_for(0, "t")
    for c in oracles.product_configs(pb):
        run_episode(root, params, pb, rng, 0.0, forced=c)
    top = max(n.q_value for n in _leaves(root))
    cfg, value, _ = run_episode(root, params, pb, rng, 0.0)
    assert value == top == root.q_value
    node = root
    for fid, action in sorted(cfg.choices.items(), key=lambda kv: [f.id for f in pb.flows].index(kv[0])):
        assert node.q_value == top
        node = node.children[action]


def _leaves(node):
    if not node.children:
        yield node
    for ch in node.children.values():
        yield from _leaves(ch)


def test_full_exploration_is_uniform():
    pb = toy_problem()
    root = MctsNode()
    rng = rng_for(1, "u")
    counts = {}
    for _ in range(3200):
        cfg, _, _ = run_episode(root, MctsParams(), pb, rng, 1.0)
        key = tuple(sorted(cfg.choices.items()))
        counts[key] = counts.get(key, 0) + 1
    assert len(counts) == 16
    assert all(abs(n - 200) < 5 * math.sqrt(200) for n in counts.values())


def test_train_finds_brute_force_optimum():
    pb = toy_problem()
    best = brute_force_best(pb, 1.0)
    res = train(pb, MctsParams(episodes=200), seed=3)
    assert res.best_reward == pytest.approx(best, abs=1e-12)
    assert len(res.trace) == 200
    assert np.all(np.diff([r.epsilon for r in res.trace]) <= 0)


def test_train_trivial_instance():
    topo = topology(grid_delays(1, 2))
    pb = Problem([flow(0, (0, 0), (0, 1))], topo, SIM, k_routes=1, b_w=2)
    pb.grids[0] = [0.3]
    res = train(pb, MctsParams(episodes=1), seed=0)
    assert res.best.choices == {0: (0, 0)}
    assert len(res.trace) == 1


def test_warm_start_is_first_episode():
    pb = toy_problem()
    warm = {0: (1, 1), 1: (0, 1)}
    res = train(pb, MctsParams(episodes=3), seed=0, warm_start=warm)
    assert res.trace[0].reward == reward(pb.config(warm), pb)


def test_train_deterministic():
    a = train(toy_problem(), MctsParams(episodes=60), seed=9)
    b = train(toy_problem(), MctsParams(episodes=60), seed=9)
    assert a.trace == b.trace and a.best.choices == b.best.choices


# -- baseline -------------------------------------------------------------

def test_baseline_single_flow_uses_first_candidate():
    pb = toy_problem()
    pb.flows = pb.flows[:1]
    pb.by_id = {0: pb.flows[0]}
    cfg = baseline_sequential(pb)
    assert cfg.routes[0].nodes == pb.candidates[0][0].nodes
    assert cfg.bandwidth[0] == pb.grids[0][-1]


def test_baseline_second_flow_gets_residual():
    topo = topology(oracles.bidirectional({("a", "b"): 0.001}))
    prof = profile("VC", "EF", throughput=(0.2, 0.8))
    flows = [flow(0, "a", "b", prof), flow(1, "a", "b", prof)]
    pb = Problem(flows, topo, SIM, k_routes=1, b_w=4)
    cfg = baseline_sequential(pb)
    assert cfg.bandwidth[0] == pytest.approx(0.8)
    assert cfg.bandwidth[1] == pytest.approx(0.2)  # residual 0.2 fits the smallest step


def test_baseline_serves_classes_in_order():
    topo = topology(oracles.bidirectional({("a", "b"): 0.001}))
    be = profile("FT", "BE", (0.1, 0.8, 0.1), latency=(0.1, 1.0), throughput=(0.2, 0.8))
    ef = profile("VC", "EF", throughput=(0.2, 0.8))
    # lower id is BE, yet EF is served first and gets the full link
    pb = Problem([flow(0, "a", "b", be), flow(1, "a", "b", ef)], topo, SIM, k_routes=1, b_w=4)
    cfg = baseline_sequential(pb)
    assert cfg.bandwidth[1] == pytest.approx(0.8)
    assert cfg.bandwidth[0] == pytest.approx(0.2)
