import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stochgreedy.core import InvalidInputError
from stochgreedy.refcheck import brute_force_opt
from stochgreedy.solvers import (
    ALGORITHMS,
    SolverConfig,
    draw_sample,
    lazy_greedy,
    naive_greedy,
    random_selection,
    sample_greedy,
    sample_size,
    stochastic_greedy,
    stochastic_greedy_lazy,
    threshold_greedy,
)

from instances import OBJECTIVE_FACTORIES, coverage, example_c, modular

RATIO = 1 - 1 / math.e


# --- configuration ----------------------------------------------------------

@pytest.mark.parametrize("n,k,eps,expected", [
    (100, 10, 0.1, 24),
    (10, 10, 0.9, 1),
    (10, 1, 1e-9, 10),
    (2000, 200, 0.01, 47),
])
def test_sample_size_examples(n, k, eps, expected):
    assert sample_size(n, k, eps) == expected


@pytest.mark.parametrize("kw", [
    {"k": -1}, {"k": 1.5}, {"k": 2, "epsilon": 0.0}, {"k": 2, "epsilon": 1.0},
    {"k": 2, "p": 0.0}, {"k": 2, "p": 1.5}, {"k": 2, "seed": -1}, {"k": 2, "tie_break": "random"},
])
def test_solver_config_validation(kw):
    with pytest.raises(InvalidInputError):
        SolverConfig(**kw)


@pytest.mark.parametrize("name", sorted(set(ALGORITHMS) - {"sample_greedy"}))
def test_k_larger_than_n_is_rejected(name):
    with pytest.raises(InvalidInputError):
        ALGORITHMS[name](example_c(), SolverConfig(k=5))


@pytest.mark.parametrize("name", sorted(ALGORITHMS))
def test_k_zero_gives_empty_solution(name):
    obj = example_c()
    sol = ALGORITHMS[name](obj, SolverConfig(k=0))
    assert sol.selected == [] and sol.total_cost == 0
    assert obj.counter.evaluations == 0


def test_draw_sample_is_sorted_distinct_and_seeded():
    R = draw_sample(range(50), 10, seed=3, iteration=2)
    assert R == sorted(set(R)) and len(R) == 10
    assert R == draw_sample(range(50), 10, seed=3, iteration=2)
    assert R != draw_sample(range(50), 10, seed=3, iteration=3)


# --- naive and lazy greedy --------------------------------------------------

def test_naive_greedy_example_c():
    sol = naive_greedy(example_c(), SolverConfig(k=2))
    assert sol.selected == [0, 1]
    assert sol.final_utility == 3.0
    assert sol.total_cost == 4 + 3


def test_naive_greedy_cost_formula():
    assert naive_greedy(modular([1, 2, 3, 4, 5]), SolverConfig(k=5)).total_cost == 15


def test_naive_greedy_k1_is_best_singleton():
    obj = coverage(9)
    best = max(range(obj.n), key=lambda e: (obj.value([e]), -e))
    assert naive_greedy(obj, SolverConfig(k=1)).selected == [best]


def test_lazy_greedy_example_c():
    sol = lazy_greedy(example_c(), SolverConfig(k=2))
    assert sol.selected == [0, 1] and sol.final_utility == 3.0
    assert sol.total_cost <= 7


@pytest.mark.parametrize("seed", range(5))
def test_lazy_greedy_modular_cost(seed):
    w = np.random.default_rng(seed).permutation(20) + 1
    for k in (1, 5, 20):
        assert lazy_greedy(modular(w), SolverConfig(k=k)).total_cost == 20 + k - 1


def test_lazy_greedy_ties_go_to_lowest_id():
    assert lazy_greedy(modular([1, 3, 3, 2, 3]), SolverConfig(k=2)).selected == [1, 2]
    assert naive_greedy(modular([1, 3, 3, 2, 3]), SolverConfig(k=2)).selected == [1, 2]


def test_lazy_matches_naive_on_random_coverage():
    rng = np.random.default_rng(0)
    for seed in range(100):
        n = int(rng.integers(5, 31))
        obj = coverage(seed, n=n, universe=int(rng.integers(5, 40)))
        cfg = SolverConfig(k=int(rng.integers(1, min(10, n) + 1)))
        naive, lazy = naive_greedy(obj, cfg), lazy_greedy(obj, cfg)
        assert lazy.selected == naive.selected
        assert lazy.total_cost <= naive.total_cost


@pytest.mark.parametrize("family", ["logdet", "facility", "penalty"])
def test_lazy_matches_naive_on_other_objectives(family):
    for seed in range(10):
        obj = OBJECTIVE_FACTORIES[family](seed)
        cfg = SolverConfig(k=min(5, obj.n))
        assert lazy_greedy(obj, cfg).selected == naive_greedy(obj, cfg).selected


# --- stochastic greedy ------------------------------------------------------

def test_stochastic_greedy_example_c_meets_bound():
    opt = brute_force_opt(example_c(), 2).opt_value
    hits = sum(
        stochastic_greedy(example_c(), SolverConfig(k=2, epsilon=0.1, seed=s)).final_utility
        >= (RATIO - 0.1) * opt
        for s in range(500)
    )
    assert hits >= 0.95 * 500


def test_stochastic_greedy_degenerates_to_greedy():
    for seed in range(20):
        obj = coverage(seed, n=20, universe=30)
        k = 4
        cfg = SolverConfig(k=k, epsilon=math.exp(-k), seed=seed)
        assert sample_size(obj.n, k, cfg.epsilon) == obj.n
        assert stochastic_greedy(obj, cfg).selected == naive_greedy(obj, cfg).selected


def test_stochastic_lazy_matches_plain():
    rng = np.random.default_rng(1)
    for trial in range(100):
        obj = coverage(trial, n=int(rng.integers(10, 31)))
        cfg = SolverConfig(k=int(rng.integers(1, 8)), epsilon=float(rng.uniform(0.01, 0.6)),
                           seed=int(rng.integers(2**32)))
        plain, lazy = stochastic_greedy(obj, cfg), stochastic_greedy_lazy(obj, cfg)
        assert lazy.selected == plain.selected
        assert lazy.final_utility == plain.final_utility
        assert lazy.total_cost <= plain.total_cost


def test_stochastic_lazy_k1_scores_whole_sample():
    obj = coverage(2, n=30)
    cfg = SolverConfig(k=1, epsilon=0.2, seed=4)
    assert stochastic_greedy_lazy(obj, cfg).total_cost == sample_size(30, 1, 0.2)


def test_stochastic_lazy_is_cheaper_on_modular():
    w = np.random.default_rng(3).permutation(200) + 1
    cfg = SolverConfig(k=20, epsilon=0.05, seed=1)
    plain, lazy = stochastic_greedy(modular(w), cfg), stochastic_greedy_lazy(modular(w), cfg)
    assert lazy.selected == plain.selected
    assert lazy.total_cost < plain.total_cost


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**32), k=st.integers(1, 12), eps=st.floats(0.001, 0.99))
def test_stochastic_cost_bound_property(seed, k, eps):
    obj = coverage(seed % 50, n=30, universe=25)
    sol = stochastic_greedy(obj, SolverConfig(k=k, epsilon=eps, seed=seed))
    assert sol.total_cost <= k * math.ceil(30 / k * math.log(1 / eps))
    # each round scores min(s, |V \ A|) elements
    assert sol.total_cost == sum(min(sample_size(30, k, eps), 30 - i) for i in range(k))
    assert len(set(sol.selected)) == k


# --- threshold greedy -------------------------------------------------------

def test_threshold_greedy_matches_naive_on_modular():
    rng = np.random.default_rng(5)
    for _ in range(50):
        n = int(rng.integers(3, 21))
        w = rng.choice(np.arange(1, 101), size=n, replace=False)
        cfg = SolverConfig(k=int(rng.integers(1, n + 1)), epsilon=0.005)
        assert threshold_greedy(modular(w), cfg).selected == naive_greedy(modular(w), cfg).selected


def test_threshold_greedy_example_c():
    sol = threshold_greedy(example_c(), SolverConfig(k=2, epsilon=0.1))
    assert sol.final_utility >= (RATIO - 0.1) * 3.0


@pytest.mark.parametrize("eps", [0.01, 0.3, 0.9])
def test_threshold_greedy_k_equals_n(eps):
    w = [5, 1, 4, 2, 3]
    assert sorted(threshold_greedy(modular(w), SolverConfig(k=5, epsilon=eps)).selected) == list(range(5))


def test_threshold_greedy_may_stop_short():
    # once {0} is taken nothing else has positive gain
    obj = modular([1.0, 0.0, 0.0])
    assert threshold_greedy(obj, SolverConfig(k=3, epsilon=0.1)).selected == [0]


def test_threshold_greedy_tiny_epsilon_terminates():
    sol = threshold_greedy(coverage(4, n=30), SolverConfig(k=10, epsilon=1e-12))
    assert len(sol.selected) <= 10


# --- sample greedy ----------------------------------------------------------

def test_sample_greedy_p1_is_lazy_greedy():
    obj = coverage(6, n=25)
    cfg = SolverConfig(k=6, p=1.0, seed=3)
    a, b = sample_greedy(obj, cfg), lazy_greedy(obj, cfg)
    assert (a.selected, a.total_cost) == (b.selected, b.total_cost)


def test_sample_greedy_clamps_to_subsample():
    obj = coverage(6, n=30)
    for seed in range(20):
        sol = sample_greedy(obj, SolverConfig(k=25, p=0.2, seed=seed))
        if sol.selected:
            assert len(sol.selected) < 25
            assert "smaller than k" in sol.warning


def test_sample_greedy_empty_subsample_warns():
    obj = example_c()
    seeds = [s for s in range(200) if not sample_greedy(obj, SolverConfig(k=2, p=0.05, seed=s)).selected]
    assert seeds
    sol = sample_greedy(obj, SolverConfig(k=2, p=0.05, seed=seeds[0]))
    assert sol.warning == "empty subsample" and sol.total_cost == 0


def test_sample_greedy_example_c_monte_carlo():
    runs = [sample_greedy(example_c(), SolverConfig(k=2, p=0.5, seed=s)) for s in range(500)]
    lazy = lazy_greedy(example_c(), SolverConfig(k=2))
    assert np.mean([r.final_utility for r in runs]) < naive_greedy(example_c(), SolverConfig(k=2)).final_utility
    assert np.mean([r.total_cost for r in runs]) < lazy.total_cost


def test_sample_greedy_subsamples_nest_in_p():
    obj = coverage(7, n=30)
    kept = []
    for p in (0.2, 0.5, 0.9):
        sol = sample_greedy(obj, SolverConfig(k=30, p=p, seed=11))
        kept.append(set(sol.selected))
    assert kept[0] <= kept[1] <= kept[2]


# --- random selection -------------------------------------------------------

@pytest.mark.parametrize("k", [1, 2, 7, 12])
def test_random_selection_costs_one(k):
    obj = coverage(8)
    sol = random_selection(obj, SolverConfig(k=k, seed=k))
    assert sol.total_cost == 1 and obj.counter.evaluations == 1
    assert sol.reporting_evals == k - 1
    assert sol.final_utility == obj.value(sol.selected)


def test_random_selection_k_equals_n():
    obj = coverage(8)
    sol = random_selection(obj, SolverConfig(k=obj.n, seed=2))
    assert sorted(sol.selected) == list(range(obj.n))
    assert sol.final_utility == obj.value(range(obj.n))


def test_random_selection_is_seeded():
    a = random_selection(coverage(1, n=30), SolverConfig(k=5, seed=9))
    b = random_selection(coverage(1, n=30), SolverConfig(k=5, seed=9))
    c = random_selection(coverage(1, n=30), SolverConfig(k=5, seed=10))
    assert a == b and a.selected != c.selected


# --- shared properties ------------------------------------------------------

@pytest.mark.parametrize("name", sorted(ALGORITHMS))
def test_solutions_are_deterministic_and_traces_consistent(name):
    cfg = SolverConfig(k=5, epsilon=0.2, p=0.7, seed=123)
    a = ALGORITHMS[name](OBJECTIVE_FACTORIES["facility"](3), cfg)
    b = ALGORITHMS[name](OBJECTIVE_FACTORIES["facility"](3), cfg)
    assert a == b
    assert len(a.utility_trace) == len(a.cost_trace) == len(a.selected)
    assert all(x <= y + 1e-12 for x, y in zip(a.utility_trace, a.utility_trace[1:]))
    assert all(x <= y for x, y in zip(a.cost_trace, a.cost_trace[1:]))
    if a.cost_trace:
        assert a.cost_trace[-1] == a.total_cost


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 1000), k=st.integers(1, 5))
def test_no_solver_beats_brute_force(seed, k):
    obj = coverage(seed, n=10, universe=15)
    opt = brute_force_opt(obj, k).opt_value
    cfg = SolverConfig(k=k, epsilon=0.3, p=0.6, seed=seed)
    for fn in ALGORITHMS.values():
        assert fn(obj, cfg).final_utility <= opt + 1e-12
    assert naive_greedy(obj, cfg).final_utility >= RATIO * opt - 1e-12
