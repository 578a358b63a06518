import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from advfl import adversary as adv
from advfl import datagen, engine, seeding


def _ctx(t=0, sampled=(), theta=None):
    return adv.RoundContext(t, theta, np.asarray(sampled), {}, None, [])


def test_budget_threshold():
    b = adv.DropoutBudget(0.4, 10, [1] * 20)
    assert b.threshold == pytest.approx(4.0)
    assert b.realized([0, 1]) == pytest.approx(0.2)
    with pytest.raises(ValueError):
        adv.DropoutBudget(1.0, 10, [1] * 20)


def test_no_dropout(rng):
    S = np.arange(10)
    b = adv.DropoutBudget(0.5, 10, [1] * 20)
    out = adv.select_dropouts(adv.NoDropout(), S, b, _ctx(sampled=S), rng)
    assert out.tolist() == S.tolist()


def test_static_set_balanced_drops_at_most_eps_k(rng):
    M, K, eps = 20, 10, 0.3
    b = adv.DropoutBudget(eps, K, [1] * M)
    strat = adv.StaticSet.from_hidden_set(range(10), M)
    for t in range(200):
        S = engine.sample_clients(M, K, rng)
        kept = adv.select_dropouts(strat, S, b, _ctx(t, S), rng)
        dropped = set(S.tolist()) - set(kept.tolist())
        assert dropped == set(sorted(i for i in S.tolist() if i >= 10)[:3])


def test_static_priority_order(rng):
    b = adv.DropoutBudget(0.2, 10, [1] * 10)
    strat = adv.StaticSet([7, 2, 5])
    S = np.arange(10)
    kept = adv.select_dropouts(strat, S, b, _ctx(0, S), rng)
    assert sorted(set(range(10)) - set(kept.tolist())) == [2, 7]


def test_random_set_with_shared_mask(rng):
    M, K = 8, 8
    b = adv.DropoutBudget(0.5, K, [1] * M)
    strat = adv.RandomSet(4, M, mask_seed=11)
    for t in range(20):
        S = np.arange(M)
        kept = adv.select_dropouts(strat, S, b, _ctx(t, S), rng)
        assert kept.tolist() == seeding.round_subset(11, t, M, 4).tolist()


def test_random_set_uses_adversary_stream_without_seed():
    M = 10
    b = adv.DropoutBudget(0.3, M, [1] * M)
    strat = adv.RandomSet(7, M)
    S = np.arange(M)
    a = adv.select_dropouts(strat, S, b, _ctx(0, S), np.random.default_rng(5))
    c = adv.select_dropouts(strat, S, b, _ctx(0, S), np.random.default_rng(5))
    assert a.tolist() == c.tolist() and len(a) == 7


def test_cheating_strategy_is_caught(rng):
    class Greedy:
        kind = "greedy"

        def drop(self, sampled, budget, context, rng):
            return list(sampled)

    b = adv.DropoutBudget(0.5, 4, [1] * 4)
    with pytest.raises(adv.BudgetViolation):
        adv.select_dropouts(Greedy(), np.arange(4), b, _ctx(0, np.arange(4)), rng)


def _cands(C1, C2=()):
    return adv.ShadowCandidates(tuple(C1), tuple(C2), 5, 150)


def test_shadow_select_examples(rng):
    b = adv.DropoutBudget(0.8, 10, [1] * 30)
    S = np.arange(10)
    assert adv.shadow_select(S, _cands(range(20, 30)), b, rng).tolist() == S.tolist()
    kept = adv.shadow_select(S, _cands(range(10)), b, rng)
    assert len(kept) == 2
    b0 = adv.DropoutBudget(0.0, 10, [1] * 30)
    assert adv.shadow_select(S, _cands(range(10)), b0, rng).tolist() == S.tolist()


def test_shadow_select_keeps_one(rng):
    b = adv.DropoutBudget(0.99, 3, [1] * 3)
    for _ in range(20):
        assert len(adv.shadow_select(np.arange(3), _cands(range(3)), b, rng)) == 1


def test_candidates_must_be_disjoint():
    with pytest.raises(ValueError):
        _cands([1, 2], [2, 3])


def _brute(S, grads, w, budget):
    best, best_norm = [], -1.0
    for r in range(len(S)):
        for D in itertools.combinations(range(len(S)), r):
            if not budget.allows(budget.volume([S[i] for i in D])):
                continue
            v = sum((w[S[i]] * grads[i] for i in D), np.zeros(grads.shape[1]))
            n = float(np.linalg.norm(v))
            if n > best_norm + 1e-12:
                best, best_norm = [S[i] for i in D], n
    return sorted(best), best_norm


def test_worst_case_examples():
    w = np.full(3, 1 / 3)
    grads = np.array([[1.0, 0.0], [3.0, 0.0], [2.0, 0.0]])
    S = np.arange(3)
    assert adv.worst_case_subset(S, grads, w, adv.DropoutBudget(0.0, 3, [1] * 3)) == []
    assert adv.worst_case_subset(S, grads, w, adv.DropoutBudget(2 / 3, 3, [1] * 3)) == [1, 2]
    only = adv.DropoutBudget(0.5, 3, [5, 1, 5])
    assert adv.worst_case_subset(S, grads, w, only) == [1]
    with pytest.raises(ValueError):
        adv.worst_case_subset(np.arange(21), np.ones((21, 1)), np.ones(21) / 21,
                              adv.DropoutBudget(0.1, 21, [1] * 21))


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 10_000), k=st.integers(1, 7), eps=st.floats(0, 0.95))
def test_worst_case_matches_brute_force(seed, k, eps):
    rng = np.random.default_rng(seed)
    M = k + 3
    sizes = rng.integers(1, 5, M)
    w = sizes / sizes.sum()
    S = np.sort(rng.choice(M, k, replace=False))
    grads = rng.standard_normal((k, 3))
    b = adv.DropoutBudget(eps, k, sizes)
    D = adv.worst_case_subset(S, grads, w, b)
    assert b.allows(b.volume(D)) and len(D) <= k - 1
    idx = np.searchsorted(S, D)
    got = float(np.linalg.norm(w[D] @ grads[idx])) if D else 0.0
    _, best = _brute(S.tolist(), grads, w, b)
    assert got == pytest.approx(max(best, 0.0), abs=1e-12)


def test_shadow_candidates_construction():
    inst = datagen.quadratic_family(12, 1.0, 1.0, 0.5, np.random.default_rng(0))
    cfg = adv.ShadowConfig(T1=2, T2=10, K1=4, K2=3)
    c = adv.build_shadow_candidates(inst, cfg, regular_seed=0)
    assert len(c.C1) == 4 and len(c.C2) == 3 and len(c.C) == 7
    assert adv.build_shadow_candidates(inst, cfg, regular_seed=77) == c
    full = adv.build_shadow_candidates(inst, adv.ShadowConfig(T1=2, T2=10, K1=12, K2=0))
    assert full.C == frozenset(range(12))


def test_shadow_defaults_and_errors():
    cfg = adv.ShadowConfig()
    assert (cfg.T1, cfg.T2, cfg.K1, cfg.K2) == (5, 150, 25, 10)
    inst = datagen.quadratic_family(4, 1.0, 1.0, 0.0, np.random.default_rng(0))
    with pytest.raises(ValueError):
        adv.build_shadow_candidates(inst, adv.ShadowConfig(T1=1, T2=5, horizon=5))
    with pytest.raises(ValueError):
        adv.build_shadow_candidates(inst, adv.ShadowConfig(T2=5), regular_seed=1001)
    with pytest.raises(ValueError):
        adv.build_shadow_candidates(inst, adv.ShadowConfig(T2=5, seed_a=3, seed_b=3))


def test_shadow_ties_break_by_id():
    inst = datagen.quadratic_family(6, 1.0, 0.0, 0.0, np.random.default_rng(0))
    c = adv.build_shadow_candidates(inst, adv.ShadowConfig(T1=1, T2=4, K1=2, K2=2))
    assert c.C1 == (0, 1) and c.C2 == (2, 3)


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 1000), kind=st.sampled_from(["static", "random", "shadow", "oracle"]),
       eps=st.floats(0.0, 0.9))
def test_budget_holds_over_runs(seed, kind, eps):
    rng = np.random.default_rng(seed)
    M, K = 10, 6
    sizes = rng.integers(1, 20, M)
    inst = datagen.quadratic_family(M, 1.0, 1.0, 0.3, rng, sizes=sizes)
    a = engine.AdversaryConfig(kind, eps, shadow=adv.ShadowConfig(T1=1, T2=3, K1=3, K2=2))
    res = engine.run(engine.RunConfig(inst, "fedavg", beta=2.0, s=2, T=15, K=K, seed=seed, adversary=a))
    b = adv.DropoutBudget(eps, K, sizes)
    for r in res.trajectory:
        dropped = set(r.sampled_set) - set(r.participating_set)
        assert set(r.participating_set) <= set(r.sampled_set)
        assert len(r.participating_set) >= 1
        assert b.allows(b.volume(sorted(dropped)))
        assert 0 <= r.eps_realized <= eps * (1 + 1e-12)
