import dataclasses

import numpy as np
import pytest

from evocache.policies import PolicyDecision
from evocache.simulator import (CacheState, InvariantViolation, SimConfig,
                                run_simulation, window_boundaries)
from evocache.trace import (Catalog, ContentMeta, Request,
                            SyntheticTraceConfig, generate_zipf_trace)


def make_catalog(ids):
    cat = Catalog()
    for cid in ids:
        cat.add(ContentMeta(content_id=cid, publish_time=-1.0, type="movie",
                            area="cn", language="mandarin", length=90.0,
                            score=7.0, comment_count=5, director="d",
                            performer="p"))
    return cat


def make_requests(cat, ids_times):
    return [Request(cid, float(t), cat.index[cid]) for cid, t in ids_times]


# --- transition ---------------------------------------------------------

def test_transition_hit_leaves_state_unchanged():
    s = CacheState(2, {"A", "B"})
    s.transition(PolicyDecision(hit=True), "A")
    assert s.cached == {"A", "B"}


def test_transition_miss_with_victim():
    s = CacheState(2, {"A", "B"})
    s.transition(PolicyDecision(hit=False, victim="B"), "C")
    assert s.cached == {"A", "C"}


def test_transition_fill_phase():
    s = CacheState(2, {"A"})
    s.transition(PolicyDecision(hit=False), "B")
    assert s.cached == {"A", "B"} and s.occupancy == 2


def test_transition_rejects_bad_decisions():
    with pytest.raises(InvariantViolation):
        CacheState(2, {"A"}).transition(PolicyDecision(hit=True), "B")
    with pytest.raises(InvariantViolation):
        CacheState(2, {"A"}).transition(PolicyDecision(hit=False, victim="Z"), "B")
    with pytest.raises(InvariantViolation):
        CacheState(2, {"A", "B"}).transition(PolicyDecision(hit=False), "C")


# --- window boundaries ----------------------------------------------------

def test_boundaries_single_crossing():
    reqs = [Request("a", t, 0) for t in (0.0, 1800.0, 3600.0, 5400.0)]
    assert window_boundaries(reqs, 1.0) == [2]


def test_boundaries_phi_beyond_span():
    reqs = [Request("a", t, 0) for t in (0.0, 100.0)]
    assert window_boundaries(reqs, 10.0) == []


def test_boundaries_empty_window_fires_repeatedly():
    # nothing arrives in hour 2: the request at 3 h crosses two boundaries
    reqs = [Request("a", t, 0) for t in (0.0, 3600.0, 3600.0 * 3)]
    assert window_boundaries(reqs, 1.0) == [1, 2, 2]


def test_boundaries_validation():
    with pytest.raises(ValueError):
        window_boundaries([], 0.0)


# --- config -----------------------------------------------------------

def test_capacity_from_percentage():
    assert SimConfig(cache_percentage=1.0).capacity_for(10_000) == 100
    assert SimConfig(cache_percentage=0.001).capacity_for(100) == 1  # floor of 1
    assert SimConfig(cache_size=7, cache_percentage=50.0).capacity_for(100) == 7


def test_config_validation():
    with pytest.raises(ValueError):
        SimConfig(phi_hours=0.0).validate()
    with pytest.raises(ValueError):
        SimConfig(warmup_hours=-1.0).validate()
    with pytest.raises(ValueError):
        SimConfig(cache_percentage=0.0).validate()
    with pytest.raises(ValueError):
        SimConfig(epochs_per_retrain=0).validate()


# --- run_simulation -----------------------------------------------------

def smoke_trace(seed=0, n_contents=40, n_requests=3000, hours=10):
    cfg = SyntheticTraceConfig(
        n_contents=n_contents, n_requests=n_requests, zipf_alpha=0.8,
        mean_interarrival=hours * 3600.0 / n_requests, rng_seed=seed)
    return generate_zipf_trace(cfg)


def test_hit_rate_arithmetic():
    cat = make_catalog("AB")
    reqs = make_requests(cat, [("A", i) for i in range(7)] + [("B", 7), ("B", 8), ("B", 9)])
    res = run_simulation(cat, reqs, SimConfig(policy="lru", cache_size=1,
                                              warmup_hours=0.0))
    assert res.test_requests == 10
    assert res.test_hits == 8
    assert res.hit_rate == 0.8


def test_capacity_never_binds_only_cold_misses():
    cat, reqs = smoke_trace()
    res = run_simulation(cat, reqs, SimConfig(policy="lru", cache_size=1000,
                                              warmup_hours=0.0))
    distinct = len({r.content_id for r in reqs})
    assert res.test_hits == len(reqs) - distinct
    assert res.cold_misses == distinct
    assert res.capacity_misses == 0 and res.evictions == 0


def test_conservation_identities():
    cat, reqs = smoke_trace(seed=3)
    for policy in ("lru", "lfu", "lecar", "belady", "pa"):
        res = run_simulation(cat, reqs, SimConfig(
            policy=policy, cache_size=5, warmup_hours=2.0, phi_hours=1.0,
            depth=2, first_width=8, last_width=4))
        total = res.test_requests + res.warmup_requests
        hits = res.test_hits + res.warmup_hits
        assert total == len(reqs)
        assert hits + res.cold_misses + res.capacity_misses == total
        assert sum(r for r, _ in res.all_window_hits) == total
        assert sum(h for _, h in res.all_window_hits) == hits
        assert sum(r for r, _ in res.window_hits) == res.test_requests
        assert sum(h for _, h in res.window_hits) == res.test_hits
        assert 0.0 <= res.hit_rate <= 1.0


def test_warmup_excluded_from_headline():
    cat = make_catalog("AB")
    # warm-up: 3 requests in hour 0; test: 3 in hour 1
    reqs = make_requests(cat, [("A", 0), ("A", 1), ("A", 2),
                               ("A", 3600), ("A", 3601), ("B", 3602)])
    res = run_simulation(cat, reqs, SimConfig(policy="lru", cache_size=2,
                                              warmup_hours=1.0))
    assert (res.warmup_requests, res.warmup_hits) == (3, 2)
    assert (res.test_requests, res.test_hits) == (3, 2)
    assert res.overall_hit_rate == pytest.approx(4 / 6)


def test_deterministic_repeat():
    cat, reqs = smoke_trace(seed=5, n_contents=60)
    cfg = SimConfig(policy="pa", cache_size=6, warmup_hours=3.0, phi_hours=1.0,
                    depth=2, first_width=8, last_width=4, eta=1.0, seed=2)
    a = run_simulation(cat, reqs, cfg)
    b = run_simulation(cat, reqs, dataclasses.replace(cfg))
    for f in ("test_hits", "warmup_hits", "cold_misses", "capacity_misses",
              "evictions", "window_hits", "alpha_history", "loss_history"):
        assert getattr(a, f) == getattr(b, f)


def test_belady_monotone_in_capacity():
    cat, reqs = smoke_trace(seed=7)
    rates = [run_simulation(cat, reqs, SimConfig(policy="belady", cache_size=s,
                                                 warmup_hours=0.0)).hit_rate
             for s in (2, 5, 10, 20)]
    assert all(a <= b + 1e-12 for a, b in zip(rates, rates[1:]))


def test_oracle_pa_beats_lru_on_shifting_popularity():
    cfg = SyntheticTraceConfig(n_contents=200, n_requests=20_000,
                               zipf_alpha=1.0, reshuffle_period=2.0,
                               mean_interarrival=3600.0 * 12 / 20_000, rng_seed=4)
    cat, reqs = generate_zipf_trace(cfg)
    base = SimConfig(cache_size=10, warmup_hours=2.0, phi_hours=1.0)
    pa = run_simulation(cat, reqs, dataclasses.replace(
        base, policy="pa", oracle_predictor=True))
    lru = run_simulation(cat, reqs, dataclasses.replace(base, policy="lru"))
    belady = run_simulation(cat, reqs, dataclasses.replace(base, policy="belady"))
    assert pa.hit_rate > lru.hit_rate
    assert pa.hit_rate <= belady.hit_rate + 1e-12


def test_learned_pa_trains_and_records_history():
    cat, reqs = smoke_trace(seed=9, n_contents=50, n_requests=4000, hours=8)
    res = run_simulation(cat, reqs, SimConfig(
        policy="pa", cache_size=5, warmup_hours=2.0, phi_hours=1.0,
        depth=2, first_width=8, last_width=4, eta=1.0, epochs_per_retrain=2))
    assert len(res.alpha_history) >= 6
    for _, alpha in res.alpha_history:
        assert sum(alpha) == pytest.approx(1.0)
    assert len(res.loss_history) > 0
    windows = {w for w, _, _ in res.loss_history}
    assert len(windows) >= 6


def test_pa_fnn_runs_without_recurrence():
    cat, reqs = smoke_trace(seed=11, n_contents=30, n_requests=1500, hours=4)
    res = run_simulation(cat, reqs, SimConfig(
        policy="pa-fnn", cache_size=4, warmup_hours=1.0, phi_hours=1.0,
        depth=2, first_width=8, last_width=4, eta=1.0))
    assert res.test_requests > 0
    assert 0.0 <= res.hit_rate <= 1.0


def test_empty_trace_rejected():
    cat = make_catalog("A")
    with pytest.raises(ValueError):
        run_simulation(cat, [], SimConfig())


def test_unknown_policy_rejected():
    cat = make_catalog("A")
    with pytest.raises(ValueError):
        run_simulation(cat, make_requests(cat, [("A", 0.0)]),
                       SimConfig(policy="mystery"))
