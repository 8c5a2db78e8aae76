"""Trace replay: authoritative cache state, hit accounting, periodic retraining.

A run replays the warm-up segment first (the cache operates and the predictor
trains, but those hits are excluded from headline metrics) and then the test
segment. Window boundaries at multiples of phi hours trigger the learn step:
the feature database rolls, the network trains on the emitted batches, the
popularity snapshot is refreshed, and the policy rebuilds its queue. Boundary
detection is first-crossing on real-valued timestamps.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .evonet import HyperParams, Network, default_widths
from .features import FeatureDatabase
from .policies import (BeladyPolicy, LeCaRPolicy, LFUPolicy, LRUPolicy,
                       PolicyDecision, PopularityPolicy, PredictorHandle)
from .trace import Catalog, Request


class InvariantViolation(AssertionError):
    """A policy disagreed with the authoritative cache state."""


@dataclass
class CacheState:
    """Authoritative cached-id set; capacity is in unit-sized contents."""

    capacity: int
    cached: set = field(default_factory=set)

    @property
    def occupancy(self) -> int:
        return len(self.cached)

    def transition(self, decision: PolicyDecision, content_id: str):
        if decision.hit:
            if content_id not in self.cached:
                raise InvariantViolation(f"hit reported for uncached {content_id!r}")
            return
        if decision.victim is not None:
            if decision.victim not in self.cached:
                raise InvariantViolation(f"victim {decision.victim!r} was not cached")
            self.cached.remove(decision.victim)
        if content_id in self.cached:
            raise InvariantViolation(f"duplicate insert of {content_id!r}")
        self.cached.add(content_id)
        if self.occupancy > self.capacity:
            raise InvariantViolation(
                f"occupancy {self.occupancy} exceeds capacity {self.capacity}"
            )


@dataclass
class SimConfig:
    policy: str = "lru"
    cache_percentage: float = 1.0  # percent of unique contents; s = ceil(p/100 * C)
    cache_size: int | None = None  # explicit capacity overrides the percentage
    phi_hours: float = 1.0
    warmup_hours: float = 168.0
    # network
    depth: int = 3
    first_width: int = 64
    last_width: int = 16
    batch_size: int = 128
    epochs_per_retrain: int = 1  # passes over each window's batches
    beta: float = 0.99
    kappa: float = 100.0
    zeta: float = 0.1
    eta: float = 10.0
    grad_clip: float = 10.0
    reset_hidden_on_retrain: bool = False
    # policy knobs
    cold_start_fraction: float = 0.0
    lecar_learning_rate: float = 0.45
    lecar_discount_base: float = 0.005
    oracle_predictor: bool = False  # ground-truth next-window counts instead of the net
    # seeds
    seed: int = 0

    def capacity_for(self, n_contents: int) -> int:
        if self.cache_size is not None:
            return max(1, int(self.cache_size))
        return max(1, int(np.ceil(self.cache_percentage / 100.0 * n_contents)))

    def validate(self):
        if self.phi_hours <= 0:
            raise ValueError("phi_hours must be > 0")
        if self.warmup_hours < 0:
            raise ValueError("warmup_hours must be >= 0")
        if self.cache_size is None and self.cache_percentage <= 0:
            raise ValueError("cache_percentage must be > 0")
        if self.epochs_per_retrain < 1:
            raise ValueError("epochs_per_retrain must be >= 1")


@dataclass
class SimResult:
    policy: str
    capacity: int
    test_requests: int
    test_hits: int
    warmup_requests: int
    warmup_hits: int
    cold_misses: int
    capacity_misses: int
    evictions: int
    window_hits: list  # per-window (requests, hits), test windows only
    all_window_hits: list  # per-window (requests, hits) including warm-up
    alpha_history: list  # (window index, alpha vector) per retrain
    loss_history: list  # (window index, batch index, combined loss)
    wallclock_replay: float = 0.0
    wallclock_train: float = 0.0

    @property
    def hit_rate(self) -> float:
        return self.test_hits / self.test_requests if self.test_requests else 0.0

    @property
    def warmup_hit_rate(self) -> float:
        return self.warmup_hits / self.warmup_requests if self.warmup_requests else 0.0

    @property
    def overall_hit_rate(self) -> float:
        total = self.test_requests + self.warmup_requests
        return (self.test_hits + self.warmup_hits) / total if total else 0.0


def window_boundaries(requests: list[Request], phi_hours: float) -> list[int]:
    """Request positions at which processing first crosses a phi boundary."""
    if phi_hours <= 0:
        raise ValueError("phi_hours must be > 0")
    phi = phi_hours * 3600.0
    positions = []
    boundary = phi
    for k, r in enumerate(requests):
        while r.timestamp >= boundary:
            positions.append(k)
            boundary += phi
    return positions


def _oracle_counts(requests, phi_seconds):
    """Per-window request counts, for the ground-truth lookahead predictor."""
    counts: dict[int, dict[str, int]] = {}
    for r in requests:
        w = int(r.timestamp // phi_seconds)
        counts.setdefault(w, {}).setdefault(r.content_id, 0)
        counts[w][r.content_id] += 1
    return counts


def build_network(config: SimConfig, input_dim: int, fingerprint: str = "",
                  recurrent: bool = True) -> Network:
    hyper = HyperParams(beta=config.beta, kappa=config.kappa, zeta=config.zeta,
                        eta=config.eta, grad_clip=config.grad_clip)
    widths = default_widths(config.depth, config.first_width, config.last_width)
    return Network(widths, input_dim, hyper, seed=config.seed,
                   recurrent=recurrent, schema_fingerprint=fingerprint)


def run_simulation(catalog: Catalog, requests: list[Request], config: SimConfig) -> SimResult:
    """Replay a full trace under one policy; deterministic given the config seed."""
    config.validate()
    if not requests:
        raise ValueError("empty trace")
    capacity = config.capacity_for(len(catalog))
    phi_seconds = config.phi_hours * 3600.0
    warmup_cutoff = config.warmup_hours * 3600.0

    learned = config.policy in ("pa", "pa-fnn") and not config.oracle_predictor
    predictive = config.policy in ("pa", "pa-fnn")

    predictor = PredictorHandle()
    db = net = None
    oracle = None
    if predictive:
        if config.oracle_predictor:
            oracle = _oracle_counts(requests, phi_seconds)
            predictor.update({cid: float(c) for cid, c in oracle.get(0, {}).items()})
        else:
            db = FeatureDatabase(catalog, config.phi_hours,
                                 batch_size=config.batch_size,
                                 history_windows=max(1, int(round(7 * 24 / config.phi_hours))),
                                 shuffle_seed=config.seed)
            net = build_network(config, db.schema.dim, db.schema.fingerprint(),
                                recurrent=(config.policy == "pa"))

    if config.policy == "lru":
        policy = LRUPolicy(capacity)
    elif config.policy == "lfu":
        policy = LFUPolicy(capacity)
    elif config.policy == "lecar":
        policy = LeCaRPolicy(capacity, learning_rate=config.lecar_learning_rate,
                             discount_base=config.lecar_discount_base, seed=config.seed)
    elif config.policy == "belady":
        policy = BeladyPolicy(capacity, requests)
    elif predictive:
        policy = PopularityPolicy(capacity, predictor,
                                  cold_start_fraction=config.cold_start_fraction)
    else:
        raise ValueError(f"unknown policy {config.policy!r}")

    state = CacheState(capacity)
    seen: set[str] = set()
    test_hits = test_requests = warmup_hits = warmup_requests = 0
    cold_misses = capacity_misses = evictions = 0
    window_hits: list[tuple[int, int]] = []
    all_window_hits: list[tuple[int, int]] = []
    alpha_history: list[tuple[int, list[float]]] = []
    loss_history: list[tuple[int, int, float]] = []
    cur_req = cur_hit = 0
    window_is_test = warmup_cutoff <= 0
    window_index = 0
    train_time = 0.0
    t0 = time.perf_counter()

    def close_current_window():
        nonlocal window_index, cur_req, cur_hit, window_is_test, train_time
        all_window_hits.append((cur_req, cur_hit))
        if window_is_test:
            window_hits.append((cur_req, cur_hit))
        cur_req = cur_hit = 0
        window_index += 1
        if predictive:
            t1 = time.perf_counter()
            if config.oracle_predictor:
                predictor.update(
                    {cid: float(c) for cid, c in oracle.get(window_index, {}).items()}
                )
            else:
                batches = db.close_window()
                if config.reset_hidden_on_retrain:
                    net.reset_hidden()
                bi = 0
                for _ in range(config.epochs_per_retrain):
                    for batch in batches:
                        diag = net.train_step(batch)
                        loss_history.append((window_index, bi, diag.combined_loss))
                        bi += 1
                alpha_history.append((window_index, net.alpha.tolist()))
                ids, x = db.serving_features()
                if ids:
                    preds = net.predict(x)
                    predictor.update({cid: float(p) for cid, p in zip(ids, preds)})
            train_time += time.perf_counter() - t1
        policy.notify_window(window_index)

    boundary = phi_seconds
    for r in requests:
        while r.timestamp >= boundary:
            close_current_window()
            boundary += phi_seconds
            window_is_test = boundary - phi_seconds >= warmup_cutoff
        if learned:
            db.observe_request(r)
        decision = policy.on_request(r.content_id, r.timestamp)
        if decision.hit != (r.content_id in state.cached):
            raise InvariantViolation(
                f"policy {policy.name} disagrees with authoritative state on {r.content_id!r}"
            )
        was_full = state.occupancy >= capacity
        state.transition(decision, r.content_id)
        if r.timestamp >= warmup_cutoff:
            test_requests += 1
            test_hits += decision.hit
        else:
            warmup_requests += 1
            warmup_hits += decision.hit
        if not decision.hit:
            if r.content_id in seen:
                capacity_misses += 1
            else:
                cold_misses += 1
            if decision.victim is not None:
                evictions += 1
            elif was_full:
                raise InvariantViolation("miss on a full cache produced no victim")
        seen.add(r.content_id)
        cur_req += 1
        cur_hit += decision.hit
    all_window_hits.append((cur_req, cur_hit))
    if requests[-1].timestamp >= warmup_cutoff:
        window_hits.append((cur_req, cur_hit))

    replay_time = time.perf_counter() - t0 - train_time
    return SimResult(
        policy=config.policy,
        capacity=capacity,
        test_requests=test_requests,
        test_hits=test_hits,
        warmup_requests=warmup_requests,
        warmup_hits=warmup_hits,
        cold_misses=cold_misses,
        capacity_misses=capacity_misses,
        evictions=evictions,
        window_hits=window_hits,
        all_window_hits=all_window_hits,
        alpha_history=alpha_history,
        loss_history=loss_history,
        wallclock_replay=replay_time,
        wallclock_train=train_time,
    )
