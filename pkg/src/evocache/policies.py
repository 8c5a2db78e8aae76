"""Eviction policies behind a uniform contract.

Every policy exposes ``on_request(content_id, t) -> PolicyDecision`` and
``notify_window(step)``. Decisions carry the outcome (hit/miss) and, when a
full cache forces an eviction, the victim id. Tie-breaking is
least-recently-accessed everywhere (Belady: smallest id among never-reused
candidates), and frequency counters live only while a content is cached —
evicting a content discards its history.

Selection by name: lru | lfu | lecar | belady | pa | pa-fnn.
"""

from __future__ import annotations

import heapq
import math
from collections import OrderedDict
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class PolicyDecision:
    hit: bool
    victim: str | None = None  # present iff miss with a full cache


class Policy:
    name = "base"

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError("cache capacity must be >= 1")
        self.capacity = capacity

    def on_request(self, content_id: str, t: float) -> PolicyDecision:
        raise NotImplementedError

    def notify_window(self, step: int):
        pass

    def cached_ids(self) -> set:
        raise NotImplementedError


class LRUPolicy(Policy):
    name = "lru"

    def __init__(self, capacity):
        super().__init__(capacity)
        self.cache = OrderedDict()

    def on_request(self, content_id, t):
        if content_id in self.cache:
            self.cache.move_to_end(content_id)
            return PolicyDecision(hit=True)
        victim = None
        if len(self.cache) >= self.capacity:
            victim, _ = self.cache.popitem(last=False)
        self.cache[content_id] = None
        return PolicyDecision(hit=False, victim=victim)

    def cached_ids(self):
        return set(self.cache)


class LFUPolicy(Policy):
    """Least-frequently-used with LRU tie-break; counts only while cached."""

    name = "lfu"

    def __init__(self, capacity):
        super().__init__(capacity)
        self.freq = {}
        self.last = {}
        self.seq = 0
        self.heap = []  # lazy entries (freq, last_seq, id)

    def _push(self, cid):
        heapq.heappush(self.heap, (self.freq[cid], self.last[cid], cid))

    def on_request(self, content_id, t):
        self.seq += 1
        if content_id in self.freq:
            self.freq[content_id] += 1
            self.last[content_id] = self.seq
            self._push(content_id)
            return PolicyDecision(hit=True)
        victim = None
        if len(self.freq) >= self.capacity:
            while True:
                f, s, cid = heapq.heappop(self.heap)
                if cid in self.freq and self.freq[cid] == f and self.last[cid] == s:
                    victim = cid
                    break
            del self.freq[victim]
            del self.last[victim]
        self.freq[content_id] = 1
        self.last[content_id] = self.seq
        self._push(content_id)
        return PolicyDecision(hit=False, victim=victim)

    def cached_ids(self):
        return set(self.freq)


class LRUReference(Policy):
    """Naive list-scan LRU kept as an independent check on LRUPolicy."""

    name = "lru-ref"

    def __init__(self, capacity):
        super().__init__(capacity)
        self.items = []  # (id, last access seq), scanned linearly
        self.seq = 0

    def on_request(self, content_id, t):
        self.seq += 1
        for i, (cid, _) in enumerate(self.items):
            if cid == content_id:
                self.items[i] = (cid, self.seq)
                return PolicyDecision(hit=True)
        victim = None
        if len(self.items) >= self.capacity:
            j = min(range(len(self.items)), key=lambda i: self.items[i][1])
            victim = self.items.pop(j)[0]
        self.items.append((content_id, self.seq))
        return PolicyDecision(hit=False, victim=victim)

    def cached_ids(self):
        return {cid for cid, _ in self.items}


class LFUReference(Policy):
    """Naive list-scan LFU (in-cache counts, LRU tie-break)."""

    name = "lfu-ref"

    def __init__(self, capacity):
        super().__init__(capacity)
        self.items = []  # (id, freq, last access seq)
        self.seq = 0

    def on_request(self, content_id, t):
        self.seq += 1
        for i, (cid, f, _) in enumerate(self.items):
            if cid == content_id:
                self.items[i] = (cid, f + 1, self.seq)
                return PolicyDecision(hit=True)
        victim = None
        if len(self.items) >= self.capacity:
            j = min(range(len(self.items)), key=lambda i: (self.items[i][1], self.items[i][2]))
            victim = self.items.pop(j)[0]
        self.items.append((content_id, 1, self.seq))
        return PolicyDecision(hit=False, victim=victim)

    def cached_ids(self):
        return {cid for cid, _, _ in self.items}


class LeCaRPolicy(Policy):
    """Regret-minimizing mixture of an LRU view and an LFU view of one cache.

    Two ghost histories (capacity = cache capacity each) remember recently
    evicted ids tagged by the view that evicted them. A miss found in a ghost
    history rewards the other view multiplicatively, w *= exp(lambda * decay^age),
    which after renormalization penalizes the responsible view. The eviction
    view for each capacity miss is sampled from the weights with a seeded stream.
    """

    name = "lecar"

    def __init__(self, capacity, learning_rate=0.45, discount_base=0.005,
                 seed=0, pin=None):
        super().__init__(capacity)
        self.learning_rate = learning_rate
        self.discount = discount_base ** (1.0 / capacity)
        self.rng = np.random.Generator(np.random.PCG64(seed))
        self.pin = pin  # (w_lru, w_lfu) fixed, bypasses sampling/updates
        self.w = np.array([0.5, 0.5])
        self.cache = OrderedDict()  # id -> freq; order = recency
        self.ghost_lru = OrderedDict()  # id -> eviction seq
        self.ghost_lfu = OrderedDict()
        self.seq = 0

    def _reward(self, view, age):
        # view is the one whose ghost did NOT contain the id
        self.w[view] *= math.exp(self.learning_rate * self.discount**age)
        self.w /= self.w.sum()

    def _lru_victim(self):
        return next(iter(self.cache))

    def _lfu_victim(self):
        best = None
        for i, cid in enumerate(self.cache):  # iteration order is recency
            f = self.cache[cid]
            if best is None or f < best[0]:
                best = (f, cid)
        return best[1]

    def on_request(self, content_id, t):
        self.seq += 1
        if content_id in self.cache:
            self.cache[content_id] += 1
            self.cache.move_to_end(content_id)
            return PolicyDecision(hit=True)
        if self.pin is None:
            if content_id in self.ghost_lru:
                self._reward(1, self.seq - self.ghost_lru.pop(content_id))
            elif content_id in self.ghost_lfu:
                self._reward(0, self.seq - self.ghost_lfu.pop(content_id))
        else:
            self.ghost_lru.pop(content_id, None)
            self.ghost_lfu.pop(content_id, None)
        victim = None
        if len(self.cache) >= self.capacity:
            weights = np.asarray(self.pin, dtype=float) if self.pin is not None else self.w
            use_lru = (weights[0] >= 1.0) if self.pin is not None \
                else (self.rng.random() < weights[0])
            if use_lru:
                victim = self._lru_victim()
                ghost = self.ghost_lru
            else:
                victim = self._lfu_victim()
                ghost = self.ghost_lfu
            del self.cache[victim]
            ghost[victim] = self.seq
            while len(ghost) > self.capacity:
                ghost.popitem(last=False)
        self.cache[content_id] = 1
        return PolicyDecision(hit=False, victim=victim)

    def cached_ids(self):
        return set(self.cache)


def build_next_use_index(requests) -> list[int]:
    """next_use[k] = position of the next request for requests[k]'s content, or inf."""
    n = len(requests)
    next_use = [math.inf] * n
    last = {}
    for k in range(n - 1, -1, -1):
        cid = requests[k].content_id
        if cid in last:
            next_use[k] = last[cid]
        last[cid] = k
    return next_use


class BeladyPolicy(Policy):
    """Offline MIN: evict the cached content whose next use is farthest away.

    Requires the full trace in advance; requests must be replayed in order.
    Never-reused contents are farthest of all, ties broken by smallest id.
    """

    name = "belady"

    def __init__(self, capacity, requests):
        super().__init__(capacity)
        self.requests = requests
        self.next_use = build_next_use_index(requests)
        self.pos = 0
        self.cache = {}  # id -> next use position
        self.heap = []  # lazy entries (-next_use, id); inf sorts first

    def on_request(self, content_id, t):
        if self.pos >= len(self.requests) or self.requests[self.pos].content_id != content_id:
            raise ValueError(f"request at position {self.pos} does not match the built index")
        nxt = self.next_use[self.pos]
        self.pos += 1
        if content_id in self.cache:
            self.cache[content_id] = nxt
            heapq.heappush(self.heap, (-nxt, content_id))
            return PolicyDecision(hit=True)
        victim = None
        if len(self.cache) >= self.capacity:
            while True:
                negnxt, cid = heapq.heappop(self.heap)
                if cid in self.cache and self.cache[cid] == -negnxt:
                    victim = cid
                    break
            del self.cache[victim]
        self.cache[content_id] = nxt
        heapq.heappush(self.heap, (-nxt, content_id))
        return PolicyDecision(hit=False, victim=victim)

    def cached_ids(self):
        return set(self.cache)


class PredictorHandle:
    """Snapshot of per-content popularity estimates, refreshed at retrains.

    ``estimate`` returns None for contents the model has never scored; callers
    that run without a cold-start partition treat that as 0.
    """

    def __init__(self):
        self.scores: dict[str, float] = {}

    def update(self, scores: dict[str, float]):
        self.scores = dict(scores)

    def estimate(self, content_id: str) -> float | None:
        return self.scores.get(content_id)


class PopularityPolicy(Policy):
    """Evict the cached content with the lowest estimated popularity.

    A priority queue keyed by (estimate, last access) serves victims; hits
    refresh recency but never the score, so a content admitted mid-window
    keeps its admission-time estimate until the next window rebuild. An optional LRU
    side-space of floor(fraction * capacity) slots holds contents the
    predictor has never scored; they are promoted into the main space at the
    first rebuild that scores them, as room allows.
    """

    name = "pa"

    def __init__(self, capacity, predictor: PredictorHandle,
                 cold_start_fraction: float = 0.0):
        super().__init__(capacity)
        if not 0.0 <= cold_start_fraction < 1.0:
            raise ValueError("cold_start_fraction must be in [0, 1)")
        self.predictor = predictor
        self.side_capacity = int(cold_start_fraction * capacity)
        self.main_capacity = capacity - self.side_capacity
        self.main = {}  # id -> estimate at insertion/rebuild
        self.last = {}  # id -> last access seq (tie-break at rebuild)
        self.heap = []  # lazy entries (estimate, access seq at push, id)
        self.side = OrderedDict()  # pure LRU for unscored contents
        self.seq = 0

    def _pop_victim(self):
        while True:
            est, s, cid = heapq.heappop(self.heap)
            if cid in self.main and self.main[cid] == est and self.last[cid] == s:
                del self.main[cid]
                del self.last[cid]
                return cid

    def _admit_main(self, content_id):
        victim = None
        if len(self.main) >= self.main_capacity:
            victim = self._pop_victim()
        est = self.predictor.estimate(content_id)
        est = 0.0 if est is None else est
        self.main[content_id] = est
        self.last[content_id] = self.seq
        heapq.heappush(self.heap, (est, self.seq, content_id))
        return victim

    def on_request(self, content_id, t):
        self.seq += 1
        if content_id in self.main:
            # recency refresh only; the admission-time estimate is kept
            self.last[content_id] = self.seq
            heapq.heappush(self.heap, (self.main[content_id], self.seq, content_id))
            return PolicyDecision(hit=True)
        if content_id in self.side:
            self.side.move_to_end(content_id)
            return PolicyDecision(hit=True)
        if self.side_capacity > 0 and self.predictor.estimate(content_id) is None:
            victim = None
            if len(self.side) >= self.side_capacity:
                victim, _ = self.side.popitem(last=False)
            self.side[content_id] = None
            return PolicyDecision(hit=False, victim=victim)
        return PolicyDecision(hit=False, victim=self._admit_main(content_id))

    def notify_window(self, step):
        """Re-score every cached content and rebuild the queue; promote scored
        side-space contents into the main space while it has room."""
        if self.side_capacity > 0:
            for cid in list(self.side):
                if len(self.main) >= self.main_capacity:
                    break
                est = self.predictor.estimate(cid)
                if est is not None:
                    del self.side[cid]
                    self.main[cid] = est
                    self.last[cid] = self.seq
        self.heap = []
        for cid in sorted(self.main):
            est = self.predictor.estimate(cid)
            self.main[cid] = 0.0 if est is None else est
            self.heap.append((self.main[cid], self.last[cid], cid))
        heapq.heapify(self.heap)

    def cached_ids(self):
        return set(self.main) | set(self.side)


POLICY_NAMES = ("lru", "lfu", "lecar", "belady", "pa", "pa-fnn")
