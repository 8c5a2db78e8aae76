"""Self-contained verification suites: independent oracles and invariants.

Each suite returns (passed, detail). They are wired both into the CLI
(`evocache check`) and the pytest acceptance module. Oracles here are kept
deliberately naive and separate from the implementations they check:
exhaustive search for offline optimality, central finite differences for
gradients, list-scan references for LRU/LFU.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import evonet
from .evonet import HyperParams, Network, hedge_update, mrse_loss
from .features import TrainingBatch
from .policies import (BeladyPolicy, LeCaRPolicy, LFUPolicy, LFUReference,
                       LRUPolicy, LRUReference)
from .trace import Request


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str = ""


def _mini_trace(ids):
    return [Request(content_id=c, timestamp=float(i), meta_ref=0)
            for i, c in enumerate(ids)]


def optimal_hits_exhaustive(ids: list[str], capacity: int) -> int:
    """Maximum achievable hits over all eviction choices (admission forced on miss)."""
    n = len(ids)

    memo = {}

    def best(k: int, cache: frozenset) -> int:
        if k == n:
            return 0
        key = (k, cache)
        if key in memo:
            return memo[key]
        c = ids[k]
        if c in cache:
            res = 1 + best(k + 1, cache)
        elif len(cache) < capacity:
            res = best(k + 1, cache | {c})
        else:
            res = max(best(k + 1, (cache - {v}) | {c}) for v in cache)
        memo[key] = res
        return res

    return best(0, frozenset())


def _policy_hits(policy, ids):
    return sum(policy.on_request(c, float(i)).hit for i, c in enumerate(ids))


def oracle_optimality_suite(n_traces: int = 200, seed: int = 0) -> CheckResult:
    """Belady equals the exhaustive-search optimum and dominates every policy."""
    rng = np.random.Generator(np.random.PCG64(seed))
    for i in range(n_traces):
        n_contents = int(rng.integers(2, 9))
        n_requests = int(rng.integers(5, 51))
        capacity = int(rng.choice([2, 3]))
        ids = [f"c{j}" for j in rng.integers(0, n_contents, size=n_requests)]
        trace = _mini_trace(ids)
        opt = optimal_hits_exhaustive(ids, capacity)
        belady = _policy_hits(BeladyPolicy(capacity, trace), ids)
        if belady != opt:
            return CheckResult("oracle-optimality", False,
                               f"trace {i}: Belady {belady} != optimum {opt}")
        rivals = {
            "lru": LRUPolicy(capacity),
            "lfu": LFUPolicy(capacity),
            "lecar": LeCaRPolicy(capacity, seed=i),
        }
        for name, policy in rivals.items():
            hits = _policy_hits(policy, ids)
            if hits > belady:
                return CheckResult("oracle-optimality", False,
                                   f"trace {i}: {name} {hits} > Belady {belady}")
    return CheckResult("oracle-optimality", True, f"{n_traces} traces")


def _random_net(rng) -> tuple[Network, TrainingBatch]:
    L = int(rng.integers(1, 4))
    widths = [int(rng.integers(2, 9)) for _ in range(L)]
    d = int(rng.integers(2, 7))
    m = int(rng.integers(1, 6))
    net = Network(widths, d, HyperParams(), seed=int(rng.integers(0, 2**31)),
                  recurrent=bool(rng.random() < 0.75))
    # diversify alpha and hidden state so the check exercises non-uniform paths
    a = rng.random(L) + 0.1
    net.alpha = a / a.sum()
    for l in range(L):
        net.hidden[l] = rng.normal(0, 0.5, size=widths[l])
    x = rng.normal(0, 1, size=(m, d))
    y = rng.uniform(0.5, 3.0, size=m)
    return net, TrainingBatch(x=x, y=y, ids=[str(i) for i in range(m)])


def gradient_suite(n_draws: int = 100, seed: int = 1,
                   rel_tol: float = 1e-4) -> CheckResult:
    """Analytic gradients vs central finite differences of the combined loss."""
    rng = np.random.Generator(np.random.PCG64(seed))
    h = 1e-5
    for i in range(n_draws):
        net, batch = _random_net(rng)
        y = batch.y  # already positive; probe the loss the net trains on
        trace = net.forward(batch.x)
        grads = net.backward(trace, y)
        for name in net._PARAM_LISTS:
            for l, arr in enumerate(getattr(net, name)):
                flat = arr.reshape(-1)
                fd = np.empty_like(flat)
                for j in range(flat.size):
                    orig = flat[j]
                    flat[j] = orig + h
                    lp = net.combined_loss(net.forward(batch.x), y)
                    flat[j] = orig - h
                    lm = net.combined_loss(net.forward(batch.x), y)
                    flat[j] = orig
                    fd[j] = (lp - lm) / (2 * h)
                g = grads[name][l].reshape(-1)
                num = np.linalg.norm(g - fd)
                den = max(np.linalg.norm(fd), 1e-8)
                if num / den > rel_tol and num > 1e-8:
                    return CheckResult(
                        "gradient", False,
                        f"draw {i}: {name} layer {l + 1} rel err {num / den:.2e}")
    return CheckResult("gradient", True, f"{n_draws} draws")


def hedge_suite(seed: int = 2) -> CheckResult:
    """Simplex invariant under training plus the two-expert closed-form track."""
    rng = np.random.Generator(np.random.PCG64(seed))
    net, batch = _random_net(rng)
    zeta, L = net.hyper.zeta, net.L
    floor = (zeta / L) / (1.0 + zeta)
    for _ in range(20):
        net.train_step(batch)
        if abs(net.alpha.sum() - 1.0) > 1e-9:
            return CheckResult("hedge", False, f"alpha sum {net.alpha.sum()!r}")
        if net.alpha.min() < floor - 1e-12:
            return CheckResult("hedge", False, f"alpha below floor: {net.alpha.min()!r}")

    beta, kappa, zeta, L = 0.99, 100.0, 0.1, 2
    losses = np.array([0.1, 0.9])
    alpha = np.array([0.5, 0.5])
    for t in range(1, 201):
        alpha = hedge_update(alpha, losses, beta, kappa, zeta, L)
        u = np.maximum(0.5 * beta ** (losses * t), zeta / L)
        closed = u / u.sum()
        if np.max(np.abs(alpha - closed)) > 1e-12:
            return CheckResult("hedge", False,
                               f"step {t}: iterated {alpha} vs closed form {closed}")
    if alpha[0] <= 0.8:
        return CheckResult("hedge", False, f"better expert stuck at {alpha[0]!r}")
    return CheckResult("hedge", True, f"final better-expert weight {alpha[0]:.4f}")


def loss_suite(n_pairs: int = 1000, seed: int = 3) -> CheckResult:
    """MRSE non-negativity, exactness at f = y, joint positive-scale invariance."""
    rng = np.random.Generator(np.random.PCG64(seed))
    for i in range(n_pairs):
        m = int(rng.integers(1, 20))
        f = rng.normal(0, 3, size=m)
        y = rng.uniform(0.1, 10.0, size=m)
        v = mrse_loss(f, y)
        if not (v >= 0.0):
            return CheckResult("loss", False, f"pair {i}: negative loss {v!r}")
        if abs(mrse_loss(y, y)) > 1e-12:
            return CheckResult("loss", False, f"pair {i}: nonzero loss at f=y")
        c = float(rng.uniform(0.1, 50.0))
        if abs(mrse_loss(c * f, c * y) - v) > 1e-12 * max(1.0, v):
            return CheckResult("loss", False, f"pair {i}: scale invariance broken")
        if m > 1:
            f2 = y.copy()
            f2[0] += 1.0
            if mrse_loss(f2, y) == 0.0:
                return CheckResult("loss", False, "zero loss for f != y")
    return CheckResult("loss", True, f"{n_pairs} pairs")


def _decisions(policy, ids):
    return [policy.on_request(c, float(i)) for i, c in enumerate(ids)]


def reference_equivalence_suite(n_requests: int = 100_000, seed: int = 4) -> CheckResult:
    """Optimized LRU/LFU vs naive list-scan references; LeCaR pinned to each view."""
    rng = np.random.Generator(np.random.PCG64(seed))
    ids = [f"c{j}" for j in rng.integers(0, 300, size=n_requests)]
    capacity = 50
    pairs = [
        ("lru", LRUPolicy(capacity), LRUReference(capacity)),
        ("lfu", LFUPolicy(capacity), LFUReference(capacity)),
        ("lecar(1,0)", LeCaRPolicy(capacity, pin=(1, 0)), LRUPolicy(capacity)),
        ("lecar(0,1)", LeCaRPolicy(capacity, pin=(0, 1)), LFUPolicy(capacity)),
    ]
    for name, a, b in pairs:
        for i, c in enumerate(ids):
            da = a.on_request(c, float(i))
            db = b.on_request(c, float(i))
            if da != db:
                return CheckResult("reference-equivalence", False,
                                   f"{name} diverges at request {i}: {da} vs {db}")
    return CheckResult("reference-equivalence", True,
                       f"{len(pairs)} pairs x {n_requests} requests")


SUITES = {
    "oracle": oracle_optimality_suite,
    "gradient": gradient_suite,
    "hedge": hedge_suite,
    "loss": loss_suite,
    "reference": reference_equivalence_suite,
}


def run_suites(names=None) -> list[CheckResult]:
    names = list(names) if names else list(SUITES)
    unknown = [n for n in names if n not in SUITES]
    if unknown:
        raise ValueError(f"unknown suite(s): {', '.join(unknown)}")
    return [SUITES[n]() for n in names]
