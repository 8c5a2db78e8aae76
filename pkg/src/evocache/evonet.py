"""Evolving multi-layer GRU popularity predictor trained by hedge backpropagation.

The network stacks L GRU layers; every hidden layer feeds its own linear
regressor, and the final prediction is the alpha-weighted sum of the per-layer
regressor outputs. Per-layer losses drive a multiplicative-weights update of
alpha (with a loss clip kappa and a floor zeta/L), so effective depth adapts
online: shallow heads dominate early, deeper heads take over as they converge.

Gate parameters are updated by plain gradient descent on the alpha-weighted
sum of per-layer losses; the gradient of layer l's parameters therefore sums
head contributions for heads j >= l only. Recurrent credit assignment is
truncated to one step: the stored hidden state enters the forward pass as a
constant.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np


class TrainingError(RuntimeError):
    """Non-finite loss or gradient; the offending step was rolled back."""


@dataclass(frozen=True)
class HyperParams:
    beta: float = 0.99  # hedge discount factor
    kappa: float = 100.0  # per-layer loss clip inside the hedge exponent
    zeta: float = 0.1  # alpha floor is zeta / L
    eta: float = 10.0  # learning rate
    grad_clip: float = 10.0  # global gradient-norm clip before the eta step


def default_widths(depth: int = 10, first: int = 512, last: int = 16) -> list[int]:
    """Geometric taper from `first` units down to `last` over `depth` layers."""
    if depth == 1:
        return [first]
    ratio = (last / first) ** (1.0 / (depth - 1))
    return [max(1, round(first * ratio**i)) for i in range(depth)]


def sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def mrse_loss(f: np.ndarray, y: np.ndarray) -> float:
    """Mean relative squared error: mean((f/y - 1)^2). Requires y > 0 elementwise."""
    f = np.asarray(f, dtype=float)
    y = np.asarray(y, dtype=float)
    if np.any(y == 0):
        raise ValueError("mrse_loss requires strictly positive targets")
    return float(np.mean((f / y - 1.0) ** 2))


def hedge_update(alpha, losses, beta, kappa, zeta, L) -> np.ndarray:
    """Multiplicative-weights step: decay by beta^min(loss, kappa), floor at zeta/L, renormalize."""
    alpha = np.asarray(alpha, dtype=float)
    losses = np.asarray(losses, dtype=float)
    decayed = alpha * beta ** np.minimum(losses, kappa)
    floored = np.maximum(decayed, zeta / L)
    return floored / floored.sum()


@dataclass
class ForwardTrace:
    """Per-layer activations saved for the backward pass."""

    x: np.ndarray
    r: list  # reset gate activations, per layer (m x n_l)
    z: list  # update gate activations
    hcand: list  # candidate hidden states
    h: list  # new hidden states
    h_prev: list  # broadcast stored hidden states seen by this pass (m x n_l)
    f: list  # per-layer regressor outputs (m,)
    yhat: np.ndarray  # alpha-weighted combined prediction (m,)
    version: int


@dataclass
class StepDiagnostics:
    layer_losses: np.ndarray
    combined_loss: float  # sum_l alpha_pre[l] * loss[l]
    alpha: np.ndarray  # post-update
    grad_norm: float


class Network:
    """L-layer GRU stack with one regressor and one hedge weight per layer.

    Single-writer during train_step; predict is read-only.
    """

    def __init__(self, widths, input_dim, hyper: HyperParams | None = None,
                 seed: int = 0, recurrent: bool = True,
                 schema_fingerprint: str = ""):
        widths = list(widths)
        if len(widths) < 1 or any(w < 1 for w in widths):
            raise ValueError("need at least one layer of positive width")
        self.widths = widths
        self.input_dim = int(input_dim)
        self.hyper = hyper or HyperParams()
        self.recurrent = recurrent
        self.schema_fingerprint = schema_fingerprint
        self.L = len(widths)
        self.alpha = np.full(self.L, 1.0 / self.L)
        self.adapt_alpha = True  # False freezes alpha (fixed-depth comparator)
        self.version = 0

        rng = np.random.Generator(np.random.PCG64(seed))

        def glorot(n_out, n_in):
            bound = np.sqrt(6.0 / (n_in + n_out))
            return rng.uniform(-bound, bound, size=(n_out, n_in))

        self.Wr, self.Wz, self.Wh = [], [], []
        self.Ur, self.Uz, self.Uh = [], [], []
        self.br, self.bz, self.bh = [], [], []
        self.Theta = []
        self.hidden = []
        n_prev = self.input_dim
        for n in widths:
            self.Wr.append(glorot(n, n_prev))
            self.Wz.append(glorot(n, n_prev))
            self.Wh.append(glorot(n, n_prev))
            self.Ur.append(glorot(n, n))
            self.Uz.append(glorot(n, n))
            self.Uh.append(glorot(n, n))
            self.br.append(np.zeros(n))
            self.bz.append(np.zeros(n))
            self.bh.append(np.zeros(n))
            self.Theta.append(glorot(1, n)[0])
            self.hidden.append(np.zeros(n))
            n_prev = n

    # parameter bookkeeping -------------------------------------------------

    _PARAM_LISTS = ("Wr", "Wz", "Wh", "Ur", "Uz", "Uh", "br", "bz", "bh", "Theta")

    def _params(self):
        for name in self._PARAM_LISTS:
            for l, arr in enumerate(getattr(self, name)):
                yield name, l, arr

    def reset_hidden(self):
        for l, n in enumerate(self.widths):
            self.hidden[l] = np.zeros(n)

    # forward / backward ----------------------------------------------------

    def forward(self, x: np.ndarray) -> ForwardTrace:
        """Run the GRU stack on an m x d batch; does NOT advance stored hidden state."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if x.shape[1] != self.input_dim:
            raise ValueError(f"expected {self.input_dim} features, got {x.shape[1]}")
        m = x.shape[0]
        trace = ForwardTrace(x=x, r=[], z=[], hcand=[], h=[], h_prev=[], f=[],
                             yhat=None, version=self.version)
        h_in = x
        for l in range(self.L):
            if self.recurrent:
                h_prev = np.broadcast_to(self.hidden[l], (m, self.widths[l]))
            else:
                h_prev = np.zeros((m, self.widths[l]))
            r = sigmoid(h_in @ self.Wr[l].T + h_prev @ self.Ur[l].T + self.br[l])
            z = sigmoid(h_in @ self.Wz[l].T + h_prev @ self.Uz[l].T + self.bz[l])
            hcand = np.tanh(h_in @ self.Wh[l].T + (r * h_prev) @ self.Uh[l].T + self.bh[l])
            h = z * h_prev + (1.0 - z) * hcand
            f = h @ self.Theta[l]
            trace.r.append(r)
            trace.z.append(z)
            trace.hcand.append(hcand)
            trace.h.append(h)
            trace.h_prev.append(h_prev)
            trace.f.append(f)
            h_in = h
        trace.yhat = sum(self.alpha[l] * trace.f[l] for l in range(self.L))
        return trace

    def predict(self, x: np.ndarray) -> np.ndarray:
        """Combined prediction; no state or parameter mutation."""
        return self.forward(x).yhat

    def backward(self, trace: ForwardTrace, y: np.ndarray) -> dict:
        """Gradients of the combined loss sum_l alpha[l] * mrse(f[l], y).

        Heads inject error at their own layer; contributions flow down the
        stack, so layer l's gate gradients sum heads j >= l. Hidden-state
        inputs are constants (one-step truncation), so no gradient flows into
        them.
        """
        if trace.version != self.version:
            raise TrainingError("stale forward trace: network was updated since forward()")
        y = np.asarray(y, dtype=float)
        m = trace.x.shape[0]
        grads = {name: [np.zeros_like(a) for a in getattr(self, name)]
                 for name in self._PARAM_LISTS}
        g_up = None  # gradient wrt h^(l) arriving from layer l+1
        for l in reversed(range(self.L)):
            h = trace.h[l]
            # d combined loss / d f^(l), alpha included
            df = self.alpha[l] * (2.0 / m) * (trace.f[l] / y - 1.0) / y
            grads["Theta"][l] = df @ h
            g_h = df[:, None] * self.Theta[l][None, :]
            if g_up is not None:
                g_h = g_h + g_up
            r, z, hc, hp = trace.r[l], trace.z[l], trace.hcand[l], trace.h_prev[l]
            x_in = trace.x if l == 0 else trace.h[l - 1]
            dz = g_h * (hp - hc)
            dzp = dz * z * (1.0 - z)
            dhc = g_h * (1.0 - z)
            dhcp = dhc * (1.0 - hc**2)
            dr = (dhcp @ self.Uh[l]) * hp
            drp = dr * r * (1.0 - r)
            grads["Wr"][l] = drp.T @ x_in
            grads["Wz"][l] = dzp.T @ x_in
            grads["Wh"][l] = dhcp.T @ x_in
            grads["Ur"][l] = drp.T @ hp
            grads["Uz"][l] = dzp.T @ hp
            grads["Uh"][l] = dhcp.T @ (r * hp)
            grads["br"][l] = drp.sum(axis=0)
            grads["bz"][l] = dzp.sum(axis=0)
            grads["bh"][l] = dhcp.sum(axis=0)
            g_up = drp @ self.Wr[l] + dzp @ self.Wz[l] + dhcp @ self.Wh[l]
        return grads

    def combined_loss(self, trace: ForwardTrace, y: np.ndarray) -> float:
        return float(sum(self.alpha[l] * mrse_loss(trace.f[l], y) for l in range(self.L)))

    # training --------------------------------------------------------------

    def train_step(self, batch) -> StepDiagnostics:
        """One pass of the evolving-learning update on a TrainingBatch.

        Revealed counts are shifted by +1 before the relative loss so that
        zero-count contents are trainable; the shift is monotone, so the
        eviction ranking downstream is unaffected.

        On a non-finite loss or gradient the step is rolled back and
        TrainingError is raised naming the layer.
        """
        y = np.asarray(batch.y, dtype=float) + 1.0
        trace = self.forward(batch.x)
        losses = np.array([mrse_loss(trace.f[l], y) for l in range(self.L)])
        bad = np.flatnonzero(~np.isfinite(losses))
        if bad.size:
            raise TrainingError(f"non-finite loss at layer {bad[0] + 1}")
        combined = float(self.alpha @ losses)
        grads = self.backward(trace, y)

        sq = 0.0
        for name, l, _ in self._params():
            g = grads[name][l]
            if not np.all(np.isfinite(g)):
                raise TrainingError(f"non-finite gradient in {name} at layer {l + 1}")
            sq += float(np.sum(g * g))
        gnorm = np.sqrt(sq)
        scale = self.hyper.eta
        if gnorm > self.hyper.grad_clip:
            scale *= self.hyper.grad_clip / gnorm

        for name, l, arr in self._params():
            arr -= scale * grads[name][l]
        if self.adapt_alpha:
            self.alpha = hedge_update(self.alpha, losses, self.hyper.beta,
                                      self.hyper.kappa, self.hyper.zeta, self.L)
        if self.recurrent:
            # Batch rows are parallel contents, not a sequence; advance the
            # per-layer state with the batch mean of the new hidden states.
            for l in range(self.L):
                self.hidden[l] = trace.h[l].mean(axis=0)
        self.version += 1
        return StepDiagnostics(layer_losses=losses, combined_loss=combined,
                               alpha=self.alpha.copy(), grad_norm=float(gnorm))

    # checkpointing ---------------------------------------------------------

    def save(self, path):
        arrays = {"alpha": self.alpha}
        for name, l, arr in self._params():
            arrays[f"{name}_{l}"] = arr
        for l, h in enumerate(self.hidden):
            arrays[f"hidden_{l}"] = h
        meta = {
            "widths": self.widths,
            "input_dim": self.input_dim,
            "recurrent": self.recurrent,
            "schema_fingerprint": self.schema_fingerprint,
            "hyper": asdict(self.hyper),
        }
        arrays["meta_json"] = np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8)
        np.savez(path, **arrays)

    @classmethod
    def load(cls, path, expect_fingerprint: str | None = None) -> "Network":
        data = np.load(path)
        meta = json.loads(bytes(data["meta_json"]).decode())
        if expect_fingerprint is not None and meta["schema_fingerprint"] != expect_fingerprint:
            raise ValueError(
                f"checkpoint feature-schema fingerprint {meta['schema_fingerprint']!r} "
                f"does not match expected {expect_fingerprint!r}"
            )
        net = cls(meta["widths"], meta["input_dim"], HyperParams(**meta["hyper"]),
                  recurrent=meta["recurrent"],
                  schema_fingerprint=meta["schema_fingerprint"])
        net.alpha = data["alpha"].copy()
        for name, l, _ in net._params():
            getattr(net, name)[l] = data[f"{name}_{l}"].copy()
        for l in range(net.L):
            net.hidden[l] = data[f"hidden_{l}"].copy()
        return net
