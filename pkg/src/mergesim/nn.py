"""Value network, TD loss with backprop, Adam, and policy persistence.

The network is a small fully connected ReLU net (default input -> 64 -> 32
-> 7) evaluated and differentiated directly with numpy in float64.  The
layer list is generic so tests can differentiate tiny hand-checkable
networks with the same code.
"""

from __future__ import annotations

import enum
import io
import json
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .env import (N_ACTIONS, NORM_A, NORM_S, NORM_V, OBS_WIDTH_BASE,
                  OBS_WIDTH_FULL, ObsMode, normalize_observation)

DEFAULT_NORM_SCALES = (NORM_S, NORM_V, NORM_A)

POLICY_SCHEMA_VERSION = 1

Layers = tuple[tuple[np.ndarray, np.ndarray], ...]


class PolicyFormatError(Exception):
    """Raised for unreadable, truncated or incompatible policy files."""


def input_width(mode: ObsMode) -> int:
    return OBS_WIDTH_BASE if mode is ObsMode.BASE else OBS_WIDTH_FULL


@dataclass(frozen=True)
class QPolicy:
    """Feed-forward action-value network plus input metadata.

    ``norm_scales`` are the (position, velocity, acceleration) divisors
    applied to observations before the first layer; ``None`` feeds raw
    features through, which tests with hand-built networks rely on.
    """

    layers: Layers
    input_mode: ObsMode = ObsMode.BASE
    norm_scales: Optional[tuple[float, float, float]] = DEFAULT_NORM_SCALES

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(
            (np.asarray(w, dtype=np.float64), np.asarray(b, dtype=np.float64))
            for w, b in self.layers))
        width = self.layers[0][0].shape[1]
        for w, b in self.layers:
            if w.shape[1] != width:
                raise ValueError("layer widths do not chain")
            if b.shape != (w.shape[0],):
                raise ValueError("bias shape mismatch")
            if not (np.isfinite(w).all() and np.isfinite(b).all()):
                raise ValueError("non-finite weights")
            width = w.shape[0]

    @property
    def n_inputs(self) -> int:
        return self.layers[0][0].shape[1]

    @property
    def n_outputs(self) -> int:
        return self.layers[-1][0].shape[0]


def new_policy(rng: np.random.Generator, input_mode: ObsMode = ObsMode.BASE,
               hidden: Sequence[int] = (64, 32), n_actions: int = N_ACTIONS,
               norm_scales: Optional[tuple[float, float, float]] = DEFAULT_NORM_SCALES
               ) -> QPolicy:
    """Fresh policy with He-initialized weights and zero biases."""
    widths = [input_width(input_mode), *hidden, n_actions]
    layers = []
    for n_in, n_out in zip(widths[:-1], widths[1:]):
        w = rng.normal(0.0, np.sqrt(2.0 / n_in), size=(n_out, n_in))
        layers.append((w, np.zeros(n_out)))
    return QPolicy(tuple(layers), input_mode, norm_scales)


def _prepare(p: QPolicy, obs: np.ndarray) -> np.ndarray:
    x = np.atleast_2d(np.asarray(obs, dtype=np.float64))
    if x.shape[1] != p.n_inputs:
        raise ValueError(
            f"observation width {x.shape[1]} does not match network input "
            f"{p.n_inputs} ({p.input_mode.value})")
    if p.norm_scales is None:
        return x
    return normalize_observation(x, p.norm_scales)


def _forward_cached(p: QPolicy, x: np.ndarray) -> tuple[np.ndarray, list]:
    """Forward pass keeping pre/post activations for the backward pass."""
    cache = []
    h = x
    last = len(p.layers) - 1
    for i, (w, b) in enumerate(p.layers):
        z = h @ w.T + b
        cache.append((h, z))
        h = z if i == last else np.maximum(z, 0.0)
    return h, cache


def q_forward_batch(p: QPolicy, obs: np.ndarray) -> np.ndarray:
    """Action values for a batch of observations, shape (B, n_actions)."""
    out, _ = _forward_cached(p, _prepare(p, obs))
    return out


def q_forward(p: QPolicy, obs: np.ndarray) -> np.ndarray:
    """Action values for a single observation, shape (n_actions,)."""
    return q_forward_batch(p, obs)[0]


def greedy_action(p: QPolicy, obs: np.ndarray) -> int:
    """Arg-max action; ties break toward the lowest action index."""
    return int(np.argmax(q_forward(p, obs)))


def _backward(p: QPolicy, cache: list, d_out: np.ndarray) -> list:
    """Gradients of a scalar loss given d loss / d network-output."""
    grads = [None] * len(p.layers)
    last = len(p.layers) - 1
    g = d_out
    for i in range(last, -1, -1):
        x_in, z = cache[i]
        if i != last:
            g = g * (z > 0.0)
        grads[i] = (g.T @ x_in, g.sum(axis=0))
        if i > 0:
            g = g @ p.layers[i][0]
    return grads


def td_loss_grad(p: QPolicy, target_p: QPolicy, batch, gamma: float,
                 weights: Optional[np.ndarray] = None,
                 priority_floor: float = 1e-6):
    """Importance-weighted squared TD error, its gradients, new priorities.

    Targets are ``r`` for terminal samples and ``r + gamma * max_a'
    Q_target(o', a')`` otherwise; the target network is never
    differentiated through.
    """
    obs, actions, rewards, next_obs, terminal = batch
    actions = np.asarray(actions, dtype=np.int64)
    rewards = np.asarray(rewards, dtype=np.float64)
    terminal = np.asarray(terminal, dtype=bool)
    n = len(actions)
    if n == 0:
        raise ValueError("empty batch")
    if weights is None:
        weights = np.ones(n)

    next_q = q_forward_batch(target_p, next_obs)
    targets = rewards + gamma * next_q.max(axis=1) * (~terminal)

    x = _prepare(p, obs)
    out, cache = _forward_cached(p, x)
    q_sel = out[np.arange(n), actions]
    td_error = q_sel - targets
    loss = float(np.mean(weights * td_error ** 2))

    d_out = np.zeros_like(out)
    d_out[np.arange(n), actions] = 2.0 * weights * td_error / n
    grads = _backward(p, cache, d_out)
    new_priorities = np.abs(td_error) + priority_floor
    return loss, grads, new_priorities


@dataclass
class AdamState:
    """First/second moment accumulators for one parameter list."""

    m: list
    v: list
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @staticmethod
    def for_policy(p: QPolicy) -> "AdamState":
        m = [(np.zeros_like(w), np.zeros_like(b)) for w, b in p.layers]
        v = [(np.zeros_like(w), np.zeros_like(b)) for w, b in p.layers]
        return AdamState(m, v)


def adam_step(opt: AdamState, p: QPolicy, grads: list,
              lr: float = 1e-4) -> QPolicy:
    """One Adam update (bias-corrected); returns the updated policy."""
    opt.t += 1
    b1, b2 = opt.beta1, opt.beta2
    c1 = 1.0 - b1 ** opt.t
    c2 = 1.0 - b2 ** opt.t
    new_layers = []
    for i, (w, b) in enumerate(p.layers):
        new_wb = []
        for j, (param, grad) in enumerate(((w, grads[i][0]), (b, grads[i][1]))):
            m = opt.m[i][j]
            v = opt.v[i][j]
            m *= b1
            m += (1.0 - b1) * grad
            v *= b2
            v += (1.0 - b2) * grad * grad
            step = lr * (m / c1) / (np.sqrt(v / c2) + opt.eps)
            new_wb.append(param - step)
        new_layers.append((new_wb[0], new_wb[1]))
    return replace(p, layers=tuple(new_layers))


def flatten_params(p: QPolicy) -> np.ndarray:
    return np.concatenate([np.concatenate([w.ravel(), b.ravel()])
                           for w, b in p.layers])


def unflatten_params(p: QPolicy, flat: np.ndarray) -> QPolicy:
    layers = []
    k = 0
    for w, b in p.layers:
        nw = w.size
        layers.append((flat[k:k + nw].reshape(w.shape),
                       flat[k + nw:k + nw + b.size].copy()))
        k += nw + b.size
    return replace(p, layers=tuple(layers))


def save_policy(p: QPolicy, path: str | Path) -> None:
    """Write a policy file (bit-exact round trip, versioned)."""
    meta = {
        "schema": POLICY_SCHEMA_VERSION,
        "input_mode": p.input_mode.value,
        "norm_scales": None if p.norm_scales is None else list(p.norm_scales),
        "n_layers": len(p.layers),
        "shapes": [[list(w.shape), list(b.shape)] for w, b in p.layers],
    }
    arrays = {"meta": np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8)}
    for i, (w, b) in enumerate(p.layers):
        arrays[f"w{i}"] = w
        arrays[f"b{i}"] = b
    buf = io.BytesIO()
    np.savez(buf, **arrays)
    Path(path).write_bytes(buf.getvalue())


def load_policy(path: str | Path,
                expect_mode: Optional[ObsMode] = None) -> QPolicy:
    """Read a policy file; fails loudly on corruption or a mode mismatch."""
    try:
        with np.load(path) as data:
            meta = json.loads(bytes(data["meta"]).decode())
            if meta.get("schema") != POLICY_SCHEMA_VERSION:
                raise PolicyFormatError(
                    f"unsupported policy schema {meta.get('schema')!r}")
            layers = tuple((data[f"w{i}"], data[f"b{i}"])
                           for i in range(meta["n_layers"]))
    except PolicyFormatError:
        raise
    except Exception as exc:
        raise PolicyFormatError(f"cannot read policy file {path}: {exc}") from exc
    mode = ObsMode(meta["input_mode"])
    if expect_mode is not None and mode is not expect_mode:
        raise PolicyFormatError(
            f"policy was trained for {mode.value} observations, "
            f"not {expect_mode.value}")
    scales = meta["norm_scales"]
    return QPolicy(layers, mode,
                   None if scales is None else tuple(scales))
