"""Fully connected Q-network with experience replay, trained by RMSProp.

Everything is plain numpy: the network is small (57-200-100-40-10) and runs
on one core fast enough for per-slot training.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

LAYER_SIZES = (57, 200, 100, 40, 10)
CHECKPOINT_FORMAT = "marlpower-dqn"
CHECKPOINT_VERSION = 1


@dataclass
class TrainHyper:
    gamma: float = 0.5
    batch_size: int = 256
    memory_per_agent: int = 1000
    alpha0: float = 5e-3
    lr_decay: float = 1e-4
    eps0: float = 0.2
    eps_min: float = 1e-2
    eps_decay: float = 1e-4
    rms_decay: float = 0.9
    rms_eps: float = 1e-10
    init_std: float = 0.01
    T_u: int = 100
    T_d: int = 50

    def __post_init__(self):
        if not 0 <= self.gamma <= 1:
            raise ValueError("discount must lie in [0, 1]")
        for name in ("batch_size", "memory_per_agent", "alpha0", "eps0", "T_u"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


class MlpParams:
    """Weights ``W[l]`` of shape (N_l, N_{l+1}) and biases ``b[l]`` of shape (N_{l+1},)."""

    def __init__(self, weights: list[np.ndarray], biases: list[np.ndarray]):
        self.W = weights
        self.b = biases

    @property
    def sizes(self) -> tuple[int, ...]:
        return (self.W[0].shape[0],) + tuple(w.shape[1] for w in self.W)

    @property
    def n_params(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.W, self.b))

    def copy(self) -> "MlpParams":
        return MlpParams([w.copy() for w in self.W], [b.copy() for b in self.b])

    def flat(self) -> np.ndarray:
        return np.concatenate([a.ravel() for pair in zip(self.W, self.b) for a in pair])

    @classmethod
    def from_flat(cls, vec, sizes=LAYER_SIZES) -> "MlpParams":
        vec = np.asarray(vec, dtype=float)
        expected = count_params(sizes)
        if vec.size != expected:
            raise ValueError(f"expected {expected} parameters for sizes {sizes}, got {vec.size}")
        W, b, k = [], [], 0
        for n_in, n_out in zip(sizes[:-1], sizes[1:]):
            W.append(vec[k:k + n_in * n_out].reshape(n_in, n_out).copy())
            k += n_in * n_out
            b.append(vec[k:k + n_out].copy())
            k += n_out
        return cls(W, b)

    def zeros_like(self) -> "MlpParams":
        return MlpParams([np.zeros_like(w) for w in self.W], [np.zeros_like(b) for b in self.b])


def count_params(sizes=LAYER_SIZES) -> int:
    return sum((n_in + 1) * n_out for n_in, n_out in zip(sizes[:-1], sizes[1:]))


def truncated_normal(shape, std: float, rng: np.random.Generator) -> np.ndarray:
    """Normal(0, std) redrawn until inside two standard deviations."""
    out = rng.normal(0.0, std, size=shape)
    bad = np.abs(out) > 2 * std
    while bad.any():
        out[bad] = rng.normal(0.0, std, size=int(bad.sum()))
        bad = np.abs(out) > 2 * std
    return out


def init_params(rng: np.random.Generator, sizes=LAYER_SIZES, std: float = 0.01) -> MlpParams:
    W = [truncated_normal((n_in, n_out), std, rng) for n_in, n_out in zip(sizes[:-1], sizes[1:])]
    b = [np.zeros(n_out) for n_out in sizes[1:]]
    return MlpParams(W, b)


def forward(params: MlpParams, s: np.ndarray, cache: bool = False):
    """Q-values for a state (57,) or a batch (m, 57). tanh hidden layers, linear output."""
    x = np.asarray(s, dtype=float)
    if x.shape[-1] != params.W[0].shape[0]:
        raise ValueError(f"state length {x.shape[-1]} != input size {params.W[0].shape[0]}")
    if not np.all(np.isfinite(x)):
        raise ValueError("non-finite network input")
    acts = [x]
    last = len(params.W) - 1
    for l, (W, b) in enumerate(zip(params.W, params.b)):
        x = x @ W + b
        if l < last:
            x = np.tanh(x)
        acts.append(x)
    return (x, acts) if cache else x


def td_target(r, s_next, target_params: MlpParams, gamma: float = 0.5):
    """r + gamma * max_a q(s_next, a; target)."""
    q_next = forward(target_params, s_next)
    return np.asarray(r, dtype=float) + gamma * q_next.max(axis=-1)


def loss_and_grad(params: MlpParams, batch, target_params: MlpParams, gamma: float = 0.5):
    """Summed squared TD error over the batch and its gradient w.r.t. ``params``.

    ``batch`` is ``(s, a, r, s_next)`` as arrays with a leading batch axis.
    """
    s, a, r, s_next = batch
    a = np.asarray(a, dtype=int)
    if len(a) == 0:
        raise ValueError("empty batch")
    y = td_target(r, s_next, target_params, gamma)
    q, acts = forward(params, s, cache=True)
    rows = np.arange(len(a))
    err = q[rows, a] - y
    loss = float(np.sum(err**2))
    delta = np.zeros_like(q)
    delta[rows, a] = 2.0 * err
    gW, gb = [None] * len(params.W), [None] * len(params.W)
    for l in range(len(params.W) - 1, -1, -1):
        gW[l] = acts[l].T @ delta
        gb[l] = delta.sum(axis=0)
        if l > 0:
            delta = (delta @ params.W[l].T) * (1.0 - acts[l] ** 2)
    return loss, MlpParams(gW, gb)


class RMSProp:
    """v <- decay*v + (1-decay)*g^2;  theta <- theta - lr*g/(sqrt(v) + eps)."""

    def __init__(self, params: MlpParams, decay: float = 0.9, eps: float = 1e-10):
        self.decay = decay
        self.eps = eps
        self.v = params.zeros_like()

    def step(self, params: MlpParams, grad: MlpParams, lr: float) -> MlpParams:
        d = self.decay
        for store, p_list, g_list in ((self.v.W, params.W, grad.W), (self.v.b, params.b, grad.b)):
            for k, (p, g) in enumerate(zip(p_list, g_list)):
                v = store[k]
                v *= d
                v += (1.0 - d) * g * g
                p -= lr * g / (np.sqrt(v) + self.eps)
        return params


def rmsprop_step(params: MlpParams, grad: MlpParams, lr: float, rms_state: RMSProp | None = None,
                 decay: float = 0.9, eps: float = 1e-10):
    """Functional wrapper; returns (params, rms_state). ``params`` is updated in place."""
    if rms_state is None:
        rms_state = RMSProp(params, decay, eps)
    rms_state.step(params, grad, lr)
    return params, rms_state


def schedule(t: int, hyper: TrainHyper = TrainHyper()) -> tuple[float, float]:
    """Learning rate and exploration probability after ``t`` training slots.

    Both decay geometrically by their per-slot rate; exploration is floored.
    """
    if t < 0:
        raise ValueError("slot index must be nonnegative")
    lr = hyper.alpha0 * (1.0 - hyper.lr_decay) ** t
    eps = max(hyper.eps_min, hyper.eps0 * (1.0 - hyper.eps_decay) ** t)
    return lr, eps


def sync_target(train_params: MlpParams) -> MlpParams:
    return train_params.copy()


class ReplayMemory:
    """FIFO experience store backed by preallocated ring arrays."""

    def __init__(self, capacity: int, state_dim: int = LAYER_SIZES[0]):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self.s = np.zeros((capacity, state_dim))
        self.a = np.zeros(capacity, dtype=int)
        self.r = np.zeros(capacity)
        self.s_next = np.zeros((capacity, state_dim))
        self.size = 0
        self._head = 0  # next write position

    def __len__(self) -> int:
        return self.size

    def push(self, s, a, r, s_next) -> None:
        """Append one experience, or a batch if ``a`` is an array."""
        a = np.atleast_1d(np.asarray(a, dtype=int))
        s = np.atleast_2d(s)
        s_next = np.atleast_2d(s_next)
        r = np.atleast_1d(np.asarray(r, dtype=float))
        m = len(a)
        if m > self.capacity:
            s, a, r, s_next = s[-self.capacity:], a[-self.capacity:], r[-self.capacity:], s_next[-self.capacity:]
            m = self.capacity
        idx = (self._head + np.arange(m)) % self.capacity
        self.s[idx], self.a[idx], self.r[idx], self.s_next[idx] = s, a, r, s_next
        self._head = (self._head + m) % self.capacity
        self.size = min(self.size + m, self.capacity)

    def items(self):
        """Stored experiences from oldest to newest."""
        start = (self._head - self.size) % self.capacity
        idx = (start + np.arange(self.size)) % self.capacity
        return self.s[idx], self.a[idx], self.r[idx], self.s_next[idx]

    def sample(self, batch_size: int, rng: np.random.Generator):
        if self.size == 0:
            raise ValueError("cannot sample from an empty replay memory")
        replace = self.size < batch_size
        idx = rng.choice(self.size, size=batch_size, replace=replace)
        return self.s[idx], self.a[idx], self.r[idx], self.s_next[idx]


def push(mem: ReplayMemory, e) -> None:
    mem.push(*e)


def sample_minibatch(mem: ReplayMemory, batch_size: int, rng: np.random.Generator):
    return mem.sample(batch_size, rng)


# -- checkpoints ---------------------------------------------------------------
#
# JSON document:
#   {"format": "marlpower-dqn", "version": 1, "layer_sizes": [57, 200, 100, 40, 10],
#    "layout": "W0,b0,W1,b1,...; W row-major (fan_in, fan_out)",
#    "params": [...flat float list...], "meta": {...}}
# Floats are written with repr precision so a round trip is exact.

def save_checkpoint(path, params: MlpParams, meta: dict | None = None) -> None:
    doc = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "layer_sizes": list(params.sizes),
        "layout": "W0,b0,W1,b1,...; W row-major (fan_in, fan_out)",
        "params": params.flat().tolist(),
        "meta": meta or {},
    }
    with open(path, "w") as fh:
        json.dump(doc, fh)


def load_checkpoint(path, expected_sizes=LAYER_SIZES) -> tuple[MlpParams, dict]:
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"{path}: not a {CHECKPOINT_FORMAT} checkpoint")
    if doc.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {doc.get('version')}")
    sizes = tuple(doc["layer_sizes"])
    if expected_sizes is not None and sizes != tuple(expected_sizes):
        raise ValueError(f"{path}: layer sizes {sizes} do not match {tuple(expected_sizes)}")
    return MlpParams.from_flat(doc["params"], sizes), doc.get("meta", {})


def hyper_dict(hyper: TrainHyper) -> dict:
    return asdict(hyper)
