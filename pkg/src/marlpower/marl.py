"""Agents: local state construction, epsilon-greedy actions, rewards, and the
centrally trained / distributively executed learning loop."""
from __future__ import annotations

import logging
import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .config import RunConfig
from .dqn import (LAYER_SIZES, MlpParams, ReplayMemory, RMSProp, forward, init_params,
                  loss_and_grad, schedule)
from .geometry import path_loss_db
from .simcore import Network, SimConfig, SlotState

log = logging.getLogger(__name__)

N_LOCAL = 7
VIRTUAL_INV_W = -1.0
VIRTUAL_C = -1.0


def state_length(c: int = 5) -> int:
    return N_LOCAL + 6 * c + 4 * c


# -- actions -------------------------------------------------------------------

def action_set(P_max: float, levels: int = 10) -> np.ndarray:
    """``levels`` evenly spaced powers from 0 to P_max inclusive."""
    if levels <= 1:
        raise ValueError("need more than one power level")
    return np.arange(levels) * (P_max / (levels - 1))


def select_action(q_values, eps: float, rng: np.random.Generator) -> int:
    """Greedy with probability 1 - eps (ties -> lowest index), else uniform."""
    if not 0 <= eps <= 1:
        raise ValueError("eps must lie in [0, 1]")
    q = np.asarray(q_values)
    if eps > 0 and rng.random() < eps:
        return int(rng.integers(len(q)))
    return int(np.argmax(q))


def select_actions(q: np.ndarray, eps: float, rng: np.random.Generator) -> np.ndarray:
    """Row-wise select_action for a (n_agents, n_actions) array."""
    a = np.argmax(q, axis=1)
    if eps > 0:
        explore = rng.random(len(a)) < eps
        a = np.where(explore, rng.integers(q.shape[1], size=len(a)), a)
    return a


# -- neighbour ranking ---------------------------------------------------------

def _top_c(members: np.ndarray, key: np.ndarray, c: int) -> list[int]:
    """Members sorted by descending key, ties to the lower index, truncated to c."""
    members = np.asarray(members, dtype=int)
    if members.size == 0:
        return []
    order = np.lexsort((members, -key[members]))
    return [int(x) for x in members[order[:c]]]


def rank_and_pad_interferers(members, received, inv_w, eff, c: int = 5):
    """Strongest ``c`` interferers as (received power, 1/w, C) triples.

    Missing slots are virtual noise agents ``(0, -1, -1)``. ``received``,
    ``inv_w`` and ``eff`` are indexed by link.
    """
    chosen = _top_c(members, np.asarray(received), c)
    rows = [(float(received[j]), float(inv_w[j]), float(eff[j])) for j in chosen]
    rows += [(0.0, VIRTUAL_INV_W, VIRTUAL_C)] * (c - len(rows))
    return chosen, rows


def rank_and_pad_interfered(members, share, direct_gain, inv_w, eff, c: int = 5):
    """Interfered neighbours ranked by this agent's share of their interference.

    Rows are (direct gain of k, 1/w_k, C_k, share); virtual rows ``(0, -1, -1, 0)``.
    """
    chosen = _top_c(members, np.asarray(share), c)
    rows = [(float(direct_gain[k]), float(inv_w[k]), float(eff[k]), float(share[k])) for k in chosen]
    rows += [(0.0, VIRTUAL_INV_W, VIRTUAL_C, 0.0)] * (c - len(rows))
    return chosen, rows


# -- state construction --------------------------------------------------------

@dataclass
class StateScaler:
    """Affine/log maps that bring raw features to order-one values.

    Power-like quantities x (W/Hz) become 10*log10(1 + x/sigma2), i.e. dB above
    noise (zero maps to 0 dB), then are centred and scaled by the direct-link
    SNR range of the geometry: full power at the inner radius r versus the
    cell corner. Powers are divided by P_max, 1/w and C by the capped
    efficiency log2(1 + cap). Interference shares use 10*log10(1 + share)/10.
    """

    P_max: float
    sigma2: float
    center_db: float
    half_db: float
    eff_scale: float

    @classmethod
    def for_config(cls, cfg: SimConfig) -> "StateScaler":
        snr0 = 10 * math.log10(cfg.P_max / cfg.sigma2)
        hi = snr0 - path_loss_db(cfg.r / 1000.0)
        lo = snr0 - path_loss_db(2 * cfg.R / math.sqrt(3) / 1000.0)
        return cls(P_max=cfg.P_max, sigma2=cfg.sigma2, center_db=(hi + lo) / 2,
                   half_db=max((hi - lo) / 2, 1.0), eff_scale=math.log2(1 + cfg.sinr_cap))

    def rx(self, x):
        return (10 * np.log10(1 + np.asarray(x) / self.sigma2) - self.center_db) / self.half_db

    def gain(self, g):
        return self.rx(np.asarray(g) * self.P_max)

    def interf(self, total):
        return self.rx(np.asarray(total) - self.sigma2)

    def share(self, s):
        return 10 * np.log10(1 + np.asarray(s)) / 10

    def raw_to_normalized(self, raw: np.ndarray, c: int = 5) -> np.ndarray:
        """Map raw state vector(s) (layout of build_raw_state) to network input."""
        raw = np.asarray(raw, dtype=float)
        groups = _feature_groups(c)
        x = np.empty_like(raw)
        x[..., groups["power"]] = raw[..., groups["power"]] / self.P_max
        x[..., groups["eff"]] = raw[..., groups["eff"]] / self.eff_scale
        x[..., groups["gain"]] = self.gain(raw[..., groups["gain"]])
        x[..., groups["interf"]] = self.interf(raw[..., groups["interf"]])
        x[..., groups["rx"]] = self.rx(raw[..., groups["rx"]])
        x[..., groups["share"]] = self.share(raw[..., groups["share"]])
        return x


_GROUP_CACHE: dict[int, dict[str, np.ndarray]] = {}


def _feature_groups(c: int) -> dict[str, np.ndarray]:
    """Index sets of each feature kind within a state vector."""
    if c not in _GROUP_CACHE:
        g = {"power": [0], "eff": [1, 2], "gain": [3, 4], "interf": [5, 6], "rx": [], "share": []}
        k = N_LOCAL
        for _ in range(2 * c):
            g["rx"].append(k)
            g["eff"] += [k + 1, k + 2]
            k += 3
        for _ in range(c):
            g["gain"].append(k)
            g["eff"] += [k + 1, k + 2]
            g["share"].append(k + 3)
            k += 4
        _GROUP_CACHE[c] = {name: np.array(v, dtype=int) for name, v in g.items()}
    return _GROUP_CACHE[c]


def interfered_members(st: SlotState, i: int, eta: float) -> np.ndarray:
    """Receivers that heard transmitter i above eta*sigma2 in its last active slot."""
    rx = st.last_active_rx[i]
    mask = rx > eta * st.sigma2
    mask[i] = False
    return np.flatnonzero(mask)


def build_raw_state(st: SlotState, i: int, eta: float, c: int = 5) -> np.ndarray:
    """Unnormalised local state of agent ``i`` at the beginning of slot st.t."""
    loc = [st.p_prev[i], 1.0 / st.w_now[i], st.C_prev[i], st.g_now[i, i], st.g_prev[i, i],
           st.interf_noise_now[i], st.interf_noise_prev[i]]
    rec_now = st.g_now[:, i] * st.p_prev
    _, now_rows = rank_and_pad_interferers(np.flatnonzero(st.I_now[:, i]), rec_now,
                                           1.0 / st.w_prev, st.C_prev, c)
    rec_prev = st.g_prev[:, i] * st.p_prev2
    _, prev_rows = rank_and_pad_interferers(np.flatnonzero(st.I_prev[:, i]), rec_prev,
                                            1.0 / st.w_prev2, st.C_prev2, c)
    share = st.last_active_rx[i] / st.interf_noise_last
    _, out_rows = rank_and_pad_interfered(interfered_members(st, i, eta), share,
                                          np.diag(st.g_prev), 1.0 / st.w_prev, st.C_prev, c)
    vec = loc + [v for row in now_rows + prev_rows + out_rows for v in row]
    return np.array(vec, dtype=float)


def build_state(st: SlotState, i: int, scaler: StateScaler, eta: float, c: int = 5) -> np.ndarray:
    return scaler.raw_to_normalized(build_raw_state(st, i, eta, c), c)


def build_states(st: SlotState, scaler: StateScaler, eta: float, c: int = 5) -> np.ndarray:
    raw = np.stack([build_raw_state(st, i, eta, c) for i in range(st.n)])
    return scaler.raw_to_normalized(raw, c)


def virtual_row_values(scaler: StateScaler) -> tuple[np.ndarray, np.ndarray]:
    """Normalised values of a padded interferer row and a padded interfered row."""
    raw = np.zeros(state_length())
    raw[5:7] = scaler.sigma2
    raw[N_LOCAL:] = np.tile([0.0, VIRTUAL_INV_W, VIRTUAL_C], 10).tolist() + \
        np.tile([0.0, VIRTUAL_INV_W, VIRTUAL_C, 0.0], 5).tolist()
    x = scaler.raw_to_normalized(raw)
    return x[N_LOCAL:N_LOCAL + 3], x[N_LOCAL + 30:N_LOCAL + 34]


# -- rewards -------------------------------------------------------------------

def externality_matrix(st: SlotState, cfg: SimConfig) -> np.ndarray:
    """pi[i, k]: weighted rate link k loses to transmitter i in the slot just played.

    Only pairs with k in the interfered set of i (mask of the next slot) are
    nonzero. ``st`` is the state returned by the step that played the slot.
    """
    g, p = st.g_prev, st.p_prev
    rx = g * p[:, None]
    without = np.maximum(st.interf_noise_last[None, :] - rx, cfg.sigma2)
    direct = np.diag(g) * p
    c_wo = np.log2(1.0 + np.minimum(direct[None, :] / without, cfg.sinr_cap))
    pi = st.w_prev[None, :] * (c_wo - st.C_prev[None, :])
    return np.where(st.I_now, pi, 0.0)


def compute_rewards(st: SlotState, cfg: SimConfig) -> np.ndarray:
    """Rewards of all agents for the slot just played (read from its successor state)."""
    return st.w_prev * st.C_prev - externality_matrix(st, cfg).sum(axis=1)


def compute_reward(st: SlotState, i: int, cfg: SimConfig) -> float:
    return float(compute_rewards(st, cfg)[i])


# -- training and testing ------------------------------------------------------

@dataclass
class Broadcast:
    slot: int          # simulator slot of the broadcast; -inf-like for the initial copy
    active_from: int
    params: MlpParams


@dataclass
class TrainResult:
    params: MlpParams
    slot_mean_rate: np.ndarray        # per-slot average spectral efficiency per link
    slot_objective: np.ndarray        # per-slot weighted sum-rate
    losses: np.ndarray
    agent_version_slot: np.ndarray    # broadcast slot of the parameters used at each slot
    sum_log_rate: np.ndarray = field(default_factory=lambda: np.zeros(0))
    start_slot: int = 1


@dataclass
class TestResult:
    slot_mean_rate: np.ndarray
    link_mean_rate: np.ndarray
    slot_objective: np.ndarray
    sum_log_rate: np.ndarray
    records: list = field(default_factory=list)
    rewards: list = field(default_factory=list)

    @property
    def average(self) -> float:
        return float(np.mean(self.slot_mean_rate))


def _streams(seed: int):
    """Independent generators for parameter init, exploration and minibatches."""
    ss = np.random.SeedSequence([seed, 0xD0])
    return [np.random.default_rng(s) for s in ss.spawn(3)]


def _sum_log(cbar, bandwidth):
    return float(np.sum(np.log(np.maximum(cbar, 1e-300) * bandwidth)))


def run_training(config: RunConfig, seed: int, progress_every: int = 0) -> TrainResult:
    """Train one shared DQN on the layout of ``seed`` for config.train_slots slots."""
    cfg = config.sim_config(seed)
    hyper = config.hyper()
    c = config.n_neighbors
    if state_length(c) != LAYER_SIZES[0]:
        raise ValueError("neighbour count does not match the network input size")
    net = Network(cfg)
    st = net.reset(0)
    scaler = StateScaler.for_config(cfg)
    actions = action_set(cfg.P_max, config.levels)
    init_rng, explore_rng, batch_rng = _streams(seed)
    sizes = LAYER_SIZES[:-1] + (config.levels,)
    params = init_params(init_rng, sizes, hyper.init_std)
    target = params.copy()
    rms = RMSProp(params, hyper.rms_decay, hyper.rms_eps)
    mem = ReplayMemory(net.n * hyper.memory_per_agent, sizes[0])
    pending: deque[Broadcast] = deque()
    agent = Broadcast(slot=-hyper.T_d, active_from=0, params=params.copy())

    n_slots = config.train_slots
    rates = np.zeros(n_slots)
    objs = np.zeros(n_slots)
    losses = np.full(n_slots, np.nan)
    versions = np.zeros(n_slots, dtype=int)
    sum_log = np.zeros(n_slots)
    prev = None        # (states, actions, rewards) of the previous slot
    in_flight = None   # experience formed last slot, delivered to the trainer this slot

    for tau in range(n_slots):
        t = st.t
        while pending and pending[0].active_from <= t:
            agent = pending.popleft()
        states = build_states(st, scaler, cfg.eta, c)

        # trainer side: deliver the experience formed one slot ago, then learn
        if in_flight is not None:
            mem.push(*in_flight)
        in_flight = (prev[0], prev[1], prev[2], states) if prev is not None else None
        lr, eps = schedule(tau, hyper)
        if len(mem) >= hyper.batch_size:
            batch = mem.sample(hyper.batch_size, batch_rng)
            loss, grad = loss_and_grad(params, batch, target, hyper.gamma)
            rms.step(params, grad, lr)
            losses[tau] = loss
        if tau > 0 and tau % hyper.T_u == 0:
            target = params.copy()
            pending.append(Broadcast(slot=t, active_from=t + hyper.T_d, params=params.copy()))

        # agent side
        q = forward(agent.params, states)
        a = select_actions(q, eps, explore_rng)
        versions[tau] = agent.slot
        st, rec = net.step(actions[a])
        r = compute_rewards(st, cfg)
        prev = (states, a, r)
        rates[tau] = rec.C.mean()
        objs[tau] = float(np.dot(rec.w, rec.C))
        sum_log[tau] = _sum_log(rec.Cbar, cfg.bandwidth)
        if progress_every and (tau + 1) % progress_every == 0:
            lo = max(0, tau + 1 - progress_every)
            log.info("seed %d slot %d: mean rate %.3f eps %.4f lr %.2e", seed, tau + 1,
                     rates[lo:tau + 1].mean(), eps, lr)
    return TrainResult(params=params, slot_mean_rate=rates, slot_objective=objs, losses=losses,
                       agent_version_slot=versions, sum_log_rate=sum_log, start_slot=1)


def run_policy(config: RunConfig, seed: int, policy, start_slot: int | None = None,
               n_slots: int | None = None, keep_records: bool = False) -> TestResult:
    """Run ``policy(state, network) -> powers`` over the testing window.

    The network is bootstrapped at full power in slot ``start_slot`` (PF
    averages re-initialised there), so every allocator sees the same channel
    realisation over slots start_slot+1 .. start_slot+n_slots.
    """
    cfg = config.sim_config(seed)
    start_slot = config.train_slots if start_slot is None else start_slot
    n_slots = config.test_slots if n_slots is None else n_slots
    net = Network(cfg)
    st = net.reset(start_slot)
    rates = np.zeros(n_slots)
    objs = np.zeros(n_slots)
    sum_log = np.zeros(n_slots)
    link_sum = np.zeros(net.n)
    records, rewards = [], []
    for k in range(n_slots):
        p = policy(st, net)
        st, rec = net.step(p)
        rates[k] = rec.C.mean()
        objs[k] = float(np.dot(rec.w, rec.C))
        sum_log[k] = _sum_log(rec.Cbar, cfg.bandwidth)
        link_sum += rec.C
        if keep_records:
            records.append(rec)
            rewards.append(compute_rewards(st, cfg))
    return TestResult(slot_mean_rate=rates, link_mean_rate=link_sum / n_slots, slot_objective=objs,
                      sum_log_rate=sum_log, records=records, rewards=rewards)


def dqn_policy(params: MlpParams, config: RunConfig, seed: int):
    """Greedy distributed execution of a frozen Q-network."""
    cfg = config.sim_config(seed)
    scaler = StateScaler.for_config(cfg)
    actions = action_set(cfg.P_max, config.levels)

    def policy(st: SlotState, net: Network) -> np.ndarray:
        q = forward(params, build_states(st, scaler, cfg.eta, config.n_neighbors))
        return actions[np.argmax(q, axis=1)]

    return policy


def run_testing(config: RunConfig, seed: int, params: MlpParams, keep_records: bool = False) -> TestResult:
    """Greedy testing with frozen parameters; no exploration and no learning."""
    if params.sizes != LAYER_SIZES[:-1] + (config.levels,):
        raise ValueError(f"checkpoint layer sizes {params.sizes} do not fit this configuration")
    return run_policy(config, seed, dqn_policy(params, config, seed), keep_records=keep_records)
