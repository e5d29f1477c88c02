"""Time-slotted network engine.

A :class:`SlotState` describes the network at the *beginning* of slot ``t``:
the new gains ``g_now`` are known, the powers for slot ``t`` are not yet
chosen. :meth:`Network.step` applies the slot-``t`` powers, evaluates the
slot, updates weights and neighbour sets, advances the fading and returns the
state for slot ``t + 1``.

Gain matrices are indexed ``g[tx, rx]``.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from .channel import FadingProcess, compose_gains
from .geometry import LargeScaleGains, NetworkLayout, compose_large_scale, make_layout

SUM_RATE = "sum-rate"
PF = "proportional-fair"
MODES = (SUM_RATE, PF)
CBAR_FLOOR = 1e-6


def dbm_to_watt(dbm: float) -> float:
    return 10.0 ** ((dbm - 30.0) / 10.0)


@dataclass
class SimConfig:
    n_cells: int = 19
    R: float = 500.0
    r: float = 10.0
    links_per_cell: int | tuple[int, int] = 1
    bandwidth: float = 10e6
    p_max_dbm: float = 38.0
    noise_dbm: float = -114.0
    T: float = 0.02
    f_d: float | str = 10.0
    eta: float = 5.0
    sinr_cap_db: float = 30.0
    beta: float = 0.01
    mode: str = SUM_RATE
    seed: int = 0

    def __post_init__(self):
        if isinstance(self.links_per_cell, list):
            self.links_per_cell = tuple(self.links_per_cell)
        if self.eta <= 0:
            raise ValueError("eta must be positive")
        if not 0 < self.beta <= 1:
            raise ValueError("beta must lie in (0, 1]")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if not 10 <= self.r <= self.R - 1:
            raise ValueError("inner radius r must satisfy 10 <= r <= R - 1")

    # PSDs over the band; only their ratio matters for SINR
    @property
    def P_max(self) -> float:
        return dbm_to_watt(self.p_max_dbm) / self.bandwidth

    @property
    def sigma2(self) -> float:
        return dbm_to_watt(self.noise_dbm) / self.bandwidth

    @property
    def sinr_cap(self) -> float:
        return 10.0 ** (self.sinr_cap_db / 10.0)


def interference_plus_noise(g: np.ndarray, p: np.ndarray, sigma2: float) -> np.ndarray:
    """sum_{j != i} g[j, i] p[j] + sigma2 for every receiver i."""
    total = g.T @ p
    return total - np.diag(g) * p + sigma2


def sinr(g: np.ndarray, p: np.ndarray, sigma2: float, i: int | None = None):
    """SINR of every link, or of link ``i`` only."""
    p = np.asarray(p, dtype=float)
    if i is not None:
        interf = sum(g[j, i] * p[j] for j in range(len(p)) if j != i)
        return g[i, i] * p[i] / (interf + sigma2)
    return np.diag(g) * p / interference_plus_noise(g, p, sigma2)


def spectral_efficiency(gamma, cap: float = 1e3):
    """log2(1 + min(gamma, cap)) in bit/s/Hz."""
    out = np.log2(1.0 + np.minimum(gamma, cap))
    return float(out) if np.ndim(out) == 0 else out


def pf_update(cbar, c, beta: float):
    """Exponential rate average and the proportional-fair weight 1/average.

    An all-zero history would give an infinite weight; the average is floored
    at CBAR_FLOOR before inversion.
    """
    if not 0 < beta <= 1:
        raise ValueError("beta must lie in (0, 1]")
    cbar_new = beta * np.asarray(c, dtype=float) + (1.0 - beta) * np.asarray(cbar, dtype=float)
    w_new = 1.0 / np.maximum(cbar_new, CBAR_FLOOR)
    return cbar_new, w_new


def neighbor_masks(g_prev: np.ndarray, p_prev: np.ndarray, eta: float, sigma2: float) -> np.ndarray:
    """Boolean M with M[j, i] true when transmitter j is heard at receiver i above eta*sigma2.

    Column i is the interferer set of i; row j is the interfered set of j.
    """
    rx = g_prev * np.asarray(p_prev, dtype=float)[:, None]
    mask = rx > eta * sigma2
    np.fill_diagonal(mask, False)
    return mask


def neighbor_sets(g_prev, p_prev, eta: float, sigma2: float):
    """(interferer sets, interfered sets) as lists of index arrays."""
    mask = neighbor_masks(g_prev, p_prev, eta, sigma2)
    n = mask.shape[0]
    interferers = [np.flatnonzero(mask[:, i]) for i in range(n)]
    interfered = [np.flatnonzero(mask[i, :]) for i in range(n)]
    return interferers, interfered


def objective(w, c) -> float:
    w = np.asarray(w, dtype=float)
    c = np.asarray(c, dtype=float)
    if w.shape != c.shape:
        raise ValueError("weights and efficiencies must have equal length")
    return float(np.dot(w, c))


def log_avg_objective(cbar, bandwidth: float = 10e6) -> float:
    """Sum over links of ln(average rate in bit/s)."""
    cbar = np.asarray(cbar, dtype=float)
    if np.any(cbar <= 0):
        raise ValueError("average spectral efficiencies must be positive")
    return float(np.sum(np.log(cbar * bandwidth)))


@dataclass
class SlotState:
    """Network snapshot at the beginning of slot ``t`` (see module docstring).

    ``*_prev`` registers hold slot ``t-1`` values and ``*_prev2`` slot ``t-2``;
    ``w_now`` is the weight used in slot ``t``.
    """

    t: int
    p_prev: np.ndarray
    p_prev2: np.ndarray
    g_now: np.ndarray
    g_prev: np.ndarray
    C_prev: np.ndarray
    C_prev2: np.ndarray
    w_now: np.ndarray
    w_prev: np.ndarray
    w_prev2: np.ndarray
    Cbar: np.ndarray
    interf_noise_now: np.ndarray  # sum_j g_now[j,i] p_prev[j] + s2
    interf_noise_prev: np.ndarray  # sum_j g_prev[j,i] p_prev2[j] + s2
    interf_noise_last: np.ndarray  # realised in slot t-1: sum_j g_prev[j,i] p_prev[j] + s2
    I_now: np.ndarray  # mask from (g_prev, p_prev)
    I_prev: np.ndarray  # mask from (g_prev2, p_prev2)
    t_last_active: np.ndarray
    last_active_rx: np.ndarray  # row i: g[i, :] * p_i at slot t_last_active[i]
    sigma2: float = field(default=0.0, repr=False)

    @property
    def n(self) -> int:
        return len(self.p_prev)

    @property
    def O_now(self) -> np.ndarray:
        """Interfered mask O[i, k]; identical to I_now read row-wise."""
        return self.I_now

    def interferers(self, i: int) -> np.ndarray:
        return np.flatnonzero(self.I_now[:, i])

    def interfered(self, i: int) -> np.ndarray:
        return np.flatnonzero(self.I_now[i, :])


@dataclass
class SlotRecord:
    t: int
    p: np.ndarray
    sinr: np.ndarray
    C: np.ndarray
    w: np.ndarray
    Cbar: np.ndarray


class Network:
    """Ground-truth simulator for one layout and one channel realisation.

    Layout, shadowing and fading use independent random streams derived from
    ``config.seed``, so every allocator run on the same config sees identical
    channels regardless of the powers it picks.
    """

    def __init__(self, config: SimConfig, layout: NetworkLayout | None = None,
                 large_scale: LargeScaleGains | None = None):
        self.config = config
        seq = np.random.SeedSequence(config.seed)
        layout_ss, shadow_ss, fading_ss = seq.spawn(3)
        if layout is None:
            layout_seed = int(layout_ss.generate_state(1)[0])
            layout = make_layout(config.n_cells, config.R, config.r, config.links_per_cell, layout_seed)
        self.layout = layout
        if large_scale is None:
            large_scale = compose_large_scale(layout, np.random.default_rng(shadow_ss))
        self.large_scale = large_scale
        self.n = layout.n_links
        self._fading_seed = fading_ss
        self.fading = None
        self.state: SlotState | None = None

    @property
    def alpha(self) -> np.ndarray:
        return self.large_scale.alpha

    def _gains(self) -> np.ndarray:
        return compose_gains(self.large_scale, self.fading.state)

    def evaluate(self, g: np.ndarray, p: np.ndarray):
        cfg = self.config
        gam = sinr(g, p, cfg.sigma2)
        return gam, spectral_efficiency(gam, cfg.sinr_cap)

    def reset(self, start_slot: int = 0) -> SlotState:
        """Bootstrap slot ``start_slot`` at full power and return the next slot's state.

        Fading is fast-forwarded from slot 0 so the channel at a given slot does
        not depend on where the run starts. PF averages are seeded with the
        full-power rates.
        """
        cfg = self.config
        self.fading = FadingProcess(self.n, cfg.f_d, cfg.T, np.random.default_rng(self._fading_seed))
        self.fading.advance(start_slot)
        g0 = self._gains()
        p0 = np.full(self.n, cfg.P_max)
        _, c0 = self.evaluate(g0, p0)
        if cfg.mode == PF:
            cbar = np.maximum(c0, CBAR_FLOOR)
            w0 = 1.0 / cbar
        else:
            cbar = c0.copy()
            w0 = np.ones(self.n)
        self.fading.step()
        g1 = self._gains()
        mask = neighbor_masks(g0, p0, cfg.eta, cfg.sigma2)
        in0 = interference_plus_noise(g0, p0, cfg.sigma2)
        self.state = SlotState(
            t=start_slot + 1,
            p_prev=p0, p_prev2=p0.copy(),
            g_now=g1, g_prev=g0,
            C_prev=c0, C_prev2=c0.copy(),
            w_now=w0.copy(), w_prev=w0.copy(), w_prev2=w0.copy(),
            Cbar=cbar,
            interf_noise_now=interference_plus_noise(g1, p0, cfg.sigma2),
            interf_noise_prev=in0, interf_noise_last=in0.copy(),
            I_now=mask, I_prev=mask.copy(),
            t_last_active=np.full(self.n, start_slot),
            last_active_rx=g0 * p0[:, None],
            sigma2=cfg.sigma2,
        )
        return self.state

    def reset_weights(self) -> SlotState:
        """Re-seed PF averages from full-power rates on the current gains."""
        st = self.state
        if self.config.mode == PF:
            _, c = self.evaluate(st.g_now, np.full(self.n, self.config.P_max))
            st.Cbar = np.maximum(c, CBAR_FLOOR)
            st.w_now = 1.0 / st.Cbar
        return st

    def step(self, p_new) -> tuple[SlotState, SlotRecord]:
        cfg = self.config
        st = self.state
        p = np.clip(np.asarray(p_new, dtype=float), 0.0, cfg.P_max)
        if p.shape != (self.n,):
            raise ValueError(f"expected {self.n} powers, got shape {p.shape}")
        g = st.g_now
        gam, c = self.evaluate(g, p)
        if cfg.mode == PF:
            cbar, w_next = pf_update(st.Cbar, c, cfg.beta)
        else:
            cbar = (1 - cfg.beta) * st.Cbar + cfg.beta * c
            w_next = np.ones(self.n)
        mask = neighbor_masks(g, p, cfg.eta, cfg.sigma2)
        active = p > 0
        t_last = np.where(active, st.t, st.t_last_active)
        last_rx = st.last_active_rx.copy()
        last_rx[active] = g[active] * p[active, None]
        record = SlotRecord(t=st.t, p=p, sinr=gam, C=c, w=st.w_now, Cbar=cbar)

        self.fading.step()
        g_next = self._gains()
        self.state = SlotState(
            t=st.t + 1,
            p_prev=p, p_prev2=st.p_prev,
            g_now=g_next, g_prev=g,
            C_prev=c, C_prev2=st.C_prev,
            w_now=w_next, w_prev=st.w_now, w_prev2=st.w_prev,
            Cbar=cbar,
            interf_noise_now=interference_plus_noise(g_next, p, cfg.sigma2),
            interf_noise_prev=st.interf_noise_now,
            interf_noise_last=interference_plus_noise(g, p, cfg.sigma2),
            I_now=mask, I_prev=st.I_now,
            t_last_active=t_last,
            last_active_rx=last_rx,
            sigma2=cfg.sigma2,
        )
        return self.state, record


def replace(state: SlotState, **changes) -> SlotState:
    return dataclasses.replace(state, **changes)
