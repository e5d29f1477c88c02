"""Gauss-Markov (Jakes) small-scale fading and composite channel gains."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import LargeScaleGains

UNCORRELATED = math.inf  # Doppler sentinel: rho = 0


def bessel_j0(x: float) -> float:
    """J0 by its ascending power series. Accurate to ~1e-12 for |x| <= 8."""
    x = abs(float(x))
    if x > 8.0:
        raise ValueError("power series J0 is only used for |x| <= 8")
    q = -(x * x) / 4.0
    term = 1.0
    total = 1.0
    k = 0
    while True:
        k += 1
        term *= q / (k * k)
        total += term
        if abs(term) < 1e-17:
            return total


def correlation_rho(f_d: float, T: float) -> float:
    """Lag-one correlation J0(2*pi*f_d*T); an infinite Doppler gives 0."""
    if T <= 0:
        raise ValueError("slot duration must be positive")
    if f_d < 0:
        raise ValueError("Doppler frequency must be nonnegative")
    if math.isinf(f_d):
        return 0.0
    return bessel_j0(2.0 * math.pi * f_d * T)


def correlation_rho_array(f_d: np.ndarray, T: float) -> np.ndarray:
    """Vectorised J0(2*pi*f_d*T) for per-pair Doppler draws (same series)."""
    x = 2.0 * np.pi * np.asarray(f_d, dtype=float) * T
    if np.any(np.abs(x) > 8.0):
        raise ValueError("power series J0 is only used for |x| <= 8")
    q = -(x * x) / 4.0
    term = np.ones_like(x)
    total = np.ones_like(x)
    for k in range(1, 40):
        term = term * q / (k * k)
        total = total + term
    return total


def cscg(shape, rng: np.random.Generator) -> np.ndarray:
    """Unit-variance circularly symmetric complex Gaussian samples."""
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) * math.sqrt(0.5)


@dataclass
class FadingState:
    h: np.ndarray
    rho: float | np.ndarray
    slot: int = 0


def init_fading(n: int, rng: np.random.Generator, rho: float | np.ndarray = 0.0) -> FadingState:
    if n < 1:
        raise ValueError("n must be >= 1")
    return FadingState(h=cscg((n, n), rng), rho=rho, slot=0)


def step_fading(state: FadingState, rng: np.random.Generator, rho=None) -> FadingState:
    """One slot of h <- rho*h + sqrt(1-rho^2)*e with fresh innovation e.

    ``rho`` overrides the stored correlation (scalar or per-entry array).
    """
    rho = state.rho if rho is None else rho
    e = cscg(state.h.shape, rng)
    h = rho * state.h + np.sqrt(1.0 - np.square(rho)) * e
    return FadingState(h=h, rho=rho, slot=state.slot + 1)


def compose_gains(alpha: LargeScaleGains | np.ndarray, fading: FadingState | np.ndarray) -> np.ndarray:
    """g = |h|^2 * alpha, elementwise."""
    a = alpha.alpha if isinstance(alpha, LargeScaleGains) else np.asarray(alpha)
    h = fading.h if isinstance(fading, FadingState) else np.asarray(fading)
    if a.shape != h.shape:
        raise ValueError(f"dimension mismatch: alpha {a.shape} vs h {h.shape}")
    return (h.real**2 + h.imag**2) * a


class FadingProcess:
    """Drives a FadingState with a fixed Doppler or a per-pair, per-slot random one.

    ``f_d`` may be a number, ``UNCORRELATED`` (``math.inf``) or the string
    ``"random"``, which redraws f_d ~ U[doppler_range] for every directed pair
    in every slot.
    """

    def __init__(self, n: int, f_d, T: float, rng: np.random.Generator,
                 doppler_range: tuple[float, float] = (2.0, 15.0)):
        self.n = n
        self.f_d = f_d
        self.T = T
        self.rng = rng
        self.doppler_range = doppler_range
        self.random_doppler = isinstance(f_d, str)
        if self.random_doppler and f_d != "random":
            raise ValueError(f"unknown Doppler setting {f_d!r}")
        rho = 0.0 if self.random_doppler else correlation_rho(float(f_d), T)
        self.state = init_fading(n, rng, rho)

    def step(self) -> FadingState:
        rho = None
        if self.random_doppler:
            lo, hi = self.doppler_range
            rho = correlation_rho_array(self.rng.uniform(lo, hi, size=(self.n, self.n)), self.T)
        self.state = step_fading(self.state, self.rng, rho)
        return self.state

    def advance(self, slots: int) -> FadingState:
        for _ in range(slots):
            self.step()
        return self.state
