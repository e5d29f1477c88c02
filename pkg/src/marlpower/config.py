"""Run configuration: one flat record covering simulation, training and output."""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field, fields

from .dqn import TrainHyper
from .simcore import PF, SUM_RATE, SimConfig

ALLOCATORS = ("dqn-matched", "dqn-unmatched", "wmmse", "fp", "central", "random", "full-power")
BASELINES = ("wmmse", "fp", "central", "random", "full-power")


@dataclass
class RunConfig:
    # network and channel
    n_cells: int = 19
    R: float = 500.0
    r: float = 10.0
    links_per_cell: int | list[int] = 1
    bandwidth: float = 10e6
    p_max_dbm: float = 38.0
    noise_dbm: float = -114.0
    T: float = 0.02
    f_d: float | str = 10.0
    eta: float = 5.0
    sinr_cap_db: float = 30.0
    beta: float = 0.01
    mode: str = SUM_RATE
    # learner
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
    n_neighbors: int = 5
    levels: int = 10
    train_slots: int = 40_000
    test_slots: int = 5_000
    # baselines
    solver_tol: float = 1e-6
    solver_max_iter: int = 500
    # experiment
    allocators: list[str] = field(default_factory=lambda: list(ALLOCATORS[:1] + BASELINES))
    checkpoint: str | None = None
    seeds: list[int] = field(default_factory=lambda: list(range(10)))
    out_dir: str = "runs"
    moving_average: int = 250
    per_slot_log: bool = False

    def __post_init__(self):
        if self.mode in ("pf", "PF"):
            self.mode = PF
        unknown = set(self.allocators) - set(ALLOCATORS)
        if unknown:
            raise ValueError(f"unknown allocators {sorted(unknown)}")
        if "dqn-unmatched" in self.allocators and not self.checkpoint:
            raise ValueError("dqn-unmatched needs a checkpoint path")
        self.sim_config(0)  # validate
        self.hyper()

    def sim_config(self, seed: int) -> SimConfig:
        lpc = self.links_per_cell
        return SimConfig(
            n_cells=self.n_cells, R=self.R, r=self.r,
            links_per_cell=tuple(lpc) if isinstance(lpc, list) else lpc,
            bandwidth=self.bandwidth, p_max_dbm=self.p_max_dbm, noise_dbm=self.noise_dbm,
            T=self.T, f_d=self.f_d, eta=self.eta, sinr_cap_db=self.sinr_cap_db,
            beta=self.beta, mode=self.mode, seed=seed,
        )

    def hyper(self) -> TrainHyper:
        names = {f.name for f in fields(TrainHyper)}
        kw = {k: v for k, v in self.to_dict().items() if k in names}
        kw["memory_per_agent"] = self.memory_per_agent
        return TrainHyper(**kw)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        extra = set(d) - known
        if extra:
            raise ValueError(f"unknown config fields {sorted(extra)}")
        return cls(**d)

    @classmethod
    def from_json(cls, path) -> "RunConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def field_types() -> dict[str, object]:
    return {f.name: f.type for f in fields(RunConfig)}


__all__ = ["RunConfig", "ALLOCATORS", "BASELINES", "PF", "SUM_RATE"]
