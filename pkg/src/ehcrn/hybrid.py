"""Belief-driven choice between underlay access and cooperation.

The SU tracks a belief over the FSMC state of the PU direct link. When
the PU is busy it either cooperates (stays silent, relays the packet if the
direct link fails) or transmits underlay at a fraction ``psi`` of its power.
Idle slots are overlay slots: the relay queue has priority over own data.
"""

from __future__ import annotations

import csv
import enum
import io
import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

from . import _kernels as K
from .fsmc import FsmcConfig, FsmcModel, build_model, db_to_linear, snr_threshold, threshold_state
from .model import SpecError
from .slotsim import N_SAMPLES, SimStats, _sample_times, _slope


class Action(str, enum.Enum):
    COOPERATE = "cooperate"
    UNDERLAY = "underlay"


class Policy(str, enum.Enum):
    HYBRID = "hybrid"
    CONVENTIONAL = "conventional_cooperation"
    NON_COOPERATIVE = "non_cooperative"


@dataclass(frozen=True)
class Feedback:
    state: int


NO_FEEDBACK = None


@dataclass(frozen=True)
class RewardTable:
    a_coop: tuple[float, ...]
    b_under: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "a_coop", tuple(float(x) for x in self.a_coop))
        object.__setattr__(self, "b_under", tuple(float(x) for x in self.b_under))
        problems = []
        if len(self.a_coop) != len(self.b_under):
            problems.append("rewards: a_coop and b_under lengths differ")
        if any(x < 0 for x in self.a_coop + self.b_under):
            problems.append("rewards: values must be >= 0")
        if any(x > 0 and y > 0 for x, y in zip(self.a_coop, self.b_under)):
            problems.append("rewards: a_coop and b_under both nonzero in some state")
        if problems:
            raise SpecError(problems)


DEFAULT_REWARDS = RewardTable((5, 5, 5, 5, 0, 0, 0, 0), (0, 0, 0, 0, 6, 7, 8, 9))


@dataclass(frozen=True)
class BeliefVector:
    beta: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.beta, dtype=float)
        if b.ndim != 1 or np.any(b < 0) or abs(b.sum() - 1.0) > 1e-9:
            raise ValueError("belief must be a probability vector")
        object.__setattr__(self, "beta", b)

    @classmethod
    def stationary(cls, model: FsmcModel) -> "BeliefVector":
        return cls(model.pi.copy())

    @classmethod
    def point_mass(cls, m: int, state: int) -> "BeliefVector":
        b = np.zeros(m)
        b[state] = 1.0
        return cls(b)


def update_belief(belief: BeliefVector, model: FsmcModel, obs: Feedback | None) -> BeliefVector:
    if obs is not None:
        if not 0 <= obs.state < model.m:
            raise IndexError(f"feedback state {obs.state} outside [0, {model.m})")
        return BeliefVector(model.u[obs.state].copy())
    nxt = belief.beta @ model.u
    return BeliefVector(nxt / nxt.sum())


def expected_reward(belief: BeliefVector, table: RewardTable, action: Action) -> float:
    col = table.a_coop if Action(action) is Action.COOPERATE else table.b_under
    if len(col) != belief.beta.size:
        raise ValueError(f"reward table has {len(col)} states, belief has {belief.beta.size}")
    return float(np.dot(belief.beta, col))


def choose_action(belief: BeliefVector, table: RewardTable) -> Action:
    coop = expected_reward(belief, table, Action.COOPERATE)
    under = expected_reward(belief, table, Action.UNDERLAY)
    return Action.UNDERLAY if under > coop else Action.COOPERATE


@dataclass(frozen=True)
class HybridConfig:
    fsmc: FsmcConfig = field(default_factory=FsmcConfig)
    gamma_os: float = db_to_linear(45.0)
    gamma_ops: float = db_to_linear(20.0)
    r_p: float = 3.5
    r_s: float = 3.5
    psi: float = 0.2
    rewards: RewardTable = DEFAULT_REWARDS
    lambda_p: float = 0.5
    slots: int = 200_000
    seed: int = 0
    warmup: int | None = None
    policy: Policy = Policy.HYBRID
    interference: float = 2.0
    gamma_relay: float | None = None  # SU -> PU destination; defaults to the direct-link mean

    @property
    def warmup_slots(self) -> int:
        return self.slots // 10 if self.warmup is None else int(self.warmup)

    def validate(self) -> "HybridConfig":
        problems = []
        if not 0.0 <= self.psi <= 1.0:
            problems.append(f"psi: {self.psi} outside [0, 1]")
        if not 0.0 <= self.lambda_p <= 1.0:
            problems.append(f"lambda_p: {self.lambda_p} outside [0, 1]")
        for name in ("gamma_os", "gamma_ops"):
            if not getattr(self, name) > 0:
                problems.append(f"{name}: must be > 0")
        if self.r_p < 0 or self.r_s < 0:
            problems.append("r_p/r_s: must be >= 0")
        if self.interference < 0:
            problems.append(f"interference: must be >= 0, got {self.interference}")
        if int(self.slots) != self.slots or self.slots < 1:
            problems.append(f"slots: must be a positive integer, got {self.slots!r}")
        if not 0 <= self.warmup_slots < self.slots:
            problems.append(f"warmup: need 0 <= warmup < slots, got {self.warmup_slots}")
        if len(self.rewards.a_coop) != self.fsmc.m_levels:
            problems.append(f"rewards: {len(self.rewards.a_coop)} states but m_levels={self.fsmc.m_levels}")
        try:
            Policy(self.policy)
        except ValueError:
            problems.append(f"policy: unknown policy {self.policy!r}")
        if problems:
            raise SpecError(problems)
        self.fsmc.validate()
        return self


def _success(threshold: float, mean_snr: float) -> float:
    """P(Exp(mean) > threshold)."""
    if mean_snr <= 0.0:
        return 0.0
    return math.exp(-threshold / mean_snr)


def run_hybrid_episode(cfg: HybridConfig, model: FsmcModel | None = None) -> SimStats:
    cfg.validate()
    model = build_model(cfg.fsmc) if model is None else model
    m = model.m
    rho_p = snr_threshold(cfg.r_p)
    rho_s = snr_threshold(cfg.r_s)
    gamma_op = cfg.fsmc.gamma0
    th_direct = threshold_state(model, rho_p)
    th_under = threshold_state(model, rho_p * (1.0 + cfg.psi * cfg.interference))
    p_own = _success(rho_s, cfg.gamma_os)
    p_under = _success(rho_s, cfg.psi * cfg.gamma_os)
    p_relay = _success(rho_p, gamma_op if cfg.gamma_relay is None else cfg.gamma_relay)
    p_decode = _success(rho_p, cfg.gamma_ops)
    policy = {
        Policy.HYBRID: K.HYB_HYBRID,
        Policy.CONVENTIONAL: K.HYB_CONVENTIONAL,
        Policy.NON_COOPERATIVE: K.HYB_NONCOOP,
    }[Policy(cfg.policy)]

    seeds = np.random.SeedSequence(int(cfg.seed))
    rng = np.random.Generator(np.random.PCG64(seeds))
    start = int(np.searchsorted(np.cumsum(model.pi), rng.random(), side="right"))
    state = np.array([0, 0, min(start, m - 1), 0], dtype=np.int64)
    counters = np.zeros(K.HN_COUNTERS, dtype=np.int64)
    belief = model.pi.copy()
    qsum = np.zeros(2)
    warmup = cfg.warmup_slots
    times = _sample_times(warmup, cfg.slots)
    samples = np.zeros((times.size, 2), dtype=np.int64)
    a_coop = np.asarray(cfg.rewards.a_coop)
    b_under = np.asarray(cfg.rewards.b_under)
    trans = np.ascontiguousarray(model.u)
    cum = np.ascontiguousarray(model.cum)

    snap_c, snap_q = counters.copy(), qsum.copy()
    edges = sorted({0, warmup, cfg.slots} | set(range(0, cfg.slots, 1 << 15)))
    for lo, hi in zip(edges[:-1], edges[1:]):
        if lo == warmup:
            snap_c, snap_q = counters.copy(), qsum.copy()
        u = rng.random((hi - lo, 5))
        local = times[(times >= lo) & (times < hi)] - lo
        K.hybrid_block(
            u, state, counters, belief, qsum, samples, local,
            cum, trans, a_coop, b_under, th_direct, th_under,
            p_own, p_relay, p_decode, p_under, cfg.lambda_p, policy, cfg.psi > 0.0,
        )
    c = counters - snap_c
    q = qsum - snap_q
    n = cfg.slots - warmup
    slopes = _slope(samples.astype(float), times.astype(float))
    names = ["arrivals_pu", "delivered_direct", "delivered_relay", "relay_in", "delivered_su",
             "idle_slots", "underlay_slots", "cooperate_slots", "pu_transmissions"]
    totals = {name: int(v) for name, v in zip(names, counters)}
    totals.update({f"post_{name}": int(v) for name, v in zip(names, c)})
    totals["final_Qp"] = int(state[K.H_QP])
    totals["final_Qps"] = int(state[K.H_QPS])
    return SimStats(
        slots=int(cfg.slots),
        delivered_pu=float((c[K.HC_DEL_DIRECT] + c[K.HC_DEL_RELAY]) / n),
        delivered_su=float(c[K.HC_DEL_S] / n),
        mean_qlen={"Qp": float(q[0] / n), "Qps": float(q[1] / n)},
        growth_slope={"Qp": float(slopes[0]), "Qps": float(slopes[1])},
        empirical_mu={},
        empirical={
            "p_idle": float(c[K.HC_IDLE] / n),
            "underlay_fraction": float(c[K.HC_UNDERLAY] / n),
            "threshold_state_direct": float(th_direct),
            "threshold_state_underlay": float(th_under),
        },
        counters=totals,
    )


CURVE_HEADER = ("policy", "psi", "lambda_p", "su_throughput", "pu_throughput")


@dataclass
class CurveRow:
    policy: str
    psi: float
    lambda_p: float
    su_throughput: float
    pu_throughput: float


def throughput_curve(
    template: HybridConfig,
    lambda_p_grid: Iterable[float],
    policies: Sequence[Policy] = tuple(Policy),
    psis: Sequence[float] | None = None,
) -> list[CurveRow]:
    """One episode per (policy, psi, lambda_p); every episode reuses the template seed."""
    grid = [float(x) for x in lambda_p_grid]
    if any(not 0.0 <= x <= 1.0 for x in grid):
        raise ValueError("lambda_p grid must lie in [0, 1]")
    psis = [template.psi] if psis is None else [float(p) for p in psis]
    model = build_model(template.fsmc)
    rows = []
    for pol in policies:
        for psi in psis:
            for lp in grid:
                cfg = replace(template, policy=Policy(pol), psi=psi, lambda_p=lp)
                st = run_hybrid_episode(cfg, model)
                rows.append(CurveRow(Policy(pol).value, psi, lp, st.delivered_su, st.delivered_pu))
    rows.sort(key=lambda r: (r.policy, r.psi, r.lambda_p))
    return rows


def curve_to_csv(rows: Sequence[CurveRow]) -> str:
    from .analytic import fmt

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CURVE_HEADER)
    for r in rows:
        w.writerow([r.policy, fmt(r.psi), fmt(r.lambda_p), fmt(r.su_throughput), fmt(r.pu_throughput)])
    return buf.getvalue()
