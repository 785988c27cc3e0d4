"""Slotted Monte Carlo simulator for the energy-harvesting cooperative system.

One episode is a sequential state machine over Q_p, Q_ep, Q_ps and the
per-node Q_s / Q_es queues. By default the original work-conserving
scheduler runs. Passing ``dominant`` switches to the dummy-packet dominant
system together with the saturated-PU battery model that the closed forms
assume, which lets the empirical service rates be compared against
:func:`ehcrn.analytic.dominant_rates` directly.

Empirical service rates are *service-opportunity* rates: the fraction of
post-warmup slots in which the queue would have lost a packet had it been
non-empty. This is the mean of the service process that Loynes' criterion
compares against the arrival rate.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Iterable, Sequence

import numpy as np

from . import _kernels as K
from .analytic import (
    RegionBoundary,
    ServiceRates,
    Variant,
    max_su_rate,
    pu_service_rate,
)
from .model import ArrivalPoint, SpecError, SystemSpec, cluster_boost, spec_to_dict, validate, validate_point

BLOCK = 1 << 15
N_SAMPLES = 100


class SimulationError(RuntimeError):
    """A queue went negative; the state machine is broken."""


@dataclass(frozen=True)
class SimConfig:
    spec: SystemSpec
    point: ArrivalPoint
    a: float = 0.5
    slots: int = 1_000_000
    seed: int = 0
    warmup: int | None = None  # default 10% of slots
    dominant: Variant | None = None
    saturate_pu: bool | None = None  # default: on iff dominant

    @property
    def warmup_slots(self) -> int:
        return self.slots // 10 if self.warmup is None else int(self.warmup)

    @property
    def pu_saturated(self) -> bool:
        return self.dominant is not None if self.saturate_pu is None else bool(self.saturate_pu)

    def validate(self) -> "SimConfig":
        validate(self.spec)
        validate_point(self.point)
        problems = []
        if not 0.0 <= self.a <= 1.0:
            problems.append(f"a: {self.a} outside [0, 1]")
        if int(self.slots) != self.slots or self.slots < 1:
            problems.append(f"slots: must be a positive integer, got {self.slots!r}")
        if self.warmup_slots < 0 or self.warmup_slots >= self.slots:
            problems.append(f"warmup: need 0 <= warmup < slots, got {self.warmup_slots}")
        if not 0 <= int(self.seed) < 2**64:
            problems.append(f"seed: must fit in 64 unsigned bits, got {self.seed!r}")
        if self.dominant is not None:
            Variant(self.dominant)
        if problems:
            raise SpecError(problems)
        return self


@dataclass
class SimStats:
    slots: int
    delivered_pu: float
    delivered_su: float
    mean_qlen: dict[str, float]
    growth_slope: dict[str, float]
    empirical_mu: dict[str, float]
    empirical: dict[str, float] = field(default_factory=dict)
    counters: dict[str, int] = field(default_factory=dict)

    def service_rates(self) -> ServiceRates:
        return ServiceRates(**{f: self.empirical[f] for f in ServiceRates.__dataclass_fields__})

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)


def queue_names(k: int) -> list[str]:
    return ["Qp", "Qep", "Qps", "Qs", "Qes"] + [f"Qs{j + 1}" for j in range(k)] + [f"Qes{j + 1}" for j in range(k)]


def _slope(samples: np.ndarray, times: np.ndarray) -> np.ndarray:
    x = times - times.mean()
    denom = float(x @ x)
    if denom == 0.0:
        return np.zeros(samples.shape[1])
    return (x @ (samples - samples.mean(axis=0))) / denom


def _sample_times(warmup: int, slots: int) -> np.ndarray:
    n = min(N_SAMPLES, slots - warmup)
    return np.unique(np.linspace(warmup, slots - 1, n).round().astype(np.int64))


def run_episode(cfg: SimConfig) -> SimStats:
    cfg.validate()
    spec = cfg.spec
    k = spec.k
    ln, en = spec.links, spec.energy
    system = {None: K.ORIGINAL, Variant.DOMINANT_I: K.DOMINANT_I, Variant.DOMINANT_II: K.DOMINANT_II}[
        None if cfg.dominant is None else Variant(cfg.dominant)
    ]
    relay_ok_p = cluster_boost(ln.p_sspd, k)
    own_ok_p = cluster_boost(ln.p_sssd, k)

    state = np.zeros(K.S_NODES + 2 * k, dtype=np.int64)
    counters = np.zeros(K.N_COUNTERS, dtype=np.int64)
    qsum = np.zeros(K.N_FLOATS)
    node_harv = np.zeros(k, dtype=np.int64)
    node_used = np.zeros(k, dtype=np.int64)
    times = _sample_times(cfg.warmup_slots, cfg.slots)
    samples = np.zeros((times.size, 5 + 2 * k), dtype=np.int64)

    rng = np.random.Generator(np.random.PCG64(int(cfg.seed)))
    ncol = K.slot_columns(k)
    warmup = cfg.warmup_slots
    snap_c = counters.copy()
    snap_q = qsum.copy()
    t0 = 0
    edges = sorted({0, warmup, cfg.slots} | set(range(0, cfg.slots, BLOCK)))
    for lo, hi in zip(edges[:-1], edges[1:]):
        if lo == warmup:
            snap_c = counters.copy()
            snap_q = qsum.copy()
        u = rng.random((hi - lo, ncol))
        local = times[(times >= lo) & (times < hi)] - lo
        bad = K.slot_block(
            u, state, counters, qsum, node_harv, node_used, samples, local,
            k, ln.p_pspd, ln.p_psss, relay_ok_p, own_ok_p,
            en.lambda_ep, en.lambda_es, cfg.point.lambda_p, cfg.point.lambda_s, cfg.a,
            spec.cooperative, system, cfg.pu_saturated,
        )
        if bad >= 0:
            raise SimulationError(f"negative queue at slot {lo + bad}: state={state.tolist()}")
        t0 = hi
    assert t0 == cfg.slots

    post = counters - snap_c
    qpost = qsum - snap_q
    n = cfg.slots - warmup
    c = post
    idle = int(c[K.C_IDLE])

    names = queue_names(k)
    # samples columns: Qp, Qep, Qps, Qs, Qes, Qs1..QsK, Qes1..QesK
    slopes = _slope(samples.astype(float), times.astype(float))
    growth = {name: float(v) for name, v in zip(names, slopes)}
    mean_q = {
        "Qp": qpost[K.F_QP] / n,
        "Qep": qpost[K.F_QEP] / n,
        "Qps": qpost[K.F_QPS] / n,
        "Qs": qpost[K.F_QS] / n,
        "Qes": qpost[K.F_QES] / n,
    }
    empirical = {
        "mu_p": c[K.C_OPP_P] / n,
        "mu_ps": c[K.C_OPP_PS] / n,
        "mu_s": c[K.C_OPP_S] / (k * n),
        "p_idle": idle / n,
        "p_es_nonempty": c[K.C_IDLE_ENERGY] / idle if idle else 0.0,
        "lambda_ps": c[K.C_RELAY_IN] / n,
    }
    empirical = {key: float(v) for key, v in empirical.items()}
    counter_names = [
        "arrivals_pu", "delivered_direct", "delivered_relay", "relay_in", "arrivals_su",
        "delivered_su", "harvested_pu", "consumed_pu", "pu_transmissions", "idle_slots",
        "idle_with_energy", "opp_p", "opp_ps", "opp_s", "su_transmissions", "dummy_packets",
        "harvested_su", "consumed_su",
    ]
    totals = {name: int(v) for name, v in zip(counter_names, counters)}
    totals.update({f"post_{name}": int(v) for name, v in zip(counter_names, post)})
    totals["final_Qp"] = int(state[K.S_QP])
    totals["final_Qep"] = int(state[K.S_QEP])
    totals["final_Qps"] = int(state[K.S_QPS])
    for j in range(k):
        totals[f"harvested_Qes{j + 1}"] = int(node_harv[j])
        totals[f"consumed_Qes{j + 1}"] = int(node_used[j])
        totals[f"final_Qs{j + 1}"] = int(state[K.S_NODES + j])
        totals[f"final_Qes{j + 1}"] = int(state[K.S_NODES + k + j])
    return SimStats(
        slots=int(cfg.slots),
        delivered_pu=float((c[K.C_DEL_DIRECT] + c[K.C_DEL_RELAY]) / n),
        delivered_su=float(c[K.C_DEL_S] / (k * n)),
        mean_qlen={key: float(v) for key, v in mean_q.items()},
        growth_slope=growth,
        empirical_mu={"Qp": empirical["mu_p"], "Qps": empirical["mu_ps"], "Qs": empirical["mu_s"]},
        empirical=empirical,
        counters=totals,
    )


def default_slope_tol(slots: int) -> float:
    return 10.0 / math.sqrt(slots)


def boundary_slope_tol(slots: int) -> float:
    return 2.0 / math.sqrt(slots)


def classify_stability(stats: SimStats, slope_tol: float | None = None) -> dict[str, str]:
    tol = default_slope_tol(stats.slots) if slope_tol is None else slope_tol
    return {name: ("Unstable" if slope > tol else "Stable") for name, slope in stats.growth_slope.items()}


DATA_QUEUES = ("Qp", "Qps", "Qs")


def data_queues_stable(stats: SimStats, slope_tol: float | None = None) -> bool:
    verdict = classify_stability(stats, slope_tol)
    return all(verdict[q] == "Stable" for q in DATA_QUEUES)


def _majority_stable(
    spec: SystemSpec, point: ArrivalPoint, a: float, slots: int, seeds: Sequence[int],
    dominant: Variant | None, slope_tol: float | None,
) -> bool:
    votes = 0
    for s in seeds:
        st = run_episode(SimConfig(spec, point, a, slots, int(s), dominant=dominant))
        votes += data_queues_stable(st, slope_tol)
    return 2 * votes > len(seeds)


def estimate_boundary(
    spec: SystemSpec,
    a: float,
    lambda_p_grid: Iterable[float],
    slots: int = 200_000,
    seeds: int = 3,
    dominant: Variant | None = None,
    tol: float = 0.005,
    slope_tol: float | None = None,
    base_seed: int = 0,
) -> RegionBoundary:
    """Monte Carlo boundary by bisection on lambda_s at each lambda_p.

    The bisection bracket is [0, 1]; each probe is a majority vote over
    ``seeds`` independent episodes. A point just outside the region grows
    at roughly the rate excess, so the default slope threshold sits at the
    noise floor ``2/sqrt(slots)`` rather than the looser classification
    default; otherwise the boundary is biased outward by the threshold.
    """
    validate(spec)
    if slope_tol is None:
        slope_tol = boundary_slope_tol(slots)
    grid = np.asarray(list(lambda_p_grid), dtype=float)
    mu_p = pu_service_rate(spec)
    if np.any(grid < 0) or np.any(grid >= mu_p):
        raise ValueError(f"lambda_p grid must lie in [0, {mu_p})")
    out = []
    for i, lp in enumerate(grid):
        seed_list = [base_seed + 1000 * i + s for s in range(seeds)]
        lo, hi = 0.0, 1.0
        if not _majority_stable(spec, ArrivalPoint(float(lp), 0.0), a, slots, seed_list, dominant, slope_tol):
            out.append(0.0)
            continue
        while hi - lo > tol:
            mid = 0.5 * (lo + hi)
            if _majority_stable(spec, ArrivalPoint(float(lp), mid), a, slots, seed_list, dominant, slope_tol):
                lo = mid
            else:
                hi = mid
        out.append(0.5 * (lo + hi))
    meta = {
        "source": "montecarlo",
        "spec": spec_to_dict(spec),
        "a": a,
        "dominant": None if dominant is None else Variant(dominant).value,
        "slots": slots,
        "seeds": seeds,
        "tol": tol,
        "slope_tol": slope_tol,
    }
    return RegionBoundary(grid, np.array(out), meta)


def interior_points(
    spec: SystemSpec, n: int, rng: np.random.Generator, margin: float = 0.8, a_steps: int = 21,
) -> list[tuple[ArrivalPoint, Variant, float]]:
    """Random points strictly inside the analytic region, each with a (variant, a) that admits it.

    lambda_s is drawn up to ``margin`` times the boundary value and
    lambda_p up to ``margin`` times mu_p, so queues stay away from
    criticality and converge within a desk-scale episode.
    """
    from .analytic import stable_point

    mu_p = pu_service_rate(spec)
    a_grid = np.linspace(0.0, 1.0, a_steps)
    out: list[tuple[ArrivalPoint, Variant, float]] = []
    while len(out) < n:
        lp = float(rng.uniform(0.0, margin * mu_p))
        top = max_su_rate(spec, lp, a_grid)
        if top <= 0.0:
            continue
        ls = float(rng.uniform(0.05, margin) * top)
        point = ArrivalPoint(lp, ls)
        # demand slack on every queue, not just feasibility
        shrunk = ArrivalPoint(min(lp / margin, 0.999 * mu_p), ls / margin)
        admissible = [
            (variant, float(a))
            for variant in Variant
            for a in a_grid
            if stable_point(spec, variant, float(a), shrunk)
        ]
        if not admissible:
            continue
        best = admissible[int(rng.integers(len(admissible)))]
        out.append((point, best[0], best[1]))
    return out
