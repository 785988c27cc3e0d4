"""Closed-form service rates and stable-throughput regions.

Both topologies go through the same code: the single-SU system is the
``K = 1`` cluster, where the order-statistics boost is the identity and the
per-node access share ``1/K`` is 1.

All regions are inner bounds: the PU battery is treated as drained every
slot (service rate 1), and the SU queues are decoupled through the two
dummy-packet dominant systems.
"""

from __future__ import annotations

import csv
import enum
import io
import json
from dataclasses import asdict, dataclass, field
from typing import Any, Iterable, Sequence

import numpy as np

from .model import ArrivalPoint, EnergyProfile, LinkProfile, SystemSpec, cluster_boost, spec_to_dict, validate

DEFAULT_A_STEPS = 101
DEFAULT_TOL = 1e-4


class PuUnstable(ValueError):
    """The PU data queue cannot be stable at this arrival rate."""


class RelayStarved(ValueError):
    """Dominant system II with zero SU service but positive SU arrivals."""


class Variant(str, enum.Enum):
    DOMINANT_I = "I"  # dummies from the SU data queue(s)
    DOMINANT_II = "II"  # dummies from the relay queue


@dataclass(frozen=True)
class ServiceRates:
    mu_p: float
    mu_ps: float
    mu_s: float
    p_idle: float
    p_es_nonempty: float
    lambda_ps: float


def _stable(arrival: float, service: float) -> bool:
    # a queue that never receives packets stays empty
    return arrival == 0.0 or arrival < service


def _direct_plus_relay(spec: SystemSpec) -> float:
    """Per-attempt probability that a PU packet leaves Q_p."""
    ln = spec.links
    if not spec.cooperative:
        return ln.p_pspd
    return ln.p_pspd + (1.0 - ln.p_pspd) * cluster_boost(ln.p_psss, spec.k)


def pu_service_rate(spec: SystemSpec) -> float:
    return _direct_plus_relay(spec) * spec.energy.lambda_ep


def _pu_activity(spec: SystemSpec, lambda_p: float) -> float:
    """lambda_ep * lambda_p / mu_p: fraction of slots in which the PU transmits."""
    if lambda_p == 0.0:
        return 0.0
    mu_p = pu_service_rate(spec)
    if lambda_p >= mu_p:
        raise PuUnstable(f"lambda_p={lambda_p} >= mu_p={mu_p}")
    return spec.energy.lambda_ep * lambda_p / mu_p


def idle_probability(spec: SystemSpec, lambda_p: float) -> float:
    return min(1.0, max(0.0, 1.0 - _pu_activity(spec, lambda_p)))


def battery_nonempty_probability(spec: SystemSpec, p_idle: float) -> float:
    """Per-node SU battery occupancy, clamped at 1.

    Each node's battery is drained at rate ``p_idle / K`` (it is picked in
    one of K shares of the idle slots), so occupancy is ``K lambda_es / p_idle``.
    """
    demand = spec.k * spec.energy.lambda_es
    if p_idle <= 0.0:
        return 1.0 if demand > 0.0 else 0.0
    return min(1.0, demand / p_idle)


def relay_arrival_rate(spec: SystemSpec, lambda_p: float) -> float:
    if not spec.cooperative:
        return 0.0
    ln = spec.links
    return (1.0 - ln.p_pspd) * cluster_boost(ln.p_psss, spec.k) * _pu_activity(spec, lambda_p)


def dominant_rates(spec: SystemSpec, variant: Variant, a: float, point: ArrivalPoint) -> ServiceRates:
    """Service rates of one dominant system at one arrival point.

    In non-cooperative mode the relay queue does not exist; ``variant`` and
    ``a`` are ignored and the SU node is served in every idle slot it has
    energy for.
    """
    if not 0.0 <= a <= 1.0:
        raise ValueError(f"service probability a={a} outside [0, 1]")
    variant = Variant(variant)
    k = spec.k
    share = 1.0 / k
    ln = spec.links
    mu_p = pu_service_rate(spec)
    p_idle = idle_probability(spec, point.lambda_p)
    p_es = battery_nonempty_probability(spec, p_idle)
    # slots in which the selected node is both idle-licensed and energised
    avail = p_es * p_idle
    sd = cluster_boost(ln.p_sssd, k)
    lam_ps = relay_arrival_rate(spec, point.lambda_p)

    if not spec.cooperative:
        mu_s = share * sd * avail
        return ServiceRates(mu_p, 0.0, mu_s, p_idle, p_es, 0.0)

    relay = cluster_boost(ln.p_sspd, k)
    a_bar = 1.0 - a
    if variant is Variant.DOMINANT_I:
        mu_ps = relay * avail * a_bar
        # a-independent once mu_ps is substituted
        mu_s = share * sd * (avail - lam_ps / relay) if relay > 0.0 else share * sd * avail
        mu_s = max(0.0, mu_s)
    else:
        mu_s = share * sd * avail * a
        if mu_s == 0.0:
            if point.lambda_s > 0.0:
                raise RelayStarved(f"mu_s=0 with lambda_s={point.lambda_s} (a={a})")
            empty = 1.0
        else:
            empty = min(1.0, max(0.0, 1.0 - point.lambda_s / mu_s))
        mu_ps = relay * avail * (a_bar + a * empty**k)
    return ServiceRates(mu_p, mu_ps, mu_s, p_idle, p_es, lam_ps)


def stable_point(spec: SystemSpec, variant: Variant, a: float, point: ArrivalPoint) -> bool:
    """Strict Loynes test on Q_p, Q_ps and Q_s of one dominant system."""
    lp, ls = point.lambda_p, point.lambda_s
    if not (0.0 <= lp <= 1.0 and 0.0 <= ls <= 1.0):
        return False
    try:
        r = dominant_rates(spec, variant, a, point)
    except (PuUnstable, RelayStarved):
        return False
    return _stable(lp, r.mu_p) and _stable(r.lambda_ps, r.mu_ps) and _stable(ls, r.mu_s)


def non_cooperative_su_rate(spec: SystemSpec, lambda_p: float) -> float:
    """Per-node SU service rate without cooperation (0 if the PU is unstable)."""
    nc = spec.with_mode("non_cooperative")
    try:
        return dominant_rates(nc, Variant.DOMINANT_I, 0.0, ArrivalPoint(lambda_p, 0.0)).mu_s
    except PuUnstable:
        return 0.0


def _bisect_lambda_s(spec: SystemSpec, variant: Variant, a: float, lambda_p: float, hi: float, tol: float) -> float:
    lo = 0.0
    if not stable_point(spec, variant, a, ArrivalPoint(lambda_p, lo)):
        return 0.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if stable_point(spec, variant, a, ArrivalPoint(lambda_p, mid)):
            lo = mid
        else:
            hi = mid
    return lo


def max_su_rate(
    spec: SystemSpec,
    lambda_p: float,
    a_grid: Sequence[float] | None = None,
    tol: float = DEFAULT_TOL,
) -> float:
    """Largest sustainable per-node SU rate at ``lambda_p`` over the union of dominant systems.

    Returns 0 when the PU queue itself is unstable at ``lambda_p``.
    """
    if lambda_p > 0.0 and lambda_p >= pu_service_rate(spec):
        return 0.0
    if not spec.cooperative:
        return non_cooperative_su_rate(spec, lambda_p)
    if a_grid is None:
        a_grid = np.linspace(0.0, 1.0, DEFAULT_A_STEPS)
    best = 0.0
    for variant in Variant:
        for a in a_grid:
            a = float(a)
            try:
                hi = dominant_rates(spec, variant, a, ArrivalPoint(lambda_p, 0.0)).mu_s
            except PuUnstable:
                return 0.0
            # lambda_s < mu_s is necessary, and mu_s at lambda_s = 0 bounds it above
            if hi <= best:
                continue
            best = max(best, _bisect_lambda_s(spec, variant, a, lambda_p, min(1.0, hi), tol))
    return best


@dataclass
class RegionBoundary:
    lambda_p: np.ndarray
    lambda_s_max: np.ndarray
    meta: dict[str, Any] = field(default_factory=dict)

    @property
    def points(self) -> list[tuple[float, float]]:
        return list(zip(self.lambda_p.tolist(), self.lambda_s_max.tolist()))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["lambda_p", "lambda_s_max"])
        for lp, ls in self.points:
            w.writerow([fmt(lp), fmt(ls)])
        return buf.getvalue()

    def to_json(self) -> str:
        doc = {
            "meta": self.meta,
            "points": [{"lambda_p": lp, "lambda_s_max": ls} for lp, ls in self.points],
        }
        return json.dumps(doc, indent=2, sort_keys=True)

    @classmethod
    def from_csv(cls, text: str, meta: dict[str, Any] | None = None) -> "RegionBoundary":
        rows = list(csv.DictReader(io.StringIO(text)))
        return cls(
            np.array([float(r["lambda_p"]) for r in rows]),
            np.array([float(r["lambda_s_max"]) for r in rows]),
            dict(meta or {}),
        )


def fmt(x: float) -> str:
    """10 significant digits, locale independent."""
    return format(float(x), ".10g")


def lambda_p_grid(spec: SystemSpec, steps: int) -> np.ndarray:
    """Uniform grid over [0, mu_p) that stops one step short of mu_p."""
    if steps < 2:
        raise ValueError("lambda_p_steps must be >= 2")
    return np.arange(steps) * (pu_service_rate(spec) / steps)


def region_envelope(
    spec: SystemSpec,
    lambda_p_steps: int = 201,
    a_steps: int = DEFAULT_A_STEPS,
    tol: float = DEFAULT_TOL,
    grid: Iterable[float] | None = None,
    a_values: Sequence[float] | None = None,
) -> RegionBoundary:
    """Sample the region boundary; ``grid`` overrides the default [0, mu_p) grid.

    ``a_values`` replaces the uniform a-grid, e.g. a single value for the
    union of the two dominant systems at one service probability.
    """
    validate(spec)
    if a_values is None and a_steps < 2:
        raise ValueError("a_steps must be >= 2")
    lp = lambda_p_grid(spec, lambda_p_steps) if grid is None else np.asarray(list(grid), dtype=float)
    if lp.size == 0:
        raise ValueError("empty lambda_p grid")
    if np.any(np.diff(lp) <= 0):
        raise ValueError("lambda_p grid must be strictly increasing")
    a_grid = np.linspace(0.0, 1.0, a_steps) if a_values is None else np.asarray(a_values, dtype=float)
    if a_grid.size == 0 or np.any((a_grid < 0) | (a_grid > 1)):
        raise ValueError("a values must be non-empty and lie in [0, 1]")
    ls = np.array([max_su_rate(spec, float(x), a_grid, tol) for x in lp])
    meta = {
        "source": "analytic",
        "spec": spec_to_dict(spec),
        "lambda_p_steps": int(lp.size),
        "a_steps": int(a_grid.size),
        "tol": tol,
        "clamp": "battery occupancy min(1, K*lambda_es/P_I)",
    }
    return RegionBoundary(lp, ls, meta)


def dominant_boundary(
    spec: SystemSpec,
    variant: Variant,
    a: float,
    lambda_p_steps: int = 201,
    tol: float = DEFAULT_TOL,
    grid: Iterable[float] | None = None,
) -> RegionBoundary:
    """Boundary of one dominant system at a fixed service probability ``a``."""
    validate(spec)
    variant = Variant(variant)
    lp = lambda_p_grid(spec, lambda_p_steps) if grid is None else np.asarray(list(grid), dtype=float)
    if lp.size == 0:
        raise ValueError("empty lambda_p grid")
    out = []
    for x in lp:
        x = float(x)
        try:
            hi = dominant_rates(spec, variant, a, ArrivalPoint(x, 0.0)).mu_s
        except PuUnstable:
            out.append(0.0)
            continue
        out.append(_bisect_lambda_s(spec, variant, a, x, min(1.0, hi), tol) if hi > 0.0 else 0.0)
    meta = {
        "source": "analytic",
        "spec": spec_to_dict(spec),
        "variant": variant.value,
        "a": float(a),
        "lambda_p_steps": int(lp.size),
        "tol": tol,
    }
    return RegionBoundary(lp, np.array(out), meta)


def crossover_rate(spec: SystemSpec) -> float:
    """Closed-form PU arrival rate where the two SU service rates coincide.

    Equates the battery-limited cooperative SU rate with the idle-limited
    non-cooperative one: ``(1 - K lambda_es) / D``. Zero for a non-positive
    numerator (cooperation is never worse). See :func:`boundary_crossing`
    for where the two region boundaries actually meet.
    """
    ln = spec.links
    k = spec.k
    numer = 1.0 - k * spec.energy.lambda_es
    if numer <= 0.0 or ln.p_pspd == 0.0:
        return 0.0
    q = (1.0 - ln.p_pspd) * cluster_boost(ln.p_psss, k)
    relay = cluster_boost(ln.p_sspd, k)
    if relay == 0.0:
        return 0.0
    # numer / D with D = 1/p - q/(relay (p + q)), multiplied through by p
    denom = 1.0 - (ln.p_pspd / (ln.p_pspd + q)) * (q / relay)
    return numer * ln.p_pspd / denom if denom > 0.0 else 0.0


def non_cooperative_pu_rate(spec: SystemSpec) -> float:
    """PU service rate without relaying: ``lambda_ep * P_pspd``."""
    return spec.energy.lambda_ep * spec.links.p_pspd


def boundary_crossing(spec: SystemSpec) -> float:
    """PU arrival rate where the cooperative and non-cooperative boundaries meet.

    The closed form assumes the non-cooperative PU queue is still stable.
    Past ``non_cooperative_pu_rate`` that region has ended, and the two
    boundaries meet on its vertical edge instead. Zero without SU energy,
    where both SU boundaries vanish.
    """
    if spec.energy.lambda_es == 0.0:
        return 0.0
    return min(crossover_rate(spec), non_cooperative_pu_rate(spec))


def max_pu_rate_vs_k(links: LinkProfile, energy: EnergyProfile, k_list: Sequence[int]) -> list[float]:
    if len(k_list) == 0:
        raise ValueError("k_list must be non-empty")
    return [
        energy.lambda_ep * (links.p_pspd + (1.0 - links.p_pspd) * cluster_boost(links.p_psss, int(k)))
        for k in k_list
    ]


def rates_dict(rates: ServiceRates) -> dict[str, float]:
    return asdict(rates)
