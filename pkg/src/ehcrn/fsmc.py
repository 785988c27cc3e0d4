"""Finite-state Markov model of a Rayleigh-faded link.

SNR is partitioned at ``Gamma_m = exp(m * eta / B) - 1``; transitions are
adjacent-only with rates taken from the level crossing rate of the
exponential SNR distribution. All SNR quantities are linear.
"""

from __future__ import annotations

import bisect
import json
import math
from dataclasses import dataclass, field
from typing import Any, Mapping

import numpy as np

SPEED_OF_LIGHT = 2.998e8


class TransitionOverflow(ValueError):
    """Packet duration too long for the Doppler rate: some u_{m,l} leaves [0, 1]."""


def db_to_linear(x_db: float) -> float:
    return 10.0 ** (x_db / 10.0)


def parse_snr(value: Any) -> float:
    """Accept a linear number or a string such as ``"15 dB"``."""
    if isinstance(value, str):
        text = value.strip()
        if text.lower().endswith("db"):
            return db_to_linear(float(text[:-2]))
        return float(text)
    return float(value)


@dataclass(frozen=True)
class FsmcConfig:
    m_levels: int = 8
    eta: float = 3e6
    bandwidth: float = 5e6
    gamma0: float = db_to_linear(15.0)
    speed: float = 2.0
    carrier: float | None = None  # defaults to 10 * bandwidth
    tau_pkt: float = 0.1
    f_dopp: float | None = None  # overrides speed * carrier / c

    @property
    def carrier_hz(self) -> float:
        return 10.0 * self.bandwidth if self.carrier is None else self.carrier

    @property
    def doppler(self) -> float:
        if self.f_dopp is not None:
            return self.f_dopp
        return self.speed * self.carrier_hz / SPEED_OF_LIGHT

    def validate(self) -> "FsmcConfig":
        problems = []
        if int(self.m_levels) != self.m_levels or self.m_levels < 2:
            problems.append(f"m_levels: must be an integer >= 2, got {self.m_levels!r}")
        for name in ("eta", "bandwidth", "gamma0", "tau_pkt"):
            if not getattr(self, name) > 0:
                problems.append(f"{name}: must be > 0, got {getattr(self, name)!r}")
        if self.f_dopp is None:
            if not self.speed > 0:
                problems.append(f"speed: must be > 0, got {self.speed!r}")
            if not self.carrier_hz > 0:
                problems.append(f"carrier: must be > 0, got {self.carrier_hz!r}")
        elif not self.f_dopp > 0:
            problems.append(f"f_dopp: must be > 0, got {self.f_dopp!r}")
        if problems:
            from .model import SpecError

            raise SpecError(problems)
        return self

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any]) -> "FsmcConfig":
        kw: dict[str, Any] = {}
        for key in ("eta", "bandwidth", "speed", "carrier", "tau_pkt", "f_dopp"):
            if key in doc:
                kw[key] = float(doc[key])
        if "m_levels" in doc:
            kw["m_levels"] = int(doc["m_levels"])
        if "gamma0" in doc:
            kw["gamma0"] = parse_snr(doc["gamma0"])
        return cls(**kw).validate()


@dataclass(frozen=True)
class FsmcModel:
    levels: np.ndarray
    pi: np.ndarray
    crossing: np.ndarray
    u: np.ndarray
    gamma0: float
    f_dopp: float
    cum: np.ndarray = field(repr=False)

    @property
    def m(self) -> int:
        return int(self.levels.size)

    def to_json(self) -> str:
        return json.dumps(
            {
                "levels": self.levels.tolist(),
                "pi": self.pi.tolist(),
                "crossing": self.crossing.tolist(),
                "u": self.u.tolist(),
                "gamma0": self.gamma0,
                "f_dopp": self.f_dopp,
            },
            indent=2,
        )


def build_model(cfg: FsmcConfig) -> FsmcModel:
    cfg.validate()
    m = int(cfg.m_levels)
    g0 = cfg.gamma0
    fd = cfg.doppler
    idx = np.arange(m)
    levels = np.expm1(idx * cfg.eta / cfg.bandwidth)
    levels[0] = 0.0
    tail = np.exp(-levels / g0)  # P(SNR >= Gamma_m)
    pi = tail - np.append(tail[1:], 0.0)
    crossing = np.sqrt(2.0 * math.pi * levels / g0) * fd * tail

    u = np.zeros((m, m))
    # Lambda(m+1) tau / pi with the common exp(-Gamma_{m+1}/gamma0) factor
    # cancelled, so states whose pi underflows still get finite rows
    rate = np.sqrt(2.0 * math.pi * levels[1:] / g0) * fd * cfg.tau_pkt
    gaps = np.diff(levels) / g0
    with np.errstate(over="ignore"):  # a huge gap means no upward move: rate / inf = 0
        up = rate / np.expm1(gaps)  # m -> m+1
    upper_gap = np.append(-np.expm1(-gaps[1:]), 1.0)  # pi_{m+1} / exp(-Gamma_{m+1}/gamma0)
    down = rate / upper_gap  # m+1 -> m
    u[idx[:-1], idx[1:]] = up
    u[idx[1:], idx[:-1]] = down
    diag = 1.0 - u.sum(axis=1)
    if np.any(up > 1.0) or np.any(down > 1.0) or np.any(diag < 0.0):
        raise TransitionOverflow(
            f"tau_pkt={cfg.tau_pkt} s too long for f_dopp={fd:.4g} Hz "
            f"(max off-diagonal {max(up.max(), down.max()):.3g}, min diagonal {diag.min():.3g})"
        )
    u[idx, idx] = diag
    cum = np.cumsum(u, axis=1)
    cum[:, -1] = 1.0
    for arr in (levels, pi, crossing, u, cum):
        arr.setflags(write=False)
    return FsmcModel(levels, pi, crossing, u, g0, fd, cum)


def snr_threshold(rate: float) -> float:
    if rate < 0:
        raise ValueError(f"rate must be >= 0, got {rate}")
    return 2.0**rate - 1.0


def outage_probability(gamma0: float, rate: float) -> float:
    if not gamma0 > 0:
        raise ValueError(f"gamma0 must be > 0, got {gamma0}")
    return -math.expm1(-snr_threshold(rate) / gamma0)


def threshold_state(model: FsmcModel, threshold: float) -> int:
    """Lowest state whose lower SNR edge reaches ``threshold``; M if none does."""
    if threshold < 0:
        raise ValueError(f"threshold must be >= 0, got {threshold}")
    return int(np.searchsorted(model.levels, threshold, side="left"))


def sample_transition(model: FsmcModel, state: int, draw: float) -> int:
    """Inverse-CDF step from ``state`` using a uniform ``draw`` in [0, 1)."""
    if not 0 <= state < model.m:
        raise IndexError(f"state {state} outside [0, {model.m})")
    row = model.cum[state]
    nxt = int(np.searchsorted(row, draw, side="right"))
    return min(nxt, model.m - 1)


def sample_path(model: FsmcModel, start: int, draws: np.ndarray) -> np.ndarray:
    """Chain of states driven by ``draws``; element t is the state after draw t."""
    if not 0 <= start < model.m:
        raise IndexError(f"state {start} outside [0, {model.m})")
    rows = model.cum.tolist()
    top = model.m - 1
    out = np.empty(draws.size, dtype=np.int64)
    s = start
    for t, d in enumerate(draws.tolist()):
        # same rule as sample_transition, without per-step numpy overhead
        s = min(bisect.bisect_right(rows[s], d), top)
        out[t] = s
    return out
