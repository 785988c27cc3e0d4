"""Parameter types shared by the single-SU and SU-cluster systems.

Link quality is always stored as a *success* (non-outage) probability;
outage is derived on demand.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from typing import Any, Mapping


class SpecError(ValueError):
    """Raised when a parameter set violates one or more invariants.

    ``problems`` holds one message per violated invariant, each starting
    with the offending field name.
    """

    def __init__(self, problems: list[str]):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


class Mode(str, enum.Enum):
    COOPERATIVE = "cooperative"
    NON_COOPERATIVE = "non_cooperative"


@dataclass(frozen=True)
class SingleSu:
    @property
    def k(self) -> int:
        return 1


@dataclass(frozen=True)
class Cluster:
    k: int = 2


Topology = SingleSu | Cluster


@dataclass(frozen=True)
class LinkProfile:
    """Per-slot success probabilities of the four links.

    For a cluster the values describe one (statistically equivalent) node.
    """

    p_pspd: float  # PU source -> PU destination
    p_psss: float  # PU source -> SU (node)
    p_sspd: float  # SU (node) -> PU destination
    p_sssd: float  # SU (node) -> SU destination

    def outage(self, name: str) -> float:
        return 1.0 - getattr(self, name)


@dataclass(frozen=True)
class EnergyProfile:
    lambda_ep: float
    lambda_es: float


@dataclass(frozen=True)
class ArrivalPoint:
    lambda_p: float
    lambda_s: float


@dataclass(frozen=True)
class SystemSpec:
    links: LinkProfile
    energy: EnergyProfile
    topology: Topology = field(default_factory=SingleSu)
    mode: Mode = Mode.COOPERATIVE

    def __post_init__(self):
        # accept "cooperative" etc.; an unknown string is left for validate() to report
        if not isinstance(self.mode, Mode):
            try:
                object.__setattr__(self, "mode", Mode(str(self.mode).lower()))
            except ValueError:
                pass

    @property
    def k(self) -> int:
        return self.topology.k

    @property
    def cooperative(self) -> bool:
        return self.mode is Mode.COOPERATIVE

    def with_energy(self, lambda_ep: float | None = None, lambda_es: float | None = None) -> "SystemSpec":
        e = self.energy
        return replace(
            self,
            energy=EnergyProfile(
                e.lambda_ep if lambda_ep is None else lambda_ep,
                e.lambda_es if lambda_es is None else lambda_es,
            ),
        )

    def with_mode(self, mode: Mode) -> "SystemSpec":
        return replace(self, mode=Mode(mode))


def cluster_boost(p_bar: float, k: int) -> float:
    """Success probability of the best of ``k`` i.i.d. links: 1 - (1 - p)^k."""
    if isinstance(k, bool) or int(k) != k or k < 1:
        raise ValueError(f"k must be a positive integer, got {k!r}")
    if not 0.0 <= p_bar <= 1.0 or math.isnan(p_bar):
        raise ValueError(f"p_bar must lie in [0, 1], got {p_bar!r}")
    if k == 1:
        return float(p_bar)  # exact, so Cluster(1) reproduces SingleSu bit for bit
    return 1.0 - (1.0 - p_bar) ** int(k)


def _check_prob(problems: list[str], name: str, value: Any) -> None:
    if not isinstance(value, (int, float)) or isinstance(value, bool) or math.isnan(value):
        problems.append(f"{name}: expected a number, got {value!r}")
    elif not 0.0 <= value <= 1.0:
        problems.append(f"{name}: {value} outside [0, 1]")


def validate(spec: SystemSpec) -> SystemSpec:
    """Return ``spec`` unchanged, or raise :class:`SpecError` listing every violation."""
    problems: list[str] = []
    for name in ("p_pspd", "p_psss", "p_sspd", "p_sssd"):
        _check_prob(problems, name, getattr(spec.links, name))
    for name in ("lambda_ep", "lambda_es"):
        _check_prob(problems, name, getattr(spec.energy, name))
    topo = spec.topology
    if isinstance(topo, Cluster):
        if isinstance(topo.k, bool) or not isinstance(topo.k, int) or topo.k < 1:
            problems.append(f"topology: cluster size K must be an integer >= 1, got {topo.k!r}")
    elif not isinstance(topo, SingleSu):
        problems.append(f"topology: unknown topology {topo!r}")
    if not isinstance(spec.mode, Mode):
        problems.append(f"mode: unknown mode {spec.mode!r}")
    if problems:
        raise SpecError(problems)
    return spec


def validate_point(point: ArrivalPoint) -> ArrivalPoint:
    problems: list[str] = []
    _check_prob(problems, "lambda_p", point.lambda_p)
    _check_prob(problems, "lambda_s", point.lambda_s)
    if problems:
        raise SpecError(problems)
    return point


# -- structured config documents -------------------------------------------

def spec_to_dict(spec: SystemSpec) -> dict[str, Any]:
    topo: dict[str, Any]
    if isinstance(spec.topology, Cluster):
        topo = {"kind": "cluster", "k": spec.topology.k}
    else:
        topo = {"kind": "single"}
    return {
        "mode": spec.mode.value,
        "topology": topo,
        "links": {
            "p_pspd": spec.links.p_pspd,
            "p_psss": spec.links.p_psss,
            "p_sspd": spec.links.p_sspd,
            "p_sssd": spec.links.p_sssd,
        },
        "energy": {
            "lambda_ep": spec.energy.lambda_ep,
            "lambda_es": spec.energy.lambda_es,
        },
    }


def spec_from_dict(doc: Mapping[str, Any]) -> SystemSpec:
    """Build and validate a spec from a nested mapping (as parsed from TOML)."""
    problems: list[str] = []
    links_doc = doc.get("links", {})
    energy_doc = doc.get("energy", {})
    topo_doc = doc.get("topology", {"kind": "single"})
    if isinstance(topo_doc, str):
        topo_doc = {"kind": topo_doc}

    def pick(section: Mapping[str, Any], key: str, section_name: str) -> float:
        if key not in section:
            problems.append(f"{key}: missing from [{section_name}]")
            return float("nan")
        return section[key]

    links = LinkProfile(*(pick(links_doc, n, "links") for n in ("p_pspd", "p_psss", "p_sspd", "p_sssd")))
    energy = EnergyProfile(*(pick(energy_doc, n, "energy") for n in ("lambda_ep", "lambda_es")))

    kind = str(topo_doc.get("kind", "single")).lower()
    topology: Topology
    if kind in ("single", "single_su", "singlesu"):
        topology = SingleSu()
    elif kind == "cluster":
        topology = Cluster(topo_doc.get("k", 2))
    else:
        problems.append(f"topology: unknown kind {kind!r}")
        topology = SingleSu()

    try:
        mode = Mode(str(doc.get("mode", Mode.COOPERATIVE.value)).lower())
    except ValueError:
        problems.append(f"mode: unknown mode {doc.get('mode')!r}")
        mode = Mode.COOPERATIVE

    if problems:
        raise SpecError(problems)
    return validate(SystemSpec(links, energy, topology, mode))


def spec_to_toml(spec: SystemSpec) -> str:
    import tomli_w

    return tomli_w.dumps(spec_to_dict(spec))


def spec_from_toml(text: str) -> SystemSpec:
    return spec_from_dict(load_toml_text(text))


def load_toml_text(text: str) -> dict[str, Any]:
    try:
        import tomllib  # type: ignore[import-not-found]
    except ModuleNotFoundError:  # pragma: no cover - python < 3.11
        import tomli as tomllib
    return tomllib.loads(text)
