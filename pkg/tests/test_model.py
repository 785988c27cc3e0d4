import math

import pytest
from hypothesis import given, strategies as st

from ehcrn.model import (
    ArrivalPoint, Cluster, EnergyProfile, LinkProfile, Mode, SingleSu, SpecError, SystemSpec,
    cluster_boost, spec_from_dict, spec_from_toml, spec_to_dict, spec_to_toml, validate, validate_point,
)
from systems import single, cluster


@pytest.mark.parametrize("p,k,expected", [(0.4, 1, 0.4), (0.4, 2, 0.64), (0.0, 7, 0.0)])
def test_cluster_boost_values(p, k, expected):
    assert cluster_boost(p, k) == pytest.approx(expected, abs=1e-15)


def test_cluster_boost_limit():
    assert cluster_boost(0.4, 64) > 0.999999


@given(st.floats(0, 1), st.integers(1, 50), st.integers(1, 50))
def test_cluster_boost_monotone_in_k(p, k1, k2):
    lo, hi = sorted((k1, k2))
    assert cluster_boost(p, hi) >= cluster_boost(p, lo) - 1e-15
    assert cluster_boost(p, 1) == p


@pytest.mark.parametrize("k", [0, -1, 1.5, True])
def test_cluster_boost_rejects_bad_k(k):
    with pytest.raises(ValueError):
        cluster_boost(0.5, k)


def test_outage_is_complement():
    ln = LinkProfile(0.3, 0.4, 0.7, 0.75)
    assert ln.outage("p_pspd") == pytest.approx(0.7)
    assert ln.outage("p_sssd") == pytest.approx(0.25)


def test_validate_identity():
    s = single(0.6, 0.6)
    assert validate(s) is s


def test_validate_names_field():
    bad = SystemSpec(LinkProfile(1.2, 0.4, 0.7, 0.7), EnergyProfile(1, 1))
    with pytest.raises(SpecError) as exc:
        validate(bad)
    assert exc.value.problems[0].startswith("p_pspd")


def test_validate_cluster_size():
    with pytest.raises(SpecError) as exc:
        validate(cluster(k=0))
    assert any(p.startswith("topology") for p in exc.value.problems)


def test_validate_collects_every_problem():
    bad = SystemSpec(LinkProfile(-0.1, 2, 0.5, 0.5), EnergyProfile(1.5, float("nan")), Cluster(0))
    with pytest.raises(SpecError) as exc:
        validate(bad)
    names = {p.split(":")[0] for p in exc.value.problems}
    assert names == {"p_pspd", "p_psss", "lambda_ep", "lambda_es", "topology"}


def test_validate_point():
    assert validate_point(ArrivalPoint(0.1, 0.2)) == ArrivalPoint(0.1, 0.2)
    with pytest.raises(SpecError):
        validate_point(ArrivalPoint(0.1, 1.5))


def test_single_su_is_k1():
    assert SingleSu().k == 1
    assert single().k == 1
    assert cluster(k=3).k == 3


def test_with_energy_and_mode():
    s = single(1.0, 1.0).with_energy(lambda_es=0.5).with_mode("non_cooperative")
    assert s.energy == EnergyProfile(1.0, 0.5)
    assert s.mode is Mode.NON_COOPERATIVE and not s.cooperative


@pytest.mark.parametrize("spec", [single(0.6, 0.5), cluster(0.5, 0.38, k=3, mode="non_cooperative")])
def test_dict_and_toml_round_trip(spec):
    assert spec_from_dict(spec_to_dict(spec)) == spec
    assert spec_from_toml(spec_to_toml(spec)) == spec


def test_spec_from_dict_reports_missing_and_unknown():
    with pytest.raises(SpecError) as exc:
        spec_from_dict({"mode": "sometimes", "links": {"p_pspd": 0.3}, "topology": {"kind": "ring"}})
    text = " ".join(exc.value.problems)
    for word in ("p_psss", "lambda_ep", "topology", "mode"):
        assert word in text


def test_spec_from_dict_string_topology():
    doc = spec_to_dict(single())
    doc["topology"] = "single"
    assert spec_from_dict(doc).k == 1
