import csv
import io
import math
from dataclasses import replace

import numpy as np
import pytest

from ehcrn.fsmc import FsmcConfig, build_model, snr_threshold
from ehcrn.hybrid import (
    CURVE_HEADER,
    DEFAULT_REWARDS,
    Action,
    BeliefVector,
    Feedback,
    HybridConfig,
    NO_FEEDBACK,
    Policy,
    RewardTable,
    choose_action,
    curve_to_csv,
    expected_reward,
    run_hybrid_episode,
    throughput_curve,
    update_belief,
)
from ehcrn.model import SpecError

GRID = np.linspace(0.05, 0.95, 10)


@pytest.fixture(scope="module")
def model():
    return build_model(FsmcConfig())


@pytest.fixture(scope="module")
def curves():
    cfg = HybridConfig(slots=100_000, seed=4)
    rows = throughput_curve(cfg, GRID, tuple(Policy))
    out = {}
    for r in rows:
        out[(r.policy, round(r.lambda_p, 6))] = r
    return out


def uniform(m=8):
    return BeliefVector(np.full(m, 1.0 / m))


def test_feedback_gives_transition_row(model):
    b = update_belief(uniform(), model, Feedback(3))
    np.testing.assert_array_equal(b.beta, model.u[3])


def test_stationary_belief_is_fixed(model):
    b = update_belief(BeliefVector.stationary(model), model, NO_FEEDBACK)
    np.testing.assert_allclose(b.beta, model.pi, atol=1e-12)


@pytest.mark.parametrize("m", range(8))
def test_point_mass_equals_feedback(model, m):
    a = update_belief(BeliefVector.point_mass(8, m), model, NO_FEEDBACK)
    b = update_belief(uniform(), model, Feedback(m))
    np.testing.assert_allclose(a.beta, b.beta, atol=1e-15)


def test_feedback_out_of_range(model):
    with pytest.raises(IndexError):
        update_belief(uniform(), model, Feedback(8))


@pytest.mark.parametrize("m", [0, 4, 7])
@pytest.mark.parametrize("k", range(6))
def test_silent_steps_match_matrix_power(model, m, k):
    b = update_belief(uniform(), model, Feedback(m))
    for _ in range(k):
        b = update_belief(b, model, NO_FEEDBACK)
    ref = np.linalg.matrix_power(model.u, k + 1)[m]
    np.testing.assert_allclose(b.beta, ref, atol=1e-10)


def test_belief_stays_valid_under_random_updates(model, rng):
    b = BeliefVector.stationary(model)
    fb = rng.random(100_000) < 0.4
    states = rng.integers(0, 8, size=fb.size)
    worst = 0.0
    for has, s in zip(fb, states):
        b = update_belief(b, model, Feedback(int(s)) if has else NO_FEEDBACK)
        assert b.beta.min() >= 0.0
        worst = max(worst, abs(b.beta.sum() - 1.0))
    assert worst <= 1e-9


def test_invalid_belief_rejected():
    with pytest.raises(ValueError):
        BeliefVector(np.array([0.5, 0.6]))
    with pytest.raises(ValueError):
        BeliefVector(np.array([1.2, -0.2]))


def test_expected_rewards_uniform():
    assert expected_reward(uniform(), DEFAULT_REWARDS, Action.COOPERATE) == pytest.approx(2.5)
    assert expected_reward(uniform(), DEFAULT_REWARDS, Action.UNDERLAY) == pytest.approx(3.75)
    assert expected_reward(BeliefVector.point_mass(8, 0), DEFAULT_REWARDS, Action.UNDERLAY) == 0.0


def test_expected_reward_size_mismatch():
    with pytest.raises(ValueError):
        expected_reward(uniform(4), DEFAULT_REWARDS, Action.COOPERATE)


def test_choose_action_cases():
    assert choose_action(uniform(), DEFAULT_REWARDS) is Action.UNDERLAY
    assert choose_action(BeliefVector.point_mass(8, 1), DEFAULT_REWARDS) is Action.COOPERATE
    zeros = RewardTable((0,) * 8, (0,) * 8)
    assert choose_action(uniform(), zeros) is Action.COOPERATE


def test_choose_action_scale_invariant(rng):
    for _ in range(200):
        beta = rng.dirichlet(np.ones(8))
        b = BeliefVector(beta)
        scale = float(rng.uniform(0.01, 100.0))
        scaled = RewardTable(
            tuple(scale * x for x in DEFAULT_REWARDS.a_coop), tuple(scale * x for x in DEFAULT_REWARDS.b_under)
        )
        assert choose_action(b, DEFAULT_REWARDS) is choose_action(b, scaled)


@pytest.mark.parametrize(
    "a,b",
    [((1, 2), (0,)), ((-1, 0), (0, 1)), ((1, 1), (1, 0))],
)
def test_reward_table_validation(a, b):
    with pytest.raises(SpecError):
        RewardTable(a, b)


@pytest.mark.parametrize(
    "kw",
    [dict(psi=1.5), dict(psi=-0.1), dict(lambda_p=2.0), dict(slots=0), dict(warmup=10, slots=10),
     dict(interference=-1.0), dict(rewards=RewardTable((5, 0), (0, 6))), dict(policy="greedy")],
)
def test_hybrid_config_validation(kw):
    with pytest.raises(SpecError):
        HybridConfig(**kw).validate()


@pytest.mark.parametrize("policy", list(Policy))
def test_idle_pu_gives_own_link_success(policy):
    cfg = HybridConfig(lambda_p=0.0, psi=0.2, slots=100_000, policy=policy)
    st = run_hybrid_episode(cfg)
    want = math.exp(-snr_threshold(cfg.r_s) / cfg.gamma_os)
    assert st.delivered_su == pytest.approx(want, abs=0.005)
    assert st.delivered_pu == 0.0


def test_heavy_load_non_cooperative_starves_su():
    nc = run_hybrid_episode(HybridConfig(lambda_p=0.95, policy=Policy.NON_COOPERATIVE, slots=100_000))
    hy = run_hybrid_episode(HybridConfig(lambda_p=0.95, policy=Policy.HYBRID, slots=100_000))
    assert nc.delivered_su <= 0.06
    assert hy.delivered_su > nc.delivered_su


@pytest.mark.parametrize("lp", [0.1, 0.5, 0.9])
def test_zero_underlay_power_matches_conventional(lp):
    hy = run_hybrid_episode(HybridConfig(lambda_p=lp, psi=0.0, slots=100_000, seed=2))
    cc = run_hybrid_episode(HybridConfig(lambda_p=lp, psi=0.0, slots=100_000, seed=2, policy=Policy.CONVENTIONAL))
    assert hy.delivered_su == pytest.approx(cc.delivered_su, abs=0.005)


def test_determinism():
    cfg = HybridConfig(lambda_p=0.4, slots=50_000, seed=9)
    assert run_hybrid_episode(cfg).to_json() == run_hybrid_episode(cfg).to_json()


def test_relay_conservation():
    st = run_hybrid_episode(HybridConfig(lambda_p=0.6, slots=50_000, policy=Policy.CONVENTIONAL))
    c = st.counters
    assert c["relay_in"] == c["delivered_relay"] + c["final_Qps"]
    assert c["arrivals_pu"] == c["delivered_direct"] + c["relay_in"] + c["final_Qp"]


def test_thresholds_follow_interference():
    base = HybridConfig(lambda_p=0.5, slots=2_000)
    states = [run_hybrid_episode(replace(base, psi=p)).empirical["threshold_state_underlay"] for p in (0.0, 0.2, 0.6)]
    assert states == sorted(states)
    assert states[0] == run_hybrid_episode(base).empirical["threshold_state_direct"]


def test_hybrid_dominates_baselines(curves):
    for lp in GRID:
        key = round(float(lp), 6)
        hy = curves[(Policy.HYBRID.value, key)].su_throughput
        for pol in (Policy.CONVENTIONAL, Policy.NON_COOPERATIVE):
            assert hy >= curves[(pol.value, key)].su_throughput, (pol, lp)


def test_underlay_never_helps_the_pu(curves):
    # both policies deliver lambda_p while stable, so allow counting noise
    for lp in GRID:
        key = round(float(lp), 6)
        hy = curves[(Policy.HYBRID.value, key)].pu_throughput
        cc = curves[(Policy.CONVENTIONAL.value, key)].pu_throughput
        assert hy <= cc + 0.005, lp


def test_idle_pu_row_policies_coincide():
    rows = throughput_curve(HybridConfig(slots=50_000), [0.0])
    su = [r.su_throughput for r in rows]
    assert max(su) - min(su) <= 0.01


def test_underlay_power_crossing():
    base = HybridConfig(slots=200_000, seed=1)
    def su(psi, lp):
        return run_hybrid_episode(replace(base, psi=psi, lambda_p=lp)).delivered_su
    assert su(0.6, 0.05) < su(0.2, 0.05)
    assert su(0.6, 0.9) > su(0.2, 0.9)


def test_unit_interference_cannot_shift_threshold():
    # with the coefficient at 1 the inflated threshold stays in the same FSMC state
    base = HybridConfig(slots=2_000, interference=1.0)
    th = {run_hybrid_episode(replace(base, psi=p)).empirical["threshold_state_underlay"] for p in (0.2, 0.4, 0.6)}
    assert th == {run_hybrid_episode(base).empirical["threshold_state_direct"]}


def test_curve_csv():
    rows = throughput_curve(HybridConfig(slots=5_000), [0.1, 0.2], [Policy.HYBRID])
    text = curve_to_csv(rows)
    parsed = list(csv.reader(io.StringIO(text)))
    assert tuple(parsed[0]) == CURVE_HEADER
    assert len(parsed) == 3 and parsed[1][0] == "hybrid"


def test_curve_grid_validated():
    with pytest.raises(ValueError):
        throughput_curve(HybridConfig(slots=1_000), [1.5])
