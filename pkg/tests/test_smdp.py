import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from closedrag.errors import InputError
from closedrag.potential import solve_potential
from closedrag.scenarios import pigou, pigou_smdp_spec, smdp_chain_spec
from closedrag.smdp import (SmdpSpec, balance_matrix, build_rag, extract_policy, load_smdp, mass_to_rates,
                            solve_smdp, verify_dp)
from oracles import dual_mass_to_rates


def cycle(x_rewards=(1.0, 1.0)):
    return SmdpSpec(states=("s1", "s2"), pairs=(("s1", "go"), ("s2", "go")),
                    transitions=[[0.0, 1.0], [1.0, 0.0]], sojourn=[1.0, 1.0], rewards=x_rewards,
                    consumption=np.zeros((0, 2)), b=np.zeros(0), mass=1.0, name="cycle")


def test_pigou_reduction():
    spec = build_rag(pigou_smdp_spec())
    ref = pigou().types[0]
    pt = spec.types[0]
    np.testing.assert_array_equal(pt.rewards, ref.rewards)
    np.testing.assert_array_equal(pt.durations, ref.durations)
    np.testing.assert_array_equal(pt.consumption, ref.consumption)
    np.testing.assert_array_equal(spec.resource_rates, pigou().resource_rates)
    assert pt.mass == ref.mass
    assert pt.balance.shape[0] == 0  # self-loops give a zero stationarity row


def test_cycle_single_balance_row():
    H = build_rag(cycle()).types[0].balance
    assert H.shape == (1, 2)
    assert abs(H[0, 0]) == pytest.approx(abs(H[0, 1])) and H[0, 0] * H[0, 1] < 0


def test_chain_balance_residual():
    smdp = smdp_chain_spec(3.0)
    eq = solve_potential(build_rag(smdp))
    assert np.max(np.abs(balance_matrix(smdp) @ eq.rates[0])) <= 1e-8


def test_chain_reduced_values():
    eq = solve_potential(build_rag(smdp_chain_spec(3.0)))
    assert eq.type_rewards[0] == pytest.approx(2.0, abs=1e-8)
    assert eq.active_mass == pytest.approx(2.0, abs=1e-8)


def test_extract_policy_examples():
    one = SmdpSpec(states=("i",), pairs=(("i", "a1"), ("i", "a2")), transitions=[[1.0], [1.0]],
                   sojourn=[1.0, 1.0], rewards=[1.0, 1.0], consumption=np.zeros((0, 2)), b=np.zeros(0),
                   mass=4.0)
    np.testing.assert_allclose(extract_policy(one, [1.0, 3.0]).policy, [0.25, 0.75])
    pr = extract_policy(pigou_smdp_spec(), [1.0, 0.0], [1.0, 0.0])
    np.testing.assert_allclose(pr.policy, [1.0, 0.0])
    np.testing.assert_allclose(pr.pi, [1.0])
    np.testing.assert_allclose(extract_policy(cycle(), [0.5, 0.5]).pi, [0.5, 0.5])


def test_extract_policy_flags_unvisited():
    pr = extract_policy(smdp_chain_spec(), [1.0, 0.0, 0.0, 0.0, 0.0, 0.0])
    assert set(pr.flagged) == {"region2", "region3"}
    np.testing.assert_allclose(pr.policy[2:4], [0.5, 0.5])


def test_verify_dp_examples():
    smdp = pigou_smdp_spec()
    dp = verify_dp(smdp, [1.0, 0.0], [1.0, 0.0])
    assert dp.gain == pytest.approx(1.0, abs=1e-12)
    assert dp.residual == pytest.approx(0.0, abs=1e-12)
    dp = verify_dp(smdp, [0.0, 1.0], [0.0, 0.0])
    assert dp.residual > 0.5
    assert verify_dp(cycle((3.0, 1.0)), [1.0, 1.0]).residual == 0.0


def test_verify_dp_chain_gain():
    smdp = smdp_chain_spec()
    # region 1 <-> region 2 loop: fare 2 every 2 time units
    assert verify_dp(smdp, [1.0, 0.0, 1.0, 0.0, 1.0, 0.0]).gain == pytest.approx(1.0, abs=1e-12)
    # region 1 is transient; region 2 <-> region 3 loop earns fare 1 every 2 time units
    assert verify_dp(smdp, [1.0, 0.0, 0.0, 1.0, 1.0, 0.0]).gain == pytest.approx(0.5, abs=1e-12)


@pytest.mark.parametrize("d", [1.0, 2.0, 3.0, 5.0, 8.0])
def test_solve_smdp_chain(d):
    smdp = smdp_chain_spec(d)
    res = solve_smdp(smdp)
    assert res.dp_residual <= 1e-6
    assert res.gain == pytest.approx(res.equilibrium.total_reward / d, abs=1e-7)


def test_solve_smdp_pigou():
    res = solve_smdp(pigou_smdp_spec())
    np.testing.assert_allclose(res.policy, [1.0, 0.0], atol=1e-8)
    assert res.gain == pytest.approx(1.0, abs=1e-8)
    assert res.dp_residual <= 1e-6


def test_mass_to_rates_examples():
    r = mass_to_rates([2.0], [[1.0]], [1.0], [1.0])
    assert r.x[0] == pytest.approx(1.0, abs=1e-8)
    assert r.delta[0] == pytest.approx(1.0, abs=1e-7)
    assert r.w[0] == pytest.approx(1.0, abs=1e-7)
    r = mass_to_rates([2.0], [[1.0]], [10.0], [1.0])
    assert r.x[0] == pytest.approx(2.0, abs=1e-8) and r.w[0] == pytest.approx(0.0, abs=1e-8)
    r = mass_to_rates([0.0, 0.0], [[1.0, 1.0]], [1.0], [1.0, 1.0])
    assert not r.x.any() and not r.w.any() and not r.delta.any()


def test_mass_to_rates_frozen():
    # L-BFGS-B on the dual, frozen
    r = mass_to_rates([1.0, 2.0, 0.5], [[1, 1, 0], [0, 1, 1]], [0.6, 0.8], [1.0, 2.0, 1.0])
    np.testing.assert_allclose(r.x, [0.23291621, 0.36708379, 0.43291621], atol=1e-7)
    np.testing.assert_allclose(r.delta, [3.29338946, 0.15495791], atol=1e-6)


@given(st.integers(0, 10**6))
def test_mass_to_rates_against_dual(seed):
    rng = np.random.default_rng(seed)
    K, I = 4, 2
    n = rng.uniform(0, 2, K) * (rng.uniform(size=K) < 0.8)
    A = rng.uniform(0, 1, (I, K))
    b = rng.uniform(0.3, 1.0, I)
    t = rng.uniform(0.5, 1.5, K)
    r = mass_to_rates(n, A, b, t)
    np.testing.assert_allclose(n, (t + r.w) * r.x, atol=1e-8)
    x_ref, _ = dual_mass_to_rates(n, A, b, t)
    np.testing.assert_allclose(r.x, x_ref, atol=1e-5)


@given(st.integers(0, 10**6))
def test_mass_to_rates_continuous(seed):
    rng = np.random.default_rng(seed)
    n = rng.uniform(0.1, 2, 3)
    A, b, t = rng.uniform(0, 1, (2, 3)), rng.uniform(0.3, 1.0, 2), rng.uniform(0.5, 1.5, 3)
    base = mass_to_rates(n, A, b, t)
    for h in (1e-3, 1e-4):
        near = mass_to_rates(n + h * rng.uniform(-1, 1, 3), A, b, t)
        assert np.max(np.abs(near.x - base.x)) <= 50 * h
        assert np.max(np.abs(near.w - base.w)) <= 500 * h + 1e-6


def test_mass_to_rates_errors():
    with pytest.raises(InputError):
        mass_to_rates([-1.0], [[1.0]], [1.0], [1.0])
    with pytest.raises(InputError):
        mass_to_rates([1.0], [[1.0]], [1.0], [0.0])


def test_json_round_trip(tmp_path):
    smdp = smdp_chain_spec(2.5)
    path = tmp_path / "chain.json"
    path.write_text(json.dumps(smdp.to_dict()))
    back = load_smdp(path)
    np.testing.assert_array_equal(back.transitions, smdp.transitions)
    assert back.pairs == smdp.pairs and back.mass == smdp.mass


def test_json_dict_probs_and_errors(tmp_path):
    data = smdp_chain_spec().to_dict()
    for tr in data["transitions"]:
        tr["probs"] = {s: p for s, p in zip(data["states"], tr["probs"]) if p}
    back = SmdpSpec.from_dict(data)
    np.testing.assert_array_equal(back.transitions, smdp_chain_spec().transitions)
    bad = smdp_chain_spec().to_dict()
    bad["transitions"][0]["probs"] = [0.5, 0.0, 0.0]
    with pytest.raises(InputError):
        SmdpSpec.from_dict(bad)
    with pytest.raises(InputError):
        load_smdp(tmp_path / "missing.json")


def test_reducible_chain_warns():
    with pytest.warns(UserWarning):
        SmdpSpec(states=("a", "b"), pairs=(("a", "stay"), ("b", "stay")), transitions=np.eye(2),
                 sojourn=[1.0, 1.0], rewards=[1.0, 1.0], consumption=np.zeros((0, 2)), b=np.zeros(0),
                 mass=1.0)
