import math

import numpy as np
import pytest

from dsaa.options import OptionBank, OptionConfig, option_policy, option_reward, option_terminal, soft_q_update
from dsaa.replay import Batch


def make_bank(hidden=(8,), n=3, n_actions=6, obs_dim=2, seed=0, **kw):
    return OptionBank(obs_dim, n, n_actions, OptionConfig(hidden=hidden, **kw), np.random.default_rng(seed))


def batch(b, obs_dim=2, n=3, rng=None, r=0.0, terminal=False, s_goal=None):
    rng = rng or np.random.default_rng(0)
    return Batch(
        x=rng.normal(size=(b, obs_dim)),
        a=rng.integers(0, 6, b),
        x_next=rng.normal(size=(b, obs_dim)),
        r=np.full(b, float(r)),
        done=np.zeros(b, dtype=bool),
        s=rng.integers(0, n, b),
        s_goal=np.full(b, 0) if s_goal is None else np.asarray(s_goal),
        s_next=rng.integers(0, n, b),
        terminal=np.full(b, terminal),
    )


# --- acting ----------------------------------------------------------------


def test_untrained_policy_uniform():
    bank = make_bank()
    p = bank.action_probs(np.array([0.3, -0.2]), 1, 2)
    assert np.allclose(p, 1 / 6)


def test_peaked_q_probability():
    bank = make_bank(hidden=())
    # bias only: head for goal 0 gets Q = [10, 0, ...]
    bank.net.layers[-1].bias[:6] = [10, 0, 0, 0, 0, 0]
    p = bank.action_probs(np.zeros(2), 0, 0)
    expected = math.exp(10) / (math.exp(10) + 5)
    assert p[0] == pytest.approx(expected, rel=1e-12)
    assert p[0] > 0.9995
    rng = np.random.default_rng(0)
    acts = [bank.act(np.zeros(2), 0, 0, rng) for _ in range(2000)]
    assert acts.count(0) >= 1990


def test_high_temperature_uniform():
    bank = make_bank(hidden=(), alpha=1e9)
    bank.net.layers[-1].bias[:6] = [10, 0, -3, 0, 4, 0]
    assert np.allclose(bank.action_probs(np.zeros(2), 0, 0), 1 / 6, atol=1e-7)


def test_bad_alpha():
    with pytest.raises(ValueError):
        OptionConfig(alpha=0.0)


# --- reward and termination ------------------------------------------------


def test_option_reward_values():
    assert option_reward(2, 2, 1, 0.0, False) == 200.0
    assert option_reward(1, 2, 1, 0.0, False) == 0.0
    # online self-loop goal, leaving the goal state
    assert option_reward(3, 2, 2, 1.0, True) == 1.0


def test_self_loop_never_pays_scale():
    # staying inside the goal state is not a success
    assert option_reward(2, 2, 2, 0.0, False) == 0.0
    assert option_reward(2, 2, 2, 1.0, True) == 1.0
    assert option_reward(2, 2, 2, 1.0, False) == 0.0


def test_online_env_reward_only_on_self_loop():
    assert option_reward(1, 2, 1, 1.0, True) == 0.0
    assert option_reward(2, 2, 1, 1.0, True) == 200.0


def test_option_terminal():
    assert option_terminal(0, 1, 0, False) is False
    assert option_terminal(0, 1, 1, False) is True
    # leaving for a non-goal state also ends the option
    assert option_terminal(0, 1, 2, False) is True
    assert option_terminal(0, 1, 0, True) is True
    # self-loop options never bootstrap
    assert option_terminal(2, 2, 2, False) is True
    assert option_terminal(2, 2, 3, False) is True


def test_option_policy_self_loop_uniform_offline():
    bank = make_bank(hidden=())
    bank.net.layers[-1].bias[:6] = [10, 0, 0, 0, 0, 0]
    x = np.zeros(2)
    assert np.allclose(option_policy(bank, x, 0, 0, online=False), 1 / 6)
    # online self-loops learn from environment reward, so the network decides
    assert option_policy(bank, x, 0, 0, online=True)[0] > 0.9995
    assert option_policy(bank, x, 1, 0, online=False)[0] > 0.9995


# --- soft-Q targets ---------------------------------------------------------


def test_target_logsumexp_closed_form():
    bank = make_bank()
    y = bank.soft_target(batch(4))
    assert np.allclose(y, 0.95 * math.log(6))
    assert y[0] == pytest.approx(1.70217, abs=1e-5)


def test_terminal_target_is_reward():
    bank = make_bank()
    y = bank.soft_target(batch(3, r=200.0, terminal=True))
    assert np.array_equal(y, [200.0] * 3)


def test_low_temperature_is_hard_max():
    bank = make_bank(hidden=(), alpha=1e-4)
    rng = np.random.default_rng(3)
    bank.target.flat[:] = rng.normal(size=bank.target.flat.shape)
    b = batch(5, r=0.5, rng=rng)
    q = bank.q_values(b.x_next, b.s_next, b.s_goal, net=bank.target)
    y = bank.soft_target(b)
    assert np.allclose(y, 0.5 + 0.95 * q.max(axis=1), atol=1e-3)


# --- updates ---------------------------------------------------------------


def test_head_routing_purity():
    bank = make_bank(hidden=(5,), n=3, seed=1)
    rng = np.random.default_rng(2)
    bank.net.flat[:] = rng.normal(size=bank.net.flat.shape)
    _, grads = bank.loss_and_grads(batch(6, rng=rng, s_goal=[1] * 6))
    gw, gb = grads[-2], grads[-1]
    for head in (0, 2):
        sl = slice(head * 6, head * 6 + 6)
        assert not gw[:, sl].any() and not gb[sl].any()
    assert gw[:, 6:12].any()


def test_target_constant_between_syncs():
    bank = make_bank(target_delay=5, lr=1e-2)
    before = bank.target.flat.copy()
    rng = np.random.default_rng(0)
    for k in range(1, 5):
        soft_q_update(bank, batch(8, rng=rng, r=1.0))
        assert np.array_equal(bank.target.flat, before)
    soft_q_update(bank, batch(8, rng=rng, r=1.0))
    assert np.array_equal(bank.target.flat, bank.net.flat)
    assert not np.array_equal(bank.net.flat, before)


def test_ensure_head():
    bank = make_bank()
    assert not bank.live.any()
    bank.ensure_head(2)
    bank.ensure_head(2)
    assert bank.live.tolist() == [False, False, True]
    with pytest.raises(IndexError):
        bank.ensure_head(3)


def test_head_count_and_input_dim():
    bank = OptionBank(5, 8, 6, OptionConfig(), np.random.default_rng(0))
    assert bank.net.input_dim == 5 + 8
    assert bank.net.layers[-1].weight.shape == (512, 48)


def test_save_load(tmp_path):
    bank = make_bank()
    soft_q_update(bank, batch(4, r=1.0))
    bank.save(tmp_path / "bank.json")
    other = make_bank(seed=9)
    other.load(tmp_path / "bank.json")
    assert np.array_equal(other.net.flat, bank.net.flat)
    assert other.updates == 1
