from dataclasses import replace

import numpy as np
import pytest
from scipy import stats

from confgame import fixtures, game, oracle
from confgame.errors import MalformedSpec


def test_validate_t1_passes(t1):
    report = game.validate_spec(t1)
    assert report.ok
    rel = [c for c in report.checks if c.name == "iv_relevance"]
    assert rel and abs(rel[0].value - 0.3 * 0.25) < 1e-12  # iv shift times Var(B)


def test_validate_flags_irrelevant_instrument(t1):
    flat = replace(t1, alice_act_iv=np.zeros_like(t1.alice_act_iv))
    report = game.validate_spec(flat)
    assert not report.ok
    assert any(c.name == "iv_relevance" and c.stage == 0 for c in report.violations)


def test_validate_flags_uncentered_residual(t1):
    bad = replace(t1, alice_rew_resid=np.full_like(t1.alice_rew_resid, 0.1))
    report = game.validate_spec(bad)
    assert any(
        c.name == "alice_reward_residual_mean" and not c.ok for c in report.checks
    )


def test_validate_flags_orthogonality_violation():
    report = game.validate_spec(fixtures.negative_control_spec())
    assert any("orthogonality[alice_reward" in c.name and not c.ok for c in report.checks)


def test_malformed_probabilities_rejected(t1):
    with pytest.raises(MalformedSpec):
        replace(t1, init_state=np.array([0.5]))
    with pytest.raises(MalformedSpec):
        replace(t1, alice_act_base=np.full_like(t1.alice_act_base, 0.9))  # 0.9+0.3 > 1


def test_simulate_empty_dataset(t1):
    ds = game.simulate_dataset(t1, n=0, seed=3)
    assert ds.n == 0 and ds.s.shape == (0, 1) and ds.horizon == 1


def test_simulate_action_frequency_matches_exact_value(t1):
    ds = game.simulate_dataset(t1, n=100_000, seed=7)
    mask = ds.b_init == 1
    p_hat = ds.a[mask, 0].mean()
    assert abs(p_hat - 0.6) < 0.01  # base 0.2 + shift 0.3 + 0.2 * E[v1]


def test_simulate_deterministic_given_seed(t1):
    d1 = game.simulate_dataset(t1, n=500, seed=9)
    d2 = game.simulate_dataset(t1, n=500, seed=9)
    assert d1 == d2 and d1.hidden == d2.hidden
    assert d1 != game.simulate_dataset(t1, n=500, seed=10)


def test_observed_table_has_no_private_columns(t1):
    ds = game.simulate_dataset(t1, n=10, seed=0)
    from confgame.game import _OBSERVED_FIELDS

    assert not any(f.startswith("v") for f in _OBSERVED_FIELDS)
    assert ds.hidden is not None  # the trace exists, but as a sibling object


def test_memoryless_private_draws(t2):
    """The second half-step private draw is independent of (state, action)
    one stage earlier, given the current cell."""
    passes = 0
    reps = 20
    for rep in range(reps):
        ds = game.simulate_dataset(t2, n=4000, seed=500 + rep)
        h = ds.hidden
        ok = True
        for s_half in range(t2.n_states):
            m = ds.s_half[:, 0] == s_half
            past = ds.s[m, 0] * 2 + ds.a[m, 0]
            vpair = h.v1_half[m, 0] * 2 + h.v2_half[m, 0]
            table = np.zeros((4, 4))
            np.add.at(table, (past, vpair), 1)
            table = table[table.sum(axis=1) > 0][:, table.sum(axis=0) > 0]
            if min(table.shape) < 2:
                continue
            chi2 = stats.chi2_contingency(table)[0]
            df = (table.shape[0] - 1) * (table.shape[1] - 1)
            if chi2 >= stats.chi2.ppf(0.95, df):
                ok = False
        passes += ok
    assert passes >= int(0.85 * reps)


def test_reward_cell_means_match_exact_law(t1):
    ds = game.simulate_dataset(t1, n=50_000, seed=21)
    p, y = oracle._decision_moments(t1, game.BehaviorPolicyPair.from_spec(t1), 0, 0, 0)
    for prev in (0, 1):
        for act in (0, 1):
            m = (ds.b_init == prev) & (ds.a[:, 0] == act)
            emp = ds.r_a[m, 0].mean()
            cell_p = p[:, :, prev, act]
            exact = float((cell_p * y[:, :, prev, act]).sum() / cell_p.sum())
            se = ds.r_a[m, 0].std() / np.sqrt(m.sum())
            assert abs(emp - exact) < 3 * se + 1e-9


def test_policy_pair_rejects_v_dependent_bob(t1):
    with pytest.raises(TypeError):
        game.PolicyPair(
            alice=np.zeros((1, 1, 1, 2)),
            bob=np.zeros((1, 1, 2, 2)),  # an extra axis that could carry v
            init_bob=0.5,
        )


def test_stationary_class_is_lex_sorted(t1):
    pairs = game.stationary_deterministic_pairs(t1)
    codes = [p.encode() for p in pairs]
    assert codes == sorted(codes)
    assert len(pairs) == 32
