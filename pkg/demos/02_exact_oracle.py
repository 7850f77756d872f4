"""Exact ground truth: joint laws, true coefficients, values, optima.

Everything the estimators are later judged against comes from brute-force
enumeration over the full-information chain, where the machine's private
draw is visible.
"""

import confgame
from confgame import fixtures, oracle

spec = fixtures.t1_spec()

law = oracle.exact_joint_law(spec)
print(f"full trajectory law: {law.n_atoms} atoms, total mass {law.total_mass():.12f}")

truths = oracle.true_coefficients(spec)
alice = truths["alice_reward"]
print("\nmarginalized reward effects (action, instrument, interaction):")
print("  alice:", alice.theta_a[0, 0], alice.theta_z[0, 0], alice.theta_az[0, 0])
bob = truths["bob_reward"]
print("  bob:  ", bob.theta_a[0, 0], bob.theta_z[0, 0], bob.theta_az[0, 0])

pol = confgame.constant_policy_pair(spec, 1.0, 0.5, 1.0)
ja, jb = oracle.exact_policy_value(spec, pol)
print(f"\nalways-act alice, opening action 1: J_alice = {ja:.4f} (= 1.2+0.5+0.25),"
      f" J_bob = {jb:.4f}")

pairs = confgame.stationary_deterministic_pairs(spec)
best, j_star = oracle.exact_optimal_pair(spec, pairs)
print(f"\nexhaustive search over {len(pairs)} deterministic pairs: J* = {j_star:.4f}")
print("optimal alice rule (by partner's previous action):",
      best.alice[0, 0, 0, 0], "->", best.alice[0, 0, 0, 1])

exq = oracle.exact_q(spec, pol)
rep = exq.marginal[(0, "bob")]
print("\nbob's stage-one representation under this pair:")
print(f"  theta={rep.theta[0,0]:.3f} gamma={rep.gamma[0,0]:.3f} "
      f"omega={rep.omega[0,0]:.3f} constant={rep.zeta[0,0]:.3f}")
print("the nonzero constant is the continuation value the recursion must carry")
