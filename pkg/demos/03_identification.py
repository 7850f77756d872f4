"""Identifying causal effects when the instrument is allowed a direct effect.

The partner's previous action is correlated with the current action
(relevance) and independent of the current private draw, but it also moves
the reward directly, so classical instrumental-variable identification does
not apply.  The moment system combines a two-residual product equation, an
instrument-residual equation and a plain mean equation (valid because the
residual reward block is centered over the private draw); solving it at each
conditioning cell recovers the marginalized effects even though the naive
per-cell regression is confounded.
"""

import numpy as np

import confgame
from confgame import fixtures, moments, oracle, sieve, smd

spec = fixtures.t1_spec()
truth = np.array([1.2, 0.5, 0.25])

system = oracle.identification_system(spec, stage=0, s=0, u=0)
print("population system solution:", system.solution.round(10))
print("relevance:", system.relevance, " smallest singular value:", round(system.sigma_min, 4))

# make the hidden draw a genuine common cause: the centered residual block
# now co-moves with the action model's base rate, so conditioning on the
# realized action tilts the cell means while the moment system stays valid
from dataclasses import replace

u_, v1_, v2_, s_ = np.indices((1, 2, 2, 1), dtype=float)
confounded = replace(spec, alice_rew_resid=0.6 * (v1_ - 0.5))
assert confgame.validate_spec(confounded).ok  # orthogonality still holds

ds = confgame.simulate_dataset(confounded, n=200_000, seed=1)
naive = ds.r_a[(ds.a[:, 0] == 1) & (ds.b_init == 0), 0].mean()
print(f"\nnaive cell mean E[R | A=1, B=0] = {naive:.3f} vs true action effect 1.2")
print("(selecting on the action over-represents the high-residual private draw)")

basis = sieve.build_basis("saturated", spec.n_states, spec.n_u)
data = moments.MomentData(y=ds.r_a[:, 0], s=ds.s[:, 0], u=ds.u[:, 0],
                          act=ds.a[:, 0], iv=ds.b_init)
nuis = moments.estimate_nuisances(data, basis)
fit = smd.fit_smd(moments.assemble_system(data, nuis, n_states=1, n_u=1), basis)
print("minimum-distance estimate:", fit.coef[0].round(4), " (truth", truth, ")")

neg = fixtures.negative_control_spec()
biased = oracle.identification_system(neg, stage=0)
neg_truth = oracle.true_coefficients(neg)["alice_reward"]
print("\nnegative control (orthogonality deliberately broken):")
print("  population solution:", biased.solution.round(4),
      " truth:", [neg_truth.theta_a[0, 0], neg_truth.theta_z[0, 0], neg_truth.theta_az[0, 0]])
