"""Calibration of the region-size constant.

The radius schedule fixes only the rate in the sample size; the leading
constant is free.  This script sweeps it on the single-step game at
n = 10000 and reports, per candidate constant, how often every true table
falls inside its region along the true chain.  The packaged default (2.0)
is the smallest swept value that held at least 90 percent joint coverage
when this calibration was run; rerun after changing anything that affects
the criterion geometry.
"""

import confgame
from confgame import fixtures, learner, oracle, sieve

N = 10_000
REPS = 200
SWEEP = (0.25, 0.5, 1.0, 2.0, 4.0)

spec = fixtures.t1_spec()
basis = sieve.build_basis("saturated", spec.n_states, spec.n_u)
policy = confgame.constant_policy_pair(spec, 1.0, 0.5, 0.5)
exq = oracle.exact_q(spec, policy)
blocks = oracle.exact_recursion_blocks(spec, policy, exq)

print(f"joint coverage of all true tables, {REPS} replications at n = {N}:")
datasets = [confgame.simulate_dataset(spec, n=N, seed=900_000 + r) for r in range(REPS)]
for c_eta in SWEEP:
    eta = learner.EtaConfig(c_eta=c_eta)
    hits = 0
    for ds in datasets:
        engine = learner.LearnerEngine(ds, basis, eta)
        hits += learner.truth_covered(engine, spec, policy, exq, blocks)
    marker = "  <- packaged default" if c_eta == 2.0 else ""
    print(f"  c_eta = {c_eta:>5}: coverage {hits / REPS:.3f}{marker}")
