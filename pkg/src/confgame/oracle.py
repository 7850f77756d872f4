"""Exact brute-force computations on tabular game specs.

Everything in this module works on the full joint law, with the second
mover's private information visible, so it can serve as the ground truth for
the estimation modules that never see it: true marginalized coefficients,
true action-value tables, exact policy values, optimal policy pairs, and the
population identification system evaluated from exact moments.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import SingularSystem, SpaceTooLarge
from .game import BehaviorPolicyPair, GameSpec, PolicyPair

DEFAULT_CELL_BUDGET = 10**7
SINGULAR_TOL = 1e-10


# ---------------------------------------------------------------------------
# exact stage laws under a behavior pair
# ---------------------------------------------------------------------------


@dataclass
class StageLaws:
    """Exact per-stage joint laws of one trajectory under a behavior pair.

    ``joint[t][s, u, v1, v2, prev]`` is the law entering stage ``t`` before
    the action; ``with_action[t]`` appends the action axis; ``trans_joint[t]``
    appends the realized next state.  ``prev`` is the partner's previous
    action, which plays the instrument role at stage ``t``.
    """

    spec: GameSpec
    joint: list
    with_action: list
    trans_joint: list

    def transition_rows(self, t: int) -> np.ndarray:
        """Joint law over (s, u, v1, v2, prev, act, s', u') at stage ``t``."""
        u_next = (
            self.spec.u_law[t + 1]
            if t + 1 < self.spec.n_stages
            else np.ones((self.spec.n_states, 1))
        )
        return self.trans_joint[t][..., None] * u_next[None, None, None, None, None, None, :, :]

    def cell_mass(self, t: int) -> np.ndarray:
        """Marginal (s, u) law at stage ``t``."""
        return self.joint[t].sum(axis=(2, 3, 4))


def stage_laws(
    spec: GameSpec,
    behavior: Optional[BehaviorPolicyPair] = None,
    cell_budget: int = DEFAULT_CELL_BUDGET,
) -> StageLaws:
    """Forward-propagate the exact joint law stage by stage."""
    if behavior is None:
        behavior = BehaviorPolicyPair.from_spec(spec)
    ns, nu, nv1, nv2 = spec.n_states, spec.n_u, spec.n_v1, spec.n_v2
    per_stage = ns * nu * nv1 * nv2 * 4 * ns * nu
    if per_stage * spec.n_stages > cell_budget:
        raise SpaceTooLarge(
            f"stage enumeration needs {per_stage * spec.n_stages} cells, budget {cell_budget}"
        )

    def fresh_layer(t, state_law):
        # state_law: (s,); add u, v1, v2 axes from the memoryless laws
        return (
            state_law[:, None, None, None]
            * spec.u_law[t][:, :, None, None]
            * spec.v1_law[t][:, None, :, None]
            * spec.v2_law[t][:, None, None, :]
        )

    joint, with_action, trans_joint = [], [], []
    prev_dist = np.array([1.0 - behavior.init_bob, behavior.init_bob])
    cur = fresh_layer(0, spec.init_state)[..., None] * prev_dist  # (s,u,v1,v2,prev)
    for t in range(spec.n_stages):
        joint.append(cur)
        h = t // 2
        table = behavior.alice[h] if t % 2 == 0 else behavior.bob[h]
        # table indexed (u, v1, v2, s, prev) -> move s first
        p1 = np.moveaxis(table, 3, 0)  # (s, u, v1, v2, prev)
        probs = np.stack([1.0 - p1, p1], axis=-1)  # (..., prev, act)
        wa = cur[..., None] * probs
        with_action.append(wa)
        kern = np.moveaxis(spec.trans[t], 3, 0)  # (s, u, v1, v2, a, b, s')
        if t % 2 == 0:
            # act plays the alice axis, prev plays the bob axis
            kern_pa = np.moveaxis(kern, 4, 5)  # (s,u,v1,v2,b=prev,a=act,s')
        else:
            kern_pa = kern  # (s,u,v1,v2,a=prev,b=act,s')
        tj = wa[..., None] * kern_pa
        trans_joint.append(tj)
        if t + 1 < spec.n_stages:
            # next stage: fresh (u', v') given s'; prev' is the action just taken
            arrive = tj.sum(axis=(1, 2, 3, 4))  # (s, act, s') -> sum over old u,v,prev
            arrive = arrive.sum(axis=0)  # (act, s')
            state_act = np.moveaxis(arrive, 0, 1)  # (s', act)
            cur = (
                fresh_layer(t + 1, np.ones(ns))[..., None]
                * state_act[:, None, None, None, :]
            )
    return StageLaws(spec=spec, joint=joint, with_action=with_action, trans_joint=trans_joint)


# ---------------------------------------------------------------------------
# full-path enumeration
# ---------------------------------------------------------------------------


@dataclass
class JointLaw:
    """Full joint probability table over one trajectory's variables.

    Paths are tuples ``(b_init, s_1, (u, v1, v2, act) per stage ..., s_term)``
    with their exact probabilities.  Only intended for desk-scale specs; the
    per-stage laws in :class:`StageLaws` scale much further.
    """

    spec: GameSpec
    paths: dict

    @property
    def n_atoms(self) -> int:
        return len(self.paths)

    def total_mass(self) -> float:
        return math.fsum(self.paths.values())

    def marginal_init_state(self) -> np.ndarray:
        out = np.zeros(self.spec.n_states)
        for path, p in self.paths.items():
            out[path[1]] += p
        return out


def exact_joint_law(
    spec: GameSpec,
    behavior: Optional[BehaviorPolicyPair] = None,
    cell_budget: int = DEFAULT_CELL_BUDGET,
    atom_tol: float = 0.0,
) -> JointLaw:
    """Enumerate every trajectory of positive probability with its mass."""
    if behavior is None:
        behavior = BehaviorPolicyPair.from_spec(spec)
    ns, nu, nv1, nv2 = spec.n_states, spec.n_u, spec.n_v1, spec.n_v2
    per_stage = nu * nv1 * nv2 * 2 * ns
    if (2 * ns) * per_stage ** spec.n_stages > cell_budget:
        raise SpaceTooLarge("full-path enumeration exceeds the cell budget")
    paths = {}
    heads = []
    for b0 in range(2):
        p0 = behavior.init_bob if b0 == 1 else 1.0 - behavior.init_bob
        for s0 in range(ns):
            p = p0 * spec.init_state[s0]
            if p > atom_tol:
                heads.append(((b0, s0), p, s0, b0))
    for t in range(spec.n_stages):
        h = t // 2
        table = behavior.alice[h] if t % 2 == 0 else behavior.bob[h]
        new_heads = []
        for prefix, p, state, prev in heads:
            for u, v1, v2 in itertools.product(range(nu), range(nv1), range(nv2)):
                p_draw = (
                    spec.u_law[t, state, u]
                    * spec.v1_law[t, state, v1]
                    * spec.v2_law[t, state, v2]
                )
                if p_draw <= atom_tol:
                    continue
                p_act1 = table[u, v1, v2, state, prev]
                for act in range(2):
                    p_act = p_act1 if act == 1 else 1.0 - p_act1
                    if p_act <= atom_tol:
                        continue
                    a_bit, b_bit = (act, prev) if t % 2 == 0 else (prev, act)
                    for s_next in range(ns):
                        p_next = spec.trans[t, u, v1, v2, state, a_bit, b_bit, s_next]
                        if p_next <= atom_tol:
                            continue
                        q = p * p_draw * p_act * p_next
                        new_heads.append(
                            (prefix + ((u, v1, v2, act), s_next), q, s_next, act)
                        )
        heads = new_heads
        if len(heads) > cell_budget:
            raise SpaceTooLarge("full-path enumeration exceeds the cell budget")
    for prefix, p, _state, _prev in heads:
        paths[prefix] = paths.get(prefix, 0.0) + p
    return JointLaw(spec=spec, paths=paths)


# ---------------------------------------------------------------------------
# true marginalized coefficients
# ---------------------------------------------------------------------------


@dataclass
class CoefficientTriple:
    """V-marginalized (action, instrument, interaction) effects over (s, u)."""

    theta_a: np.ndarray
    theta_z: np.ndarray
    theta_az: np.ndarray

    def stack(self) -> np.ndarray:
        """(s, u, 3) array in (action, instrument, interaction) order."""
        return np.stack([self.theta_a, self.theta_z, self.theta_az], axis=-1)


def _v_weights(spec: GameSpec, stage: int) -> np.ndarray:
    """(s, v1, v2) private-draw law at a stage."""
    return spec.v1_law[stage][:, :, None] * spec.v2_law[stage][:, None, :]


def marginalize_over_v(spec: GameSpec, stage: int, table: np.ndarray) -> np.ndarray:
    """E over V of a (u, v1, v2, s) table, giving an (s, u) table."""
    w = _v_weights(spec, stage)  # (s, v1, v2)
    return np.einsum("uvws,svw->su", table, w)


def true_coefficients(spec: GameSpec, stage: Optional[int] = None) -> dict:
    """Exact marginalized coefficient triples of both reward blocks.

    ``stage`` selects the private-draw law used for the marginalization; the
    default uses each player's first decision point.  Returns a dict with
    ``alice_reward`` and ``bob_reward`` triples (the action axis is each
    player's own action).
    """
    t_alice = stage if stage is not None and stage % 2 == 0 else 0
    t_bob = stage if stage is not None and stage % 2 == 1 else 1
    alice = CoefficientTriple(
        theta_a=marginalize_over_v(spec, t_alice, spec.alice_rew_act),
        theta_z=marginalize_over_v(spec, t_alice, spec.alice_rew_iv),
        theta_az=marginalize_over_v(spec, t_alice, spec.alice_rew_inter),
    )
    bob = CoefficientTriple(
        theta_a=marginalize_over_v(spec, t_bob, spec.bob_rew_act),
        theta_z=marginalize_over_v(spec, t_bob, spec.bob_rew_iv),
        theta_az=marginalize_over_v(spec, t_bob, spec.bob_rew_inter),
    )
    return {"alice_reward": alice, "bob_reward": bob}


# ---------------------------------------------------------------------------
# exact action-value tables and policy values
# ---------------------------------------------------------------------------


@dataclass
class StageRep:
    """Marginalized bilinear representation of a stage value function.

    ``theta`` multiplies alice's most recent action, ``gamma`` bob's most
    recent action, ``omega`` their product; ``zeta`` is the constant part
    (the policy's continuation value that does not depend on either action).
    All tables are indexed (s, u).
    """

    theta: np.ndarray
    gamma: np.ndarray
    omega: np.ndarray
    zeta: np.ndarray

    def value(self, a, b):
        return self.theta * a + self.gamma * b + self.omega * (a * b) + self.zeta

    def stack(self) -> np.ndarray:
        return np.stack([self.theta, self.gamma, self.omega, self.zeta], axis=-1)


@dataclass
class ExactQ:
    """Exact action-value tables for both players at every stage.

    ``full[(t, side)][s, u, v1, v2, a, b]`` conditions on both players'
    private draws; ``marginal[(t, side)]`` is the matching
    :class:`StageRep` after integrating the private draw out.
    """

    spec: GameSpec
    policy: PolicyPair
    full: dict
    marginal: dict
    j_alice: float
    j_bob: float


def _reward_table(spec: GameSpec, t: int) -> np.ndarray:
    """Mean reward at stage ``t`` as an (s, u, v1, v2, a, b) table."""
    grid_a, grid_b = np.meshgrid(np.arange(2.0), np.arange(2.0), indexing="ij")
    if t % 2 == 0:
        own, prev = grid_a, grid_b
        ra, ri, rx, rr = (
            spec.alice_rew_act,
            spec.alice_rew_iv,
            spec.alice_rew_inter,
            spec.alice_rew_resid,
        )
    else:
        own, prev = grid_b, grid_a
        ra, ri, rx, rr = (
            spec.bob_rew_act,
            spec.bob_rew_iv,
            spec.bob_rew_inter,
            spec.bob_rew_resid,
        )
    coef = np.moveaxis(np.stack([ra, ri, rx, rr]), 4, 1)  # (4, s, u, v1, v2)
    feats = np.stack([own, prev, own * prev, np.ones_like(own)])  # (4, a, b)
    return np.einsum("csuvw,cab->suvwab", coef, feats)


def exact_q(spec: GameSpec, policy: PolicyPair) -> ExactQ:
    """Backward dynamic programming over the full-information chain."""
    ns = spec.n_states
    full, marginal = {}, {}
    next_q = {"alice": None, "bob": None}
    for t in reversed(range(spec.n_stages)):
        h = t // 2
        rewards = {
            "alice": _reward_table(spec, t) if t % 2 == 0 else 0.0,
            "bob": _reward_table(spec, t) if t % 2 == 1 else 0.0,
        }
        kern = np.moveaxis(spec.trans[t], 3, 0)  # (s, u, v1, v2, a, b, s')
        fresh = (
            spec.u_law[t + 1][:, :, None, None]
            * spec.v1_law[t + 1][:, None, :, None]
            * spec.v2_law[t + 1][:, None, None, :]
            if t + 1 < spec.n_stages
            else None
        )
        for side in ("alice", "bob"):
            if next_q[side] is None:
                cont = 0.0
            else:
                nq = next_q[side]  # (s', u', v1', v2', a, b)
                if t % 2 == 0:
                    # next actor is bob: draw b' from pi_b(s', a)
                    pi_b = policy.bob_mean(h)  # (s', a)
                    mixed = (
                        nq[..., 0] * (1.0 - pi_b[:, None, None, None, :])
                        + nq[..., 1] * pi_b[:, None, None, None, :]
                    )  # (s', u', v1', v2', a): b axis replaced by the draw
                    avg = np.einsum("puvwa,puvw->pa", mixed, fresh)  # (s', a)
                    cont = np.einsum("suvwabp,pa->suvwab", kern, avg)
                else:
                    # next actor is alice step h+1: draw a' from pi_a(s', u', b)
                    pi_a = policy.alice_mean(h + 1)  # (s', u', b)
                    mixed = (
                        nq[:, :, :, :, 0, :] * (1.0 - pi_a[:, :, None, None, :])
                        + nq[:, :, :, :, 1, :] * pi_a[:, :, None, None, :]
                    )  # (s', u', v1', v2', b)
                    avg = np.einsum("puvwb,puvw->pb", mixed, fresh)  # (s', b)
                    cont = np.einsum("suvwabp,pb->suvwab", kern, avg)
            q = rewards[side] + cont
            if np.isscalar(q):
                q = np.zeros((ns, spec.n_u, spec.n_v1, spec.n_v2, 2, 2))
            full[(t, side)] = q
        next_q = {side: full[(t, side)] for side in ("alice", "bob")}

    for (t, side), q in full.items():
        w = _v_weights(spec, t)  # (s, v1, v2)
        m = np.einsum("suvwab,svw->suab", q, w)
        marginal[(t, side)] = StageRep(
            theta=m[..., 1, 0] - m[..., 0, 0],
            gamma=m[..., 0, 1] - m[..., 0, 0],
            omega=m[..., 1, 1] - m[..., 1, 0] - m[..., 0, 1] + m[..., 0, 0],
            zeta=m[..., 0, 0],
        )

    # integrate the opening distribution: b ~ init rule, s ~ init law,
    # (u, v) fresh, a ~ alice's first rule
    j = {}
    fresh0 = (
        spec.u_law[0][:, :, None, None]
        * spec.v1_law[0][:, None, :, None]
        * spec.v2_law[0][:, None, None, :]
    )
    pi_a0 = policy.alice_mean(0)  # (s, u, b)
    b_dist = np.array([1.0 - policy.init_bob, policy.init_bob])
    for side in ("alice", "bob"):
        q0 = full[(0, side)]  # (s, u, v1, v2, a, b)
        mixed = (
            q0[..., 0, :] * (1.0 - pi_a0[:, :, None, None, :])
            + q0[..., 1, :] * pi_a0[:, :, None, None, :]
        )  # (s, u, v1, v2, b)
        val = np.einsum("suvwb,suvw,s,b->", mixed, fresh0, spec.init_state, b_dist)
        j[side] = float(val)
    return ExactQ(
        spec=spec,
        policy=policy,
        full=full,
        marginal=marginal,
        j_alice=j["alice"],
        j_bob=j["bob"],
    )


def exact_policy_value(spec: GameSpec, policy: PolicyPair) -> tuple[float, float]:
    """Exact (J_alice, J_bob) for a policy pair."""
    q = exact_q(spec, policy)
    return q.j_alice, q.j_bob


def exact_optimal_pair(spec: GameSpec, pairs: list[PolicyPair]) -> tuple[PolicyPair, float]:
    """Exhaustive argmax of J_alice + J_bob over an ordered policy class.

    Candidates must already be sorted by their lexicographic encoding; ties
    keep the earliest candidate.
    """
    from .errors import EmptyClass

    if not pairs:
        raise EmptyClass("no candidate policy pairs")
    best, best_val = None, -np.inf
    for pair in pairs:
        ja, jb = exact_policy_value(spec, pair)
        if ja + jb > best_val:
            best, best_val = pair, ja + jb
    return best, best_val


# ---------------------------------------------------------------------------
# population identification system
# ---------------------------------------------------------------------------


@dataclass
class IdentificationSystem:
    """Exact 3x3 linear system identifying one marginalized triple.

    Rows: the two-residual product equation, the instrument-residual
    equation, and the plain mean equation (valid because reward residual
    blocks are centered over the private draw).  The covariance-form
    identity is reported as a diagnostic: for a binary instrument it is a
    (1 - f1) multiple of the first row, so it cannot serve as an
    independent third equation.
    """

    matrix: np.ndarray
    rhs: np.ndarray
    solution: np.ndarray
    relevance: float
    sigma_min: float
    covariance_row_gap: float


def _decision_moments(spec, behavior, stage, s, u, laws=None, y_table=None):
    """Conditional law over (v1, v2, prev, act) and mean outcomes at a cell."""
    if laws is None:
        laws = stage_laws(spec, behavior)
    cell = laws.with_action[stage][s, u]  # (v1, v2, prev, act)
    mass = cell.sum()
    if mass <= 0:
        raise SingularSystem(f"cell (s={s}, u={u}) has zero mass at stage {stage}")
    p = cell / mass
    if y_table is None:
        grid_prev, grid_act = np.meshgrid(np.arange(2.0), np.arange(2.0), indexing="ij")
        own, prev = (grid_act, grid_prev)
        if stage % 2 == 0:
            ra, ri, rx, rr = (
                spec.alice_rew_act,
                spec.alice_rew_iv,
                spec.alice_rew_inter,
                spec.alice_rew_resid,
            )
        else:
            ra, ri, rx, rr = (
                spec.bob_rew_act,
                spec.bob_rew_iv,
                spec.bob_rew_inter,
                spec.bob_rew_resid,
            )
        y = (
            ra[u, :, :, s][..., None, None] * own
            + ri[u, :, :, s][..., None, None] * prev
            + rx[u, :, :, s][..., None, None] * own * prev
            + rr[u, :, :, s][..., None, None]
        )
    else:
        y = y_table
    return p, y


def identification_system(
    spec: GameSpec,
    behavior: Optional[BehaviorPolicyPair] = None,
    stage: int = 0,
    s: int = 0,
    u: int = 0,
    laws: Optional[StageLaws] = None,
    y_table: Optional[np.ndarray] = None,
) -> IdentificationSystem:
    """Build and solve the exact identification system at one cell.

    Raises :class:`SingularSystem` when the instrument is irrelevant in the
    cell or the system matrix is numerically singular.
    """
    if behavior is None:
        behavior = BehaviorPolicyPair.from_spec(spec)
    p, y = _decision_moments(spec, behavior, stage, s, u, laws=laws, y_table=y_table)
    grid_prev, grid_act = np.meshgrid(np.arange(2.0), np.arange(2.0), indexing="ij")
    iv, act = grid_prev, grid_act  # (prev, act)

    def mean(x):
        return float(np.einsum("vwpa,vwpa->", p, np.broadcast_to(x, p.shape)))

    def mean_y(x):
        return float(np.einsum("vwpa,vwpa->", p, np.broadcast_to(x, p.shape) * y))

    f1 = mean(iv)
    p_iv = p.sum(axis=(0, 1, 3))
    p_act_given = p.sum(axis=(0, 1))  # (prev, act)
    with np.errstate(invalid="ignore", divide="ignore"):
        f2 = np.where(p_iv > 0, p_act_given[:, 1] / p_iv, 0.0)  # E[act | iv]
    b_til = iv - f1
    a_til = act - f2[:, None]

    relevance = mean(act * iv) - mean(act) * f1
    row_rp = np.array([mean(b_til * a_til * act), 0.0, mean(iv * b_til * a_til * act)])
    rhs_rp = mean_y(b_til * a_til)
    row_iv = np.array([mean(act * b_til), mean(iv * b_til), mean(act * iv * b_til)])
    rhs_iv = mean_y(b_til)
    row_mean = np.array([mean(act), mean(iv), mean(act * iv)])
    rhs_mean = mean_y(np.ones_like(act))
    matrix = np.vstack([row_rp, row_iv, row_mean])
    rhs = np.array([rhs_rp, rhs_iv, rhs_mean])

    sigma_min = float(np.linalg.svd(matrix, compute_uv=False).min())
    if abs(relevance) < SINGULAR_TOL:
        raise SingularSystem(
            f"instrument irrelevant at stage {stage}, cell (s={s}, u={u}): "
            f"cov(action, instrument) = {relevance:.2e}"
        )
    if sigma_min < SINGULAR_TOL:
        raise SingularSystem(f"identification matrix singular: sigma_min = {sigma_min:.2e}")
    solution = np.linalg.solve(matrix, rhs)

    # covariance-form identity evaluated at the solution (diagnostic only)
    f3 = mean_y(a_til)
    f4 = mean(act * a_til)
    f5 = mean(act * iv * a_til)
    lhs_cov = mean_y(iv * b_til * a_til) - f1 * (1 - f1) * f3
    coef_a = mean(act * iv * b_til * a_til) - f1 * (1 - f1) * f4
    coef_az = mean(act * iv * b_til * a_til) - f1 * (1 - f1) * f5
    cov_gap = lhs_cov - coef_a * solution[0] - coef_az * solution[2]
    return IdentificationSystem(
        matrix=matrix,
        rhs=rhs,
        solution=solution,
        relevance=float(relevance),
        sigma_min=sigma_min,
        covariance_row_gap=float(cov_gap),
    )


def moment_identity_report(
    spec: GameSpec,
    behavior: Optional[BehaviorPolicyPair] = None,
    stage: int = 0,
    s: int = 0,
    u: int = 0,
    laws: Optional[StageLaws] = None,
) -> dict:
    """Gaps of the three population identities at the true coefficients.

    Returns ``{"residual_product": gap, "iv_residual": gap, "covariance":
    gap}``; all three are zero (to enumeration precision) whenever the
    orthogonality conditions hold.
    """
    if behavior is None:
        behavior = BehaviorPolicyPair.from_spec(spec)
    p, y = _decision_moments(spec, behavior, stage, s, u, laws=laws)
    block = "alice_reward" if stage % 2 == 0 else "bob_reward"
    triple = true_coefficients(spec, stage)[block]
    theta = np.array([triple.theta_a[s, u], triple.theta_z[s, u], triple.theta_az[s, u]])

    grid_prev, grid_act = np.meshgrid(np.arange(2.0), np.arange(2.0), indexing="ij")
    iv, act = grid_prev, grid_act

    def mean(x):
        return float(np.einsum("vwpa,vwpa->", p, np.broadcast_to(x, p.shape)))

    def mean_y(x):
        return float(np.einsum("vwpa,vwpa->", p, np.broadcast_to(x, p.shape) * y))

    f1 = mean(iv)
    p_iv = p.sum(axis=(0, 1, 3))
    p_act_given = p.sum(axis=(0, 1))
    with np.errstate(invalid="ignore", divide="ignore"):
        f2 = np.where(p_iv > 0, p_act_given[:, 1] / p_iv, 0.0)
    b_til = iv - f1
    a_til = act - f2[:, None]

    gap_rp = (
        mean_y(b_til * a_til)
        - mean(b_til * a_til * act) * theta[0]
        - mean(iv * b_til * a_til * act) * theta[2]
    )
    gap_iv = (
        mean_y(b_til)
        - mean(act * b_til) * theta[0]
        - mean(iv * b_til) * theta[1]
        - mean(act * iv * b_til) * theta[2]
    )
    f3 = mean_y(a_til)
    f4 = mean(act * a_til)
    f5 = mean(act * iv * a_til)
    q = f1 * (1 - f1)
    gap_cov = (
        (mean_y(iv * b_til * a_til) - q * f3)
        - (mean(act * iv * b_til * a_til) - q * f4) * theta[0]
        - (mean(act * iv * b_til * a_til) - q * f5) * theta[2]
    )
    return {"residual_product": gap_rp, "iv_residual": gap_iv, "covariance": gap_cov}


# ---------------------------------------------------------------------------
# exact pseudo-outcome decompositions (for coverage tests)
# ---------------------------------------------------------------------------


def exact_recursion_blocks(spec: GameSpec, policy: PolicyPair, exq: Optional["ExactQ"] = None) -> dict:
    """True decompositions of every backward-recursion block.

    For each stage and side, the four continuation blocks carry the next
    stage's constant, own-action, partner-action and interaction tables
    through the transition (the latter contracted with the next actor's
    policy mean where that actor's draw is integrated out).  Keys are
    ``(stage, side, j)`` for ``j`` in 0..3; values are the marginalized
    bilinear representations in (alice-recent, bob-recent) coordinates.
    """
    if exq is None:
        exq = exact_q(spec, policy)
    out = {}
    for t in range(spec.n_stages - 1):
        for side in ("alice", "bob"):
            nxt = exq.marginal[(t + 1, side)]
            if t % 2 == 0:
                specs = [
                    (nxt.zeta, None),
                    (nxt.theta, None),
                    (nxt.gamma, "next_bob"),
                    (nxt.omega, "next_bob"),
                ]
            else:
                specs = [
                    (nxt.zeta, None),
                    (nxt.theta, "next_alice"),
                    (nxt.gamma, None),
                    (nxt.omega, "next_alice"),
                ]
            for j, (g, contract) in enumerate(specs):
                out[(t, side, j)] = exact_block_coefficients(
                    spec, t, g, policy=policy, contract=contract
                )
    return out


def exact_block_coefficients(
    spec: GameSpec,
    stage: int,
    g_table: np.ndarray,
    policy: Optional[PolicyPair] = None,
    contract: Optional[str] = None,
) -> StageRep:
    """Exact bilinear decomposition of one backward-recursion block.

    ``g_table[s', u']`` is a next-cell function; ``contract`` multiplies it by
    the next actor's policy mean: ``"next_bob"`` uses the bob rule following
    an even stage, ``"next_alice"`` the alice rule following an odd stage,
    ``None`` no factor.  Returns the V-marginalized representation in
    (alice-recent, bob-recent) coordinates.
    """
    ns, nu = spec.n_states, spec.n_u
    h = stage // 2
    kern = np.moveaxis(spec.trans[stage], 3, 0)  # (s, u, v1, v2, a, b, s')
    u_next = (
        spec.u_law[stage + 1] if stage + 1 < spec.n_stages else np.ones((ns, 1))
    )
    grid_a, grid_b = np.meshgrid(np.arange(2.0), np.arange(2.0), indexing="ij")
    if contract is None:
        fac = np.ones((ns, u_next.shape[1], 2, 2))
    elif contract == "next_bob":
        pi_b = policy.bob_mean(h)  # (s', a)
        fac = np.broadcast_to(pi_b[:, None, :, None], (ns, u_next.shape[1], 2, 2)).copy()
    elif contract == "next_alice":
        pi_a = policy.alice_mean(h + 1)  # (s', u', b)
        fac = np.broadcast_to(pi_a[:, :, None, :], (ns, u_next.shape[1], 2, 2)).copy()
    else:
        raise ValueError(f"unknown contraction {contract!r}")
    target = g_table[:, : u_next.shape[1], None, None] * fac  # (s', u', a, b)
    # E[g * fac | s, u, v, a, b]
    val = np.einsum("suvwabp,pq,pqab->suvwab", kern, u_next, target)
    w = _v_weights(spec, stage)
    m = np.einsum("suvwab,svw->suab", val, w)
    return StageRep(
        theta=m[..., 1, 0] - m[..., 0, 0],
        gamma=m[..., 0, 1] - m[..., 0, 0],
        omega=m[..., 1, 1] - m[..., 1, 0] - m[..., 0, 1] + m[..., 0, 0],
        zeta=m[..., 0, 0],
    )
