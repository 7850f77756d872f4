"""Off-policy evaluation by backward recursion over invalid-instrument fits.

Each stage's action-value function is bilinear in (alice's recent action,
bob's recent action) plus a constant continuation term.  Working backward
from the final reward, every stage fits up to five blocks against the
role-appropriate moment system:

* a reward block (three unknowns; reward residuals are centered so the
  intercept is structurally zero), and
* four recursion blocks carrying the next stage's fitted tables through the
  transition: its constant part, its own-action coefficient, its
  partner-action coefficient and its interaction coefficient, the latter
  blocks contracted with the evaluated policy where the next action is drawn
  from it.  These are fit with four unknowns because the conditional mean of
  a continuation function generally has a nonzero constant part.

The fitted block vectors combine linearly into the stage representation; the
combination bookkeeping tracks how post-multiplying by a binary action folds
constants and partner coefficients into own-action and interaction slots.

The same recursion runs on sampled rows or on exact-law weighted rows
("population mode"), which is how the composition algebra is tested against
the brute-force oracle.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from .errors import DegenerateIV, IllPosedFit, InsufficientData
from .game import BehaviorPolicyPair, GameSpec, OfflineDataset, PolicyPair
from .moments import MomentData, NuisanceSet, assemble_system, estimate_nuisances
from .oracle import StageRep, stage_laws
from .sieve import SieveBasis
from .smd import SmdFit, fit_smd


@dataclass
class StageRows:
    """Rows of one decision point: cell, action, instrument, reward, next cell."""

    s: np.ndarray
    u: np.ndarray
    act: np.ndarray
    iv: np.ndarray
    weights: np.ndarray
    y_reward: Optional[np.ndarray]
    next_s: Optional[np.ndarray]
    next_u: Optional[np.ndarray]
    fold: Optional[np.ndarray] = None


class SampleSource:
    """Adapter exposing an offline dataset stage by stage."""

    def __init__(self, dataset: OfflineDataset, cross_fit: bool = False):
        self.dataset = dataset
        self.cross_fit = cross_fit
        self.horizon = dataset.horizon
        self.n_states = dataset.n_states
        self.n_u = dataset.n_u

    def stage_rows(self, t: int) -> StageRows:
        ds = self.dataset
        h = t // 2
        n = ds.n
        fold = (np.arange(n) % 2) if self.cross_fit else None
        w = np.full(n, 1.0 / max(n, 1))
        if t % 2 == 0:
            nxt_s, nxt_u = ds.s_half[:, h], ds.u_half[:, h]
            return StageRows(
                s=ds.s[:, h],
                u=ds.u[:, h],
                act=ds.a[:, h],
                iv=ds.iv_at(h),
                weights=w,
                y_reward=ds.r_a[:, h],
                next_s=nxt_s,
                next_u=nxt_u,
                fold=fold,
            )
        if h + 1 < self.horizon:
            nxt_s, nxt_u = ds.s[:, h + 1], ds.u[:, h + 1]
        else:
            nxt_s, nxt_u = ds.s_term, np.zeros(n, dtype=np.int64)
        return StageRows(
            s=ds.s_half[:, h],
            u=ds.u_half[:, h],
            act=ds.b[:, h],
            iv=ds.a[:, h],
            weights=w,
            y_reward=ds.r_b[:, h],
            next_s=nxt_s,
            next_u=nxt_u,
            fold=fold,
        )

    def initial_cells(self):
        ds = self.dataset
        w = np.full(ds.n, 1.0 / max(ds.n, 1))
        return ds.s[:, 0], ds.u[:, 0], w


class PopulationSource:
    """Exact-law weighted rows; every sample average becomes an expectation."""

    def __init__(self, spec: GameSpec, behavior: Optional[BehaviorPolicyPair] = None):
        self.spec = spec
        self.behavior = behavior or BehaviorPolicyPair.from_spec(spec)
        self.laws = stage_laws(spec, self.behavior)
        self.horizon = spec.horizon
        self.n_states = spec.n_states
        self.n_u = spec.n_u

    def stage_rows(self, t: int) -> StageRows:
        spec = self.spec
        tbl = self.laws.transition_rows(t)  # (s,u,v1,v2,prev,act,s',u')
        shape = tbl.shape
        idx = np.indices(shape).reshape(len(shape), -1)
        w = tbl.ravel()
        keep = w > 0
        s, u, v1, v2, prev, act, nxt_s, nxt_u = (a[keep] for a in idx)
        w = w[keep]
        own = act.astype(float)
        pr = prev.astype(float)
        if t % 2 == 0:
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
        cidx = (u, v1, v2, s)
        y = ra[cidx] * own + ri[cidx] * pr + rx[cidx] * own * pr + rr[cidx]
        return StageRows(
            s=s,
            u=u,
            act=act,
            iv=prev,
            weights=w,
            y_reward=y,
            next_s=nxt_s,
            next_u=nxt_u,
        )

    def initial_cells(self):
        joint = self.laws.joint[0].sum(axis=(2, 3, 4))  # (s, u)
        idx = np.indices(joint.shape).reshape(2, -1)
        w = joint.ravel()
        keep = w > 0
        return idx[0][keep], idx[1][keep], w[keep]


DataSource = Union[SampleSource, PopulationSource]


def as_source(data, cross_fit: bool = False) -> DataSource:
    if isinstance(data, OfflineDataset):
        return SampleSource(data, cross_fit=cross_fit)
    return data


# ---------------------------------------------------------------------------
# block fitting
# ---------------------------------------------------------------------------


@dataclass
class StageFitContext:
    """Cached per-stage quantities shared by every block fit."""

    rows: StageRows
    nuisances: list  # one NuisanceSet per fold (single entry without folds)
    fold_masks: list


def prepare_stage(source: DataSource, t: int, basis: SieveBasis, mode: str) -> StageFitContext:
    rows = source.stage_rows(t)
    if rows.fold is None:
        data = MomentData(
            y=np.zeros(rows.s.shape[0]),
            s=rows.s,
            u=rows.u,
            act=rows.act,
            iv=rows.iv,
            weights=rows.weights,
        )
        return StageFitContext(rows=rows, nuisances=[estimate_nuisances(data, basis)], fold_masks=[np.ones(rows.s.shape[0], bool)])
    nuis, masks = [], []
    for f in (0, 1):
        m = rows.fold == f
        other = ~m
        data = MomentData(
            y=np.zeros(int(other.sum())),
            s=rows.s[other],
            u=rows.u[other],
            act=rows.act[other],
            iv=rows.iv[other],
            weights=rows.weights[other],
        )
        nuis.append(estimate_nuisances(data, basis))
        masks.append(m)
    return StageFitContext(rows=rows, nuisances=nuis, fold_masks=masks)


def fit_block(
    ctx: StageFitContext,
    y: np.ndarray,
    basis: SieveBasis,
    intercept: bool,
    n_states: int,
    n_u: int,
    mode: str = "oracle-nuisance",
) -> SmdFit:
    """Fit one outcome block on the stage's cached rows and nuisances."""
    rows = ctx.rows
    systems = []
    for nuis, mask in zip(ctx.nuisances, ctx.fold_masks):
        data = MomentData(
            y=y[mask],
            s=rows.s[mask],
            u=rows.u[mask],
            act=rows.act[mask],
            iv=rows.iv[mask],
            weights=rows.weights[mask],
        )
        systems.append(
            assemble_system(data, nuis, mode=mode, intercept=intercept, n_states=n_states, n_u=n_u)
        )
    if len(systems) == 1:
        system = systems[0]
    else:
        from .moments import MomentSystem

        system = MomentSystem(
            phi=np.concatenate([s.phi for s in systems]),
            alpha=np.concatenate([s.alpha for s in systems]),
            s=np.concatenate([s.s for s in systems]),
            u=np.concatenate([s.u for s in systems]),
            weights=np.concatenate([s.weights for s in systems]),
            n_states=n_states,
            n_u=n_u,
            intercept=intercept,
            mode=mode,
            outcome_scale=float(np.sqrt(np.mean([s.outcome_scale**2 for s in systems]))),
        )
    return fit_smd(system, basis)


# ---------------------------------------------------------------------------
# the backward recursion
# ---------------------------------------------------------------------------


def _zero_rep(ns: int, nu: int) -> StageRep:
    z = np.zeros((ns, nu))
    return StageRep(theta=z.copy(), gamma=z.copy(), omega=z.copy(), zeta=z.copy())


def _fit_tables(fit: SmdFit, ns: int, nu: int) -> np.ndarray:
    """(s, u, p) tables of a fitted block."""
    grid_s = np.repeat(np.arange(ns), nu)
    grid_u = np.tile(np.arange(nu), ns)
    return fit.predict(grid_s, grid_u).reshape(ns, nu, -1)


def combine_stage(
    t: int,
    reward: Optional[np.ndarray],
    blocks: Optional[list],
    ns: int,
    nu: int,
) -> StageRep:
    """Linear composition of block tables into the stage representation.

    ``reward`` is an (s, u, 3) table in (own action, instrument,
    interaction) order; ``blocks`` is a list of four (s, u, 4) tables for the
    constant, own-coefficient, partner-coefficient and interaction blocks of
    the continuation, each in (action, instrument, interaction, constant)
    order of the stage's own roles.
    """
    rep = _zero_rep(ns, nu)
    even = t % 2 == 0
    if reward is not None:
        r_act, r_iv, r_int = reward[..., 0], reward[..., 1], reward[..., 2]
        if even:
            rep.theta += r_act
            rep.gamma += r_iv
        else:
            rep.theta += r_iv
            rep.gamma += r_act
        rep.omega += r_int
    if blocks is None:
        return rep
    b0, b1, b2, b3 = blocks
    if even:
        # roles: act = alice's action (theta axis), iv = bob's previous action
        rep.theta += b0[..., 0]
        rep.gamma += b0[..., 1]
        rep.omega += b0[..., 2]
        rep.zeta += b0[..., 3]
        rep.theta += b1[..., 0] + b1[..., 3]  # post-multiplied by the action
        rep.omega += b1[..., 1] + b1[..., 2]
        rep.theta += b2[..., 0]
        rep.gamma += b2[..., 1]
        rep.omega += b2[..., 2]
        rep.zeta += b2[..., 3]
        rep.theta += b3[..., 0] + b3[..., 3]
        rep.omega += b3[..., 1] + b3[..., 2]
    else:
        # roles: act = bob's action (gamma axis), iv = alice's previous action
        rep.gamma += b0[..., 0]
        rep.theta += b0[..., 1]
        rep.omega += b0[..., 2]
        rep.zeta += b0[..., 3]
        rep.gamma += b1[..., 0]
        rep.theta += b1[..., 1]
        rep.omega += b1[..., 2]
        rep.zeta += b1[..., 3]
        rep.gamma += b2[..., 0] + b2[..., 3]  # post-multiplied by the action
        rep.omega += b2[..., 1] + b2[..., 2]
        rep.gamma += b3[..., 0] + b3[..., 3]
        rep.omega += b3[..., 1] + b3[..., 2]
    return rep


def block_outcomes(
    t: int,
    rows: StageRows,
    next_rep: StageRep,
    policy: PolicyPair,
) -> list:
    """Per-row pseudo-outcomes of the four continuation blocks at stage t.

    At even stages the next actor is bob: his policy mean (a function of the
    next state and the current action) multiplies the next-stage partner and
    interaction coefficients.  At odd stages the next actor is alice and her
    policy mean (a function of the next state, next private info and the
    current action) multiplies the own and interaction coefficients.
    """
    h = t // 2
    nc_s, nc_u = rows.next_s, rows.next_u
    theta_n = next_rep.theta[nc_s, nc_u]
    gamma_n = next_rep.gamma[nc_s, nc_u]
    omega_n = next_rep.omega[nc_s, nc_u]
    zeta_n = next_rep.zeta[nc_s, nc_u]
    if t % 2 == 0:
        fac = policy.bob_mean(h)[nc_s, rows.act]
        return [zeta_n, theta_n, gamma_n * fac, omega_n * fac]
    fac = policy.alice_mean(h + 1)[nc_s, nc_u, rows.act]
    return [zeta_n, theta_n * fac, gamma_n, omega_n * fac]


@dataclass
class OPEResult:
    qhat: dict
    j_alice: float
    j_bob: float
    fits: dict = field(default_factory=dict)

    @property
    def j_total(self) -> float:
        return self.j_alice + self.j_bob


def value_weight_tables(source: DataSource, policy: PolicyPair):
    """Occupancy-weighted feature expectations of the opening move.

    Returns (theta_w, gamma_w, omega_w, zeta_w) tables over (s, u) such that
    the estimated value of either player is the elementwise dot product with
    the stage-one representation.
    """
    ns, nu = source.n_states, source.n_u
    s0, u0, w0 = source.initial_cells()
    p1 = np.zeros((ns, nu))
    np.add.at(p1, (s0, u0), w0)
    p1 /= p1.sum()
    pi_b = policy.init_bob
    pa = policy.alice_mean(0)  # (s, u, b)
    e_a = (1 - pi_b) * pa[..., 0] + pi_b * pa[..., 1]
    e_b = pi_b * np.ones((ns, nu))
    e_ab = pi_b * pa[..., 1]
    return p1 * e_a, p1 * e_b, p1 * e_ab, p1


def policy_value_from_rep(source: DataSource, policy: PolicyPair, rep: StageRep) -> float:
    tw, gw, ow, zw = value_weight_tables(source, policy)
    return float(
        (tw * rep.theta).sum()
        + (gw * rep.gamma).sum()
        + (ow * rep.omega).sum()
        + (zw * rep.zeta).sum()
    )


def evaluate_policy(
    data,
    policy: PolicyPair,
    basis: SieveBasis,
    mode: str = "oracle-nuisance",
    cross_fit: bool = False,
) -> OPEResult:
    """Backward recursion producing fitted stage tables and value estimates."""
    if not isinstance(policy, PolicyPair):
        raise TypeError("policy must be a PolicyPair (bob rules cannot see v)")
    source = as_source(data, cross_fit=cross_fit)
    if policy.horizon != source.horizon:
        raise ValueError("policy horizon does not match the data horizon")
    ns, nu = source.n_states, source.n_u
    reps: dict = {}
    fits: dict = {}
    next_rep = {"alice": None, "bob": None}
    for t in reversed(range(2 * source.horizon)):
        try:
            ctx = prepare_stage(source, t, basis, mode)
        except (DegenerateIV, IllPosedFit, InsufficientData) as exc:
            raise type(exc)(f"stage {t}: {exc}") from exc
        for side in ("alice", "bob"):
            reward_tab = None
            has_reward = (t % 2 == 0) == (side == "alice")
            if has_reward:
                fit_r = fit_block(
                    ctx, ctx.rows.y_reward, basis, intercept=False, n_states=ns, n_u=nu, mode=mode
                )
                reward_tab = _fit_tables(fit_r, ns, nu)
                fits[(t, side, "reward")] = fit_r
            blocks = None
            if next_rep[side] is not None:
                blocks = []
                for j, y in enumerate(
                    block_outcomes(t, ctx.rows, next_rep[side], policy)
                ):
                    try:
                        fit_j = fit_block(
                            ctx, y, basis, intercept=True, n_states=ns, n_u=nu, mode=mode
                        )
                    except (DegenerateIV, IllPosedFit, InsufficientData) as exc:
                        raise type(exc)(f"stage {t}, {side}, block {j}: {exc}") from exc
                    blocks.append(_fit_tables(fit_j, ns, nu))
                    fits[(t, side, f"block{j}")] = fit_j
            reps[(t, side)] = combine_stage(t, reward_tab, blocks, ns, nu)
        next_rep = {side: reps[(t, side)] for side in ("alice", "bob")}
    j_a = policy_value_from_rep(source, policy, reps[(0, "alice")])
    j_b = policy_value_from_rep(source, policy, reps[(0, "bob")])
    return OPEResult(qhat=reps, j_alice=j_a, j_bob=j_b, fits=fits)


def evaluate_single_stage(data, policy, basis, **kw) -> OPEResult:
    """Single-step evaluation: the recursion base case (horizon must be 1)."""
    source = as_source(data)
    if source.horizon != 1:
        raise ValueError("evaluate_single_stage needs a horizon-1 dataset")
    return evaluate_policy(data, policy, basis, **kw)


def evaluate_multistage(data, policy, basis, **kw) -> OPEResult:
    return evaluate_policy(data, policy, basis, **kw)


def dump_qhat_csv(result: OPEResult, path) -> None:
    """Write fitted stage tables as CSV (step, player, s, u, coefficients)."""
    lines = ["step,player,s,u,theta,gamma,omega,zeta"]
    for (t, side), rep in sorted(result.qhat.items()):
        step = t // 2 + 1 if t % 2 == 0 else (t // 2 + 1) + 0.5
        ns, nu = rep.theta.shape
        for s in range(ns):
            for u in range(nu):
                lines.append(
                    f"{step},{side},{s},{u},{rep.theta[s, u]:.17g},"
                    f"{rep.gamma[s, u]:.17g},{rep.omega[s, u]:.17g},{rep.zeta[s, u]:.17g}"
                )
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
