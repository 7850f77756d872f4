"""Pessimistic policy learning over nested confidence regions.

For each candidate pair the backward recursion is rerun with every fitted
block replaced by a confidence region (a criterion-gap ellipsoid).  The
nested union over upstream regions is approximated by propagating a fixed
number of member selections ("chains"): member 0 is always the center, the
rest are axis-aligned boundary points, widest axes first, so the all-center
chain reproduces the plug-in estimate and the pessimistic value can never
exceed it.  At the first stage the value functional is linear in the
remaining block coefficients, so the inner minimum over each final region is
closed-form and the pessimistic value is the minimum over chains of a sum of
exact ellipsoid minima.

Everything a block fit needs from the data collapses into per-cell
sufficient statistics that are policy-independent (design moments) or enter
only through small contraction tables (outcome moments), so scanning
thousands of candidates costs einsums over tiny arrays instead of passes
over the rows.  Region radii are the rate schedule times the squared root
mean square of the block outcome, which makes the whole construction exactly
equivariant under a positive rescaling of all rewards.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import EmptyClass, UnboundedBelow
from .game import GameSpec, PolicyPair
from .moments import MomentData, estimate_nuisances
from .ope import DataSource, as_source, value_weight_tables
from .sieve import SieveBasis
from .smd import eta_schedule, horizon_weight
from . import oracle as oracle_mod

HESSIAN_TOL = 1e-10


@dataclass
class EtaConfig:
    """Region-size schedule parameters and the chain budget."""

    alpha: float = 2.0
    varsigma: float = 0.0
    d: int = 1
    c_eta: float = 2.0
    k_members: int = 16

    def radius_unit(self, n: Optional[int], step_weight: float) -> float:
        """Schedule value before the outcome-scale factor."""
        if n is None or n <= 0:
            return 0.0
        return eta_schedule(
            n,
            alpha=self.alpha,
            varsigma=self.varsigma,
            d=self.d,
            c_eta=self.c_eta,
            horizon_weight=step_weight,
        )


def _stage_step(t: int) -> float:
    """Step label of stage ``t``: 1, 1.5, 2, 2.5, ..."""
    return t // 2 + 1 + (0.5 if t % 2 else 0.0)


class _StageCache:
    """Per-stage sufficient statistics for arbitrary outcome blocks.

    ``phibar3``/``phibar4`` are per-cell design-moment means of the 3- and
    4-unknown systems; ``t_alpha[c, m, next_cell, act]`` turns any outcome of
    the form ``g(next cell) * factor(next cell, action)`` into outcome-moment
    cell means by contraction; ``abar_reward`` holds the reward block's
    outcome moments.  ``pinv*``/``hess*``/``hpinv*`` are per-cell solve and
    region-geometry operators, fixed once per dataset.
    """

    def __init__(self, source: DataSource, t: int, basis: SieveBasis):
        rows = source.stage_rows(t)
        ns, nu = source.n_states, source.n_u
        k = ns * nu
        w = rows.weights / rows.weights.sum()
        data = MomentData(
            y=np.zeros(rows.s.shape[0]),
            s=rows.s,
            u=rows.u,
            act=rows.act,
            iv=rows.iv,
            weights=w,
        )
        nuis = estimate_nuisances(data, basis)
        act = rows.act.astype(float)
        iv = rows.iv.astype(float)
        f1v = nuis.f1_at(rows.s, rows.u)
        f2v = nuis.f2_at(rows.s, rows.u, rows.iv)
        b_til = iv - f1v
        a_til = act - f2v
        cells = rows.s * nu + rows.u
        n_rows = rows.s.shape[0]

        feats = np.stack([b_til * a_til, b_til, np.ones(n_rows), act], axis=1)
        phi4 = np.zeros((n_rows, 4, 4))
        phi4[:, 0, 0] = -b_til * a_til * act
        phi4[:, 0, 2] = -iv * b_til * a_til * act
        phi4[:, 1, 0] = -b_til * act
        phi4[:, 1, 1] = -iv * b_til
        phi4[:, 1, 2] = -act * iv * b_til
        phi4[:, 2, 0], phi4[:, 2, 1], phi4[:, 2, 2], phi4[:, 2, 3] = (
            -act,
            -iv,
            -act * iv,
            -1.0,
        )
        phi4[:, 3, 0], phi4[:, 3, 1], phi4[:, 3, 2], phi4[:, 3, 3] = (
            -act,
            -act * iv,
            -act * iv,
            -act,
        )

        mass = np.zeros(k)
        np.add.at(mass, cells, w)
        phibar4 = np.zeros((k, 4, 4))
        np.add.at(phibar4, cells, phi4 * w[:, None, None])
        nz = mass > 0
        phibar4[nz] /= mass[nz][:, None, None]
        self.mass = mass
        self.phibar4 = phibar4
        self.phibar3 = phibar4[:, :3, :3]

        nc = k
        next_cells = rows.next_s * nu + rows.next_u
        flat_idx = (cells * nc + next_cells) * 2 + rows.act
        self.t_alpha = np.zeros((k, 4, nc, 2))
        for m in range(4):
            buf = np.zeros(k * nc * 2)
            np.add.at(buf, flat_idx, w * feats[:, m])
            self.t_alpha[:, m] = buf.reshape(k, nc, 2)
        self.t_alpha[nz] /= mass[nz][:, None, None, None]
        s2 = np.zeros(nc * 2)
        np.add.at(s2, next_cells * 2 + rows.act, w)
        self.scale_weights = s2.reshape(nc, 2)

        y_r = rows.y_reward
        abar_r = np.zeros((k, 3))
        np.add.at(abar_r, cells, feats[:, :3] * (w * y_r)[:, None])
        abar_r[nz] /= mass[nz][:, None]
        self.abar_reward = abar_r
        self.reward_scale_sq = float((w * y_r**2).sum())

        def geometry(phibar, p):
            pinv = np.zeros((k, p, p))
            hdiag = np.zeros((k, p))
            hess = np.zeros((k, p, p))
            hpinv = np.zeros((k, p, p))
            for c in range(k):
                if mass[c] <= 0:
                    continue
                pinv[c] = np.linalg.pinv(phibar[c], rcond=1e-12)
                hc = 2.0 * mass[c] * phibar[c].T @ phibar[c]
                hess[c] = hc
                hdiag[c] = np.diag(hc)
                hpinv[c] = np.linalg.pinv(hc, rcond=1e-12)
            return pinv, hdiag, hess, hpinv

        self.pinv3, self.hdiag3, self.hess3, self.hpinv3 = geometry(self.phibar3, 3)
        self.pinv4, self.hdiag4, self.hess4, self.hpinv4 = geometry(self.phibar4, 4)
        self.reward_coef = np.einsum("cpm,cm->cp", self.pinv3, -abar_r)
        self.nuisances = nuis
        self.n_cells = k


def _member(center: np.ndarray, hdiag: np.ndarray, eta: float, index: int) -> np.ndarray:
    """k-th member of a criterion-gap ellipsoid: center, then axis points."""
    if index == 0 or eta <= 0:
        return center
    flat_d = hdiag.ravel()
    radii = np.where(
        flat_d > HESSIAN_TOL, np.sqrt(2.0 * eta / np.maximum(flat_d, HESSIAN_TOL)), 0.0
    )
    order = np.argsort(-radii)
    order = order[radii[order] > 0]
    if order.size == 0:
        return center
    axis = order[((index - 1) // 2) % order.size]
    sign = 1.0 if (index - 1) % 2 == 0 else -1.0
    out = center.ravel().copy()
    out[axis] += sign * radii[axis]
    return out.reshape(center.shape)


@dataclass
class PessimisticValue:
    """Lower-bound value of one policy pair plus diagnostics."""

    policy: PolicyPair
    value: float
    plug_in: float
    chain_values: dict
    unbounded: bool = False
    unbounded_direction: Optional[np.ndarray] = None
    diagnostics: dict = field(default_factory=dict)


@dataclass
class QRegions:
    """Stage-one region structure of one candidate policy.

    ``stage0[side]`` holds the per-chain block-region centers and radii plus
    the (chain-independent) reward region, produced by the same chain
    propagation the nested construction prescribes; the union over upstream
    members is represented by the sampled chains.
    """

    policy: PolicyPair
    eta: EtaConfig
    n: Optional[int]
    stage0: dict
    diagnostics: dict = field(default_factory=dict)


class LearnerEngine:
    """Shared per-dataset state for scanning many candidate policies."""

    def __init__(self, data, basis: SieveBasis, eta: EtaConfig = EtaConfig()):
        if basis.kind != "saturated":
            raise ValueError("the learner requires the saturated basis")
        self.source = as_source(data)
        self.basis = basis
        self.eta = eta
        self.n = self.source.dataset.n if hasattr(self.source, "dataset") else None
        self.horizon = self.source.horizon
        self.ns, self.nu = self.source.n_states, self.source.n_u
        self.caches = []
        for t in range(2 * self.horizon):
            try:
                self.caches.append(_StageCache(self.source, t, basis))
            except Exception as exc:
                raise type(exc)(f"stage {t}: {exc}") from exc

    def _fac_table(self, t: int, policy: PolicyPair) -> np.ndarray:
        """Contraction factor (next_cell, act) of the next actor's rule."""
        nc = self.ns * self.nu
        idx_s = np.arange(nc) // self.nu
        idx_u = np.arange(nc) % self.nu
        h = t // 2
        if t % 2 == 0:
            return policy.bob_mean(h)[idx_s]
        return policy.alice_mean(h + 1)[idx_s, idx_u]

    def _block_g(self, t: int, rep_stack: np.ndarray, fac: np.ndarray) -> np.ndarray:
        """(chain, block, next_cell, act) outcome tables from next-stage reps."""
        kk, nc = rep_stack.shape[0], rep_stack.shape[1]
        ones = np.ones((nc, 2))
        theta, gamma, omega, zeta = (rep_stack[:, :, i] for i in range(4))
        g = np.empty((kk, 4, nc, 2))
        g[:, 0] = zeta[:, :, None] * ones
        if t % 2 == 0:
            g[:, 1] = theta[:, :, None] * ones
            g[:, 2] = gamma[:, :, None] * fac
            g[:, 3] = omega[:, :, None] * fac
        else:
            g[:, 1] = theta[:, :, None] * fac
            g[:, 2] = gamma[:, :, None] * ones
            g[:, 3] = omega[:, :, None] * fac
        return g

    def _combine(self, t: int, reward_m, block_m) -> np.ndarray:
        """Member tables -> (chain, cells, 4) stage representations."""
        kk = block_m.shape[0] if block_m is not None else reward_m.shape[0]
        rep = np.zeros((kk, self.ns * self.nu, 4))
        even = t % 2 == 0
        if reward_m is not None:
            r_act, r_iv, r_int = (reward_m[..., i] for i in range(3))
            rep[:, :, 0] += r_act if even else r_iv
            rep[:, :, 1] += r_iv if even else r_act
            rep[:, :, 2] += r_int
        if block_m is None:
            return rep
        b0, b1, b2, b3 = (block_m[:, j] for j in range(4))
        if even:
            rep[:, :, 0] += b0[..., 0] + b1[..., 0] + b1[..., 3] + b2[..., 0] + b3[..., 0] + b3[..., 3]
            rep[:, :, 1] += b0[..., 1] + b2[..., 1]
            rep[:, :, 2] += b0[..., 2] + b1[..., 1] + b1[..., 2] + b2[..., 2] + b3[..., 1] + b3[..., 2]
            rep[:, :, 3] += b0[..., 3] + b2[..., 3]
        else:
            rep[:, :, 1] += b0[..., 0] + b1[..., 0] + b2[..., 0] + b2[..., 3] + b3[..., 0] + b3[..., 3]
            rep[:, :, 0] += b0[..., 1] + b1[..., 1]
            rep[:, :, 2] += b0[..., 2] + b1[..., 2] + b2[..., 1] + b2[..., 2] + b3[..., 1] + b3[..., 2]
            rep[:, :, 3] += b0[..., 3] + b1[..., 3]
        return rep

    def _fit_blocks(self, t: int, rep_stack: np.ndarray, fac: np.ndarray):
        """Centers and radii of the four continuation blocks, per chain."""
        cache = self.caches[t]
        g = self._block_g(t, rep_stack, fac)
        alpha = np.einsum("cmna,kjna->kjcm", cache.t_alpha, g)
        coef = np.einsum("cpm,kjcm->kjcp", cache.pinv4, -alpha)
        scale_sq = np.einsum("na,kjna->kj", cache.scale_weights, g**2)
        unit = self.eta.radius_unit(self.n, horizon_weight(self.horizon, _stage_step(t), "recursion"))
        return coef, unit * scale_sq

    def _reward_region(self, t: int):
        cache = self.caches[t]
        eta_r = self.eta.radius_unit(self.n, 1.0) * cache.reward_scale_sq
        return cache.reward_coef, eta_r

    def propagate(self, policy: PolicyPair) -> dict:
        """Chain recursion; returns the stage-0 region data per side."""
        kk = self.eta.k_members
        out = {}
        for side in ("alice", "bob"):
            rep = None
            stage0 = None
            for t in reversed(range(2 * self.horizon)):
                cache = self.caches[t]
                has_reward = (t % 2 == 0) == (side == "alice")
                reward_info = self._reward_region(t) if has_reward else None
                blocks_info = None
                if rep is not None:
                    blocks_info = self._fit_blocks(t, rep, self._fac_table(t, policy))
                if t == 0:
                    stage0 = {"reward": reward_info, "blocks": blocks_info}
                    break
                if reward_info is None and blocks_info is None:
                    rep = np.zeros((1, self.ns * self.nu, 4))
                    continue
                n_chain = kk
                reward_m = None
                if reward_info is not None:
                    center_r, eta_r = reward_info
                    reward_m = np.stack(
                        [_member(center_r, cache.hdiag3, eta_r, k) for k in range(n_chain)]
                    )
                block_m = None
                if blocks_info is not None:
                    coef, etas = blocks_info
                    last = coef.shape[0] - 1
                    block_m = np.stack(
                        [
                            np.stack(
                                [
                                    _member(
                                        coef[min(k, last), j],
                                        cache.hdiag4,
                                        float(etas[min(k, last), j]),
                                        k,
                                    )
                                    for j in range(4)
                                ]
                            )
                            for k in range(n_chain)
                        ]
                    )
                rep = self._combine(t, reward_m, block_m)
            out[side] = stage0
        return out


def build_q_regions(
    data,
    policy: PolicyPair,
    basis: SieveBasis,
    eta: EtaConfig = EtaConfig(),
    engine: Optional[LearnerEngine] = None,
) -> QRegions:
    """Construct the stage-one confidence-region structure for one policy."""
    if engine is None:
        engine = LearnerEngine(data, basis, eta)
    stage0 = engine.propagate(policy)
    return QRegions(
        policy=policy, eta=eta, n=engine.n, stage0=stage0, diagnostics={"engine": engine}
    )


def _min_over_region(weight, center, hess, hpinv, eta):
    """Exact minimum of <weight, coef> over one criterion-gap ellipsoid.

    ``center`` may carry leading chain axes.  Raises
    :class:`UnboundedBelow` when the weight loads on a flat direction of the
    criterion (insufficient data coverage for the queried functional).
    """
    q = float(np.einsum("cp,cpq,cq->", weight, hpinv, weight))
    proj = np.einsum("cpq,cq->cp", hess, np.einsum("cpq,cq->cp", hpinv, weight))
    gap = float(np.abs(weight - proj).max())
    if gap > 1e-8 * max(1.0, float(np.abs(weight).max())):
        raise UnboundedBelow(
            "value weight loads on a flat direction of a stage-one region",
            direction=weight - proj,
        )
    base = np.einsum("...cp,cp->...", center, weight)
    return base - np.sqrt(np.maximum(2.0 * np.asarray(eta) * q, 0.0))


_BLOCK_POST = (False, True, False, True)  # which blocks are action-multiplied


def _stage0_weights(tw, gw, ow, zw):
    w_rep = np.stack([tw.ravel(), gw.ravel(), ow.ravel(), zw.ravel()], axis=1)
    post = np.stack([w_rep[:, 0], w_rep[:, 2], w_rep[:, 2], w_rep[:, 0]], axis=1)
    return w_rep[:, :3], [w_rep, post, w_rep, post]


def _region_argmin(weight, center, hpinv, eta):
    """Coefficient attaining the closed-form linear minimum over one region."""
    step = np.einsum("cpq,cq->cp", hpinv, weight)
    q = float(np.einsum("cp,cp->", weight, step))
    if q <= 0 or eta <= 0:
        return center.copy()
    return center - np.sqrt(2.0 * eta / q) * step


def pessimistic_value(data, policy: PolicyPair, regions: QRegions) -> PessimisticValue:
    """Exact inner minimization of the policy value over the region structure."""
    engine: LearnerEngine = regions.diagnostics["engine"]
    tw, gw, ow, zw = value_weight_tables(engine.source, policy)
    w_reward, w_blocks = _stage0_weights(tw, gw, ow, zw)
    total_min, total_plug = 0.0, 0.0
    chain_values = {}
    attaining = {}
    region_sizes = {}
    unbounded, direction = False, None
    for side in ("alice", "bob"):
        info = regions.stage0[side]
        cache = engine.caches[0]
        try:
            if info["reward"] is not None:
                center_r, eta_r = info["reward"]
                total_min += float(
                    _min_over_region(w_reward, center_r, cache.hess3, cache.hpinv3, eta_r)
                )
                total_plug += float(np.einsum("cp,cp->", center_r, w_reward))
                attaining[(side, "reward")] = _region_argmin(
                    w_reward, center_r, cache.hpinv3, eta_r
                )
                region_sizes[(side, "reward")] = eta_r
            if info["blocks"] is not None:
                coef, etas = info["blocks"]
                vals = np.zeros(coef.shape[0])
                for j in range(4):
                    vals += _min_over_region(
                        w_blocks[j], coef[:, j], cache.hess4, cache.hpinv4, etas[:, j]
                    )
                chain_values[side] = vals
                best_k = int(np.argmin(vals))
                for j in range(4):
                    attaining[(side, f"block{j}")] = _region_argmin(
                        w_blocks[j], coef[best_k, j], cache.hpinv4, float(etas[best_k, j])
                    )
                    region_sizes[(side, f"block{j}")] = float(etas[best_k, j])
                total_min += float(vals.min())
                total_plug += float(
                    sum(np.einsum("cp,cp->", coef[0, j], w_blocks[j]) for j in range(4))
                )
        except UnboundedBelow as exc:
            unbounded, direction = True, exc.direction
            total_min = -np.inf
    return PessimisticValue(
        policy=policy,
        value=total_min,
        plug_in=total_plug,
        chain_values=chain_values,
        unbounded=unbounded,
        unbounded_direction=direction,
        diagnostics={"attaining_members": attaining, "region_sizes": region_sizes},
    )


def learn_policy_pair(
    data,
    policy_class: list[PolicyPair],
    basis: SieveBasis,
    eta: EtaConfig = EtaConfig(),
    engine: Optional[LearnerEngine] = None,
) -> tuple[PolicyPair, PessimisticValue]:
    """Exhaustive pessimistic argmax over an ordered policy class.

    Candidates must be sorted by their encoding; ties keep the earliest, so
    the tie-break is lexicographic by construction.
    """
    if not policy_class:
        raise EmptyClass("no candidate policy pairs")
    if engine is None:
        engine = LearnerEngine(data, basis, eta)
    best, best_val = None, None
    for pair in policy_class:
        regions = build_q_regions(data, pair, basis, eta, engine=engine)
        pv = pessimistic_value(data, pair, regions)
        if best_val is None or pv.value > best_val.value:
            best, best_val = pair, pv
    return best, best_val


def compute_gap(spec: GameSpec, policy: PolicyPair, policy_class: list[PolicyPair]) -> float:
    """In-class optimality gap of a learned pair, by exact enumeration."""
    _, j_star = oracle_mod.exact_optimal_pair(spec, policy_class)
    ja, jb = oracle_mod.exact_policy_value(spec, policy)
    gap = j_star - (ja + jb)
    assert gap >= -1e-10
    return float(max(gap, 0.0))


def truth_covered(
    engine: LearnerEngine,
    spec: GameSpec,
    policy: PolicyPair,
    exq=None,
    true_blocks=None,
) -> bool:
    """Whether every true table lies in its region along the true chain.

    Mirrors the nested construction: true reward triples must fall in the
    reward-block regions, and at every stage the true continuation-block
    vectors, built from the true upstream tables rather than sampled members,
    must fall in the corresponding block regions.
    """
    if exq is None:
        exq = oracle_mod.exact_q(spec, policy)
    if true_blocks is None:
        true_blocks = oracle_mod.exact_recursion_blocks(spec, policy, exq)
    truths = oracle_mod.true_coefficients(spec)
    for t in range(2 * engine.horizon):
        cache = engine.caches[t]
        triple = truths["alice_reward" if t % 2 == 0 else "bob_reward"]
        true3 = np.stack(
            [triple.theta_a.ravel(), triple.theta_z.ravel(), triple.theta_az.ravel()],
            axis=1,
        )
        center_r, eta_r = engine._reward_region(t)
        d = true3 - center_r
        if 0.5 * float(np.einsum("cp,cpq,cq->", d, cache.hess3, d)) > eta_r + 1e-12:
            return False
    for t in range(2 * engine.horizon - 1):
        cache = engine.caches[t]
        for side in ("alice", "bob"):
            nxt = exq.marginal[(t + 1, side)]
            rep_true = np.stack(
                [nxt.theta.ravel(), nxt.gamma.ravel(), nxt.omega.ravel(), nxt.zeta.ravel()],
                axis=1,
            )[None]
            coef, etas = engine._fit_blocks(t, rep_true, engine._fac_table(t, policy))
            for j in range(4):
                blk = true_blocks[(t, side, j)]
                if t % 2 == 0:
                    cols = (blk.theta, blk.gamma, blk.omega, blk.zeta)
                else:
                    cols = (blk.gamma, blk.theta, blk.omega, blk.zeta)
                true4 = np.stack([c.ravel() for c in cols], axis=1)
                d = true4 - coef[0, j]
                if 0.5 * float(np.einsum("cp,cpq,cq->", d, cache.hess4, d)) > float(etas[0, j]) + 1e-12:
                    return False
    return True
