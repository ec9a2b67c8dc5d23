"""Direct equilibrium checks, the closed-form delay and the active-mass fixed point.

Nothing here uses the potential program. :func:`verify_equilibrium` tests a
candidate ``(x, w)`` against the definition: each type best-responds to its
delays, resources are not overused, and delays come from nonnegative
per-resource prices that vanish on slack resources.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InfeasibleError, InputError, SolverError
from .linprog import INFEASIBLE, OPTIMAL, UNBOUNDED, LpProblem, LpSolution, solve_lp, value_curve
from .model import GameSpec
from .potential import Equilibrium, support_threshold


def best_response(spec: GameSpec, l: int, w_l) -> LpSolution:
    """Best reward rate of type ``l`` facing delays ``w_l``.

    Solves ``max c_l x`` subject to ``H_l x = 0``, ``(t_l + w_l) x = d_l``, ``x >= 0``.
    """
    pt = spec.types[l]
    w_l = np.asarray(w_l, dtype=float).reshape(-1)
    if w_l.shape != (pt.n_activities,):
        raise InputError(f"delay vector for type {l} must have length {pt.n_activities}")
    if np.any(w_l < 0):
        raise InputError("delays must be nonnegative")
    K = pt.balance.shape[0]
    A_eq = np.vstack([pt.balance, (pt.durations + w_l)[None, :]])
    b_eq = np.concatenate([np.zeros(K), [pt.mass]])
    return solve_lp(LpProblem(pt.rewards, A_eq=A_eq, b_eq=b_eq))


@dataclass
class VerificationReport:
    best_response_gaps: np.ndarray
    resource_excess: float
    delay_residual: float
    verdict: bool
    best_response_values: np.ndarray
    reward_values: np.ndarray
    delta: np.ndarray
    tol: float

    @property
    def worst(self) -> float:
        return max(float(np.max(self.best_response_gaps, initial=0.0)),
                   self.resource_excess, self.delay_residual)


def _delay_structure(spec: GameSpec, rates, delays, tol):
    """Smallest ``max |w - A^T delta|`` over ``delta >= 0`` zero on slack rows."""
    w = spec.stack(delays)
    G = spec.stacked_consumption
    use = G @ spec.stack(rates)
    tight = np.flatnonzero(spec.resource_rates - use <= tol * np.maximum(1.0, spec.resource_rates))
    delta = np.zeros(spec.n_resources)
    if tight.size == 0:
        return float(np.max(np.abs(w), initial=0.0)), delta
    Gt = G[tight].T  # n x |tight|
    n = w.size
    # variables (delta_tight, tau): max -tau with |w - Gt delta| <= tau
    c = np.concatenate([np.zeros(tight.size), [-1.0]])
    ones = np.ones((n, 1))
    A_ub = np.vstack([np.hstack([-Gt, -ones]), np.hstack([Gt, -ones])])
    b_ub = np.concatenate([-w, w])
    lp = solve_lp(LpProblem(c, A_ub, b_ub))
    if lp.status != OPTIMAL:
        raise SolverError(f"delay-structure LP is {lp.status}")
    delta[tight] = lp.x[:tight.size]
    return float(lp.x[-1]), delta


def verify_equilibrium(spec: GameSpec, x, w, tol: float = 1e-7) -> VerificationReport:
    """Check ``(x, w)`` against the equilibrium definition.

    The best-response gap of type ``l`` is the larger of the reward shortfall
    against the optimal response and the infeasibility of ``x_l`` in the
    type's own problem (balance and delay-inclusive mass rows).
    """
    rates = [np.asarray(v, dtype=float).reshape(-1) for v in x]
    delays = [np.asarray(v, dtype=float).reshape(-1) for v in w]
    if len(rates) != spec.n_types or len(delays) != spec.n_types:
        raise InputError("need one rate and one delay vector per type")
    gaps, opt_vals, vals = [], [], []
    for l, pt in enumerate(spec.types):
        if rates[l].shape != (pt.n_activities,) or delays[l].shape != (pt.n_activities,):
            raise InputError(f"type {l}: rate and delay vectors need length {pt.n_activities}")
        value = float(pt.rewards @ rates[l])
        if np.any(delays[l] < 0):
            gaps.append(math.inf)
            opt_vals.append(math.nan)
            vals.append(value)
            continue
        br = best_response(spec, l, delays[l])
        if br.status == UNBOUNDED:
            opt = math.inf
        elif br.status == INFEASIBLE:
            opt = -math.inf
        else:
            opt = br.value
        infeas = max(
            float(np.max(np.abs(pt.balance @ rates[l]), initial=0.0)),
            abs(float((pt.durations + delays[l]) @ rates[l]) - pt.mass),
            float(np.max(-rates[l], initial=0.0)),
        )
        gap = max(abs(opt - value), infeas) if math.isfinite(opt) else math.inf
        gaps.append(gap)
        opt_vals.append(opt)
        vals.append(value)
    use = spec.stacked_consumption @ spec.stack(rates) if spec.n_resources else np.zeros(0)
    excess = float(np.max(use - spec.resource_rates, initial=0.0))
    excess = max(excess, 0.0)
    delay_res, delta = _delay_structure(spec, rates, delays, tol)
    gaps = np.array(gaps)
    verdict = bool(np.all(gaps <= tol) and excess <= tol and delay_res <= tol)
    return VerificationReport(gaps, excess, delay_res, verdict, np.array(opt_vals), np.array(vals),
                              delta, tol)


def delay_formula(spec: GameSpec, eq: Equilibrium, l: int, j: int, tol: float = 1e-7):
    """Closed-form waiting delay ``c_j d_l / v_l - t_j`` of a supported activity.

    Only defined for balance-free types and activities in the equilibrium
    support; returns ``None`` otherwise. Raises :class:`SolverError` if the
    formula disagrees with the equilibrium's own delay by more than ``tol``
    relative.
    """
    pt = spec.types[l]
    if pt.balance.shape[0] and np.any(pt.balance != 0):
        return None
    thr = spec.split(support_threshold(spec))[l]
    if not eq.rates[l][j] > thr[j]:
        return None
    v = eq.type_rewards[l]
    w = pt.rewards[j] * pt.mass / v - pt.durations[j]
    if abs(w - eq.delays[l][j]) > tol * max(1.0, abs(w)):
        raise SolverError(f"delay formula {w} disagrees with equilibrium delay {eq.delays[l][j]}")
    return float(w)


@dataclass
class FixedPoint:
    d_o: float
    F_at: float
    F_sub: float
    evaluations: int


_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


def active_mass_fixed_point(spec: GameSpec, tol: float = 1e-12) -> FixedPoint:
    """Equilibrium active mass of a single type from the optimal-value curve.

    Maximizes the unimodal ``log F(d') - d'/d`` over ``(0, d]`` by golden
    section; its maximizer is the ``d'`` where ``F(d') = F'(d') d`` for some
    supergradient.
    """
    if spec.n_types != 1:
        raise InputError("active-mass fixed point is defined for a single type")
    d = spec.types[0].mass
    evals = [0]

    def score(dp):
        evals[0] += 1
        try:
            F = value_curve(spec, dp).F
        except InfeasibleError:
            return -math.inf
        return math.log(F) - dp / d if F > 0 else -math.inf

    lo, hi = 0.0, d
    a, b = hi - _GOLDEN * (hi - lo), lo + _GOLDEN * (hi - lo)
    fa, fb = score(a), score(b)
    while hi - lo > tol * d:
        if fa < fb:
            lo, a, fa = a, b, fb
            b = lo + _GOLDEN * (hi - lo)
            fb = score(b)
        else:
            hi, b, fb = b, a, fa
            a = hi - _GOLDEN * (hi - lo)
            fa = score(a)
    # the endpoint d itself is admissible
    cands = [(fa, a), (fb, b), (score(d), d)]
    best = max(cands, key=lambda p: p[0])
    if not math.isfinite(best[0]):
        raise InfeasibleError("F is infeasible or nonpositive on all of (0, d]")
    s_o, d_o = best
    # exact finish: F is piecewise linear, so read off the pieces on either side
    # of d_o and accept a point that provably satisfies F(d') = beta d
    h = 1e-6 * d
    pieces = []
    for dp in (d_o - h, d_o + h):
        if 0 < dp <= d:
            vp = value_curve(spec, dp)
            pieces.append((vp.F - vp.F_sub * dp, vp.F_sub))

    def on_piece(x, a_, b_):
        return abs(value_curve(spec, x).F - (a_ + b_ * x)) <= 1e-12 * max(1.0, abs(a_ + b_ * x))

    for a_, b_ in pieces:
        if b_ > 0:
            cand = d - a_ / b_
            if 0 < cand <= d and abs(cand - d_o) <= 2 * h and on_piece(cand, a_, b_):
                d_o = cand
                break
    else:
        if len(pieces) == 2 and pieces[0][1] - pieces[1][1] > 1e-12:
            (a1, b1), (a2, b2) = pieces
            kink = (a2 - a1) / (b1 - b2)
            if 0 < kink <= d and abs(kink - d_o) <= 2 * h and b2 * d <= a1 + b1 * kink <= b1 * d:
                d_o = kink
        elif d - d_o <= 2 * h and pieces and pieces[0][1] * d <= value_curve(spec, d).F * (1 + 1e-12):
            # corner at the full mass: no waiting
            d_o = d
    vp = value_curve(spec, d_o)
    return FixedPoint(d_o=d_o, F_at=vp.F, F_sub=vp.F_sub, evaluations=evals[0])
