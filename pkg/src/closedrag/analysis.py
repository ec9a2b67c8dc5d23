"""Price of anarchy and shadow-price tolls."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InfeasibleError, InputError, LpError, ParticipationError, SolverError
from .linprog import OPTIMAL, LpProblem, optimal_allocation, solve_lp
from .model import GameSpec, PlayerType
from .potential import DEFAULT_TOL, Equilibrium, solve_potential
from .scenarios import poa_family

__all__ = ["PoaReport", "price_of_anarchy", "poa_family", "PricingReport", "optimal_pricing",
           "priced_game"]


@dataclass
class PoaReport:
    optimal_value: float
    equilibrium_value: float
    ratio: float
    single_type: bool
    kkt_residual: float
    lp_duality_gap: float


def price_of_anarchy(spec: GameSpec, tol: float = DEFAULT_TOL) -> PoaReport:
    """Optimal total reward over equilibrium total reward.

    Only single-type games are guaranteed a ratio of at most 2; with several
    types the ratio is reported but unbounded in general.
    """
    opt = optimal_allocation(spec)
    eq = solve_potential(spec, tol=tol)
    ev = eq.total_reward
    if ev <= tol:
        raise ParticipationError(f"equilibrium value {ev:.3e} is not positive")
    return PoaReport(opt.value, ev, opt.value / ev, spec.n_types == 1, eq.kkt_residual,
                     opt.lp.duality_gap)


def priced_game(spec: GameSpec, lam) -> GameSpec:
    """Same game with every activity's reward reduced by its resource charge."""
    lam = np.asarray(lam, dtype=float)
    types = tuple(
        PlayerType(pt.name, pt.mass, pt.rewards - pt.consumption.T @ lam, pt.durations,
                   pt.consumption, pt.balance, pt.activity_names)
        for pt in spec.types
    )
    return GameSpec(spec.resource_rates, types, name=f"{spec.name}+tolls", resource_names=spec.resource_names)


@dataclass
class PricingReport:
    lambda_star: np.ndarray
    priced_spec: GameSpec
    optimal_value: float
    priced_value: float
    priced_rates: np.ndarray
    retained_value: float
    equilibrium_value: float
    priced_equilibrium: Equilibrium
    equilibrium: Equilibrium


def _best_gross(spec: GameSpec, priced: GameSpec, eq: Equilibrium, tol: float):
    """Largest gross reward among the priced game's equilibria.

    Equilibria of a single-type game all share the net reward and the active
    mass, and any resource-feasible balanced point with those two values
    attains the same potential, so the equilibrium set is a polytope.
    """
    pt, qt = spec.types[0], priced.types[0]
    J = pt.n_activities
    v_net = float(eq.type_rewards[0])
    m = float(eq.active_mass)
    K = pt.balance.shape[0]
    A_eq = np.vstack([pt.balance, qt.rewards[None, :], pt.durations[None, :]])
    b_eq = np.concatenate([np.zeros(K), [v_net, m]])
    A_ub = pt.consumption if spec.n_resources else None
    b_ub = spec.resource_rates if spec.n_resources else None
    lp = solve_lp(LpProblem(pt.rewards, A_ub, b_ub, A_eq, b_eq))
    if lp.status != OPTIMAL:
        # the equality data carry the solver's rounding; relax them to a thin slab
        slack = tol * max(1.0, v_net, m)
        rows = np.vstack([qt.rewards, -qt.rewards, pt.durations, -pt.durations])
        rhs = np.array([v_net + slack, -v_net + slack, m + slack, -m + slack])
        A_ub = rows if A_ub is None else np.vstack([A_ub, rows])
        b_ub = rhs if b_ub is None else np.concatenate([b_ub, rhs])
        lp = solve_lp(LpProblem(pt.rewards, A_ub, b_ub, pt.balance if K else None,
                                np.zeros(K) if K else None))
        if lp.status != OPTIMAL:
            raise LpError(f"priced equilibrium polytope LP is {lp.status}")
    return float(lp.value), lp.x[:J]


def _mass_favouring_duals(spec: GameSpec, value: float, lam0: np.ndarray, nu0: float) -> np.ndarray:
    """Among optimal resource duals, one that maximizes the mass multiplier.

    When the optimal value has a kink in the participating mass, the LP dual
    is not unique; the largest mass multiplier leaves the most reward with
    the players, which is what keeps some net reward positive after tolls.
    Dual: min b lam + d nu s.t. A^T lam + H^T mu + t nu >= c, lam >= 0.
    Returns ``lam0`` unless the selection raises the multiplier above ``nu0``.
    """
    pt = spec.types[0]
    I, K = spec.n_resources, pt.balance.shape[0]
    if I == 0:
        return lam0
    # z = (lam, mu+, mu-, nu+, nu-) >= 0
    cover = np.hstack([pt.consumption.T, pt.balance.T, -pt.balance.T, pt.durations[:, None],
                       -pt.durations[:, None]])
    face = np.concatenate([spec.resource_rates, np.zeros(2 * K), [pt.mass, -pt.mass]])
    slack = 1e-12 * max(1.0, abs(value))
    A_ub = np.vstack([-cover, face[None, :]])
    b_ub = np.concatenate([-pt.rewards, [value + slack]])
    obj = np.zeros(I + 2 * K + 2)
    obj[-2:] = [1.0, -1.0]
    lp = solve_lp(LpProblem(obj, A_ub, b_ub))
    if lp.status != OPTIMAL or lp.value <= nu0 + 1e-9 * max(1.0, abs(nu0)):
        return lam0
    return lp.x[:I].copy()


def optimal_pricing(spec: GameSpec, tol: float = 1e-6) -> PricingReport:
    """Charge each resource its shadow price and compare the resulting values.

    The shadow price is an optimal LP dual; when several exist, the one with
    the largest mass multiplier is used.

    Checks that the best priced equilibrium recovers the optimal value and
    that the untolled equilibrium keeps at least ``c x* - lam* A x*``.
    Raises :class:`ParticipationError` when tolls leave no activity with a
    positive net reward.
    """
    if spec.n_types != 1:
        raise InputError("optimal pricing is defined for a single player type")
    opt = optimal_allocation(spec)
    lam = _mass_favouring_duals(spec, opt.value, opt.resource_duals, float(opt.mass_duals[0]))
    priced = priced_game(spec, lam)
    pt = spec.types[0]
    x_star = opt.rates[0]
    retained = float(pt.rewards @ x_star - lam @ (pt.consumption @ x_star)) if spec.n_resources else opt.value
    if not np.any(priced.types[0].rewards > tol * max(1.0, float(np.max(np.abs(pt.rewards))))):
        raise ParticipationError("tolls leave every activity with a nonpositive net reward")
    try:
        peq = solve_potential(priced)
    except InfeasibleError as exc:
        raise ParticipationError(f"priced game admits no positive net reward: {exc}") from exc
    gross, x_p = _best_gross(spec, priced, peq, 1e-9)
    if abs(gross - opt.value) > tol * max(1.0, abs(opt.value)):
        raise SolverError(f"priced equilibrium value {gross} differs from the optimum {opt.value}")
    eq = solve_potential(spec)
    ev = eq.total_reward
    if ev < retained - tol * max(1.0, abs(retained)):
        raise SolverError(f"equilibrium value {ev} is below the retained value {retained}")
    return PricingReport(lam, priced, opt.value, gross, x_p, retained, ev, peq, eq)
