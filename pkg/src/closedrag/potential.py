"""Equilibria as maximizers of the log-reward potential.

The potential of a game is

    P(x) = sum_l [ d_l * log(c_l @ x_l) - t_l @ x_l ]

maximized over ``sum_l A_l x_l <= b``, ``H_l x_l = 0``, ``x >= 0``. Its
maximizers, paired with delays ``w_l = A_l.T @ lam`` built from the resource
multipliers ``lam``, are exactly the equilibria of the game.

:func:`solve_potential` runs a primal log-barrier method (Newton steps with
backtracking, equality constraints kept exactly) and then polishes the
result by Newton's method on the KKT equations restricted to the detected
support and binding resources. The polished point is accepted only if its
KKT residual beats the barrier iterate.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import InfeasibleError, NonConvergenceError
from .linprog import OPTIMAL, LpProblem, solve_lp
from .model import GameSpec, check_feasibility, require_valid

log = logging.getLogger(__name__)

DEFAULT_TOL = 1e-8
SUPPORT_REL = 1e-6


@dataclass
class Equilibrium:
    rates: list
    resource_duals: np.ndarray
    delays: list
    balance_duals: list
    type_rewards: np.ndarray
    active_mass: float
    waiting_mass: np.ndarray
    kkt_residual: float
    potential: float = float("nan")
    iterations: int = 0
    polished: bool = False
    history: list = field(default_factory=list)

    @property
    def total_reward(self) -> float:
        return float(np.sum(self.type_rewards))


def support_threshold(spec: GameSpec) -> np.ndarray:
    """Per-activity cutoff separating genuine support from numerical zeros."""
    out = []
    for pt in spec.types:
        tmax = float(np.max(pt.durations)) if pt.durations.size else 1.0
        tmax = tmax if tmax > 0 else 1.0
        out.append(np.full(pt.n_activities, SUPPORT_REL * pt.mass / tmax))
    return np.concatenate(out)


def potential_value(spec: GameSpec, rates) -> float:
    total = 0.0
    for pt, x in zip(spec.types, rates):
        v = float(pt.rewards @ x)
        if v <= 0:
            return float("-inf")
        total += pt.mass * np.log(v) - float(pt.durations @ x)
    return total


def make_equilibrium(spec: GameSpec, rates, lam, mu, **extra) -> Equilibrium:
    rates = [np.asarray(x, dtype=float) for x in rates]
    lam = np.asarray(lam, dtype=float).reshape(-1)
    delays = [pt.consumption.T @ lam for pt in spec.types]
    v = np.array([float(pt.rewards @ x) for pt, x in zip(spec.types, rates)])
    return Equilibrium(
        rates=rates,
        resource_duals=lam,
        delays=delays,
        balance_duals=[np.asarray(m, dtype=float) for m in mu],
        type_rewards=v,
        active_mass=float(sum(pt.durations @ x for pt, x in zip(spec.types, rates))),
        waiting_mass=np.array([float(w @ x) for w, x in zip(delays, rates)]),
        kkt_residual=kkt_residual(spec, rates, lam, mu),
        potential=potential_value(spec, rates),
        **extra,
    )


def kkt_residual(spec: GameSpec, x, lam, mu) -> float:
    """Worst violation of the potential program's optimality conditions.

    Covers balance residuals, stationarity excess on every activity,
    absolute stationarity on supported activities, resource overuse,
    complementary slackness and negative multipliers. Returns ``inf`` when
    some type earns a nonpositive reward.
    """
    lam = np.asarray(lam, dtype=float).reshape(-1)
    thr = spec.split(support_threshold(spec))
    worst = 0.0
    use = np.zeros(spec.n_resources)
    for l, pt in enumerate(spec.types):
        xl = np.asarray(x[l], dtype=float)
        v = float(pt.rewards @ xl)
        if v <= 0:
            return float("inf")
        mul = np.asarray(mu[l], dtype=float).reshape(-1) if pt.balance.shape[0] else np.zeros(0)
        if pt.balance.shape[0]:
            worst = max(worst, float(np.max(np.abs(pt.balance @ xl))))
            hmu = pt.balance.T @ mul
        else:
            hmu = 0.0
        stat = pt.mass * pt.rewards / v - pt.durations - pt.consumption.T @ lam - hmu
        worst = max(worst, float(np.max(np.maximum(stat, 0.0))))
        on = xl > thr[l]
        if on.any():
            worst = max(worst, float(np.max(np.abs(stat[on]))))
        worst = max(worst, float(np.max(np.maximum(-xl, 0.0))))
        use += pt.consumption @ xl
    if spec.n_resources:
        slack = spec.resource_rates - use
        worst = max(worst, float(np.max(np.maximum(-slack, 0.0))))
        worst = max(worst, float(np.max(np.abs(lam * slack))))
        worst = max(worst, float(np.max(np.maximum(-lam, 0.0))))
    return worst


# --- internals ------------------------------------------------------------


class _Problem:
    """Stacked arrays for the potential program of one game."""

    def __init__(self, spec: GameSpec):
        self.spec = spec
        self.n = spec.n_activities
        self.c = spec.stacked_rewards
        self.t = spec.stacked_durations
        self.G = spec.stacked_consumption
        self.b = spec.resource_rates
        self.d = spec.masses
        self.off = spec.offsets
        self.type_of = np.repeat(np.arange(spec.n_types), spec.sizes)
        # orthonormal basis for each type's balance row space
        blocks = []
        for l, pt in enumerate(spec.types):
            H = pt.balance
            if H.shape[0] == 0:
                continue
            _, s, vt = np.linalg.svd(H, full_matrices=False)
            rank = int(np.sum(s > 1e-10 * max(1.0, s[0])))
            rows = np.zeros((rank, self.n))
            rows[:, self.off[l]:self.off[l + 1]] = vt[:rank]
            blocks.append(rows)
        self.Q = np.vstack(blocks) if blocks else np.zeros((0, self.n))

    def values(self, x):
        return np.array([self.c[self.off[l]:self.off[l + 1]] @ x[self.off[l]:self.off[l + 1]]
                         for l in range(len(self.d))])

    def grad_f(self, x, v):
        return self.d[self.type_of] * self.c / v[self.type_of] - self.t

    def hess_f(self, x, v):
        n = self.n
        Hm = np.zeros((n, n))
        for l in range(len(self.d)):
            sl = slice(self.off[l], self.off[l + 1])
            cl = self.c[sl]
            Hm[sl, sl] = -self.d[l] / v[l] ** 2 * np.outer(cl, cl)
        return Hm


def _support_point(spec: GameSpec):
    """Largest support of the balance cone, with a point attaining it."""
    pts = []
    for pt in spec.types:
        J, K = pt.n_activities, pt.balance.shape[0]
        if K == 0:
            pts.append(np.ones(J))
            continue
        # variables (x, z): max sum z, z <= x, z <= 1, H x = 0
        c = np.concatenate([np.zeros(J), np.ones(J)])
        A_ub = np.vstack([np.hstack([-np.eye(J), np.eye(J)]), np.hstack([np.zeros((J, J)), np.eye(J)])])
        b_ub = np.concatenate([np.zeros(J), np.ones(J)])
        A_eq = np.hstack([pt.balance, np.zeros((K, J))])
        lp = solve_lp(LpProblem(c, A_ub, b_ub, A_eq, np.zeros(K)))
        z = lp.x[J:]
        x = np.where(z > 0.5, lp.x[:J], 0.0)
        pts.append(x)
    return np.concatenate(pts)


def _interior_start(prob: _Problem, witness, rng):
    spec = prob.spec
    xz = _support_point(spec)
    active = xz > 0
    use = prob.G @ xz
    theta = 1.0
    for i in range(prob.b.size):
        if use[i] > 0:
            theta = min(theta, 0.25 * prob.b[i] / use[i])
    xz = theta * xz
    w = 0.5 * spec.stack(witness)
    vw = prob.values(w)
    vz = prob.values(xz)
    alpha = 1.0
    for l in range(len(prob.d)):
        if vz[l] < 0:
            alpha = min(alpha, 0.5 * vw[l] / -vz[l])
    x0 = w + alpha * xz
    if rng is not None:
        x0 = _random_perturb(prob, x0, active, rng)
    return x0, active


def _random_perturb(prob: _Problem, x0, active, rng):
    r = np.where(active, rng.standard_normal(prob.n), 0.0)
    if prob.Q.shape[0]:
        r = r - prob.Q.T @ (prob.Q @ r)
    r[~active] = 0.0
    eta = np.inf
    neg = r < 0
    if neg.any():
        eta = min(eta, 0.5 * np.min(x0[neg] / -r[neg]))
    s0 = prob.b - prob.G @ x0
    ds = -(prob.G @ r)
    if (ds < 0).any():
        eta = min(eta, 0.5 * np.min(s0[ds < 0] / -ds[ds < 0]))
    v0, dv = prob.values(x0), prob.values(r)
    if (dv < 0).any():
        eta = min(eta, 0.5 * np.min(v0[dv < 0] / -dv[dv < 0]))
    if not np.isfinite(eta):
        eta = 1.0
    x1 = x0 + rng.uniform(0.2, 1.0) * eta * r
    return rng.uniform(0.3, 1.0) * x1


def _barrier_obj(prob, x, mu, active):
    v = prob.values(x)
    s = prob.b - prob.G @ x
    if np.any(v <= 0) or np.any(s <= 0) or np.any(x[active] <= 0):
        return -np.inf
    return float(prob.d @ np.log(v) - prob.t @ x + mu * (np.sum(np.log(s)) + np.sum(np.log(x[active]))))


def _center(prob, x, mu, active, max_newton, counter):
    """Newton ascent on the barrier subproblem at weight ``mu``."""
    idx = np.flatnonzero(active)
    Qa = prob.Q[:, idx]
    Ga = prob.G[:, idx]
    k = Qa.shape[0]
    for _ in range(max_newton):
        if counter[0] <= 0:
            break
        counter[0] -= 1
        v = prob.values(x)
        s = prob.b - prob.G @ x
        xa = x[idx]
        g = prob.grad_f(x, v)[idx] + mu / xa - mu * (Ga.T @ (1.0 / s))
        negH = -prob.hess_f(x, v)[np.ix_(idx, idx)] + np.diag(mu / xa ** 2) \
            + mu * (Ga.T * (1.0 / s ** 2)) @ Ga
        # scaled system in dx = X @ dy keeps entries O(1) near the boundary
        D = xa
        Ks = np.zeros((idx.size + k, idx.size + k))
        Ks[:idx.size, :idx.size] = D[:, None] * negH * D[None, :]
        Ks[:idx.size, idx.size:] = (Qa * D[None, :]).T
        Ks[idx.size:, :idx.size] = Qa * D[None, :]
        rhs = np.concatenate([D * g, np.zeros(k)])
        try:
            sol = np.linalg.solve(Ks, rhs)
        except np.linalg.LinAlgError:
            sol = np.linalg.lstsq(Ks, rhs, rcond=None)[0]
        dy = sol[:idx.size]
        dec = float((D * g) @ dy)
        if not np.isfinite(dec) or dec < 0:
            # projected-gradient fallback
            gs = D * g
            if k:
                Qs = Qa * D[None, :]
                gs = gs - Qs.T @ np.linalg.lstsq(Qs.T, gs, rcond=None)[0]
            dy, dec = gs, float(gs @ (D * g))
        if dec / 2 <= 1e-14 * max(1.0, abs(_barrier_obj(prob, x, mu, active))):
            return x, True
        dx = np.zeros(prob.n)
        dx[idx] = D * dy
        # fraction to the boundary for x, slacks and rewards
        step = 1.0
        neg = dx[idx] < 0
        if neg.any():
            step = min(step, 0.99 * np.min(xa[neg] / -dx[idx][neg]))
        ds = -(prob.G @ dx)
        if (ds < 0).any():
            step = min(step, 0.99 * np.min(s[ds < 0] / -ds[ds < 0]))
        dv = prob.values(dx)
        if (dv < 0).any():
            step = min(step, 0.99 * np.min(v[dv < 0] / -dv[dv < 0]))
        f0 = _barrier_obj(prob, x, mu, active)
        slope = float(g @ dx[idx])
        while step > 1e-16:
            xn = x + step * dx
            xn[~active] = 0.0
            if _barrier_obj(prob, xn, mu, active) >= f0 + 0.25 * step * slope:
                break
            step *= 0.5
        else:
            return x, False
        x = xn
    return x, False


def _stationarity(prob, x, lam, nu):
    v = prob.values(x)
    return prob.grad_f(x, v) - prob.G.T @ lam - prob.Q.T @ nu


def _polish(prob, x, lam, thr, active, max_rounds=12):
    """Newton on the KKT equations for a guessed support and binding set."""
    n, I, k = prob.n, prob.b.size, prob.Q.shape[0]
    S = x > thr
    B = (prob.b - prob.G @ x <= 1e-6 * prob.b) | (lam > 1e-9)
    nu = np.zeros(k)
    lam = lam.copy()
    x = np.where(S, x, 0.0)
    for _ in range(max_rounds):
        si, bi = np.flatnonzero(S), np.flatnonzero(B)
        lam[~B] = 0.0
        for _it in range(60):
            v = prob.values(x)
            if np.any(v <= 0):
                return None
            stat = _stationarity(prob, x, lam, nu)
            F = np.concatenate([stat[si], prob.G[bi] @ x - prob.b[bi], prob.Q @ x])
            if np.max(np.abs(F), initial=0.0) < 1e-14 * max(1.0, float(np.max(prob.d))):
                break
            J = np.zeros((F.size, si.size + bi.size + k))
            Hf = prob.hess_f(x, v)
            J[:si.size, :si.size] = Hf[np.ix_(si, si)]
            J[:si.size, si.size:si.size + bi.size] = -prob.G[np.ix_(bi, si)].T
            J[:si.size, si.size + bi.size:] = -prob.Q[:, si].T
            J[si.size:si.size + bi.size, :si.size] = prob.G[np.ix_(bi, si)]
            J[si.size + bi.size:, :si.size] = prob.Q[:, si]
            delta = np.linalg.lstsq(J, -F, rcond=None)[0]
            x = x.copy()
            x[si] += delta[:si.size]
            lam = lam.copy()
            lam[bi] += delta[si.size:si.size + bi.size]
            nu = nu + delta[si.size + bi.size:]
            if not np.all(np.isfinite(x)):
                return None
        lam[~B] = 0.0
        changed = False
        stat = _stationarity(prob, x, lam, nu)
        drop_x = S & (x < -1e-13)
        if drop_x.any():
            S &= ~drop_x
            x[drop_x] = 0.0
            changed = True
        drop_l = B & (lam < -1e-12)
        if drop_l.any():
            B &= ~drop_l
            lam[drop_l] = 0.0
            changed = True
        add_x = ~S & active & (stat > 1e-11)
        if add_x.any() and not changed:
            S |= add_x
            changed = True
        over = ~B & (prob.G @ x - prob.b > 1e-13)
        if over.any():
            B |= over
            changed = True
        if not changed:
            return np.maximum(x, 0.0), np.maximum(lam, 0.0)
    return np.maximum(x, 0.0), np.maximum(lam, 0.0)


def balance_duals(spec: GameSpec, rates, lam):
    """Balance multipliers ``mu_l`` for given rates and resource prices.

    Least squares on the supported stationarity equations first; if that
    leaves a positive excess on some activity, an LP picks ``mu_l`` that
    keeps the supported equations and minimizes the worst excess.
    """
    thr = spec.split(support_threshold(spec))
    out = []
    for l, pt in enumerate(spec.types):
        K = pt.balance.shape[0]
        if K == 0:
            out.append(np.zeros(0))
            continue
        x = rates[l]
        v = float(pt.rewards @ x)
        g = pt.mass * pt.rewards / v - pt.durations - pt.consumption.T @ lam
        on = x > thr[l]
        Ht = pt.balance.T
        mu = np.linalg.lstsq(Ht[on], g[on], rcond=None)[0] if on.any() else np.zeros(K)
        excess = g - Ht @ mu
        if np.max(excess[~on], initial=-np.inf) <= 1e-12:
            out.append(mu)
            continue
        # LP over (mu+, mu-, tau): min tau, H^T mu = g on support, g - H^T mu <= tau off support
        off_idx = np.flatnonzero(~on)
        cvec = np.concatenate([np.zeros(2 * K), [-1.0]])
        A_ub = np.hstack([-Ht[off_idx], Ht[off_idx], -np.ones((off_idx.size, 1))])
        b_ub = -g[off_idx]
        A_eq = np.hstack([Ht[on], -Ht[on], np.zeros((int(on.sum()), 1))]) if on.any() else None
        b_eq = g[on] if on.any() else None
        try:
            lp = solve_lp(LpProblem(cvec, A_ub, b_ub, A_eq, b_eq))
        except Exception:  # noqa: BLE001 - least-squares answer is still usable
            lp = None
        if lp is not None and lp.status == OPTIMAL:
            out.append(lp.x[:K] - lp.x[K:2 * K])
        else:
            out.append(mu)
    return out


def _finish(spec, prob, x, lam, **extra):
    rates = spec.split(x)
    mu = balance_duals(spec, rates, lam)
    return make_equilibrium(spec, rates, lam, mu, **extra)


def solve_potential(spec: GameSpec, tol: float = DEFAULT_TOL, max_iter: int = 10000,
                    seed: int | None = None) -> Equilibrium:
    """Maximize the potential and return the induced equilibrium.

    ``seed`` randomizes the interior starting point (for restart tests);
    identical inputs and seed give identical output. Raises
    :class:`NonConvergenceError` carrying the best iterate if the KKT
    residual cannot be pushed below ``tol`` within ``max_iter`` Newton steps.
    """
    require_valid(spec)
    feas = check_feasibility(spec)
    if not feas.holds:
        raise InfeasibleError("no resource-feasible rates give every type a positive reward")
    prob = _Problem(spec)
    rng = np.random.default_rng(seed) if seed is not None else None
    x, active = _interior_start(prob, feas.witness, rng)
    thr = support_threshold(spec)

    counter = [max_iter]
    mu = 0.1 * max(1.0, float(np.max(prob.d)))
    history = []
    best = None
    n_barrier = int(active.sum()) + prob.b.size
    while True:
        x, _ = _center(prob, x, mu, active, 200, counter)
        history.append(potential_value(spec, spec.split(x)))
        if np.linalg.norm(x, np.inf) > 1e12:
            raise NonConvergenceError("potential appears unbounded (rates diverge)", best=None,
                                      residual=float("inf"))
        if mu * n_barrier < 1e-9 or counter[0] <= 0:
            s = prob.b - prob.G @ x
            lam = mu / s if prob.b.size else np.zeros(0)
            iters = max_iter - counter[0]
            cand = _finish(spec, prob, x, lam, iterations=iters, history=list(history))
            if best is None or cand.kkt_residual < best.kkt_residual:
                best = cand
            pol = _polish(prob, x, lam, thr, active)
            if pol is not None:
                pe = _finish(spec, prob, pol[0], pol[1], iterations=iters,
                             polished=True, history=list(history))
                if pe.kkt_residual <= best.kkt_residual:
                    best = pe
            if best.kkt_residual <= tol or mu < 1e-15 or counter[0] <= 0:
                break
        mu *= 0.2
    if best.kkt_residual > tol:
        raise NonConvergenceError(
            f"KKT residual {best.kkt_residual:.3e} above tol {tol:.1e}", best=best,
            residual=best.kkt_residual,
        )
    log.debug("potential solved: residual %.2e in %d Newton steps", best.kkt_residual, best.iterations)
    return best
