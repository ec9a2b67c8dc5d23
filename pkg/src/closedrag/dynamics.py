"""Best-response dynamics coupled with queueing delays.

Each resource ``i`` carries a queue-driven price ``delta_i`` that grows when
demand exceeds the service rate:

    d delta_i / dt = (1 / b_i) * sum_{l,j} a^l_ij x^l_j - 1,    delta_i >= 0,

while players respond instantly to the delays ``w_l = A_l^T delta``. The
response is the best-response LP with minimum-norm tie-breaking, or, with
``smoothing > 0``, its entropy-regularized version. Integration is
projected forward Euler.

Instant adaptation is one modelling choice; slower best-response updates
would give different trajectories with the same rest points.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .errors import DivergenceError, InputError, LpError, SolverError
from .linprog import OPTIMAL
from .model import GameSpec, PlayerType, require_valid
from .potential import Equilibrium, balance_duals, kkt_residual, potential_value, support_threshold

TIE_REL = 1e-12


def _ratio_response(pt: PlayerType, tau: np.ndarray) -> np.ndarray:
    """Best response of a balance-free type: all mass on the best reward per unit time.

    Ties are split by minimum Euclidean norm, which puts ``x_j`` proportional
    to ``tau_j`` on the tied set.
    """
    if np.any(tau <= 0):
        raise InputError("zero-duration activity facing no delay has no bounded best response")
    ratio = pt.rewards / tau
    top = float(np.max(ratio))
    tied = ratio >= top - TIE_REL * max(1.0, abs(top))
    x = np.zeros(pt.n_activities)
    x[tied] = pt.mass * tau[tied] / float(tau[tied] @ tau[tied])
    return x


def _min_norm_on_face(E: np.ndarray, f: np.ndarray, x0: np.ndarray, max_iter: int = 200) -> np.ndarray:
    """Primal active-set solve of ``min |x|^2`` s.t. ``E x = f``, ``x >= 0`` from feasible ``x0``."""
    x = x0.copy()
    n = x.size
    W = x <= 0
    for _ in range(max_iter):
        F = ~W
        sol = np.zeros(n)
        if F.any():
            EF = E[:, F]
            sol[F] = EF.T @ np.linalg.lstsq(EF @ EF.T, f, rcond=None)[0]
        p = sol - x
        if np.max(np.abs(p)) <= 1e-14 * max(1.0, np.max(np.abs(x))):
            y = np.linalg.lstsq(E[:, F].T, x[F], rcond=None)[0] if F.any() else np.zeros(E.shape[0])
            nu = -(E.T @ y)
            nu[F] = 0.0
            j = int(np.argmin(np.where(W, nu, np.inf)))
            if not W.any() or nu[j] >= -1e-12:
                return np.maximum(x, 0.0)
            W[j] = False
            continue
        dec = F & (p < 0)
        alpha = 1.0
        block = -1
        if dec.any():
            steps = np.where(dec, -x / np.where(dec, p, -1.0), np.inf)
            block = int(np.argmin(steps))
            alpha = min(1.0, float(steps[block]))
        x = x + alpha * p
        if alpha < 1.0:
            x[block] = 0.0
            W[block] = True
    raise SolverError("minimum-norm tie-breaking did not converge")


def _lp_response(pt: PlayerType, tau: np.ndarray) -> np.ndarray:
    from .linprog import LpProblem, solve_lp

    K = pt.balance.shape[0]
    A_eq = np.vstack([pt.balance, tau[None, :]])
    b_eq = np.concatenate([np.zeros(K), [pt.mass]])
    lp = solve_lp(LpProblem(pt.rewards, A_eq=A_eq, b_eq=b_eq))
    if lp.status != OPTIMAL:
        raise LpError(f"best response LP is {lp.status}")
    # optimal face: zero reduced cost columns, others pinned at zero
    red = pt.rewards - A_eq.T @ lp.dual_eq
    face = red >= -1e-9 * max(1.0, float(np.max(np.abs(pt.rewards))))
    x = np.zeros(pt.n_activities)
    x[face] = _min_norm_on_face(A_eq[:, face], b_eq, lp.x[face])
    return x


def _row_basis(H: np.ndarray) -> np.ndarray:
    if H.shape[0] == 0:
        return H
    _, sv, Vt = np.linalg.svd(H, full_matrices=False)
    return Vt[sv > 1e-10 * max(1.0, sv[0])]


def _smoothed_response(pt: PlayerType, tau: np.ndarray, s: float, y0=None, max_iter: int | None = None):
    """Maximizer of ``c x - s sum x log x`` over the type's balance and mass rows.

    Solved through its smooth convex dual in the multipliers ``y`` of the
    mass row and an orthonormal basis of the balance rows, where
    ``x_j = exp((c_j - (M^T y)_j)/s - 1)``. Returns ``(x, y)`` so callers can
    warm-start the next solve. Steps are capped at a multiple of ``s``, so
    the default iteration budget grows like ``1/s``.
    """
    if max_iter is None:
        max_iter = 200 + int(20.0 / s)
    M = np.vstack([tau[None, :], _row_basis(pt.balance)])
    f = np.zeros(M.shape[0])
    f[0] = pt.mass

    def primal(y):
        return np.exp(np.minimum((pt.rewards - M.T @ y) / s - 1.0, 700.0))

    def fun(y):
        x = primal(y)
        return s * float(np.sum(x)) + float(f @ y), f - M @ x

    def hess(y):
        return (M * primal(y)) @ M.T / s

    if y0 is None or np.shape(y0) != (M.shape[0],):
        y0 = np.zeros(M.shape[0])
        y0[0] = float(np.max(pt.rewards / tau))
    y = np.array(y0, dtype=float)
    scale = max(1.0, pt.mass)
    cap = 5.0 * s / max(1.0, float(np.max(np.abs(M))))
    phi, g = fun(y)
    damp = 0.0
    for _ in range(max_iter):
        if np.max(np.abs(g)) <= 1e-12 * scale:
            break
        H = hess(y)
        # Levenberg-Marquardt damping keeps the step a descent direction when
        # underflowed entries make the Hessian numerically singular
        ridge = max(damp * float(np.max(np.diag(H))), 1e-14 * float(np.trace(H)))
        step = np.linalg.solve(H + ridge * np.eye(H.shape[0]), g)
        norm = float(np.max(np.abs(step)))
        if norm > cap:
            step *= cap / norm
        t = 1.0
        armijo = False
        while t >= 1e-10:
            phi_new, g_new = fun(y - t * step)
            if phi_new <= phi - 1e-4 * t * float(g @ step):
                armijo = True
                break
            # near the optimum the decrease drowns in rounding; accept gradient progress
            if phi_new <= phi + 1e-13 * abs(phi) and np.max(np.abs(g_new)) < 0.5 * np.max(np.abs(g)):
                break
            t *= 0.5
        if t < 1e-10:
            if damp >= 1e8:
                break
            damp = max(100.0 * damp, 1e-6)
            continue
        damp = damp / 10.0 if armijo and t == 1.0 else max(10.0 * damp, 1e-6)
        y, phi, g = y - t * step, phi_new, g_new
    x = primal(y)
    if np.max(np.abs(f - M @ x)) > 1e-9 * scale:
        raise SolverError("smoothed best response did not converge")
    return x, y


def best_response_rates(spec: GameSpec, delta, smoothing: float = 0.0, warm: dict | None = None) -> list:
    """Per-type response to the delays induced by resource prices ``delta``.

    ``warm`` (optional, updated in place) carries dual starting points
    between successive smoothed solves.
    """
    out = []
    for l, pt in enumerate(spec.types):
        tau = pt.durations + pt.consumption.T @ delta
        if smoothing > 0:
            x, y = _smoothed_response(pt, tau, smoothing, None if warm is None else warm.get(l))
            if warm is not None:
                warm[l] = y
            out.append(x)
        elif pt.balance.shape[0] == 0:
            out.append(_ratio_response(pt, tau))
        else:
            out.append(_lp_response(pt, tau))
    return out


@dataclass
class DynamicsTrace:
    spec: GameSpec
    times: np.ndarray
    delta: np.ndarray  # (steps + 1) x I
    rates: np.ndarray  # (steps + 1) x n
    potential: np.ndarray
    residual: np.ndarray
    bound: float
    max_delta: float

    def final_rates(self) -> list:
        return self.spec.split(self.rates[-1])

    def columns(self) -> list:
        res = self.spec.resource_names or tuple(f"r{i}" for i in range(self.spec.n_resources))
        acts = [f"{pt.name}:{a}" for pt in self.spec.types for a in pt.activity_names]
        return ["time"] + [f"delta:{r}" for r in res] + ["potential", "residual"] + [f"x:{a}" for a in acts]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns())
        for k in range(self.times.size):
            row = [self.times[k], *self.delta[k], self.potential[k], self.residual[k], *self.rates[k]]
            w.writerow(["%.12g" % v for v in row])
        return buf.getvalue()


def delta_bound(spec: GameSpec, delta0) -> float:
    """Ceiling on the queue prices used as a divergence guard."""
    c = float(np.max(spec.stacked_rewards, initial=0.0))
    t = spec.stacked_durations
    tmin = float(np.min(t[t > 0])) if np.any(t > 0) else 1.0
    bmin = float(np.min(spec.resource_rates)) if spec.n_resources else 1.0
    d = float(np.max(spec.masses))
    return d * c / (tmin * bmin) + float(np.max(np.asarray(delta0, dtype=float), initial=0.0))


def _step_residual(spec, rates, delta):
    try:
        mu = balance_duals(spec, rates, delta)
        return kkt_residual(spec, rates, delta, mu)
    except (SolverError, np.linalg.LinAlgError):
        return float("nan")


def simulate(spec: GameSpec, delta0=None, step: float = 1e-2, horizon: float = 200.0,
             smoothing: float = 0.0, record_every: int = 10) -> DynamicsTrace:
    """Integrate the queue-price dynamics by projected forward Euler.

    Every step is integrated; every ``record_every``-th step (and the last)
    is stored in the trace. Raises :class:`DivergenceError` if some price
    exceeds :func:`delta_bound`.
    """
    require_valid(spec)
    if not step > 0 or not horizon > 0:
        raise InputError("step and horizon must be positive")
    if smoothing < 0:
        raise InputError("smoothing must be nonnegative")
    every = int(record_every)
    if every < 1:
        raise InputError("record_every must be >= 1")
    I = spec.n_resources
    delta = np.zeros(I) if delta0 is None else np.asarray(delta0, dtype=float).reshape(-1).copy()
    if delta.shape != (I,) or np.any(delta < 0) or not np.all(np.isfinite(delta)):
        raise InputError(f"delta0 must be {I} finite nonnegative numbers")
    bound = delta_bound(spec, delta)
    n_steps = max(1, int(round(horizon / step)))
    G = spec.stacked_consumption
    b = spec.resource_rates
    peak = float(np.max(delta, initial=0.0))
    T, D, X, P, R = [], [], [], [], []
    warm = {}
    for k in range(n_steps + 1):
        rates = best_response_rates(spec, delta, smoothing, warm)
        x = spec.stack(rates)
        if k % every == 0 or k == n_steps:
            T.append(k * step)
            D.append(delta.copy())
            X.append(x)
            P.append(potential_value(spec, rates))
            R.append(_step_residual(spec, rates, delta))
        if k == n_steps:
            break
        delta = np.maximum(delta + step * ((G @ x) / b - 1.0), 0.0)
        peak = max(peak, float(np.max(delta, initial=0.0)))
        if peak > bound:
            raise DivergenceError(
                f"queue price {peak:.4g} exceeded the guard {bound:.4g} at t={(k + 1) * step:.4g}; "
                f"try a smaller step (now {step:g})"
            )
    return DynamicsTrace(spec, np.array(T), np.array(D).reshape(len(T), I), np.array(X),
                         np.array(P), np.array(R), bound, peak)


@dataclass
class ConvergenceReport:
    value_gap: float
    delay_gap: float
    final_time: float


def convergence_report(trace: DynamicsTrace, eq: Equilibrium) -> ConvergenceReport:
    """Final potential gap and worst delay error on the equilibrium support."""
    spec = trace.spec
    value_gap = abs(float(trace.potential[-1]) - float(eq.potential))
    thr = support_threshold(spec)
    on = spec.stack(eq.rates) > thr
    w_final = spec.stacked_consumption.T @ trace.delta[-1]
    w_eq = spec.stack(eq.delays)
    delay_gap = float(np.max(np.abs(w_final - w_eq)[on], initial=0.0))
    return ConvergenceReport(value_gap, delay_gap, float(trace.times[-1]))
