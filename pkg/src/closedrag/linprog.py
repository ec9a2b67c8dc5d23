"""Dense two-phase primal simplex with dual extraction.

Every LP in the package goes through :func:`solve_lp`. Problems are posed
as maximizations over ``x >= 0``::

    max  c @ x   s.t.  A_ub @ x <= b_ub,  A_eq @ x == b_eq,  x >= 0

The solver runs Bland's rule on a dense tableau, so it always terminates,
then re-solves the final basis with a direct factorization to recover a
clean primal vertex and the simplex multipliers. Before returning an
optimal answer it checks the full optimality certificate (primal and dual
feasibility, complementary slackness, strong duality) on the row-normalized
data and raises :class:`~closedrag.errors.LpError` if that check fails.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import TYPE_CHECKING

import numpy as np

from .errors import InfeasibleError, InputError, LpError

if TYPE_CHECKING:
    from .model import GameSpec

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"

DEFAULT_TOL = 1e-9
_PIVOT_EPS = 1e-11


def _as_matrix(a, n: int, name: str) -> np.ndarray:
    if a is None:
        return np.zeros((0, n))
    a = np.asarray(a, dtype=float)
    if a.ndim == 1 and a.size == 0:
        return np.zeros((0, n))
    if a.ndim != 2 or a.shape[1] != n:
        raise InputError(f"{name} must have shape (m, {n}), got {a.shape}")
    return a


def _as_vector(v, m: int, name: str) -> np.ndarray:
    if v is None:
        v = np.zeros(0)
    v = np.asarray(v, dtype=float).reshape(-1)
    if v.shape != (m,):
        raise InputError(f"{name} must have length {m}, got {v.shape[0]}")
    return v


@dataclass(frozen=True)
class LpProblem:
    """``max c @ x`` subject to ``A_ub x <= b_ub``, ``A_eq x = b_eq``, ``x >= 0``."""

    c: np.ndarray
    A_ub: np.ndarray | None = None
    b_ub: np.ndarray | None = None
    A_eq: np.ndarray | None = None
    b_eq: np.ndarray | None = None

    def __post_init__(self):
        c = np.asarray(self.c, dtype=float).reshape(-1)
        n = c.size
        A_ub = _as_matrix(self.A_ub, n, "A_ub")
        A_eq = _as_matrix(self.A_eq, n, "A_eq")
        b_ub = _as_vector(self.b_ub, A_ub.shape[0], "b_ub")
        b_eq = _as_vector(self.b_eq, A_eq.shape[0], "b_eq")
        for name, arr in (("c", c), ("A_ub", A_ub), ("b_ub", b_ub), ("A_eq", A_eq), ("b_eq", b_eq)):
            if not np.all(np.isfinite(arr)):
                raise InputError(f"{name} has non-finite entries")
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "A_ub", A_ub)
        object.__setattr__(self, "b_ub", b_ub)
        object.__setattr__(self, "A_eq", A_eq)
        object.__setattr__(self, "b_eq", b_eq)

    @property
    def n(self) -> int:
        return self.c.size


@dataclass
class LpSolution:
    """Result of :func:`solve_lp`.

    ``dual_ub`` are the nonnegative multipliers of the ``<=`` rows and
    ``dual_eq`` the free multipliers of the equality rows, in the sign
    convention where ``c - A_ub.T @ dual_ub - A_eq.T @ dual_eq <= 0`` at an
    optimum. Residual fields are measured on the normalized problem.
    """

    status: str
    x: np.ndarray | None
    value: float
    dual_ub: np.ndarray | None
    dual_eq: np.ndarray | None
    iterations: int = 0
    primal_residual: float = float("nan")
    dual_residual: float = float("nan")
    complementarity: float = float("nan")
    duality_gap: float = float("nan")
    basis: tuple = field(default_factory=tuple)

    @property
    def optimal(self) -> bool:
        return self.status == OPTIMAL


def _pivot(T: np.ndarray, row: int, col: int) -> None:
    T[row] /= T[row, col]
    colv = T[:, col].copy()
    colv[row] = 0.0
    T -= np.outer(colv, T[row])
    T[:, col] = 0.0
    T[row, col] = 1.0


def _run_simplex(T, basis, n_cols, max_iter, it0=0):
    """Bland's-rule iterations on tableau ``T`` (objective in the last row).

    Returns ``(status, iterations)`` with status ``optimal`` or ``unbounded``.
    """
    m = T.shape[0] - 1
    it = it0
    while True:
        red = T[m, :n_cols]
        entering = np.flatnonzero(red > 1e-10)
        if entering.size == 0:
            return OPTIMAL, it
        if it >= max_iter:
            raise LpError(f"simplex iteration limit ({max_iter}) reached")
        col = int(entering[0])
        colv = T[:m, col]
        rows = np.flatnonzero(colv > _PIVOT_EPS)
        if rows.size == 0:
            return UNBOUNDED, it
        ratios = T[rows, -1] / colv[rows]
        rmin = ratios.min()
        ties = rows[ratios <= rmin + 1e-12 * (1.0 + abs(rmin))]
        row = int(min(ties, key=lambda r: basis[r]))
        _pivot(T, row, col)
        basis[row] = col
        it += 1


def solve_lp(problem: LpProblem, tol: float = DEFAULT_TOL, max_iter: int | None = None) -> LpSolution:
    """Solve ``problem`` exactly (up to floating point) by two-phase simplex.

    Raises :class:`LpError` on iteration-limit exhaustion or when the final
    basis fails its optimality certificate at ``tol``.
    """
    c, A_ub, b_ub, A_eq, b_eq = problem.c, problem.A_ub, problem.b_ub, problem.A_eq, problem.b_eq
    n = c.size
    m_ub, m_eq = A_ub.shape[0], A_eq.shape[0]

    # normalize objective and rows to max-abs 1
    c_scale = float(np.max(np.abs(c))) if n else 0.0
    c_scale = c_scale if c_scale > 0 else 1.0
    cs = c / c_scale
    ub_scale = np.max(np.abs(A_ub), axis=1) if m_ub else np.zeros(0)
    eq_scale = np.max(np.abs(A_eq), axis=1) if m_eq else np.zeros(0)

    rows, rhs, kinds, origin = [], [], [], []
    for i in range(m_ub):
        if ub_scale[i] == 0.0:
            if b_ub[i] < -tol:
                return _infeasible(problem)
            continue
        rows.append(A_ub[i] / ub_scale[i])
        rhs.append(b_ub[i] / ub_scale[i])
        kinds.append("ub")
        origin.append(i)
    for i in range(m_eq):
        if eq_scale[i] == 0.0:
            if abs(b_eq[i]) > tol:
                return _infeasible(problem)
            continue
        rows.append(A_eq[i] / eq_scale[i])
        rhs.append(b_eq[i] / eq_scale[i])
        kinds.append("eq")
        origin.append(i)

    m = len(rows)
    n_slack = sum(k == "ub" for k in kinds)
    M = np.zeros((m, n + n_slack))
    r = np.array(rhs, dtype=float)
    flip = np.ones(m)
    slack_of_row = [-1] * m
    s = n
    for k in range(m):
        M[k, :n] = rows[k]
        if kinds[k] == "ub":
            M[k, s] = 1.0
            slack_of_row[k] = s
            s += 1
        if r[k] < 0:
            M[k] *= -1.0
            r[k] *= -1.0
            flip[k] = -1.0

    N = n + n_slack
    needs_art = [not (kinds[k] == "ub" and flip[k] > 0) for k in range(m)]
    art_rows = [k for k in range(m) if needs_art[k]]
    n_art = len(art_rows)
    if max_iter is None:
        max_iter = 50 * (m + N + n_art) + 1000

    T = np.zeros((m + 1, N + n_art + 1))
    T[:m, :N] = M
    T[:m, -1] = r
    basis = [0] * m
    for k in range(m):
        if not needs_art[k]:
            basis[k] = slack_of_row[k]
    for a, k in enumerate(art_rows):
        T[k, N + a] = 1.0
        basis[k] = N + a

    it = 0
    if n_art:
        # phase 1: maximize -sum(artificials)
        T[m, :] = 0.0
        for k in art_rows:
            T[m, :N] += T[k, :N]
            T[m, -1] += T[k, -1]
        # T[m, -1] holds +sum(r) = -(phase-1 objective)
        _, it = _run_simplex(T, basis, N, max_iter)
        infeas = T[m, -1]
        if infeas > tol * max(1.0, float(np.max(np.abs(r)))):
            return _infeasible(problem, it)
        # drive zero-valued artificials out of the basis; drop redundant rows
        keep = np.ones(m, dtype=bool)
        for k in range(m):
            if basis[k] >= N:
                cand = np.flatnonzero(np.abs(T[k, :N]) > 1e-9)
                if cand.size:
                    _pivot(T, k, int(cand[0]))
                    basis[k] = int(cand[0])
                else:
                    keep[k] = False
        T = np.vstack([T[:m][keep], T[m:]])
        T = np.hstack([T[:, :N], T[:, -1:]])
        basis = [b for b, kk in zip(basis, keep) if kk]
        kept_rows = np.flatnonzero(keep)
    else:
        T = np.hstack([T[:, :N], T[:, -1:]])
        kept_rows = np.arange(m)

    # phase 2
    c_full = np.concatenate([cs, np.zeros(n_slack)])
    mk = len(basis)
    cb = c_full[basis]
    T[mk, :N] = c_full - cb @ T[:mk, :N]
    T[mk, -1] = -cb @ T[:mk, -1]
    status, it = _run_simplex(T, basis, N, max_iter, it)
    if status == UNBOUNDED:
        return LpSolution(UNBOUNDED, None, float("inf"), None, None, iterations=it)

    # re-solve the final basis directly for clean values
    Mk = M[kept_rows]
    rk = r[kept_rows]
    B = Mk[:, basis]
    try:
        xb = np.linalg.solve(B, rk)
        yk = np.linalg.solve(B.T, c_full[basis])
    except np.linalg.LinAlgError:
        xb = T[:mk, -1].copy()
        yk = np.linalg.lstsq(B.T, c_full[basis], rcond=None)[0]
    z = np.zeros(N)
    z[basis] = xb
    z[np.abs(z) < 1e-15] = 0.0
    if np.any(z < -1e3 * tol):
        raise LpError("final basis is primal infeasible after refactorization")
    z = np.maximum(z, 0.0)
    x = z[:n]

    y_std = np.zeros(m)
    y_std[kept_rows] = yk
    y_std *= flip  # undo row sign flips
    # scaled-problem duals per original row
    y_ub_s = np.zeros(m_ub)
    y_eq_s = np.zeros(m_eq)
    for k in range(m):
        if kinds[k] == "ub":
            y_ub_s[origin[k]] = y_std[k]
        else:
            y_eq_s[origin[k]] = y_std[k]

    # certificate on normalized data
    ub_div = np.where(ub_scale > 0, ub_scale, 1.0)
    eq_div = np.where(eq_scale > 0, eq_scale, 1.0)
    Aun, bun = A_ub / ub_div[:, None], b_ub / ub_div
    Aen, ben = A_eq / eq_div[:, None], b_eq / eq_div
    y_ub_s = np.where(np.abs(y_ub_s) < 1e-15, 0.0, y_ub_s)
    slack = bun - Aun @ x
    eq_res = Aen @ x - ben
    reduced = cs - Aun.T @ y_ub_s - Aen.T @ y_eq_s
    primal_res = max(
        float(np.max(np.maximum(-slack, 0.0) / np.maximum(1.0, np.abs(bun)), initial=0.0)),
        float(np.max(np.abs(eq_res) / np.maximum(1.0, np.abs(ben)), initial=0.0)),
    )
    dual_res = max(float(np.max(np.maximum(-y_ub_s, 0.0), initial=0.0)),
                   float(np.max(np.maximum(reduced, 0.0), initial=0.0)))
    compl = max(float(np.max(np.abs(y_ub_s * slack), initial=0.0)),
                float(np.max(np.abs(x * reduced), initial=0.0)))
    pv = float(cs @ x)
    dv = float(bun @ y_ub_s + ben @ y_eq_s)
    gap = abs(pv - dv) / max(1.0, abs(pv))
    worst = max(primal_res, dual_res, compl, gap)
    if worst > tol:
        raise LpError(
            f"optimality certificate failed (primal {primal_res:.2e}, dual {dual_res:.2e}, "
            f"compl {compl:.2e}, gap {gap:.2e}) at tol {tol:.1e}"
        )

    y_ub = np.maximum(c_scale * y_ub_s / ub_div, 0.0)
    y_eq = c_scale * y_eq_s / eq_div
    return LpSolution(
        OPTIMAL, x, float(c @ x), y_ub, y_eq, iterations=it,
        primal_residual=primal_res, dual_residual=dual_res,
        complementarity=compl, duality_gap=gap, basis=tuple(basis),
    )


def _infeasible(problem: LpProblem, it: int = 0) -> LpSolution:
    return LpSolution(INFEASIBLE, None, float("-inf"), None, None, iterations=it)


# --- game-level LPs -------------------------------------------------------


@dataclass
class Allocation:
    """Optimal allocation: the LP plus its blocks already split per type."""

    lp: LpSolution
    rates: list
    value: float
    resource_duals: np.ndarray
    balance_duals: list
    mass_duals: np.ndarray


def allocation_problem(spec: "GameSpec", masses=None) -> LpProblem:
    """Assemble the total-reward LP: resource rows, balance rows, one mass row per type."""
    masses = spec.masses if masses is None else np.asarray(masses, dtype=float)
    n = spec.n_activities
    offsets = spec.offsets
    k_total = sum(pt.balance.shape[0] for pt in spec.types)
    A_eq = np.zeros((k_total + spec.n_types, n))
    row = 0
    for l, pt in enumerate(spec.types):
        sl = slice(offsets[l], offsets[l + 1])
        k = pt.balance.shape[0]
        A_eq[row:row + k, sl] = pt.balance
        row += k
    for l, pt in enumerate(spec.types):
        A_eq[row + l, offsets[l]:offsets[l + 1]] = pt.durations
    b_eq = np.concatenate([np.zeros(k_total), masses])
    return LpProblem(spec.stacked_rewards, spec.stacked_consumption, spec.resource_rates, A_eq, b_eq)


def optimal_allocation(spec: "GameSpec", tol: float = DEFAULT_TOL) -> Allocation:
    """Centrally optimal activity rates and the resource shadow prices."""
    lp = solve_lp(allocation_problem(spec), tol=tol)
    if lp.status == INFEASIBLE:
        raise InfeasibleError("type masses cannot be placed on any activity mix")
    if lp.status == UNBOUNDED:
        raise LpError("total reward LP is unbounded (zero-duration rewarded activity?)")
    k_sizes = [pt.balance.shape[0] for pt in spec.types]
    k_off = np.concatenate([[0], np.cumsum(k_sizes)]).astype(int)
    bal = [lp.dual_eq[k_off[l]:k_off[l + 1]] for l in range(spec.n_types)]
    return Allocation(
        lp=lp,
        rates=spec.split(lp.x),
        value=lp.value,
        resource_duals=lp.dual_ub.copy(),
        balance_duals=bal,
        mass_duals=lp.dual_eq[k_off[-1]:].copy(),
    )


@dataclass
class ValuePoint:
    F: float
    F_sub: float
    lp: LpSolution


def value_curve(spec: "GameSpec", d_prime: float, tol: float = DEFAULT_TOL) -> ValuePoint:
    """Optimal reward ``F(d')`` of a single-type game at participating mass ``d'``.

    ``F_sub`` is the multiplier of the mass row, which is a supergradient of
    the concave, piecewise-linear ``F`` at ``d'``.
    """
    if spec.n_types != 1:
        raise InputError("value_curve needs a single-type game")
    if not d_prime > 0:
        raise InputError("d_prime must be positive")
    lp = solve_lp(allocation_problem(spec, masses=[d_prime]), tol=tol)
    if lp.status != OPTIMAL:
        raise InfeasibleError(f"F({d_prime}) is {lp.status}")
    return ValuePoint(F=lp.value, F_sub=float(lp.dual_eq[-1]), lp=lp)
