"""Semi-Markov decision games and their reduction to allocation games.

Every player runs the same SMDP: in state ``i`` it picks an action ``a``
allowed there, spends ``t_ia`` time units (plus any waiting delay), earns
``c_ia`` and jumps to state ``j`` with probability ``p_ij^a``. State-action
pairs become activities; stationarity of the state-action frequencies
becomes the balance rows of a single player type.

Average-reward sign convention: the dynamic programming equation is
written with gain ``g >= 0``,

    V(i) = max_a [ c_ia - g (t_ia + w_ia) + sum_j p_ij^a V(j) ],

with ``V`` pinned to zero at the first state.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InputError, SolverError
from .model import GameSpec, PlayerType
from .potential import DEFAULT_TOL, Equilibrium, solve_potential

ROW_SUM_TOL = 1e-9


@dataclass(frozen=True)
class SmdpSpec:
    """SMDP game data; ``pairs`` lists the allowed (state, action) pairs.

    Per-pair arrays (``transitions`` rows, ``sojourn``, ``rewards`` and the
    columns of ``consumption``) follow the order of ``pairs``.
    """

    states: tuple
    pairs: tuple
    transitions: np.ndarray
    sojourn: np.ndarray
    rewards: np.ndarray
    consumption: np.ndarray
    b: np.ndarray
    mass: float
    name: str = "smdp"

    def __post_init__(self):
        set_ = object.__setattr__
        set_(self, "states", tuple(str(s) for s in self.states))
        set_(self, "pairs", tuple((str(s), str(a)) for s, a in self.pairs))
        set_(self, "transitions", np.atleast_2d(np.asarray(self.transitions, dtype=float)))
        set_(self, "sojourn", np.asarray(self.sojourn, dtype=float).reshape(-1))
        set_(self, "rewards", np.asarray(self.rewards, dtype=float).reshape(-1))
        b = np.asarray(self.b, dtype=float).reshape(-1)
        set_(self, "b", b)
        C = np.asarray(self.consumption, dtype=float)
        if C.size == 0:
            C = np.zeros((b.size, len(self.pairs)))
        set_(self, "consumption", np.atleast_2d(C) if b.size else C.reshape(0, len(self.pairs)))
        set_(self, "mass", float(self.mass))
        self._check()

    def _check(self):
        S, K = len(self.states), len(self.pairs)
        if len(set(self.states)) != S:
            raise InputError("state names must be distinct")
        if len(set(self.pairs)) != K:
            raise InputError("state-action pairs must be distinct")
        index = {s: i for i, s in enumerate(self.states)}
        for s, _ in self.pairs:
            if s not in index:
                raise InputError(f"pair refers to unknown state {s!r}")
        missing = set(self.states) - {s for s, _ in self.pairs}
        if missing:
            raise InputError(f"states without actions: {sorted(missing)}")
        if self.transitions.shape != (K, S):
            raise InputError(f"transitions must be {K}x{S}, got {self.transitions.shape}")
        for name, arr in (("sojourn", self.sojourn), ("rewards", self.rewards)):
            if arr.shape != (K,):
                raise InputError(f"{name} must have one entry per pair ({K})")
        if self.consumption.shape != (self.b.size, K):
            raise InputError("consumption must have one row per resource and one column per pair")
        for name, arr in (("transitions", self.transitions), ("sojourn", self.sojourn),
                          ("rewards", self.rewards), ("consumption", self.consumption), ("b", self.b)):
            if not np.all(np.isfinite(arr)):
                raise InputError(f"{name} has non-finite entries")
        if np.any(self.transitions < 0) or np.any(np.abs(self.transitions.sum(axis=1) - 1) > ROW_SUM_TOL):
            raise InputError("transition rows must be probability vectors")
        if np.any(self.sojourn <= 0):
            raise InputError("sojourn times must be positive")
        if np.any(self.consumption < 0):
            raise InputError("consumption must be nonnegative")
        if np.any(self.b <= 0):
            raise InputError("resource rate must be positive")
        if not self.mass > 0:
            raise InputError("population mass must be positive")
        if not uniform_policy_irreducible(self):
            warnings.warn(f"{self.name}: embedded chain is reducible under the uniform policy",
                          stacklevel=3)

    @property
    def n_states(self) -> int:
        return len(self.states)

    @property
    def n_pairs(self) -> int:
        return len(self.pairs)

    @property
    def pair_state(self) -> np.ndarray:
        index = {s: i for i, s in enumerate(self.states)}
        return np.array([index[s] for s, _ in self.pairs], dtype=int)

    def to_dict(self) -> dict:
        actions = sorted({a for _, a in self.pairs})
        return {
            "name": self.name,
            "states": list(self.states),
            "actions": actions,
            "transitions": [
                {"state": s, "action": a, "probs": [float(p) for p in self.transitions[k]]}
                for k, (s, a) in enumerate(self.pairs)
            ],
            "sojourn": [float(v) for v in self.sojourn],
            "rewards": [float(v) for v in self.rewards],
            "consumption": [[float(v) for v in row] for row in self.consumption],
            "b": [float(v) for v in self.b],
            "mass": self.mass,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SmdpSpec":
        allowed = {"name", "states", "actions", "transitions", "sojourn", "rewards",
                   "consumption", "b", "mass"}
        extra = set(data) - allowed
        if extra:
            raise InputError(f"unknown SMDP fields: {sorted(extra)}")
        try:
            states = list(data["states"])
            actions = set(data.get("actions", []))
            pairs, rows = [], []
            for entry in data["transitions"]:
                s, a = entry["state"], entry["action"]
                if actions and a not in actions:
                    raise InputError(f"action {a!r} not declared in 'actions'")
                probs = entry["probs"]
                if isinstance(probs, dict):
                    row = [float(probs.get(t, 0.0)) for t in states]
                    if set(probs) - set(states):
                        raise InputError(f"probs for ({s}, {a}) mention unknown states")
                else:
                    row = [float(p) for p in probs]
                pairs.append((s, a))
                rows.append(row)
            return cls(
                states=states,
                pairs=pairs,
                transitions=np.array(rows, dtype=float).reshape(len(pairs), len(states)),
                sojourn=data["sojourn"],
                rewards=data["rewards"],
                consumption=np.array(data.get("consumption", []), dtype=float),
                b=data.get("b", []),
                mass=data["mass"],
                name=str(data.get("name", "smdp")),
            )
        except InputError:
            raise
        except KeyError as exc:
            raise InputError(f"missing SMDP field {exc}") from exc
        except (TypeError, ValueError) as exc:
            raise InputError(f"malformed SMDP data: {exc}") from exc


def load_smdp(path) -> SmdpSpec:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(data, dict):
        raise InputError(f"{path}: expected a JSON object")
    return SmdpSpec.from_dict(data)


def _policy_chain(smdp: SmdpSpec, policy) -> np.ndarray:
    P = np.zeros((smdp.n_states, smdp.n_states))
    for k, i in enumerate(smdp.pair_state):
        P[i] += policy[k] * smdp.transitions[k]
    return P


def uniform_policy_irreducible(smdp: SmdpSpec) -> bool:
    """Is the state chain irreducible when every allowed action is equally likely?"""
    counts = np.bincount(smdp.pair_state, minlength=smdp.n_states)
    P = _policy_chain(smdp, 1.0 / counts[smdp.pair_state])
    reach = (P > 0).astype(int) + np.eye(smdp.n_states, dtype=int)
    R = reach.copy()
    for _ in range(int(np.ceil(np.log2(max(smdp.n_states, 2)))) + 1):
        R = np.minimum(R @ R, 1)
    return bool(np.all(R > 0))


def balance_matrix(smdp: SmdpSpec) -> np.ndarray:
    """Raw stationarity rows: outflow minus inflow of state-action frequency per state."""
    S = smdp.n_states
    out = np.zeros((S, smdp.n_pairs))
    out[smdp.pair_state, np.arange(smdp.n_pairs)] = 1.0
    return out - smdp.transitions.T


def _independent_rows(M: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    keep = []
    for r in range(M.shape[0]):
        if np.max(np.abs(M[r]), initial=0.0) <= tol:
            continue
        trial = M[keep + [r]]
        if np.linalg.matrix_rank(trial, tol=tol) == len(keep) + 1:
            keep.append(r)
    return M[keep] if keep else np.zeros((0, M.shape[1]))


def build_rag(smdp: SmdpSpec) -> GameSpec:
    """Single-type game whose activities are the SMDP's state-action pairs.

    Stationarity rows are reduced to a linearly independent subset (they
    always sum to zero, and self-loop-only states give zero rows).
    """
    H = _independent_rows(balance_matrix(smdp))
    names = tuple(f"{s}/{a}" for s, a in smdp.pairs)
    pt = PlayerType("players", smdp.mass, smdp.rewards, smdp.sojourn, smdp.consumption, H, names)
    return GameSpec(smdp.b, (pt,), name=smdp.name,
                    resource_names=tuple(f"r{i}" for i in range(smdp.b.size)))


@dataclass
class PolicyResult:
    policy: np.ndarray
    pi: np.ndarray
    flagged: tuple


def extract_policy(smdp: SmdpSpec, x, w=None, tol: float = 0.0) -> PolicyResult:
    """Randomized stationary policy and time-stationary state distribution from rates.

    ``policy[k]`` is the probability of pair ``k``'s action in its state.
    States whose total rate is ``<= tol`` get the uniform policy and are listed
    in ``flagged``.
    """
    x = np.maximum(np.asarray(x, dtype=float).reshape(-1), 0.0)
    if x.shape != (smdp.n_pairs,):
        raise InputError(f"rates need one entry per pair ({smdp.n_pairs})")
    w = np.zeros(smdp.n_pairs) if w is None else np.asarray(w, dtype=float).reshape(-1)
    st = smdp.pair_state
    tot = np.bincount(st, weights=x, minlength=smdp.n_states)
    counts = np.bincount(st, minlength=smdp.n_states)
    flagged = tuple(smdp.states[i] for i in range(smdp.n_states) if tot[i] <= tol)
    policy = np.where(tot[st] > tol, x / np.where(tot[st] > tol, tot[st], 1.0), 1.0 / counts[st])
    occ = np.bincount(st, weights=(smdp.sojourn + w) * x, minlength=smdp.n_states)
    s = occ.sum()
    if not s > 0:
        raise InputError("all rates are zero; no stationary distribution")
    return PolicyResult(policy, occ / s, flagged)


@dataclass
class DpCheck:
    V: np.ndarray
    gain: float
    residual: float
    q: np.ndarray


def verify_dp(smdp: SmdpSpec, policy, w=None, tol: float = 1e-6, support=None) -> DpCheck:
    """Evaluate ``policy`` and measure how far it is from solving the DP equation.

    ``q[k] = c_k - g (t_k + w_k) + sum_j p_kj V(j) - V(i_k)`` is the advantage of
    pair ``k``. The residual is, over states, the largest gap between the best
    advantage and the worst advantage among actions the policy uses (weight
    above ``tol``, or those in ``support`` if given). States in ``support``
    mode with no supported action are skipped.
    """
    policy = np.asarray(policy, dtype=float).reshape(-1)
    w = np.zeros(smdp.n_pairs) if w is None else np.asarray(w, dtype=float).reshape(-1)
    S = smdp.n_states
    st = smdp.pair_state
    tau = smdp.sojourn + w
    P = _policy_chain(smdp, policy)
    r = np.bincount(st, weights=policy * smdp.rewards, minlength=S)
    T = np.bincount(st, weights=policy * tau, minlength=S)
    # unknowns: V(1..S-1), g; V(0) = 0
    M = np.zeros((S, S))
    M[:, :S - 1] = (np.eye(S) - P)[:, 1:]
    M[:, S - 1] = T
    if np.linalg.cond(M) > 1e12:
        raise SolverError("policy evaluation system is singular (induced chain is not unichain)")
    sol = np.linalg.solve(M, r)
    V = np.concatenate([[0.0], sol[:S - 1]])
    g = float(sol[S - 1])
    q = smdp.rewards - g * tau + smdp.transitions @ V - V[st]
    used = policy > tol if support is None else np.asarray(support, dtype=bool)
    res = 0.0
    for i in range(S):
        mine = st == i
        on = mine & used
        if not on.any():
            continue
        res = max(res, float(np.max(q[mine]) - np.min(q[on])))
    return DpCheck(V, g, res, q)


@dataclass
class SmdpEquilibrium:
    policy: np.ndarray
    pi: np.ndarray
    rates: np.ndarray
    delays: np.ndarray
    gain: float
    V: np.ndarray
    dp_residual: float
    flagged: tuple = ()
    equilibrium: Equilibrium | None = field(default=None, repr=False)


def solve_smdp(smdp: SmdpSpec, tol: float = DEFAULT_TOL, max_iter: int = 10000,
               seed: int | None = None) -> SmdpEquilibrium:
    """Equilibrium of the SMDP game via the reduced allocation game."""
    spec = build_rag(smdp)
    eq = solve_potential(spec, tol=tol, max_iter=max_iter, seed=seed)
    x, w = eq.rates[0], eq.delays[0]
    thr = 1e-6 * smdp.mass / float(np.max(smdp.sojourn))
    pol = extract_policy(smdp, x, w, tol=thr)
    visited = np.bincount(smdp.pair_state, weights=x, minlength=smdp.n_states)[smdp.pair_state] > thr
    dp = verify_dp(smdp, pol.policy, w, support=(x > thr) & visited)
    return SmdpEquilibrium(pol.policy, pol.pi, x, w, dp.gain, dp.V, dp.residual, pol.flagged, eq)


@dataclass
class MassRates:
    x: np.ndarray
    w: np.ndarray
    delta: np.ndarray
    residual: float


def mass_to_rates(n, A, b, t, tol: float = 1e-8) -> MassRates:
    """Rates and delays sustained by a fixed mass distribution over pairs.

    Maximizes ``sum n_k log x_k - t_k x_k`` subject to ``A x <= b``; the
    resource multipliers ``delta`` give ``w = A^T delta`` and
    ``n_k = (t_k + w_k) x_k`` at the optimum. Pairs with ``n_k = 0`` get
    ``x_k = 0``.
    """
    n = np.asarray(n, dtype=float).reshape(-1)
    t = np.asarray(t, dtype=float).reshape(-1)
    b = np.asarray(b, dtype=float).reshape(-1)
    A = np.asarray(A, dtype=float).reshape(b.size, n.size)
    if t.shape != n.shape:
        raise InputError("n and t must have the same length")
    if np.any(n < 0) or not np.all(np.isfinite(n)):
        raise InputError("masses must be finite and nonnegative")
    if np.any(t <= 0):
        raise InputError("sojourn times must be positive")
    on = np.flatnonzero(n > 0)
    x = np.zeros(n.size)
    delta = np.zeros(b.size)
    if on.size:
        # one single-activity type per occupied pair: its potential term is n log x - t x
        types = tuple(PlayerType(f"pair{k}", n[k], [1.0], [t[k]], A[:, [k]]) for k in on)
        sub = solve_potential(GameSpec(b, types, name="mass_to_rates"), tol=tol)
        x[on] = [r[0] for r in sub.rates]
        delta = sub.resource_duals.copy()
    w = A.T @ delta
    use = A @ x
    res = max(
        float(np.max(np.abs(n - (t + w) * x), initial=0.0)),
        float(np.max(use - b, initial=0.0)),
        float(np.max(np.abs(delta * (use - b)), initial=0.0)),
        float(np.max(-delta, initial=0.0)),
    )
    if res > tol * max(1.0, float(n.sum())):
        raise SolverError(f"mass_to_rates conditions violated by {res:.3e}")
    return MassRates(x, w, delta, res)


def builtin_smdp(name: str, mass: float | None = None) -> SmdpSpec:
    from .scenarios import pigou_smdp_spec, smdp_chain_spec

    if name == "smdp_chain":
        return smdp_chain_spec(3.0 if mass is None else mass)
    if name == "pigou":
        s = pigou_smdp_spec()
        if mass is not None:
            s = SmdpSpec(s.states, s.pairs, s.transitions, s.sojourn, s.rewards, s.consumption,
                         s.b, mass, s.name)
        return s
    raise InputError(f"unknown builtin SMDP {name!r}; choose smdp_chain or pigou")
