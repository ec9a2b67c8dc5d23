"""Game data model, structural validation and the two standing assumptions.

A game has ``I`` shared resources offered at rates ``b`` and ``L`` player
types. Type ``l`` has mass ``d_l`` and ``J_l`` activities with rewards
``c_l``, durations ``t_l``, an ``I x J_l`` consumption matrix ``A_l`` and a
``K_l x J_l`` balance matrix ``H_l`` (rates must satisfy ``H_l x_l = 0``).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import InputError
from .linprog import INFEASIBLE, OPTIMAL, UNBOUNDED, LpProblem, solve_lp

POSITIVITY_TOL = 1e-12


@dataclass(frozen=True)
class PlayerType:
    name: str
    mass: float
    rewards: np.ndarray
    durations: np.ndarray
    consumption: np.ndarray
    balance: np.ndarray = None
    activity_names: tuple = None

    def __post_init__(self):
        c = np.atleast_1d(np.asarray(self.rewards, dtype=float))
        t = np.atleast_1d(np.asarray(self.durations, dtype=float))
        A = np.asarray(self.consumption, dtype=float)
        if A.ndim == 1:
            A = A.reshape(0, c.size) if A.size == 0 else A.reshape(1, -1)
        H = self.balance
        H = np.zeros((0, c.size)) if H is None else np.asarray(H, dtype=float)
        if H.ndim == 1:
            H = H.reshape(0, c.size) if H.size == 0 else H.reshape(1, -1)
        names = self.activity_names
        if names is None:
            names = tuple(f"a{j}" for j in range(c.size))
        object.__setattr__(self, "mass", float(self.mass))
        object.__setattr__(self, "rewards", c)
        object.__setattr__(self, "durations", t)
        object.__setattr__(self, "consumption", A)
        object.__setattr__(self, "balance", H)
        object.__setattr__(self, "activity_names", tuple(names))

    @property
    def n_activities(self) -> int:
        return self.rewards.size


@dataclass(frozen=True)
class GameSpec:
    resource_rates: np.ndarray
    types: tuple
    name: str = "game"
    resource_names: tuple = field(default=None)

    def __post_init__(self):
        b = np.atleast_1d(np.asarray(self.resource_rates, dtype=float)).reshape(-1)
        object.__setattr__(self, "resource_rates", b)
        object.__setattr__(self, "types", tuple(self.types))
        if self.resource_names is None:
            object.__setattr__(self, "resource_names", tuple(f"r{i}" for i in range(b.size)))

    @property
    def n_resources(self) -> int:
        return self.resource_rates.size

    @property
    def n_types(self) -> int:
        return len(self.types)

    @property
    def masses(self) -> np.ndarray:
        return np.array([pt.mass for pt in self.types])

    @property
    def sizes(self) -> list:
        return [pt.n_activities for pt in self.types]

    @property
    def offsets(self) -> np.ndarray:
        return np.concatenate([[0], np.cumsum(self.sizes)]).astype(int)

    @property
    def n_activities(self) -> int:
        return int(sum(self.sizes))

    @property
    def stacked_rewards(self) -> np.ndarray:
        return np.concatenate([pt.rewards for pt in self.types])

    @property
    def stacked_durations(self) -> np.ndarray:
        return np.concatenate([pt.durations for pt in self.types])

    @property
    def stacked_consumption(self) -> np.ndarray:
        return np.hstack([pt.consumption for pt in self.types])

    def split(self, x) -> list:
        """Split a stacked rate vector into per-type arrays."""
        x = np.asarray(x, dtype=float)
        off = self.offsets
        return [x[off[l]:off[l + 1]].copy() for l in range(self.n_types)]

    def stack(self, per_type) -> np.ndarray:
        return np.concatenate([np.asarray(v, dtype=float).reshape(-1) for v in per_type])

    def with_type(self, index: int, **changes) -> "GameSpec":
        types = list(self.types)
        types[index] = replace(types[index], **changes)
        return replace(self, types=tuple(types))

    def with_masses(self, masses) -> "GameSpec":
        types = [replace(pt, mass=float(m)) for pt, m in zip(self.types, masses)]
        return replace(self, types=tuple(types))

    # JSON -------------------------------------------------------------

    def to_dict(self) -> dict:
        out_types = []
        for pt in self.types:
            acts = []
            for j in range(pt.n_activities):
                acts.append({
                    "name": pt.activity_names[j],
                    "reward": float(pt.rewards[j]),
                    "duration": float(pt.durations[j]),
                    "consumption": [float(v) for v in pt.consumption[:, j]],
                })
            out_types.append({
                "name": pt.name,
                "mass": pt.mass,
                "activities": acts,
                "balance": [[float(v) for v in row] for row in pt.balance],
            })
        return {"resources": {"b": [float(v) for v in self.resource_rates]}, "types": out_types}

    def to_json(self, indent: int | None = 2) -> str:
        return json.dumps(self.to_dict(), indent=indent, sort_keys=True)

    @classmethod
    def from_dict(cls, data: dict, name: str = "game") -> "GameSpec":
        _check_keys(data, {"resources", "types"}, "scenario")
        res = data.get("resources", {})
        _check_keys(res, {"b"}, "resources")
        b = [float(v) for v in res.get("b", [])]
        types = []
        for k, td in enumerate(data.get("types", [])):
            _check_keys(td, {"name", "mass", "activities", "balance"}, f"types[{k}]")
            acts = td.get("activities", [])
            for j, ad in enumerate(acts):
                _check_keys(ad, {"name", "reward", "duration", "consumption"}, f"types[{k}].activities[{j}]")
            J = len(acts)
            A = np.zeros((len(b), J))
            for j, ad in enumerate(acts):
                col = [float(v) for v in ad.get("consumption", [])]
                if len(col) != len(b):
                    raise InputError(
                        f"types[{k}].activities[{j}].consumption has length {len(col)}, expected {len(b)}"
                    )
                A[:, j] = col
            bal = td.get("balance", [])
            for row in bal:
                if len(row) != J:
                    raise InputError(f"types[{k}].balance row has length {len(row)}, expected {J}")
            types.append(PlayerType(
                name=str(td.get("name", f"type{k}")),
                mass=float(td["mass"]),
                rewards=[float(ad["reward"]) for ad in acts],
                durations=[float(ad["duration"]) for ad in acts],
                consumption=A,
                balance=np.array(bal, dtype=float).reshape(len(bal), J),
                activity_names=tuple(str(ad.get("name", f"a{j}")) for j, ad in enumerate(acts)),
            ))
        return cls(b, tuple(types), name=name)

    @classmethod
    def from_json(cls, text: str, name: str = "game") -> "GameSpec":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise InputError(f"invalid JSON: {exc}") from exc
        if not isinstance(data, dict):
            raise InputError("scenario must be a JSON object")
        try:
            return cls.from_dict(data, name=name)
        except InputError:
            raise
        except (KeyError, TypeError, ValueError) as exc:
            raise InputError(f"malformed scenario: {exc!r}") from exc


def _check_keys(d, allowed: set, where: str) -> None:
    if not isinstance(d, dict):
        raise InputError(f"{where} must be an object")
    for key in d:
        if key not in allowed:
            raise InputError(f"unknown field {key!r} in {where}")


def load_game(path) -> GameSpec:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc
    return GameSpec.from_json(text, name=path.stem)


# --- validation -----------------------------------------------------------


def validate(spec: GameSpec) -> list[str]:
    """Return every structural violation in ``spec``; an empty list means valid."""
    out = []
    b = spec.resource_rates
    I = b.size
    for i, bi in enumerate(b):
        if not np.isfinite(bi) or bi <= 0:
            out.append(f"resource {i}: resource rate must be positive (got {bi})")
    if spec.n_types < 1:
        out.append("game needs at least one player type")
    for l, pt in enumerate(spec.types):
        J = pt.rewards.size
        tag = f"type {l} ({pt.name})"
        if J < 1:
            out.append(f"{tag}: needs at least one activity")
        if pt.durations.size != J or pt.consumption.shape != (I, J) or pt.balance.shape[1:] != (J,) \
                or len(pt.activity_names) != J:
            out.append(
                f"{tag}: dimension mismatch (rewards {J}, durations {pt.durations.size}, "
                f"consumption {pt.consumption.shape}, balance {pt.balance.shape}, expected I={I})"
            )
        if not np.isfinite(pt.mass) or pt.mass <= 0:
            out.append(f"{tag}: mass must be positive (got {pt.mass})")
        if np.any(pt.durations < 0):
            out.append(f"{tag}: durations must be nonnegative")
        if np.any(pt.consumption < 0):
            out.append(f"{tag}: consumption must be nonnegative")
        for name, arr in (("rewards", pt.rewards), ("durations", pt.durations),
                          ("consumption", pt.consumption), ("balance", pt.balance)):
            if not np.all(np.isfinite(arr)):
                out.append(f"{tag}: {name} has non-finite entries")
    return out


def require_valid(spec: GameSpec) -> None:
    problems = validate(spec)
    if problems:
        raise InputError("invalid game: " + "; ".join(problems))


# --- assumptions ----------------------------------------------------------


@dataclass
class FeasibilityCheck:
    holds: bool
    level: float
    witness: list | None

    def __bool__(self) -> bool:
        return self.holds


def feasibility_problem(spec: GameSpec) -> LpProblem:
    """Variables ``(x, s_plus, s_minus)``: max ``s`` with every ``c_l x_l >= s``."""
    n, L, I = spec.n_activities, spec.n_types, spec.n_resources
    off = spec.offsets
    nv = n + 2
    c = np.zeros(nv)
    c[n], c[n + 1] = 1.0, -1.0
    ub = []
    rhs = []
    for l, pt in enumerate(spec.types):
        row = np.zeros(nv)
        row[off[l]:off[l + 1]] = -pt.rewards
        row[n], row[n + 1] = 1.0, -1.0
        ub.append(row)
        rhs.append(0.0)
    for i in range(I):
        row = np.zeros(nv)
        row[:n] = spec.stacked_consumption[i]
        ub.append(row)
        rhs.append(spec.resource_rates[i])
    cap = np.zeros(nv)
    cap[n] = 1.0
    ub.append(cap)
    rhs.append(1.0)
    eq = []
    for l, pt in enumerate(spec.types):
        for hrow in pt.balance:
            row = np.zeros(nv)
            row[off[l]:off[l + 1]] = hrow
            eq.append(row)
    A_eq = np.array(eq) if eq else None
    return LpProblem(c, np.array(ub), np.array(rhs), A_eq, np.zeros(len(eq)) if eq else None)


def check_feasibility(spec: GameSpec, tol: float = POSITIVITY_TOL) -> FeasibilityCheck:
    """Resource-feasible rates giving every type a positive reward exist?"""
    require_valid(spec)
    lp = solve_lp(feasibility_problem(spec))
    if lp.status != OPTIMAL:
        return FeasibilityCheck(False, float("-inf"), None)
    level = lp.value
    scale = max(1.0, float(np.max(np.abs(spec.stacked_rewards))))
    if level > tol * scale:
        return FeasibilityCheck(True, level, spec.split(lp.x[:spec.n_activities]))
    return FeasibilityCheck(False, level, None)


@dataclass
class Participation:
    holds: bool
    value: float
    unbounded: bool = False

    def __bool__(self) -> bool:
        return self.holds


def check_participation(spec: GameSpec, tol: float = POSITIVITY_TOL) -> list[Participation]:
    """Per type: is some balance-feasible mix with positive reward available?

    Solves ``max c_l x`` over ``H_l x = 0, t_l x <= 1, x >= 0``. A positive
    optimum can be rescaled onto any mass constraint ``(t + w) x = d`` with
    ``w >= 0``, which is what participation under all delays asks for.
    """
    require_valid(spec)
    out = []
    for pt in spec.types:
        J = pt.n_activities
        K = pt.balance.shape[0]
        lp = solve_lp(LpProblem(
            pt.rewards, pt.durations.reshape(1, J), [1.0],
            pt.balance if K else None, np.zeros(K) if K else None,
        ))
        if lp.status == UNBOUNDED:
            out.append(Participation(True, float("inf"), unbounded=True))
        elif lp.status == INFEASIBLE:
            out.append(Participation(False, float("-inf")))
        else:
            scale = max(1.0, float(np.max(np.abs(pt.rewards))))
            out.append(Participation(lp.value > tol * scale, lp.value))
    return out
