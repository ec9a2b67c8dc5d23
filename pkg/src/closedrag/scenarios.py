"""Deterministic builders for the worked examples plus random instances.

Builders return plain :class:`~closedrag.model.GameSpec` objects; use
``spec.to_json()`` to write them in the scenario file format.
"""

from __future__ import annotations

import numpy as np

from .errors import InputError
from .model import GameSpec, PlayerType


def _check_eps(eps: float) -> float:
    eps = float(eps)
    if not 0.0 < eps < 1.0:
        raise InputError(f"eps must lie in (0, 1), got {eps}")
    return eps


def pigou() -> GameSpec:
    """Two circular routes, mass 2; route 1 pays 2 but is capped at rate 1."""
    driver = PlayerType(
        name="players",
        mass=2.0,
        rewards=[2.0, 1.0],
        durations=[1.0, 1.0],
        consumption=[[1.0, 0.0]],
        activity_names=("route1", "route2"),
    )
    return GameSpec([1.0], (driver,), name="pigou", resource_names=("route1_cap",))


# activity order for ride_hailing; durations are |i - j| between regions
RIDE_ACTIVITIES = ("busy1", "busy3", "free21", "free23", "free13", "free31")


def ride_hailing(d: float) -> GameSpec:
    """Three regions on a line; customers at rate 1 in regions 1 and 3 go to 2.

    Busy trips pay 2 from region 1 and 1 from region 3. Drivers return empty
    (``free21``, ``free23``) or reposition between the outer regions
    (``free13``, ``free31``, two time units). Flow balance holds per region.
    """
    d = float(d)
    if not d > 0:
        raise InputError("driver mass must be positive")
    rewards = [2.0, 1.0, 0.0, 0.0, 0.0, 0.0]
    durations = [1.0, 1.0, 1.0, 1.0, 2.0, 2.0]
    consumption = [
        [1.0, 0.0, 0.0, 0.0, 0.0, 0.0],  # region-1 customers
        [0.0, 1.0, 0.0, 0.0, 0.0, 0.0],  # region-3 customers
    ]
    # rows: outflow - inflow for regions 1, 2, 3
    balance = [
        [1.0, 0.0, -1.0, 0.0, 1.0, -1.0],
        [-1.0, -1.0, 1.0, 1.0, 0.0, 0.0],
        [0.0, 1.0, 0.0, -1.0, -1.0, 1.0],
    ]
    drivers = PlayerType("drivers", d, rewards, durations, consumption, balance, RIDE_ACTIVITIES)
    return GameSpec([1.0, 1.0], (drivers,), name=f"ride_hailing(d={d:g})",
                    resource_names=("customers1", "customers3"))


def crowdsourcing(eps: float) -> GameSpec:
    """One task stream at rate 1 shared by a rare high-value type and a common type."""
    eps = _check_eps(eps)
    types = (
        PlayerType("experts", 1.0, [1.0 / eps, 0.0], [1.0, 1.0], [[1.0, 0.0]],
                   activity_names=("task", "idle")),
        PlayerType("crowd", 1.0 / eps, [1.0, 0.0], [1.0, 1.0], [[1.0, 0.0]],
                   activity_names=("task", "idle")),
    )
    return GameSpec([1.0], types, name=f"crowdsourcing(eps={eps:g})", resource_names=("tasks",))


def poa_family(eps: float) -> GameSpec:
    """Single-type instance whose optimum-to-equilibrium ratio is ``2 - eps``."""
    eps = _check_eps(eps)
    pt = PlayerType("players", 1.0, [1.0 / eps, 1.0], [1.0, 1.0], [[1.0, 0.0]],
                    activity_names=("scarce", "plain"))
    return GameSpec([eps], (pt,), name=f"poa_family(eps={eps:g})", resource_names=("scarce_cap",))


def trivial() -> GameSpec:
    """One type, one activity, no resources: everything is forced by the mass row."""
    pt = PlayerType("solo", 1.0, [1.0], [1.0], np.zeros((0, 1)), activity_names=("work",))
    return GameSpec(np.zeros(0), (pt,), name="trivial")


def random_instance(seed: int, L: int = 1, I: int = 2, J: int = 4) -> GameSpec:
    """Reproducible random game satisfying both standing assumptions.

    Activity 0 of every type consumes nothing and pays a positive reward,
    which is an outside option guaranteeing feasibility and participation.
    """
    if min(L, I, J) < 1:
        raise InputError("sizes must be >= 1")
    rng = np.random.default_rng(seed)
    b = rng.uniform(0.2, 1.0, size=I)
    types = []
    for l in range(L):
        c = rng.uniform(0.1, 2.0, size=J)
        c[0] = rng.uniform(0.05, 0.5)
        t = rng.uniform(0.5, 1.5, size=J)
        A = rng.uniform(0.0, 1.0, size=(I, J)) * (rng.uniform(size=(I, J)) < 0.7)
        A[:, 0] = 0.0
        # every other activity uses at least one resource
        for j in range(1, J):
            if not A[:, j].any():
                A[rng.integers(I), j] = rng.uniform(0.2, 1.0)
        d = rng.uniform(0.5, 3.0)
        types.append(PlayerType(f"type{l}", d, c, t, A))
    return GameSpec(b, tuple(types), name=f"random(seed={seed},L={L},I={I},J={J})")


def smdp_chain_spec(d: float = 3.0):
    """Three-region ride-hailing SMDP: states are regions, actions are trips."""
    from .smdp import SmdpSpec

    return SmdpSpec(
        states=("region1", "region2", "region3"),
        pairs=(
            ("region1", "serve"), ("region1", "reposition"),
            ("region2", "to1"), ("region2", "to3"),
            ("region3", "serve"), ("region3", "reposition"),
        ),
        transitions=np.array([
            [0.0, 1.0, 0.0],
            [0.0, 0.0, 1.0],
            [1.0, 0.0, 0.0],
            [0.0, 0.0, 1.0],
            [0.0, 1.0, 0.0],
            [1.0, 0.0, 0.0],
        ]),
        sojourn=np.array([1.0, 2.0, 1.0, 1.0, 1.0, 2.0]),
        rewards=np.array([2.0, 0.0, 0.0, 0.0, 1.0, 0.0]),
        consumption=np.array([
            [1.0, 0.0, 0.0, 0.0, 0.0, 0.0],
            [0.0, 0.0, 0.0, 0.0, 1.0, 0.0],
        ]),
        b=np.array([1.0, 1.0]),
        mass=float(d),
        name=f"smdp_chain(d={float(d):g})",
    )


def pigou_smdp_spec():
    """Pigou's routes as a one-state SMDP with two self-loop actions."""
    from .smdp import SmdpSpec

    return SmdpSpec(
        states=("origin",),
        pairs=(("origin", "route1"), ("origin", "route2")),
        transitions=np.array([[1.0], [1.0]]),
        sojourn=np.array([1.0, 1.0]),
        rewards=np.array([2.0, 1.0]),
        consumption=np.array([[1.0, 0.0]]),
        b=np.array([1.0]),
        mass=2.0,
        name="pigou_smdp",
    )


def smdp_chain(d: float = 3.0) -> GameSpec:
    from .smdp import build_rag

    return build_rag(smdp_chain_spec(d))


BUILTINS = ("pigou", "ride_hailing", "crowdsourcing", "poa_family", "smdp_chain", "trivial", "random")


def builtin(name: str, eps: float | None = None, mass: float | None = None,
            seed: int = 0, sizes=(1, 2, 4)) -> GameSpec:
    """Look up a builtin scenario by id, filling in its parameter."""
    if name == "pigou":
        return pigou()
    if name == "ride_hailing":
        return ride_hailing(4.0 if mass is None else mass)
    if name == "crowdsourcing":
        return crowdsourcing(0.1 if eps is None else eps)
    if name == "poa_family":
        return poa_family(0.25 if eps is None else eps)
    if name == "smdp_chain":
        return smdp_chain(3.0 if mass is None else mass)
    if name == "trivial":
        return trivial()
    if name == "random":
        return random_instance(seed, *sizes)
    raise InputError(f"unknown builtin scenario {name!r}; choose from {', '.join(BUILTINS)}")
