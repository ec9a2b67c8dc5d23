"""Sweep the driver population of the three-region ride-hailing game.

Shows the four regimes: everyone busy, a growing queue for region-1
customers, region 3 filling up, and finally queues everywhere.
"""

import numpy as np

from closedrag import solve_potential
from closedrag.scenarios import ride_hailing


def main():
    print(f"{'d':>5} {'reward':>8} {'per unit':>9} {'active':>7} {'waiting':>8}")
    for d in np.linspace(0.5, 8.0, 16):
        eq = solve_potential(ride_hailing(d))
        print(f"{d:5.2f} {eq.total_reward:8.4f} {eq.total_reward / d:9.4f} "
              f"{eq.active_mass:7.4f} {eq.waiting_mass[0]:8.4f}")


if __name__ == "__main__":
    main()
