"""Queue prices settling at the equilibrium delays on the two-route example."""

from closedrag import convergence_report, simulate, solve_potential
from closedrag.scenarios import pigou


def main():
    spec = pigou()
    trace = simulate(spec, step=1e-2, horizon=60.0, record_every=500)
    for t, delta, pot in zip(trace.times, trace.delta[:, 0], trace.potential):
        print(f"t={t:6.1f}  delta={delta:.6f}  potential={pot:.6f}")
    rep = convergence_report(trace, solve_potential(spec))
    print(f"final delay gap {rep.delay_gap:.2e}, potential gap {rep.value_gap:.2e}")


if __name__ == "__main__":
    main()
