"""Selfish equilibria versus the optimum, and what shadow-price tolls recover."""

from closedrag import optimal_pricing, price_of_anarchy
from closedrag.scenarios import crowdsourcing, pigou, poa_family


def main():
    for spec in (pigou(), poa_family(0.25), poa_family(0.01), crowdsourcing(0.1)):
        rep = price_of_anarchy(spec)
        line = (f"{spec.name:24s} optimum {rep.optimal_value:8.4f}  equilibrium "
                f"{rep.equilibrium_value:7.4f}  ratio {rep.ratio:7.4f}")
        if rep.single_type:
            tolls = optimal_pricing(spec)
            line += f"  tolled {tolls.priced_value:7.4f} with prices {tolls.lambda_star.round(4)}"
        print(line)


if __name__ == "__main__":
    main()
