"""Print the terminal-norm decay table for the deterministic and stochastic
penalised problems (eps = 0.1 * 2^-k)."""

import numpy as np

from schnull.filtration import Tree
from schnull.grid import Grid
from schnull.hum import CostWeights, LQProblem, eps_schedule
from schnull.weights import WeightEvaluator, WeightParams

G0 = (0.3, 0.7)


def table(depth: int, substeps: int) -> None:
    ev = WeightEvaluator.build(WeightParams(scaling="practical", sigma_override=4.0), G0)
    g, t = Grid(32, "clamped"), Tree(depth, 0.5, substeps)
    y0 = np.sin(np.pi * g.x) ** 2
    levels = eps_schedule(lambda e: LQProblem(g, t, ev, G0, e, CostWeights.full()), y0, 0.1, 6,
                          tol=1e-13, max_iter=3000)
    print(f"depth {depth}, substeps {substeps}")
    print(f"{'eps':>10} {'|y(T)|^2':>12} {'ratio':>12} {'iters':>6}")
    for lv in levels:
        print(f"{lv.eps:10.3e} {lv.terminal_norm_sq:12.4e} {lv.ratio:12.4e} {lv.iterations:6d}")


if __name__ == "__main__":
    table(0, 8)
    table(6, 4)
