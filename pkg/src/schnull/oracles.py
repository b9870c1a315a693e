"""Dense reference solvers used to cross-check the tree solvers.

Every function here assembles the full linear system explicitly, so they are
only usable on tiny instances.
"""

from __future__ import annotations

import math
from typing import Optional

import numpy as np
from scipy.linalg import expm

from .filtration import AdaptedField
from .grid import Grid
from .hum import LQProblem
from .spde import per_node, per_substep


def dense_kkt(
    prob: LQProblem,
    y0: np.ndarray,
    phi: Optional[AdaptedField] = None,
    K: Optional[AdaptedField] = None,
) -> dict[str, np.ndarray]:
    """Solve the discrete LQ problem through its saddle-point system.

    Unknowns are all states (every node, every substep, every leaf) and both
    controls; the scheme's update rules are equality constraints. Returns the
    packed control vector (same layout as LQProblem.pack) and the terminal
    states.
    """
    grid, tree = prob.grid, prob.tree
    n, S, dt = grid.n, tree.substeps, tree.dt
    last = tree.n_intervals
    phi = per_substep(phi, tree, n)
    K = per_node(K, tree, n)
    sq = math.sqrt(tree.dt_noise)

    # variable offsets
    off = 0
    state = {}
    for k in range(last):
        for j in range(tree.level_size(k)):
            for s in range(S + 1):
                state[(k, j, s)] = off
                off += n
    for j in range(tree.level_size(last)):
        state[(last, j, 0)] = off
        off += n
    n_state = off
    ctrl_u, ctrl_U = {}, {}
    for k in range(last):
        for j in range(tree.level_size(k)):
            ctrl_u[(k, j)] = off
            off += n
    for k in range(last):
        for j in range(tree.level_size(k)):
            ctrl_U[(k, j)] = off
            off += n
    nv = off

    Q = np.zeros((nv, nv))
    rows: list[np.ndarray] = []
    rhs: list[np.ndarray] = []
    I = np.eye(n)
    A = I + dt * grid.dense("D4")
    D1, D2 = grid.dense("D1"), grid.dense("D2")
    h = grid.h

    def blk(i0, j0, M):
        Q[i0 : i0 + n, j0 : j0 + n] += M

    def constraint(parts, b):
        row = np.zeros((n, nv))
        for col, M in parts:
            row[:, col : col + n] += M
        rows.append(row)
        rhs.append(b)

    constraint([(state[(0, 0, 0)], I)], np.asarray(y0, dtype=float))
    for k in range(last):
        W = prob.track_weights[k]
        p = tree.prob(k) * h
        for j in range(tree.level_size(k)):
            for s in range(S):
                a, b = state[(k, j, s)], state[(k, j, s + 1)]
                constraint(
                    [(b, A), (a, -I), (ctrl_u[(k, j)], -dt * np.diag(prob.chi))],
                    dt * phi.levels[k][j, s],
                )
                H = np.zeros((n, n))
                if W[0] is not None:
                    H += np.diag(W[0][s])
                if W[1] is not None:
                    H += D1.T @ np.diag(W[1][s]) @ D1
                if W[2] is not None:
                    H += D2.T @ np.diag(W[2][s]) @ D2
                blk(b, b, p * dt * H)
            cu = np.where(prob.chi > 0, prob.wu[k], 1.0)
            blk(ctrl_u[(k, j)], ctrl_u[(k, j)], p * tree.dt_noise * np.diag(cu))
            blk(ctrl_U[(k, j)], ctrl_U[(k, j)], p * tree.dt_noise * np.diag(prob.wU[k]))
        end = S
        for c in range(tree.level_size(k + 1)):
            j = c // 2 if tree.stochastic else c
            sign = (1.0 if c % 2 == 0 else -1.0) if tree.stochastic else 0.0
            constraint(
                [(state[(k + 1, c, 0)], I), (state[(k, j, end)], -I), (ctrl_U[(k, j)], -sign * sq * I)],
                sign * sq * K.levels[k][j],
            )
    for j in range(tree.level_size(last)):
        t0 = state[(last, j, 0)]
        blk(t0, t0, tree.prob(last) * h / prob.eps * I)

    C = np.vstack(rows)
    d = np.concatenate(rhs)
    m = C.shape[0]
    KKT = np.block([[Q, C.T], [C, np.zeros((m, m))]])
    sol = np.linalg.solve(KKT, np.concatenate([np.zeros(nv), d]))
    z = sol[:nv]
    x = z[n_state:]
    yT = np.stack([z[state[(last, j, 0)] : state[(last, j, 0)] + n] for j in range(tree.level_size(last))])
    return {"controls": x, "terminal": yT}


def deterministic_expm(grid: Grid, T: float, y0: np.ndarray, source: np.ndarray) -> np.ndarray:
    """Exact solution at T of y' = -D4 y + source (constant source)."""
    A = -grid.dense("D4")
    n = grid.n
    aug = np.zeros((n + 1, n + 1))
    aug[:n, :n] = A
    aug[:n, n] = source
    E = expm(T * aug)
    return E[:n, :n] @ y0 + E[:n, n]


def path_expectation(tree, level_values: np.ndarray) -> np.ndarray:
    """E over a level by explicit enumeration of all sign paths."""
    k = int(round(math.log2(level_values.shape[0]))) if level_values.shape[0] > 1 else 0
    total = np.zeros(level_values.shape[1:])
    for j in range(level_values.shape[0]):
        total = total + level_values[j] * 0.5**k
    return total
