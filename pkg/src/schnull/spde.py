"""Forward and backward fourth-order SPDE solvers on the binary tree.

Forward:   dy + y_xxxx dt = (phi + chi u + f(y)) dt + (U + g(y)) dB
Backward:  dr - r_xxxx dt = (phi0 + phi1_x + phi2_xx) dt + R dB

Within a noise interval the state takes ``substeps`` implicit Euler steps
    Y_{s+1} = (I + dt D4)^{-1} (Y_s + dt F_s);
at the end of the interval the noise kick is applied once,
    Y_child = Y_S +- sqrt(dt_noise) (U + g(Y_0)).
The backward recursion is the exact discrete adjoint of this scheme:
    r_S = E[r_child | node],  R = (r_up - r_down) / (2 sqrt(dt_noise)),
    r_s = (I + dt D4)^{-1} (r_{s+1} - dt Phi_s).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .filtration import AdaptedField, Tree
from .grid import Grid

# f(t, x, y, y_x, y_xx, B) -> array like y; y has shape (nodes, n), B (nodes,)
Nonlinearity = Callable[[float, np.ndarray, np.ndarray, np.ndarray, np.ndarray, np.ndarray], np.ndarray]


class NumericalError(RuntimeError):
    """Non-finite values appeared in a solve."""


@dataclass
class Trajectory:
    """Adapted state: levels[k] is (nodes, substeps + 1, n) for k < n_intervals,
    and levels[-1] is (nodes, n) holding the terminal values."""

    tree: Tree
    grid: Grid
    levels: list[np.ndarray]

    @property
    def terminal(self) -> np.ndarray:
        return self.levels[-1]

    @property
    def initial(self) -> np.ndarray:
        return self.levels[0][0, 0]

    def starts(self, k: int) -> np.ndarray:
        if k == self.tree.n_intervals:
            return self.levels[k]
        return self.levels[k][:, 0]

    def left_states(self) -> AdaptedField:
        """Y_{s}, s = 0..S-1, on every non-final level."""
        return AdaptedField([a[:, :-1] for a in self.levels[:-1]])

    def right_states(self) -> AdaptedField:
        """Y_{s+1}, s = 0..S-1."""
        return AdaptedField([a[:, 1:] for a in self.levels[:-1]])

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(a)) for a in self.levels)


@dataclass
class BackwardSolution:
    r: Trajectory
    R: AdaptedField  # (nodes, n) per non-final level; zero when deterministic


def per_substep(field: Optional[AdaptedField], tree: Tree, n: int) -> AdaptedField:
    """Normalise a source to shape (nodes, substeps, n) per non-final level."""
    S = tree.substeps
    if field is None:
        return AdaptedField.zeros(tree, (S, n))
    out = []
    for k in range(tree.n_intervals):
        a = field.levels[k]
        size = tree.level_size(k)
        if a.shape == (size, n):
            a = np.broadcast_to(a[:, None, :], (size, S, n))
        elif a.shape != (size, S, n):
            raise ValueError(f"level {k}: source shape {a.shape} is neither {(size, n)} nor {(size, S, n)}")
        out.append(a)
    return AdaptedField(out)


def per_node(field: Optional[AdaptedField], tree: Tree, n: int) -> AdaptedField:
    if field is None:
        return AdaptedField.zeros(tree, (n,))
    for k in range(tree.n_intervals):
        if field.levels[k].shape != (tree.level_size(k), n):
            raise ValueError(f"level {k}: expected shape {(tree.level_size(k), n)}, got {field.levels[k].shape}")
    return field


def _check(a: np.ndarray, what: str, k: int):
    if not np.all(np.isfinite(a)):
        raise NumericalError(f"non-finite {what} on level {k}")


def solve_forward(
    grid: Grid,
    tree: Tree,
    y0: np.ndarray,
    phi: Optional[AdaptedField] = None,
    u: Optional[AdaptedField] = None,
    U: Optional[AdaptedField] = None,
    chi: Optional[np.ndarray] = None,
    f: Optional[Nonlinearity] = None,
    g: Optional[Nonlinearity] = None,
) -> Trajectory:
    """Level sweep root to leaves. ``chi`` is the 0/1 indicator of the control
    region (all ones if omitted); u is multiplied by it."""
    n, S, dt = grid.n, tree.substeps, tree.dt
    y0 = np.asarray(y0, dtype=float)
    if y0.shape != (n,):
        raise ValueError(f"y0 must have shape ({n},)")
    phi = per_substep(phi, tree, n)
    u = per_node(u, tree, n)
    U = per_node(U, tree, n)
    chi = np.ones(n) if chi is None else np.asarray(chi, dtype=float)
    x = grid.x
    sq = math.sqrt(tree.dt_noise)

    levels = []
    start = y0[None, :]
    for k in range(tree.n_intervals):
        size = tree.level_size(k)
        B = tree.brownian(k)
        Y = np.empty((size, S + 1, n))
        Y[:, 0] = start
        cu = chi * u.levels[k]
        for s in range(S):
            F = phi.levels[k][:, s] + cu
            if f is not None:
                ys = Y[:, s]
                F = F + f(tree.level_time(k) + s * dt, x, ys, grid.d1(ys), grid.d2(ys), B)
            Y[:, s + 1] = grid.implicit_solve(Y[:, s] + dt * F, dt)
        _check(Y, "state", k)
        levels.append(Y)
        end = Y[:, S]
        if tree.stochastic:
            amp = U.levels[k]
            if g is not None:
                y_ = Y[:, 0]
                amp = amp + g(tree.level_time(k), x, y_, grid.d1(y_), grid.d2(y_), B)
            nxt = np.repeat(end, 2, axis=0)
            nxt += sq * tree.sign(k)[:, None] * np.repeat(amp, 2, axis=0)
            start = nxt
        else:
            start = end.copy()
    _check(start, "terminal state", tree.n_intervals)
    levels.append(start)
    return Trajectory(tree, grid, levels)


def backward_source(
    grid: Grid,
    tree: Tree,
    phi0: Optional[AdaptedField] = None,
    phi1: Optional[AdaptedField] = None,
    phi2: Optional[AdaptedField] = None,
) -> AdaptedField:
    """Phi = phi0 + D1 phi1 + D2 phi2 per (node, substep)."""
    n = grid.n
    Phi = per_substep(phi0, tree, n).map(np.array)
    if phi1 is not None:
        Phi = Phi + per_substep(phi1, tree, n).map(grid.d1)
    if phi2 is not None:
        Phi = Phi + per_substep(phi2, tree, n).map(grid.d2)
    return Phi


def solve_backward(
    grid: Grid,
    tree: Tree,
    rT: np.ndarray,
    phi0: Optional[AdaptedField] = None,
    phi1: Optional[AdaptedField] = None,
    phi2: Optional[AdaptedField] = None,
    Phi: Optional[AdaptedField] = None,
) -> BackwardSolution:
    """Leaves to root sweep. ``Phi`` may be passed pre-assembled instead of
    (phi0, phi1, phi2)."""
    n, S, dt = grid.n, tree.substeps, tree.dt
    last = tree.n_intervals
    rT = np.asarray(rT, dtype=float)
    if rT.shape == (n,):
        rT = np.broadcast_to(rT, (tree.level_size(last), n))
    if rT.shape != (tree.level_size(last), n):
        raise ValueError(f"terminal data must have shape {(tree.level_size(last), n)}")
    if Phi is None:
        Phi = backward_source(grid, tree, phi0, phi1, phi2)
    else:
        Phi = per_substep(Phi, tree, n)

    levels: list[np.ndarray] = [None] * (last + 1)  # type: ignore[list-item]
    Rs: list[np.ndarray] = [None] * last  # type: ignore[list-item]
    levels[last] = np.array(rT)
    child = levels[last]
    for k in range(last - 1, -1, -1):
        size = tree.level_size(k)
        r = np.empty((size, S + 1, n))
        r[:, S] = tree.cond_expectation(child, k)
        Rs[k] = tree.increment_diff(child, k) if tree.stochastic else np.zeros((size, n))
        for s in range(S - 1, -1, -1):
            r[:, s] = grid.implicit_solve(r[:, s + 1] - dt * Phi.levels[k][:, s], dt)
        _check(r, "backward state", k)
        levels[k] = r
        child = r[:, 0]
    return BackwardSolution(Trajectory(tree, grid, levels), AdaptedField(Rs))


def reconstruction_residual(sol: BackwardSolution) -> float:
    """max |r_child - (r_S +- sqrt(dt_noise) R)| relative to max |r|."""
    tree = sol.r.tree
    if not tree.stochastic:
        return 0.0
    sq = math.sqrt(tree.dt_noise)
    worst, scale = 0.0, 0.0
    for k in range(tree.n_intervals):
        child = sol.r.starts(k + 1)
        mean = np.repeat(sol.r.levels[k][:, -1], 2, axis=0)
        rec = mean + sq * tree.sign(k)[:, None] * np.repeat(sol.R.levels[k], 2, axis=0)
        worst = max(worst, float(np.abs(rec - child).max()))
        scale = max(scale, float(np.abs(child).max()))
    return worst / scale if scale > 0 else worst


def duality_sides(
    traj: Trajectory,
    sol: BackwardSolution,
    F: AdaptedField,
    K: AdaptedField,
    Phi: AdaptedField,
) -> tuple[float, float]:
    """Both sides of the discrete duality between a forward trajectory with
    drift F (per substep) and kick K (per node), and a backward solution with
    source Phi (per substep):

        E<Y_T, r_T> - <Y_0, r_0>
            = E sum dt (<F_s, r_s> + <Y_{s+1}, Phi_s>) + E sum dt_noise <K, R>.
    """
    tree, grid = traj.tree, traj.grid
    h, dt = grid.h, tree.dt
    last = tree.n_intervals
    lhs = tree.prob(last) * h * float(np.sum(traj.terminal * sol.r.terminal))
    lhs -= h * float(np.dot(traj.initial, sol.r.levels[0][0, 0]))
    F = per_substep(F, tree, grid.n)
    Phi = per_substep(Phi, tree, grid.n)
    rhs = 0.0
    for k in range(last):
        Y, r = traj.levels[k], sol.r.levels[k]
        p = tree.prob(k) * h
        rhs += p * dt * float(np.sum(F.levels[k] * r[:, :-1]) + np.sum(Y[:, 1:] * Phi.levels[k]))
        if tree.stochastic:
            rhs += p * tree.dt_noise * float(np.sum(K.levels[k] * sol.R.levels[k]))
    return lhs, rhs
