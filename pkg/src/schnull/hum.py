"""Penalized linear-quadratic null control on the binary tree.

State:  dy + D4 y dt = (phi + chi u) dt + (K + U) dB,  y(0) = y0
Cost:   J = 1/2 E sum_s dt <W_track(t_s) , |Y_{s+1}|^2, |D1 Y|^2, |D2 Y|^2>
          + 1/2 E sum dt_noise <wu u, u>_{G0} + 1/2 E sum dt_noise <wU U, U>
          + 1/(2 eps) E <Y_T, Y_T>

Tracking weights (theta_eps^-2, theta_eps^-2 lam^-2 mu^-2 xi^-3,
theta_eps^-2 lam^-4 mu^-4 xi^-5) are taken at substep midpoints; the
control weights (theta^-2 lam^-7 mu^-8 xi^-7 on u, theta^-2 lam^-4 mu^-4 xi^-5
on U) are averaged over each noise interval because the controls are constant
there.

The adjoint (z, Z) solves the backward equation with z_T = Y_T / eps and
source -Xi, Xi = W0 Y + D1^T W1 D1 Y + D2^T W2 D2 Y, so that
    grad_u = wu u + chi mean_s z_s,   grad_U = wU U + Z
exactly, in the control inner product E sum dt_noise h sum(.).
At the optimum this is the feedback law u = -chi wu^-1 z, U = -wU^-1 Z.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional

import numpy as np

from .filtration import AdaptedField, Tree
from .grid import Grid
from .spde import BackwardSolution, Trajectory, per_node, per_substep, solve_backward, solve_forward
from .weights import Interval, WeightEvaluator, region_mask

LOG_FACTORS = {
    # name: (xi power, lam power, mu power)
    "track0": (0, 0, 0),
    "track1": (-3, -2, -2),
    "track2": (-5, -4, -4),
    "u": (-7, -7, -8),
    "U": (-5, -4, -4),
    "feedback_u": (7, 7, 8),
    "feedback_U": (5, 4, 4),
}


@dataclass(frozen=True)
class CostWeights:
    track0: bool = True
    track1: bool = False
    track2: bool = False

    @classmethod
    def state_only(cls) -> "CostWeights":
        """Tracking of |y| only (the auxiliary problem behind the H^-2 estimate)."""
        return cls(True, False, False)

    @classmethod
    def full(cls) -> "CostWeights":
        """Tracking of y, y_x and y_xx (the control problem for the SPDE)."""
        return cls(True, True, True)


@dataclass
class LQProblem:
    grid: Grid
    tree: Tree
    evaluator: WeightEvaluator
    G0: Interval
    eps: float
    weights: CostWeights = field(default_factory=CostWeights.full)

    def __post_init__(self):
        if not self.eps > 0:
            raise ValueError("eps must be positive")
        p = self.evaluator.params
        if abs(p.T - self.tree.T) > 1e-14:
            raise ValueError(f"tree horizon {self.tree.T} differs from weight horizon {p.T}")
        if p.eps_shift != self.eps:
            self.evaluator = WeightEvaluator(p.with_eps(self.eps), self.evaluator.profile)
        self.chi = region_mask(self.grid.x, self.G0).astype(float)
        if not self.chi.any():
            raise ValueError(f"control region {self.G0} contains no grid nodes")

    def _w(self, t: np.ndarray, name: str, kind: str) -> np.ndarray:
        k, a, b = LOG_FACTORS[name]
        p = self.evaluator.params
        c_log = a * math.log(p.lam) + b * math.log(p.mu)
        return self.evaluator.weight(t, self.grid.x, k=k, c_log=c_log, kind=kind)

    @cached_property
    def track_weights(self) -> list[list[Optional[np.ndarray]]]:
        """Per level: [W0, W1, W2], each (S, n) or None when not tracked."""
        out = []
        flags = (self.weights.track0, self.weights.track1, self.weights.track2)
        for k in range(self.tree.n_intervals):
            mid = self.tree.substep_times(k)[:-1] + 0.5 * self.tree.dt
            out.append(
                [self._w(mid, f"track{i}", "theta_eps_inv2") if on else None for i, on in enumerate(flags)]
            )
        return out

    def _interval_mean(self, name: str, kind: str) -> list[np.ndarray]:
        out = []
        for k in range(self.tree.n_intervals):
            mid = self.tree.substep_times(k)[:-1] + 0.5 * self.tree.dt
            out.append(self._w(mid, name, kind).mean(axis=0))
        return out

    @cached_property
    def wu(self) -> list[np.ndarray]:
        return self._interval_mean("u", "theta_inv2")

    @cached_property
    def wU(self) -> list[np.ndarray]:
        return self._interval_mean("U", "theta_inv2")

    # -- control vectors ---------------------------------------------------

    @cached_property
    def _layout(self) -> list[tuple[int, int]]:
        n = self.grid.n
        return [(self.tree.level_size(k), n) for k in range(self.tree.n_intervals)]

    @property
    def size(self) -> int:
        return 2 * sum(a * b for a, b in self._layout)

    def pack(self, u: AdaptedField, U: AdaptedField) -> np.ndarray:
        return np.concatenate([u.flat(), U.flat()])

    def unpack(self, x: np.ndarray) -> tuple[AdaptedField, AdaptedField]:
        half = self.size // 2
        z = AdaptedField([np.zeros(s) for s in self._layout])
        return z.unflat(x[:half]), z.unflat(x[half:])

    @cached_property
    def ip_weights(self) -> np.ndarray:
        """Entry weights of the control inner product E sum dt_noise h sum."""
        parts = [
            np.full(s[0] * s[1], self.tree.prob(k) * self.tree.dt_noise * self.grid.h)
            for k, s in enumerate(self._layout)
        ]
        w = np.concatenate(parts)
        return np.concatenate([w, w])

    @cached_property
    def control_weights(self) -> np.ndarray:
        """Diagonal of the control-cost Hessian (0 for u outside G0 is replaced
        by 1 there; those entries are masked anyway)."""
        wu = [np.broadcast_to(np.where(self.chi > 0, w, 1.0), s) for w, s in zip(self.wu, self._layout)]
        wU = [np.broadcast_to(w, s) for w, s in zip(self.wU, self._layout)]
        return np.concatenate([a.ravel() for a in wu] + [a.ravel() for a in wU])

    @cached_property
    def mask(self) -> np.ndarray:
        mu = np.concatenate([np.broadcast_to(self.chi, s).ravel() for s in self._layout])
        return np.concatenate([mu, np.ones_like(mu)])

    def inner(self, a: np.ndarray, b: np.ndarray) -> float:
        return float(np.sum(self.ip_weights * a * b))

    # -- state, cost, adjoint ---------------------------------------------

    def forward(
        self,
        u: AdaptedField,
        U: AdaptedField,
        y0: np.ndarray,
        phi: Optional[AdaptedField] = None,
        K: Optional[AdaptedField] = None,
    ) -> Trajectory:
        amp = U if K is None else U + per_node(K, self.tree, self.grid.n)
        return solve_forward(self.grid, self.tree, y0, phi=phi, u=u, U=amp, chi=self.chi)

    def cost(self, traj: Trajectory, u: AdaptedField, U: AdaptedField) -> dict[str, float]:
        tree, grid = self.tree, self.grid
        h, dt = grid.h, tree.dt
        track = [0.0, 0.0, 0.0]
        cu = cU = 0.0
        for k in range(tree.n_intervals):
            Y = traj.levels[k][:, 1:]
            p = tree.prob(k) * h
            W = self.track_weights[k]
            derivs = (Y, grid.d1(Y) if W[1] is not None else None, grid.d2(Y) if W[2] is not None else None)
            for i in range(3):
                if W[i] is not None:
                    track[i] += 0.5 * p * dt * float(np.sum(W[i] * derivs[i] ** 2))
            cu += 0.5 * p * tree.dt_noise * float(np.sum(self.wu[k] * self.chi * u.levels[k] ** 2))
            cU += 0.5 * p * tree.dt_noise * float(np.sum(self.wU[k] * U.levels[k] ** 2))
        last = tree.n_intervals
        term = 0.5 / self.eps * tree.prob(last) * h * float(np.sum(traj.terminal**2))
        out = {f"track{i}": track[i] for i in range(3)}
        out.update(control_u=cu, control_U=cU, terminal=term)
        out["total"] = sum(track) + cu + cU + term
        return out

    def xi_source(self, traj: Trajectory) -> AdaptedField:
        """Xi per (node, substep) from the right-endpoint states."""
        grid = self.grid
        out = []
        for k in range(self.tree.n_intervals):
            Y = traj.levels[k][:, 1:]
            W = self.track_weights[k]
            X = np.zeros_like(Y)
            if W[0] is not None:
                X += W[0] * Y
            if W[1] is not None:
                X += grid.d1_t(W[1] * grid.d1(Y))
            if W[2] is not None:
                X += grid.d2_t(W[2] * grid.d2(Y))
            out.append(X)
        return AdaptedField(out)

    def adjoint(self, traj: Trajectory) -> BackwardSolution:
        return solve_backward(self.grid, self.tree, traj.terminal / self.eps, Phi=-self.xi_source(traj))

    def gradient_fields(
        self, u: AdaptedField, U: AdaptedField, adj: BackwardSolution
    ) -> tuple[AdaptedField, AdaptedField]:
        gu, gU = [], []
        for k in range(self.tree.n_intervals):
            zbar = adj.r.levels[k][:, :-1].mean(axis=1)
            gu.append(self.chi * (self.wu[k] * u.levels[k] + zbar))
            gU.append(self.wU[k] * U.levels[k] + adj.R.levels[k])
        return AdaptedField(gu), AdaptedField(gU)

    def evaluate(self, x: np.ndarray, y0, phi=None, K=None):
        """(cost dict, gradient vector, trajectory, adjoint) at control vector x."""
        u, U = self.unpack(x)
        traj = self.forward(u, U, y0, phi, K)
        adj = self.adjoint(traj)
        gu, gU = self.gradient_fields(u, U, adj)
        return self.cost(traj, u, U), self.pack(gu, gU), traj, adj

    def hessian_apply(self, d: np.ndarray) -> np.ndarray:
        zero = np.zeros(self.grid.n)
        return self.evaluate(d, zero)[1]


@dataclass
class LQSolution:
    u: AdaptedField
    U: AdaptedField
    y: Trajectory
    adjoint: BackwardSolution
    J: float
    cost: dict[str, float]
    optimality_residual: float
    terminal_norm_sq: float
    iterations: int
    converged: bool
    history: list[dict[str, float]]


def terminal_norm_sq(traj: Trajectory) -> float:
    """E ||y(T)||^2 in the discrete L2 norm."""
    tree, grid = traj.tree, traj.grid
    return tree.prob(tree.n_intervals) * grid.h * float(np.sum(traj.terminal**2))


def optimality_residual(prob: LQProblem, u: AdaptedField, U: AdaptedField, adj: BackwardSolution) -> float:
    """max of ||u + chi wu^-1 zbar|| / ||u|| and ||U + wU^-1 Z|| / ||U||."""
    ru = su = rU = sU = 0.0
    for k in range(prob.tree.n_intervals):
        zbar = adj.r.levels[k][:, :-1].mean(axis=1)
        fb_u = -prob.chi * zbar / prob.wu[k]
        fb_U = -adj.R.levels[k] / prob.wU[k]
        w = prob.tree.prob(k)
        ru += w * float(np.sum((prob.chi * u.levels[k] - fb_u) ** 2))
        su += w * float(np.sum(u.levels[k] ** 2))
        rU += w * float(np.sum((U.levels[k] - fb_U) ** 2))
        sU += w * float(np.sum(U.levels[k] ** 2))
    out = 0.0
    for r, s in ((ru, su), (rU, sU)):
        if s > 0:
            out = max(out, math.sqrt(r / s))
        elif r > 0:
            out = math.inf
    return out


def solve_lq(
    prob: LQProblem,
    y0: np.ndarray,
    phi: Optional[AdaptedField] = None,
    K: Optional[AdaptedField] = None,
    tol: float = 1e-8,
    max_iter: int = 500,
    max_restarts: int = 5,
) -> LQSolution:
    """Preconditioned CG on the control pair; preconditioner wu^-1, wU^-1.

    When the recursive residual meets the tolerance the true gradient is
    recomputed; if roundoff drift left it above tolerance, CG restarts from
    the current iterate (at most ``max_restarts`` times).
    """
    y0 = np.asarray(y0, dtype=float)
    x = np.zeros(prob.size)
    cost0, g, traj, adj = prob.evaluate(x, y0, phi, K)
    J0 = cost0["total"]
    b = -g  # H x = b at the optimum
    Minv = prob.mask / prob.control_weights
    r = b.copy()
    zv = Minv * r
    rz = prob.inner(r, zv)
    norm0 = math.sqrt(max(rz, 0.0))
    history = [{"iteration": 0, "J": J0, "grad_norm": norm0}]
    converged = norm0 == 0.0
    it = restarts = 0
    p = zv.copy()
    zero = np.zeros_like(y0)
    while not converged and it < max_iter:
        Hp = prob.evaluate(p, zero)[1]
        pHp = prob.inner(p, Hp)
        if not pHp > 0:
            break
        a = rz / pHp
        x += a * p
        r -= a * Hp
        zv = Minv * r
        rz_new = prob.inner(r, zv)
        it += 1
        gn = math.sqrt(max(rz_new, 0.0))
        history.append({"iteration": it, "J": J0 - 0.5 * prob.inner(x, r + b), "grad_norm": gn})
        if gn <= tol * norm0:
            r = -prob.evaluate(x, y0, phi, K)[1]
            zv = Minv * r
            rz_new = prob.inner(r, zv)
            if math.sqrt(max(rz_new, 0.0)) <= tol * norm0 or restarts >= max_restarts:
                converged = math.sqrt(max(rz_new, 0.0)) <= tol * norm0
                break
            restarts += 1
            p = zv.copy()
            rz = rz_new
            continue
        p = zv + (rz_new / rz) * p
        rz = rz_new

    cost, _, traj, adj = prob.evaluate(x, y0, phi, K)
    u, U = prob.unpack(x)
    return LQSolution(
        u=u,
        U=U,
        y=traj,
        adjoint=adj,
        J=cost["total"],
        cost=cost,
        optimality_residual=optimality_residual(prob, u, U, adj),
        terminal_norm_sq=terminal_norm_sq(traj),
        iterations=it,
        converged=converged,
        history=history,
    )


@dataclass
class ScheduleLevel:
    eps: float
    terminal_norm_sq: float
    ratio: float
    control_u_sq: float
    control_U_sq: float
    J: float
    iterations: int
    converged: bool
    solution: Optional[LQSolution] = field(default=None, repr=False, compare=False)


def eps_schedule(
    make_problem,
    y0: np.ndarray,
    eps0: float,
    n_levels: int,
    phi: Optional[AdaptedField] = None,
    tol: float = 1e-10,
    max_iter: int = 500,
) -> list[ScheduleLevel]:
    """solve_lq for eps_k = eps0 2^-k; ``make_problem(eps)`` builds the LQProblem."""
    if not eps0 > 0 or n_levels < 1:
        raise ValueError("need eps0 > 0 and n_levels >= 1")
    out = []
    for k in range(n_levels):
        eps = eps0 * 2.0**-k
        prob = make_problem(eps)
        sol = solve_lq(prob, y0, phi, tol=tol, max_iter=max_iter)
        nu = sum(prob.tree.prob(j) * prob.tree.dt_noise * prob.grid.h * float(np.sum(a**2)) for j, a in enumerate(sol.u.levels))
        nU = sum(prob.tree.prob(j) * prob.tree.dt_noise * prob.grid.h * float(np.sum(a**2)) for j, a in enumerate(sol.U.levels))
        out.append(
            ScheduleLevel(
                eps=eps,
                terminal_norm_sq=sol.terminal_norm_sq,
                ratio=sol.terminal_norm_sq / eps,
                control_u_sq=nu,
                control_U_sq=nU,
                J=sol.J,
                iterations=sol.iterations,
                converged=sol.converged,
                solution=sol,
            )
        )
    return out


# --------------------------------------------------------------------------
# duality identity for the auxiliary (state-only tracking) problem
# --------------------------------------------------------------------------


def auxiliary_sources(prob: LQProblem, rsol: BackwardSolution) -> tuple[AdaptedField, AdaptedField]:
    """Drift lam^7 mu^8 xi^7 theta^2 r (left endpoints) and kick
    lam^4 mu^4 xi^5 theta^2 R (interval-averaged weight)."""
    tree = prob.tree
    drift, kick = [], []
    for k in range(tree.n_intervals):
        tl = tree.substep_times(k)[:-1]
        w7 = prob._w(tl, "feedback_u", "theta2")
        mid = tl + 0.5 * tree.dt
        w5 = prob._w(mid, "feedback_U", "theta2").mean(axis=0)
        drift.append(w7 * rsol.r.levels[k][:, :-1])
        kick.append(w5 * rsol.R.levels[k])
    return AdaptedField(drift), AdaptedField(kick)


def duality_identity_check(
    prob: LQProblem,
    rsol: BackwardSolution,
    phi0: Optional[AdaptedField] = None,
    phi1: Optional[AdaptedField] = None,
    phi2: Optional[AdaptedField] = None,
    tol: float = 1e-12,
    max_iter: int = 500,
) -> dict[str, float]:
    """Solve the auxiliary problem (zero initial state) driven by (r, R) and
    compare both sides of

        E sum w7 r^2 + E sum w5 R^2 - E<h_T, r_T>
          = -E<h, phi0> + E<D1 h, phi1> - E<D2 h, phi2> - E<chi v, r> - E<V, R>.

    The terminal pairing carries a minus sign: it is the Ito product rule for
    d<h, r> integrated over [0, T] with h(0) = 0.
    """
    tree, grid = prob.tree, prob.grid
    n, h, dt = grid.n, grid.h, tree.dt
    drift, kick = auxiliary_sources(prob, rsol)
    sol = solve_lq(prob, np.zeros(n), phi=drift, K=kick, tol=tol, max_iter=max_iter)
    p0, p1, p2 = (per_substep(f, tree, n) for f in (phi0, phi1, phi2))

    energy_r = energy_R = term_T = 0.0
    pair0 = pair1 = pair2 = pair_v = pair_V = 0.0
    for k in range(tree.n_intervals):
        pk = tree.prob(k) * h
        r_left = rsol.r.levels[k][:, :-1]
        H = sol.y.levels[k][:, 1:]
        energy_r += pk * dt * float(np.sum(drift.levels[k] * r_left))
        energy_R += pk * tree.dt_noise * float(np.sum(kick.levels[k] * rsol.R.levels[k]))
        pair0 += pk * dt * float(np.sum(H * p0.levels[k]))
        pair1 += pk * dt * float(np.sum(grid.d1(H) * p1.levels[k]))
        pair2 += pk * dt * float(np.sum(grid.d2(H) * p2.levels[k]))
        pair_v += pk * dt * float(np.sum((prob.chi * sol.u.levels[k])[:, None, :] * r_left))
        pair_V += pk * tree.dt_noise * float(np.sum(sol.U.levels[k] * rsol.R.levels[k]))
    last = tree.n_intervals
    term_T = tree.prob(last) * h * float(np.sum(sol.y.terminal * rsol.r.terminal))
    lhs = energy_r + energy_R - term_T
    rhs = -pair0 + pair1 - pair2 - pair_v - pair_V
    scale = sum(abs(v) for v in (energy_r, energy_R, term_T, pair0, pair1, pair2, pair_v, pair_V))
    return {
        "lhs": lhs,
        "rhs": rhs,
        "mismatch": abs(lhs - rhs) / scale if scale > 0 else 0.0,
        "terminal_pairing": term_T,
        "terminal_norm_sq": sol.terminal_norm_sq,
        "cg_iterations": sol.iterations,
        "converged": sol.converged,
    }
