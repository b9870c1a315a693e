"""Fixed-point construction of controls for the semilinear equation

    dy + y_xxxx dt = (f(y, y_x, y_xx) + chi u) dt + (g(y, y_x, y_xx) + U) dB.

Picard map: source phi -> penalized linear control problem with drift phi ->
trajectory y -> f(y, D1 y, D2 y). Distances between successive sources are
measured in the weighted norm  E sum theta^-2 lam^-7 mu^-8 xi^-7 |phi|^2.
The diffusion nonlinearity g is absorbed into the noise control afterwards:
U* = U - g(y) drives the semilinear system along the same trajectory.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .filtration import AdaptedField
from .hum import LQProblem, LQSolution, solve_lq, terminal_norm_sq
from .spde import Nonlinearity, Trajectory, solve_forward
from .weights import LogSum, WeightEvaluator, weighted_form


class DivergenceError(RuntimeError):
    pass


@dataclass(frozen=True)
class NonlinearSpec:
    name: str
    f: Nonlinearity
    kappa: float
    g: Optional[Nonlinearity] = None
    kappa1: float = 0.0


def _zero_f(t, x, y, yx, yxx, B):
    return np.zeros_like(y)


def mixed_drift(kappa: float, a: float = 1.0, b: float = 1.0, c: float = 1.0, omega: float = 0.0) -> Nonlinearity:
    """kappa (a y + b sin(y_x) + c tanh(y_xx)) / (|a| + |b| + |c|).

    ``omega`` > 0 adds a bounded path dependence (1 + omega tanh B) / (1 + omega).
    """
    s = abs(a) + abs(b) + abs(c)
    if s == 0:
        return _zero_f

    def f(t, x, y, yx, yxx, B):
        val = kappa * (a * y + b * np.sin(yx) + c * np.tanh(yxx)) / s
        if omega:
            val = val * ((1 + omega * np.tanh(B)) / (1 + omega))[:, None]
        return val

    return f


def clamp_lipschitz(M: float) -> float:
    """Lipschitz constant of clamp(y^3 - y, -M, M)."""
    roots = np.roots([1.0, 0.0, -1.0, -M])
    yM = max(r.real for r in roots if abs(r.imag) < 1e-12)
    return max(1.0, 3 * yM**2 - 1)


def clamped_cahn_hilliard(kappa: float, M: float = 1.0) -> Nonlinearity:
    """kappa clamp(y^3 - y, +-M) / L_M: a globally Lipschitz stand-in for y^3 - y."""
    L = clamp_lipschitz(M)

    def f(t, x, y, yx, yxx, B):
        return kappa * np.clip(y**3 - y, -M, M) / L

    return f


def linear_diffusion(kappa1: float) -> Nonlinearity:
    def g(t, x, y, yx, yxx, B):
        return kappa1 * np.sin(y)

    return g


def builtin(name: str, kappa: float, kappa1: float = 0.0, **kw) -> NonlinearSpec:
    if name == "zero":
        f = _zero_f
        kappa = 0.0
    elif name == "mixed":
        f = mixed_drift(kappa, **kw)
    elif name == "clamped_ch":
        f = clamped_cahn_hilliard(kappa, **kw)
    else:
        raise ValueError(f"unknown builtin nonlinearity {name!r}")
    g = linear_diffusion(kappa1) if kappa1 else None
    return NonlinearSpec(name=name, f=f, kappa=kappa, g=g, kappa1=kappa1)


def certify(nl: NonlinearSpec, rng: np.random.Generator, n: int = 2000, scale: float = 3.0) -> dict[str, float]:
    """Sampled checks of f(0) = 0 and the declared Lipschitz constants."""
    t = float(rng.uniform(0, 1))
    x = rng.uniform(0, 1, n)
    B = rng.normal(size=1)
    zero = np.zeros((1, n))
    out = {}
    for label, fn, k in (("f", nl.f, nl.kappa), ("g", nl.g, nl.kappa1)):
        if fn is None:
            continue
        f0 = float(np.abs(fn(t, x, zero, zero, zero, B)).max())
        a = rng.normal(scale=scale, size=(3, 1, n))
        b = a + rng.normal(scale=scale, size=(3, 1, n)) * rng.uniform(1e-3, 1, size=(3, 1, n))
        num = np.abs(fn(t, x, *a, B) - fn(t, x, *b, B))
        den = np.abs(a - b).sum(axis=0)
        lip = float((num / den).max())
        out[f"{label}_at_zero"] = f0
        out[f"{label}_lipschitz"] = lip
        if f0 > 1e-14:
            raise ValueError(f"{label}(0, 0, 0) != 0 for {nl.name}")
        if lip > k * (1 + 1e-6):
            raise ValueError(f"{label} of {nl.name} exceeds its declared Lipschitz constant {k}")
    return out


def s_norm(phi: AdaptedField, prob: LQProblem) -> LogSum:
    """Squared weighted norm E sum theta^-2 lam^-7 mu^-8 xi^-7 |phi|^2 (log)."""
    tree, grid, ev = prob.tree, prob.grid, prob.evaluator
    p = ev.params
    vals, times, mass = [], [], []
    for k, a in enumerate(phi.levels):
        size, S = a.shape[0], a.shape[1]
        vals.append(a.reshape(size * S, -1))
        times.append(np.tile(tree.substep_times(k)[:-1], size))
        mass.append(np.full(size * S, tree.prob(k) * tree.dt))
    return weighted_form(
        np.concatenate(vals), np.concatenate(times), np.concatenate(mass), grid.x, grid.h, ev,
        k=-7, c_log=-7 * math.log(p.lam) - 8 * math.log(p.mu), kind="theta_inv2",
    )


def log_s_norm(phi: AdaptedField, prob: LQProblem) -> float:
    """log of the S-norm (square root taken in log space)."""
    ls = s_norm(phi, prob)
    return -math.inf if ls.is_zero else 0.5 * ls.log_value


def evaluate_f(nl: NonlinearSpec, traj: Trajectory) -> AdaptedField:
    """f at the left state of every substep, shape (nodes, substeps, n)."""
    tree, grid = traj.tree, traj.grid
    out = []
    for k in range(tree.n_intervals):
        Y = traj.levels[k][:, :-1]
        B = tree.brownian(k)
        times = tree.substep_times(k)
        vals = np.empty_like(Y)
        for s in range(tree.substeps):
            ys = Y[:, s]
            vals[:, s] = nl.f(times[s], grid.x, ys, grid.d1(ys), grid.d2(ys), B)
        out.append(vals)
    return AdaptedField(out)


@dataclass
class PicardReport:
    distances: list[float] = field(default_factory=list)  # log S-distances
    ratios: list[float] = field(default_factory=list)
    source_norms: list[float] = field(default_factory=list)  # log S-norms of phi^k
    terminal_norms: list[float] = field(default_factory=list)
    cg_iterations: list[int] = field(default_factory=list)
    iterations: int = 0
    converged: bool = False
    theoretical_factor: Optional[float] = None

    @property
    def max_ratio(self) -> float:
        return max(self.ratios) if self.ratios else 0.0

    @property
    def asymptotic_ratio(self) -> float:
        """Geometric mean of the ratios after the first one."""
        r = [q for q in self.ratios[1:] if q > 0] or [q for q in self.ratios if q > 0]
        return float(np.exp(np.mean(np.log(r)))) if r else 0.0

    @property
    def final_terminal_norm_sq(self) -> float:
        return self.terminal_norms[-1] if self.terminal_norms else math.nan


@dataclass
class PicardResult:
    report: PicardReport
    solution: LQSolution
    phi: AdaptedField


def picard_iterate(
    prob: LQProblem,
    y0: np.ndarray,
    nl: NonlinearSpec,
    max_iter: int = 30,
    tol: float = 1e-10,
    lq_tol: float = 1e-12,
    lq_max_iter: int = 1000,
    C: Optional[float] = None,
) -> PicardResult:
    """Iterate phi^{k+1} = f(y[phi^k]) from phi^0 = 0.

    Stops when d_k <= tol * max(1, ||phi^k||); three consecutive ratios above
    one abort with DivergenceError.
    """
    rep = PicardReport()
    p = prob.evaluator.params
    if C is not None:
        rep.theoretical_factor = C * nl.kappa**2 * p.lam**-3 * p.mu**-4
    phi = AdaptedField.zeros(prob.tree, (prob.tree.substeps, prob.grid.n))
    above = 0
    sol = None
    for k in range(max_iter):
        sol = solve_lq(prob, y0, phi, tol=lq_tol, max_iter=lq_max_iter)
        rep.cg_iterations.append(sol.iterations)
        rep.terminal_norms.append(sol.terminal_norm_sq)
        new = evaluate_f(nl, sol.y)
        if not new.is_finite():
            raise DivergenceError("nonlinearity produced non-finite values")
        ld = log_s_norm(new - phi, prob)
        lphi = log_s_norm(phi, prob)
        rep.distances.append(ld)
        rep.source_norms.append(lphi)
        rep.iterations = k + 1
        if len(rep.distances) >= 2:
            prev = rep.distances[-2]
            ratio = 0.0 if ld == -math.inf else (math.exp(ld - prev) if prev > -math.inf else math.inf)
            rep.ratios.append(ratio)
            above = above + 1 if ratio > 1 else 0
            if above >= 3:
                raise DivergenceError(
                    f"Picard ratios exceeded 1 three times in a row (last {ratio:.3g}); "
                    "increase lambda or mu, or reduce kappa"
                )
        if ld == -math.inf or ld <= math.log(tol) + max(0.0, lphi):
            rep.converged = True
            break
        phi = new
    assert sol is not None
    return PicardResult(rep, sol, phi)


def absorb_g(U: AdaptedField, nl: NonlinearSpec, traj: Trajectory) -> AdaptedField:
    """U* = U - g(y, D1 y, D2 y) at the start state of every noise interval."""
    if nl.g is None:
        return U.copy()
    tree, grid = traj.tree, traj.grid
    out = []
    for k in range(tree.n_intervals):
        y = traj.levels[k][:, 0]
        g = nl.g(tree.level_time(k), grid.x, y, grid.d1(y), grid.d2(y), tree.brownian(k))
        out.append(U.levels[k] - g)
    return AdaptedField(out)


def resimulate(prob: LQProblem, y0: np.ndarray, nl: NonlinearSpec, u: AdaptedField, U_star: AdaptedField) -> Trajectory:
    """The full semilinear scheme (f in the drift, g in the kick) under (u, U*)."""
    return solve_forward(prob.grid, prob.tree, y0, u=u, U=U_star, chi=prob.chi, f=nl.f, g=nl.g)


def trajectory_gap(a: Trajectory, b: Trajectory) -> float:
    num = max(float(np.abs(x - y).max()) for x, y in zip(a.levels, b.levels))
    den = max(float(np.abs(x).max()) for x in a.levels)
    return num / den if den > 0 else num
