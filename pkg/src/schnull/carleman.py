"""Both sides of the two global Carleman estimates, evaluated in log space.

For a discrete backward solution (r, R) with source phi0 + phi1_x + phi2_xx:

L2-source estimate (phi1 = phi2 = 0)
    LHS  lam^4 mu^5 e^{4 mu (10m+1)} E|theta(0) r(0)|^2
         + theta^2 (lam^3 mu^4 xi^3 |r_xx|^2 + lam^5 mu^6 xi^5 |r_x|^2 + lam^7 mu^8 xi^7 |r|^2)
    RHS  theta^2 lam^7 mu^8 xi^7 |r|^2 on G0 + theta^2 |phi0|^2 + theta^2 lam^4 mu^4 xi^5 |R|^2

H^-2-source estimate
    LHS  lam^3 mu^4 e^{30 mu m} E|theta(0) r(0)|^2 + the same three integrals
    RHS  theta^2 (|phi0|^2 + lam^2 mu^2 xi^3 |phi1|^2 + lam^4 mu^4 xi^5 |phi2|^2)
         + the local term + the R term

Space-time integrals sample r at the left end of every substep; R and the
sources are piecewise constant in time on the tree.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .filtration import AdaptedField, Tree
from .grid import Grid
from .spde import BackwardSolution, per_substep, solve_backward
from .weights import Interval, LogSum, WeightEvaluator, WeightParams, weighted_form


@dataclass
class CarlemanReport:
    lhs_terms: list[tuple[str, LogSum]]
    rhs_terms: list[tuple[str, LogSum]]
    descriptor: dict = field(default_factory=dict)

    @property
    def lhs(self) -> LogSum:
        return LogSum.combine(t for _, t in self.lhs_terms)

    @property
    def rhs(self) -> LogSum:
        return LogSum.combine(t for _, t in self.rhs_terms)

    @property
    def log_ratio(self) -> float:
        lhs, rhs = self.lhs, self.rhs
        if lhs.is_zero:
            return -math.inf
        return lhs - rhs

    def as_row(self) -> dict:
        row = dict(self.descriptor)
        for name, t in self.lhs_terms + self.rhs_terms:
            row[name] = t.log_value
        row["log_ratio"] = self.log_ratio
        return row


def _samples(tree: Tree, levels: list[np.ndarray]):
    """Stack (node, substep) rows with their left times and probability*dt."""
    vals, times, mass = [], [], []
    S = tree.substeps
    for k, a in enumerate(levels):
        t = tree.substep_times(k)[:-1]
        size = a.shape[0]
        vals.append(a.reshape(size * S, -1))
        times.append(np.tile(t, size))
        mass.append(np.full(size * S, tree.prob(k) * tree.dt))
    return np.concatenate(vals), np.concatenate(times), np.concatenate(mass)


def _repeat_substeps(tree: Tree, field_: AdaptedField) -> list[np.ndarray]:
    return [np.repeat(a[:, None, :], tree.substeps, axis=1) for a in field_.levels]


class _Terms:
    def __init__(self, sol: BackwardSolution, ev: WeightEvaluator):
        self.sol, self.ev = sol, ev
        self.tree: Tree = sol.r.tree
        self.grid: Grid = sol.r.grid
        p = ev.params
        self.lnl, self.lnm = math.log(p.lam), math.log(p.mu)
        r_left = [a[:, :-1] for a in sol.r.levels[:-1]]
        self.r = _samples(self.tree, r_left)
        self.rx = (self.grid.d1(self.r[0]),) + self.r[1:]
        self.rxx = (self.grid.d2(self.r[0]),) + self.r[1:]
        self.R = _samples(self.tree, _repeat_substeps(self.tree, sol.R))

    def form(self, samples, k, a, b, extra=0.0, region=None):
        v, t, m = samples
        return weighted_form(
            v, t, m, self.grid.x, self.grid.h, self.ev, k=k,
            c_log=a * self.lnl + b * self.lnm + extra, kind="theta2", region=region,
        )

    def initial(self, a, b, extra):
        r0 = self.sol.r.levels[0][0, 0][None, :]
        return self.form((r0, np.zeros(1), np.ones(1)), 0, a, b, extra)

    def interior(self) -> list[tuple[str, LogSum]]:
        return [
            ("xi3_rxx", self.form(self.rxx, 3, 3, 4)),
            ("xi5_rx", self.form(self.rx, 5, 5, 6)),
            ("xi7_r", self.form(self.r, 7, 7, 8)),
        ]

    def local(self, G0: Interval) -> tuple[str, LogSum]:
        return ("local_G0", self.form(self.r, 7, 7, 8, region=G0))

    def martingale(self) -> tuple[str, LogSum]:
        return ("xi5_R", self.form(self.R, 5, 4, 4))

    def source(self, phi: Optional[AdaptedField], k, a, b) -> LogSum:
        if phi is None:
            return LogSum.zero()
        levels = per_substep(phi, self.tree, self.grid.n).levels
        return self.form(_samples(self.tree, levels), k, a, b)


def _is_zero(f: Optional[AdaptedField]) -> bool:
    return f is None or f.max_abs() == 0.0


def carest2_sides(
    sol: BackwardSolution,
    ev: WeightEvaluator,
    G0: Interval,
    phi0: Optional[AdaptedField] = None,
    phi1: Optional[AdaptedField] = None,
    phi2: Optional[AdaptedField] = None,
) -> CarlemanReport:
    """Sides of the L2-source estimate; rejects nonzero phi1 or phi2."""
    if not (_is_zero(phi1) and _is_zero(phi2)):
        raise ValueError("the L2-source estimate requires phi1 = phi2 = 0")
    p = ev.params
    T = _Terms(sol, ev)
    lhs = [("initial", T.initial(4, 5, 4 * p.mu * (10 * p.m + 1)))] + T.interior()
    rhs = [T.local(G0), ("phi0", T.source(phi0, 0, 0, 0)), T.martingale()]
    return CarlemanReport(lhs, rhs)


def carest1_sides(
    sol: BackwardSolution,
    ev: WeightEvaluator,
    G0: Interval,
    phi0: Optional[AdaptedField] = None,
    phi1: Optional[AdaptedField] = None,
    phi2: Optional[AdaptedField] = None,
) -> CarlemanReport:
    """Sides of the H^-2-source estimate."""
    p = ev.params
    T = _Terms(sol, ev)
    lhs = [("initial", T.initial(3, 4, 30 * p.mu * p.m))] + T.interior()
    rhs = [
        ("phi0", T.source(phi0, 0, 0, 0)),
        ("phi1", T.source(phi1, 3, 2, 2)),
        ("phi2", T.source(phi2, 5, 4, 4)),
        T.local(G0),
        T.martingale(),
    ]
    return CarlemanReport(lhs, rhs)


@dataclass(frozen=True)
class InstanceSpec:
    """Random backward-problem data: i.i.d. normal nodal values, each field
    smoothed by one implicit step of length ``smooth_dt``."""

    which: str = "carest2"
    smooth_dt: float = 1e-4
    localize: Optional[Interval] = None

    def __post_init__(self):
        if self.which not in ("carest2", "carest1"):
            raise ValueError(f"unknown estimate {self.which!r}")


def draw_instance(grid: Grid, tree: Tree, spec: InstanceSpec, rng: np.random.Generator):
    n, S = grid.n, tree.substeps
    mask = np.ones(n)
    if spec.localize is not None:
        a, b = spec.localize
        mask = ((grid.x > a) & (grid.x < b)).astype(float)

    def smooth(a):
        return grid.implicit_solve(a, spec.smooth_dt) * mask

    def src():
        return AdaptedField([smooth(rng.standard_normal((tree.level_size(k), S, n))) for k in range(tree.n_intervals)])

    rT = smooth(rng.standard_normal((tree.level_size(tree.n_intervals), n)))
    phi0 = src()
    if spec.which == "carest1":
        phi1, phi2 = src(), src()
    else:
        phi1 = phi2 = None
    return rT, phi0, phi1, phi2


def run_instance(grid, tree, ev, G0, spec: InstanceSpec, seed: int, index: int = 0) -> CarlemanReport:
    rng = np.random.default_rng([seed, index])
    rT, phi0, phi1, phi2 = draw_instance(grid, tree, spec, rng)
    sol = solve_backward(grid, tree, rT, phi0, phi1, phi2)
    fn = carest2_sides if spec.which == "carest2" else carest1_sides
    rep = fn(sol, ev, G0, phi0, phi1, phi2)
    rep.descriptor.update(seed=seed, index=index, N=grid.N, bc=grid.bc, depth=tree.depth)
    return rep


@dataclass
class EnsembleResult:
    reports: list[CarlemanReport]

    @property
    def log_ratios(self) -> np.ndarray:
        return np.array([r.log_ratio for r in self.reports])

    @property
    def max_log_ratio(self) -> float:
        return float(self.log_ratios.max())

    def quantiles(self, qs=(0.0, 0.25, 0.5, 0.75, 1.0)) -> dict[str, float]:
        lr = self.log_ratios
        return {f"q{int(round(100 * q))}": float(np.quantile(lr, q)) for q in qs}


def ensemble_ratio(
    n: int,
    seed: int,
    grid: Grid,
    tree: Tree,
    ev: WeightEvaluator,
    G0: Interval,
    spec: InstanceSpec,
    workers: int = 1,
) -> EnsembleResult:
    """Members are seeded by (seed, index), so results do not depend on
    ``workers``; the pool preserves index order."""
    if n < 1:
        raise ValueError("ensemble size must be >= 1")

    def one(i: int) -> CarlemanReport:
        return run_instance(grid, tree, ev, G0, spec, seed, i)

    if workers <= 1:
        return EnsembleResult([one(i) for i in range(n)])
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return EnsembleResult(list(pool.map(one, range(n))))


# --------------------------------------------------------------------------
# reference instances for regression baselines
# --------------------------------------------------------------------------


def reference_ensemble(which: str, bc: str, scaling: str = "practical", n: int = 50, seed: int = 0) -> float:
    """max log-ratio of the standard ensemble: (lam, mu, m) = (2, 2, 1),
    sigma = 4, N = 32, depth 4, 2 substeps, G0 = (0.3, 0.7)."""
    ev = WeightEvaluator.build(WeightParams(scaling=scaling, sigma_override=4.0), (0.3, 0.7))
    res = ensemble_ratio(n, seed, Grid(32, bc), Tree(4, 0.5, 2), ev, (0.3, 0.7), InstanceSpec(which))
    return res.max_log_ratio


def reference_decay(bc: str = "clamped") -> float:
    """Deterministic (depth 0) free decay from r_T = sin^2(pi x), L2-source estimate."""
    ev = WeightEvaluator.build(WeightParams(scaling="practical", sigma_override=4.0), (0.3, 0.7))
    grid, tree = Grid(32, bc), Tree(0, 0.5, 16)
    rT = np.sin(np.pi * grid.x)[None, :] ** 2
    sol = solve_backward(grid, tree, rT)
    return carest2_sides(sol, ev, (0.3, 0.7)).log_ratio


def reference_phi2(bc: str = "clamped", seed: int = 0) -> float:
    """Depth 1, source D2 phi2 only (smoothed Gaussian phi2), zero r_T, H^-2 estimate."""
    ev = WeightEvaluator.build(WeightParams(scaling="practical", sigma_override=4.0), (0.3, 0.7))
    grid, tree = Grid(32, bc), Tree(1, 0.5, 8)
    rng = np.random.default_rng([seed, 2])
    phi2 = AdaptedField([
        grid.implicit_solve(rng.standard_normal((tree.level_size(k), tree.substeps, grid.n)), 1e-4)
        for k in range(tree.n_intervals)
    ])
    sol = solve_backward(grid, tree, np.zeros((tree.level_size(tree.n_intervals), grid.n)), phi2=phi2)
    return carest1_sides(sol, ev, (0.3, 0.7), phi2=phi2).log_ratio


def reference_values() -> dict[str, float]:
    out = {}
    for bc in ("clamped", "simply_supported"):
        for which in ("carest2", "carest1"):
            out[f"ensemble/{which}/{bc}/practical"] = reference_ensemble(which, bc)
            out[f"ensemble/{which}/{bc}/exact"] = reference_ensemble(which, bc, scaling="exact")
        out[f"decay/{bc}"] = reference_decay(bc)
        out[f"phi2/{bc}"] = reference_phi2(bc)
    return out
