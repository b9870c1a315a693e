"""Pointwise weighted identity for the fourth-order operator L = d + delta d_x^4 dt.

With theta = e^l and w = theta * Ups, the identity reads (deterministic form,
dw = w_t dt, so the quadratic-variation bundle M1 vanishes)

    2 P2 theta (Ups_t + delta Ups_xxxx)
        = d_t Q + A + d_x F + 2 P2 P3 + 2 P2^2,

    Q = delta |w_xx|^2 + K2 w_xx w - 1/2 K2_xx w^2 + K0 w^2     (M0 = d_t Q)
    F = flux of the divergence bundles B~, B3, B3*, B2, B2*, B1, B1*, B0.

All coefficient and bundle formulas are implemented term by term below.
Derivatives are exact (Taylor jets); with ``fd=True`` the two outer
derivatives d_t Q and d_x F are replaced by centred differences on the sample
grid, which is the single finite-difference layer whose O(h^2) error the
refinement study measures.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .jets import Jet

# orders needed for l and Ups so that every bundle is exact
L_ORDERS = (2, 7)
U_ORDERS = (1, 4)
C_ORDERS = {"C0": 4, "C1": 3, "C2": 2}


@dataclass
class IdentityCoefficients:
    delta: float
    l: Jet
    C0: Jet
    C1: Jet
    C2: Jet
    K2: Jet
    K1: Jet
    K0: Jet
    G3: Jet
    G2: Jet
    G1: Jet
    G0: Jet


def compute_coefficients(l: Jet, delta: float, C0: Jet, C1: Jet, C2: Jet) -> IdentityCoefficients:
    """K and G fields from l and the free coefficients C0, C1, C2.

    Each field is truncated to the derivative orders the bundles use.
    """
    if not (l.shape == C0.shape == C1.shape == C2.shape):
        raise ValueError("l and C0..C2 must be sampled on the same points")
    d = float(delta)
    lx = l.dx()
    lxx = l.dx(2)
    lxxx = l.dx(3)

    def tr(j: Jet, ot, ox):
        return j.trunc(min(ot, j.ot), ox)

    K2 = 6 * d * tr(lx, 1, 2) ** 2
    K1 = 12 * d * (tr(lx, 0, 2) * tr(lxx, 0, 2))
    K0 = d * tr(lx, 1, 3) ** 4 - tr(l.dt(), 1, 3)
    G3 = -4 * d * tr(lx, 0, 3)
    G2 = d * (-6 * tr(lxx, 0, 2) + tr(C2, 0, 2))
    G1 = d * (-4 * tr(lx, 0, 3) ** 3 + tr(C1, 0, 3))
    a, b, c = tr(lx, 0, 4), tr(lxx, 0, 4), tr(lxxx, 0, 4)
    G0 = d * (-6 * (a * a * b) + 4 * (a * c) + 3 * (b * b) + tr(C0, 0, 4))
    return IdentityCoefficients(d, l, C0, C1, C2, K2, K1, K0, G3, G2, G1, G0)


@dataclass
class IdentityBundles:
    lhs: np.ndarray
    P2: np.ndarray
    P3: np.ndarray
    Q: Jet  # M0 = Q_t
    fluxes: dict[str, Jet]  # B_name = d_x fluxes[name]
    A: dict[str, np.ndarray]

    def B(self, name: str) -> np.ndarray:
        return self.fluxes[name][0, 1]

    @property
    def M0(self) -> np.ndarray:
        return self.Q[1, 0]

    def rhs_terms(self) -> dict[str, np.ndarray]:
        out = {"M0": self.M0}
        out.update(self.A)
        out.update({k: self.B(k) for k in self.fluxes})
        out["2P2P3"] = 2 * self.P2 * self.P3
        out["2P2^2"] = 2 * self.P2**2
        return out


def compute_bundles(co: IdentityCoefficients, ups: Jet) -> IdentityBundles:
    d = co.delta
    theta = co.l.trunc(*U_ORDERS).exp()
    w = theta * ups.trunc(*U_ORDERS)
    K2, K1, K0, G3, G2, G1, G0 = co.K2, co.K1, co.K0, co.G3, co.G2, co.G1, co.G0

    wx, wxx, wxxx, wxxxx = (w.dx(k) for k in (1, 2, 3, 4))
    v = lambda j: j.val  # noqa: E731

    P2 = d * v(wxxxx) + v(K2) * v(wxx) + v(K0) * v(w) + v(K1) * v(wx)
    P3 = -d * (
        v(co.C1) * v(wx) + v(co.C2) * v(wxx) + v(co.C0) * v(w)
        + co.l[0, 4] * v(w) + 4 * co.l[0, 3] * v(wx)
    )
    lhs = 2 * P2 * v(theta) * (ups[1, 0] + d * ups[0, 4])

    Q = d * (wxx * wxx) + K2 * wxx * w - 0.5 * K2.dx(2) * w * w + K0 * w * w

    # jets of order (0, 1) are enough for every flux
    o = lambda j: j.trunc(0, min(j.ox, 1)) if j.ox >= 1 else j  # noqa: E731
    wt = w.dt()
    G3K0, G3K1, G3K2 = G3 * K0, G3 * K1, G3 * K2
    G2K0, G0K2 = G2 * K0, G0 * K2
    fl = {}
    fl["B~"] = o(2 * d * wxxx + K2 * wx + K2.dx() * w) * o(wt) - o(2 * d * wxx + K2 * w) * o(wx.dt())
    fl["B3"] = d * o(G3) * o(wxxx) * o(wxxx)
    fl["B3*"] = 2 * d * (o(G2) * o(wxxx) * o(wxx) + o(G1) * o(wxxx) * o(wx) + o(G0) * o(wxxx) * o(w))
    fl["B2"] = o(G3K2 - d * G1 - d * G2.dx()) * o(wxx) * o(wxx)
    fl["B2*"] = 2 * o(G3K1 - d * G1.dx() - d * G0) * o(wxx) * o(wx) + 2 * o(G3K0 - d * G0.dx()) * o(wxx) * o(w)
    fl["B1"] = o(-G3K0 - G3K1.dx() + d * G1.dx(2) + G1 * K2 + G2 * K1 + 2 * d * G0.dx()) * o(wx) * o(wx)
    fl["B1*"] = o(-2 * G3K0.dx() + 2 * G2K0 + 2 * d * G0.dx(2) + 2 * G0K2 - K2.dt().trunc(0, 2)) * o(wx) * o(w)
    fl["B0"] = o(
        G3K0.dx(2) + G1 * K0 - G2K0.dx() - d * G0.dx(3) - G0K2.dx() + G0 * K1 + 0.5 * K2.dt().dx().trunc(0, 1)
    ) * o(w) * o(w)

    A = {}
    A["A3"] = -d * (2 * v(G2) + G3[0, 1]) * wxxx.val**2
    A["A2"] = (
        2 * d * v(G0) + 3 * d * G1[0, 1] + 2 * v(G2) * v(K2) - G3K2[0, 1] - 2 * v(G3) * v(K1) + d * G2[0, 2]
    ) * wxx.val**2
    G1K2, G2K1 = G1 * K2, G2 * K1
    A["A1"] = (
        -2 * v(G0) * v(K2) - G1K2[0, 1] + 2 * v(G1) * v(K1) - 2 * v(G2) * v(K0) + 3 * G3K0[0, 1]
        - 4 * d * G0[0, 2] - d * G1[0, 3] - G2K1[0, 1] + G3K1[0, 2] + K2[1, 0]
    ) * wx.val**2
    G1K0, G0K1 = G1 * K0, G0 * K1
    A["A0"] = (
        2 * v(G0) * v(K0) - G1K0[0, 1] + d * G0[0, 4] + G0K2[0, 2] - G0K1[0, 1]
        + G2K0[0, 2] - G3K0[0, 3] - K0[1, 0]
    ) * w.val**2
    return IdentityBundles(lhs=lhs, P2=P2, P3=P3, Q=Q, fluxes=fl, A=A)


# --------------------------------------------------------------------------
# analytic test library
# --------------------------------------------------------------------------

Builder = Callable[[Jet, Jet], Jet]


@dataclass(frozen=True)
class IdentityCase:
    name: str
    ups: Builder
    l: Builder
    delta: float = -1.0
    C0: Optional[Builder] = None
    C1: Optional[Builder] = None
    C2: Optional[Builder] = None
    t_range: tuple[float, float] = (0.1, 0.4)


def _bubble(x: Jet) -> Jet:
    return x * x * (1 - x) * (1 - x)


LIBRARY: list[IdentityCase] = [
    IdentityCase(
        "bubble_exp",
        ups=lambda t, x: _bubble(x) * (-t).exp(),
        l=lambda t, x: -(t + 1) * (2 - x * (1 - x)),
    ),
    IdentityCase(
        "bubble_trig",
        ups=lambda t, x: _bubble(x) * (1 + (3 * x + 2 * t).sin()),
        l=lambda t, x: -(t + 1) * (2 - x * (1 - x)) + (1 / 3) * x * x * x * t,
        C0=lambda t, x: x * x * x - t + x.exp(),
        C1=lambda t, x: (2 * x).cos() + t * x * x,
        C2=lambda t, x: t * x.sin() + x,
    ),
    IdentityCase(
        "sine_square",
        ups=lambda t, x: (math.pi * x).sin() ** 2 * t.cos(),
        l=lambda t, x: 0.5 * t * x * x,
        delta=1.0,
        C0=lambda t, x: 1 + x * x,
        C2=lambda t, x: x - 0.5,
    ),
    IdentityCase(
        "cosine_bump",
        ups=lambda t, x: (1 - (2 * math.pi * x).cos()) * (t * x).exp(),
        l=lambda t, x: -(1 + t * t) * x * (1 - x),
        C1=lambda t, x: 1 + x,
        C2=lambda t, x: (x * t).cos(),
    ),
    IdentityCase(
        "quintic",
        ups=lambda t, x: x * x * x * (1 - x) * (1 - x) * (1 + t * t),
        l=lambda t, x: (x + t).sin(),
        delta=-2.0,
        C0=lambda t, x: x.cos(),
    ),
    IdentityCase(
        "bubble_gauss",
        ups=lambda t, x: _bubble(x) * (-(x - 0.5 - 0.2 * t) ** 2 * 8).exp(),
        l=lambda t, x: -((x - 0.3) ** 2) * (1 + t),
        delta=-0.5,
        C0=lambda t, x: t * x,
        C1=lambda t, x: x * x,
        C2=lambda t, x: 1 - t,
    ),
]


def case_by_name(name: str) -> IdentityCase:
    for c in LIBRARY:
        if c.name == name:
            return c
    raise KeyError(f"unknown identity test function {name!r}")


def _zero(t: Jet, x: Jet) -> Jet:
    return Jet.const(0.0, t.ot, t.ox, t.shape)


def _jets(case: IdentityCase, t: np.ndarray, x: np.ndarray):
    def vars_(ot, ox):
        return Jet.var_t(t, ot, ox), Jet.var_x(x, ot, ox)

    l = case.l(*vars_(*L_ORDERS))
    ups = case.ups(*vars_(*U_ORDERS))
    cs = {}
    for name, ox in C_ORDERS.items():
        fn = getattr(case, name) or _zero
        cs[name] = fn(*vars_(0, ox))
    return l, ups, cs


def check_clamped(case: IdentityCase, n: int = 16, tol: float = 1e-12) -> None:
    t = np.linspace(*case.t_range, n)
    for xb in (0.0, 1.0):
        ups = case.ups(Jet.var_t(t, 0, 1), Jet.var_x(np.full_like(t, xb), 0, 1))
        if np.abs(ups[0, 0]).max() > tol or np.abs(ups[0, 1]).max() > tol:
            raise ValueError(f"test function {case.name!r} violates the clamped boundary conditions")


def evaluate_identity(case: IdentityCase, t: np.ndarray, x: np.ndarray) -> IdentityBundles:
    check_clamped(case)
    l, ups, cs = _jets(case, t, x)
    co = compute_coefficients(l, case.delta, cs["C0"], cs["C1"], cs["C2"])
    return compute_bundles(co, ups)


@dataclass
class ResidualReport:
    name: str
    n: int
    residual: float  # max |lhs - rhs|
    scale: float  # max over terms of |term|
    fd: bool

    @property
    def relative(self) -> float:
        return self.residual / self.scale if self.scale > 0 else self.residual


def deterministic_identity_residual(case: IdentityCase, n: int = 128, fd: bool = False) -> ResidualReport:
    """Max-norm residual of the identity on an (n+1) x (n+1) sample grid.

    With ``fd`` the outer derivatives d_t Q and d_x F use centred differences
    on the grid, and the residual is taken over interior points.
    """
    ta, tb = case.t_range
    t1 = np.linspace(ta, tb, n + 1)
    x1 = np.linspace(0.0, 1.0, n + 1)
    T, X = np.meshgrid(t1, x1, indexing="ij")
    bd = evaluate_identity(case, T, X)
    terms = bd.rhs_terms()
    if fd:
        dt, dx = t1[1] - t1[0], x1[1] - x1[0]
        Qv = bd.Q.val
        terms["M0"] = np.full_like(Qv, np.nan)
        terms["M0"][1:-1] = (Qv[2:] - Qv[:-2]) / (2 * dt)
        for k, F in bd.fluxes.items():
            Fv = F.val
            terms[k] = np.full_like(Fv, np.nan)
            terms[k][:, 1:-1] = (Fv[:, 2:] - Fv[:, :-2]) / (2 * dx)
        sl = (slice(1, -1), slice(1, -1))
    else:
        sl = (slice(None), slice(None))
    rhs = sum(terms.values())
    res = float(np.abs(bd.lhs - rhs)[sl].max())
    scale = max(float(np.abs(bd.lhs[sl]).max()), max(float(np.abs(v[sl]).max()) for v in terms.values()))
    return ResidualReport(case.name, n, res, scale, fd)


def refinement_order(case: IdentityCase, grids=(64, 128, 256)) -> tuple[list[float], list[float]]:
    """FD-layer residuals on the given grids and the observed orders."""
    res = [deterministic_identity_residual(case, n, fd=True).residual for n in grids]
    orders = [math.log(res[i] / res[i + 1]) / math.log(grids[i + 1] / grids[i]) for i in range(len(res) - 1)]
    return res, orders


def divergence_check(case: IdentityCase, n_quad: int = 40, times=(0.15, 0.25, 0.35)) -> float:
    """Compare the Gauss-Legendre integral of every B bundle over (0, 1) with
    its boundary flux difference; returns the worst relative mismatch."""
    gx, gw = np.polynomial.legendre.leggauss(n_quad)
    xs = 0.5 * (gx + 1)
    ws = 0.5 * gw
    worst = 0.0
    for tt in times:
        x = np.concatenate([xs, [0.0, 1.0]])
        bd = evaluate_identity(case, np.full_like(x, tt), x)
        for name, F in bd.fluxes.items():
            vol = float(np.dot(ws, F[0, 1][:-2]))
            bnd = float(F.val[-1] - F.val[-2])
            scale = max(float(np.dot(ws, np.abs(F[0, 1][:-2]))), abs(bnd), 1e-300)
            worst = max(worst, abs(vol - bnd) / scale)
    return worst


# --------------------------------------------------------------------------
# stochastic time-boundary bundle on tree trajectories
# --------------------------------------------------------------------------

CoefFn = Callable[[float], tuple[np.ndarray, np.ndarray, np.ndarray]]


def energy(w: np.ndarray, grid, delta: float, K2: np.ndarray, K2xx: np.ndarray, K0: np.ndarray) -> np.ndarray:
    """Q(w) = h sum(delta |D2 w|^2 + K2 D2w w - 1/2 K2xx w^2 + K0 w^2), per row."""
    wxx = grid.d2(w)
    return grid.h * np.sum(delta * wxx**2 + K2 * wxx * w - 0.5 * K2xx * w**2 + K0 * w**2, axis=-1)


def _polar(a, b, grid, delta, K2, K2xx, K0):
    """Symmetric bilinear form of Q: Q(a + b) = Q(a) + 2 B(a, b) + Q(b)."""
    axx, bxx = grid.d2(a), grid.d2(b)
    return grid.h * np.sum(
        delta * axx * bxx + 0.5 * K2 * (axx * b + bxx * a) - 0.5 * K2xx * a * b + K0 * a * b, axis=-1
    )


def stochastic_m0_telescoping_check(traj, delta: float, coef: CoefFn) -> dict[str, float]:
    """E Q_T(w_T) - Q_0(w_0) against the sum of per-step increments.

    Deterministic substeps contribute 2 B(w, dw) + Q(dw) plus the change of the
    coefficients; each noise kick +-sqrt(dt_noise) a contributes only its
    quadratic variation dt_noise Q(a): the cross term 2 B(w, +-sqrt(dt) a) has
    zero conditional mean, which is exactly what the check tests.
    """
    tree, grid = traj.tree, traj.grid
    t_end = tree.T
    QT = energy(traj.terminal, grid, delta, *coef(t_end))
    lhs = float(np.mean(QT)) - float(energy(traj.initial, grid, delta, *coef(0.0)))
    drift = qv = coef_change = 0.0
    for k in range(tree.n_intervals):
        Y = traj.levels[k]
        times = tree.substep_times(k)
        for s in range(tree.substeps):
            c0 = coef(times[s])
            dw = Y[:, s + 1] - Y[:, s]
            inc = 2 * _polar(Y[:, s], dw, grid, delta, *c0) + energy(dw, grid, delta, *c0)
            drift += float(np.mean(inc))
            c1 = coef(times[s + 1])
            coef_change += float(np.mean(energy(Y[:, s + 1], grid, delta, *c1) - energy(Y[:, s + 1], grid, delta, *c0)))
        if tree.stochastic:
            a = tree.increment_diff(traj.starts(k + 1), k)
            qv += tree.dt_noise * float(np.mean(energy(a, grid, delta, *coef(times[-1]))))
    rhs = drift + qv + coef_change
    scale = abs(lhs) + abs(drift) + abs(qv) + abs(coef_change)
    return {
        "lhs": lhs,
        "rhs": rhs,
        "drift": drift,
        "quadratic_variation": qv,
        "coefficient_change": coef_change,
        "mismatch": abs(lhs - rhs) / scale if scale > 0 else 0.0,
    }
