"""Carleman weight ingredients, evaluated in log space.

The weights used by the stochastic fourth-order Carleman estimates are

    beta(x)          spatial profile, 0 < beta <= 1, beta(0) = beta(1) = 0
    gamma(t)         time profile, blows up like (T - t)^-m at t = T
    alpha(x)      =  exp(mu (10 m + beta)) - mu exp(mu (10 m + 10))   (< 0)
    xi(t, x)      =  gamma(t) exp(mu (10 m + beta))
    ell(t, x)     =  lambda gamma(t) alpha(x),     theta = exp(ell)

For every admissible (lambda, mu, m) the magnitude of ell is ~1e17 or more, so
nothing here ever exponentiates ell on its own. Quadratic functionals are
returned as :class:`LogSum` values that keep the ell-sized part of the exponent
separate from the moderate part.

A ``practical`` scaling is available for the optimal-control experiments:
ell is rescaled to magnitude ``ell_magnitude * lambda`` and log(xi) is shifted
down by ``mu (10 m + 1)``. The exact scaling is the default of WeightParams; run configs default to practical.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

Interval = tuple[float, float]

N_CERTIFY = 10_000
GLUE_RTOL = 1e-6


class WeightError(ValueError):
    """Raised when weight parameters or a profile fail certification."""


@dataclass(frozen=True)
class WeightParams:
    lam: float = 2.0
    mu: float = 2.0
    m: float = 1.0
    T: float = 0.5
    # None selects sigma = lam^3 mu^4 exp(mu (30 m - 6)); a float overrides it
    sigma_override: float | None = None
    eps_shift: float = 0.0
    scaling: str = "exact"
    ell_magnitude: float = 1e-3

    def __post_init__(self):
        if not self.lam >= 1:
            raise WeightError(f"lambda must be >= 1, got {self.lam}")
        if not self.mu >= 2:
            raise WeightError(f"mu must be >= 2, got {self.mu}")
        if not self.m >= 1:
            raise WeightError(f"m must be >= 1, got {self.m}")
        if not 0 < self.T < 1:
            raise WeightError(f"T must lie in (0, 1), got {self.T}")
        if self.sigma_override is not None and not self.sigma_override > 0:
            raise WeightError("sigma override must be positive")
        if not 0 <= self.eps_shift < self.T / 4:
            raise WeightError(f"eps_shift must lie in [0, T/4), got {self.eps_shift}")
        if self.scaling not in ("exact", "practical"):
            raise WeightError(f"unknown scaling {self.scaling!r}")
        if not self.ell_magnitude > 0:
            raise WeightError("ell_magnitude must be positive")

    @property
    def sigma(self) -> float:
        """Exponent of the t in [0, T/4) piece of gamma (may be ~1e22)."""
        if self.sigma_override is not None:
            return float(self.sigma_override)
        return self.lam**3 * self.mu**4 * math.exp(self.mu * (30 * self.m - 6))

    @property
    def sigma_mode(self) -> str:
        return "closed_form" if self.sigma_override is None else "override"

    @property
    def log_alpha_scale(self) -> float:
        """log of mu exp(mu (10 m + 10)), the size of |alpha|."""
        return math.log(self.mu) + self.mu * (10 * self.m + 10)

    @property
    def ell_scale(self) -> float:
        if self.scaling == "exact":
            return 1.0
        return self.ell_magnitude * math.exp(-self.log_alpha_scale)

    @property
    def log_xi_shift(self) -> float:
        if self.scaling == "exact":
            return 0.0
        return -self.mu * (10 * self.m + 1)

    def with_eps(self, eps_shift: float) -> "WeightParams":
        return _replace(self, eps_shift=eps_shift)


def _replace(obj, **kw):
    from dataclasses import replace

    return replace(obj, **kw)


# --------------------------------------------------------------------------
# spatial profile beta
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class SpatialProfile:
    x0: float
    s: float
    norm_const: float
    alpha0: float
    Gprime: Interval
    G0: Interval

    def beta(self, x):
        x = np.asarray(x, dtype=float)
        return x * (1 - x) * np.exp(self.s * x) / self.norm_const

    def derivative(self, x, k: int):
        """k-th derivative of beta (k >= 0), exact."""
        x = np.asarray(x, dtype=float)
        p = [x * (1 - x), 1 - 2 * x, -2.0 * np.ones_like(x)]
        total = np.zeros_like(x)
        for j in range(min(k, 2) + 1):
            total = total + math.comb(k, j) * self.s ** (k - j) * p[j]
        return np.exp(self.s * x) * total / self.norm_const


def make_beta(G0: Interval, Gprime: Interval, n_sample: int = N_CERTIFY) -> SpatialProfile:
    """Closed-form beta with its unique critical point at the middle of Gprime.

    beta(x) = x (1 - x) exp(s x) / (x0 (1 - x0) exp(s x0)) with
    s = (2 x0 - 1) / (x0 (1 - x0)). All profile invariants are certified on a
    dense sample; alpha0 is the sampled minimum of |beta'| off Gprime.
    """
    a0, b0 = map(float, G0)
    a1, b1 = map(float, Gprime)
    if not (0 < a0 < b0 < 1):
        raise WeightError(f"G0={G0} must be a subinterval of (0, 1)")
    if not (a0 < a1 < b1 < b0):
        raise WeightError(f"Gprime={Gprime} must be compactly inside G0={G0}")
    x0 = 0.5 * (a1 + b1)
    s = (2 * x0 - 1) / (x0 * (1 - x0))
    norm = x0 * (1 - x0) * math.exp(s * x0)
    prof = SpatialProfile(x0=x0, s=s, norm_const=norm, alpha0=0.0, Gprime=(a1, b1), G0=(a0, b0))

    xs = np.linspace(0.0, 1.0, n_sample + 1)
    b = prof.beta(xs)
    db = prof.derivative(xs, 1)
    if abs(b[0]) > 1e-15 or abs(b[-1]) > 1e-15:
        raise WeightError("beta does not vanish at the boundary")
    inner = b[1:-1]
    if inner.min() <= 0 or inner.max() > 1 + 1e-12:
        raise WeightError("beta leaves (0, 1] inside G")
    if abs(prof.beta(x0) - 1) > 1e-12:
        raise WeightError("beta(x0) != 1")
    sign = np.sign(db)
    changes = np.flatnonzero(sign[:-1] * sign[1:] < 0)
    exact_zero = np.flatnonzero(sign == 0)
    n_crit = len(changes) + len(exact_zero)
    if n_crit != 1:
        raise WeightError(f"beta has {n_crit} critical points on the sample, expected 1")
    xc = xs[changes[0]] if len(changes) else xs[exact_zero[0]]
    if not (a1 < xc < b1 or abs(xc - x0) <= 1.0 / n_sample):
        raise WeightError("critical point of beta is outside Gprime")
    outside = (xs <= a1) | (xs >= b1)
    alpha0 = float(np.abs(db[outside]).min())
    if alpha0 <= 0:
        raise WeightError("|beta'| vanishes off Gprime")
    return SpatialProfile(x0=x0, s=s, norm_const=norm, alpha0=alpha0, Gprime=(a1, b1), G0=(a0, b0))


# --------------------------------------------------------------------------
# time profile gamma
# --------------------------------------------------------------------------


def _bridge_coefficients(m: float, T: float) -> tuple[float, float, float]:
    """Quintic a s^3 + b s^4 + c s^5 for log(gamma) on [T/2, 3T/4], s in [0, 1].

    Matches (0, 0, 0) at T/2 and (m ln(4/T), 4m/T, 16m/T^2) at 3T/4.
    """
    A = m * math.log(4.0 / T)
    a = 10 * A - 3.5 * m
    b = 6 * m - 15 * A
    c = 6 * A - 2.5 * m
    return a, b, c


def _piece(t: np.ndarray, k: int, p: WeightParams):
    """log gamma and two derivatives using piece k (0..3) of the definition."""
    T, m = p.T, p.m
    if k == 0:
        sig = p.sigma
        z = 1 - 4 * t / T
        with np.errstate(divide="ignore", over="ignore", under="ignore", invalid="ignore"):
            lz = np.log(z)
            zs = np.exp(sig * lz)  # underflows to 0 for huge sigma
            # derivatives of z^sigma, written to survive sigma ~ 1e22
            # at z = 0 use the limits 0**(sig-1), 0**(sig-2) (1 when the power is 0)
            zs1 = np.where(z > 0, -4 * sig / T * np.exp((sig - 1) * lz), -4 * sig / T * np.float64(0.0) ** (sig - 1))
            zs2 = np.where(
                z > 0, 16 * sig * (sig - 1) / T**2 * np.exp((sig - 2) * lz), 16 * sig * (sig - 1) / T**2 * np.float64(0.0) ** (sig - 2)
            )
        g = 1 + zs
        return np.log1p(zs), zs1 / g, zs2 / g - (zs1 / g) ** 2
    if k == 1:
        z = np.zeros_like(t)
        return z, z.copy(), z.copy()
    if k == 2:
        a, b, c = _bridge_coefficients(m, T)
        L = T / 4
        s = (t - T / 2) / L
        return (
            a * s**3 + b * s**4 + c * s**5,
            (3 * a * s**2 + 4 * b * s**3 + 5 * c * s**4) / L,
            (6 * a * s + 12 * b * s**2 + 20 * c * s**3) / L**2,
        )
    r = T - t
    return -m * np.log(r), m / r, m / r**2


def _log_gamma_pieces(t: np.ndarray, p: WeightParams):
    """log gamma and its first two derivatives for unshifted gamma, t < T."""
    T = p.T
    idx = np.searchsorted(np.array([T / 4, T / 2, 3 * T / 4]), t, side="right")
    out = [np.zeros_like(t) for _ in range(3)]
    for k in range(4):
        q = idx == k
        if np.any(q):
            for o, v in zip(out, _piece(t[q], k, p)):
                o[q] = v
    return tuple(out)


def _shift_time(t: np.ndarray, p: WeightParams) -> np.ndarray:
    """Map t to the argument at which unshifted gamma reproduces gamma_eps."""
    e = p.eps_shift
    u = t.copy()
    mid = (t >= p.T / 2) & (t < p.T / 2 + e)
    late = t >= p.T / 2 + e
    u[mid] = p.T / 3  # any point of the plateau where gamma = 1
    u[late] = t[late] - e
    return u


def log_gamma(t, params: WeightParams, shifted: bool = False, derivs: bool = False):
    """log gamma(t) (or log gamma_eps when ``shifted``), vectorised.

    Unshifted gamma is defined on [0, T); gamma_eps on [0, T].
    """
    t = np.atleast_1d(np.asarray(t, dtype=float))
    if np.any(t < 0):
        raise WeightError("gamma is defined for t >= 0")
    if shifted:
        if np.any(t > params.T):
            raise WeightError("gamma_eps is defined on [0, T]")
        if params.eps_shift <= 0 and np.any(t >= params.T):
            raise WeightError("gamma_eps with eps_shift = 0 blows up at T")
        u = _shift_time(t, params)
    else:
        if np.any(t >= params.T):
            raise WeightError("gamma blows up at t = T")
        u = t
    lg, d1, d2 = _log_gamma_pieces(u, params)
    if shifted:
        plateau = (t >= params.T / 2) & (t < params.T / 2 + params.eps_shift)
        d1[plateau] = 0.0
        d2[plateau] = 0.0
    if derivs:
        return lg, d1, d2
    return lg


def gamma(t, params: WeightParams, shifted: bool = False):
    """gamma(t) > 0. Scalar in, scalar out; arrays are supported."""
    scalar = np.ndim(t) == 0
    val = np.exp(log_gamma(t, params, shifted))
    return float(val[0]) if scalar else val


def gamma_derivatives(t, params: WeightParams, shifted: bool = False):
    """(gamma, gamma', gamma'') from the closed forms of each piece."""
    lg, d1, d2 = log_gamma(t, params, shifted, derivs=True)
    g = np.exp(lg)
    return g, g * d1, g * (d2 + d1**2)


# --------------------------------------------------------------------------
# evaluator
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class WeightEvaluator:
    params: WeightParams
    profile: SpatialProfile
    bridge: tuple[float, float, float] = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "bridge", _bridge_coefficients(self.params.m, self.params.T))
        certify_bridge(self.params)

    @classmethod
    def build(cls, params: WeightParams, G0: Interval = (0.3, 0.7), Gprime: Interval | None = None):
        if Gprime is None:
            a, b = G0
            w = b - a
            Gprime = (a + 0.25 * w, b - 0.25 * w)
        return cls(params, make_beta(G0, Gprime))

    def alpha(self, x):
        p = self.params
        x = np.asarray(x, dtype=float)
        return np.exp(p.mu * (10 * p.m + self.profile.beta(x))) - p.mu * np.exp(p.mu * (10 * p.m + 10))

    def alpha_scaled(self, x):
        """alpha times ell_scale, computed without forming the full-size alpha."""
        p = self.params
        x = np.asarray(x, dtype=float)
        # alpha = mu e^{mu(10m+10)} (e^{mu(beta - 10)}/mu - 1)
        rel = np.exp(p.mu * (self.profile.beta(x) - 10)) / p.mu - 1.0
        if p.scaling == "exact":
            return math.exp(p.log_alpha_scale) * rel
        return p.ell_magnitude * rel

    def log_weights(self, t, x, shifted: bool = False):
        """(ell, log_xi) on the outer product of t and x (shapes (nt, nx))."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        x = np.atleast_1d(np.asarray(x, dtype=float))
        lg = log_gamma(t, self.params, shifted)
        g = np.exp(lg)
        ell = self.params.lam * g[:, None] * self.alpha_scaled(x)[None, :]
        log_xi = self._log_xi(t, x, lg_unshifted=None)
        return ell, log_xi

    def _log_xi(self, t, x, lg_unshifted=None):
        p = self.params
        lg = log_gamma(t, p, False) if lg_unshifted is None else lg_unshifted
        return lg[:, None] + p.mu * (10 * p.m + self.profile.beta(x))[None, :] + p.log_xi_shift

    def ell(self, t, x, shifted: bool = False):
        return self.log_weights(t, x, shifted)[0]

    def log_xi(self, t, x):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return self._log_xi(t, x)

    def log_weight(self, t, x, k: float = 0.0, c_log: float = 0.0, kind: str = "theta2"):
        """Split log weight (major, minor): log w = major + minor.

        major carries the +-2 ell part, minor carries c_log + k log(xi).
        """
        t = np.atleast_1d(np.asarray(t, dtype=float))
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if kind == "theta2":
            major = 2 * self.ell(t, x)
        elif kind == "theta_inv2":
            major = -2 * self.ell(t, x)
        elif kind == "theta_eps_inv2":
            major = -2 * self.ell(t, x, shifted=True)
        elif kind == "none":
            major = np.zeros((t.size, x.size))
        else:
            raise WeightError(f"unknown weight kind {kind!r}")
        minor = c_log + (k * self.log_xi(t, x) if k else 0.0)
        return major, np.broadcast_to(minor, major.shape)

    def weight(self, t, x, k: float = 0.0, c_log: float = 0.0, kind: str = "theta2"):
        """Plain weight array; raises if it is not representable in float64."""
        major, minor = self.log_weight(t, x, k, c_log, kind)
        with np.errstate(over="ignore", under="ignore"):
            w = np.exp(major + minor)
        if not np.all(np.isfinite(w)) or np.any(w == 0):
            raise WeightError(
                "weight under/overflows float64; use scaling='practical' for "
                "direct (non log-space) computations"
            )
        return w


def certify_bridge(params: WeightParams, n: int = N_CERTIFY) -> None:
    t = params.T / 2 + np.linspace(0, params.T / 4, n, endpoint=False)
    _, d1, _ = log_gamma(t, params, derivs=True)
    if np.any(d1 < -1e-14):
        # the quintic bridge is monotone for every 0 < T < 1, m >= 1
        raise WeightError("gamma bridge is not monotone on [T/2, 3T/4)")


def glue_jumps(params: WeightParams) -> dict[float, tuple[float, float, float]]:
    """Relative jumps of (gamma, gamma', gamma'') across T/4, T/2, 3T/4.

    Each side is evaluated with the closed form of its own piece.
    """
    out = {}
    for k, knot in enumerate((params.T / 4, params.T / 2, 3 * params.T / 4)):
        t = np.array([knot])
        sides = []
        for piece in (k, k + 1):
            lg, d1, d2 = _piece(t, piece, params)
            g = np.exp(lg[0])
            sides.append((g, g * d1[0], g * (d2[0] + d1[0] ** 2)))
        out[knot] = tuple(
            abs(a - b) / max(abs(a), abs(b), 1.0) if np.isfinite(a) and np.isfinite(b) else math.inf
            for a, b in zip(*sides)
        )
    return out


def glue_check_fd(
    params: WeightParams,
    rel_step: float = 3e-3,
    order: int = 6,
    log_fn: Optional[Callable[[np.ndarray], np.ndarray]] = None,
) -> dict[float, tuple[float, float]]:
    """Two-sided finite-difference check of C1/C2 gluing.

    One-sided interpolating stencils of degree ``order`` are taken from each
    side of every knot, using only sampled values of log gamma, so they test
    the assembled function rather than the piece formulas. Differencing the
    logarithm keeps the stencil well conditioned (gamma itself loses about
    1e-6 to roundoff at the steps a fourth-order stencil needs). Time is in
    units of T/4; the returned jumps are those of gamma'/gamma and
    gamma''/gamma, relative to max(|left|, |right|, 1).
    """
    if log_fn is None:
        log_fn = lambda t: log_gamma(t, params)  # noqa: E731
    L = params.T / 4
    w1, w2 = _one_sided_weights(order)
    j = np.arange(order + 1)
    out = {}
    for knot in (L, 2 * L, 3 * L):
        sides = []
        for direction in (-1, 1):
            f = log_fn(knot + direction * rel_step * L * j)
            d1 = direction * (w1 @ f) / rel_step
            d2 = (w2 @ f) / rel_step**2
            sides.append((d1, d2 + d1**2))
        out[knot] = tuple(abs(a - b) / max(abs(a), abs(b), 1.0) for a, b in zip(*sides))
    return out


def _one_sided_weights(order: int) -> tuple[np.ndarray, np.ndarray]:
    # weights for f'(0), f''(0) from f(0), f(1), ..., f(order)
    V = np.vander(np.arange(order + 1.0), increasing=True).T
    e = np.eye(order + 1)
    return np.linalg.solve(V, e[1]), np.linalg.solve(V, 2 * e[2])


# --------------------------------------------------------------------------
# log-space quadratic forms
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class LogSum:
    """log of a positive sum, stored as major + minor.

    ``major`` is the ell-scale part of the exponent (exact differences between
    nearby majors survive), ``minor`` the moderate remainder.
    """

    major: float
    minor: float
    is_zero: bool = False

    @classmethod
    def zero(cls) -> "LogSum":
        return cls(0.0, -math.inf, True)

    @property
    def log_value(self) -> float:
        return -math.inf if self.is_zero else self.major + self.minor

    def __sub__(self, other: "LogSum") -> float:
        if self.is_zero and other.is_zero:
            return math.nan
        if self.is_zero:
            return -math.inf
        if other.is_zero:
            return math.inf
        return (self.major - other.major) + (self.minor - other.minor)

    def scaled(self, log_factor: float) -> "LogSum":
        if self.is_zero:
            return self
        return LogSum(self.major, self.minor + log_factor)

    def value(self) -> float:
        if self.is_zero:
            return 0.0
        with np.errstate(over="ignore"):
            return float(np.exp(self.major + self.minor))

    @staticmethod
    def combine(parts: Iterable["LogSum"]) -> "LogSum":
        parts = [p for p in parts if not p.is_zero]
        if not parts:
            return LogSum.zero()
        M = max(p.major for p in parts)
        a = np.array([(p.major - M) + p.minor for p in parts])
        A = a.max()
        return LogSum(M, float(A + np.log(np.exp(a - A).sum())))


def logsum_from_arrays(major: np.ndarray, minor: np.ndarray, values: np.ndarray) -> LogSum:
    """log sum(exp(major + minor) * values**2) with split exponents."""
    v2 = np.asarray(values, dtype=float) ** 2
    mask = v2 > 0
    if not np.any(mask):
        return LogSum.zero()
    major = np.broadcast_to(major, v2.shape)[mask]
    minor = np.broadcast_to(minor, v2.shape)[mask] + np.log(v2[mask])
    M = major.max()
    a = (major - M) + minor
    A = a.max()
    return LogSum(float(M), float(A + np.log(np.exp(a - A).sum())))


def region_mask(x: np.ndarray, region: Interval | None) -> np.ndarray:
    if region is None:
        return np.ones_like(x, dtype=bool)
    a, b = region
    mask = (x > a) & (x < b)
    return mask


def weighted_form(
    values: np.ndarray,
    times: np.ndarray,
    mass: np.ndarray,
    x: np.ndarray,
    h: float,
    evaluator: WeightEvaluator,
    k: float = 0.0,
    c_log: float = 0.0,
    kind: str = "theta2",
    region: Interval | None = None,
) -> LogSum:
    """log of sum_{rows, x in region} w(t, x) v^2 h * mass.

    ``values`` has shape (rows, nx): one spatial profile per (tree node, time
    sample); ``times`` and ``mass`` (probability times time step) are per row.
    log w = c_log + k log(xi) +- 2 ell according to ``kind``.
    """
    values = np.asarray(values, dtype=float)
    times = np.asarray(times, dtype=float)
    mass = np.asarray(mass, dtype=float)
    if values.ndim != 2 or values.shape != (times.size, x.size):
        raise ValueError(f"values shape {values.shape} does not match ({times.size}, {x.size})")
    mask = region_mask(x, region)
    if not np.any(mask):
        raise WeightError(f"region {region} contains no grid nodes")
    xs = x[mask]
    v = values[:, mask]
    ut, inv = np.unique(times, return_inverse=True)
    major_t, minor_t = evaluator.log_weight(ut, xs, k=k, c_log=c_log, kind=kind)
    with np.errstate(divide="ignore"):
        row_log = np.log(mass) + math.log(h)
    minor = minor_t[inv] + row_log[:, None]
    return logsum_from_arrays(major_t[inv], minor, v)


def lse_split(parts: Sequence[LogSum]) -> LogSum:
    return LogSum.combine(parts)


def check_invariants(ev: WeightEvaluator, n: int = 2001) -> dict[str, float]:
    """Sampled weight invariants; every entry must be <= 0 to pass.

    Entries are signed violations (e.g. max alpha, which must be negative),
    so a report can be printed as numbers and thresholded in one place.
    """
    p = ev.params
    T = p.T
    x = np.linspace(0.0, 1.0, n)
    t = np.linspace(0.0, T, n, endpoint=False)
    out: dict[str, float] = {}

    plateau = np.linspace(T / 4, T / 2, 257, endpoint=False)
    out["gamma_plateau_dev"] = float(np.abs(gamma(plateau, p) - 1).max())
    fd = glue_check_fd(p)
    an = glue_jumps(p)
    out["glue_fd_excess"] = max(max(v) for v in fd.values()) - GLUE_RTOL
    out["glue_exact_excess"] = max(max(v) for v in an.values()) - GLUE_RTOL
    tb = T / 2 + np.linspace(0, T / 4, N_CERTIFY, endpoint=False)
    out["bridge_decrease"] = float(-np.diff(gamma(tb, p)).min())
    out["alpha_max"] = float(ev.alpha_scaled(x).max())
    ell = ev.ell(t, x)
    out["ell_max"] = float(ell.max())
    out["theta_not_positive"] = float(np.isneginf(ell).sum() + np.isnan(ell).sum())
    # theta(t, .) -> 0 as t -> T: ell must decrease without bound near T
    tail = T - T * np.logspace(-2, -8, 7)
    ell_tail = ev.ell(tail, np.array([ev.profile.x0]))[:, 0]
    out["theta_tail_increase"] = float(np.diff(ell_tail).max())
    lx = ev.log_xi(t, x)
    lg = log_gamma(t, p)[:, None]
    lo = p.mu * 10 * p.m + p.log_xi_shift
    hi = p.mu * (10 * p.m + 1) + p.log_xi_shift
    out["log_xi_below"] = float((lg + lo - lx).max()) - 1e-9
    out["log_xi_above"] = float((lx - lg - hi).max()) - 1e-9
    if p.eps_shift > 0:
        te = np.linspace(0.0, T, n)
        ge = gamma(te, p, shifted=True)
        bound = gamma(T - p.eps_shift, p)
        out["gamma_eps_unbounded"] = float(ge.max() - bound * (1 + 1e-12))
        early = te < T / 2
        out["gamma_eps_early_dev"] = float(np.abs(ge[early] - gamma(te[early], p)).max()) - 1e-15
        e0 = ev.ell(np.array([0.0]), x, shifted=True) - ev.ell(np.array([0.0]), x)
        out["theta_eps_at_0_dev"] = float(np.abs(e0).max())
    return out

