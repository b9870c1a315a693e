"""Uniform 1D grid on (0, 1) with second-order difference operators.

Only interior nodes x_i = i h, i = 1..N-1, are stored; boundary values are 0.
Ghost values beyond the boundary are reflected:

    clamped            y_{-1} =  y_1   (y = y_x = 0)
    simply_supported   y_{-1} = -y_1   (y = y_xx = 0)

The operators are assembled once as sparse matrices so their transposes are
exact adjoints in the discrete inner product <f, g> = h sum f g.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property, lru_cache

import numpy as np
import scipy.sparse as sp
from scipy.linalg import cho_solve_banded, cholesky_banded

BCS = ("clamped", "simply_supported")


@dataclass(frozen=True)
class Grid:
    N: int
    bc: str = "clamped"

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 4:
            raise ValueError(f"N must be an integer >= 4, got {self.N}")
        if self.bc not in BCS:
            raise ValueError(f"bc must be one of {BCS}, got {self.bc!r}")

    @property
    def h(self) -> float:
        return 1.0 / self.N

    @property
    def n(self) -> int:
        """Number of interior unknowns."""
        return self.N - 1

    @cached_property
    def x(self) -> np.ndarray:
        return np.arange(1, self.N) * self.h

    @property
    def ghost_sign(self) -> float:
        return 1.0 if self.bc == "clamped" else -1.0

    def inner(self, f: np.ndarray, g: np.ndarray) -> np.ndarray:
        """Discrete L2 pairing along the last axis."""
        return self.h * np.sum(f * g, axis=-1)

    # -- matrices ---------------------------------------------------------

    @cached_property
    def D1(self) -> sp.csr_matrix:
        n, h = self.n, self.h
        return sp.diags([-np.ones(n - 1), np.ones(n - 1)], [-1, 1], format="csr") / (2 * h)

    @cached_property
    def D2(self) -> sp.csr_matrix:
        n, h = self.n, self.h
        return sp.diags(
            [np.ones(n - 1), -2 * np.ones(n), np.ones(n - 1)], [-1, 0, 1], format="csr"
        ) / h**2

    @cached_property
    def D4(self) -> sp.csr_matrix:
        n, h = self.n, self.h
        main = 6 * np.ones(n)
        corner = 6 + self.ghost_sign
        main[0] = main[-1] = corner
        diags = [np.ones(n - 2), -4 * np.ones(n - 1), main, -4 * np.ones(n - 1), np.ones(n - 2)]
        return sp.diags(diags, [-2, -1, 0, 1, 2], format="csr") / h**4

    @cached_property
    def D2_full(self) -> sp.csr_matrix:
        """Second difference including the two boundary nodes.

        Rows are nodes 0..N; the boundary rows use the ghost reflection. With
        trapezoid weights this gives <D4 f, g> = <D2_full f, D2_full g>.
        """
        n, h = self.n, self.h
        rows = [sp.csr_matrix(([(1 + self.ghost_sign) / h**2], ([0], [0])), shape=(1, n))]
        rows.append(self.D2)
        rows.append(sp.csr_matrix(([(1 + self.ghost_sign) / h**2], ([0], [n - 1])), shape=(1, n)))
        return sp.vstack(rows, format="csr")

    @cached_property
    def trapezoid(self) -> np.ndarray:
        w = np.full(self.N + 1, self.h)
        w[0] = w[-1] = self.h / 2
        return w

    # -- operators on (..., n) arrays --------------------------------------

    def d1(self, f: np.ndarray) -> np.ndarray:
        return _apply(self.D1, f)

    def d2(self, f: np.ndarray) -> np.ndarray:
        return _apply(self.D2, f)

    def d4(self, f: np.ndarray) -> np.ndarray:
        return _apply(self.D4, f)

    def d1_t(self, f: np.ndarray) -> np.ndarray:
        return _apply(self.D1.T.tocsr(), f)

    def d2_t(self, f: np.ndarray) -> np.ndarray:
        return _apply(self.D2.T.tocsr(), f)

    def implicit_solve(self, b: np.ndarray, dt: float) -> np.ndarray:
        """Solve (I + dt D4) x = b along the last axis."""
        if not dt > 0:
            raise ValueError("dt must be positive")
        cb = _factor(self, float(dt))
        b = np.asarray(b, dtype=float)
        flat = b.reshape(-1, self.n).T
        return cho_solve_banded((cb, False), flat, check_finite=False).T.reshape(b.shape)

    def dense(self, which: str) -> np.ndarray:
        return getattr(self, which).toarray()


def _apply(M: sp.csr_matrix, f: np.ndarray) -> np.ndarray:
    f = np.asarray(f, dtype=float)
    if f.ndim == 1:
        return M @ f
    return (M @ f.reshape(-1, f.shape[-1]).T).T.reshape(f.shape)


@lru_cache(maxsize=64)
def _factor(grid: Grid, dt: float) -> np.ndarray:
    A = (sp.identity(grid.n) + dt * grid.D4).todia()
    ab = np.zeros((3, grid.n))
    for off, row in zip(A.offsets, A.data):
        if off >= 0:
            # upper banded storage: ab[2 - off, j] = A[j - off, j]
            ab[2 - off, off:] = row[off:]
    cb = cholesky_banded(ab, lower=False)
    cb.setflags(write=False)
    return cb
