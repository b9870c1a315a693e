"""Bivariate Taylor jets: all mixed partials d_t^a d_x^b up to fixed orders.

A jet stores ``data[a, b] = d_t^a d_x^b f`` at a batch of sample points.
Products use the Leibniz rule, so every derivative of an expression built
from jets is exact up to rounding. Orders shrink where information runs out:
a product keeps the smaller order of its factors, a derivative lowers the
order of its axis by one.
"""

from __future__ import annotations

from math import comb

import numpy as np


class Jet:
    __slots__ = ("data",)

    def __init__(self, data: np.ndarray):
        self.data = data

    @property
    def ot(self) -> int:
        return self.data.shape[0] - 1

    @property
    def ox(self) -> int:
        return self.data.shape[1] - 1

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape[2:]

    @property
    def val(self) -> np.ndarray:
        return self.data[0, 0]

    def __getitem__(self, ab: tuple[int, int]) -> np.ndarray:
        a, b = ab
        if a > self.ot or b > self.ox:
            raise IndexError(f"derivative ({a}, {b}) beyond jet orders ({self.ot}, {self.ox})")
        return self.data[a, b]

    # -- constructors ------------------------------------------------------

    @classmethod
    def const(cls, c, ot: int, ox: int, shape) -> "Jet":
        d = np.zeros((ot + 1, ox + 1) + tuple(shape))
        d[0, 0] = c
        return cls(d)

    @classmethod
    def var_t(cls, t: np.ndarray, ot: int, ox: int) -> "Jet":
        d = np.zeros((ot + 1, ox + 1) + t.shape)
        d[0, 0] = t
        if ot >= 1:
            d[1, 0] = 1.0
        return cls(d)

    @classmethod
    def var_x(cls, x: np.ndarray, ot: int, ox: int) -> "Jet":
        d = np.zeros((ot + 1, ox + 1) + x.shape)
        d[0, 0] = x
        if ox >= 1:
            d[0, 1] = 1.0
        return cls(d)

    @classmethod
    def from_x_derivatives(cls, derivs: list[np.ndarray], ot: int = 0) -> "Jet":
        """Jet of a time-independent function from its x-derivative arrays."""
        shape = np.shape(derivs[0])
        d = np.zeros((ot + 1, len(derivs)) + shape)
        for b, v in enumerate(derivs):
            d[0, b] = v
        return cls(d)

    # -- algebra -----------------------------------------------------------

    def trunc(self, ot: int, ox: int) -> "Jet":
        return Jet(self.data[: ot + 1, : ox + 1])

    def _lift(self, other) -> "Jet":
        if isinstance(other, Jet):
            return other
        return Jet.const(other, self.ot, self.ox, self.shape)

    def __add__(self, other) -> "Jet":
        o = self._lift(other)
        at, ax = min(self.ot, o.ot), min(self.ox, o.ox)
        return Jet(self.data[: at + 1, : ax + 1] + o.data[: at + 1, : ax + 1])

    __radd__ = __add__

    def __neg__(self) -> "Jet":
        return Jet(-self.data)

    def __sub__(self, other) -> "Jet":
        return self + (-self._lift(other))

    def __rsub__(self, other) -> "Jet":
        return (-self) + other

    def __mul__(self, other) -> "Jet":
        if not isinstance(other, Jet):
            return Jet(self.data * other)
        at, ax = min(self.ot, other.ot), min(self.ox, other.ox)
        f, g = self.data, other.data
        out = np.zeros((at + 1, ax + 1) + np.broadcast_shapes(self.shape, other.shape))
        for a in range(at + 1):
            for b in range(ax + 1):
                acc = out[a, b]
                for i in range(a + 1):
                    ci = comb(a, i)
                    for j in range(b + 1):
                        acc += (ci * comb(b, j)) * f[i, j] * g[a - i, b - j]
        return Jet(out)

    __rmul__ = __mul__

    def __pow__(self, k: int) -> "Jet":
        if k < 1 or int(k) != k:
            raise ValueError("only positive integer powers")
        out = self
        for _ in range(k - 1):
            out = out * self
        return out

    def dx(self, k: int = 1) -> "Jet":
        if k > self.ox:
            raise ValueError("not enough x-order for this derivative")
        return Jet(self.data[:, k:])

    def dt(self, k: int = 1) -> "Jet":
        if k > self.ot:
            raise ValueError("not enough t-order for this derivative")
        return Jet(self.data[k:])

    # -- elementary functions ---------------------------------------------

    def exp(self) -> "Jet":
        f = self.data
        E = np.zeros_like(f)
        E[0, 0] = np.exp(f[0, 0])
        # E_x = f_x E and E_t = f_t E, expanded with Leibniz
        for a in range(self.ot + 1):
            for b in range(self.ox + 1):
                if a == 0 and b == 0:
                    continue
                if b > 0:
                    bb = b - 1
                    acc = np.zeros(self.shape)
                    for i in range(a + 1):
                        for j in range(bb + 1):
                            acc += comb(a, i) * comb(bb, j) * f[i, j + 1] * E[a - i, bb - j]
                else:
                    aa = a - 1
                    acc = np.zeros(self.shape)
                    for i in range(aa + 1):
                        acc += comb(aa, i) * f[i + 1, 0] * E[aa - i, 0]
                E[a, b] = acc
        return Jet(E)

    def sincos(self) -> tuple["Jet", "Jet"]:
        f = self.data
        S = np.zeros_like(f)
        C = np.zeros_like(f)
        S[0, 0] = np.sin(f[0, 0])
        C[0, 0] = np.cos(f[0, 0])
        # S' = f' C, C' = -f' S
        for a in range(self.ot + 1):
            for b in range(self.ox + 1):
                if a == 0 and b == 0:
                    continue
                s_acc = np.zeros(self.shape)
                c_acc = np.zeros(self.shape)
                if b > 0:
                    bb = b - 1
                    for i in range(a + 1):
                        for j in range(bb + 1):
                            w = comb(a, i) * comb(bb, j) * f[i, j + 1]
                            s_acc += w * C[a - i, bb - j]
                            c_acc -= w * S[a - i, bb - j]
                else:
                    aa = a - 1
                    for i in range(aa + 1):
                        w = comb(aa, i) * f[i + 1, 0]
                        s_acc += w * C[aa - i, 0]
                        c_acc -= w * S[aa - i, 0]
                S[a, b] = s_acc
                C[a, b] = c_acc
        return Jet(S), Jet(C)

    def sin(self) -> "Jet":
        return self.sincos()[0]

    def cos(self) -> "Jet":
        return self.sincos()[1]
