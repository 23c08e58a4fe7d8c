"""Dense bivariate polynomials: the coefficient arithmetic behind exact moments and
polynomial symplectic-potential corrections."""

from __future__ import annotations

import numpy as np
from numpy.polynomial import polynomial as npoly


def monomial_exponents(degree):
    """(i, j) exponent pairs with i + j <= degree, graded lexicographic order."""
    return [(t - j, j) for t in range(degree + 1) for j in range(t + 1)]


def n_coeffs(degree):
    return (degree + 1) * (degree + 2) // 2


class Polynomial2D:
    """Polynomial in two variables stored as a dense array c[i, j] * x^i * y^j."""

    __slots__ = ("c",)

    def __init__(self, c):
        c = np.atleast_2d(np.asarray(c, dtype=float))
        if c.ndim != 2:
            raise ValueError("coefficient array must be 2-dimensional")
        self.c = c

    @classmethod
    def zero(cls):
        return cls(np.zeros((1, 1)))

    @classmethod
    def constant(cls, value):
        return cls(np.array([[float(value)]]))

    @classmethod
    def affine(cls, a0, a1, a2):
        c = np.zeros((2, 2))
        c[0, 0], c[1, 0], c[0, 1] = a0, a1, a2
        return cls(c)

    @classmethod
    def from_packed(cls, vec, degree):
        vec = np.asarray(vec, dtype=float)
        if vec.size != n_coeffs(degree):
            raise ValueError(f"expected {n_coeffs(degree)} coefficients, got {vec.size}")
        c = np.zeros((degree + 1, degree + 1))
        for k, (i, j) in enumerate(monomial_exponents(degree)):
            c[i, j] = vec[k]
        return cls(c)

    def packed(self, degree):
        """Coefficient vector over monomials of total degree <= degree."""
        out = np.zeros(n_coeffs(degree))
        for k, (i, j) in enumerate(monomial_exponents(degree)):
            if i < self.c.shape[0] and j < self.c.shape[1]:
                out[k] = self.c[i, j]
        return out

    @property
    def total_degree(self):
        nz = np.argwhere(self.c != 0.0)
        if nz.size == 0:
            return 0
        return int((nz[:, 0] + nz[:, 1]).max())

    def __call__(self, x, y):
        return npoly.polyval2d(np.asarray(x, dtype=float), np.asarray(y, dtype=float), self.c)

    def diff(self, dx=0, dy=0):
        c = self.c
        if dx:
            if dx >= c.shape[0]:
                return Polynomial2D.zero()
            c = npoly.polyder(c, m=dx, axis=0)
        if dy:
            if dy >= c.shape[1]:
                return Polynomial2D.zero()
            c = npoly.polyder(c, m=dy, axis=1)
        return Polynomial2D(c)

    def _binop(self, other, sign):
        oc = other.c if isinstance(other, Polynomial2D) else np.array([[float(other)]])
        m = max(self.c.shape[0], oc.shape[0])
        n = max(self.c.shape[1], oc.shape[1])
        out = np.zeros((m, n))
        out[: self.c.shape[0], : self.c.shape[1]] += self.c
        out[: oc.shape[0], : oc.shape[1]] += sign * oc
        return Polynomial2D(out)

    def __add__(self, other):
        return self._binop(other, 1.0)

    def __sub__(self, other):
        return self._binop(other, -1.0)

    def __neg__(self):
        return Polynomial2D(-self.c)

    def __mul__(self, other):
        if not isinstance(other, Polynomial2D):
            return Polynomial2D(self.c * float(other))
        a, b = self.c, other.c
        out = np.zeros((a.shape[0] + b.shape[0] - 1, a.shape[1] + b.shape[1] - 1))
        for i in range(a.shape[0]):
            for j in range(a.shape[1]):
                if a[i, j] != 0.0:
                    out[i : i + b.shape[0], j : j + b.shape[1]] += a[i, j] * b
        return Polynomial2D(out)

    __rmul__ = __mul__

    def compose_affine(self, B, t):
        """Polynomial q(y) = p(B @ y + t) for a 2x2 matrix B and shift t."""
        B = np.asarray(B, dtype=float)
        t = np.asarray(t, dtype=float)
        lin1 = Polynomial2D.affine(t[0], B[0, 0], B[0, 1])
        lin2 = Polynomial2D.affine(t[1], B[1, 0], B[1, 1])
        p1 = [Polynomial2D.constant(1.0)]
        p2 = [Polynomial2D.constant(1.0)]
        for _ in range(self.c.shape[0] - 1):
            p1.append(p1[-1] * lin1)
        for _ in range(self.c.shape[1] - 1):
            p2.append(p2[-1] * lin2)
        out = Polynomial2D.zero()
        for i in range(self.c.shape[0]):
            for j in range(self.c.shape[1]):
                if self.c[i, j] != 0.0:
                    out = out + (p1[i] * p2[j]) * self.c[i, j]
        return out

    def antiderivative_x(self):
        return Polynomial2D(npoly.polyint(self.c, m=1, axis=0))

    def __repr__(self):
        return f"Polynomial2D(degree<={self.total_degree})"
