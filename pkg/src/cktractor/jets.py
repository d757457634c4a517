"""Truncated multivariate Taylor arithmetic with exact propagation of derivatives.

All chart-level calculus (Christoffels, curvature, covariant derivatives of
sections) runs on ``Jet`` objects: numpy arrays whose trailing axis holds the
Taylor coefficients of every tensor component around a chart point.  Products
convolve the coefficient axis, so derivative jets are exact up to the stated
truncation order; there is no finite-difference error anywhere.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from itertools import combinations_with_replacement
from math import factorial

import numpy as np
from scipy.sparse import csr_matrix


@lru_cache(maxsize=None)
def monomials(nvars: int, order: int) -> tuple:
    """Exponent tuples of total degree <= order, sorted by (degree, lex).

    Sorting by degree first makes truncation to a lower order a prefix slice.
    """
    out = []
    for deg in range(order + 1):
        block = sorted(
            tuple(np.bincount(c, minlength=nvars)) if c else (0,) * nvars
            for c in combinations_with_replacement(range(nvars), deg)
        )
        out.extend(tuple(int(e) for e in exps) for exps in block)
    return tuple(out)


@lru_cache(maxsize=None)
def _index_of(nvars: int, order: int) -> dict:
    return {m: i for i, m in enumerate(monomials(nvars, order))}


@lru_cache(maxsize=None)
def _count_upto(nvars: int, order: int) -> int:
    return len(monomials(nvars, order))


@lru_cache(maxsize=None)
def _mul_table(nvars: int, order: int):
    """(i, j) -> o index triples for coefficient convolution, as a sparse scatter."""
    mons = monomials(nvars, order)
    idx = _index_of(nvars, order)
    ii, jj, oo = [], [], []
    for i, mi in enumerate(mons):
        di = sum(mi)
        for j, mj in enumerate(mons):
            if di + sum(mj) > order:
                continue
            ii.append(i)
            jj.append(j)
            oo.append(idx[tuple(a + b for a, b in zip(mi, mj))])
    ii = np.asarray(ii)
    jj = np.asarray(jj)
    npairs = len(ii)
    scatter = csr_matrix(
        (np.ones(npairs), (np.arange(npairs), np.asarray(oo))),
        shape=(npairs, len(mons)),
    )
    return ii, jj, scatter


@lru_cache(maxsize=None)
def _deriv_table(nvars: int, order: int, var: int):
    """Sparse matrix mapping coefficients of f to coefficients of d f / d x_var."""
    mons = monomials(nvars, order)
    lower = _index_of(nvars, order - 1) if order > 0 else {}
    rows, cols, vals = [], [], []
    for i, m in enumerate(mons):
        if m[var] == 0:
            continue
        tgt = list(m)
        tgt[var] -= 1
        rows.append(i)
        cols.append(lower[tuple(tgt)])
        vals.append(float(m[var]))
    return csr_matrix(
        (vals, (rows, cols)),
        shape=(len(mons), _count_upto(nvars, order - 1) if order > 0 else 1),
    )


class Jet:
    """Tensor-valued truncated Taylor expansion around a point.

    ``data`` has shape ``tensor_shape + (ncoeffs,)``; the coefficient of the
    monomial ``prod dx_i**a_i`` is stored divided by nothing (plain Taylor
    coefficients include the 1/alpha! factors already, i.e. f = sum c_alpha dx^alpha).
    """

    __slots__ = ("data", "nvars", "order")

    # keep numpy from consuming Jet operands elementwise; reflected ops run instead
    __array_ufunc__ = None

    def __init__(self, data: np.ndarray, nvars: int, order: int):
        self.data = np.asarray(data, dtype=float)
        self.nvars = nvars
        self.order = order
        if self.data.shape[-1] != _count_upto(nvars, order):
            raise ValueError("coefficient axis does not match declared order")

    # -- constructors ------------------------------------------------------

    @staticmethod
    def constant(values: np.ndarray, nvars: int, order: int) -> "Jet":
        values = np.asarray(values, dtype=float)
        data = np.zeros(values.shape + (_count_upto(nvars, order),))
        data[..., 0] = values
        return Jet(data, nvars, order)

    @staticmethod
    def coordinates(x0: np.ndarray, order: int) -> list:
        """Jets of the coordinate functions x_i at the point x0."""
        x0 = np.asarray(x0, dtype=float)
        n = x0.shape[0]
        out = []
        for i in range(n):
            data = np.zeros(_count_upto(n, order))
            data[0] = x0[i]
            if order >= 1:
                e = tuple(1 if j == i else 0 for j in range(n))
                data[_index_of(n, order)[e]] = 1.0
            out.append(Jet(data, n, order))
        return out

    # -- basic structure ---------------------------------------------------

    @property
    def shape(self):
        return self.data.shape[:-1]

    def value(self) -> np.ndarray:
        """Order-zero part: the tensor at the expansion point."""
        return np.array(self.data[..., 0])

    def truncate(self, order: int) -> "Jet":
        if order >= self.order:
            return self
        return Jet(self.data[..., : _count_upto(self.nvars, order)], self.nvars, order)

    def transpose(self, axes) -> "Jet":
        axes = tuple(axes) + (self.data.ndim - 1,)
        return Jet(self.data.transpose(axes), self.nvars, self.order)

    def __getitem__(self, key) -> "Jet":
        if not isinstance(key, tuple):
            key = (key,)
        return Jet(self.data[key + (slice(None),)], self.nvars, self.order)

    # -- linear operations -------------------------------------------------

    def __add__(self, other):
        a, b = _align(self, other)
        return Jet(a.data + b.data, a.nvars, a.order)

    __radd__ = __add__

    def __sub__(self, other):
        a, b = _align(self, other)
        return Jet(a.data - b.data, a.nvars, a.order)

    def __rsub__(self, other):
        a, b = _align(self, other)
        return Jet(b.data - a.data, a.nvars, a.order)

    def __neg__(self):
        return Jet(-self.data, self.nvars, self.order)

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return Jet(self.data * other, self.nvars, self.order)
        a, b = _align(self, other)
        ii, jj, scatter = _mul_table(a.nvars, a.order)
        prod = a.data[..., ii] * b.data[..., jj]
        flat = prod.reshape(-1, prod.shape[-1]) @ scatter
        shape = np.broadcast_shapes(a.shape, b.shape)
        return Jet(np.asarray(flat).reshape(shape + (flat.shape[-1],)), a.nvars, a.order)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, (int, float)):
            return Jet(self.data / other, self.nvars, self.order)
        return self * _align(self, other)[1].inv()

    def __rtruediv__(self, other):
        return self.inv() * other

    # -- calculus ----------------------------------------------------------

    def deriv(self, var: int) -> "Jet":
        """Partial derivative; the result is valid to one order less."""
        if self.order == 0:
            raise ValueError("cannot differentiate an order-0 jet")
        mat = _deriv_table(self.nvars, self.order, var)
        flat = self.data.reshape(-1, self.data.shape[-1]) @ mat
        return Jet(np.asarray(flat).reshape(self.shape + (flat.shape[-1],)), self.nvars, self.order - 1)

    def grad(self) -> "Jet":
        """Stack all partials along a new leading axis."""
        return stack([self.deriv(c) for c in range(self.nvars)])

    # -- nonlinear scalar functions ----------------------------------------

    def _split(self):
        head = self.data[..., :1]
        nil = np.concatenate([np.zeros_like(head), self.data[..., 1:]], axis=-1)
        return self.data[..., 0], Jet(nil, self.nvars, self.order)

    def _series(self, coeffs) -> "Jet":
        """sum coeffs[j] * N^j for the nilpotent part N; coeffs may be arrays."""
        _, nil = self._split()
        acc = Jet.constant(np.broadcast_to(coeffs[0], self.shape).copy(), self.nvars, self.order)
        power = None
        for j in range(1, self.order + 1):
            power = nil if power is None else power * nil
            acc = acc + power * Jet.constant(np.broadcast_to(coeffs[j], self.shape).copy(), self.nvars, self.order)
        return acc

    def exp(self) -> "Jet":
        v, _ = self._split()
        ev = np.exp(v)
        return self._series([ev / factorial(j) for j in range(self.order + 1)])

    def sin(self) -> "Jet":
        v, _ = self._split()
        table = [np.sin(v), np.cos(v), -np.sin(v), -np.cos(v)]
        return self._series([table[j % 4] / factorial(j) for j in range(self.order + 1)])

    def cos(self) -> "Jet":
        v, _ = self._split()
        table = [np.cos(v), -np.sin(v), -np.cos(v), np.sin(v)]
        return self._series([table[j % 4] / factorial(j) for j in range(self.order + 1)])

    def inv(self) -> "Jet":
        v, _ = self._split()
        if np.any(np.abs(v) < 1e-300):
            raise ZeroDivisionError("jet with vanishing value part")
        return self._series([(-1.0) ** j / v ** (j + 1) for j in range(self.order + 1)])

    def powi(self, e: int) -> "Jet":
        if e == 0:
            return Jet.constant(np.ones(self.shape), self.nvars, self.order)
        base = self if e > 0 else self.inv()
        out = base
        for _ in range(abs(e) - 1):
            out = out * base
        return out


def _align(a, b):
    """Promote scalars/arrays to jets and truncate both to the common order."""
    if not isinstance(a, Jet) and not isinstance(b, Jet):
        raise TypeError("at least one operand must be a Jet")
    if not isinstance(b, Jet):
        b = Jet.constant(np.asarray(b, dtype=float), a.nvars, a.order)
    if not isinstance(a, Jet):
        a = Jet.constant(np.asarray(a, dtype=float), b.nvars, b.order)
    order = min(a.order, b.order)
    return a.truncate(order), b.truncate(order)


def stack(jets: list) -> Jet:
    order = min(j.order for j in jets)
    data = np.stack([j.truncate(order).data for j in jets], axis=0)
    return Jet(data, jets[0].nvars, order)


def jet_einsum(spec: str, a: Jet, b: Jet) -> Jet:
    """einsum over tensor axes with convolution of the coefficient axes.

    ``spec`` refers to the tensor axes only; the coefficient axis is handled
    internally (appended as a broadcast pair axis, then scattered by degree).
    """
    lhs, rhs = spec.split("->")
    sa, sb = lhs.split(",")
    order = min(a.order, b.order)
    a = a.truncate(order)
    b = b.truncate(order)
    ii, jj, scatter = _mul_table(a.nvars, order)
    pa = a.data[..., ii]
    pb = b.data[..., jj]
    out = np.einsum(f"{sa}P,{sb}P->{rhs}P", pa, pb)
    flat = out.reshape(-1, out.shape[-1]) @ scatter
    return Jet(np.asarray(flat).reshape(out.shape[:-1] + (flat.shape[-1],)), a.nvars, order)


def jet_matrix_inverse(g: Jet) -> Jet:
    """Inverse of a square-matrix jet by Newton iteration (exact in finitely many steps)."""
    g0 = g.value()
    x = Jet.constant(np.linalg.inv(g0), g.nvars, g.order)
    steps = 1
    while (1 << steps) < g.order + 1:
        steps += 1
    eye2 = 2.0 * np.eye(g0.shape[0])
    for _ in range(steps + 1):
        gx = jet_einsum("ab,bc->ac", g, x)
        x = jet_einsum("ab,bc->ac", x, Jet.constant(eye2, g.nvars, g.order) - gx)
    return x
