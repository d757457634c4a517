"""Dense multilinear algebra for weighted tensors.

Components are plain numpy arrays (one axis of extent n per index) or ``Jet``
arrays carrying derivative coefficients on a trailing axis.  All bracket
operations are normalized: (anti)symmetrization averages over permutations.
Conformal weights are metadata; the numbers always live in a fixed metric
trivialization and the weight only controls the e^{w f} factor applied when a
different scale is chosen.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import permutations

import numpy as np

from .jets import Jet, jet_einsum

MAX_DIM = 8
MAX_RANK = 6


class TensorError(ValueError):
    pass


def ein(spec: str, a, b):
    """einsum dispatching on operand type; mixed Jet/ndarray operands promote."""
    if isinstance(a, Jet) or isinstance(b, Jet):
        if not isinstance(a, Jet):
            a = Jet.constant(np.asarray(a, dtype=float), b.nvars, b.order)
        if not isinstance(b, Jet):
            b = Jet.constant(np.asarray(b, dtype=float), a.nvars, a.order)
        return jet_einsum(spec, a, b)
    return np.einsum(spec, a, b)


def _permsign(perm) -> int:
    sign = 1
    seen = [False] * len(perm)
    for i in range(len(perm)):
        if seen[i]:
            continue
        j, length = i, 0
        while not seen[j]:
            seen[j] = True
            j = perm[j]
            length += 1
        if length % 2 == 0:
            sign = -sign
    return sign


def _permute_axes(x, axes, perm):
    ndim = len(x.shape)
    order = list(range(ndim))
    for pos, axis in enumerate(axes):
        order[axis] = axes[perm[pos]]
    return x.transpose(order)


def sym(x, axes):
    """Normalized symmetrization over the listed axes."""
    axes = tuple(axes)
    if len(axes) < 2:
        return x
    total = None
    for perm in permutations(range(len(axes))):
        term = _permute_axes(x, axes, perm)
        total = term if total is None else total + term
    return total * (1.0 / _fact(len(axes)))


def alt(x, axes):
    """Normalized antisymmetrization over the listed axes."""
    axes = tuple(axes)
    if len(axes) < 2:
        return x
    total = None
    for perm in permutations(range(len(axes))):
        term = _permute_axes(x, axes, perm)
        s = _permsign(perm)
        term = term if s > 0 else -term
        total = term if total is None else total + term
    return total * (1.0 / _fact(len(axes)))


def _fact(m: int) -> int:
    out = 1
    for i in range(2, m + 1):
        out *= i
    return out


# ---------------------------------------------------------------------------
# Public weighted-tensor surface
# ---------------------------------------------------------------------------

COVARIANT = "covariant"
CONTRAVARIANT = "contravariant"


@dataclass(frozen=True)
class IndexSpec:
    """Index structure of a weighted tensor: variances, antisymmetric blocks, weight."""

    positions: tuple  # entries: COVARIANT or CONTRAVARIANT
    antisym_blocks: tuple = field(default_factory=tuple)  # tuples of position indices
    weight: int = 0

    def __post_init__(self):
        if not isinstance(self.weight, int):
            raise TensorError("conformal weight must be an integer")
        for v in self.positions:
            if v not in (COVARIANT, CONTRAVARIANT):
                raise TensorError(f"bad variance {v!r}")
        if len(self.positions) > MAX_RANK:
            raise TensorError(f"rank {len(self.positions)} exceeds supported maximum {MAX_RANK}")
        seen = set()
        for block in self.antisym_blocks:
            if list(block) != sorted(block) or len(set(block)) != len(block):
                raise TensorError("antisym block positions must be strictly increasing")
            for p in block:
                if not 0 <= p < len(self.positions):
                    raise TensorError("antisym block position out of range")
                if p in seen:
                    raise TensorError("antisym blocks must be disjoint")
                seen.add(p)

    @property
    def rank(self) -> int:
        return len(self.positions)


def _antisym_residual(data: np.ndarray, blocks) -> float:
    scale = np.abs(data).max()
    if scale == 0.0:
        return 0.0
    worst = 0.0
    for block in blocks:
        proj = alt(data, block)
        worst = max(worst, np.abs(proj - data).max() / scale)
    return worst


@dataclass
class WeightedTensorField:
    """Dense tensor components at a chart point with conformal-weight bookkeeping."""

    spec: IndexSpec
    data: np.ndarray

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=float)
        if self.data.ndim != self.spec.rank:
            raise TensorError("component array rank does not match index spec")
        if self.data.ndim:
            n = self.data.shape[0]
            if n > MAX_DIM:
                raise TensorError(f"dimension {n} exceeds supported maximum {MAX_DIM}")
            if any(s != n for s in self.data.shape):
                raise TensorError("all index extents must equal the chart dimension")
        if _antisym_residual(self.data, self.spec.antisym_blocks) > 1e-12:
            raise TensorError("components violate declared antisymmetry")

    @property
    def n(self) -> int:
        return self.data.shape[0] if self.data.ndim else 0

    def symmetrize(self, positions) -> "WeightedTensorField":
        _check_positions(self.spec, positions)
        out = sym(self.data, positions)
        blocks = tuple(b for b in self.spec.antisym_blocks if not set(b) & set(positions))
        return WeightedTensorField(IndexSpec(self.spec.positions, blocks, self.spec.weight), out)

    def antisymmetrize(self, positions) -> "WeightedTensorField":
        _check_positions(self.spec, positions)
        out = alt(self.data, positions)
        blocks = tuple(b for b in self.spec.antisym_blocks if not set(b) & set(positions))
        blocks = blocks + (tuple(sorted(positions)),) if len(positions) >= 2 else blocks
        return WeightedTensorField(IndexSpec(self.spec.positions, blocks, self.spec.weight), out)

    def trace(self, pos1: int, pos2: int, metric=None) -> "WeightedTensorField":
        """Contract two slots; covariant pairs need the inverse conformal metric
        (weight -2), contravariant pairs the conformal metric (+2), mixed pairs none."""
        if pos1 == pos2:
            raise TensorError("cannot trace a position against itself")
        _check_positions(self.spec, (pos1, pos2))
        v1, v2 = self.spec.positions[pos1], self.spec.positions[pos2]
        dweight = 0
        if v1 == v2:
            if metric is None:
                raise TensorError("tracing two indices of equal variance requires a metric")
            dweight = -2 if v1 == COVARIANT else 2
            lowered = np.tensordot(self.data, metric, axes=([pos1], [0]))
            # tensordot moved pos1 to the last axis; bring it back
            order = list(range(lowered.ndim - 1))
            order.insert(pos1, lowered.ndim - 1)
            data = lowered.transpose(order)
        else:
            data = self.data
        p1, p2 = sorted((pos1, pos2))
        data = np.trace(data, axis1=p1, axis2=p2)
        positions = tuple(v for i, v in enumerate(self.spec.positions) if i not in (p1, p2))
        remap = {}
        j = 0
        for i in range(self.spec.rank):
            if i in (p1, p2):
                continue
            remap[i] = j
            j += 1
        blocks = []
        for block in self.spec.antisym_blocks:
            kept = tuple(remap[p] for p in block if p in remap)
            if len(kept) >= 2:
                blocks.append(kept)
        return WeightedTensorField(
            IndexSpec(positions, tuple(blocks), self.spec.weight + dweight), data
        )

    def raise_lower(self, position: int, metric: np.ndarray) -> "WeightedTensorField":
        """Flip the variance at one slot with the (inverse) conformal metric.

        Raising shifts the weight by -2, lowering by +2, so the moved object
        keeps consistent density bookkeeping.
        """
        _check_positions(self.spec, (position,))
        variance = self.spec.positions[position]
        moved = np.tensordot(self.data, metric, axes=([position], [0]))
        order = list(range(moved.ndim - 1))
        order.insert(position, moved.ndim - 1)
        data = moved.transpose(order)
        positions = list(self.spec.positions)
        positions[position] = CONTRAVARIANT if variance == COVARIANT else COVARIANT
        dweight = -2 if variance == COVARIANT else 2
        return WeightedTensorField(
            IndexSpec(tuple(positions), self.spec.antisym_blocks, self.spec.weight + dweight),
            data,
        )

    def rescaled(self, factor: float) -> "WeightedTensorField":
        """Components in the scale e^{2f} g, given factor = e^{f} at the point."""
        return WeightedTensorField(self.spec, self.data * factor**self.spec.weight)


def _check_positions(spec: IndexSpec, positions):
    if len(set(positions)) != len(tuple(positions)):
        raise TensorError("positions must be distinct")
    for p in positions:
        if not isinstance(p, (int, np.integer)) or not 0 <= p < spec.rank:
            raise TensorError(f"position {p} invalid for rank {spec.rank}")
