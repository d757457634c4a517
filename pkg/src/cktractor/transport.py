"""Parallel transport of the deformed tractor connection and solution counting.

The transport equation along a curve x(t) is dV/dt = -x'(t)^c M_c(x) V where
M_c is the reduced matrix of the covariant-derivative terms other than the
coordinate derivative (Christoffel corrections, the algebraic tractor
couplings, and the deformation).  Loops are integrated with an adaptive
4th(5th)-order Runge-Kutta scheme; the joint fixed space of all loop
transports, measured by small singular values of the stacked (T - I), counts
the parallel sections.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import comb

import numpy as np
from scipy.integrate import solve_ivp

from .bgg import chain_to_vec, reduced_dim, vec_to_chain
from .charts import MetricChart
from .deform import deformation_for
from .tractor import ChainElement, TractorSection, form_tractor_connection
from .jets import Jet


def fiber_dim(n: int, k: int) -> int:
    return reduced_dim(n, k, 0)


def model_solution_dim(n: int, k: int) -> int:
    """Solution dimension on the conformally flat model: dim Lambda^{k+1} R^{n+2}."""
    return comb(n + 2, k + 1)


def section_to_vec(s: TractorSection) -> np.ndarray:
    return chain_to_vec(ChainElement.from_section(s))


def vec_to_section(v: np.ndarray, n: int, k: int) -> TractorSection:
    return vec_to_chain(v, n, k, 0).as_section()


def connection_matrices(chart: MetricChart, k: int, x, deformed: bool = True):
    """Reduced matrices M_c(x) with nabla_c = d_c + M_c (plus Psi if deformed)."""
    n = chart.n
    pack = chart.pack(x, order=3)
    psi = deformation_for(pack, k, stage=2) if deformed else None
    dim = fiber_dim(n, k)
    cols = []
    for i in range(dim):
        e = np.zeros(dim)
        e[i] = 1.0
        sec = vec_to_section(e, n, k)
        jet_sec = sec.map(lambda a: Jet.constant(a, n, 1))
        der = form_tractor_connection(pack, jet_sec)
        if psi is not None:
            der = der + psi(sec)
        cols.append(der.value())
    mats = np.zeros((n, dim, dim))
    for i, der in enumerate(cols):
        for c in range(n):
            piece = TractorSection(
                n, k,
                sigma=np.asarray(der.sigma)[c], phi=np.asarray(der.phi)[c],
                mu=np.asarray(der.mu)[c], rho=np.asarray(der.rho)[c],
            )
            mats[c, :, i] = section_to_vec(piece)
    return mats


def transport_loop(chart: MetricChart, k: int, loop, rtol=1e-10, atol=1e-12,
                   deformed: bool = True) -> np.ndarray:
    """Transport matrix around a piecewise-linear loop (list of vertices)."""
    n = chart.n
    dim = fiber_dim(n, k)
    T = np.eye(dim)
    vertices = [np.asarray(v, dtype=float) for v in loop]
    for a, b in zip(vertices[:-1], vertices[1:]):
        direction = b - a

        def rhs(t, vflat):
            x = a + t * direction
            mats = connection_matrices(chart, k, x, deformed=deformed)
            M = np.einsum("c,cij->ij", direction, mats)
            return (-M @ vflat.reshape(dim, dim)).reshape(-1)

        sol = solve_ivp(rhs, (0.0, 1.0), T.reshape(-1), method="RK45",
                        rtol=rtol, atol=atol, dense_output=False)
        if not sol.success:
            raise RuntimeError(f"transport integration failed: {sol.message}")
        T = sol.y[:, -1].reshape(dim, dim)
    return T


def coordinate_plane_loops(n: int, size: float = 0.5):
    """Axis-aligned rectangles of the given size in every coordinate 2-plane
    through the chart origin."""
    loops = []
    for i in range(n):
        for j in range(i + 1, n):
            ei = np.zeros(n)
            ej = np.zeros(n)
            ei[i] = size
            ej[j] = size
            o = np.zeros(n)
            loops.append([o, ei, ei + ej, ej, o])
    return loops


@dataclass
class HolonomyResult:
    n: int
    k: int
    fiber_dim: int
    expected_dim: int
    measured_dim: int
    singular_values: np.ndarray
    max_transport_defect: float  # max |T - I| over loops (flat model diagnostics)

    @property
    def matches_model(self) -> bool:
        return self.measured_dim == self.expected_dim


def holonomy_solution_count(chart: MetricChart, k: int, loops=None, sv_threshold=1e-5,
                            rtol=1e-10, atol=1e-12, deformed: bool = True) -> HolonomyResult:
    """Dimension of the joint fixed space of the loop transports."""
    n = chart.n
    loops = coordinate_plane_loops(n) if loops is None else loops
    dim = fiber_dim(n, k)
    stacked = []
    defect = 0.0
    for loop in loops:
        T = transport_loop(chart, k, loop, rtol=rtol, atol=atol, deformed=deformed)
        stacked.append(T - np.eye(dim))
        defect = max(defect, float(np.abs(T - np.eye(dim)).max()))
    sv = np.linalg.svd(np.concatenate(stacked, axis=0), compute_uv=False)
    measured = int(np.sum(sv < sv_threshold))
    return HolonomyResult(
        n=n, k=k, fiber_dim=dim, expected_dim=model_solution_dim(n, k),
        measured_dim=measured, singular_values=sv, max_transport_defect=defect,
    )


# ---------------------------------------------------------------------------
# Flat-model parallel sections (exact): conformal Killing forms on flat space
# ---------------------------------------------------------------------------


def flat_connection_matrices(n: int, k: int) -> np.ndarray:
    """The constant reduced matrices of the tractor connection on flat space."""
    from .charts import flat_chart

    return connection_matrices(flat_chart(n, jet_order=3), k, np.zeros(n), deformed=False)


def flat_parallel_section_field(n: int, k: int, v0: np.ndarray):
    """The parallel section through v0 at the origin, as an exact polynomial.

    The flat connection matrices are grading-lowering, hence nilpotent of
    order 3, so s(x) = exp(-x^c M_c) v0 is a quadratic polynomial in x.
    """
    mats = flat_connection_matrices(n, k)
    dim = fiber_dim(n, k)

    def section_at(x, order: int) -> TractorSection:
        x = np.asarray(x, dtype=float)
        coords = Jet.coordinates(x, order)
        # exp(-x.M) v0 = v0 - x^c M_c v0 + 1/2 x^c x^d M_c M_d v0 (nilpotent)
        acc = [Jet.constant(np.array(val), n, order) for val in v0]
        first = np.einsum("cij,j->ci", mats, v0)
        second = np.einsum("cij,dj->cdi", mats, np.einsum("dij,j->di", mats, v0))
        comp = []
        for i in range(dim):
            term = Jet.constant(np.array(v0[i]), n, order)
            for c in range(n):
                term = term - coords[c] * float(first[c, i])
            for c in range(n):
                for d in range(n):
                    term = term + coords[c] * coords[d] * (0.5 * float(second[c, d, i]))
            comp.append(term)
        # reassemble slot jets from reduced components
        from .bgg import _block_layout, _slot_blocks
        from .tractor import slot_ranks

        slots = {}
        offset = 0
        r = slot_ranks(k)
        for name, blocks in _slot_blocks(k, 0).items():
            d_, _, sflat, sred, ssign = _block_layout(n, blocks)
            shape = (n,) * r[name]
            size = int(np.prod(shape)) if shape else 1
            data = np.zeros((size, comp[0].data.shape[-1]))
            for pos, red, sign in zip(sflat, sred, ssign):
                data[pos] += sign * comp[offset + red].data
            slots[name] = Jet(data.reshape(shape + (comp[0].data.shape[-1],)), n, order)
            offset += d_
        return TractorSection(n, k, **slots)

    return section_at
