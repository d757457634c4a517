"""Polynomial tensor fields: global analytic data for sections and test inputs.

A ``PolyTensorField`` stores exact monomial coefficients, so jets at any chart
point are re-expansions with no truncation error.  Seeded random fields back
the property tests and the CLI sampling.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .jets import Jet, monomials
from .tensor import alt
from .tractor import TractorSection, slot_ranks


@dataclass
class PolyTensorField:
    """sum_alpha coeffs[alpha] x^alpha with array-valued coefficients."""

    n: int
    degree: int
    coeffs: np.ndarray  # shape tensor_shape + (n_monomials,)

    def jet(self, x, order: int) -> Jet:
        coords = Jet.coordinates(np.asarray(x, dtype=float), order)
        mons = monomials(self.n, self.degree)
        acc = None
        for i, exps in enumerate(mons):
            term = Jet.constant(self.coeffs[..., i], self.n, order)
            for v, e in enumerate(exps):
                for _ in range(e):
                    term = term * coords[v]
            acc = term if acc is None else acc + term
        return acc

    def value(self, x) -> np.ndarray:
        return self.jet(x, 0).value()


def random_form_field(n: int, rank: int, rng, degree: int = 2, scale: float = 1.0) -> PolyTensorField:
    """Random polynomial field of antisymmetric rank-``rank`` tensors."""
    m = len(monomials(n, degree))
    coeffs = rng.normal(size=(n,) * rank + (m,)) * scale
    if rank >= 2:
        coeffs = alt(coeffs, range(rank))
    return PolyTensorField(n=n, degree=degree, coeffs=coeffs)


@dataclass
class SectionField:
    """Tractor section with polynomial slot fields."""

    n: int
    k: int
    sigma: PolyTensorField
    phi: PolyTensorField
    mu: PolyTensorField
    rho: PolyTensorField

    def at(self, x, order: int) -> TractorSection:
        return TractorSection(
            self.n, self.k,
            sigma=self.sigma.jet(x, order),
            phi=self.phi.jet(x, order),
            mu=self.mu.jet(x, order),
            rho=self.rho.jet(x, order),
        )


def random_section_field(n: int, k: int, rng, degree: int = 2) -> SectionField:
    r = slot_ranks(k)
    return SectionField(
        n, k,
        sigma=random_form_field(n, r["sigma"], rng, degree),
        phi=random_form_field(n, r["phi"], rng, degree),
        mu=random_form_field(n, r["mu"], rng, degree),
        rho=random_form_field(n, r["rho"], rng, degree),
    )


def random_perturbed_metric_entries(n: int, rng, eps: float = 0.06) -> list:
    """Expression strings for delta + eps * (random low-degree symmetric form),
    nondegenerate on the sampling box [-0.4, 0.4]^n."""
    names = [f"x{i+1}" for i in range(n)]
    entries = [["0"] * n for _ in range(n)]
    for i in range(n):
        for j in range(i, n):
            terms = []
            for _ in range(2):
                deg = int(rng.integers(1, 4))
                mono = "*".join(rng.choice(names) for _ in range(deg))
                coef = float(np.round(rng.uniform(-eps, eps), 4))
                if rng.random() < 0.3:
                    terms.append(f"{coef}*sin({rng.choice(names)})")
                else:
                    terms.append(f"{coef}*{mono}")
            body = " + ".join(terms)
            entries[i][j] = entries[j][i] = (f"1 + {body}" if i == j else body)
    return entries
