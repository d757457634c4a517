"""Standard and form tractor bundles in a metric trivialization.

A section of T = Lambda^{k+1} S is stored through its four slots

    (rho | phi , mu | sigma)  with ranks (k, k+1, k-1, k)
    and conformal weights     (k-1, k+1, k-1, k+1).

Chain elements of C_l = (l-forms) tensor T carry l extra leading form axes on
every slot.  All numbers live in the trivialization by a chosen metric g;
changing to e^{2f} g multiplies each slot by e^{w f} after the algebraic
transformation law.

The transformation of the rho slot includes the quadratic term
k Y_[a1 Y^b sigma_|b| a2...ak] which the usual display drops; it is forced by
the cocycle property (rescaling by f then h must equal rescaling by f+h) and
by compatibility with wedge squares of standard tractors; both are covered in
the test suite.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .charts import CurvaturePack, RescaleData, covd
from .jets import Jet
from .tensor import alt, ein

# letter pool for slot axes; c/d are form axes, p/q/u/v/b contractions
_L = "efghijk"


def _lt(m: int) -> str:
    return _L[:m]


def slot_ranks(k: int) -> dict:
    return {"rho": k, "phi": k + 1, "mu": k - 1, "sigma": k}


def slot_weights(k: int) -> dict:
    return {"rho": k - 1, "phi": k + 1, "mu": k - 1, "sigma": k + 1}


SLOT_NAMES = ("rho", "phi", "mu", "sigma")


def _as_value(x):
    return x.value() if isinstance(x, Jet) else np.asarray(x, dtype=float)


class _SlotContainer:
    """Shared slot arithmetic for sections and chain elements."""

    def slots(self):
        return {name: getattr(self, name) for name in SLOT_NAMES}

    def value(self):
        return self.map(_as_value)

    def __sub__(self, other):
        return self + other.map(lambda x: -x)

    def scaled(self, c: float):
        return self.map(lambda x: x * c)

    def norm(self) -> float:
        v = self.value()
        return max(np.abs(np.atleast_1d(getattr(v, s))).max() for s in SLOT_NAMES)

    def slot_norm(self, name: str) -> float:
        return np.abs(np.atleast_1d(_as_value(getattr(self, name)))).max()


@dataclass
class TractorSection(_SlotContainer):
    """Four-slot section of Lambda^{k+1} S at a point (values or jets)."""

    n: int
    k: int
    sigma: object
    phi: object
    mu: object
    rho: object

    def map(self, fn) -> "TractorSection":
        return TractorSection(self.n, self.k, fn(self.sigma), fn(self.phi), fn(self.mu), fn(self.rho))

    def __add__(self, other):
        return TractorSection(
            self.n, self.k,
            self.sigma + other.sigma, self.phi + other.phi,
            self.mu + other.mu, self.rho + other.rho,
        )

    @staticmethod
    def zero(n: int, k: int) -> "TractorSection":
        r = slot_ranks(k)
        return TractorSection(
            n, k,
            sigma=np.zeros((n,) * r["sigma"]),
            phi=np.zeros((n,) * r["phi"]),
            mu=np.zeros((n,) * r["mu"]),
            rho=np.zeros((n,) * r["rho"]),
        )


@dataclass
class ChainElement(_SlotContainer):
    """Element of C_level = (level-forms) tensor T; form axes lead on every slot."""

    n: int
    k: int
    level: int
    sigma: object
    phi: object
    mu: object
    rho: object

    def map(self, fn) -> "ChainElement":
        return ChainElement(
            self.n, self.k, self.level,
            fn(self.sigma), fn(self.phi), fn(self.mu), fn(self.rho),
        )

    def __add__(self, other):
        return ChainElement(
            self.n, self.k, self.level,
            self.sigma + other.sigma, self.phi + other.phi,
            self.mu + other.mu, self.rho + other.rho,
        )

    @staticmethod
    def zero(n: int, k: int, level: int) -> "ChainElement":
        r = slot_ranks(k)
        return ChainElement(
            n, k, level,
            sigma=np.zeros((n,) * (level + r["sigma"])),
            phi=np.zeros((n,) * (level + r["phi"])),
            mu=np.zeros((n,) * (level + r["mu"])),
            rho=np.zeros((n,) * (level + r["rho"])),
        )

    @staticmethod
    def from_section(s: TractorSection) -> "ChainElement":
        return ChainElement(s.n, s.k, 0, s.sigma, s.phi, s.mu, s.rho)

    def as_section(self) -> TractorSection:
        if self.level != 0:
            raise ValueError("only level-0 chains are sections")
        return TractorSection(self.n, self.k, self.sigma, self.phi, self.mu, self.rho)


# ---------------------------------------------------------------------------
# Standard tractors (rank n+2 warm-up bundle)
# ---------------------------------------------------------------------------


@dataclass
class StandardTractor(_SlotContainer):
    """Column (rho; phi_a; sigma) with weights (-1; +1; +1)."""

    sigma: object
    phi: object
    rho: object

    def slots(self):
        return {"rho": self.rho, "phi": self.phi, "sigma": self.sigma}

    def map(self, fn):
        return StandardTractor(fn(self.sigma), fn(self.phi), fn(self.rho))

    def __add__(self, other):
        return StandardTractor(self.sigma + other.sigma, self.phi + other.phi, self.rho + other.rho)

    def norm(self) -> float:
        v = self.value()
        return max(np.abs(np.atleast_1d(s)).max() for s in (v.sigma, v.phi, v.rho))


def standard_connection(pack: CurvaturePack, s: StandardTractor) -> StandardTractor:
    """Derivative column of the standard tractor connection; slots get a leading c axis."""
    Pud = ein("cb,bp->cp", pack.P, pack.ginv)
    d_rho = s.rho.grad() - ein("cp,p->c", Pud, s.phi)
    d_phi = covd(s.phi, pack.gamma) + ein("ce,->ce", pack.P, s.sigma) + ein("ce,->ce", pack.g, s.rho)
    d_sigma = s.sigma.grad() - s.phi
    return StandardTractor(sigma=d_sigma, phi=d_phi, rho=d_rho)


def standard_split_L(pack: CurvaturePack, sigma: Jet) -> StandardTractor:
    """sigma in E[1] -> (-(1/n)(Lap sigma + P^a_a sigma); D sigma; sigma)."""
    dd = covd(sigma.grad(), pack.gamma)
    lap = ein("pq,pq->", pack.ginv, dd)
    ptrace = ein("pq,pq->", pack.ginv, pack.P)
    rho = (lap + ptrace * sigma) * (-1.0 / pack.n)
    return StandardTractor(sigma=sigma, phi=sigma.grad(), rho=rho)


def einstein_operator(pack: CurvaturePack, sigma: Jet):
    """Trace-free part of (DD sigma + sigma P): the operator governing Einstein scales."""
    dd = covd(sigma.grad(), pack.gamma) + ein("ef,->ef", pack.P, sigma)
    tr = ein("pq,pq->", pack.ginv, dd)
    return dd - ein("ef,->ef", pack.g, tr * (1.0 / pack.n))


def tractor_metric(pack: CurvaturePack, s1: StandardTractor, s2: StandardTractor):
    """rho1 sigma2 + g(phi1, phi2) + sigma1 rho2 (weight-0 scalar)."""
    pair = ein("p,p->", ein("pq,q->p", pack.ginv, s1.phi), s2.phi)
    return s1.rho * s2.sigma + pair + s1.sigma * s2.rho


def rescale_standard(s: StandardTractor, resc: RescaleData, pack: CurvaturePack) -> StandardTractor:
    """Slot numbers of the same tractor in the e^{2f} g trivialization."""
    Y = resc.upsilon
    Yup = ein("pq,q->p", pack.ginv, Y)
    y2 = ein("p,p->", Y, Yup)
    om = resc.omega
    sig = om * s.sigma
    phi = om * (s.phi + ein("e,->e", Y, s.sigma))
    rho = om.inv() if isinstance(om, Jet) else 1.0 / om
    rho = rho * (s.rho - ein("p,p->", Yup, s.phi) - y2 * s.sigma * 0.5)
    return StandardTractor(sigma=sig, phi=phi, rho=rho)


# ---------------------------------------------------------------------------
# Form tractors
# ---------------------------------------------------------------------------


def _wf(om, w: int):
    return om.powi(w) if isinstance(om, Jet) else om**w


def rescale_section(s: TractorSection, resc: RescaleData, pack: CurvaturePack) -> TractorSection:
    """Slot numbers of the same form tractor in the e^{2f} g trivialization."""
    n, k = s.n, s.k
    Y = resc.upsilon
    Yup = ein("pq,q->p", pack.ginv, Y)
    y2 = ein("p,p->", Y, Yup)
    A, B = _lt(k), _lt(k - 1)
    om = resc.omega

    sig = _wf(om, k + 1) * s.sigma

    wedge = ein(f"c,{A}->c{A}", Y, s.sigma)
    phi = _wf(om, k + 1) * (s.phi + alt(wedge, range(k + 1)) * (k + 1))

    hook = ein(f"p,p{B}->{B}", Yup, s.sigma)
    mu = _wf(om, k - 1) * (s.mu - hook)

    rho = s.rho - ein(f"p,p{A}->{A}", Yup, s.phi) - y2 * s.sigma * 0.5
    rho = rho - alt(ein(f"c,{B}->c{B}", Y, s.mu), range(k)) * k
    rho = rho + alt(ein(f"c,{B}->c{B}", Y, hook), range(k)) * k
    return TractorSection(n, k, sigma=sig, phi=phi, mu=mu, rho=_wf(om, k - 1) * rho)


def form_tractor_connection(pack: CurvaturePack, s: TractorSection) -> ChainElement:
    """The tractor connection on Lambda^{k+1} S, slot by slot."""
    n, k = s.n, s.k
    A, B = _lt(k), _lt(k - 1)
    g, ginv, P = pack.g, pack.ginv, pack.P
    Pud = ein("cp,pq->cq", P, ginv)

    d_rho = covd(s.rho, pack.gamma) - ein(f"cq,q{A}->c{A}", Pud, s.phi)
    d_rho = d_rho - alt(ein(f"cd,{B}->cd{B}", P, s.mu), range(1, k + 1)) * k

    d_phi = covd(s.phi, pack.gamma)
    d_phi = d_phi + alt(ein(f"cd,{A}->cd{A}", g, s.rho), range(1, k + 2)) * (k + 1)
    d_phi = d_phi + alt(ein(f"cd,{A}->cd{A}", P, s.sigma), range(1, k + 2)) * (k + 1)

    d_mu = covd(s.mu, pack.gamma) if k - 1 else s.mu.grad()
    d_mu = d_mu - ein(f"cq,q{B}->c{B}", Pud, s.sigma) + s.rho  # rho_{c a2...ak}

    d_sigma = covd(s.sigma, pack.gamma) - s.phi
    d_sigma = d_sigma + alt(ein(f"cd,{B}->cd{B}", g, s.mu), range(1, k + 1)) * k

    return ChainElement(n, k, 1, sigma=d_sigma, phi=d_phi, mu=d_mu, rho=d_rho)


def curvature_action_K(pack: CurvaturePack, s: TractorSection) -> ChainElement:
    """Action of the standard tractor curvature on a section, as a 2-form chain.

    The endomorphism acts as a derivation through every slot index, so with
    normalized brackets each curvature insertion carries the count of slots it
    sweeps (k, k+1, k-1, k on the C terms; k+1 on the A term of the phi row).
    Certified against d^nabla(nabla s) in the tests.
    """
    n, k = s.n, s.k
    A, B = _lt(k), _lt(k - 1)
    Cud = ein("cdaq,qp->cdap", pack.C, pack.ginv)  # C_{c1 c2 a}^p
    Aup = ein("pq,qcd->pcd", pack.ginv, pack.A)  # A^p_{c1 c2}

    rho = alt(ein(f"cdap,p{A[1:]}->cda{A[1:]}", Cud, s.rho), range(2, k + 2)) * k
    rho = rho - alt(ein(f"acd,{B}->cda{B}", pack.A, s.mu), range(2, k + 2)) * k
    rho = rho - ein(f"pcd,p{A}->cd{A}", Aup, s.phi)

    phi = alt(ein(f"cdap,p{A}->cda{A}", Cud, s.phi), range(2, k + 3)) * (k + 1)
    phi = phi + alt(ein(f"acd,{A}->cda{A}", pack.A, s.sigma), range(2, k + 3)) * (k + 1)

    if k - 1:
        mu = alt(ein(f"cdap,p{B[1:]}->cda{B[1:]}", Cud, s.mu), range(2, k + 1)) * (k - 1)
        mu = mu - ein(f"pcd,p{B}->cd{B}", Aup, s.sigma)
    else:
        mu = -ein("pcd,p->cd", Aup, s.sigma)

    sigma = alt(ein(f"cdap,p{A[1:]}->cda{A[1:]}", Cud, s.sigma), range(2, k + 2)) * k

    return ChainElement(n, k, 2, sigma=sigma, phi=phi, mu=mu, rho=rho)


def d_nabla_chain1(pack: CurvaturePack, t: ChainElement, extra=None) -> ChainElement:
    """d^nabla of a T-valued 1-form with jet slots, in coordinate frames.

    ``extra``, if given, is a pointwise endomorphism (TractorSection -> level-1
    ChainElement) added to the connection, e.g. a deformation map.
    """
    n, k = t.n, t.k
    pieces = []
    for c2 in range(n):
        sec = TractorSection(n, k, sigma=t.sigma[c2], phi=t.phi[c2], mu=t.mu[c2], rho=t.rho[c2])
        der = form_tractor_connection(pack, sec)
        if extra is not None:
            der = der + extra(sec)
        pieces.append(der.value())
    out = {}
    for name in SLOT_NAMES:
        arr = np.stack([getattr(p, name) for p in pieces], axis=1)  # [c1, c2, slots...]
        out[name] = arr - np.swapaxes(arr, 0, 1)
    return ChainElement(n, k, 2, **out)


def tractor_curvature_direct(pack: CurvaturePack, s: TractorSection, extra=None) -> ChainElement:
    """Curvature applied to s, computed honestly as d^{nabla+extra}((nabla+extra) s)."""
    ns = form_tractor_connection(pack, s)
    if extra is not None:
        ns = ns + extra(s)
    return d_nabla_chain1(pack, ns, extra=extra)


def wedge_standard(s1: StandardTractor, s2: StandardTractor, n: int) -> TractorSection:
    """Wedge square dictionary S ^ S = Lambda^2 S (k = 1 slots)."""
    sigma = ein(",e->e", s1.sigma, s2.phi) - ein(",e->e", s2.sigma, s1.phi)
    phi = ein("e,f->ef", s1.phi, s2.phi)
    phi = phi - (phi.transpose((1, 0)) if isinstance(phi, Jet) else np.swapaxes(phi, 0, 1))
    mu = s1.sigma * s2.rho - s2.sigma * s1.rho
    rho = ein(",e->e", s1.rho, s2.phi) - ein(",e->e", s2.rho, s1.phi)
    return TractorSection(n, 1, sigma=sigma, phi=phi, mu=mu, rho=rho)


def insert_section_into_K(pack: CurvaturePack, s: TractorSection) -> ChainElement:
    """k = 1 only: the adjoint-tractor contraction (i_s K)_c = K_{c b} sigma^b."""
    if s.k != 1:
        raise ValueError("i_s K is the adjoint-bundle contraction; requires k = 1")
    sig = _as_value(s.sigma)
    C = pack.val("C")
    A = pack.val("A")
    ginv = pack.val("ginv")
    sig_up = ginv @ sig
    n = s.n
    phi = np.einsum("cbef,b->cef", C, sig_up)
    rho = -np.einsum("ecb,b->ce", A, sig_up)
    return ChainElement(n, 1, 1, sigma=np.zeros((n, n)), phi=phi, mu=np.zeros((n,)), rho=rho)
