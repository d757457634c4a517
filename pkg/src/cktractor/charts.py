"""Analytic metric families and their curvature data with exact derivative jets.

Conventions (validated by the round-sphere and identity checks in the tests):

* Riemann: [D_c, D_d] v^a = R^a_{b c d} v^b, stored all-lower with the 2-form
  pair leading: ``riem[c1, c2, a, b] = g_{a p} R^p_{b c1 c2}``.
* Ricci: Ric_{a b} = R^c_{a c b};  scalar R = g^{ab} Ric_{ab}.
* Schouten: P = (Ric - R/(2(n-1)) g) / (n-2).
* Weyl (same index layout as Riemann):
  C_{c1 c2 a b} = R_{c1 c2 a b} - g_{a c1} P_{c2 b} + g_{a c2} P_{c1 b}
                  + g_{b c1} P_{c2 a} - g_{b c2} P_{c1 a}.
* Cotton-York: A_{e c1 c2} = D_{c1} P_{c2 e} - D_{c2} P_{c1 e}.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .expressions import BinOp, Call, Const, eval_jet, parse_expression
from .jets import Jet, jet_einsum, jet_matrix_inverse, stack
from .tensor import alt, ein


class ChartError(ValueError):
    pass


class UnsupportedDimensionError(ChartError):
    pass


class DegenerateMetricError(ChartError):
    pass


def covd(x: Jet, gamma: Jet, upper: int = 0) -> Jet:
    """Levi-Civita covariant derivative of a tensor jet.

    ``x`` carries ``upper`` leading contravariant axes followed by covariant
    axes.  The derivative index is prepended.  Density weights need no extra
    term: the scale used for trivialization is parallel for its own
    Levi-Civita connection.
    """
    out = x.grad()
    rank = len(x.shape)
    letters = "abdefghijk"[:rank]
    for i in range(rank):
        li = letters[i]
        rest = letters[:i] + "p" + letters[i + 1 :]
        if i < upper:
            # + Gamma^{li}_{c p} x^{... p ...}
            out = out + jet_einsum(f"{li}cp,{rest}->c{letters}", gamma, x)
        else:
            # - Gamma^{p}_{c li} x_{... p ...}
            out = out - jet_einsum(f"pc{li},{rest}->c{letters}", gamma, x)
    return out


@dataclass
class CurvaturePack:
    """All curvature data of one metric at one chart point, as jets."""

    n: int
    signature: tuple
    point: np.ndarray
    g: Jet
    ginv: Jet
    gamma: Jet  # gamma[a, b, c] = Gamma^a_{b c}
    riem: Jet  # riem[c1, c2, a, b]
    ric: Jet
    scal: Jet
    P: Jet
    C: Jet  # same layout as riem
    A: Jet  # A[e, c1, c2]
    DP: Jet  # DP[u, a, b] = D_u P_{a b}
    DC: Jet  # DC[u, c1, c2, a, b] = D_u C_{c1 c2 a b}

    def val(self, name: str) -> np.ndarray:
        return getattr(self, name).value()


def curvature_pack_from_metric_jet(g: Jet, point, signature) -> CurvaturePack:
    n = g.shape[0]
    g0 = g.value()
    if abs(np.linalg.det(g0)) < 1e-10:
        raise DegenerateMetricError(f"metric degenerate at {point} (|det| < 1e-10)")
    ginv = jet_matrix_inverse(g)
    dg = g.grad()  # dg[c, a, b] = d_c g_{a b}
    # Gamma^a_{bc} = 1/2 g^{ad} (d_b g_{dc} + d_c g_{db} - d_d g_{bc});
    # sym2[b, d, c] holds the parenthesis.
    sym2 = dg + dg.transpose((2, 1, 0)) - dg.transpose((1, 0, 2))
    gamma = jet_einsum("ad,bdc->abc", ginv, sym2 * 0.5)
    dgamma = gamma.grad()  # dgamma[c, a, b, d] = d_c Gamma^a_{b d}
    # riem_ud[a, c1, c2, b] = d_{c1} Gamma^a_{c2 b} - d_{c2} Gamma^a_{c1 b}
    #                         + Gamma^a_{c1 p} Gamma^p_{c2 b} - (c1 <-> c2)
    t1 = dgamma.transpose((1, 0, 2, 3))  # [a, c1, c2, b]
    riem_ud = t1 - t1.transpose((0, 2, 1, 3))
    gg = jet_einsum("acp,pdb->acdb", gamma, gamma)  # [a, c1, c2, b]
    riem_ud = riem_ud + gg - gg.transpose((0, 2, 1, 3))
    # Ric_{a b} = R^p_{a p b} (contract the upper slot with the first form slot)
    eye = Jet.constant(np.eye(n), g.nvars, g.order)
    ric = jet_einsum("pq,pqba->ab", eye, riem_ud)
    riem = jet_einsum("ea,acdb->cdeb", g, riem_ud)  # riem[c1, c2, e, b] = g_{e a} R^a_{b c1 c2}
    scal = jet_einsum("ab,ab->", ginv, ric)
    P = (ric - jet_einsum(",ab->ab", scal * (1.0 / (2 * (n - 1))), g)) * (1.0 / (n - 2))
    gP = jet_einsum("xy,zw->xyzw", g, P)

    def _gp(i, j, k, l):
        # g_{i j} P_{k l} arranged into storage order [c1, c2, a, b]
        return gP.transpose(_axes_for(i, j, k, l))

    C = (
        riem
        - _gp("a", "c1", "c2", "b")
        + _gp("a", "c2", "c1", "b")
        + _gp("b", "c1", "c2", "a")
        - _gp("b", "c2", "c1", "a")
    )
    DP = covd(P, gamma)
    A = (DP - DP.transpose((1, 0, 2))).transpose((2, 0, 1))  # A[e, c1, c2]
    DC = covd(C, gamma)
    return CurvaturePack(
        n=n,
        signature=tuple(signature),
        point=np.asarray(point, dtype=float),
        g=g,
        ginv=ginv,
        gamma=gamma,
        riem=riem,
        ric=ric,
        scal=scal,
        P=P,
        C=C,
        A=A,
        DP=DP,
        DC=DC,
    )


def _axes_for(i, j, k, l):
    """Transpose order mapping the einsum output [a b c d] = g_{ab} P_{cd} to
    the target layout [c1, c2, a, b] given which label each factor slot holds."""
    labels = (i, j, k, l)
    target = ("c1", "c2", "a", "b")
    return tuple(labels.index(t) for t in target)


# ---------------------------------------------------------------------------
# Metric families
# ---------------------------------------------------------------------------


@dataclass
class MetricChart:
    """Analytic metric family on a coordinate chart, with exact jets."""

    n: int
    entries: list  # n x n nested list of expression nodes, symmetric
    signature: tuple = None
    family: str = "analytic"
    params: dict = field(default_factory=dict)
    jet_order: int = 4
    conformally_flat: bool = False

    def __post_init__(self):
        if self.n < 4:
            raise UnsupportedDimensionError(
                f"dimension {self.n} unsupported: the Weyl machinery needs n >= 4"
            )
        if self.n > 8:
            raise UnsupportedDimensionError(f"dimension {self.n} exceeds supported maximum 8")
        if self.jet_order < 3:
            raise ChartError("jet_order must be at least 3")
        if self.signature is None:
            self.signature = (self.n, 0)

    def metric_jet(self, x, order=None) -> Jet:
        order = self.jet_order if order is None else order
        coords = Jet.coordinates(np.asarray(x, dtype=float), order)
        rows = []
        for i in range(self.n):
            rows.append(stack([eval_jet(self.entries[i][j], coords) for j in range(self.n)]))
        return stack(rows)

    def pack(self, x, order=None) -> CurvaturePack:
        return curvature_pack_from_metric_jet(self.metric_jet(x, order), x, self.signature)


def flat_chart(n: int, signature=None, jet_order: int = 4) -> MetricChart:
    signature = (n, 0) if signature is None else tuple(signature)
    p, q = signature
    if p + q != n:
        raise ChartError("signature does not match dimension")
    diag = [Const(Fraction(1))] * p + [Const(Fraction(-1))] * q
    zero = Const(Fraction(0))
    entries = [[diag[i] if i == j else zero for j in range(n)] for i in range(n)]
    return MetricChart(
        n=n, entries=entries, signature=signature, family="flat", jet_order=jet_order,
        conformally_flat=True,
    )


def round_sphere_chart(n: int, radius: float = 1.0, jet_order: int = 4) -> MetricChart:
    """Round n-sphere of the given radius in a stereographic chart:
    g = (2 R^2 / (R^2 + |x|^2))^2 delta."""
    r2 = Fraction(radius).limit_denominator(10**12) ** 2
    norm = " + ".join(f"x{i+1}*x{i+1}" for i in range(n))
    factor = f"pow(2*({r2}) / (({r2}) + ({norm})), 2)"
    entries = [
        [
            parse_expression(factor if i == j else "0", n)
            for j in range(n)
        ]
        for i in range(n)
    ]
    return MetricChart(
        n=n,
        entries=entries,
        family="round_sphere",
        params={"radius": float(radius)},
        jet_order=jet_order,
        conformally_flat=True,
    )


def conformal_chart(base: MetricChart, f_expr, jet_order: int = None) -> MetricChart:
    """Metric e^{2f} g_base; ``f_expr`` is parsed if given as a string."""
    if isinstance(f_expr, str):
        f_expr = parse_expression(f_expr, base.n)
    factor = Call("exp", BinOp("*", Const(Fraction(2)), f_expr))
    entries = [
        [BinOp("*", factor, base.entries[i][j]) for j in range(base.n)]
        for i in range(base.n)
    ]
    return MetricChart(
        n=base.n,
        entries=entries,
        signature=base.signature,
        family="conformal",
        params={"base": base.family, "f": f_expr},
        jet_order=base.jet_order if jet_order is None else jet_order,
        conformally_flat=base.conformally_flat,
    )


def analytic_chart(entry_strings, n: int, signature=None, jet_order: int = 4) -> MetricChart:
    entries = [[parse_expression(entry_strings[i][j], n) for j in range(n)] for i in range(n)]
    for i in range(n):
        for j in range(n):
            if entry_strings[i][j].replace(" ", "") != entry_strings[j][i].replace(" ", ""):
                raise ChartError("metric entries must be given symmetrically")
    return MetricChart(n=n, entries=entries, signature=signature, jet_order=jet_order)


# ---------------------------------------------------------------------------
# Conformal rescaling
# ---------------------------------------------------------------------------


@dataclass
class RescaleData:
    """A conformal rescale at a point: jets of f (through Omega = e^f) and Upsilon = df."""

    omega: Jet  # e^{f}, scalar jet
    upsilon: Jet  # upsilon[a] = d_a f, jet

    @property
    def nvars(self):
        return self.omega.nvars

    def weight_factor(self, w: int) -> Jet:
        """Jet of e^{w f} = Omega^w."""
        return self.omega.powi(w)

    def upsilon_value(self) -> np.ndarray:
        return self.upsilon.value()


def rescale_from_f(f_expr, x, order: int, n: int) -> RescaleData:
    if isinstance(f_expr, str):
        f_expr = parse_expression(f_expr, n)
    coords = Jet.coordinates(np.asarray(x, dtype=float), order)
    f = eval_jet(f_expr, coords)
    return RescaleData(omega=f.exp(), upsilon=f.grad())


def rescale_from_omega(omega_expr, x, order: int, n: int) -> RescaleData:
    """Rescale given the positive factor Omega = e^f directly (f = log Omega)."""
    if isinstance(omega_expr, str):
        omega_expr = parse_expression(omega_expr, n)
    coords = Jet.coordinates(np.asarray(x, dtype=float), order)
    om = eval_jet(omega_expr, coords)
    if om.value() <= 0:
        raise ChartError("conformal factor must be positive")
    return RescaleData(omega=om, upsilon=om.grad() * om.inv())


def conformal_rescale_pack(chart: MetricChart, f_expr, x, order=None):
    """Curvature pack of e^{2f} g computed directly from the rescaled metric,
    together with the rescale data at x."""
    order = chart.jet_order if order is None else order
    resc = rescale_from_f(f_expr, x, order, chart.n)
    g = chart.metric_jet(x, order)
    ghat = jet_einsum(",ab->ab", resc.omega.powi(2), g)
    return curvature_pack_from_metric_jet(ghat, x, chart.signature), resc


def pack_from_rescale(chart: MetricChart, resc: RescaleData, x, order=None) -> CurvaturePack:
    order = chart.jet_order if order is None else order
    g = chart.metric_jet(x, order)
    ghat = jet_einsum(",ab->ab", resc.omega.truncate(order).powi(2), g)
    return curvature_pack_from_metric_jet(ghat, x, chart.signature)


# ---------------------------------------------------------------------------
# Identity residuals
# ---------------------------------------------------------------------------


def _rel(num: float, den: float) -> float:
    return num / max(den, 1e-30)


def weyl_trace_residual(pack: CurvaturePack) -> float:
    C = pack.val("C")
    ginv = pack.val("ginv")
    scale = max(np.abs(C).max(), 1.0)
    worst = 0.0
    for (i, j) in ((0, 2), (0, 3), (1, 2), (1, 3), (0, 1), (2, 3)):
        idx = ["a", "b", "c", "d"]
        idx[i] = "p"
        idx[j] = "q"
        out = "".join(ch for ch in idx if ch not in "pq")
        tr = np.einsum(f"pq,{''.join(idx)}->{out}", ginv, C)
        worst = max(worst, np.abs(tr).max())
    return _rel(worst, scale)


def weyl_alternation_residual(pack: CurvaturePack) -> float:
    C = pack.val("C")
    scale = max(np.abs(C).max(), 1.0)
    worst = 0.0
    for axes in ((0, 1, 2), (0, 1, 3), (0, 2, 3), (1, 2, 3)):
        worst = max(worst, np.abs(alt(C, axes)).max())
    return _rel(worst, scale)


def cotton_alternation_residual(pack: CurvaturePack) -> float:
    A = pack.val("A")
    scale = max(np.abs(A).max(), 1.0)
    return _rel(np.abs(alt(A, (0, 1, 2))).max(), scale)


def cotton_trace_residual(pack: CurvaturePack) -> float:
    A = pack.val("A")
    ginv = pack.val("ginv")
    scale = max(np.abs(A).max(), 1.0)
    worst = max(
        np.abs(np.einsum("pq,pqc->c", ginv, A)).max(),
        np.abs(np.einsum("pq,pcq->c", ginv, A)).max(),
    )
    return _rel(worst, scale)


def first_bianchi_residual(pack: CurvaturePack) -> float:
    R = pack.val("riem")
    scale = max(np.abs(R).max(), 1.0)
    return _rel(np.abs(alt(R, (0, 1, 2))).max(), scale)


def bianchi_type_residual(pack: CurvaturePack) -> float:
    """D_[a C_bc]de = g_d[a A_|e|bc] - g_e[a A_|d|bc], as arrays [a,b,c,d,e]."""
    DC = pack.val("DC")
    g = pack.val("g")
    A = pack.val("A")
    lhs = alt(DC, (0, 1, 2))
    gA_d = np.einsum("da,ebc->abcde", g, A)  # g_{d a} A_{e b c}
    gA_e = np.einsum("ea,dbc->abcde", g, A)
    rhs = alt(gA_d, (0, 1, 2)) - alt(gA_e, (0, 1, 2))
    scale = max(np.abs(lhs).max(), np.abs(rhs).max(), 1e-12)
    return _rel(np.abs(lhs - rhs).max(), scale)


def dhat_weyl(chart: MetricChart, f_expr, x, order=None):
    """D-hat of the Weyl tensor computed directly from e^{2f} g (as the jet
    DC-hat in g-scale components, i.e. divided by e^{2f})."""
    pack_hat, resc = conformal_rescale_pack(chart, f_expr, x, order)
    scale = resc.weight_factor(-2).truncate(pack_hat.DC.order)
    return jet_einsum(",uabcd->uabcd", scale, pack_hat.DC), pack_hat, resc


def dhat_weyl_rhs(pack: CurvaturePack, resc: RescaleData) -> np.ndarray:
    """Transformation law for the first derivative of Weyl, assembled from
    unrescaled data: D-hat_u C_abcd = D_u C - 2 Y_u C - 2 Y_[a C_|u|b]cd
    - 2 Y_[c C_|u|d]ab + 2(n-3) g_u[a A_b]cd + 2(n-3) g_u[c A_d]ab."""
    n = pack.n
    DC = pack.val("DC")
    C = pack.val("C")
    g = pack.val("g")
    A = pack.val("A")
    Y = resc.upsilon_value()
    # layout [u, a, b, c, d] with (a,b) the leading pair of C's storage [c1,c2,a,b];
    # here we name C's axes (a, b, c, d) in storage order.
    t_YC = np.einsum("u,abcd->uabcd", Y, C)
    YaCu = np.einsum("a,ubcd->uabcd", Y, C)  # Y_a C_{u b c d}
    term_ab = YaCu - np.einsum("b,uacd->uabcd", Y, C)  # 2 Y_[a C_|u|b]cd (unnormalized pair alt)
    YcCu = np.einsum("c,udab->uabcd", Y, C)  # Y_c C_{u d a b}
    term_cd = YcCu - np.einsum("d,ucab->uabcd", Y, C)
    gA_ab = np.einsum("ua,bcd->uabcd", g, A) - np.einsum("ub,acd->uabcd", g, A)
    gA_cd = np.einsum("uc,dab->uabcd", g, A) - np.einsum("ud,cab->uabcd", g, A)
    return DC - 2 * t_YC - term_ab - term_cd + (n - 3) * gA_ab + (n - 3) * gA_cd
