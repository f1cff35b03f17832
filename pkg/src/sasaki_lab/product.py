"""Products of contact and Sasakian structures over a shared scaling axis.

Two cooriented structures combine on M₁ × M₂ × (0,∞): the raw product
form t·η₁ + η₂ is contact, and dividing by t+1 normalises it so the Reeb
field becomes ξ₁ + ξ₂ and the whole package stays Sasakian when both
factors are.  Upstairs the construction is transparent — it is the
product of the factors' cones under the diagonal scaling action, and the
two descriptions are related by the explicit chart change
(s₁, s₂) = (st/(t+1), s/(t+1)), which the route-consistency check
exercises as a pullback identity.

Only single-chart (hence honestly cooriented) factors are supported;
the glued, sign-twisted examples have their own dedicated constructions.
"""

from __future__ import annotations

from dataclasses import dataclass

from . import numkernel as nk
from .bundle import (
    PrincipalBundle,
    abs_s_calibration,
    cone_over,
    induced_metric,
)
from .contact import ContactStructure, contact_frame
from .kahler import KahlerCandidate, compatibility_tensor, kahlerianization
from .manifold import Atlas, Chart, SamplePlan, sample_points
from .report import CheckReport, run_residual_check
from .sasaki import LeviStructure, sasaki_check
from .tensor import SmoothMap, TensorField, pullback

T_COORD = "t"
T_BOX = (0.5, 2.0)


class NotCooriented(ValueError):
    """Product factors must carry a global single-chart contact form."""


class FactorNotSasakian(ValueError):
    """A factor failed its normality certification."""


def _single_chart(C: ContactStructure) -> Chart:
    if C.paired or len(C.atlas.charts) != 1:
        raise NotCooriented(
            f"{C.name}: products need a single-chart cooriented factor"
        )
    return C.atlas.charts[0]


def _suffix_chart(chart: Chart, suffix: str) -> tuple[tuple, tuple]:
    return tuple(c + suffix for c in chart.coords), chart.box


def _factor_env(env: dict, coords: tuple, suffix: str) -> dict:
    return {c: env[c + suffix] for c in coords}


@dataclass
class ProductFrame:
    """Shared layout data for the two factors inside a product chart."""

    chart1: Chart
    chart2: Chart
    atlas: Atlas
    chart: str

    @property
    def dims(self) -> tuple[int, int]:
        return self.chart1.dim, self.chart2.dim

    def envs(self, env: dict) -> tuple[dict, dict]:
        return (
            _factor_env(env, self.chart1.coords, "1"),
            _factor_env(env, self.chart2.coords, "2"),
        )


def _product_frame(
    ch1: Chart, ch2: Chart, extra: tuple | None, name: str
) -> ProductFrame:
    coords1, box1 = _suffix_chart(ch1, "1")
    coords2, box2 = _suffix_chart(ch2, "2")
    coords, box = coords1 + coords2, box1 + box2
    if extra is not None:
        coords, box = coords + (extra[0],), box + (extra[1],)
    chart = Chart(name, coords, box)
    return ProductFrame(ch1, ch2, Atlas((chart,), ()), chart.name)


def contact_product(
    C1: ContactStructure, C2: ContactStructure, name: str | None = None
) -> ContactStructure:
    """The raw product form t·η₁ + η₂ on M₁ × M₂ × [1/2, 2].

    Its Reeb field is the second factor's; the kernel contains both
    factor kernels plus ξ₁ − t·ξ₂ and ∂_t.  Swapping the roles of the
    factors amounts to the chart change t ↦ 1/t up to a positive
    conformal factor, which `reparametrization_check` certifies.
    """
    pf = _product_frame(
        _single_chart(C1), _single_chart(C2), (T_COORD, T_BOX), name or "prod"
    )

    def ev(env):
        e1, e2 = pf.envs(env)
        v1 = C1.eta.at(pf.chart1.name, e1)
        v2 = C2.eta.at(pf.chart2.name, e2)
        t = env[T_COORD]
        return [t * v for v in v1] + list(v2) + [0.0]

    eta = TensorField(
        f"product_eta({C1.name},{C2.name})", pf.atlas, (0, 1), {pf.chart: ev}
    )
    return ContactStructure(name or f"{C1.name}*{C2.name}", pf.atlas, eta)


def reparametrization_check(
    C1: ContactStructure,
    C2: ContactStructure,
    product: ContactStructure,
    plan: SamplePlan,
    tol: float | None = None,
    example: str | None = None,
) -> CheckReport:
    """ker(t·η₁ + η₂) is parametrization-independent.

    The inverted-parameter chart carries η′ = η₁ + t′·η₂; pulling it
    back along t′ = 1/t must give η/t exactly, and in particular η′
    annihilates the original kernel frame.
    """
    pf = _product_frame(
        _single_chart(C1), _single_chart(C2), (T_COORD, T_BOX), "prod_inv"
    )

    def ev(env):
        e1, e2 = pf.envs(env)
        v1 = C1.eta.at(pf.chart1.name, e1)
        v2 = C2.eta.at(pf.chart2.name, e2)
        t = env[T_COORD]
        return list(v1) + [t * v for v in v2] + [0.0]

    eta_inv = TensorField("eta_inverted", pf.atlas, (0, 1), {pf.chart: ev})
    (src_chart,) = product.atlas.charts
    exprs = tuple(src_chart.coords[:-1]) + (f"1 / {T_COORD}",)
    F = SmoothMap.from_exprs(
        "invert_parameter",
        product.atlas,
        pf.atlas,
        {src_chart.name: (pf.chart, exprs)},
    )
    moved = pullback(F, eta_inv)

    def residual(chart, coords, env):
        t = env[T_COORD]
        got = moved.at(chart, env)
        here = product.eta.at(chart, env)
        r = max(
            abs(nk.value_of(a) - nk.value_of(b) / t)
            for a, b in zip(got, here)
        )
        fr = contact_frame(product, chart, env)
        for vec in fr.vectors:
            pairing = nk.sum_(g * v for g, v in zip(got, vec))
            r = max(r, abs(nk.value_of(pairing)))
        return r

    return run_residual_check(
        "product_reparametrization",
        sample_points(product.atlas, plan),
        residual,
        plan.tolerance if tol is None else tol,
        plan.seed,
        example=example,
    )


def sasakian_product(
    L1: LeviStructure,
    L2: LeviStructure,
    plan: SamplePlan,
    name: str | None = None,
) -> LeviStructure:
    """The normalised Sasakian structure on M₁ × M₂ × [1/2, 2].

    The form is (t·η₁ + η₂)/(t+1), whose Reeb field is ξ₁ + ξ₂.  The
    plane endomorphism extends the two factor endomorphisms by rotating
    the leftover plane spanned by ξ₁ − t·ξ₂ and ∂_t:

        φ(∂_t) = (ξ₁ − t·ξ₂)/(t(t+1)),
        φ(ξ₁ − t·ξ₂) = −t(t+1)·∂_t,

    which squares correctly and makes the transverse form positive.
    Both factors must certify as normal first.
    """
    for L in (L1, L2):
        rep = sasaki_check(L, plan)
        if not rep.passed:
            raise FactorNotSasakian(
                f"{L.name}: normality residual {rep.max_residual:.3e}"
            )
    C1, C2 = L1.contact, L2.contact
    pf = _product_frame(
        _single_chart(C1), _single_chart(C2), (T_COORD, T_BOX), name or "prod"
    )
    n1, n2 = pf.dims
    dim = n1 + n2 + 1

    def eta_ev(env):
        e1, e2 = pf.envs(env)
        v1 = C1.eta.at(pf.chart1.name, e1)
        v2 = C2.eta.at(pf.chart2.name, e2)
        t = env[T_COORD]
        u, v = t / (t + 1.0), 1.0 / (t + 1.0)
        return [u * a for a in v1] + [v * a for a in v2] + [0.0]

    eta = TensorField(
        f"sasakian_product_eta({L1.name},{L2.name})",
        pf.atlas,
        (0, 1),
        {pf.chart: eta_ev},
    )
    contact = ContactStructure(
        name or f"{L1.name}*{L2.name}", pf.atlas, eta
    )

    phi1, phi2 = L1.phibar, L2.phibar
    xi1, xi2 = C1.reeb(), C2.reeb()

    def phi_ev(env):
        e1, e2 = pf.envs(env)
        m1 = phi1.at(pf.chart1.name, e1)
        m2 = phi2.at(pf.chart2.name, e2)
        x1 = xi1.at(pf.chart1.name, e1)
        x2 = xi2.at(pf.chart2.name, e2)
        v1 = C1.eta.at(pf.chart1.name, e1)
        v2 = C2.eta.at(pf.chart2.name, e2)
        t = env[T_COORD]
        out = [[0.0] * dim for _ in range(dim)]
        for k in range(n1):
            for j in range(n1):
                out[k][j] = m1[k][j]
            out[k][dim - 1] = x1[k] / (t * (t + 1.0))
            out[dim - 1][k] = -t * v1[k]
        for k in range(n2):
            for j in range(n2):
                out[n1 + k][n1 + j] = m2[k][j]
            out[n1 + k][dim - 1] = -x2[k] / (t + 1.0)
            out[dim - 1][n1 + k] = t * v2[k]
        return out

    phibar = TensorField(
        f"sasakian_product_endo({L1.name},{L2.name})",
        pf.atlas,
        (1, 1),
        {pf.chart: phi_ev},
    )
    return LeviStructure(contact.name, contact, phibar)


def distribution_match_check(
    raw: ContactStructure,
    normalised: LeviStructure,
    plan: SamplePlan,
    tol: float | None = None,
    example: str | None = None,
) -> CheckReport:
    """Both product constructions cut out the same hyperplane field."""
    eta_n = normalised.contact.eta

    def residual(chart, coords, env):
        r = 0.0
        here = eta_n.at(chart, env)
        for vec in contact_frame(raw, chart, env).vectors:
            pairing = nk.sum_(a * v for a, v in zip(here, vec))
            r = max(r, abs(nk.value_of(pairing)))
        other = raw.eta.at(chart, env)
        for vec in contact_frame(normalised.contact, chart, env).vectors:
            pairing = nk.sum_(a * v for a, v in zip(other, vec))
            r = max(r, abs(nk.value_of(pairing)))
        return r

    return run_residual_check(
        "product_distribution_match",
        sample_points(raw.atlas, plan),
        residual,
        plan.tolerance if tol is None else tol,
        plan.seed,
        example=example,
    )


# -- the upstairs picture: product of cones ----------------------------


@dataclass
class ProductBundle:
    """Product of two scaling cones under the diagonal fiber action."""

    left: PrincipalBundle
    right: PrincipalBundle
    total: Atlas
    chart: str
    fibers: tuple[str, str]

    def scaling(self, nu: float) -> SmoothMap:
        (chart,) = self.total.charts
        exprs = tuple(
            f"{nu!r} * {c}" if c in self.fibers else c for c in chart.coords
        )
        return SmoothMap.from_exprs(
            f"diag_scale({nu})",
            self.total,
            self.total,
            {chart.name: (chart.name, exprs)},
        )

    def liouville(self) -> TensorField:
        (chart,) = self.total.charts
        idx = {c: i for i, c in enumerate(chart.coords)}

        def ev(env):
            out = [0.0] * chart.dim
            for f in self.fibers:
                out[idx[f]] = env[f]
            return out

        return TensorField(
            "diag_liouville", self.total, (1, 0), {chart.name: ev}
        )


def _block_sum(name, pf, valence, f1, f2):
    """Direct sum of factor tensors of equal valence, zero on the rest."""
    n1, n2 = pf.dims
    dim = n1 + n2
    p, q = valence

    def ev(env):
        e1, e2 = pf.envs(env)
        a = f1.at(pf.chart1.name, e1)
        b = f2.at(pf.chart2.name, e2)
        if p + q == 1:
            return list(a) + list(b)
        out = [[0.0] * dim for _ in range(dim)]
        for i in range(n1):
            for j in range(n1):
                out[i][j] = a[i][j]
        for i in range(n2):
            for j in range(n2):
                out[n1 + i][n1 + j] = b[i][j]
        return out

    return TensorField(name, pf.atlas, valence, {pf.chart: ev})


def product_kahler_lift(
    L1: LeviStructure, L2: LeviStructure, plan: SamplePlan
) -> KahlerCandidate:
    """The product of the factors' cone pairs under the diagonal action.

    ω and g are block sums, the calibration is s₁ + s₂, and J is derived
    from the pair as always.  Factors whose cone pairs are obstructed
    are rejected, since the product could not be Kähler either.
    """
    from .kahler import kahler_integrability_check

    K1, K2 = kahlerianization(L1), kahlerianization(L2)
    for L, K in ((L1, K1), (L2, K2)):
        rep = kahler_integrability_check(K.J, plan)
        if not rep.passed:
            raise FactorNotSasakian(
                f"{L.name}: cone torsion residual {rep.max_residual:.3e}"
            )
    pf = _product_frame(
        K1.bundle.total.charts[0],
        K2.bundle.total.charts[0],
        None,
        "prod_cone",
    )
    pb = ProductBundle(
        left=K1.bundle,
        right=K2.bundle,
        total=pf.atlas,
        chart=pf.chart,
        fibers=("s1", "s2"),
    )
    omega = _block_sum("product_omega", pf, (0, 2), K1.omega, K2.omega)
    g = _block_sum("product_metric", pf, (0, 2), K1.g, K2.g)

    def scal_ev(env):
        return env["s1"] + env["s2"]

    scal = TensorField(
        "product_calibration", pf.atlas, (0, 0), {pf.chart: scal_ev}
    )
    return KahlerCandidate(
        bundle=pb,
        omega=omega,
        g=g,
        J=compatibility_tensor(omega, g),
        scal=scal,
    )


def invariant_slope_form(pb: ProductBundle) -> TensorField:
    """The degree-0 one-form measuring the fiber ratio on a product.

    β = (√(s₂/s₁)·ds₁ − √(s₁/s₂)·ds₂)/(s₁+s₂); it kills the diagonal
    scaling field and is invariant under the diagonal action, and in
    the (t, s) parametrization it reads dt/(√t·(t+1)).
    """
    (chart,) = pb.total.charts
    idx = {c: i for i, c in enumerate(chart.coords)}
    f1, f2 = pb.fibers

    def ev(env):
        s1, s2 = env[f1], env[f2]
        total = s1 + s2
        out = [0.0] * chart.dim
        out[idx[f1]] = nk.sqrt(s2 / s1) / total
        out[idx[f2]] = -nk.sqrt(s1 / s2) / total
        return out

    return TensorField("slope_form", pb.total, (0, 1), {chart.name: ev})


def ts_reparametrization(
    pb: ProductBundle, cone: PrincipalBundle
) -> SmoothMap:
    """(x₁, x₂, t, s) ↦ (x₁, s₁ = st/(t+1), x₂, s₂ = s/(t+1))."""
    (src,) = cone.total.charts
    (dst,) = pb.total.charts
    exprs = []
    for c in dst.coords:
        if c == pb.fibers[0]:
            exprs.append(f"s * {T_COORD} / ({T_COORD} + 1)")
        elif c == pb.fibers[1]:
            exprs.append(f"s / ({T_COORD} + 1)")
        else:
            exprs.append(c)
    return SmoothMap.from_exprs(
        "ts_to_fiber_pair",
        cone.total,
        pb.total,
        {src.name: (dst.name, tuple(exprs))},
    )


def product_routes_check(
    L1: LeviStructure,
    L2: LeviStructure,
    plan: SamplePlan,
    tol: float = 1e-7,
    example: str | None = None,
) -> CheckReport:
    """Downstairs and upstairs products agree through (t,s) ↦ (s₁,s₂).

    The cone metric induced from the normalised product's base metric
    must pull back from the block-sum metric of the factor cones along
    the explicit reparametrization — an exact identity, checked at
    samples of the (t, s) cone.
    """
    Lp = sasakian_product(L1, L2, plan)
    K = product_kahler_lift(L1, L2, plan)
    cone = cone_over(Lp.contact.atlas, group="R+", name="product_cone")
    g_ts = induced_metric(cone, Lp.metric(), abs_s_calibration(cone))
    F = ts_reparametrization(K.bundle, cone)
    moved = pullback(F, K.g)

    def residual(chart, coords, env):
        got = moved.at(chart, env)
        want = g_ts.at(chart, env)
        return max(
            abs(nk.value_of(a) - nk.value_of(b))
            for ra, rb in zip(got, want)
            for a, b in zip(ra, rb)
        )

    return run_residual_check(
        "product_routes",
        sample_points(cone.total, plan),
        residual,
        tol,
        plan.seed,
        example=example,
    )
