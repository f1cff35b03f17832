"""Scaling bundles over chart atlases: cones, homogeneity, calibrations.

A bundle here is a base atlas with one extra fiber coordinate ``s`` appended
to every chart (final position, always).  The structure group is either the
positive reals ("R+", fiber box [0.5, 2]) or the nonzero reals ("Rx", fiber
box [−2, 2] minus a band around 0); transitions multiply ``s`` by a locally
constant sign — the *sign cocycle* — which is what makes non-trivializable
examples representable at all.

`homogeneity_check` verifies h_ν-pullback laws in three modes:

* ``plain``    — pullback equals ν^k · K (2-forms of the cone type),
* ``positive`` — pullback equals |ν|^k · K (metrics, calibrations),
* ``half``     — pullback equals sgn(ν)·|ν|^k · K (paired endomorphisms).

`decompose_homogeneous_metric` splits a degree-1 positively homogeneous
metric along a calibration into fiber weight A, mixed one-form μ, and a
base "shadow" metric; the shadow is invariant under re-calibration, which a
unit test exercises by decomposing the same metric against two different
calibrations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

from . import exprlang, numkernel as nk
from .contact import ContactStructure
from .manifold import (
    Atlas,
    Chart,
    SamplePlan,
    TransitionMap,
    TransitionPiece,
    sample_chart,
    sample_points,
)
from .report import CheckReport, run_residual_check
from .tensor import (
    SmoothMap,
    TensorField,
    exterior_derivative,
    field_jet,
    max_abs,
    pullback,
    pullback_tensor,
    zeros,
)

FIBER = "s"


class NotHomogeneous(ValueError):
    """The field failed its homogeneity law beyond tolerance."""


class NotPositiveDefinite(ValueError):
    """A metric candidate has a non-positive direction at a sample."""


@dataclass
class PrincipalBundle:
    name: str
    total: Atlas
    base: Atlas
    group: str  # "R+" or "Rx"

    def fiber_index(self, chart: str) -> int:
        return self.total.chart(chart).index(FIBER)

    def lift_env(self, chart: str, base_env: dict, s=1.0) -> dict:
        env = dict(base_env)
        env[FIBER] = s
        return env

    def liouville(self) -> TensorField:
        """∇ = s ∂s in every chart."""
        closures = {}
        for chart in self.total.charts:
            dim = chart.dim
            si = chart.index(FIBER)

            def ev(env, dim=dim, si=si):
                out = [0.0] * dim
                out[si] = env[FIBER]
                return out

            closures[chart.name] = ev
        return TensorField("liouville", self.total, (1, 0), closures)

    def scaling(self, nu: float) -> SmoothMap:
        """h_ν: multiply the fiber coordinate by ν, chart by chart."""
        table = {}
        for chart in self.total.charts:
            exprs = tuple(
                exprlang.parse(f"{nu!r} * {c}" if c == FIBER else c)
                for c in chart.coords
            )
            table[chart.name] = (chart.name, exprs)
        return SmoothMap(f"scale({nu})", self.total, self.total, table)

    def transition_sign(self, t: TransitionMap, piece: TransitionPiece) -> float:
        """Sign of ∂s'/∂s at the piece center (locally constant cocycle)."""
        src = self.total.chart(t.source)
        center = {
            c: (lo + hi) / 2.0 for c, (lo, hi) in zip(src.coords, piece.box)
        }
        if abs(center[FIBER]) < 0.75:  # keep clear of an excluded band
            center[FIBER] = 1.0
        tag = nk.new_tag()
        center[FIBER] = nk.DScalar(center[FIBER], (1.0,), tag)
        s_expr = piece.forward[self.total.chart(t.target).index(FIBER)]
        out = exprlang.eval_expr(s_expr, center)
        d = nk.value_of(nk.tangent_at(out, tag, 0))
        return math.copysign(1.0, d)

    def sign_fn(self) -> Callable:
        return lambda t, piece: self.transition_sign(t, piece)


def loop_sign(bundle: PrincipalBundle, path) -> float:
    """Product of fiber cocycle signs along [(src, tgt, piece_idx), ...]."""
    sign = 1.0
    for src, tgt, idx in path:
        t = bundle.total.transition(src, tgt)
        sign *= bundle.transition_sign(t, t.pieces[idx])
    return sign


def cone_over(
    base: Atlas,
    group: str = "R+",
    cocycle: Optional[Callable] = None,
    name: str = "cone",
) -> PrincipalBundle:
    """Attach a scaling fiber to every chart of the base atlas.

    cocycle(transition, piece) -> ±1 chooses the fiber sign on overlaps
    (default +1 everywhere); −1 requires group "Rx".
    """
    if group not in ("R+", "Rx"):
        raise ValueError(f"unknown structure group {group!r}")
    s_box = (0.5, 2.0) if group == "R+" else (-2.0, 2.0)
    s_excl = () if group == "R+" else ((FIBER, -0.5, 0.5),)
    charts = []
    for c in base.charts:
        charts.append(
            Chart(
                c.name,
                c.coords + (FIBER,),
                c.box + (s_box,),
                excluded=c.excluded + s_excl,
                margin=c.margin,
            )
        )
    transitions = []
    for t in base.transitions:
        pieces = []
        for piece in t.pieces:
            eps = 1.0 if cocycle is None else cocycle(t, piece)
            if eps < 0 and group != "Rx":
                raise ValueError("sign-flipping cocycle needs group 'Rx'")
            s_fwd = exprlang.parse(FIBER if eps > 0 else f"-{FIBER}")
            pieces.append(
                TransitionPiece(
                    piece.box + (s_box,),
                    piece.forward + (s_fwd,),
                    piece.inverse + (s_fwd,),
                )
            )
        transitions.append(TransitionMap(t.source, t.target, tuple(pieces)))
    total = Atlas(charts, transitions, fiber_coord=FIBER)
    return PrincipalBundle(name, total, base, group)


def symplectize(
    C: ContactStructure, group: Optional[str] = None
) -> tuple[PrincipalBundle, TensorField]:
    """The homogeneous 2-form ds∧η + s·dη on a cone over the contact base.

    Paired structures symplectize on an "Rx" cone whose cocycle is the
    paired sign pattern; the sign flips of η and s cancel, making ω a
    single-valued 2-form upstairs.
    """
    if group is None:
        group = "Rx" if C.paired else "R+"
    cocycle = None
    if C.paired and C.transition_sign is not None:
        cocycle = C.transition_sign
    P = cone_over(C.atlas, group, cocycle, name=f"cone({C.name})")

    closures = {}
    for chart in P.total.charts:
        dim = chart.dim
        si = chart.index(FIBER)
        base_chart = C.atlas.chart(chart.name)

        def ev(env, dim=dim, si=si, base_chart=base_chart):
            s = env[FIBER]
            vals, parts = field_jet(C.eta, base_chart.name, env)
            out = zeros(dim, 2)
            for i in range(dim - 1):
                out[si][i] = vals[i]
                out[i][si] = -vals[i]
                for j in range(dim - 1):
                    out[i][j] = s * (parts[i][j] - parts[j][i])
            return out

        closures[chart.name] = ev
    omega = TensorField(f"symplectization({C.name})", P.total, (0, 2), closures)
    return P, omega


def symplectic_check(
    omega: TensorField, plan: SamplePlan, example: str | None = None
) -> CheckReport:
    """Closedness (dω = 0) and pointwise nondegeneracy of a 2-form."""
    domega = exterior_derivative(omega)
    threshold = 1e-8

    def residual(chart, coords, env):
        r = max_abs(domega.at(chart, env))
        rows = [
            [nk.value_of(x) for x in row] for row in omega.at(chart, env)
        ]
        det = abs(nk.determinant(rows))
        # relative deficiency: O(1) when the form degenerates outright
        return max(r, max(0.0, 1.0 - det / threshold))

    return run_residual_check(
        "symplectic_form",
        sample_points(omega.atlas, plan),
        residual,
        plan.tolerance,
        plan.seed,
        example=example,
        details={"nondegeneracy_threshold": threshold},
    )


_SCALES = {"R+": (0.5, 2.0), "Rx": (-2.0, -1.0, 0.5, 2.0)}


def homogeneity_check(
    K: TensorField,
    weight: int,
    mode: str,
    plan: SamplePlan,
    bundle: Optional[PrincipalBundle] = None,
    scaling: Optional[Callable[[float], SmoothMap]] = None,
    scales: Optional[tuple] = None,
    tol: float | None = None,
    example: str | None = None,
    check_name: str | None = None,
) -> CheckReport:
    """Compare h_ν-pullbacks of K against the declared scaling law.

    Either a bundle (whose fiber scaling and group-appropriate ν set are
    used) or an explicit scaling family + scales must be given.
    """
    if mode not in ("plain", "positive", "half"):
        raise ValueError(f"unknown homogeneity mode {mode!r}")
    if scaling is None:
        scaling = bundle.scaling
    if scales is None:
        scales = _SCALES[bundle.group]
    tol = plan.tolerance if tol is None else tol

    def factor(nu: float) -> float:
        if mode == "plain":
            return nu**weight
        base = abs(nu) ** weight
        return base if mode == "positive" else math.copysign(base, nu)

    transported = []
    for nu in scales:
        F = scaling(nu)
        T = (
            pullback(F, K)
            if K.valence[0] == 0
            else pullback_tensor(F, K)
        )
        transported.append((factor(nu), T))

    def residual(chart, coords, env):
        here = K.at(chart, env)
        r = 0.0
        for fac, T in transported:
            moved = T.at(chart, env)
            r = max(r, _scaled_diff(moved, here, fac))
        return r

    return run_residual_check(
        check_name or f"homogeneity({K.name})",
        sample_points(K.atlas, plan),
        residual,
        tol,
        plan.seed,
        example=example,
        details={"mode": mode, "weight": weight, "scales": list(scales)},
    )


def _scaled_diff(moved, here, fac: float) -> float:
    if isinstance(moved, list):
        return max(
            (_scaled_diff(a, b, fac) for a, b in zip(moved, here)), default=0.0
        )
    return abs(nk.value_of(moved) - fac * nk.value_of(here))


def require_homogeneous(K, weight, mode, plan, bundle, tol=None):
    rep = homogeneity_check(K, weight, mode, plan, bundle=bundle, tol=tol)
    if not rep.passed:
        raise NotHomogeneous(
            f"{K.name}: {mode} degree-{weight} law fails at {rep.max_residual:.3e}"
        )
    return rep


def liouville_data(
    bundle: PrincipalBundle,
    omega: TensorField,
    plan: SamplePlan | None = None,
    example: str | None = None,
):
    """∇ = s∂s and θ = i_∇ω; optionally certify dθ = ω and θ semibasic."""
    nabla = bundle.liouville()

    closures = {}
    for chart in bundle.total.charts:
        dim = chart.dim
        si = chart.index(FIBER)

        def ev(env, dim=dim, si=si):
            m = omega.at(chart.name, env)
            s = env[FIBER]
            return [s * m[si][j] for j in range(dim)]

        closures[chart.name] = ev
    theta = TensorField(f"liouville_form({omega.name})", bundle.total, (0, 1), closures)

    if plan is None:
        return nabla, theta, None

    dtheta = exterior_derivative(theta)

    def residual(chart_name, coords, env):
        dt = dtheta.at(chart_name, env)
        om = omega.at(chart_name, env)
        si = bundle.fiber_index(chart_name)
        r = abs(nk.value_of(theta.at(chart_name, env)[si]))
        dim = len(om)
        for i in range(dim):
            for j in range(dim):
                r = max(r, abs(nk.value_of(dt[i][j]) - nk.value_of(om[i][j])))
        return r

    rep = run_residual_check(
        "liouville_data",
        sample_points(bundle.total, plan),
        residual,
        1e-9,
        plan.seed,
        example=example,
    )
    return nabla, theta, rep


# -- calibrations ------------------------------------------------------


def abs_s_calibration(bundle: PrincipalBundle) -> TensorField:
    table = {c.name: {(): "abs(s)" if bundle.group == "Rx" else "s"} for c in bundle.total.charts}
    return TensorField.from_exprs("abs_s", bundle.total, (0, 0), table)


def g_calibration(bundle: PrincipalBundle, g: TensorField) -> TensorField:
    """𝔰 = g(∇, ∇): squared length of the scaling field."""
    closures = {}
    for chart in bundle.total.charts:
        si = chart.index(FIBER)

        def ev(env, chart=chart, si=si):
            m = g.at(chart.name, env)
            s = env[FIBER]
            return s * s * m[si][si]

        closures[chart.name] = ev
    return TensorField(f"norm2_liouville({g.name})", bundle.total, (0, 0), closures)


def calibration_check(
    bundle: PrincipalBundle,
    scal: TensorField,
    plan: SamplePlan,
    example: str | None = None,
) -> CheckReport:
    """Positivity plus the Euler identity d𝔰(∇) = 𝔰 (degree-1 law)."""

    def residual(chart, coords, env):
        chart_obj = bundle.total.chart(chart)
        vals, parts = field_jet(scal, chart, env)
        s = env[FIBER]
        si = chart_obj.index(FIBER)
        euler = abs(s * parts[si] - vals)
        positive = 0.0 if vals > 0 else abs(vals) + 1e-6
        return max(euler, positive)

    return run_residual_check(
        "calibration",
        sample_points(bundle.total, plan),
        residual,
        plan.tolerance,
        plan.seed,
        example=example,
    )


# -- homogeneous metric decomposition ---------------------------------


@dataclass
class MetricDecomposition:
    bundle: PrincipalBundle
    A: TensorField  # base (0,0)
    mu: TensorField  # base (0,1)
    g_M: TensorField  # base (0,2) — the shadow metric
    calibrated: bool
    mu_max: float
    report: CheckReport


def decompose_homogeneous_metric(
    bundle: PrincipalBundle,
    g: TensorField,
    scal: TensorField,
    plan: SamplePlan,
    tol: float | None = None,
    example: str | None = None,
    skip_homogeneity: bool = False,
) -> MetricDecomposition:
    """Split g = A·d𝔰²/𝔰 + d𝔰⊗μ + μ⊗d𝔰 + 𝔰·γ and extract the shadow.

    Components are read off on the s=1 lift of each base chart:

        A = g(∇,∇)/𝔰,   μ = (i_∇ g − A·d𝔰)/𝔰,   γ = remainder/𝔰,
        shadow g_M = γ/A − (μ/A)⊗(μ/A).

    The shadow is what all calibrations agree on.  Raises NotHomogeneous /
    NotPositiveDefinite on bad input; the returned report covers reassembly
    at total-space samples and s-independence of the extracted base data.
    """
    tol = plan.tolerance if tol is None else tol
    if not skip_homogeneity:
        require_homogeneous(g, 1, "positive", plan, bundle)

    def pieces_at(chart_name: str, env_total: dict):
        """A, μ_j, γ_{jk} (full total-index range) at one total point."""
        chart = bundle.total.chart(chart_name)
        dim = chart.dim
        si = chart.index(FIBER)
        s = env_total[FIBER]
        gm = g.at(chart_name, env_total)
        sval, sparts = field_jet(scal, chart_name, env_total)
        a_val = s * s * gm[si][si] / sval
        i_nabla = [s * gm[si][j] for j in range(dim)]
        mu = [
            (i_nabla[j] - a_val * sparts[j]) / sval for j in range(dim)
        ]
        gamma = [
            [
                (
                    gm[j][k]
                    - a_val * sparts[j] * sparts[k] / sval
                    - sparts[j] * mu[k]
                    - mu[j] * sparts[k]
                )
                / sval
                for k in range(dim)
            ]
            for j in range(dim)
        ]
        return a_val, mu, gamma, si

    def base_closure(kind: str, chart_name: str):
        base_chart = bundle.base.chart(chart_name)
        bdim = base_chart.dim

        def ev(env, kind=kind, chart_name=chart_name, bdim=bdim):
            env_t = bundle.lift_env(chart_name, env, 1.0)
            a_val, mu, gamma, si = pieces_at(chart_name, env_t)
            keep = [j for j in range(bdim + 1) if j != si]
            if kind == "A":
                return a_val
            if kind == "mu":
                return [mu[j] for j in keep]
            return [
                [
                    gamma[j][k] / a_val - (mu[j] / a_val) * (mu[k] / a_val)
                    for k in keep
                ]
                for j in keep
            ]

        return ev

    A = TensorField(
        "fiber_weight", bundle.base, (0, 0),
        {c.name: base_closure("A", c.name) for c in bundle.base.charts},
    )
    mu = TensorField(
        "mixed_form", bundle.base, (0, 1),
        {c.name: base_closure("mu", c.name) for c in bundle.base.charts},
    )
    g_M = TensorField(
        "shadow_metric", bundle.base, (0, 2),
        {c.name: base_closure("gM", c.name) for c in bundle.base.charts},
    )

    # positivity of the shadow at base samples
    mu_max = 0.0
    for chart in bundle.base.charts:
        for coords, env in sample_chart(chart, plan):
            rows = [
                [nk.value_of(x) for x in row] for row in g_M.at(chart.name, env)
            ]
            lo = nk.min_eigenvalue(rows)
            if lo <= 0.0:
                raise NotPositiveDefinite(
                    f"shadow metric eigenvalue {lo:.3e} at {coords} in {chart.name}"
                )
            mu_max = max(mu_max, max_abs(mu.at(chart.name, env)))

    # reassembly + s-independence of the extracted data
    def residual(chart_name, coords, env):
        chart = bundle.total.chart(chart_name)
        dim = chart.dim
        a_val, mu_t, gamma, si = pieces_at(chart_name, env)
        sval, sparts = field_jet(scal, chart_name, env)
        gm = g.at(chart_name, env)
        r = 0.0
        for j in range(dim):
            for k in range(dim):
                rebuilt = (
                    a_val * sparts[j] * sparts[k] / sval
                    + sparts[j] * mu_t[k]
                    + mu_t[j] * sparts[k]
                    + sval * gamma[j][k]
                )
                r = max(r, abs(nk.value_of(rebuilt) - nk.value_of(gm[j][k])))
        # data read at this fiber height must match the s=1 extraction
        base_env = {c: env[c] for c in chart.coords if c != FIBER}
        keep = [j for j in range(dim) if j != si]
        r = max(r, abs(nk.value_of(a_val) - nk.value_of(A.at(chart_name, base_env))))
        mu_base = mu.at(chart_name, base_env)
        for idx, j in enumerate(keep):
            r = max(r, abs(nk.value_of(mu_t[j]) - nk.value_of(mu_base[idx])))
        return r

    rep = run_residual_check(
        "metric_decomposition",
        sample_points(bundle.total, plan),
        residual,
        tol,
        plan.seed,
        example=example,
    )

    return MetricDecomposition(
        bundle=bundle,
        A=A,
        mu=mu,
        g_M=g_M,
        calibrated=mu_max <= tol,
        mu_max=mu_max,
        report=rep,
    )


def induced_calibration(
    bundle: PrincipalBundle, g_M: TensorField, C: ContactStructure
) -> TensorField:
    """𝔰(x, s) = |s| · (dual norm of η at x in the base metric).

    The dual norm is √(ηᵀ G⁻¹ η), computed by a linear solve so the result
    stays differentiable; chart-wise it is insensitive to the paired sign
    of η (the form enters squared).
    """
    closures = {}
    for chart in bundle.total.charts:
        base_chart = bundle.base.chart(chart.name)

        def ev(env, chart=chart, base_chart=base_chart):
            ev_vals = C.eta.at(base_chart.name, env)
            rows = g_M.at(base_chart.name, env)
            sol = nk.solve_linear(rows, list(ev_vals))
            norm2 = nk.sum_(a * b for a, b in zip(ev_vals, sol))
            s = env[FIBER]
            mag = nk.absolute(s) if bundle.group == "Rx" else s
            return mag * nk.sqrt(norm2)

        closures[chart.name] = ev
    return TensorField(f"induced_calibration({C.name})", bundle.total, (0, 0), closures)


def induced_metric(
    bundle: PrincipalBundle, g_M: TensorField, scal: TensorField
) -> TensorField:
    """g̃ = 𝔰·((d𝔰/𝔰)² + lifted g_M): the homogeneous metric of a shadow."""
    closures = {}
    for chart in bundle.total.charts:
        dim = chart.dim
        si = chart.index(FIBER)
        base_chart = bundle.base.chart(chart.name)

        def ev(env, dim=dim, si=si, base_chart=base_chart):
            sval, sparts = field_jet(scal, chart.name, env)
            zeta = [sparts[j] / sval for j in range(dim)]
            gm = g_M.at(base_chart.name, env)
            keep = [j for j in range(dim) if j != si]
            out = zeros(dim, 2)
            for j in range(dim):
                for k in range(dim):
                    out[j][k] = sval * zeta[j] * zeta[k]
            for a, ja in enumerate(keep):
                for b, jb in enumerate(keep):
                    out[ja][jb] = out[ja][jb] + sval * gm[a][b]
            return out

        closures[chart.name] = ev
    return TensorField(f"induced_metric({g_M.name})", bundle.total, (0, 2), closures)
