"""Gallery of built-in worked structures, keyed by name.

Every entry couples a concrete geometric object (an atlas, the fields that
live on it, and the structure the rest of the library consumes) with a
*declared* list of checks, each carrying the verdict it is expected to
produce.  Expected failures are data here, not test-suite special cases:
an entry whose construction is known to obstruct some property declares
that check with ``expect="fail"`` and a verification run counts the
failure as a match.

Entries can also be written out as plain-text definition files (grammar in
``docs/corpus-format.md``) so external tools can consume the same charts,
transition formulas, and component expressions.  Only hand-entered inputs
carry expressions; everything derived (solved complex structures, pulled
back forms, assembled products) appears in those files as a ``builtin``
marker with a one-line description.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field as dc_field
from pathlib import Path
from typing import Callable, Iterable

from . import exprlang
from . import numkernel as nk
from .bundle import (
    FIBER,
    PrincipalBundle,
    cone_over,
    homogeneity_check,
    loop_sign,
    symplectic_check,
    symplectize,
)
from .contact import (
    ContactStructure,
    is_contact_form,
    reeb_field,
    reeb_residual_check,
)
from .kahler import (
    almost_complex_check,
    compatibility_check,
    compatibility_tensor,
    kahler_integrability_check,
    kahlerianization,
    reconstruct_main1,
)
from .manifold import (
    Atlas,
    Chart,
    Point,
    SamplePlan,
    TransitionMap,
    TransitionPiece,
    apply_transition,
    atlas_consistency_check,
    sample_points,
)
from .product import (
    invariant_slope_form,
    product_kahler_lift,
    product_routes_check,
    sasakian_product,
)
from .report import (
    FAIL,
    PASS,
    CheckReport,
    Witness,
    run_residual_check,
    verdict_for,
)
from .sasaki import (
    LeviStructure,
    contact_metric_check,
    killing_check,
    n_tensors,
    paired_consistency_check,
    sasaki_check,
    standard_darboux_levi,
    theorem54_check,
)
from .tensor import (
    SmoothMap,
    TensorField,
    cross_chart_consistency,
    exterior_derivative,
    lie_bracket,
    lie_derivative,
    max_abs,
    pullback,
    tf_add,
    tf_scale,
    zeros,
)


class UnknownKey(KeyError):
    """Raised when a gallery key (or a parameter for it) is not recognised."""


# Plan used by builders that must gate their own inputs (products refuse
# non-normal factors); small and fixed so construction stays fast and
# deterministic no matter what plan the caller verifies with afterwards.
_GATE_PLAN = SamplePlan(seed=42, points_per_chart=6, tolerance=1e-7)

_PI = repr(math.pi)


# -- declared checks ---------------------------------------------------


@dataclass(frozen=True)
class CheckJob:
    """One declared verification: a named runner plus its expected verdict.

    ``run(plan, tol)`` executes the check under the given sample plan; a
    ``tol`` of None means the declared tolerance.  ``expect`` is the
    verdict ("pass" or "fail") that counts as a match for this entry.
    """

    name: str
    expect: str
    tolerance: float
    run: Callable = dc_field(repr=False, compare=False)


def _job(name: str, tol: float, fn: Callable, expect: str = PASS) -> CheckJob:
    def run(plan: SamplePlan, tol_override: float | None = None):
        return fn(plan, tol if tol_override is None else tol_override)

    return CheckJob(name, expect, tol, run)


def _atlas_job(name: str, atlas: Atlas, key: str, tol: float = 1e-10) -> CheckJob:
    return _job(
        name,
        tol,
        lambda plan, t: atlas_consistency_check(atlas, plan, tol=t, example=key),
    )


def _sampled_job(
    name: str,
    tol: float,
    atlas: Atlas,
    residual: Callable,
    key: str,
    expect: str = PASS,
    details: dict | None = None,
) -> CheckJob:
    """Declared check evaluating a pointwise residual over chart samples."""

    def run(plan: SamplePlan, t: float | None = None):
        return run_residual_check(
            name,
            sample_points(atlas, plan),
            residual,
            tol if t is None else t,
            plan.seed,
            example=key,
            details=dict(details) if details else None,
        )

    return CheckJob(name, expect, tol, run)


# -- gallery entries ---------------------------------------------------


@dataclass
class GalleryField:
    """A named tensor on one of an entry's atlases.

    ``source`` records, for the definition files, how the field is defined:
    "dsl" fields
    were entered as component expressions and are emitted verbatim;
    "builtin" fields are computed by library code and only their note is
    emitted.
    """

    name: str
    atlas_key: str
    field: TensorField
    source: str
    note: str = ""


@dataclass
class GalleryMap:
    name: str
    src_key: str
    dst_key: str
    map: SmoothMap


@dataclass
class Example:
    key: str
    summary: str
    atlases: dict[str, Atlas]  # "main" first; insertion order is emitted order
    fields: list[GalleryField]
    maps: list[GalleryMap]
    structure: object
    checks: tuple[CheckJob, ...]
    params: dict

    @property
    def atlas(self) -> Atlas:
        return self.atlases["main"]

    def check(self, name: str) -> CheckJob:
        for job in self.checks:
            if job.name == name:
                return job
        raise UnknownKey(f"{self.key}: no declared check named {name!r}")


# -- twisted-wrap atlases (the two-chart circle gluings) ----------------


def _wrap_atlas(extra: tuple[tuple[str, tuple[float, float]], ...]) -> Atlas:
    """Two charts over a circle glued with a half-shifted second chart.

    The loop coordinate x runs over ]0,1[ and ]1/2,3/2[; the two overlap
    components are the identity and the shift x+1 combined with a sign
    flip of every extra coordinate.  This is the smallest atlas on which
    an orientation-reversing gluing can be written with interval boxes.
    """
    coords = ("x",) + tuple(c for c, _ in extra)
    boxes = tuple(b for _, b in extra)
    chart_o = Chart("O", coords, ((0.0, 1.0),) + boxes)
    chart_u = Chart("U", coords, ((0.5, 1.5),) + boxes)

    def ident():
        return tuple(exprlang.parse(c) for c in coords)

    def flipped(x_expr: str):
        out = [exprlang.parse(x_expr)]
        out += [exprlang.parse(f"-{c}") for c, _ in extra]
        return tuple(out)

    def pieces(shared_x, wrap_x, fwd_x, inv_x):
        shared = TransitionPiece((shared_x,) + boxes, ident(), ident())
        wrap = TransitionPiece((wrap_x,) + boxes, flipped(fwd_x), flipped(inv_x))
        return (shared, wrap)

    t_ou = TransitionMap("O", "U", pieces((0.5, 1.0), (0.0, 0.5), "x + 1", "x - 1"))
    t_uo = TransitionMap("U", "O", pieces((0.5, 1.0), (1.0, 1.5), "x - 1", "x + 1"))
    return Atlas([chart_o, chart_u], [t_ou, t_uo])


def _wrap_sign(t: TransitionMap, piece: TransitionPiece) -> float:
    """-1 on the shifted overlap component, +1 on the shared one."""
    lo, hi = piece.box[0]
    mid = 0.5 * (lo + hi)
    moved = exprlang.eval_expr(piece.forward[0], {"x": mid})
    return -1.0 if abs(moved - mid) > 0.25 else 1.0


# Going once around the loop: through the shared overlap, then back
# through the shifted one.  Piece 0 is shared, piece 1 is the wrap.
_LOOP_PATH = (("O", "U", 0), ("U", "O", 1))

_CIRCLE = _wrap_atlas(())
_JET_EXTRA = (("p", (-3.5, 3.5)), ("z", (-3.5, 3.5)))

# dz - p dx on each chart; the wrap flips it, so the structure is paired.
_JET_ETA_TABLE = {(0,): "-p", (2,): "1"}
# The quarter turn of the kernel frame: the x-direction goes to the
# p-direction, the p-direction to minus the horizontal lift of x.
_JET_ENDO_TABLE = {(1, 0): "1", (0, 1): "-1", (2, 1): "-p"}


def _jet_base_structure() -> LeviStructure:
    atlas = _wrap_atlas(_JET_EXTRA)
    eta = TensorField.from_exprs(
        "kernel_form",
        atlas,
        (0, 1),
        {"O": dict(_JET_ETA_TABLE), "U": dict(_JET_ETA_TABLE)},
    )
    contact = ContactStructure(
        "twisted_jet_contact",
        atlas,
        eta,
        paired=True,
        transition_sign=_wrap_sign,
    )
    endo = TensorField.from_exprs(
        "kernel_rotation",
        atlas,
        (1, 1),
        {"O": dict(_JET_ENDO_TABLE), "U": dict(_JET_ENDO_TABLE)},
    )
    return LeviStructure("twisted_jet", contact, endo)


# -- mobius-band -------------------------------------------------------


def _build_mobius_band(params: dict) -> Example:
    _reject_params("mobius-band", params)
    bundle = cone_over(_CIRCLE, "Rx", _wrap_sign, name="twisted_line_bundle")
    key = "mobius-band"

    def loop_run(plan: SamplePlan, tol: float | None = None):
        tol = 0.0 if tol is None else tol
        sign = loop_sign(bundle, _LOOP_PATH)
        return _scalar_report(
            "loop_sign", plan, tol, abs(sign - (-1.0)), key,
            details={"path": [list(step) for step in _LOOP_PATH], "sign": sign},
        )

    checks = (
        _atlas_job("atlas_consistency", bundle.total, key),
        _atlas_job("base_atlas_consistency", bundle.base, key),
        CheckJob("loop_sign", PASS, 0.0, loop_run),
    )
    return Example(
        key=key,
        summary="twisted real line bundle over the circle; its gluing-sign "
        "loop product is -1, so no global nonvanishing section exists",
        atlases={"main": bundle.total, "circle": bundle.base},
        fields=[],
        maps=[],
        structure=bundle,
        checks=checks,
        params={},
    )


def _scalar_report(
    name: str, plan: SamplePlan, tol: float, residual: float, key: str,
    details: dict | None = None,
) -> CheckReport:
    """Report for a single derived number (no pointwise sampling)."""
    verdict = verdict_for(residual, tol, None)
    witness = Witness("-", (), residual) if verdict == FAIL else None
    return CheckReport(
        check=name,
        seed=plan.seed,
        samples=1,
        tolerance=tol,
        max_residual=residual,
        per_chart={},
        verdict=verdict,
        example=key,
        witness=witness,
        details=details or {},
    )


# -- darboux -----------------------------------------------------------


def _build_darboux(n: int, params: dict) -> Example:
    key = f"darboux-{n}"
    _reject_params(key, params)
    struct = standard_darboux_levi(n)
    contact = struct.contact
    atlas = contact.atlas

    n_fields = n_tensors(struct)

    def n_residual(chart, coords, env):
        return max(max_abs(f.at(chart, env)) for f in n_fields.values())

    checks = (
        _atlas_job("atlas_consistency", atlas, key),
        _job(
            "contact_form", 1e-7,
            lambda plan, t: is_contact_form(
                contact, dataclasses.replace(plan, tolerance=t), example=key
            ),
        ),
        _job(
            "reeb_residual", 1e-9,
            lambda plan, t: reeb_residual_check(contact, plan, tol=t, example=key),
        ),
        _job(
            "structure_axioms", 1e-8,
            lambda plan, t: struct.validate(plan, tol=t, example=key),
        ),
        _job(
            "contact_metric", 1e-7,
            lambda plan, t: contact_metric_check(struct, plan, tol=t, example=key),
        ),
        _job(
            "sasaki", 1e-7,
            lambda plan, t: sasaki_check(struct, plan, tol=t, example=key),
        ),
        _job(
            "killing", 1e-8,
            lambda plan, t: killing_check(struct, plan, tol=t, example=key),
        ),
        _job(
            "second_order_identity", 1e-7,
            lambda plan, t: theorem54_check(struct, plan, tol=t, example=key),
        ),
        _sampled_job("torsion_tensors_vanish", 1e-7, atlas, n_residual, key),
    )
    fields = [
        GalleryField("eta", "main", contact.eta, "dsl"),
        GalleryField("endo", "main", struct.phibar, "dsl"),
        GalleryField(
            "metric", "main", struct.metric(), "builtin",
            "eta squared plus the transverse pairing of eta's differential "
            "with the endomorphism",
        ),
        GalleryField(
            "reeb", "main", contact.reeb(), "builtin",
            "unique field pairing to 1 with eta and to 0 with its differential",
        ),
    ]
    return Example(
        key=key,
        summary=f"flat {2 * n + 1}-dimensional normal contact metric structure "
        "in a single global chart",
        atlases={"main": atlas},
        fields=fields,
        maps=[],
        structure=struct,
        checks=checks,
        params={},
    )


# -- mobius-cotangent --------------------------------------------------


def _twisted_kahler_data():
    """Shared construction: the cone pair over the twisted jet structure."""
    struct = _jet_base_structure()
    pair = kahlerianization(struct, slope=0.0)
    return struct, pair


def _cot_complex_structure(atlas: Atlas) -> TensorField:
    """Closed-form half-invariant complex structure on the twisted cone.

    In each chart, with kernel frame (horizontal lift X = d/dx + p d/dz,
    d/dp), scaling field s d/ds and kernel form dz - p dx:  the scaling
    direction rotates into the kernel-form direction and X into d/dp, all
    graded by the sign of the fiber.  Entered by hand (it is not a DSL
    expression: the fiber sign has a kink at s = 0, which the excluded
    band keeps away from samples).
    """
    closures = {}
    for chart in atlas.charts:
        si = chart.index(FIBER)
        xi_, pi_, zi_ = (chart.index(c) for c in ("x", "p", "z"))

        def ev(env, si=si, xi_=xi_, pi_=pi_, zi_=zi_, dim=chart.dim):
            p, s = env["p"], env[FIBER]
            sg = nk.signum(s)
            m = zeros(dim, 2)
            m[pi_][xi_] = sg
            m[si][xi_] = sg * p * s
            m[xi_][pi_] = -sg
            m[zi_][pi_] = -sg * p
            m[si][zi_] = -sg * s
            m[zi_][si] = sg / s
            return m

        closures[chart.name] = ev
    return TensorField("half_invariant_complex_structure", atlas, (1, 1), closures)


def _cot_eigenframe(atlas: Atlas):
    """The four complex frame fields of the twisted cone, as (re, im) pairs.

    Complex vectors are represented by pairs of real fields so that all
    bracket arithmetic stays real: [Z, W] splits into the four real
    brackets of the parts.
    """

    def frame_field(name, comp_fn):
        closures = {}
        for chart in atlas.charts:
            def ev(env, chart=chart):
                return comp_fn(chart, env)

            closures[chart.name] = ev
        return TensorField(name, atlas, (1, 0), closures)

    def along(chart, coord, value):
        out = [0.0] * chart.dim
        out[chart.index(coord)] = value
        return out

    def x_lift(chart, env):
        out = [0.0] * chart.dim
        out[chart.index("x")] = 1.0
        out[chart.index("z")] = env["p"]
        return out

    scaling = frame_field("scaling", lambda c, e: along(c, FIBER, e[FIBER]))
    sgn_dz = frame_field("sgn_dz", lambda c, e: along(c, "z", nk.signum(e[FIBER])))
    sgn_dp = frame_field("sgn_dp", lambda c, e: along(c, "p", nk.signum(e[FIBER])))
    horizontal = frame_field("x_lift", x_lift)

    # eigenvalue +i: (sgn dz, scaling), (sgn dp, X);  eigenvalue -i:
    # (scaling, sgn dz), (X, sgn dp) -- real part first, then imaginary.
    a1 = (sgn_dz, scaling)
    a2 = (sgn_dp, horizontal)
    b1 = (scaling, sgn_dz)
    b2 = (horizontal, sgn_dp)
    return a1, a2, b1, b2


def complex_pair_bracket(z1, z2):
    """[Z1, Z2] for complex fields given as (re, im) pairs of real fields."""
    u1, v1 = z1
    u2, v2 = z2
    re = tf_add(
        lie_bracket(u1, u2), tf_scale(lie_bracket(v1, v2), -1.0), name="re_bracket"
    )
    im = tf_add(lie_bracket(u1, v2), lie_bracket(v1, u2), name="im_bracket")
    return re, im


def _pair_residual(fields: Iterable) -> Callable:
    def residual(chart, coords, env):
        return max(max_abs(f.at(chart, env)) for f in fields)

    return residual


def _build_mobius_cotangent(params: dict) -> Example:
    key = "mobius-cotangent"
    _reject_params(key, params)
    struct, pair = _twisted_kahler_data()
    total = pair.bundle.total
    jmat = _cot_complex_structure(total)
    a1, a2, b1, b2 = _cot_eigenframe(total)

    def mismatch(chart, coords, env):
        want = jmat.at(chart, env)
        got = pair.J.at(chart, env)
        dim = len(want)
        return max(
            abs(nk.value_of(want[i][j] - got[i][j]))
            for i in range(dim)
            for j in range(dim)
        )

    # [A2, B2] is the one bracket that does *not* vanish: it equals
    # A1 - i B1, twice the sign-graded kernel-form direction.  The three
    # other mixed pairs and both eigenbundle pairs commute.
    re_ab, im_ab = complex_pair_bracket(a2, b2)
    re_want = tf_add(a1[0], b1[1], name="re_mixed")  # re(A1 - iB1) = reA1 + imB1
    im_want = tf_add(a1[1], tf_scale(b1[0], -1.0), name="im_mixed")

    def mixed_residual(chart, coords, env):
        r = max_abs(
            [x - y for x, y in zip(re_ab.at(chart, env), re_want.at(chart, env))]
        )
        return max(
            r,
            max_abs(
                [x - y for x, y in zip(im_ab.at(chart, env), im_want.at(chart, env))]
            ),
        )

    eigen_brackets = [
        f for pair_ in (complex_pair_bracket(a1, a2), complex_pair_bracket(b1, b2))
        for f in pair_
    ]
    cross_brackets = [
        f
        for pair_ in (
            complex_pair_bracket(a1, b1),
            complex_pair_bracket(a1, b2),
            complex_pair_bracket(a2, b1),
        )
        for f in pair_
    ]

    def hom(field, weight, mode):
        return lambda plan, t: homogeneity_check(
            field, weight, mode, plan, bundle=pair.bundle, tol=t, example=key,
        )

    def crosscheck(field, label):
        return lambda plan, t: cross_chart_consistency(
            field, plan, tol=t, example=key, check_name=f"single_valued({label})"
        )

    checks = (
        _atlas_job("atlas_consistency", total, key),
        _atlas_job("base_atlas_consistency", struct.atlas, key),
        _job(
            "symplectic_form", 1e-8,
            lambda plan, t: symplectic_check(
                pair.omega, dataclasses.replace(plan, tolerance=t), example=key
            ),
        ),
        _job("single_valued_two_form", 1e-9, crosscheck(pair.omega, "two_form")),
        _job("single_valued_metric", 1e-9, crosscheck(pair.g, "metric")),
        _job("single_valued_complex", 1e-9, crosscheck(jmat, "complex")),
        _job("homogeneous_two_form", 1e-8, hom(pair.omega, 1, "plain")),
        _job("homogeneous_metric", 1e-8, hom(pair.g, 1, "positive")),
        _job("homogeneous_complex", 1e-8, hom(jmat, 0, "half")),
        _job(
            "almost_complex", 1e-8,
            lambda plan, t: almost_complex_check(jmat, plan, tol=t, example=key),
        ),
        _job(
            "integrability", 1e-8,
            lambda plan, t: kahler_integrability_check(
                jmat, plan, tol=t, example=key
            ),
        ),
        _job(
            "compatibility", 1e-8,
            lambda plan, t: compatibility_check(
                pair.omega, pair.g, jmat, plan, tol=t, example=key
            ),
        ),
        _sampled_job("complex_structure_solves_pair", 1e-9, total, mismatch, key),
        _sampled_job(
            "eigenframe_commutators", 1e-9, total,
            _pair_residual(eigen_brackets), key,
        ),
        _sampled_job(
            "cross_frame_commutators", 1e-9, total,
            _pair_residual(cross_brackets), key,
        ),
        _sampled_job(
            "mixed_commutator_identity", 1e-9, total, mixed_residual, key,
        ),
    )
    fields = [
        GalleryField("eta", "base", struct.contact.eta, "dsl"),
        GalleryField("endo", "base", struct.phibar, "dsl"),
        GalleryField(
            "two_form", "main", pair.omega, "builtin",
            "homogeneous two-form of the fiberwise scaling bundle",
        ),
        GalleryField(
            "metric", "main", pair.g, "builtin",
            "degree-1 cone metric calibrated by the absolute fiber",
        ),
        GalleryField(
            "complex_structure", "main", jmat, "builtin",
            "half-invariant rotation exchanging the scaling direction with "
            "the kernel-form direction; certified equal to the solved "
            "compatibility tensor",
        ),
        GalleryField(
            "frame_scaling", "main", a1[1], "builtin",
            "scaling field s d/ds; imaginary part of the first "
            "plus-eigenvalue frame",
        ),
        GalleryField(
            "frame_sgn_dz", "main", a1[0], "builtin",
            "sign-graded kernel-form direction; real part of the first "
            "plus-eigenvalue frame",
        ),
        GalleryField(
            "frame_sgn_dp", "main", a2[0], "builtin",
            "sign-graded fiber-slope direction; real part of the second "
            "plus-eigenvalue frame",
        ),
        GalleryField(
            "frame_x_lift", "main", a2[1], "builtin",
            "horizontal lift of the loop direction; imaginary part of the "
            "second plus-eigenvalue frame",
        ),
    ]
    return Example(
        key=key,
        summary="non-trivializable two-sided cone over the twisted jet "
        "structure, carrying a single-valued homogeneous symplectic/metric "
        "pair whose compatibility tensor is an integrable half-invariant "
        "complex structure",
        atlases={"main": total, "base": struct.atlas},
        fields=fields,
        maps=[],
        structure=pair,
        checks=checks,
        params={},
    )


# -- mobius-jet --------------------------------------------------------


def _section_map(name: str, p_expr: str, z_expr: str, base: Atlas) -> SmoothMap:
    table = {}
    for chart in ("O", "U"):
        table[chart] = (chart, ("x", p_expr, z_expr))
    return SmoothMap.from_exprs(name, _CIRCLE, base, table)


def _build_mobius_jet(params: dict) -> Example:
    key = "mobius-jet"
    _reject_params(key, params)
    struct, pair = _twisted_kahler_data()
    contact = struct.contact
    base = struct.atlas
    total = pair.bundle.total
    jmat = pair.J

    base_idx = {c.name: [c.coords.index(x) for x in ("x", "p", "z")] for c in base.charts}

    def lifted(env, s):
        lift = dict(env)
        lift[FIBER] = s
        return lift

    def projected_eta(chart, env, s=1.0):
        total_chart = total.chart(chart)
        si = total_chart.index(FIBER)
        om = pair.omega.at(chart, lifted(env, s))
        # contraction of the two-form with the scaling field, divided by
        # the fiber: (i_{s d/ds} omega)_j / s = omega_{sj}
        return [om[si][j] for j in base_idx[chart]]

    def projected_endo(chart, env, s=1.0):
        jm = jmat.at(chart, lifted(env, s))
        return [[jm[i][j] for j in base_idx[chart]] for i in base_idx[chart]]

    def projected_metric(chart, env, s=1.0):
        gm = pair.g.at(chart, lifted(env, s))
        return [[gm[i][j] for j in base_idx[chart]] for i in base_idx[chart]]

    eta_proj = TensorField(
        "projected_kernel_form", base, (0, 1),
        {c.name: (lambda env, n=c.name: projected_eta(n, env)) for c in base.charts},
    )
    endo_proj = TensorField(
        "projected_rotation", base, (1, 1),
        {c.name: (lambda env, n=c.name: projected_endo(n, env)) for c in base.charts},
    )
    metric_proj = TensorField(
        "projected_metric", base, (0, 2),
        {c.name: (lambda env, n=c.name: projected_metric(n, env)) for c in base.charts},
    )

    _PROBES = (1.0, 1.7, -1.3)

    def projectable_residual(chart, coords, env):
        """The cone data descends: the projected form is fiber-independent,
        the projected rotation is graded by the fiber sign, the projected
        metric block scales with the absolute fiber."""
        r = 0.0
        e1 = projected_eta(chart, env, 1.0)
        f1 = projected_endo(chart, env, 1.0)
        g1 = projected_metric(chart, env, 1.0)
        for s in _PROBES[1:]:
            es = projected_eta(chart, env, s)
            r = max(r, max_abs([a - b for a, b in zip(es, e1)]))
            sg = 1.0 if s > 0 else -1.0
            fs = projected_endo(chart, env, s)
            r = max(
                r,
                max(
                    abs(nk.value_of(fs[i][j] - sg * f1[i][j]))
                    for i in range(3)
                    for j in range(3)
                ),
            )
            gs = projected_metric(chart, env, s)
            r = max(
                r,
                max(
                    abs(nk.value_of(gs[i][j] - abs(s) * g1[i][j]))
                    for i in range(3)
                    for j in range(3)
                ),
            )
        return r

    metric_here = struct.metric()

    def reference_residual(chart, coords, env):
        r = max_abs(
            [a - b for a, b in zip(projected_eta(chart, env), contact.eta.at(chart, env))]
        )
        fm = projected_endo(chart, env)
        want_f = struct.phibar.at(chart, env)
        gm = projected_metric(chart, env)
        want_g = metric_here.at(chart, env)
        for i in range(3):
            for j in range(3):
                r = max(r, abs(nk.value_of(fm[i][j] - want_f[i][j])))
                r = max(r, abs(nk.value_of(gm[i][j] - want_g[i][j])))
        return r

    sine = _section_map("section_sine", f"{_PI} * cos({_PI} * x)", f"sin({_PI} * x)", base)
    cosine = _section_map(
        "section_cosine", f"-{_PI} * sin({_PI} * x)", f"cos({_PI} * x)", base
    )

    def section_values(sm: SmoothMap, chart: str, x: float):
        return sm.apply(chart, {"x": x})

    def sections_global_residual(chart, coords, env):
        """A section formula is one tensorial object: pushing its value
        through the overlap gluing lands on the other chart's formula."""
        other = "U" if chart == "O" else "O"
        r = 0.0
        for sm in (sine, cosine):
            vals = [nk.value_of(v) for v in section_values(sm, chart, env["x"])]
            moved = apply_transition(base, Point(chart, tuple(vals)), other)
            want = section_values(sm, other, moved.coords[0])
            r = max(
                r,
                max(abs(a - nk.value_of(b)) for a, b in zip(moved.coords, want)),
            )
        return r

    def sections_independent_residual(chart, coords, env):
        p1, z1 = (nk.value_of(v) for v in section_values(sine, chart, env["x"])[1:])
        p2, z2 = (nk.value_of(v) for v in section_values(cosine, chart, env["x"])[1:])
        return abs((p1 * z2 - z1 * p2) - math.pi)

    def loop_run(plan: SamplePlan, tol: float | None = None):
        tol = 0.0 if tol is None else tol
        sign = 1.0
        for src, tgt, idx in _LOOP_PATH:
            t = base.transition(src, tgt)
            sign *= contact.transition_sign(t, t.pieces[idx])
        return _scalar_report(
            "loop_sign", plan, tol, abs(sign - (-1.0)), key,
            details={"path": [list(step) for step in _LOOP_PATH], "sign": sign},
        )

    checks = (
        _atlas_job("atlas_consistency", base, key),
        _job(
            "contact_form", 1e-7,
            lambda plan, t: is_contact_form(
                contact, dataclasses.replace(plan, tolerance=t), example=key
            ),
        ),
        _job(
            "reeb_residual", 1e-9,
            lambda plan, t: reeb_residual_check(contact, plan, tol=t, example=key),
        ),
        _sampled_job("projectable", 1e-9, base, projectable_residual, key),
        _sampled_job("projection_reference", 1e-9, base, reference_residual, key),
        _job(
            "paired_consistency", 1e-8,
            lambda plan, t: paired_consistency_check(struct, plan, tol=t, example=key),
        ),
        _job(
            "sasaki", 1e-8,
            lambda plan, t: sasaki_check(struct, plan, tol=t, example=key),
        ),
        CheckJob("loop_sign", PASS, 0.0, loop_run),
        _sampled_job("sections_global", 1e-9, _CIRCLE, sections_global_residual, key),
        _sampled_job(
            "sections_independent", 1e-9, _CIRCLE, sections_independent_residual, key
        ),
    )
    fields = [
        GalleryField("eta", "main", contact.eta, "dsl"),
        GalleryField("endo", "main", struct.phibar, "dsl"),
        GalleryField(
            "metric", "main", metric_here, "builtin",
            "eta squared plus the transverse pairing; single-valued even "
            "though eta is only paired",
        ),
        GalleryField(
            "eta_projected", "main", eta_proj, "builtin",
            "two-form of the cone contracted with the scaling field, over "
            "the fiber, restricted to the unit branch",
        ),
        GalleryField(
            "endo_projected", "main", endo_proj, "builtin",
            "base block of the cone complex structure on the unit branch",
        ),
        GalleryField(
            "metric_projected", "main", metric_proj, "builtin",
            "base block of the cone metric on the unit branch",
        ),
    ]
    maps = [
        GalleryMap("section_sine", "circle", "main", sine),
        GalleryMap("section_cosine", "circle", "main", cosine),
        GalleryMap(
            "base_projection", "cone", "main",
            SmoothMap.from_exprs(
                "base_projection", total, base,
                {c.name: (c.name, ("x", "p", "z")) for c in total.charts},
            ),
        ),
    ]
    return Example(
        key=key,
        summary="paired (sign-glued) contact metric structure on the twisted "
        "jet bundle, obtained by projecting the cone data to the unit "
        "branch; globally trivializable as a vector bundle via two explicit "
        "independent sections",
        atlases={"main": base, "circle": _CIRCLE, "cone": total},
        fields=fields,
        maps=maps,
        structure=struct,
        checks=checks,
        params={},
    )


# -- spheres -----------------------------------------------------------


def _sphere_atlas(dimb: int) -> Atlas:
    coords = tuple(f"u{i}" for i in range(1, dimb + 1))
    box = ((-3.0, 3.0),) * dimb
    # keep |u| away from the inversion center so overlap images stay tame
    excl = (("u1", -0.2, 0.2),)
    north = Chart("N", coords, box, excluded=excl)
    south = Chart("S", coords, box, excluded=excl)
    norm2 = " + ".join(f"{c}^2" for c in coords)
    inv = tuple(exprlang.parse(f"4 * {c} / ({norm2})") for c in coords)
    piece = TransitionPiece(((-25.0, 25.0),) * dimb, inv, inv)
    return Atlas(
        [north, south],
        [TransitionMap("N", "S", (piece,)), TransitionMap("S", "N", (piece,))],
    )


def _ambient_atlas(n: int) -> Atlas:
    coords = []
    for k in range(1, n + 2):
        coords += [f"p{k}", f"q{k}"]
    return Atlas([Chart("ambient", tuple(coords), ((-2.5, 2.5),) * len(coords))])


def _ambient_rotation_form(ambient: Atlas, n: int) -> TensorField:
    table = {}
    for k in range(n + 1):
        table[(2 * k,)] = f"0.5 * q{k + 1}"
        table[(2 * k + 1,)] = f"-0.5 * p{k + 1}"
    return TensorField.from_exprs(
        "ambient_rotation_form", ambient, (0, 1), {"ambient": table}
    )


def _ambient_flat_metric(ambient: Atlas) -> TensorField:
    dim = ambient.charts[0].dim
    return TensorField.from_exprs(
        "ambient_flat_metric", ambient, (0, 2),
        {"ambient": {(i, i): "1" for i in range(dim)}},
    )


def _sphere_embedding(dimb: int, sphere: Atlas, ambient: Atlas) -> SmoothMap:
    coords = sphere.charts[0].coords
    norm2 = " + ".join(f"{c}^2" for c in coords)
    d_expr = f"({norm2} + 4)"
    body = tuple(f"8 * {c} / {d_expr}" for c in coords)
    north = body + (f"2 * (({norm2}) - 4) / {d_expr}",)
    south = body + (f"2 * (4 - ({norm2})) / {d_expr}",)
    return SmoothMap.from_exprs(
        "sphere_embedding", sphere, ambient,
        {"N": ("ambient", north), "S": ("ambient", south)},
    )


def _sphere_frame(env: dict, coords: tuple, last_sign: float):
    """Embedding value y and Jacobian M in closed form.

    For the stereographic parametrisation y_i = 8 u_i / D, y_last =
    ±2(|u|² - 4)/D with D = |u|² + 4:  dy_i/du_j = (8 δ_ij - 16 u_i u_j / D)/D
    and dy_last/du_j = ±32 u_j / D².  The chart Gram matrix M^T M equals
    (64/D²)·Id (the parametrisation is conformal), |y|² = 4, and M^T y = 0;
    all three are certified by the embedding_frame check.
    """
    u = [env[c] for c in coords]
    dimb = len(u)
    nrm2 = nk.sum_(x * x for x in u)
    d = nrm2 + 4.0
    y = [8.0 * x / d for x in u] + [last_sign * 2.0 * (nrm2 - 4.0) / d]
    m = []
    for a in range(dimb):
        m.append([(8.0 * (1.0 if a == j else 0.0) - 16.0 * u[a] * u[j] / d) / d for j in range(dimb)])
    m.append([last_sign * 32.0 * u[j] / (d * d) for j in range(dimb)])
    return y, m, d


def _quarter_turn(v: list) -> list:
    """(p, q) -> (q, -p) in each consecutive coordinate pair."""
    out = [0.0] * len(v)
    for k in range(0, len(v), 2):
        out[k] = v[k + 1]
        out[k + 1] = -v[k]
    return out


_LAST_SIGN = {"N": 1.0, "S": -1.0}


def _sphere_fields(atlas: Atlas):
    """Kernel form, its endomorphism and the rotation field, closed form.

    Everything reduces to the conformal frame identity: for a tangent
    vector with ambient image w, the chart components are (D²/64)·Mᵀw.
    """
    coords = atlas.charts[0].coords
    dimb = len(coords)

    def tangent_components(m, d, w):
        return [
            (d * d / 64.0) * nk.sum_(m[a][i] * w[a] for a in range(dimb + 1))
            for i in range(dimb)
        ]

    def eta_ev(env, sign):
        y, m, d = _sphere_frame(env, coords, sign)
        half_turn = _quarter_turn(y)
        # eta(v) = <J0 y, M v>/2: covector entries (Mᵀ J0 y)_i / 2
        return [
            0.5 * nk.sum_(m[a][i] * half_turn[a] for a in range(dimb + 1))
            for i in range(dimb)
        ]

    def reeb_ev(env, sign):
        y, m, d = _sphere_frame(env, coords, sign)
        return tangent_components(m, d, [0.5 * w for w in _quarter_turn(y)])

    def endo_ev(env, sign):
        y, m, d = _sphere_frame(env, coords, sign)
        cols = []
        for j in range(dimb):
            img = [m[a][j] for a in range(dimb + 1)]
            turned = _quarter_turn(img)
            dot = nk.sum_(turned[a] * y[a] for a in range(dimb + 1))
            tangential = [turned[a] - 0.25 * dot * y[a] for a in range(dimb + 1)]
            cols.append(tangent_components(m, d, tangential))
        return [[cols[j][i] for j in range(dimb)] for i in range(dimb)]

    def per_chart(fn):
        return {
            c.name: (lambda env, s=_LAST_SIGN[c.name]: fn(env, s))
            for c in atlas.charts
        }

    eta = TensorField("sphere_kernel_form", atlas, (0, 1), per_chart(eta_ev))
    reeb = TensorField("sphere_rotation_field", atlas, (1, 0), per_chart(reeb_ev))
    endo = TensorField("sphere_endo", atlas, (1, 1), per_chart(endo_ev))
    return eta, reeb, endo


def _build_sphere(n: int, params: dict) -> Example:
    key = f"sphere-{2 * n + 1}"
    _reject_params(key, params)
    dimb = 2 * n + 1
    atlas = _sphere_atlas(dimb)
    ambient = _ambient_atlas(n)
    embed = _sphere_embedding(dimb, atlas, ambient)
    theta = _ambient_rotation_form(ambient, n)
    flat = _ambient_flat_metric(ambient)
    eta, reeb, endo = _sphere_fields(atlas)
    coords = atlas.charts[0].coords

    contact = ContactStructure(f"sphere{dimb}_contact", atlas, eta, _reeb=reeb)
    struct = LeviStructure(f"sphere{dimb}", contact, endo)

    def frame_residual(chart, coords_, env):
        y, m, d = _sphere_frame(env, coords, _LAST_SIGN[chart])
        vals, jac = embed.jet(chart, env)
        r = abs(nk.value_of(nk.sum_(w * w for w in y) - 4.0))
        for a in range(dimb + 1):
            r = max(r, abs(nk.value_of(vals[a] - y[a])))
            for j in range(dimb):
                r = max(r, abs(nk.value_of(jac[a][j] - m[a][j])))
        scale = 64.0 / nk.value_of(d * d)
        for i in range(dimb):
            r = max(r, abs(nk.value_of(nk.sum_(m[a][i] * y[a] for a in range(dimb + 1)))))
            for j in range(dimb):
                gram = nk.sum_(m[a][i] * m[a][j] for a in range(dimb + 1))
                want = scale if i == j else 0.0
                r = max(r, abs(nk.value_of(gram) - want))
        return r

    eta_pulled = pullback(embed, theta, name="pulled_rotation_form")
    metric_pulled = pullback(embed, flat, name="pulled_flat_metric")
    metric_here = struct.metric()

    def eta_reference_residual(chart, coords_, env):
        return max_abs(
            [a - b for a, b in zip(eta_pulled.at(chart, env), eta.at(chart, env))]
        )

    def round_metric_residual(chart, coords_, env):
        got = metric_here.at(chart, env)
        want = metric_pulled.at(chart, env)
        return max(
            abs(nk.value_of(got[i][j] - want[i][j]))
            for i in range(dimb)
            for j in range(dimb)
        )

    bare = ContactStructure(f"{contact.name}_resolved", atlas, eta)
    solved_reeb = reeb_field(bare)

    def reeb_reference_residual(chart, coords_, env):
        return max_abs(
            [a - b for a, b in zip(solved_reeb.at(chart, env), reeb.at(chart, env))]
        )

    checks = (
        _atlas_job("atlas_consistency", atlas, key),
        _sampled_job("embedding_frame", 1e-10, atlas, frame_residual, key),
        _sampled_job(
            "contact_form_reference", 1e-9, atlas, eta_reference_residual, key
        ),
        _sampled_job("round_metric", 1e-9, atlas, round_metric_residual, key),
        _sampled_job("reeb_reference", 1e-9, atlas, reeb_reference_residual, key),
        _job(
            "contact_form", 1e-7,
            lambda plan, t: is_contact_form(
                contact, dataclasses.replace(plan, tolerance=t), example=key
            ),
        ),
        _job(
            "reeb_residual", 1e-9,
            lambda plan, t: reeb_residual_check(contact, plan, tol=t, example=key),
        ),
        _job(
            "single_valued_eta", 1e-8,
            lambda plan, t: cross_chart_consistency(
                contact.eta, plan, tol=t, example=key,
                check_name="single_valued(eta)",
            ),
        ),
        _job(
            "structure_axioms", 1e-8,
            lambda plan, t: struct.validate(plan, tol=t, example=key),
        ),
        _job(
            "contact_metric", 1e-7,
            lambda plan, t: contact_metric_check(struct, plan, tol=t, example=key),
        ),
        _job(
            "sasaki", 1e-7,
            lambda plan, t: sasaki_check(struct, plan, tol=t, example=key),
        ),
    )
    fields = [
        GalleryField("ambient_rotation_form", "ambient", theta, "dsl"),
        GalleryField("ambient_flat_metric", "ambient", flat, "dsl"),
        GalleryField(
            "eta", "main", eta, "builtin",
            "restriction of the ambient rotation form along the embedding "
            "(closed form; certified against the pullback)",
        ),
        GalleryField(
            "reeb", "main", reeb, "builtin",
            "half the quarter-turn of the position vector, in chart components",
        ),
        GalleryField(
            "endo", "main", endo, "builtin",
            "tangential part of the ambient quarter-turn",
        ),
        GalleryField(
            "metric", "main", metric_here, "builtin",
            "associated metric; coincides with the restriction of the "
            "ambient flat metric (round_metric check)",
        ),
    ]
    return Example(
        key=key,
        summary=f"round {dimb}-sphere of radius 2 in two stereographic "
        "charts; the restricted ambient rotation form is a contact form "
        "whose associated structure is normal",
        atlases={"main": atlas, "ambient": ambient},
        fields=fields,
        maps=[GalleryMap("embedding", "main", "ambient", embed)],
        structure=struct,
        checks=checks,
        params={},
    )


# -- sasakian product --------------------------------------------------


def _build_product(params: dict) -> Example:
    key = "product-darboux"
    _reject_params(key, params)
    left = standard_darboux_levi(1)
    right = standard_darboux_levi(1)
    struct = sasakian_product(left, right, _GATE_PLAN)
    contact = struct.contact
    atlas = contact.atlas
    pair = product_kahler_lift(left, right, _GATE_PLAN)
    beta = invariant_slope_form(pair.bundle)
    dbeta = exterior_derivative(beta)
    diag = pair.bundle.liouville()
    l_diag_beta = lie_derivative(beta, diag)
    reeb = contact.reeb()
    dim = atlas.charts[0].dim
    zi1 = atlas.charts[0].coords.index("z1")
    zi2 = atlas.charts[0].coords.index("z2")

    def reeb_sum_residual(chart, coords, env):
        want = [0.0] * dim
        want[zi1] = 1.0
        want[zi2] = 1.0
        return max_abs([a - b for a, b in zip(reeb.at(chart, env), want)])

    def beta_invariance_residual(chart, coords, env):
        bv = beta.at(chart, env)
        dv = diag.at(chart, env)
        pairing = abs(nk.value_of(nk.sum_(b * d for b, d in zip(bv, dv))))
        return max(pairing, max_abs(l_diag_beta.at(chart, env)))

    def beta_closed_residual(chart, coords, env):
        return max_abs(dbeta.at(chart, env))

    cone_total = pair.bundle.total

    checks = (
        _atlas_job("atlas_consistency", atlas, key),
        _job(
            "contact_form", 1e-7,
            lambda plan, t: is_contact_form(
                contact, dataclasses.replace(plan, tolerance=t), example=key
            ),
        ),
        _job(
            "reeb_residual", 1e-9,
            lambda plan, t: reeb_residual_check(contact, plan, tol=t, example=key),
        ),
        _sampled_job("reeb_is_sum", 1e-9, atlas, reeb_sum_residual, key),
        _job(
            "structure_axioms", 1e-8,
            lambda plan, t: struct.validate(plan, tol=t, example=key),
        ),
        _job(
            "contact_metric", 1e-7,
            lambda plan, t: contact_metric_check(struct, plan, tol=t, example=key),
        ),
        _job(
            "sasaki", 1e-7,
            lambda plan, t: sasaki_check(struct, plan, tol=t, example=key),
        ),
        _job(
            "reparametrization_routes", 1e-7,
            lambda plan, t: product_routes_check(
                left, right, plan, tol=t, example=key
            ),
        ),
        _sampled_job(
            "slope_form_invariant", 1e-9, cone_total, beta_invariance_residual, key
        ),
        _sampled_job(
            "slope_form_closed", 1e-9, cone_total, beta_closed_residual, key
        ),
        _job(
            "slope_form_homogeneous", 1e-9,
            lambda plan, t: homogeneity_check(
                beta, 0, "plain", plan,
                scaling=pair.bundle.scaling, scales=(0.5, 2.0),
                tol=t, example=key, check_name="homogeneity(slope_form)",
            ),
        ),
    )
    fields = [
        GalleryField(
            "eta", "main", contact.eta, "builtin",
            "normalized mix of the factor kernel forms along the mixing "
            "coordinate t",
        ),
        GalleryField(
            "endo", "main", struct.phibar, "builtin",
            "block sum of the factor endomorphisms extended to the mixing "
            "plane",
        ),
        GalleryField(
            "metric", "main", struct.metric(), "builtin",
            "associated metric of the normalized product",
        ),
        GalleryField(
            "slope_form", "cone", beta, "builtin",
            "degree-0 one-form measuring the fiber ratio of the product cone",
        ),
    ]
    return Example(
        key=key,
        summary="normalized product of two flat 3-dimensional normal "
        "structures: a 7-dimensional normal contact metric structure whose "
        "Reeb field is the sum of the factor Reeb fields",
        atlases={"main": atlas, "cone": cone_total},
        fields=fields,
        maps=[],
        structure=struct,
        checks=checks,
        params={},
    )


# -- main1 family ------------------------------------------------------


def _build_main1(params: dict) -> Example:
    key = "main1-family"
    raw = dict(params)
    slope_raw = raw.pop("a", "0.7")
    if raw:
        raise UnknownKey(f"{key}: unknown parameters {sorted(raw)}")
    slope_expr = exprlang.parse(str(slope_raw))
    slope_src = exprlang.pretty(slope_expr)
    constant = not exprlang.free_vars(slope_expr)

    base = standard_darboux_levi(1)
    contact = base.contact
    pair = kahlerianization(base, slope=slope_src)
    bundle = pair.bundle
    total = bundle.total
    chart = total.charts[0]
    si = chart.index(FIBER)
    zi = chart.index("z")

    def hom(field, weight, mode):
        return lambda plan, t: homogeneity_check(
            field, weight, mode, plan, bundle=bundle, tol=t, example=key
        )

    def recon(plan: SamplePlan, tol: float | None = None):
        return reconstruct_main1(
            contact, bundle, pair.omega, pair.g, plan, tol=tol, example=key
        )

    def reconstruction_run(plan, t=None):
        return recon(plan, 1e-6 if t is None else t).report

    cache_key = (key, slope_src)

    def recovery_residual(chart_name, coords, env):
        if cache_key not in _MAIN1_CACHE:
            _MAIN1_CACHE[cache_key] = recon(_GATE_PLAN)
        result = _MAIN1_CACHE[cache_key]
        base_env = {c: v for c, v in env.items() if c != FIBER}
        a_here = exprlang.eval_expr(slope_expr, base_env)
        got_a = result.slope.at(chart_name, env)
        r = abs(nk.value_of(_scalar(got_a) - a_here))

        jm = result.J.at(chart_name, env)
        dim = chart.dim
        s = env[FIBER]
        # the scaling field and the lifted Reeb field span the vertical
        # plane; on it J acts by [[a, 1], [-(1+a²), -a]] in that order:
        # J(scaling) = xi - a·scaling, J(xi) = a·xi - (1+a²)·scaling
        nabla = [0.0] * dim
        nabla[si] = s
        xi_lift = [0.0] * dim
        xi_lift[zi] = 1.0
        img_nabla = [nk.sum_(jm[i][j] * nabla[j] for j in range(dim)) for i in range(dim)]
        img_xi = [nk.sum_(jm[i][j] * xi_lift[j] for j in range(dim)) for i in range(dim)]
        want_nabla = [xi_lift[i] - a_here * nabla[i] for i in range(dim)]
        want_xi = [
            a_here * xi_lift[i] - (1.0 + a_here * a_here) * nabla[i]
            for i in range(dim)
        ]
        r = max(r, max_abs([a - b for a, b in zip(img_nabla, want_nabla)]))
        r = max(r, max_abs([a - b for a, b in zip(img_xi, want_xi)]))
        return r

    checks = (
        _atlas_job("atlas_consistency", total, key),
        _job(
            "symplectic_form", 1e-8,
            lambda plan, t: symplectic_check(
                pair.omega, dataclasses.replace(plan, tolerance=t), example=key
            ),
        ),
        _job("homogeneous_two_form", 1e-8, hom(pair.omega, 1, "plain")),
        _job("homogeneous_metric", 1e-8, hom(pair.g, 1, "positive")),
        _job(
            "almost_complex", 1e-8,
            lambda plan, t: almost_complex_check(pair.J, plan, tol=t, example=key),
        ),
        _job(
            "compatibility", 1e-8,
            lambda plan, t: compatibility_check(
                pair.omega, pair.g, pair.J, plan, tol=t, example=key
            ),
        ),
        _job(
            "integrability", 1e-8,
            lambda plan, t: kahler_integrability_check(
                pair.J, plan, tol=t, example=key
            ),
            expect=PASS if constant else FAIL,
        ),
        CheckJob("reconstruction", PASS, 1e-6, reconstruction_run),
        _sampled_job("slope_recovery", 1e-8, total, recovery_residual, key),
    )
    fields = [
        GalleryField("eta", "base", contact.eta, "dsl"),
        GalleryField("endo", "base", base.phibar, "dsl"),
        GalleryField(
            "two_form", "main", pair.omega, "builtin",
            "homogeneous two-form of the scaling bundle",
        ),
        GalleryField(
            "metric", "main", pair.g, "builtin",
            f"degree-1 cone metric sheared by the slope a = {slope_src}",
        ),
        GalleryField(
            "complex_structure", "main", pair.J, "builtin",
            "compatibility tensor solved from the pair",
        ),
    ]
    return Example(
        key=key,
        summary="one-parameter family of homogeneous metrics on the cone "
        "over the flat 3-dimensional structure, sheared by a slope "
        "function; compatible for every slope, integrable exactly when "
        "the slope is constant",
        atlases={"main": total, "base": contact.atlas},
        fields=fields,
        maps=[],
        structure=pair,
        checks=checks,
        params={"a": slope_src},
    )


_MAIN1_CACHE: dict = {}


def _scalar(v):
    """Unwrap a rank-0 component that may arrive as [x] or x."""
    if isinstance(v, (list, tuple)):
        return _scalar(v[0])
    return v


# -- registry ----------------------------------------------------------


def _reject_params(key: str, params: dict) -> None:
    if params:
        raise UnknownKey(f"{key}: takes no parameters, got {sorted(params)}")


_BUILDERS: dict[str, Callable[[dict], Example]] = {
    "darboux-1": lambda p: _build_darboux(1, p),
    "darboux-2": lambda p: _build_darboux(2, p),
    "mobius-band": _build_mobius_band,
    "mobius-jet": _build_mobius_jet,
    "mobius-cotangent": _build_mobius_cotangent,
    "sphere-3": lambda p: _build_sphere(1, p),
    "sphere-5": lambda p: _build_sphere(2, p),
    "product-darboux": _build_product,
    "main1-family": _build_main1,
}

EXAMPLE_KEYS: tuple[str, ...] = tuple(_BUILDERS)


def build_example(key: str, **params) -> Example:
    """Construct a gallery entry by key; parameters only where declared."""
    try:
        builder = _BUILDERS[key]
    except KeyError:
        known = ", ".join(EXAMPLE_KEYS)
        raise UnknownKey(f"unknown example {key!r}; known keys: {known}") from None
    return builder(params)


# -- definition-file emission (see docs/corpus-format.md) ---------------


def _fmt(v: float) -> str:
    return repr(float(v))


def _emit_atlas(lines: list, akey: str, atlas: Atlas) -> None:
    lines.append(f"atlas {akey}")
    for chart in atlas.charts:
        lines.append(f"chart {chart.name}")
        lines.append("coords: " + " ".join(chart.coords))
        for c, (lo, hi) in zip(chart.coords, chart.box):
            lines.append(f"box {c}: {_fmt(lo)} {_fmt(hi)}")
        for c, lo, hi in chart.excluded:
            lines.append(f"exclude {c}: {_fmt(lo)} {_fmt(hi)}")
        lines.append(f"margin: {_fmt(chart.margin)}")
        lines.append("endchart")
    for t in atlas.transitions:
        lines.append(f"transition {t.source} -> {t.target}")
        for piece in t.pieces:
            lines.append("piece")
            lines.append(
                "box: "
                + " | ".join(f"{_fmt(lo)} {_fmt(hi)}" for lo, hi in piece.box)
            )
            lines.append(
                "to: " + " | ".join(exprlang.pretty(e) for e in piece.forward)
            )
            lines.append(
                "from: " + " | ".join(exprlang.pretty(e) for e in piece.inverse)
            )
            lines.append("endpiece")
        lines.append("endtransition")
    lines.append("endatlas")


def emit_example(ex: Example) -> str:
    """Render one entry as a definition file (deterministic bytes)."""
    lines: list[str] = ["corpus-example v1", f"key: {ex.key}"]
    lines.append(f"summary: {ex.summary}")
    for pname in sorted(ex.params):
        lines.append(f"param {pname}: {ex.params[pname]}")
    for akey, atlas in ex.atlases.items():
        lines.append("")
        _emit_atlas(lines, akey, atlas)
    for gf in ex.fields:
        lines.append("")
        p, q = gf.field.valence
        head = f"field {gf.name} on {gf.atlas_key} valence ({p},{q})"
        if gf.source == "dsl":
            lines.append(head + " from dsl")
            exprs = gf.field.exprs or {}
            for chart_name in sorted(exprs):
                table = exprs[chart_name]
                for idx in sorted(table):
                    idx_txt = ",".join(str(i) for i in idx)
                    lines.append(
                        f"{chart_name} [{idx_txt}] = {exprlang.pretty(table[idx])}"
                    )
            lines.append("endfield")
        else:
            lines.append(head + " from builtin")
            lines.append(f"note: {gf.note}")
            lines.append("endfield")
    for gm in ex.maps:
        lines.append("")
        lines.append(f"map {gm.name} from {gm.src_key} to {gm.dst_key}")
        for src_chart in sorted(gm.map.pieces):
            tgt_chart, exprs = gm.map.pieces[src_chart]
            joined = " | ".join(exprlang.pretty(e) for e in exprs)
            lines.append(f"{src_chart} -> {tgt_chart}: {joined}")
        lines.append("endmap")
    lines.append("")
    return "\n".join(lines)


# -- definition-file parsing -------------------------------------------


@dataclass
class ParsedField:
    name: str
    atlas_key: str
    valence: tuple[int, int]
    source: str
    comps: dict[str, dict[tuple, object]]  # chart -> index -> Expr (dsl only)
    note: str = ""


@dataclass
class ParsedMap:
    name: str
    src_key: str
    dst_key: str
    pieces: dict[str, tuple[str, tuple]]


@dataclass
class ParsedExample:
    key: str
    summary: str
    params: dict[str, str]
    atlases: dict[str, Atlas]
    fields: list[ParsedField]
    maps: list[ParsedMap]


class CorpusFormatError(ValueError):
    pass


def _parse_atlas(it) -> Atlas:
    charts: list[Chart] = []
    transitions: list[TransitionMap] = []
    for line in it:
        if line == "endatlas":
            return Atlas(charts, transitions)
        if line.startswith("chart "):
            name = line.split(" ", 1)[1]
            coords: tuple = ()
            box: list = []
            excl: list = []
            margin = 0.05
            for sub in it:
                if sub == "endchart":
                    break
                if sub.startswith("coords: "):
                    coords = tuple(sub[len("coords: "):].split())
                elif sub.startswith("box "):
                    head, rest = sub[4:].split(": ")
                    lo, hi = rest.split()
                    box.append((float(lo), float(hi)))
                elif sub.startswith("exclude "):
                    head, rest = sub[len("exclude "):].split(": ")
                    lo, hi = rest.split()
                    excl.append((head, float(lo), float(hi)))
                elif sub.startswith("margin: "):
                    margin = float(sub[len("margin: "):])
            charts.append(Chart(name, coords, tuple(box), tuple(excl), margin))
        elif line.startswith("transition "):
            head = line[len("transition "):]
            src, _, tgt = head.partition(" -> ")
            pieces = []
            for sub in it:
                if sub == "endtransition":
                    break
                if sub == "piece":
                    pbox: tuple = ()
                    fwd: tuple = ()
                    inv: tuple = ()
                    for inner in it:
                        if inner == "endpiece":
                            break
                        if inner.startswith("box: "):
                            pbox = tuple(
                                (float(a), float(b))
                                for a, b in (
                                    part.split()
                                    for part in inner[len("box: "):].split(" | ")
                                )
                            )
                        elif inner.startswith("to: "):
                            fwd = tuple(
                                exprlang.parse(p)
                                for p in inner[len("to: "):].split(" | ")
                            )
                        elif inner.startswith("from: "):
                            inv = tuple(
                                exprlang.parse(p)
                                for p in inner[len("from: "):].split(" | ")
                            )
                    pieces.append(TransitionPiece(pbox, fwd, inv))
            transitions.append(TransitionMap(src, tgt, tuple(pieces)))
    raise CorpusFormatError("unterminated atlas block")


def parse_example_text(text: str) -> ParsedExample:
    """Parse a definition file back into charts, expressions and markers."""
    lines = [ln.rstrip() for ln in text.splitlines()]
    it = iter(ln for ln in lines if ln != "")
    first = next(it, None)
    if first != "corpus-example v1":
        raise CorpusFormatError(f"bad header {first!r}")
    key = summary = None
    params: dict[str, str] = {}
    atlases: dict[str, Atlas] = {}
    fields: list[ParsedField] = []
    maps: list[ParsedMap] = []
    for line in it:
        if line.startswith("key: "):
            key = line[len("key: "):]
        elif line.startswith("summary: "):
            summary = line[len("summary: "):]
        elif line.startswith("param "):
            head, rest = line[len("param "):].split(": ", 1)
            params[head] = rest
        elif line.startswith("atlas "):
            atlases[line.split(" ", 1)[1]] = _parse_atlas(it)
        elif line.startswith("field "):
            head = line[len("field "):]
            name, _, rest = head.partition(" on ")
            akey, _, rest = rest.partition(" valence ")
            val_txt, _, src = rest.partition(" from ")
            p, q = val_txt.strip("()").split(",")
            comps: dict[str, dict[tuple, object]] = {}
            note = ""
            for sub in it:
                if sub == "endfield":
                    break
                if sub.startswith("note: "):
                    note = sub[len("note: "):]
                    continue
                chart_name, _, assign = sub.partition(" [")
                idx_txt, _, expr_txt = assign.partition("] = ")
                idx = tuple(int(x) for x in idx_txt.split(",")) if idx_txt else ()
                comps.setdefault(chart_name, {})[idx] = exprlang.parse(expr_txt)
            fields.append(
                ParsedField(name, akey, (int(p), int(q)), src, comps, note)
            )
        elif line.startswith("map "):
            head = line[len("map "):]
            name, _, rest = head.partition(" from ")
            src_key, _, dst_key = rest.partition(" to ")
            pieces: dict[str, tuple[str, tuple]] = {}
            for sub in it:
                if sub == "endmap":
                    break
                chart_pair, _, exprs_txt = sub.partition(": ")
                src_chart, _, tgt_chart = chart_pair.partition(" -> ")
                exprs = tuple(
                    exprlang.parse(p) for p in exprs_txt.split(" | ")
                )
                pieces[src_chart] = (tgt_chart, exprs)
            maps.append(ParsedMap(name, src_key, dst_key, pieces))
    if key is None:
        raise CorpusFormatError("missing key line")
    return ParsedExample(key, summary or "", params, atlases, fields, maps)


def emit_parsed(doc: ParsedExample) -> str:
    """Re-render a parsed document; parse-then-emit is byte-stable."""
    shell = Example(
        key=doc.key,
        summary=doc.summary,
        atlases=doc.atlases,
        fields=[],
        maps=[],
        structure=None,
        checks=(),
        params=dict(doc.params),
    )
    lines = emit_example(shell).splitlines()
    # emit_example on the shell covers header and atlases; fields and maps
    # are re-rendered here from the parsed payload to avoid building
    # evaluator closures for them.
    out = lines[: _field_insertion_point(lines)]
    for f in doc.fields:
        out.append("")
        head = (
            f"field {f.name} on {f.atlas_key} valence "
            f"({f.valence[0]},{f.valence[1]}) from {f.source}"
        )
        out.append(head)
        if f.source == "dsl":
            for chart_name in sorted(f.comps):
                table = f.comps[chart_name]
                for idx in sorted(table):
                    idx_txt = ",".join(str(i) for i in idx)
                    out.append(
                        f"{chart_name} [{idx_txt}] = {exprlang.pretty(table[idx])}"
                    )
        else:
            out.append(f"note: {f.note}")
        out.append("endfield")
    for m in doc.maps:
        out.append("")
        out.append(f"map {m.name} from {m.src_key} to {m.dst_key}")
        for src_chart in sorted(m.pieces):
            tgt_chart, exprs = m.pieces[src_chart]
            joined = " | ".join(exprlang.pretty(e) for e in exprs)
            out.append(f"{src_chart} -> {tgt_chart}: {joined}")
        out.append("endmap")
    out.append("")
    return "\n".join(out)


def _field_insertion_point(lines: list) -> int:
    for i, ln in enumerate(lines):
        if ln.startswith("field ") or ln.startswith("map "):
            return i - 1 if i and lines[i - 1] == "" else i
    # no fields: drop the trailing blank line, it is re-added at the end
    return len(lines) - 1 if lines and lines[-1] == "" else len(lines)


def golden_dir() -> Path:
    return Path(__file__).resolve().parents[2] / "golden"


def golden_path(key: str) -> Path:
    return golden_dir() / f"{key}.corpus"


def write_golden_files(target: Path | None = None) -> list[Path]:
    """Write every entry's definition file; returns the paths written."""
    root = golden_dir() if target is None else target
    root.mkdir(parents=True, exist_ok=True)
    written = []
    for key in EXAMPLE_KEYS:
        path = root / f"{key}.corpus"
        path.write_text(emit_example(build_example(key)))
        written.append(path)
    return written
