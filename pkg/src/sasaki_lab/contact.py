"""Contact structures: forms, Reeb fields, kernel frames, nondegeneracy.

A contact structure is a one-form η per chart.  On a *paired* structure the
chart forms only agree up to a locally constant sign across overlaps; the
owning object then carries a ``transition_sign`` callback so cross-chart
checks can compare with the right sign.

The Reeb field is computed pointwise from the augmented linear system

    (dη + η⊗η)(ξ, ·) = η,

whose unique solution satisfies η(ξ)=1 and i_ξ dη = 0 whenever η is contact
(adding η⊗η to the — on ker η nondegenerate — form dη makes the matrix
invertible and forces the normalization).  Running the solve on dual
numbers makes ξ differentiable, which Lie-derivative checks use directly.

Nondegeneracy of η∧(dη)^n is decided through the bordered antisymmetric
matrix B = [[0, η], [−ηᵀ, dη]]: the top-form coefficient satisfies
|η∧(dη)^n| = n!·√det B, so no permutation sums are ever expanded.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field
from typing import Callable, Optional

from . import numkernel as nk
from .manifold import Atlas, Chart, SamplePlan, sample_points
from .report import CheckReport, run_residual_check
from .tensor import (
    TensorField,
    exterior_derivative,
    field_jet,
    contract_form_vector,
)


@dataclass
class ContactStructure:
    name: str
    atlas: Atlas
    eta: TensorField
    paired: bool = False
    transition_sign: Optional[Callable] = None  # (transition, piece) -> ±1.0
    _reeb: Optional[TensorField] = dc_field(default=None, repr=False)
    _deta: Optional[TensorField] = dc_field(default=None, repr=False)

    @property
    def dim(self) -> int:
        return self.atlas.charts[0].dim

    @property
    def n(self) -> int:
        """The n in dim = 2n+1."""
        return (self.dim - 1) // 2

    def d_eta(self) -> TensorField:
        if self._deta is None:
            self._deta = exterior_derivative(self.eta)
        return self._deta

    def reeb(self) -> TensorField:
        if self._reeb is None:
            self._reeb = reeb_field(self)
        return self._reeb


def darboux_contact(n: int) -> ContactStructure:
    """The flat model on [−1,1]^{2n+1}: η = dz − Σ pᵢ dxᵢ."""
    if n == 1:
        coords = ("x", "p", "z")
        table = {(0,): "-p", (2,): "1"}
    else:
        coords = tuple(
            c for i in range(1, n + 1) for c in (f"x{i}", f"p{i}")
        ) + ("z",)
        table = {(2 * n,): "1"}
        for i in range(n):
            table[(2 * i,)] = f"-p{i + 1}"
    atlas = Atlas([Chart("O", coords, ((-1.0, 1.0),) * (2 * n + 1))])
    eta = TensorField.from_exprs("eta", atlas, (0, 1), {"O": table})
    return ContactStructure(f"darboux-{n}", atlas, eta)


def reeb_field(C: ContactStructure) -> TensorField:
    closures = {}
    for chart_name in C.eta.chart_names():
        dim = C.atlas.chart(chart_name).dim

        def ev(env, chart_name=chart_name, dim=dim):
            ev_vals, parts = field_jet(C.eta, chart_name, env)
            # rows[j][i] = dη_{ij} + η_i η_j, so rows @ ξ = η picks the Reeb
            rows = [
                [
                    parts[i][j] - parts[j][i] + ev_vals[i] * ev_vals[j]
                    for i in range(dim)
                ]
                for j in range(dim)
            ]
            return nk.solve_linear(rows, list(ev_vals))

        closures[chart_name] = ev
    return TensorField(f"reeb({C.name})", C.atlas, (1, 0), closures)


def reeb_residual_check(
    C: ContactStructure,
    plan: SamplePlan,
    tol: float | None = None,
    example: str | None = None,
) -> CheckReport:
    """Certify i_ξη = 1 and i_ξ dη = 0 at samples (the defining equations)."""
    tol = plan.tolerance if tol is None else tol
    xi = C.reeb()
    deta = C.d_eta()

    def residual(chart, coords, env):
        ev_ = C.eta.at(chart, env)
        xv = xi.at(chart, env)
        dv = deta.at(chart, env)
        dim = len(xv)
        r = abs(contract_form_vector(ev_, xv) - 1.0)
        for j in range(dim):
            r = max(r, abs(nk.sum_(xv[i] * dv[i][j] for i in range(dim))))
        return r

    return run_residual_check(
        "reeb_residual",
        sample_points(C.atlas, plan),
        residual,
        tol,
        plan.seed,
        example=example,
    )


def contact_top_coefficient(C: ContactStructure, chart: str, env: dict) -> float:
    """|η∧(dη)^n| against the coordinate volume at one point."""
    ev_vals = [nk.value_of(v) for v in C.eta.at(chart, env)]
    dv = C.d_eta().at(chart, env)
    dim = len(ev_vals)
    b = [[0.0] * (dim + 1) for _ in range(dim + 1)]
    for j in range(dim):
        b[0][1 + j] = ev_vals[j]
        b[1 + j][0] = -ev_vals[j]
        for i in range(dim):
            b[1 + i][1 + j] = nk.value_of(dv[i][j])
    det = nk.determinant(b)
    n = (dim - 1) // 2
    return math.factorial(n) * math.sqrt(max(det, 0.0))


NONDEGENERACY_THRESHOLD = 1e-8


def is_contact_form(
    C: ContactStructure, plan: SamplePlan, example: str | None = None
) -> CheckReport:
    """Pass iff the top-form coefficient stays above the threshold everywhere.

    Reported residual is the shortfall max(0, threshold − |coefficient|),
    with tolerance 0; the smallest coefficient seen lands in details.
    """
    smallest = [math.inf]

    def residual(chart, coords, env):
        c = contact_top_coefficient(C, chart, env)
        smallest[0] = min(smallest[0], c)
        return max(0.0, NONDEGENERACY_THRESHOLD - c)

    rep = run_residual_check(
        "is_contact_form",
        sample_points(C.atlas, plan),
        residual,
        0.0,
        plan.seed,
        example=example,
        details={"threshold": NONDEGENERACY_THRESHOLD},
    )
    rep.details["min_coefficient"] = smallest[0]
    return rep


@dataclass
class KernelFrame:
    """Pointwise basis of C = ker η: eᵢ − η(eᵢ)ξ with one index dropped."""

    chart: str
    dropped: int
    kept: tuple[int, ...]
    vectors: list[list]  # 2n component lists
    xi: list
    eta_vals: list


def contact_frame(C: ContactStructure, chart: str, env: dict) -> KernelFrame:
    ev_vals = C.eta.at(chart, env)
    xv = C.reeb().at(chart, env)
    dim = len(ev_vals)
    mags = [abs(nk.value_of(v)) for v in ev_vals]
    dropped = max(range(dim), key=lambda i: (mags[i], -i))
    kept = tuple(i for i in range(dim) if i != dropped)
    vectors = []
    for a in kept:
        vec = [0.0] * dim
        vec[a] = 1.0
        vectors.append([vec[k] - ev_vals[a] * xv[k] for k in range(dim)])
    return KernelFrame(chart, dropped, kept, vectors, xv, ev_vals)


def frame_fields(C: ContactStructure, chart: str, kept: tuple[int, ...]):
    """The same frame as smooth C-valued *fields* (fixed kept indices).

    η(F_a) ≡ 0 holds identically, not just at the base point — bracket-based
    checks (almost-CR flag, CR torsion) depend on that.
    """
    xi = C.reeb()
    out = []
    for a in kept:

        def ev(env, a=a):
            ev_vals = C.eta.at(chart, env)
            xv = xi.at(chart, env)
            dim = len(ev_vals)
            vec = [0.0] * dim
            vec[a] = 1.0
            return [vec[k] - ev_vals[a] * xv[k] for k in range(dim)]

        out.append(TensorField(f"frame{a}", C.atlas, (1, 0), {chart: ev}))
    return out


def frame_check(
    C: ContactStructure, plan: SamplePlan, example: str | None = None
) -> CheckReport:
    """Frame lies in C and, with ξ appended, spans the tangent space."""

    def residual(chart, coords, env):
        fr = contact_frame(C, chart, env)
        r = 0.0
        for vec in fr.vectors:
            r = max(r, abs(nk.value_of(contract_form_vector(fr.eta_vals, vec))))
        rows = [[nk.value_of(x) for x in vec] for vec in fr.vectors]
        rows.append([nk.value_of(x) for x in fr.xi])
        det = abs(nk.determinant(rows))
        return max(r, max(0.0, NONDEGENERACY_THRESHOLD - det))

    return run_residual_check(
        "kernel_frame",
        sample_points(C.atlas, plan),
        residual,
        plan.tolerance,
        plan.seed,
        example=example,
    )
