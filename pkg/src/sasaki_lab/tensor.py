"""Tensor fields as chart-wise component evaluators, and their calculus.

A :class:`TensorField` maps a chart name to a function ``env -> components``
where ``env`` is a dict of coordinate scalars and the components come back
as nested lists, contravariant indices first.  Because every evaluator is
generic over the scalar type, derivatives never need dedicated code: `jet`
seeds dual numbers for the chart coordinates, evaluates once, and unpacks
values and first partials.  Seeding twice (a jet inside a jet) yields the
second derivatives used by exterior-derivative-of-derived-forms checks and
Christoffel symbols.

Conventions fixed here and relied on everywhere else:

* components index order: contravariant slots before covariant slots, e.g.
  an endomorphism J has ``J[k][j]`` = row/output k, column/input j;
* ``musical_flat(b, X)`` contracts X into the SECOND slot of b, i.e. the
  result is ``b(., X)`` — for 2-forms the order matters and this is the
  documented choice (a regression test freezes it on the cone);
* Lie brackets/derivatives and the Nijenhuis torsion follow the classical
  component formulas with no extra normalization factors.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Callable, Sequence

from . import exprlang, numkernel as nk
from .exprlang import Expr
from .manifold import Atlas, Chart, Point, SamplePlan, sample_chart
from .report import CheckReport, Witness, verdict_for


def map_structure(fn, s):
    if isinstance(s, list):
        return [map_structure(fn, x) for x in s]
    return fn(s)


def max_abs(s) -> float:
    """Largest |value| in a nested component structure."""
    if isinstance(s, list):
        return max((max_abs(x) for x in s), default=0.0)
    return abs(nk.value_of(s))


def zeros(dim: int, rank: int):
    if rank == 0:
        return 0.0
    return [zeros(dim, rank - 1) for _ in range(dim)]


class TensorField:
    """Chart-wise component evaluator for a (p, q)-tensor field."""

    def __init__(
        self,
        name: str,
        atlas: Atlas,
        valence: tuple[int, int],
        evaluators: dict[str, Callable[[dict], object]],
        exprs: dict[str, dict[tuple, Expr]] | None = None,
    ):
        self.name = name
        self.atlas = atlas
        self.valence = valence
        self._evaluators = evaluators
        self.exprs = exprs  # populated only for DSL-defined fields

    @property
    def rank(self) -> int:
        return self.valence[0] + self.valence[1]

    @classmethod
    def from_exprs(
        cls,
        name: str,
        atlas: Atlas,
        valence: tuple[int, int],
        comps: dict[str, dict[tuple, Expr | str]],
        symmetry: str = "none",
    ) -> "TensorField":
        """Build from sparse {chart: {index-tuple: expression}} tables.

        symmetry 'sym'/'anti' mirrors rank-2 entries so tables only need
        one triangle; 'none' stores exactly what was given.
        """
        parsed: dict[str, dict[tuple, Expr]] = {}
        for chart_name, table in comps.items():
            chart = atlas.chart(chart_name)
            dense: dict[tuple, Expr] = {}
            for idx, e in table.items():
                idx = tuple(idx)
                if len(idx) != valence[0] + valence[1]:
                    raise ValueError(f"{name}: index {idx} has wrong rank")
                if any(i < 0 or i >= chart.dim for i in idx):
                    raise ValueError(f"{name}: index {idx} out of range")
                dense[idx] = exprlang.parse(e) if isinstance(e, str) else e
            if symmetry in ("sym", "anti") and valence[0] + valence[1] == 2:
                for (i, j), e in list(dense.items()):
                    if i != j and (j, i) not in dense:
                        dense[(j, i)] = e if symmetry == "sym" else exprlang.Neg(e)
            parsed[chart_name] = dense

        evaluators = {}
        for chart_name, dense in parsed.items():
            dim = atlas.chart(chart_name).dim

            def ev(env, dense=dense, dim=dim):
                rank = valence[0] + valence[1]
                if rank == 0:
                    e = dense.get(())
                    return exprlang.eval_expr(e, env) if e is not None else 0.0
                out = zeros(dim, rank)
                for idx, e in dense.items():
                    _set(out, idx, exprlang.eval_expr(e, env))
                return out

            evaluators[chart_name] = ev
        return cls(name, atlas, valence, evaluators, exprs=parsed)

    @classmethod
    def from_closure(cls, name, atlas, valence, closures) -> "TensorField":
        return cls(name, atlas, valence, dict(closures))

    def chart_names(self) -> list[str]:
        return sorted(self._evaluators)

    def evaluator(self, chart: str) -> Callable[[dict], object]:
        try:
            return self._evaluators[chart]
        except KeyError:
            raise KeyError(f"field {self.name!r} has no data on chart {chart!r}")

    def at(self, chart: str, env: dict):
        return self.evaluator(chart)(env)

    def at_point(self, p: Point):
        comps = self.at(p.chart, self.atlas.chart(p.chart).env(p.coords))
        return map_structure(nk.value_of, comps)


def _set(structure, idx, value):
    for i in idx[:-1]:
        structure = structure[i]
    structure[idx[-1]] = value


def get_at(structure, idx):
    for i in idx:
        structure = structure[i]
    return structure


def jet(fn: Callable[[dict], object], chart: Chart, env: dict):
    """Values and first partials of an evaluator at env, one dual sweep."""
    tag = nk.new_tag()
    n = chart.dim
    dual_env = dict(env)
    for i, c in enumerate(chart.coords):
        tg = tuple(1.0 if j == i else 0.0 for j in range(n))
        dual_env[c] = nk.DScalar(env[c], tg, tag)
    out = fn(dual_env)
    vals = map_structure(lambda v: nk.value_at(v, tag), out)
    parts = [
        map_structure(lambda v, i=i: nk.tangent_at(v, tag, i), out) for i in range(n)
    ]
    return vals, parts


def field_jet(T: TensorField, chart_name: str, env: dict):
    return jet(T.evaluator(chart_name), T.atlas.chart(chart_name), env)


# -- smooth maps -------------------------------------------------------


@dataclass
class SmoothMap:
    """Chart-wise coordinate map; target may be another atlas or plain ℝ^m."""

    name: str
    source: Atlas
    target: Atlas | None
    pieces: dict[str, tuple[str | None, tuple[Expr, ...]]]

    @classmethod
    def from_exprs(cls, name, source, target, table) -> "SmoothMap":
        pieces = {}
        for src_chart, (tgt_chart, exprs) in table.items():
            parsed = tuple(
                exprlang.parse(e) if isinstance(e, str) else e for e in exprs
            )
            pieces[src_chart] = (tgt_chart, parsed)
        return cls(name, source, target, pieces)

    def apply(self, chart: str, env: dict) -> list:
        _, exprs = self.pieces[chart]
        return [exprlang.eval_expr(e, env) for e in exprs]

    def target_chart(self, chart: str) -> str | None:
        return self.pieces[chart][0]

    def jet(self, chart: str, env: dict):
        """(values, jacobian) with jacobian[j][i] = d target_j / d source_i."""
        src = self.source.chart(chart)
        tag = nk.new_tag()
        dual_env = dict(env)
        for i, c in enumerate(src.coords):
            tg = tuple(1.0 if j == i else 0.0 for j in range(src.dim))
            dual_env[c] = nk.DScalar(env[c], tg, tag)
        img = self.apply(chart, dual_env)
        vals = [nk.value_at(v, tag) for v in img]
        jac = [
            [nk.tangent_at(v, tag, i) for i in range(src.dim)] for v in img
        ]
        return vals, jac


# -- derivative operators ---------------------------------------------


def exterior_derivative(alpha: TensorField) -> TensorField:
    """d of an antisymmetric (0,k) field, giving (0,k+1).

    (dα)_{i_0..i_k} = Σ_m (−1)^m ∂_{i_m} α_{i_0.. î_m ..i_k}; for k=0 this
    is the differential of a scalar.
    """
    p, q = alpha.valence
    if p != 0:
        raise ValueError("exterior_derivative expects a covariant form")

    closures = {}
    for chart_name in alpha.chart_names():
        chart = alpha.atlas.chart(chart_name)
        dim = chart.dim

        def ev(env, chart=chart, chart_name=chart_name):
            _, parts = field_jet(alpha, chart_name, env)
            out = zeros(dim, q + 1)
            for idx in itertools.product(range(dim), repeat=q + 1):
                acc = 0.0
                for m in range(q + 1):
                    rest = idx[:m] + idx[m + 1:]
                    term = get_at(parts[idx[m]], rest) if q else parts[idx[m]]
                    acc = acc + term if m % 2 == 0 else acc - term
                _set(out, idx, acc)
            return out

        closures[chart_name] = ev
    return TensorField(f"d({alpha.name})", alpha.atlas, (0, q + 1), closures)


def lie_bracket(X: TensorField, Y: TensorField) -> TensorField:
    """[X, Y]^k = X^m ∂_m Y^k − Y^m ∂_m X^k."""
    closures = {}
    for chart_name in sorted(set(X.chart_names()) & set(Y.chart_names())):
        dim = X.atlas.chart(chart_name).dim

        def ev(env, chart_name=chart_name, dim=dim):
            xv, xp = field_jet(X, chart_name, env)
            yv, yp = field_jet(Y, chart_name, env)
            return [
                nk.sum_(xv[m] * yp[m][k] - yv[m] * xp[m][k] for m in range(dim))
                for k in range(dim)
            ]

        closures[chart_name] = ev
    return TensorField(f"[{X.name},{Y.name}]", X.atlas, (1, 0), closures)


def lie_derivative(T: TensorField, X: TensorField) -> TensorField:
    """Classical component formula, any small valence.

    (L_X T)^A_B = X^m ∂_m T^A_B − Σ_r ∂_m X^{a_r} T^{A[r→m]}_B
                + Σ_r ∂_{b_r} X^m T^A_{B[r→m]}.
    """
    p, q = T.valence
    closures = {}
    for chart_name in sorted(set(T.chart_names()) & set(X.chart_names())):
        dim = T.atlas.chart(chart_name).dim

        def ev(env, chart_name=chart_name, dim=dim):
            tv, tp = field_jet(T, chart_name, env)
            xv, xp = field_jet(X, chart_name, env)
            out = zeros(dim, p + q)
            for idx in itertools.product(range(dim), repeat=p + q):
                up, down = idx[:p], idx[p:]
                acc = nk.sum_(xv[m] * get_at(tp[m], idx) for m in range(dim))
                for r in range(p):
                    for m in range(dim):
                        swapped = up[:r] + (m,) + up[r + 1:] + down
                        acc = acc - xp[m][up[r]] * get_at(tv, swapped)
                for r in range(q):
                    for m in range(dim):
                        swapped = up + down[:r] + (m,) + down[r + 1:]
                        acc = acc + xp[down[r]][m] * get_at(tv, swapped)
                _set(out, idx, acc)
            return out

        closures[chart_name] = ev
    return TensorField(f"L_{X.name}({T.name})", T.atlas, (p, q), closures)


def nijenhuis(J: TensorField) -> TensorField:
    """Torsion of an endomorphism field as a (1,2) tensor.

    N^k_{ab} = Σ_m ( J^m_a ∂_m J^k_b − J^m_b ∂_m J^k_a
                     − J^k_m (∂_a J^m_b − ∂_b J^m_a) ).

    This is tensorial for arbitrary J; the CR-flavored variant on a
    distribution (which subtracts [X,Y] instead of J²[X,Y]) is evaluated on
    explicit distribution-valued fields by `sasaki.cr_torsion`, where the
    extension question actually matters.
    """
    closures = {}
    for chart_name in J.chart_names():
        dim = J.atlas.chart(chart_name).dim

        def ev(env, chart_name=chart_name, dim=dim):
            jv, jp = field_jet(J, chart_name, env)
            out = zeros(dim, 3)
            for k in range(dim):
                for a in range(dim):
                    for b in range(dim):
                        acc = 0.0
                        for m in range(dim):
                            acc = acc + (
                                jv[m][a] * jp[m][k][b]
                                - jv[m][b] * jp[m][k][a]
                                - jv[k][m] * (jp[a][m][b] - jp[b][m][a])
                            )
                        out[k][a][b] = acc
            return out

        closures[chart_name] = ev
    return TensorField(f"N({J.name})", J.atlas, (1, 2), closures)


def musical_flat(b: TensorField, X: TensorField) -> TensorField:
    """The one-form b(., X): contracts X into the SECOND slot of b."""
    closures = {}
    for chart_name in sorted(set(b.chart_names()) & set(X.chart_names())):
        dim = b.atlas.chart(chart_name).dim

        def ev(env, chart_name=chart_name, dim=dim):
            bv = b.at(chart_name, env)
            xv = X.at(chart_name, env)
            return [
                nk.sum_(bv[j][i] * xv[i] for i in range(dim)) for j in range(dim)
            ]

        closures[chart_name] = ev
    return TensorField(f"flat({b.name},{X.name})", b.atlas, (0, 1), closures)


def pullback(F: SmoothMap, alpha: TensorField, name: str | None = None) -> TensorField:
    """Pullback of a covariant tensor along F (no invertibility needed).

    (F*α)_{i_1..i_q}(x) = α_{j_1..j_q}(F x) ∂F^{j_1}/∂x^{i_1} ⋯ .
    """
    p, q = alpha.valence
    if p != 0:
        raise ValueError("pullback handles covariant tensors; see pullback_tensor")
    closures = {}
    for chart_name, (tgt_chart, _) in F.pieces.items():
        src = F.source.chart(chart_name)
        dim = src.dim

        def ev(env, chart_name=chart_name, tgt_chart=tgt_chart, dim=dim):
            vals, jac = F.jet(chart_name, env)
            tgt_env = alpha.atlas.chart(tgt_chart).env(vals)
            av = alpha.at(tgt_chart, tgt_env)
            if q == 0:
                return av
            m = len(jac)
            out = zeros(dim, q)
            for idx in itertools.product(range(dim), repeat=q):
                acc = 0.0
                for jdx in itertools.product(range(m), repeat=q):
                    term = get_at(av, jdx)
                    if nk.value_of(term) == 0.0 and not isinstance(term, nk.DScalar):
                        continue
                    for slot in range(q):
                        term = term * jac[jdx[slot]][idx[slot]]
                    acc = acc + term
                _set(out, idx, acc)
            return out

        closures[chart_name] = ev
    nm = name or f"{F.name}*({alpha.name})"
    return TensorField(nm, F.source, (0, q), closures)


def pullback_tensor(F: SmoothMap, T: TensorField, name: str | None = None) -> TensorField:
    """Pullback of any small-valence tensor along a local diffeomorphism.

    Contravariant slots transform through the inverse Jacobian, obtained by
    a linear solve (dual-friendly), so this works inside derivative checks.
    """
    p, q = T.valence
    if p == 0:
        return pullback(F, T, name)
    closures = {}
    for chart_name, (tgt_chart, _) in F.pieces.items():
        src = F.source.chart(chart_name)
        dim = src.dim

        def ev(env, chart_name=chart_name, tgt_chart=tgt_chart, dim=dim):
            vals, jac = F.jet(chart_name, env)
            tgt_env = T.atlas.chart(tgt_chart).env(vals)
            tv = T.at(tgt_chart, tgt_env)
            # columns of the inverse Jacobian: solve A X = I
            ident = [[1.0 if i == j else 0.0 for j in range(dim)] for i in range(dim)]
            inv = nk.solve_linear(jac, ident)  # inv[a][j] = (A^{-1})^a_j
            out = zeros(dim, p + q)
            for idx in itertools.product(range(dim), repeat=p + q):
                up, down = idx[:p], idx[p:]
                acc = 0.0
                for jdx in itertools.product(range(dim), repeat=p + q):
                    jup, jdown = jdx[:p], jdx[p:]
                    term = get_at(tv, jdx)
                    if nk.value_of(term) == 0.0 and not isinstance(term, nk.DScalar):
                        continue
                    for r in range(p):
                        term = term * inv[up[r]][jup[r]]
                    for r in range(q):
                        term = term * jac[jdown[r]][down[r]]
                    acc = acc + term
                _set(out, idx, acc)
            return out

        closures[chart_name] = ev
    nm = name or f"{F.name}*({T.name})"
    return TensorField(nm, F.source, (p, q), closures)


# -- algebra on fields -------------------------------------------------


def tf_combine(name, valence, fields, fn) -> TensorField:
    """Pointwise combination: fn(list of component structures) -> structure."""
    atlas = fields[0].atlas
    charts = set(fields[0].chart_names())
    for f in fields[1:]:
        charts &= set(f.chart_names())
    closures = {}
    for chart_name in sorted(charts):

        def ev(env, chart_name=chart_name):
            return fn([f.at(chart_name, env) for f in fields], env)

        closures[chart_name] = ev
    return TensorField(name, atlas, valence, closures)


def tf_add(a: TensorField, b: TensorField, name=None) -> TensorField:
    def add(s, t):
        if isinstance(s, list):
            return [add(x, y) for x, y in zip(s, t)]
        return s + t

    return tf_combine(
        name or f"{a.name}+{b.name}", a.valence, [a, b], lambda cs, env: add(*cs)
    )


def tf_scale(T: TensorField, factor, name=None) -> TensorField:
    """factor: a constant or an env->scalar callable."""
    fn = factor if callable(factor) else (lambda env, c=factor: c)
    return tf_combine(
        name or f"scale({T.name})",
        T.valence,
        [T],
        lambda cs, env: map_structure(lambda v: fn(env) * v, cs[0]),
    )


def outer_forms(a: TensorField, b: TensorField, name=None) -> TensorField:
    """a ⊗ b for one-forms: (0,2) with slots (a-slot, b-slot)."""

    def fn(cs, env):
        av, bv = cs
        return [[x * y for y in bv] for x in av]

    return tf_combine(name or f"{a.name}⊗{b.name}", (0, 2), [a, b], fn)


def sym2(a: TensorField, b: TensorField, name=None) -> TensorField:
    """a⊗b + b⊗a (the polarization convention used by metric splittings)."""

    def fn(cs, env):
        av, bv = cs
        return [[av[i] * bv[j] + bv[i] * av[j] for j in range(len(av))] for i in range(len(av))]

    return tf_combine(name or f"sym({a.name},{b.name})", (0, 2), [a, b], fn)


def form_times_vector(alpha: TensorField, X: TensorField, name=None) -> TensorField:
    """α ⊗ X as an endomorphism: M^k_j = X^k α_j."""

    def fn(cs, env):
        av, xv = cs
        return [[x * a for a in av] for x in xv]

    return tf_combine(name or f"{alpha.name}⊗{X.name}", (1, 1), [alpha, X], fn)


def endo_apply(J: TensorField, X: TensorField, name=None) -> TensorField:
    """The vector field J(X)."""

    def fn(cs, env):
        jv, xv = cs
        n = len(xv)
        return [nk.sum_(jv[k][j] * xv[j] for j in range(n)) for k in range(n)]

    return tf_combine(name or f"{J.name}({X.name})", (1, 0), [J, X], fn)


def contract_form_vector(alpha, X):
    """Scalar α(X) from component structures."""
    return nk.sum_(a * x for a, x in zip(alpha, X))


def two_form_apply(omega, X, Y):
    """Scalar ω(X, Y) from component structures."""
    n = len(X)
    return nk.sum_(omega[i][j] * X[i] * Y[j] for i in range(n) for j in range(n))


# -- cross-chart consistency ------------------------------------------


def cross_chart_consistency(
    T: TensorField,
    plan: SamplePlan,
    tol: float | None = None,
    sign_fn=None,
    example: str | None = None,
    check_name: str | None = None,
) -> CheckReport:
    """Compare T's chart data through every declared transition.

    At samples x of each piece, the source components transformed by the
    transition Jacobian must match the target components at the image,
    optionally up to a piece sign (paired structures hand in sign_fn).
    """
    atlas = T.atlas
    tol = plan.tolerance if tol is None else tol
    p, q = T.valence
    per_chart: dict[str, float] = {}
    worst = (-1.0, None, None)
    total = 0
    from .manifold import _chart_rng, _piece_sample  # deterministic piece samples

    for t in atlas.transitions:
        if t.source not in T._evaluators or t.target not in T._evaluators:
            continue
        src = atlas.chart(t.source)
        label = f"{t.source}->{t.target}"
        rng = _chart_rng(plan.seed, label + ":" + T.name)
        chart_max = 0.0
        for piece in t.pieces:
            fmap = SmoothMap(
                "piece", atlas, atlas, {t.source: (t.target, piece.forward)}
            )
            transported = pullback_tensor(fmap, T) if p else pullback(fmap, T)
            sign = 1.0 if sign_fn is None else sign_fn(t, piece)
            for coords in _piece_sample(src, piece, plan, rng):
                env = src.env(coords)
                here = T.at(t.source, env)
                back = transported.at(t.source, env)
                diff = _diff_scaled(here, back, sign)
                total += 1
                chart_max = max(chart_max, diff)
                if diff > worst[0]:
                    worst = (diff, label, coords)
        per_chart[label] = chart_max
    max_res = max(per_chart.values()) if per_chart else 0.0
    verdict = verdict_for(max_res, tol, None)
    witness = (
        Witness(worst[1], tuple(worst[2]), worst[0]) if verdict == "fail" else None
    )
    return CheckReport(
        check=check_name or f"cross_chart({T.name})",
        seed=plan.seed,
        samples=total,
        tolerance=tol,
        max_residual=max_res,
        per_chart=per_chart,
        verdict=verdict,
        example=example,
        witness=witness,
    )


def _diff_scaled(a, b, sign: float) -> float:
    """max |a - sign*b| over a nested structure pair."""
    if isinstance(a, list):
        return max(
            (_diff_scaled(x, y, sign) for x, y in zip(a, b)), default=0.0
        )
    return abs(nk.value_of(a) - sign * nk.value_of(b))


def evaluate(T: TensorField, p: Point):
    """Float components of T at a point (public convenience)."""
    return T.at_point(p)
