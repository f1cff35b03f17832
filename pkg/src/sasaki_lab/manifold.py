"""Charts, transition maps, atlases, and deterministic sampling.

A chart is a named coordinate box, optionally with excluded bands (e.g. a
punctured fiber coordinate ``s`` whose band around 0 is cut out).  Sampling
stays a configurable margin away from all box faces and excluded bands, so
checks never evaluate on the closure boundary; evaluating *outside* the box
is deliberately not an error (scaling maps need it).

Transition maps are piecewise: each piece restricts the source box and maps
coordinates by expressions, with an explicit inverse.  Sampling is
deterministic: the stream for a chart depends only on (seed, chart name),
never on iteration order, so reports are reproducible byte for byte.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass, field

import numpy as np

from . import exprlang
from .exprlang import Expr
from .report import CheckReport, Witness, run_residual_check, verdict_for


class EmptyDomain(ValueError):
    """A chart coordinate has no room left after margins and exclusions."""


class NoTransition(LookupError):
    """The atlas has no transition between the requested charts."""


class OutOfDomain(ValueError):
    """A point fell outside every piece of the transition (or its chart box)."""


@dataclass(frozen=True)
class Chart:
    """A coordinate box with optional excluded bands per coordinate."""

    name: str
    coords: tuple[str, ...]
    box: tuple[tuple[float, float], ...]
    excluded: tuple[tuple[str, float, float], ...] = ()
    margin: float = 0.05

    def __post_init__(self):
        if len(self.coords) != len(self.box):
            raise ValueError(f"chart {self.name}: coords/box length mismatch")
        if len(set(self.coords)) != len(self.coords):
            raise ValueError(f"chart {self.name}: duplicate coordinate names")
        for c, (lo, hi) in zip(self.coords, self.box):
            if not lo < hi:
                raise ValueError(f"chart {self.name}: empty range for {c}")
        for c, lo, hi in self.excluded:
            if c not in self.coords:
                raise ValueError(f"chart {self.name}: excluded unknown coord {c}")

    @property
    def dim(self) -> int:
        return len(self.coords)

    def index(self, coord: str) -> int:
        return self.coords.index(coord)

    def env(self, coords) -> dict:
        return dict(zip(self.coords, coords))

    def sample_intervals(self, coord: str) -> list[tuple[float, float]]:
        """Allowed sampling sub-intervals: margins applied to box and bands."""
        i = self.index(coord)
        lo, hi = self.box[i]
        pieces = [(lo + self.margin, hi - self.margin)]
        for c, blo, bhi in self.excluded:
            if c != coord:
                continue
            wlo, whi = blo - self.margin, bhi + self.margin
            nxt = []
            for plo, phi in pieces:
                if whi <= plo or wlo >= phi:
                    nxt.append((plo, phi))
                    continue
                if plo < wlo:
                    nxt.append((plo, wlo))
                if whi < phi:
                    nxt.append((whi, phi))
            pieces = nxt
        pieces = [(a, b) for a, b in pieces if b > a]
        if not pieces:
            raise EmptyDomain(f"chart {self.name}: nothing to sample for {coord}")
        return pieces

    def contains(self, coords, slack: float = 1e-9) -> bool:
        for v, (lo, hi) in zip(coords, self.box):
            if v < lo - slack or v > hi + slack:
                return False
        return True


@dataclass(frozen=True)
class TransitionPiece:
    """One sub-box of the source chart with forward/inverse formulas."""

    box: tuple[tuple[float, float], ...]  # aligned with source chart coords
    forward: tuple[Expr, ...]  # target coords as exprs in source coords
    inverse: tuple[Expr, ...]  # source coords as exprs in target coords

    def contains(self, coords, slack: float = 1e-12) -> bool:
        return all(
            lo - slack <= v <= hi + slack for v, (lo, hi) in zip(coords, self.box)
        )


@dataclass(frozen=True)
class TransitionMap:
    source: str
    target: str
    pieces: tuple[TransitionPiece, ...]

    def piece_for(self, coords) -> TransitionPiece:
        for piece in self.pieces:
            if piece.contains(coords):
                return piece
        raise OutOfDomain(
            f"point {tuple(coords)} lies in no piece of {self.source}->{self.target}"
        )


@dataclass(frozen=True)
class Point:
    chart: str
    coords: tuple[float, ...]


@dataclass(frozen=True)
class SamplePlan:
    """How checks sample: the same plan always yields the same points."""

    seed: int = 42
    points_per_chart: int = 64
    tolerance: float = 1e-8


@dataclass
class Atlas:
    charts: list[Chart]
    transitions: list[TransitionMap] = field(default_factory=list)
    fiber_coord: str | None = None

    def __post_init__(self):
        names = [c.name for c in self.charts]
        if len(set(names)) != len(names):
            raise ValueError("duplicate chart names in atlas")
        self._by_name = {c.name: c for c in self.charts}
        for t in self.transitions:
            if t.source not in self._by_name or t.target not in self._by_name:
                raise ValueError(f"transition {t.source}->{t.target}: unknown chart")

    def chart(self, name: str) -> Chart:
        try:
            return self._by_name[name]
        except KeyError:
            raise NoTransition(f"no chart named {name!r}") from None

    def transition(self, source: str, target: str) -> TransitionMap:
        for t in self.transitions:
            if t.source == source and t.target == target:
                return t
        raise NoTransition(f"no transition {source}->{target}")

    def transit(self, p: Point, target: str) -> Point:
        return apply_transition(self, p, target)


def _chart_rng(seed: int, chart_name: str) -> np.random.Generator:
    crc = zlib.crc32(chart_name.encode("utf-8"))
    return np.random.default_rng(np.random.SeedSequence([seed, crc]))


def _draw(rng, intervals: list[tuple[float, float]]) -> float:
    lengths = [b - a for a, b in intervals]
    total = sum(lengths)
    u = rng.uniform(0.0, total)
    for (a, b), ln in zip(intervals, lengths):
        if u <= ln:
            return a + u
        u -= ln
    return intervals[-1][1]


def sample_chart(chart: Chart, plan: SamplePlan, count: int | None = None):
    """Deterministic points for one chart: list of (coords, env)."""
    rng = _chart_rng(plan.seed, chart.name)
    n = plan.points_per_chart if count is None else count
    intervals = [chart.sample_intervals(c) for c in chart.coords]
    out = []
    for _ in range(n):
        coords = tuple(_draw(rng, iv) for iv in intervals)
        out.append((coords, chart.env(coords)))
    return out


def sample_points(atlas: Atlas, plan: SamplePlan):
    """Points for every chart: [(chart_name, [(coords, env), ...]), ...]."""
    return [(c.name, sample_chart(c, plan)) for c in atlas.charts]


def apply_transition(atlas: Atlas, p: Point, target: str) -> Point:
    """Map a point to the target chart through the declared transition."""
    if p.chart == target:
        return p
    chart = atlas.chart(p.chart)
    if not chart.contains(p.coords):
        raise OutOfDomain(f"point {p.coords} outside chart {p.chart} box")
    t = atlas.transition(p.chart, target)
    piece = t.piece_for(p.coords)
    env = chart.env(p.coords)
    new = tuple(float(exprlang.eval_expr(e, env)) for e in piece.forward)
    tgt = atlas.chart(target)
    if not tgt.contains(new, slack=1e-7):
        raise OutOfDomain(
            f"transition {p.chart}->{target} left the target box at {new}"
        )
    return Point(target, new)


def _piece_sample(chart: Chart, piece: TransitionPiece, plan: SamplePlan, rng):
    """Sample inside one transition piece, respecting margins and bands."""
    out = []
    for _ in range(plan.points_per_chart):
        coords = []
        for i, c in enumerate(chart.coords):
            lo, hi = piece.box[i]
            clo, chi = chart.box[i]
            lo, hi = max(lo, clo), min(hi, chi)
            ivs = [
                (max(a, lo + chart.margin), min(b, hi - chart.margin))
                for a, b in chart.sample_intervals(c)
            ]
            ivs = [(a, b) for a, b in ivs if b > a]
            if not ivs:
                raise EmptyDomain(
                    f"{chart.name}: transition piece leaves no room for {c}"
                )
            coords.append(_draw(rng, ivs))
        out.append(tuple(coords))
    return out


def atlas_consistency_check(
    atlas: Atlas, plan: SamplePlan, tol: float | None = None, example: str | None = None
) -> CheckReport:
    """Round-trip every transition piece: inverse(forward(p)) == p.

    Also composes each declared opposite pair source->target->source on the
    same samples, which covers 2-cycle cocycle consistency; 3-chart cycles
    would report here too if an atlas declared them.
    """
    tol = plan.tolerance if tol is None else tol
    per_chart: dict[str, float] = {}
    worst = (-1.0, None, None)
    total = 0
    for t in atlas.transitions:
        src = atlas.chart(t.source)
        label = f"{t.source}->{t.target}"
        rng = _chart_rng(plan.seed, label)
        chart_max = 0.0
        for piece in t.pieces:
            for coords in _piece_sample(src, piece, plan, rng):
                env = src.env(coords)
                fwd = [float(exprlang.eval_expr(e, env)) for e in piece.forward]
                fenv = atlas.chart(t.target).env(fwd)
                back = [float(exprlang.eval_expr(e, fenv)) for e in piece.inverse]
                r = max(abs(b - c) for b, c in zip(back, coords))
                try:
                    rev = atlas.transition(t.target, t.source)
                    rpiece = rev.piece_for(fwd)
                    back2 = [
                        float(exprlang.eval_expr(e, fenv)) for e in rpiece.forward
                    ]
                    r = max(r, max(abs(b - c) for b, c in zip(back2, coords)))
                except NoTransition:
                    pass
                total += 1
                chart_max = max(chart_max, r)
                if r > worst[0]:
                    worst = (r, label, coords)
        per_chart[label] = chart_max
    max_res = max(per_chart.values()) if per_chart else 0.0
    verdict = verdict_for(max_res, tol, None)
    witness = (
        Witness(worst[1], tuple(worst[2]), worst[0]) if verdict == "fail" else None
    )
    return CheckReport(
        check="atlas_consistency",
        seed=plan.seed,
        samples=total,
        tolerance=tol,
        max_residual=max_res,
        per_chart=per_chart,
        verdict=verdict,
        example=example,
        witness=witness,
    )


__all__ = [
    "Atlas",
    "Chart",
    "EmptyDomain",
    "NoTransition",
    "OutOfDomain",
    "Point",
    "SamplePlan",
    "TransitionMap",
    "TransitionPiece",
    "apply_transition",
    "atlas_consistency_check",
    "run_residual_check",
    "sample_chart",
    "sample_points",
]
