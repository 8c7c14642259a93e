"""Choosing replacement terms for interactions that must be redefined.

A conditional independence statement over a margin constrains every
interaction set meeting both of its separated groups.  Sets that
earlier margins already own keep their mean values pinned, so their
canonical values cannot simply be set to zero: each such set ``t``
(the class ``I``) is redefined, and a same-size block of new terms
``H`` is released from the margin's canonical side to restore the
parameter count.  Each replacement is a partial block ``(t, h, j_h)``:
the terms of interaction set ``t + h`` whose added variables ``h`` are
pinned at fixed non-reference categories ``j_h``.

Whether a choice of replacements keeps the resulting map smooth and
one-to-one (at complete independence, and empirically elsewhere) is
decided by three checkable conditions on the family
``K = maximal sets of I + R``:

(i)   pairing: each redefined ``t`` gets one replacement ``t + h``
      with ``h`` disjoint from ``t``, non-empty, pinned at
      non-reference categories, and not itself a retained or
      redefined set;
(ii)  for each pair, the alternating sum ``sum (-1)^(|G|+1)`` over the
      families ``G`` of maximal sets containing ``t`` whose common
      intersection avoids ``h`` must be non-zero;
(iii) there is a complete order on ``I``, refining set inclusion, such
      that for every replacement and every excluded family ``G``, the
      set ``s = intersection(G) & (t + h)`` is either retained or a
      redefined set strictly preceding ``t``.

Condition (iii) holds exactly when the directed graph of required
precedences (plus inclusion) is acyclic, which is how it is checked.

:func:`construct_replacement` builds a single-set replacement by a
closed-form recipe; :func:`construct_full_replacement` applies it to
every duplicated set at once.  :func:`context_restriction` derives the
category restrictions under which the new statement provably holds in
the reconstructed distribution.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations
from typing import Iterable, Mapping, Sequence

from .design import TermSelection
from .tables import Margin, MllpError, VariableSpec

__all__ = [
    "ReplacementError",
    "CIStatement",
    "HItem",
    "ReplacementPlan",
    "ContextConstraint",
    "ContextSpec",
    "KFamilies",
    "ConditionReport",
    "ValidityReport",
    "ci_to_interactions",
    "k_families",
    "check_valid_replacement",
    "construct_replacement",
    "construct_full_replacement",
    "context_restriction",
    "plan_selections",
]

VarSet = tuple[int, ...]

MAX_FAMILY_BASE = 16  # families are enumerated as subsets of the maximal sets


class ReplacementError(MllpError, ValueError):
    """A replacement plan or construction request is invalid or impossible."""


def _as_set(vars_: Iterable[int]) -> VarSet:
    out = tuple(sorted(set(int(v) for v in vars_)))
    if not out:
        raise ReplacementError("variable sets must be non-empty")
    return out


def _as_sets(sets: Iterable[Iterable[int]]) -> tuple[VarSet, ...]:
    return tuple(sorted(set(_as_set(s) for s in sets)))


def minimal_sets(sets: Iterable[Iterable[int]]) -> tuple[VarSet, ...]:
    norm = _as_sets(sets)
    return tuple(s for s in norm if not any(set(o) < set(s) for o in norm))


def maximal_sets(sets: Iterable[Iterable[int]]) -> tuple[VarSet, ...]:
    norm = _as_sets(sets)
    return tuple(s for s in norm if not any(set(o) > set(s) for o in norm))


@dataclass(frozen=True)
class CIStatement:
    """``a`` independent of ``b`` given ``c``, over the margin ``a + b + c``."""

    a: VarSet
    b: VarSet
    c: VarSet = ()

    def __post_init__(self) -> None:
        a = _as_set(self.a)
        b = _as_set(self.b)
        c = tuple(sorted(set(int(v) for v in self.c)))
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "c", c)
        groups = [set(a), set(b), set(c)]
        for x, y in combinations(groups, 2):
            if x & y:
                raise ReplacementError(
                    f"statement groups must be disjoint: {sorted(x & y)} appears twice"
                )

    @property
    def margin(self) -> Margin:
        return Margin.of(self.a + self.b + self.c)

    def describe(self) -> str:
        ab = ",".join(str(v) for v in self.a)
        bb = ",".join(str(v) for v in self.b)
        if not self.c:
            return f"({ab}) _||_ ({bb})"
        cb = ",".join(str(v) for v in self.c)
        return f"({ab}) _||_ ({bb}) | ({cb})"


def ci_to_interactions(stmt: CIStatement) -> tuple[VarSet, ...]:
    """All interaction sets the statement constrains to zero.

    These are the subsets of the statement's margin meeting both
    separated groups, returned in lexicographic order.
    """
    a, b = set(stmt.a), set(stmt.b)
    mvars = stmt.margin.vars
    out = []
    for k in range(2, len(mvars) + 1):
        for sub in combinations(mvars, k):
            s = set(sub)
            if s & a and s & b:
                out.append(sub)
    return tuple(sorted(out))


@dataclass(frozen=True)
class HItem:
    """One replacement block: free variables plus pinned non-reference categories."""

    free: VarSet
    fixed: tuple[tuple[int, int], ...] = ()

    def __post_init__(self) -> None:
        free = _as_set(self.free)
        fixed = tuple(sorted((int(v), int(x)) for v, x in self.fixed))
        object.__setattr__(self, "free", free)
        object.__setattr__(self, "fixed", fixed)
        fixed_vars = [v for v, _ in fixed]
        if len(set(fixed_vars)) != len(fixed_vars):
            raise ReplacementError(f"duplicate pinned variable in replacement: {fixed}")
        if set(fixed_vars) & set(free):
            raise ReplacementError("pinned variables must not repeat the free variables")
        if any(x < 1 for _, x in fixed):
            raise ReplacementError("pinned categories must be non-reference (>= 1)")

    @classmethod
    def of(cls, free: Iterable[int], fixed: Mapping[int, int] | None = None) -> "HItem":
        return cls(tuple(free), tuple((fixed or {}).items()))

    @property
    def interaction(self) -> VarSet:
        return tuple(sorted(self.free + tuple(v for v, _ in self.fixed)))

    @property
    def added(self) -> VarSet:
        return tuple(v for v, _ in self.fixed)

    def fixed_dict(self) -> dict[int, int]:
        return dict(self.fixed)

    def describe(self) -> str:
        base = "{" + ",".join(str(v) for v in self.free) + "}"
        if not self.fixed:
            return base
        pins = ",".join(f"X{v}={x}" for v, x in self.fixed)
        return f"{base} with {pins}"


@dataclass(frozen=True)
class ReplacementPlan:
    """Redefined sets (in precedence order), their replacements, and the retained sets."""

    i_dup: tuple[VarSet, ...]
    h_items: tuple[HItem, ...]
    r_sets: tuple[VarSet, ...]

    def __post_init__(self) -> None:
        i_dup = tuple(_as_set(s) for s in self.i_dup)
        r_sets = _as_sets(self.r_sets) if self.r_sets else ()
        object.__setattr__(self, "i_dup", i_dup)
        object.__setattr__(self, "r_sets", r_sets)
        object.__setattr__(self, "h_items", tuple(self.h_items))
        if len(set(i_dup)) != len(i_dup):
            raise ReplacementError("redefined sets must be distinct")
        if len(self.h_items) != len(i_dup):
            raise ReplacementError(
                f"{len(i_dup)} redefined sets need {len(i_dup)} replacements, "
                f"got {len(self.h_items)}"
            )
        if set(i_dup) & set(r_sets):
            raise ReplacementError("a set cannot be both redefined and retained")
        if len(set(self.h_items)) != len(self.h_items):
            raise ReplacementError("replacement items must be distinct")

    def all_sets(self) -> tuple[VarSet, ...]:
        """The retained and redefined sets together (the previous-margin class)."""
        return tuple(sorted(set(self.i_dup) | set(self.r_sets)))


def plan_selections(
    spec: VariableSpec, margin: Margin, plan: ReplacementPlan
) -> tuple[TermSelection, TermSelection, TermSelection, TermSelection]:
    """The four term selections of a plan: retained, redefined, replacement, free.

    The redefined and replacement selections follow the plan's own
    order; the retained selection follows the canonical set order; the
    free selection collects every remaining term of the margin in
    canonical order.  The first three are guaranteed disjoint by
    construction; the free selection is their complement.
    """
    i_sel = TermSelection.blocks(margin, spec, plan.i_dup)
    h_sel = TermSelection(margin, ())
    for item in plan.h_items:
        h_sel = h_sel.concat(
            TermSelection.fixed_block(margin, spec, item.free, item.fixed_dict())
        )
    r_sel = TermSelection.blocks(margin, spec, plan.r_sets)
    taken = set(i_sel.terms) | set(h_sel.terms) | set(r_sel.terms)
    full = TermSelection.full(margin, spec)
    l_sel = TermSelection(margin, tuple(t for t in full if t not in taken))
    return r_sel, i_sel, h_sel, l_sel


@dataclass(frozen=True)
class KFamilies:
    """Families of maximal sets relevant to one replacement pair.

    ``k`` lists the maximal sets of the retained plus redefined class;
    ``k_t`` those containing ``t``.  ``k_th`` holds the non-empty
    families ``G`` of sets from ``k_t`` whose common intersection
    avoids ``h``; ``k_bar`` all other non-empty families of sets from
    ``k``.  ``alternating_sum`` is ``sum over k_th of (-1)^(|G|+1)``.
    """

    t: VarSet
    h: VarSet
    k: tuple[VarSet, ...]
    k_t: tuple[VarSet, ...]
    k_th: tuple[tuple[VarSet, ...], ...]
    k_bar: tuple[tuple[VarSet, ...], ...]
    alternating_sum: int


def k_families(t: Iterable[int], h: Iterable[int], sets: Iterable[Iterable[int]]) -> KFamilies:
    """Classify the families of maximal sets for the pair ``(t, h)``."""
    t_ = _as_set(t)
    h_ = tuple(sorted(set(int(v) for v in h)))
    if set(t_) & set(h_):
        raise ReplacementError(f"t and h must be disjoint, got {t_} and {h_}")
    k = maximal_sets(sets)
    if len(k) > MAX_FAMILY_BASE:
        raise ReplacementError(
            f"{len(k)} maximal sets produce too many families to enumerate"
        )
    k_t = tuple(m for m in k if set(t_) <= set(m))
    if not k_t:
        raise ReplacementError(
            f"{t_} is not contained in any maximal set of the class"
        )
    k_th = []
    k_bar = []
    h_set = set(h_)
    in_k_t = set(k_t)
    for size in range(1, len(k) + 1):
        for fam in combinations(k, size):
            if all(m in in_k_t for m in fam):
                common = set(fam[0])
                for m in fam[1:]:
                    common &= set(m)
                if not (h_set & common):
                    k_th.append(fam)
                    continue
            k_bar.append(fam)
    alt = sum((-1) ** (len(fam) + 1) for fam in k_th)
    return KFamilies(
        t=t_, h=h_, k=k, k_t=k_t, k_th=tuple(k_th), k_bar=tuple(k_bar), alternating_sum=alt
    )


@dataclass(frozen=True)
class ConditionReport:
    passed: bool
    witnesses: tuple[str, ...] = ()


@dataclass(frozen=True)
class ValidityReport:
    """Per-condition outcome of a replacement plan check, with evidence."""

    pairing: ConditionReport
    sums: ConditionReport
    precedence: ConditionReport
    families: tuple[KFamilies, ...]
    order: tuple[VarSet, ...] | None

    @property
    def passed(self) -> bool:
        return self.pairing.passed and self.sums.passed and self.precedence.passed

    def describe(self) -> str:
        parts = []
        for name, rep in (
            ("pairing", self.pairing),
            ("alternating sums", self.sums),
            ("precedence order", self.precedence),
        ):
            state = "ok" if rep.passed else "FAILED"
            parts.append(f"{name}: {state}")
            parts.extend(f"  - {w}" for w in rep.witnesses)
        return "\n".join(parts)


def _fmt(s: Iterable[int]) -> str:
    return "{" + ",".join(str(v) for v in sorted(s)) + "}"


def _fmt_family(fam: Iterable[VarSet]) -> str:
    return "{" + ", ".join(_fmt(m) for m in fam) + "}"


def check_valid_replacement(plan: ReplacementPlan) -> ValidityReport:
    """Check the three replacement-validity conditions and report witnesses.

    The precedence condition is decided by building the directed graph
    of required orderings (set inclusion between redefined sets, plus
    one edge per excluded family resolving to a redefined set) and
    testing it for cycles; any topological order is a witness.  The
    plan's own listed order is preferred as the witness when it is
    itself coherent.
    """
    all_sets = plan.all_sets()
    i_set = set(plan.i_dup)
    r_set = set(plan.r_sets)

    pairing_wit: list[str] = []
    decomposable: list[bool] = []
    for t, item in zip(plan.i_dup, plan.h_items):
        ok = True
        if item.free != t:
            pairing_wit.append(
                f"replacement {item.describe()} does not extend the redefined set {_fmt(t)}"
            )
            ok = False
        if not item.fixed:
            pairing_wit.append(
                f"replacement {item.describe()} pins no extra variable at a non-reference category"
            )
            ok = False
        v = item.interaction
        if v in i_set or v in r_set:
            pairing_wit.append(
                f"replacement set {_fmt(v)} is already retained or redefined"
            )
            ok = False
        decomposable.append(item.free == t and bool(item.fixed))
    seen_terms = set()
    for item in plan.h_items:
        key = (item.interaction, item.fixed)
        if key in seen_terms:
            pairing_wit.append(f"replacement {item.describe()} appears twice")
        seen_terms.add(key)
    pairing = ConditionReport(not pairing_wit, tuple(pairing_wit))

    sums_wit: list[str] = []
    families: list[KFamilies] = []
    edges: set[tuple[VarSet, VarSet]] = set()
    prec_wit: list[str] = []
    for t, item, decomp in zip(plan.i_dup, plan.h_items, decomposable):
        if not decomp:
            sums_wit.append(f"not evaluated for {_fmt(t)}: no (set, added variables) split")
            prec_wit.append(f"not evaluated for {_fmt(t)}: no (set, added variables) split")
            continue
        fam = k_families(t, item.added, all_sets)
        families.append(fam)
        if fam.alternating_sum == 0:
            sums_wit.append(
                f"alternating sum vanishes for {_fmt(t)} with added {_fmt(item.added)} "
                f"(families {', '.join(_fmt_family(g) for g in fam.k_th) or 'none'})"
            )
        th = set(t) | set(item.added)
        for g in fam.k_bar:
            common = set(g[0])
            for m in g[1:]:
                common &= set(m)
            s = tuple(sorted(common & th))
            if not s:
                continue
            if s in r_set:
                continue
            if s in i_set:
                if s == t:
                    prec_wit.append(
                        f"family {_fmt_family(g)} forces {_fmt(t)} to precede itself"
                    )
                else:
                    edges.add((s, t))
                continue
            prec_wit.append(
                f"family {_fmt_family(g)} resolves to {_fmt(s)}, "
                "which is neither retained nor redefined"
            )
    sums = ConditionReport(not sums_wit, tuple(sums_wit))

    # inclusion among redefined sets always constrains the order
    for s, t in combinations(plan.i_dup, 2):
        if set(s) < set(t):
            edges.add((s, t))
        elif set(t) < set(s):
            edges.add((t, s))

    order: tuple[VarSet, ...] | None = None
    if not prec_wit:
        order = _topological_order(plan.i_dup, edges)
        if order is None:
            cycle = ", ".join(f"{_fmt(s)} before {_fmt(t)}" for s, t in sorted(edges))
            prec_wit.append(f"required precedences contain a cycle: {cycle}")
        else:
            pos = {s: k for k, s in enumerate(plan.i_dup)}
            if all(pos[s] < pos[t] for s, t in edges):
                order = plan.i_dup
    precedence = ConditionReport(not prec_wit, tuple(prec_wit))

    return ValidityReport(
        pairing=pairing,
        sums=sums,
        precedence=precedence,
        families=tuple(families),
        order=order,
    )


def _topological_order(
    nodes: Sequence[VarSet], edges: set[tuple[VarSet, VarSet]]
) -> tuple[VarSet, ...] | None:
    """Deterministic topological sort; None when the edges contain a cycle."""
    remaining = set(nodes)
    out: list[VarSet] = []
    while remaining:
        ready = sorted(
            (n for n in remaining if not any(s in remaining for s, t in edges if t == n)),
            key=lambda s: (len(s), s),
        )
        if not ready:
            return None
        out.append(ready[0])
        remaining.remove(ready[0])
    return tuple(out)


def _recipe_h(t: VarSet, k: Sequence[VarSet], margin: Margin) -> VarSet:
    """Added variables for one redefined set: those in at most one containing maximal set.

    With a single containing maximal set the rule degenerates to all
    margin variables outside it.
    """
    k_t = [m for m in k if set(t) <= set(m)]
    if not k_t:
        raise ReplacementError(f"{_fmt(t)} is not contained in any maximal set")
    if len(k_t) == 1:
        h = tuple(v for v in margin.vars if v not in set(k_t[0]))
    else:
        h = tuple(
            v
            for v in margin.vars
            if v not in set(t) and sum(1 for m in k_t if v in set(m)) <= 1
        )
    return h


def construct_replacement(
    a_sets: Iterable[Iterable[int]],
    v_sets: Iterable[Iterable[int]],
    margin: Margin,
    fixed_levels: Mapping[int, int] | None = None,
) -> ReplacementPlan:
    """Build a checked single-set replacement plan.

    Candidates for the redefined set are the minimal constrained sets
    that earlier margins own, tried in lexicographic order; for each,
    the added variables are chosen by the closed-form recipe and the
    resulting plan is returned as soon as it passes every validity
    condition.  Pinned categories default to 1, overridable per
    variable through ``fixed_levels``.
    """
    a = _as_sets(a_sets)
    v = _as_sets(v_sets)
    if not set(a) & set(v):
        raise ReplacementError("no constrained set is owned by an earlier margin")
    candidates = [t for t in minimal_sets(a) if t in set(v)]
    if not candidates:
        candidates = list(minimal_sets(set(a) & set(v)))
    errors: list[str] = []
    for t in sorted(candidates):
        plan = _single_plan(t, v, margin, fixed_levels)
        if plan is None:
            errors.append(f"{_fmt(t)}: no added variables available")
            continue
        report = check_valid_replacement(plan)
        if report.passed:
            return plan
        errors.append(f"{_fmt(t)}: {'; '.join(report.sums.witnesses + report.precedence.witnesses)}")
    raise ReplacementError(
        "no admissible replacement found; attempts: " + " / ".join(errors)
    )


def _single_plan(
    t: VarSet,
    v: tuple[VarSet, ...],
    margin: Margin,
    fixed_levels: Mapping[int, int] | None,
) -> ReplacementPlan | None:
    k = maximal_sets(v)
    h = _recipe_h(t, k, margin)
    if not h:
        return None
    pins = {int(var): int((fixed_levels or {}).get(var, 1)) for var in h}
    item = HItem.of(t, pins)
    return ReplacementPlan(
        i_dup=(t,), h_items=(item,), r_sets=tuple(s for s in v if s != t)
    )


def construct_full_replacement(
    a_sets: Iterable[Iterable[int]],
    v_sets: Iterable[Iterable[int]],
    margin: Margin,
    fixed_levels: Mapping[int, int] | None = None,
) -> ReplacementPlan:
    """Build a checked plan redefining every constrained set owned earlier.

    All duplicated sets are redefined in inclusion-refining order, each
    with recipe-chosen added variables; the combined plan must pass the
    validity check, otherwise an explicit plan is required.
    """
    a = _as_sets(a_sets)
    v = _as_sets(v_sets)
    dup = sorted(set(a) & set(v), key=lambda s: (len(s), s))
    if not dup:
        raise ReplacementError("no constrained set is owned by an earlier margin")
    k = maximal_sets(v)
    items = []
    for t in dup:
        h = _recipe_h(t, k, margin)
        if not h:
            raise ReplacementError(
                f"no added variables available for {_fmt(t)}; supply an explicit plan"
            )
        pins = {int(var): int((fixed_levels or {}).get(var, 1)) for var in h}
        items.append(HItem.of(t, pins))
    plan = ReplacementPlan(
        i_dup=tuple(dup),
        h_items=tuple(items),
        r_sets=tuple(s for s in v if s not in set(dup)),
    )
    report = check_valid_replacement(plan)
    if not report.passed:
        raise ReplacementError(
            "the recipe-built plan fails the validity conditions; supply an explicit plan.\n"
            + report.describe()
        )
    return plan


@dataclass(frozen=True, order=True)
class ContextConstraint:
    """One category restriction: variable equal to, or different from, a level."""

    var: int
    relation: str
    level: int

    def __post_init__(self) -> None:
        if self.relation not in ("eq", "ne"):
            raise ReplacementError(f"relation must be 'eq' or 'ne', got {self.relation!r}")
        if self.level < 0:
            raise ReplacementError("levels are non-negative")

    def describe(self) -> str:
        op = "=" if self.relation == "eq" else "≠"
        return f"X{self.var} {op} {self.level}"


@dataclass(frozen=True)
class ContextSpec:
    """Category restrictions under which a redefined statement provably holds."""

    constraints: tuple[ContextConstraint, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "constraints", tuple(sorted(self.constraints)))

    @property
    def unrestricted(self) -> bool:
        return not self.constraints

    def describe(self) -> str:
        if not self.constraints:
            return "unrestricted"
        return "; ".join(c.describe() for c in self.constraints)


def context_restriction(
    a_sets: Iterable[Iterable[int]],
    plan: ReplacementPlan,
    statement: CIStatement | None = None,
) -> ContextSpec:
    """Category restrictions implied by a replacement plan.

    Two sources: every pinned replacement variable must differ from its
    pinned category; and for every constrained set that stays retained
    (hence unconstrained), the variables it has outside each maximal
    redefined set are held at the reference category.  An equality
    constraint on a variable subsumes any inequality on it.  When the
    driving statement is supplied, the constrained variables must lie
    in its conditioning group.
    """
    a = set(_as_sets(a_sets))
    ne: list[ContextConstraint] = []
    for item in plan.h_items:
        for var, level in item.fixed:
            ne.append(ContextConstraint(var, "ne", level))
    eq_vars: set[int] = set()
    max_i = maximal_sets(plan.i_dup) if plan.i_dup else ()
    for v in sorted(a & set(plan.r_sets)):
        for m in max_i:
            eq_vars |= set(v) - set(m)
    constraints = [ContextConstraint(var, "eq", 0) for var in sorted(eq_vars)]
    constraints.extend(c for c in ne if c.var not in eq_vars)
    spec = ContextSpec(tuple(sorted(set(constraints))))
    if statement is not None:
        outside = {c.var for c in spec.constraints} - set(statement.c)
        if outside:
            raise ReplacementError(
                f"context would restrict {sorted(outside)}, which are not in the "
                f"conditioning group of {statement.describe()}"
            )
    return spec
