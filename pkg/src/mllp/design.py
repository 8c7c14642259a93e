"""Design matrices for reference-category log-linear parameterizations.

Four matrix families, all Kronecker products of per-variable factors
over the variables of a margin ``M``, with rows and columns in the
lexicographic cell order of :mod:`mllp.tables`:

- ``C`` rows map log-probabilities to reference-category interactions:
  the interaction term ``(I, x_I)`` is the alternating sum of
  ``log p`` over the cells obtained by switching each coordinate of
  ``x_I`` to the reference, all other variables held at the reference.
- ``G`` columns are 0/1 indicators of the event ``X_I = x_I``; over a
  full selection ``G`` is the exact right inverse of ``C``, and
  ``G' p`` is the vector of marginal event probabilities.
- ``S`` rows realize centered interactions (contrasts against the
  per-variable average instead of the reference category), with the
  conditioning variables either held at the reference or averaged
  over (``averaged=True``).
- weighted projectors perform least-squares projection onto indicator
  column spans in the inner product weighted by a positive cell
  distribution.

``C`` and ``G`` are integer matrices and exactness is preserved; ``S``
matrices hold small rationals as floats.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import chain, combinations, product
from typing import Iterable, Mapping, Sequence

import numpy as np

from .tables import InvalidSpecError, Margin, MllpError, ProbVector, VariableSpec

__all__ = [
    "SelectionError",
    "TermId",
    "TermSelection",
    "DesignMatrix",
    "all_subsets",
    "ascending_class",
    "contrast_row",
    "indicator_column",
    "build_C",
    "build_G",
    "build_S",
    "conversion_matrices",
    "ascending_selection",
    "weighted_projector",
    "weighted_projector_span",
]


class SelectionError(MllpError, ValueError):
    """A term or term selection is structurally invalid."""


@dataclass(frozen=True, order=True)
class TermId:
    """One interaction term: a variable set ``I`` and levels ``x_I``.

    ``interaction`` is strictly increasing; ``levels`` gives one
    non-reference category (>= 1) per interaction variable, in the same
    order.  Terms compare lexicographically by ``(interaction, levels)``,
    which is the canonical selection order.
    """

    interaction: tuple[int, ...]
    levels: tuple[int, ...]

    def __post_init__(self) -> None:
        interaction = tuple(int(v) for v in self.interaction)
        levels = tuple(int(x) for x in self.levels)
        object.__setattr__(self, "interaction", interaction)
        object.__setattr__(self, "levels", levels)
        if not interaction:
            raise SelectionError("a term needs a non-empty interaction set")
        if any(a >= b for a, b in zip(interaction, interaction[1:])):
            raise SelectionError(f"interaction must be strictly increasing, got {interaction}")
        if any(v < 1 for v in interaction):
            raise SelectionError(f"variable indices are 1-based, got {interaction}")
        if len(levels) != len(interaction):
            raise SelectionError(
                f"term has {len(interaction)} variables but {len(levels)} levels"
            )
        if any(x < 1 for x in levels):
            raise SelectionError(f"term levels must be non-reference (>= 1), got {levels}")

    def label(self) -> str:
        i = ",".join(str(v) for v in self.interaction)
        x = ",".join(str(v) for v in self.levels)
        return f"I={{{i}}};x={{{x}}}"

    def level_of(self, var: int) -> int:
        return self.levels[self.interaction.index(var)]


def all_subsets(vars_: Sequence[int]) -> list[tuple[int, ...]]:
    """Non-empty subsets of ``vars_`` in lexicographic tuple order."""
    subs = chain.from_iterable(combinations(sorted(vars_), k) for k in range(1, len(vars_) + 1))
    return sorted(subs)


def ascending_class(lower: Sequence[int], margin: Margin) -> list[tuple[int, ...]]:
    """All sets ``J`` with ``lower <= J <= margin``, lexicographic order."""
    base = tuple(sorted(lower))
    if not set(base) <= set(margin.vars):
        raise SelectionError(f"{base} is not a subset of margin {margin.vars}")
    rest = [v for v in margin.vars if v not in base]
    out = []
    for k in range(len(rest) + 1):
        for extra in combinations(rest, k):
            out.append(tuple(sorted(base + extra)))
    return sorted(out)


def _term_levels(interaction: Sequence[int], spec: VariableSpec) -> list[tuple[int, ...]]:
    """All non-reference level combinations, last variable fastest."""
    ranges = [range(1, spec.n_levels(v)) for v in interaction]
    return [tuple(xs) for xs in product(*ranges)]


@dataclass(frozen=True, eq=False)
class TermSelection:
    """An ordered, duplicate-free list of terms over one margin."""

    margin: Margin
    terms: tuple[TermId, ...]

    def __post_init__(self) -> None:
        terms = tuple(self.terms)
        object.__setattr__(self, "terms", terms)
        mvars = set(self.margin.vars)
        for t in terms:
            if not set(t.interaction) <= mvars:
                raise SelectionError(
                    f"term {t.label()} reaches outside margin {self.margin.vars}"
                )
        if len(set(terms)) != len(terms):
            raise SelectionError("duplicate terms in selection")

    def __len__(self) -> int:
        return len(self.terms)

    def __iter__(self):
        return iter(self.terms)

    def validate_levels(self, spec: VariableSpec) -> None:
        for t in self.terms:
            for v, x in zip(t.interaction, t.levels):
                if x >= spec.n_levels(v):
                    raise SelectionError(
                        f"term {t.label()}: category {x} out of range for variable {v}"
                    )

    def index_of(self, term: TermId) -> int:
        try:
            return self.terms.index(term)
        except ValueError:
            raise SelectionError(f"term {term.label()} not in selection") from None

    def concat(self, other: "TermSelection") -> "TermSelection":
        if other.margin != self.margin:
            raise SelectionError("cannot concatenate selections over different margins")
        return TermSelection(self.margin, self.terms + other.terms)

    def interaction_sets(self) -> tuple[tuple[int, ...], ...]:
        """Distinct interaction sets, in first-appearance order."""
        seen: dict[tuple[int, ...], None] = {}
        for t in self.terms:
            seen.setdefault(t.interaction, None)
        return tuple(seen)

    def term_labels(self) -> tuple[str, ...]:
        return tuple(t.label() for t in self.terms)

    @classmethod
    def block(cls, margin: Margin, spec: VariableSpec, interaction: Sequence[int]) -> "TermSelection":
        """All terms of one interaction set, levels in lexicographic order."""
        i = tuple(sorted(int(v) for v in interaction))
        if not set(i) <= set(margin.vars):
            raise SelectionError(f"interaction {i} is not a subset of margin {margin.vars}")
        terms = tuple(TermId(i, xs) for xs in _term_levels(i, spec))
        return cls(margin, terms)

    @classmethod
    def blocks(
        cls, margin: Margin, spec: VariableSpec, sets: Iterable[Sequence[int]]
    ) -> "TermSelection":
        """Concatenation of full blocks, one per set, in the given order."""
        sel = cls(margin, ())
        for s in sets:
            sel = sel.concat(cls.block(margin, spec, s))
        return sel

    @classmethod
    def full(cls, margin: Margin, spec: VariableSpec) -> "TermSelection":
        """Every term of every non-empty subset of the margin, canonical order."""
        return cls.blocks(margin, spec, all_subsets(margin.vars))

    @classmethod
    def fixed_block(
        cls,
        margin: Margin,
        spec: VariableSpec,
        free: Sequence[int],
        fixed: Mapping[int, int],
    ) -> "TermSelection":
        """Terms of interaction set ``free | fixed`` with the fixed variables pinned.

        The free variables run over all non-reference combinations in
        lexicographic order; each fixed variable keeps its single pinned
        non-reference category.
        """
        free_t = tuple(sorted(int(v) for v in free))
        fixed_d = {int(v): int(x) for v, x in fixed.items()}
        if set(free_t) & set(fixed_d):
            raise SelectionError(f"free and fixed variables overlap: {free_t} vs {sorted(fixed_d)}")
        interaction = tuple(sorted(free_t + tuple(fixed_d)))
        terms = []
        for xs in _term_levels(free_t, spec):
            at = dict(zip(free_t, xs))
            at.update(fixed_d)
            terms.append(TermId(interaction, tuple(at[v] for v in interaction)))
        sel = cls(margin, tuple(terms))
        sel.validate_levels(spec)
        return sel


@dataclass(frozen=True, eq=False)
class DesignMatrix:
    """A matrix whose rows or columns are indexed by a term selection."""

    selection: TermSelection
    values: np.ndarray = field(repr=False)
    terms_on: str = "rows"

    def __post_init__(self) -> None:
        if self.terms_on not in ("rows", "cols"):
            raise SelectionError(f"terms_on must be 'rows' or 'cols', got {self.terms_on!r}")
        values = np.asarray(self.values)
        n = len(self.selection)
        axis = 0 if self.terms_on == "rows" else 1
        if values.ndim != 2 or values.shape[axis] != n:
            raise SelectionError(
                f"matrix shape {values.shape} does not match {n} terms on {self.terms_on}"
            )
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape


def contrast_row(
    spec: VariableSpec,
    margin: Margin,
    term: TermId,
    conditioning: Mapping[int, int] | None = None,
) -> np.ndarray:
    """Integer row computing one interaction from the log-probability vector.

    The Kronecker factor of an interaction variable at level ``x`` is
    ``e_x - e_0``; every other variable contributes the indicator of its
    conditioning category (reference by default).  The dot product with
    ``log p`` is the alternating sum defining the interaction given
    those conditioning values.
    """
    cond = dict(conditioning or {})
    inter = set(term.interaction)
    if inter & set(cond):
        raise SelectionError("conditioning values must not cover interaction variables")
    row = np.ones(1, dtype=np.int64)
    for var in margin:
        L = spec.n_levels(var)
        factor = np.zeros(L, dtype=np.int64)
        if var in inter:
            x = term.level_of(var)
            if x >= L:
                raise SelectionError(f"category {x} out of range for variable {var}")
            factor[x] = 1
            factor[0] -= 1
        else:
            c = cond.get(var, 0)
            if not 0 <= c < L:
                raise SelectionError(f"conditioning category {c} out of range for variable {var}")
            factor[c] = 1
        row = np.kron(row, factor)
    return row


def indicator_column(spec: VariableSpec, margin: Margin, term: TermId) -> np.ndarray:
    """0/1 indicator of the event ``X_I = x_I`` over the margin's cells."""
    inter = set(term.interaction)
    col = np.ones(1, dtype=np.int64)
    for var in margin:
        L = spec.n_levels(var)
        if var in inter:
            factor = np.zeros(L, dtype=np.int64)
            x = term.level_of(var)
            if x >= L:
                raise SelectionError(f"category {x} out of range for variable {var}")
            factor[x] = 1
        else:
            factor = np.ones(L, dtype=np.int64)
        col = np.kron(col, factor)
    return col


def build_C(selection: TermSelection, spec: VariableSpec) -> DesignMatrix:
    """Rows of interaction contrasts, one per term (terms x cells)."""
    selection.validate_levels(spec)
    n = selection.margin.cell_count(spec)
    rows = np.zeros((len(selection), n), dtype=np.int64)
    for k, term in enumerate(selection):
        rows[k] = contrast_row(spec, selection.margin, term)
    return DesignMatrix(selection, rows, terms_on="rows")


def build_G(selection: TermSelection, spec: VariableSpec) -> DesignMatrix:
    """Columns of event indicators, one per term (cells x terms)."""
    selection.validate_levels(spec)
    n = selection.margin.cell_count(spec)
    cols = np.zeros((n, len(selection)), dtype=np.int64)
    for k, term in enumerate(selection):
        cols[:, k] = indicator_column(spec, selection.margin, term)
    return DesignMatrix(selection, cols, terms_on="cols")


def build_S(selection: TermSelection, spec: VariableSpec, averaged: bool = False) -> DesignMatrix:
    """Rows of centered contrasts, one per term (terms x cells).

    The factor of an interaction variable at level ``x`` is
    ``e_x - 1/L`` (contrast against the variable's average).  A
    non-interaction variable contributes the reference indicator, or the
    averaging row ``1'/L`` when ``averaged`` is set.
    """
    selection.validate_levels(spec)
    n = selection.margin.cell_count(spec)
    rows = np.zeros((len(selection), n), dtype=float)
    for k, term in enumerate(selection):
        inter = set(term.interaction)
        row = np.ones(1, dtype=float)
        for var in selection.margin:
            L = spec.n_levels(var)
            if var in inter:
                factor = np.full(L, -1.0 / L)
                factor[term.level_of(var)] += 1.0
            elif averaged:
                factor = np.full(L, 1.0 / L)
            else:
                factor = np.zeros(L)
                factor[0] = 1.0
            row = np.kron(row, factor)
        rows[k] = row
    return DesignMatrix(selection, rows, terms_on="rows")


def ascending_selection(
    interaction: Sequence[int], margin: Margin, spec: VariableSpec
) -> TermSelection:
    """Blocks of every set between ``interaction`` and the full margin."""
    return TermSelection.blocks(margin, spec, ascending_class(interaction, margin))


def conversion_matrices(
    interaction: Sequence[int], margin: Margin, spec: VariableSpec
) -> tuple[np.ndarray, np.ndarray]:
    """Linear maps from reference-category to centered interactions.

    Returns ``(A, B)``.  ``A`` converts the block of ``interaction`` to
    its centered form conditioned at the reference configuration:
    ``centered = A @ eta_block``.  ``B`` converts to the centered form
    averaged over the conditioning variables and consumes the
    concatenated blocks of the whole ascending class of ``interaction``
    (see :func:`ascending_selection` for the column order):
    ``centered_avg = B @ eta_ascending``.
    """
    block = TermSelection.block(margin, spec, interaction)
    g_block = build_G(block, spec).values.astype(float)
    s_plain = build_S(block, spec, averaged=False).values
    a = s_plain @ g_block

    asc = ascending_selection(interaction, margin, spec)
    g_asc = build_G(asc, spec).values.astype(float)
    s_avg = build_S(block, spec, averaged=True).values
    b = s_avg @ g_asc
    return a, b


def _projector_from_columns(x: np.ndarray, p: ProbVector) -> np.ndarray:
    """Projector onto the column span of ``x``, self-adjoint for the p-weighted inner product.

    Conjugating by ``diag(sqrt(p))`` turns the weighted projection into
    an ordinary orthogonal one, which an SVD basis handles even when
    the columns are linearly dependent.
    """
    w = np.sqrt(p.values)
    y = x.astype(float) * w[:, None]
    u, s, _ = np.linalg.svd(y, full_matrices=False)
    if s.size == 0 or s[0] == 0.0:
        return np.zeros((x.shape[0], x.shape[0]))
    rank = int(np.sum(s > s[0] * 1e-12))
    u = u[:, :rank]
    return (u @ u.T) * (w[None, :] / w[:, None])


def _saturated_block(spec: VariableSpec, margin: Margin, subset: Iterable[int]) -> np.ndarray:
    """Indicator columns of every cell of ``subset``, cells x columns."""
    keep = set(int(v) for v in subset)
    if not keep <= set(margin.vars):
        raise SelectionError(f"{sorted(keep)} is not a subset of margin {margin.vars}")
    cols = np.ones((1, 1), dtype=np.int64)
    for var in margin:
        L = spec.n_levels(var)
        factor = np.eye(L, dtype=np.int64) if var in keep else np.ones((L, 1), dtype=np.int64)
        cols = np.kron(cols, factor)
    return cols


def weighted_projector(subset: Iterable[int], p: ProbVector) -> np.ndarray:
    """Projection onto functions of the variables in ``subset``.

    The projection is orthogonal in the inner product weighted by the
    cell probabilities ``p``; with an empty subset it maps every vector
    to the constant holding its p-weighted mean (the matrix ``1 p'``).
    The result is idempotent and self-adjoint for that inner product.
    """
    x = _saturated_block(p.spec, p.margin, subset)
    return _projector_from_columns(x, p)


def weighted_projector_span(subsets: Iterable[Iterable[int]], p: ProbVector) -> np.ndarray:
    """Projection onto the sum of the spans of several variable subsets.

    Each subset contributes the indicator columns of all its cells; the
    projection onto the combined span is orthogonal in the p-weighted
    inner product.
    """
    blocks = [_saturated_block(p.spec, p.margin, s) for s in subsets]
    if not blocks:
        blocks = [np.ones((len(p), 1), dtype=np.int64)]
    return _projector_from_columns(np.hstack(blocks), p)
