"""Contingency-table bookkeeping: variables, margins, cells, distributions.

Conventions shared by every module in this package:

- Variables are identified by 1-based integer indices.  Variable ``j``
  takes values in ``0 .. r_j`` where ``r_j + 1`` is its number of
  categories; category ``0`` is the reference category.
- A margin is a non-empty, strictly increasing tuple of variable
  indices.
- A probability vector over a margin stores one entry per cell, in
  lexicographic order of the cell coordinates with the LAST listed
  variable varying fastest.  This matches the row and column order of
  every Kronecker-product matrix built in :mod:`mllp.design`, so
  vectors and matrices align index for index.
- Probability vectors must be strictly positive: the parameter maps
  take logarithms, so zero cells are rejected at construction.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping

import numpy as np

__all__ = [
    "MllpError",
    "InvalidSpecError",
    "InvalidCellError",
    "InvalidDistributionError",
    "VariableSpec",
    "Margin",
    "CellConfig",
    "ProbVector",
    "cell_index",
    "config_of_index",
    "all_configs",
    "marginalize",
    "random_distribution",
    "uniform_distribution",
]


class MllpError(Exception):
    """Base class for every error raised by this package."""


class InvalidSpecError(MllpError, ValueError):
    """A variable spec, margin, or selection is structurally invalid."""


class InvalidCellError(MllpError, ValueError):
    """A cell configuration is incomplete or out of range."""


class InvalidDistributionError(MllpError, ValueError):
    """A probability vector violates positivity or normalization."""


@dataclass(frozen=True)
class VariableSpec:
    """Category counts for ``d`` discrete variables.

    ``levels[j-1]`` is the number of categories of variable ``j``, so
    variable ``j`` takes values ``0 .. levels[j-1] - 1`` with category
    0 as the reference.
    """

    levels: tuple[int, ...]

    def __post_init__(self) -> None:
        levels = tuple(int(x) for x in self.levels)
        object.__setattr__(self, "levels", levels)
        if not levels:
            raise InvalidSpecError("a variable spec needs at least one variable")
        if any(x < 2 for x in levels):
            raise InvalidSpecError(f"every variable needs at least 2 categories, got {levels}")

    @property
    def n_vars(self) -> int:
        return len(self.levels)

    @property
    def variables(self) -> tuple[int, ...]:
        return tuple(range(1, len(self.levels) + 1))

    def n_levels(self, var: int) -> int:
        """Number of categories of variable ``var`` (1-based)."""
        if not 1 <= var <= len(self.levels):
            raise InvalidSpecError(f"unknown variable {var}")
        return self.levels[var - 1]

    def n_nonref(self, var: int) -> int:
        """Number of non-reference categories ``r_j`` of variable ``var``."""
        return self.n_levels(var) - 1

    def full_margin(self) -> "Margin":
        return Margin(self.variables)


@dataclass(frozen=True, order=True)
class Margin:
    """A non-empty sorted subset of variable indices."""

    vars: tuple[int, ...]

    def __post_init__(self) -> None:
        vars_ = tuple(int(v) for v in self.vars)
        object.__setattr__(self, "vars", vars_)
        if not vars_:
            raise InvalidSpecError("a margin must contain at least one variable")
        if any(v < 1 for v in vars_):
            raise InvalidSpecError(f"variable indices are 1-based, got {vars_}")
        if any(a >= b for a, b in zip(vars_, vars_[1:])):
            raise InvalidSpecError(f"margin variables must be strictly increasing, got {vars_}")

    @classmethod
    def of(cls, vars_: Iterable[int]) -> "Margin":
        """Build a margin from any iterable, sorting and deduplicating."""
        return cls(tuple(sorted(set(int(v) for v in vars_))))

    def __iter__(self) -> Iterator[int]:
        return iter(self.vars)

    def __len__(self) -> int:
        return len(self.vars)

    def __contains__(self, var: int) -> bool:
        return var in self.vars

    def issubset(self, other: "Margin") -> bool:
        return set(self.vars) <= set(other.vars)

    def validate_within(self, spec: VariableSpec) -> None:
        if self.vars[-1] > spec.n_vars:
            raise InvalidSpecError(
                f"margin {self.vars} mentions variable {self.vars[-1]} "
                f"but only {spec.n_vars} variables are declared"
            )

    def shape(self, spec: VariableSpec) -> tuple[int, ...]:
        """Level counts of the margin's variables, in margin order."""
        self.validate_within(spec)
        return tuple(spec.n_levels(v) for v in self.vars)

    def cell_count(self, spec: VariableSpec) -> int:
        n = 1
        for L in self.shape(spec):
            n *= L
        return n


@dataclass(frozen=True)
class CellConfig:
    """An assignment of categories to variables, category 0 = reference."""

    assignments: tuple[tuple[int, int], ...]

    def __post_init__(self) -> None:
        pairs = tuple(sorted((int(v), int(x)) for v, x in self.assignments))
        object.__setattr__(self, "assignments", pairs)
        seen = [v for v, _ in pairs]
        if len(set(seen)) != len(seen):
            raise InvalidCellError(f"duplicate variable in cell configuration: {pairs}")
        if any(x < 0 for _, x in pairs):
            raise InvalidCellError(f"categories are non-negative, got {pairs}")

    @classmethod
    def of(cls, assignments: Mapping[int, int]) -> "CellConfig":
        return cls(tuple(assignments.items()))

    def as_dict(self) -> dict[int, int]:
        return dict(self.assignments)

    def get(self, var: int) -> int | None:
        for v, x in self.assignments:
            if v == var:
                return x
        return None


def cell_index(config: CellConfig, margin: Margin, spec: VariableSpec) -> int:
    """Position of a cell under the lexicographic order, last variable fastest.

    Mixed-radix positional arithmetic: the first margin variable has the
    largest stride, the last has stride 1.
    """
    lookup = config.as_dict()
    index = 0
    for var in margin:
        x = lookup.get(var)
        if x is None:
            raise InvalidCellError(f"configuration does not assign variable {var}")
        L = spec.n_levels(var)
        if not 0 <= x < L:
            raise InvalidCellError(f"category {x} out of range for variable {var} with {L} levels")
        index = index * L + x
    return index


def config_of_index(index: int, margin: Margin, spec: VariableSpec) -> CellConfig:
    """Inverse of :func:`cell_index` over the cells of ``margin``."""
    total = margin.cell_count(spec)
    if not 0 <= index < total:
        raise InvalidCellError(f"cell index {index} out of range for {total} cells")
    coords: dict[int, int] = {}
    for var in reversed(margin.vars):
        L = spec.n_levels(var)
        index, x = divmod(index, L)
        coords[var] = x
    return CellConfig.of(coords)


def all_configs(margin: Margin, spec: VariableSpec) -> Iterator[CellConfig]:
    """All cell configurations of ``margin`` in vector order."""
    for coords in np.ndindex(margin.shape(spec)):
        yield CellConfig.of(dict(zip(margin.vars, (int(c) for c in coords))))


@dataclass(frozen=True, eq=False)
class ProbVector:
    """Strictly positive cell probabilities over a margin.

    Entries are in lexicographic cell order with the last margin
    variable varying fastest, sum to 1 within 1e-12, and are all
    strictly positive.  The underlying array is read-only.
    """

    spec: VariableSpec
    margin: Margin
    values: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        self.margin.validate_within(self.spec)
        values = np.array(self.values, dtype=float)
        if values.ndim != 1:
            raise InvalidDistributionError("probability values must form a 1-d vector")
        n = self.margin.cell_count(self.spec)
        if values.shape[0] != n:
            raise InvalidDistributionError(
                f"margin {self.margin.vars} has {n} cells but {values.shape[0]} values were given"
            )
        if not np.all(np.isfinite(values)) or np.any(values <= 0.0):
            raise InvalidDistributionError(
                "cell probabilities must be finite and strictly positive"
            )
        total = float(values.sum())
        if abs(total - 1.0) > 1e-12:
            raise InvalidDistributionError(f"cell probabilities sum to {total!r}, not 1")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def __len__(self) -> int:
        return self.values.shape[0]

    def value_at(self, config: CellConfig) -> float:
        return float(self.values[cell_index(config, self.margin, self.spec)])

    def as_table(self) -> np.ndarray:
        """Reshape to one axis per margin variable, in margin order."""
        return self.values.reshape(self.margin.shape(self.spec))


def marginalize(p: ProbVector, target: Margin) -> ProbVector:
    """Sum out the variables of ``p.margin`` not in ``target``.

    C-order reshaping keeps the last-variable-fastest convention, so
    summing over the dropped axes and flattening lands every remaining
    cell at its own index.
    """
    if not target.issubset(p.margin):
        raise InvalidSpecError(
            f"target margin {target.vars} is not a subset of {p.margin.vars}"
        )
    keep = set(target.vars)
    axes = tuple(i for i, v in enumerate(p.margin.vars) if v not in keep)
    table = p.as_table()
    if axes:
        table = table.sum(axis=axes)
    return ProbVector(p.spec, target, table.reshape(-1))


def uniform_distribution(spec: VariableSpec, margin: Margin) -> ProbVector:
    n = margin.cell_count(spec)
    return ProbVector(spec, margin, np.full(n, 1.0 / n))


def random_distribution(
    spec: VariableSpec,
    margin: Margin,
    mode: str = "general",
    seed: int | np.random.SeedSequence | None = None,
) -> ProbVector:
    """Seeded strictly positive random distribution over a margin.

    ``general`` draws a flat Dirichlet vector (normalized independent
    unit-rate exponentials).  ``complete_independence`` draws one flat
    Dirichlet per variable and forms the outer product, so every pair
    of variables in the margin is exactly independent.
    """
    rng = np.random.default_rng(seed)
    if mode == "general":
        g = rng.exponential(size=margin.cell_count(spec))
        # exponential draws are almost surely positive; clip for safety
        g = np.maximum(g, 1e-300)
        return ProbVector(spec, margin, g / g.sum())
    if mode == "complete_independence":
        cells = np.ones(1)
        for var in margin:
            w = rng.exponential(size=spec.n_levels(var))
            w = np.maximum(w, 1e-300)
            cells = np.kron(cells, w / w.sum())
        return ProbVector(spec, margin, cells / cells.sum())
    raise InvalidSpecError(f"unknown sampling mode {mode!r}")
