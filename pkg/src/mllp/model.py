"""Model documents and the margin-by-margin reconstruction pipeline.

A model document declares variable levels and an ordered list of
margins, each carrying conditional independence statements and,
optionally, an explicit replacement plan:

    {
      "levels": [2, 2, 2, 2],
      "margins": [
        {"vars": [1, 2, 3], "statements": [{"a": [1], "b": [2], "c": [3]}]},
        {"vars": [1, 2, 3, 4], "statements": [{"a": [1], "b": [2], "c": [3, 4]}],
         "plan": {"i": [[1, 2]], "h": [{"vars": [1, 2], "fixed": {"4": 1}}]}}
      ],
      "free_params": {"I={3};x={1}": 0.4}
    }

Margins are listed in non-decreasing cardinality and the final margin
must cover every declared variable (it is appended with a warning
otherwise).  Every interaction set belongs to the first listed margin
containing it; later margins receive its mean value as a pinned
target, marginalized from the most recent reconstruction that covers
it.  A statement whose constrained sets are all new to its margin
turns into plain canonical constraints; a statement that re-constrains
sets owned earlier triggers the replacement machinery of
:mod:`mllp.replacement` and the two-step reconstruction of
:mod:`mllp.lm`.  At most one statement per margin may re-constrain
earlier sets; models where several do are rejected as conflicting.

Free parameters assign canonical values to terms no statement
constrains; their keys use the same labels as the matrix CSV output,
``I={1,2};x={1,1}``.
"""

from __future__ import annotations

import json
import re
import warnings
from dataclasses import dataclass
from typing import Any, Mapping, Sequence

import numpy as np

from .design import TermId, TermSelection
from .diagnostics import SmoothnessVerdict, classify_plan
from .lm import LMInputs, LMResult, lm_reconstruct
from .params import MixedSpec, ParamVector, mixed_solve, mu_of
from .replacement import (
    CIStatement,
    ContextSpec,
    HItem,
    ReplacementPlan,
    ci_to_interactions,
    construct_full_replacement,
    context_restriction,
    plan_selections,
)
from .tables import Margin, MllpError, ProbVector, VariableSpec

__all__ = [
    "ModelError",
    "ParseError",
    "NonIdentifiableModelError",
    "MarginBlock",
    "ModelSpec",
    "MarginResult",
    "PipelineResult",
    "MarginCheck",
    "CheckReport",
    "parse_model",
    "model_from_dict",
    "run_pipeline",
    "check_model",
    "matrix_table",
    "plan_to_dict",
    "context_to_dict",
    "check_to_dict",
    "pipeline_to_dict",
]

VarSet = tuple[int, ...]

_TERM_KEY = re.compile(r"^I=\{(\d+(?:,\d+)*)\};x=\{(\d+(?:,\d+)*)\}$")


class ModelError(MllpError, ValueError):
    """A model document is structurally or semantically invalid."""


class ParseError(ModelError):
    """A model document could not be parsed; ``path`` locates the offence."""

    def __init__(self, message: str, path: str = ""):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path


class NonIdentifiableModelError(MllpError, RuntimeError):
    """Reconstruction refused: the replacement cannot pin down a unique joint."""

    def __init__(self, margin: Margin, verdict: SmoothnessVerdict):
        super().__init__(
            f"margin {list(margin.vars)}: the replacement carries no information at "
            "independence, so the mixed parameter vector does not identify a unique "
            "joint distribution"
        )
        self.margin = margin
        self.verdict = verdict


@dataclass(frozen=True)
class MarginBlock:
    """One margin of a model with its derived bookkeeping.

    ``v_sets`` lists the interaction sets owned by earlier margins,
    ``owned_sets`` those first seen here, and ``constrained_sets`` the
    union of all statements' constrained sets.  ``driving`` is the
    statement (if any) that re-constrains earlier sets and therefore
    needs the replacement plan.
    """

    margin: Margin
    statements: tuple[CIStatement, ...]
    plan: ReplacementPlan | None
    plan_source: str
    v_sets: tuple[VarSet, ...]
    owned_sets: tuple[VarSet, ...]
    constrained_sets: tuple[VarSet, ...]
    driving: CIStatement | None


@dataclass(frozen=True)
class ModelSpec:
    """A parsed model: variables, margin blocks, and free parameter values."""

    spec: VariableSpec
    margins: tuple[MarginBlock, ...]
    free_params: tuple[tuple[TermId, float], ...] = ()
    appended_full: bool = False

    def free_param_map(self) -> dict[TermId, float]:
        return dict(self.free_params)

    def duplication_blocks(self) -> tuple[MarginBlock, ...]:
        return tuple(b for b in self.margins if b.plan is not None)


def _path(*parts: Any) -> str:
    out = ""
    for p in parts:
        out = f"{out}[{p}]" if isinstance(p, int) else (f"{out}.{p}" if out else str(p))
    return out


def _require(data: Mapping[str, Any], key: str, path: str) -> Any:
    if key not in data:
        raise ParseError(f"missing required field {key!r}", path)
    return data[key]


def _int_list(value: Any, path: str) -> list[int]:
    if not isinstance(value, list) or not all(isinstance(v, int) and not isinstance(v, bool) for v in value):
        raise ParseError("expected a list of integers", path)
    return list(value)


def parse_term_key(key: str) -> TermId:
    """Parse a term label of the form ``I={1,2};x={1,1}``."""
    m = _TERM_KEY.match(key.replace(" ", ""))
    if not m:
        raise ParseError(
            f"bad term key {key!r}; expected the form I={{1,2}};x={{1,1}}"
        )
    interaction = tuple(int(v) for v in m.group(1).split(","))
    levels = tuple(int(v) for v in m.group(2).split(","))
    try:
        return TermId(interaction, levels)
    except MllpError as exc:
        raise ParseError(f"bad term key {key!r}: {exc}") from exc


def parse_model(text: str) -> ModelSpec:
    """Parse and validate a JSON model document."""
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(
            f"invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}"
        ) from exc
    return model_from_dict(data)


def model_from_dict(data: Any) -> ModelSpec:
    """Build a validated model from an already-decoded JSON object."""
    if not isinstance(data, dict):
        raise ParseError("the model document must be a JSON object")
    levels = _int_list(_require(data, "levels", "model"), "levels")
    try:
        spec = VariableSpec(tuple(levels))
    except MllpError as exc:
        raise ParseError(str(exc), "levels") from exc

    raw_margins = _require(data, "margins", "model")
    if not isinstance(raw_margins, list) or not raw_margins:
        raise ParseError("expected a non-empty list of margins", "margins")

    blocks: list[MarginBlock] = []
    seen_margins: list[Margin] = []
    owned_before: set[VarSet] = set()
    appended_full = False

    entries = list(enumerate(raw_margins))
    full_margin = spec.full_margin()
    for k, raw in entries:
        path = _path("margins", k)
        if not isinstance(raw, dict):
            raise ParseError("expected an object", path)
        vars_ = _int_list(_require(raw, "vars", path), f"{path}.vars")
        if len(set(vars_)) != len(vars_):
            raise ParseError(f"duplicate variables in margin: {vars_}", f"{path}.vars")
        try:
            margin = Margin(tuple(sorted(vars_)))
            margin.validate_within(spec)
        except MllpError as exc:
            raise ParseError(str(exc), f"{path}.vars") from exc
        if seen_margins and len(margin) < len(seen_margins[-1]):
            raise ParseError(
                f"margins must be listed in non-decreasing cardinality; "
                f"{list(margin.vars)} comes after {list(seen_margins[-1].vars)}",
                f"{path}.vars",
            )
        if margin in seen_margins:
            raise ParseError(f"margin {list(margin.vars)} is listed twice", f"{path}.vars")
        seen_margins.append(margin)
        blocks.append(
            _build_block(spec, margin, raw, path, owned_before)
        )
        owned_before |= set(blocks[-1].owned_sets)

    if blocks[-1].margin != full_margin:
        warnings.warn(
            "the final margin does not cover every variable; appending the full "
            "margin with no statements",
            stacklevel=2,
        )
        blocks.append(
            _build_block(spec, full_margin, {"vars": list(full_margin.vars)}, "margins[appended]", owned_before)
        )
        appended_full = True

    free_raw = data.get("free_params", {})
    if not isinstance(free_raw, dict):
        raise ParseError("expected an object of term-value pairs", "free_params")
    free_params = []
    for key, value in sorted(free_raw.items()):
        term = parse_term_key(key)
        if not isinstance(value, (int, float)) or isinstance(value, bool) or not np.isfinite(value):
            raise ParseError(f"value for {key!r} must be a finite number", "free_params")
        free_params.append((term, float(value)))

    model = ModelSpec(
        spec=spec,
        margins=tuple(blocks),
        free_params=tuple(free_params),
        appended_full=appended_full,
    )
    _validate_free_params(model)
    return model


def _build_block(
    spec: VariableSpec,
    margin: Margin,
    raw: Mapping[str, Any],
    path: str,
    owned_before: set[VarSet],
) -> MarginBlock:
    from .design import all_subsets

    power = all_subsets(margin.vars)
    v_sets = tuple(s for s in power if s in owned_before)
    owned = tuple(s for s in power if s not in owned_before)

    statements = []
    for j, raw_stmt in enumerate(raw.get("statements", []) or []):
        spath = f"{path}.statements[{j}]"
        if not isinstance(raw_stmt, dict):
            raise ParseError("expected an object", spath)
        a = _int_list(_require(raw_stmt, "a", spath), f"{spath}.a")
        b = _int_list(_require(raw_stmt, "b", spath), f"{spath}.b")
        c = _int_list(raw_stmt.get("c", []), f"{spath}.c")
        try:
            stmt = CIStatement(tuple(a), tuple(b), tuple(c))
        except MllpError as exc:
            raise ParseError(str(exc), spath) from exc
        if set(stmt.margin.vars) != set(margin.vars):
            raise ParseError(
                f"statement {stmt.describe()} covers {list(stmt.margin.vars)}, "
                f"not the margin {list(margin.vars)}",
                spath,
            )
        statements.append(stmt)

    constrained: set[VarSet] = set()
    driving = None
    driving_dup: set[VarSet] = set()
    for j, stmt in enumerate(statements):
        a_sets = set(ci_to_interactions(stmt))
        constrained |= a_sets
        dup = a_sets & set(v_sets)
        if dup:
            if driving is not None:
                raise ParseError(
                    "two statements re-constrain interaction sets owned by earlier "
                    f"margins ({stmt.describe()} and {driving.describe()}); "
                    "such models are rejected as conflicting",
                    f"{path}.statements[{j}]",
                )
            driving = stmt
            driving_dup = dup

    plan = None
    plan_source = "none"
    raw_plan = raw.get("plan")
    if raw_plan is not None and driving is None:
        raise ParseError("a plan was given but no statement re-constrains earlier sets", f"{path}.plan")
    if driving is not None:
        if raw_plan is not None:
            plan = _parse_plan(raw_plan, margin, v_sets, f"{path}.plan")
            plan_source = "given"
        else:
            try:
                plan = construct_full_replacement(
                    ci_to_interactions(driving), v_sets, margin
                )
            except MllpError as exc:
                raise ParseError(
                    f"no replacement plan was given and none could be constructed: {exc}",
                    path,
                ) from exc
            plan_source = "constructed"
        for t in plan.i_dup:
            if t not in driving_dup:
                raise ParseError(
                    f"plan redefines {list(t)}, which the driving statement does not "
                    "re-constrain",
                    f"{path}.plan",
                )

    return MarginBlock(
        margin=margin,
        statements=tuple(statements),
        plan=plan,
        plan_source=plan_source,
        v_sets=v_sets,
        owned_sets=owned,
        constrained_sets=tuple(sorted(constrained)),
        driving=driving,
    )


def _parse_plan(
    raw: Any, margin: Margin, v_sets: tuple[VarSet, ...], path: str
) -> ReplacementPlan:
    if not isinstance(raw, dict):
        raise ParseError("expected an object with fields 'i' and 'h'", path)
    raw_i = _require(raw, "i", path)
    raw_h = _require(raw, "h", path)
    if not isinstance(raw_i, list) or not isinstance(raw_h, list):
        raise ParseError("'i' and 'h' must be lists", path)
    i_dup = []
    for j, s in enumerate(raw_i):
        i_dup.append(tuple(sorted(_int_list(s, f"{path}.i[{j}]"))))
        if i_dup[-1] not in set(v_sets):
            raise ParseError(
                f"{list(i_dup[-1])} is not owned by an earlier margin", f"{path}.i[{j}]"
            )
    items = []
    for j, raw_item in enumerate(raw_h):
        ipath = f"{path}.h[{j}]"
        if not isinstance(raw_item, dict):
            raise ParseError("expected an object with 'vars' and optional 'fixed'", ipath)
        vars_ = _int_list(_require(raw_item, "vars", ipath), f"{ipath}.vars")
        fixed_raw = raw_item.get("fixed", {})
        if not isinstance(fixed_raw, dict):
            raise ParseError("'fixed' must map variables to categories", f"{ipath}.fixed")
        fixed = {}
        for key, val in fixed_raw.items():
            try:
                var = int(key)
            except (TypeError, ValueError):
                raise ParseError(f"bad variable key {key!r}", f"{ipath}.fixed") from None
            if not isinstance(val, int) or isinstance(val, bool):
                raise ParseError(f"category for variable {var} must be an integer", f"{ipath}.fixed")
            fixed[var] = val
        try:
            item = HItem.of(vars_, fixed)
        except MllpError as exc:
            raise ParseError(str(exc), ipath) from exc
        if not set(item.interaction) <= set(margin.vars):
            raise ParseError(
                f"replacement {item.describe()} reaches outside the margin", ipath
            )
        items.append(item)
    try:
        return ReplacementPlan(
            i_dup=tuple(i_dup),
            h_items=tuple(items),
            r_sets=tuple(s for s in v_sets if s not in set(i_dup)),
        )
    except MllpError as exc:
        raise ParseError(str(exc), path) from exc


def _owner_index(model: ModelSpec, interaction: VarSet) -> int | None:
    for k, block in enumerate(model.margins):
        if set(interaction) <= set(block.margin.vars):
            return k
    return None


def _validate_free_params(model: ModelSpec) -> None:
    for term, _ in model.free_params:
        k = _owner_index(model, term.interaction)
        if k is None:
            raise ParseError(
                f"free parameter {term.label()} mentions variables outside every margin",
                "free_params",
            )
        block = model.margins[k]
        try:
            TermSelection(block.margin, (term,)).validate_levels(model.spec)
        except MllpError as exc:
            raise ParseError(str(exc), "free_params") from exc
        if term.interaction in set(block.constrained_sets):
            raise ParseError(
                f"free parameter {term.label()} is constrained to zero by a statement "
                f"on margin {list(block.margin.vars)}",
                "free_params",
            )
        if block.plan is not None:
            h_terms = set()
            for item in block.plan.h_items:
                sel = TermSelection.fixed_block(
                    block.margin, model.spec, item.free, item.fixed_dict()
                )
                h_terms |= set(sel.terms)
            if term in h_terms:
                raise ParseError(
                    f"free parameter {term.label()} is a replacement term, whose value "
                    "is solved for",
                    "free_params",
                )


@dataclass(frozen=True)
class MarginResult:
    """Outcome of processing one margin."""

    margin: Margin
    p: ProbVector
    method: str  # "direct" or "replacement"
    context: ContextSpec | None = None
    verdict: SmoothnessVerdict | None = None
    plan: ReplacementPlan | None = None
    plan_source: str = "none"
    iterations: int = 0
    final_step_norm: float = 0.0


@dataclass(frozen=True)
class PipelineResult:
    """Per-margin reconstructions; the last margin carries the joint."""

    margins: tuple[MarginResult, ...]

    @property
    def joint(self) -> ProbVector:
        return self.margins[-1].p


def _selection_values(
    sel: TermSelection,
    constrained: set[VarSet],
    free: Mapping[TermId, float],
    used: set[TermId],
) -> np.ndarray:
    values = np.zeros(len(sel))
    for idx, term in enumerate(sel):
        if term.interaction in constrained:
            continue
        if term in free:
            values[idx] = free[term]
            used.add(term)
    return values


def _pinned_mean_values(
    sets: Sequence[VarSet],
    k: int,
    model: ModelSpec,
    margin_ps: Sequence[ProbVector],
) -> np.ndarray:
    """Mean targets for earlier-owned sets, from the latest covering margin."""
    chunks = []
    for s in sets:
        for j in reversed(range(k)):
            if set(s) <= set(model.margins[j].margin.vars):
                sel = TermSelection.block(model.margins[j].margin, model.spec, s)
                chunks.append(mu_of(margin_ps[j], sel).values)
                break
        else:
            raise ModelError(f"no earlier margin owns {list(s)}")
    return np.concatenate(chunks) if chunks else np.zeros(0)


def run_pipeline(
    model: ModelSpec,
    trials: int = 50,
    seed: int = 0,
    tol: float | None = None,
) -> PipelineResult:
    """Reconstruct every margin in order and return the joint distribution.

    Margins without re-constrained sets are solved directly as mixed
    parameterizations.  Margins with a replacement plan are classified
    first: a non-identifiable replacement aborts with
    :class:`NonIdentifiableModelError`, since any reported joint would
    be an arbitrary pick from a continuum.  Free parameters must all be
    consumed; leftovers indicate a mistaken term key.
    """
    free = model.free_param_map()
    used: set[TermId] = set()
    margin_ps: list[ProbVector] = []
    results: list[MarginResult] = []

    for k, block in enumerate(model.margins):
        margin = block.margin
        constrained = set(block.constrained_sets)
        if block.plan is None:
            mean_sel = TermSelection.blocks(margin, model.spec, block.v_sets)
            mean_vals = _pinned_mean_values(block.v_sets, k, model, margin_ps)
            full = TermSelection.full(margin, model.spec)
            taken = set(mean_sel.terms)
            canon_sel = TermSelection(margin, tuple(t for t in full if t not in taken))
            canon_vals = _selection_values(canon_sel, constrained, free, used)
            kwargs = {} if tol is None else {"tol": tol}
            p = mixed_solve(
                MixedSpec(
                    model.spec,
                    ParamVector(canon_sel, canon_vals, "canonical"),
                    ParamVector(mean_sel, mean_vals, "mean"),
                ),
                **kwargs,
            )
            results.append(MarginResult(margin=margin, p=p, method="direct"))
        else:
            plan = block.plan
            r_sel, i_sel, h_sel, l_sel = plan_selections(model.spec, margin, plan)
            verdict = classify_plan(model.spec, margin, plan, trials=trials, seed=seed)
            context = context_restriction(
                ci_to_interactions(block.driving), plan, block.driving
            )
            if verdict.classification == "NonIdentifiable":
                raise NonIdentifiableModelError(margin, verdict)
            mu_r = _pinned_mean_values(plan.r_sets, k, model, margin_ps)
            mu_i = _pinned_mean_values(plan.i_dup, k, model, margin_ps)
            eta_l = _selection_values(l_sel, constrained, free, used)
            inputs = LMInputs(
                spec=model.spec,
                h_sel=h_sel,
                mu_r=ParamVector(r_sel, mu_r, "mean"),
                mu_i=ParamVector(i_sel, mu_i, "mean"),
                eta_i=ParamVector(i_sel, np.zeros(len(i_sel)), "canonical"),
                eta_l=ParamVector(l_sel, eta_l, "canonical"),
                **({} if tol is None else {"tol": tol}),
            )
            lm_result: LMResult = lm_reconstruct(inputs)
            results.append(
                MarginResult(
                    margin=margin,
                    p=lm_result.p,
                    method="replacement",
                    context=context,
                    verdict=verdict,
                    plan=plan,
                    plan_source=block.plan_source,
                    iterations=lm_result.iterations,
                    final_step_norm=lm_result.final_step_norm,
                )
            )
        margin_ps.append(results[-1].p)

    unused = [t.label() for t, _ in model.free_params if t not in used]
    if unused:
        raise ModelError(
            "free parameters that no margin consumed: " + ", ".join(sorted(unused))
        )
    return PipelineResult(margins=tuple(results))


@dataclass(frozen=True)
class MarginCheck:
    """Classification summary for one margin."""

    margin: Margin
    has_duplication: bool
    plan: ReplacementPlan | None
    plan_source: str
    verdict: SmoothnessVerdict | None
    context: ContextSpec | None


@dataclass(frozen=True)
class CheckReport:
    margins: tuple[MarginCheck, ...]

    @property
    def classification(self) -> str:
        kinds = [m.verdict.classification for m in self.margins if m.verdict is not None]
        if "NonIdentifiable" in kinds:
            return "NonIdentifiable"
        if "Inconclusive" in kinds:
            return "Inconclusive"
        return "Smooth"


def check_model(model: ModelSpec, trials: int = 50, seed: int = 0) -> CheckReport:
    """Classify every margin's replacement without reconstructing anything."""
    checks = []
    for block in model.margins:
        if block.plan is None:
            checks.append(
                MarginCheck(
                    margin=block.margin,
                    has_duplication=False,
                    plan=None,
                    plan_source="none",
                    verdict=None,
                    context=None,
                )
            )
            continue
        verdict = classify_plan(model.spec, block.margin, block.plan, trials=trials, seed=seed)
        context = context_restriction(
            ci_to_interactions(block.driving), block.plan, block.driving
        )
        checks.append(
            MarginCheck(
                margin=block.margin,
                has_duplication=True,
                plan=block.plan,
                plan_source=block.plan_source,
                verdict=verdict,
                context=context,
            )
        )
    return CheckReport(tuple(checks))


def plan_to_dict(plan: ReplacementPlan) -> dict[str, Any]:
    return {
        "i": [list(s) for s in plan.i_dup],
        "h": [
            {"vars": list(item.free), "fixed": {str(v): x for v, x in item.fixed}}
            for item in plan.h_items
        ],
        "r": [list(s) for s in plan.r_sets],
    }


def context_to_dict(context: ContextSpec) -> dict[str, Any]:
    return {
        "constraints": [
            {"var": c.var, "relation": c.relation, "level": c.level}
            for c in context.constraints
        ],
        "text": context.describe(),
    }


def check_to_dict(report: CheckReport) -> dict[str, Any]:
    margins = []
    for m in report.margins:
        margins.append(
            {
                "vars": list(m.margin.vars),
                "duplication": m.has_duplication,
                "plan": None if m.plan is None else plan_to_dict(m.plan),
                "plan_source": m.plan_source,
                "verdict": None if m.verdict is None else m.verdict.to_dict(),
                "context": None if m.context is None else context_to_dict(m.context),
            }
        )
    return {"classification": report.classification, "margins": margins}


def _cells_to_dict(p: ProbVector) -> dict[str, Any]:
    from .tables import all_configs

    return {
        "vars": list(p.margin.vars),
        "cells": [
            {"x": [cfg.as_dict()[v] for v in p.margin.vars], "p": float(p.values[i])}
            for i, cfg in enumerate(all_configs(p.margin, p.spec))
        ],
    }


def pipeline_to_dict(result: PipelineResult) -> dict[str, Any]:
    margins = []
    for m in result.margins:
        margins.append(
            {
                "vars": list(m.margin.vars),
                "method": m.method,
                "plan": None if m.plan is None else plan_to_dict(m.plan),
                "plan_source": m.plan_source,
                "context": None if m.context is None else context_to_dict(m.context),
                "classification": None if m.verdict is None else m.verdict.classification,
                "iterations": m.iterations,
                "final_step_norm": m.final_step_norm,
                "p": [float(v) for v in m.p.values],
            }
        )
    return {"margins": margins, "joint": _cells_to_dict(result.joint)}


def matrix_table(
    levels: Sequence[int],
    margin_vars: Sequence[int],
    kind: str,
    terms: Sequence[str] | None = None,
) -> tuple[list[str], list[list[float]], bool]:
    """Header labels and rows for one design matrix, ready for CSV or JSON.

    Returns ``(header, rows, terms_on_columns)``.  For ``G`` the terms
    run along the columns (one row per cell); for ``C``, ``S`` and
    ``SBAR`` the terms run along the rows, with the cell coordinates in
    the header.
    """
    from .design import build_C, build_G, build_S
    from .tables import all_configs

    spec = VariableSpec(tuple(levels))
    margin = Margin.of(margin_vars)
    margin.validate_within(spec)
    if terms:
        ids = tuple(parse_term_key(t) for t in terms)
        selection = TermSelection(margin, ids)
        selection.validate_levels(spec)
    else:
        selection = TermSelection.full(margin, spec)

    kind_up = kind.upper()
    cells = [
        "(" + ",".join(str(x) for x in cfg.as_dict().values()) + ")"
        for cfg in all_configs(margin, spec)
    ]
    if kind_up == "G":
        dm = build_G(selection, spec)
        header = ["cell"] + list(selection.term_labels())
        rows = [
            [cells[i]] + [float(v) for v in dm.values[i]] for i in range(dm.values.shape[0])
        ]
        return header, rows, True
    if kind_up == "C":
        dm = build_C(selection, spec)
    elif kind_up == "S":
        dm = build_S(selection, spec, averaged=False)
    elif kind_up == "SBAR":
        dm = build_S(selection, spec, averaged=True)
    else:
        raise ModelError(f"unknown matrix kind {kind!r}; use C, G, S or SBAR")
    header = ["term"] + cells
    rows = [
        [selection.term_labels()[i]] + [float(v) for v in dm.values[i]]
        for i in range(dm.values.shape[0])
    ]
    return header, rows, False
