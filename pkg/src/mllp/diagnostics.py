"""Smoothness classification and structural self-checks.

The central question about a replacement plan is whether the mixed
parameter vector it induces stays a smooth, one-to-one reparameterization.
The decisive object is the cross matrix ``Q`` of :func:`mllp.lm.compute_Q`
between the redefined terms and their replacements:

- ``Q`` of full rank makes the two-step update a local contraction and
  the map smooth near the evaluation point;
- ``Q = 0`` freezes the update (its linearization is the identity): the
  parameter vector carries no information about the replaced terms and
  cannot identify a unique joint;
- a singular but non-zero ``Q`` supports no conclusion either way.

``classify_plan`` samples both strata, distributions of complete
independence (where full rank is analytically equivalent to the three
replacement-validity conditions) and unrestricted random distributions,
and reports a verdict with the evidence attached.

``verify_projector_factorization`` and ``verify_conversion_structure``
are numerical self-checks of the two matrix identities everything else
leans on: the per-variable factorization of weighted projections of
indicator blocks under independence, and the block structure of the
maps between reference-category and centered interactions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import TYPE_CHECKING, Any, Mapping, Sequence

import numpy as np

from .design import TermSelection, build_G, build_S, weighted_projector
from .lm import (
    NULL_BLOCK_TOL,
    RANK_RATIO_TOL,
    DegenerateReplacementError,
    compute_Q,
    lm_jacobian,
)
from .params import fisher_F
from .replacement import (
    ReplacementPlan,
    ValidityReport,
    check_valid_replacement,
    plan_selections,
)
from .tables import (
    CellConfig,
    Margin,
    MllpError,
    VariableSpec,
    marginalize,
    random_distribution,
)

if TYPE_CHECKING:  # pragma: no cover
    from .model import ModelSpec

__all__ = [
    "DiagnosticsError",
    "RankStats",
    "SmoothnessVerdict",
    "classify_plan",
    "classify_smoothness",
    "verify_projector_factorization",
    "verify_conversion_structure",
]

DEFAULT_TRIALS = 50


class DiagnosticsError(MllpError, RuntimeError):
    """A structural identity failed its numerical self-check."""


@dataclass(frozen=True)
class RankStats:
    """Per-trial rank evidence for one sampling stratum."""

    ratios: tuple[float, ...]  # smallest over largest singular value of Q
    null_ratios: tuple[float, ...]  # Frobenius norm of Q over that of F_II

    def to_dict(self) -> dict[str, Any]:
        return {"ratios": list(self.ratios), "null_ratios": list(self.null_ratios)}


@dataclass(frozen=True)
class SmoothnessVerdict:
    """Classification of a replacement plan with its numerical evidence.

    ``classification`` is ``Smooth``, ``NonIdentifiable`` or
    ``Inconclusive``; ``certificate`` says what backs it.  The rank
    statistics cover the independence stratum and the unrestricted
    stratum separately; ``spectral_radii`` lists the update map's
    spectral radius at every sampled point (NaN where the update map
    was undefined).
    """

    classification: str
    certificate: str
    definition3: ValidityReport | None
    independence: RankStats
    general: RankStats
    spectral_radii: tuple[float, ...]
    trials: int
    seed: int

    def to_dict(self) -> dict[str, Any]:
        d3: dict[str, Any] | None = None
        if self.definition3 is not None:
            rep = self.definition3
            d3 = {
                "passed": rep.passed,
                "pairing": {"passed": rep.pairing.passed, "witnesses": list(rep.pairing.witnesses)},
                "sums": {"passed": rep.sums.passed, "witnesses": list(rep.sums.witnesses)},
                "precedence": {
                    "passed": rep.precedence.passed,
                    "witnesses": list(rep.precedence.witnesses),
                },
                "order": None if rep.order is None else [list(s) for s in rep.order],
            }
        return {
            "classification": self.classification,
            "certificate": self.certificate,
            "validity": d3,
            "independence": self.independence.to_dict(),
            "general": self.general.to_dict(),
            "spectral_radii": list(self.spectral_radii),
            "trials": self.trials,
            "seed": self.seed,
        }


def _stratum_draws(
    spec: VariableSpec,
    margin: Margin,
    mode: str,
    stratum: int,
    trials: int,
    seed: int,
):
    for k in range(trials):
        yield random_distribution(
            spec, margin, mode, seed=np.random.SeedSequence((seed, stratum, k))
        )


def classify_plan(
    spec: VariableSpec,
    margin: Margin,
    plan: ReplacementPlan,
    trials: int = DEFAULT_TRIALS,
    seed: int = 0,
) -> SmoothnessVerdict:
    """Classify one replacement plan on one margin.

    ``NonIdentifiable`` requires the cross matrix to be numerically
    null (relative to the redefined block of the Fisher matrix) at
    every sampled independence point; ``Smooth`` requires full rank at
    every sampled point of both strata; anything else is
    ``Inconclusive``.  A Smooth verdict is analytically certified when
    the plan also passes the replacement-validity conditions, and only
    numerically supported otherwise.
    """
    r_sel, i_sel, h_sel, _ = plan_selections(spec, margin, plan)
    if len(i_sel) != len(h_sel):
        raise DiagnosticsError(
            f"redefined and replacement selections differ in size: "
            f"{len(i_sel)} vs {len(h_sel)} terms"
        )
    report = check_valid_replacement(plan)

    stats: list[RankStats] = []
    radii: list[float] = []
    for stratum, mode in ((0, "complete_independence"), (1, "general")):
        ratios: list[float] = []
        nulls: list[float] = []
        for p in _stratum_draws(spec, margin, mode, stratum, trials, seed):
            q = compute_Q(p, i_sel, h_sel, r_sel)
            sv = np.linalg.svd(q, compute_uv=False)
            ratios.append(float(sv[-1] / sv[0]) if sv.size and sv[0] > 0 else 0.0)
            f_ii = fisher_F(p, i_sel, i_sel)
            denom = max(float(np.linalg.norm(f_ii)), np.finfo(float).tiny)
            nulls.append(float(np.linalg.norm(q)) / denom)
            try:
                _, rho = lm_jacobian(p, i_sel, h_sel, r_sel)
            except DegenerateReplacementError:
                rho = math.nan
            radii.append(rho)
        stats.append(RankStats(tuple(ratios), tuple(nulls)))
    independence, general = stats

    if all(n < NULL_BLOCK_TOL for n in independence.null_ratios):
        classification = "NonIdentifiable"
        certificate = (
            "the replacement carries no information at independence; the update "
            "map is frozen at the identity there"
        )
    elif all(r > RANK_RATIO_TOL for r in independence.ratios + general.ratios):
        classification = "Smooth"
        certificate = (
            "analytically certified at independence"
            if report.passed
            else "numerically supported"
        )
    else:
        classification = "Inconclusive"
        certificate = (
            "the cross matrix is singular but not null at some sampled points; "
            "neither smoothness nor non-identifiability follows"
        )

    return SmoothnessVerdict(
        classification=classification,
        certificate=certificate,
        definition3=report,
        independence=independence,
        general=general,
        spectral_radii=tuple(radii),
        trials=trials,
        seed=seed,
    )


def classify_smoothness(
    model: "ModelSpec",
    plan: ReplacementPlan | None = None,
    trials: int = DEFAULT_TRIALS,
    seed: int = 0,
) -> SmoothnessVerdict:
    """Classify a model's replacement structure.

    With an explicit ``plan`` the final margin is classified under it;
    otherwise the model's last margin with re-constrained sets is used.
    A model with no re-constrained sets is an ordinary hierarchical
    and complete mixed parameterization, which is smooth with no
    sampling needed.
    """
    blocks = model.duplication_blocks()
    if plan is not None:
        return classify_plan(model.spec, model.margins[-1].margin, plan, trials, seed)
    if not blocks:
        empty = RankStats((), ())
        return SmoothnessVerdict(
            classification="Smooth",
            certificate="no re-constrained interaction sets; the parameterization "
            "is hierarchical and complete",
            definition3=None,
            independence=empty,
            general=empty,
            spectral_radii=(),
            trials=0,
            seed=seed,
        )
    block = blocks[-1]
    return classify_plan(model.spec, block.margin, block.plan, trials, seed)


def _factor_case(var: int, subset: set, free: set, fixed: Mapping[int, int]) -> str:
    where = "in" if var in subset else "out of"
    if var in free:
        role = "free"
    elif var in fixed:
        role = f"pinned at {fixed[var]}"
    else:
        role = "inactive"
    return f"X{var}: {where} the projection subset, {role}"


def verify_projector_factorization(
    spec: VariableSpec,
    margin: Margin,
    subset: Sequence[int],
    free: Sequence[int],
    fixed: Mapping[int, int],
    trials: int = 20,
    seed: int = 0,
) -> bool:
    """Check the projected indicator identities under complete independence.

    For every sampled independence distribution, the weighted projection
    of the pinned indicator block onto functions of ``subset`` must lie
    in the indicator span of ``subset & (free | fixed)`` (residual below
    1e-9); and when the free variables all lie in the subset while the
    pinned ones all lie outside it, the projection must equal the free
    variables' own indicator block scaled by the probability of the
    pinned event (within 1e-10).  Violations raise
    :class:`DiagnosticsError` naming the per-variable factor cases.
    """
    a = set(int(v) for v in subset)
    t = set(int(v) for v in free)
    h = {int(k): int(v) for k, v in fixed.items()}
    if t & set(h):
        raise DiagnosticsError("free and pinned variables overlap")
    cases = "; ".join(_factor_case(v, a, t, h) for v in margin.vars)

    sel_th = TermSelection.fixed_block(margin, spec, sorted(t), h)
    g_th = build_G(sel_th, spec).values.astype(float)
    overlap = sorted(a & (t | set(h)))
    if overlap:
        g_r = build_G(TermSelection.block(margin, spec, overlap), spec).values.astype(float)
    else:
        g_r = np.ones((margin.cell_count(spec), 1))

    equality_regime = t <= a and not (a & set(h))
    g_t = (
        build_G(TermSelection.block(margin, spec, sorted(t)), spec).values.astype(float)
        if equality_regime
        else None
    )

    for k in range(trials):
        p = random_distribution(
            spec, margin, "complete_independence", seed=np.random.SeedSequence((seed, 2, k))
        )
        projected = weighted_projector(a, p) @ g_th

        coeffs, *_ = np.linalg.lstsq(g_r, projected, rcond=None)
        residual = float(np.abs(projected - g_r @ coeffs).max())
        if residual > 1e-9:
            raise DiagnosticsError(
                f"projected indicator block leaves the expected span "
                f"(residual {residual:.3e}) for factor cases: {cases}"
            )
        if equality_regime:
            if h:
                h_margin = Margin.of(h)
                prob = marginalize(p, h_margin).value_at(CellConfig.of(h))
            else:
                prob = 1.0
            gap = float(np.abs(projected - g_t * prob).max())
            if gap > 1e-10:
                raise DiagnosticsError(
                    f"projected indicator block differs from its scaled free block "
                    f"by {gap:.3e} for factor cases: {cases}"
                )
    return True


def verify_conversion_structure(spec: VariableSpec, margin: Margin) -> bool:
    """Check the block structure of the centered-interaction conversions.

    For every pair of interaction sets ``I, J`` of the margin: the
    reference-conditioned centering rows of ``I`` annihilate the
    indicator block of every ``J != I``, and the averaged centering
    rows of ``I`` annihilate the indicator block of every ``J`` not
    containing ``I`` (both within 1e-12).  Together these make the
    conversion to centered interactions blockwise lower triangular
    over the ascending classes.
    """
    from .design import all_subsets

    subsets = all_subsets(margin.vars)
    g_blocks = {
        j: build_G(TermSelection.block(margin, spec, j), spec).values.astype(float)
        for j in subsets
    }
    for i in subsets:
        sel_i = TermSelection.block(margin, spec, i)
        s_plain = build_S(sel_i, spec, averaged=False).values
        s_avg = build_S(sel_i, spec, averaged=True).values
        for j in subsets:
            if j != i:
                off = float(np.abs(s_plain @ g_blocks[j]).max())
                if off > 1e-12:
                    raise DiagnosticsError(
                        f"reference-conditioned centering of {list(i)} hits the "
                        f"indicator block of {list(j)} at {off:.3e}"
                    )
            if not set(i) <= set(j):
                off = float(np.abs(s_avg @ g_blocks[j]).max())
                if off > 1e-12:
                    raise DiagnosticsError(
                        f"averaged centering of {list(i)} hits the indicator block "
                        f"of {list(j)} at {off:.3e}"
                    )
    return True
