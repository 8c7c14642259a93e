"""Two-step fixed-point reconstruction for redefined interactions.

When a new conditional independence statement constrains interaction
sets that earlier margins already fixed as mean parameters, those sets
(the class ``I``) get their canonical values constrained to zero while
their mean values stay pinned.  Room is made by removing an equal
number of terms ``H`` from the margin's free canonical side and
treating them as unknowns.  Reconstruction alternates two mixed solves:

- M-step: mean side ``R + I`` (all pinned mean values), canonical side
  ``L_free + H`` with the current guess for ``eta_H``; read off
  ``mu_H``.
- L-step: mean side ``R + H`` (pinned ``mu_R`` plus the fresh
  ``mu_H``), canonical side ``I + L_free`` (the actual constraints);
  read off a new ``eta_H``.

A fixed point satisfies every constraint simultaneously.  The local
behaviour of the iteration is governed by the matrix ``J`` returned by
:func:`lm_jacobian`: its spectral radius is at most 1, with equality
exactly when the Schur-complement cross matrix ``Q`` of
:func:`compute_Q` is singular.  ``Q = 0`` makes ``J`` the identity:
the iteration stops immediately wherever it starts and the mixed
vector fails to pin down a unique joint distribution.

``compute_Q`` and ``lm_jacobian`` accept selections where ``H``
overlaps ``R`` (useful for diagnosing forced, invalid replacements);
the iteration itself requires the four selections to be disjoint.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .design import TermSelection, build_G, weighted_projector, weighted_projector_span
from .params import (
    MixedSpec,
    NonConvergenceError,
    ParamVector,
    _is_full_selection,
    eta_of,
    fisher_F,
    mixed_solve,
    mu_of,
)
from .tables import MllpError, ProbVector, VariableSpec

__all__ = [
    "DegenerateReplacementError",
    "LMInputs",
    "LMResult",
    "compute_Q",
    "lm_jacobian",
    "spectral_radius",
    "lm_reconstruct",
]

LM_TOL = 1e-9
LM_MAX_ITER = 500
LM_DIVERGENCE_NORM = 1e3
LM_STALL_WINDOW = 50
CROSS_CHECK_TOL = 1e-9
NULL_BLOCK_TOL = 1e-10
RANK_RATIO_TOL = 1e-8


class DegenerateReplacementError(MllpError, RuntimeError):
    """The update map is not defined: singular step matrix with a non-null correction."""


def _check_disjoint(*selections: TermSelection) -> None:
    seen: set = set()
    for sel in selections:
        terms = set(sel.terms)
        if terms & seen:
            dup = sorted(t.label() for t in terms & seen)
            raise MllpError(f"selections share terms: {dup}")
        seen |= terms


def _schur(
    p: ProbVector,
    rows: TermSelection,
    cols: TermSelection,
    given: TermSelection,
) -> np.ndarray:
    """``F_rows,cols - F_rows,given F_given,given^-1 F_given,cols``."""
    f_rc = fisher_F(p, rows, cols)
    if len(given) == 0:
        return f_rc
    f_rg = fisher_F(p, rows, given)
    f_gg = fisher_F(p, given, given)
    f_gc = fisher_F(p, given, cols)
    return f_rc - f_rg @ np.linalg.solve(f_gg, f_gc)


def compute_Q(
    p: ProbVector,
    i_sel: TermSelection,
    h_sel: TermSelection,
    r_sel: TermSelection,
    cross_check: bool = True,
) -> np.ndarray:
    """Cross matrix between the redefined terms and their replacements.

    Computed as the Schur complement ``F_IH - F_IR F_RR^-1 F_RH``.
    With ``cross_check`` on (the default), the projector identity
    ``Q = G_I' D (1 - P_Rbar)(1 - P_0) P_span G_H`` is evaluated as
    well, where ``P_span`` projects onto the joint indicator span of
    all interaction sets of ``I`` and ``R``; disagreement beyond 1e-9
    raises, guarding both code paths against each other.

    ``i_sel`` must be disjoint from ``h_sel`` and ``r_sel``; ``h_sel``
    may overlap ``r_sel``.
    """
    for sel in (i_sel, h_sel, r_sel):
        if sel.margin != p.margin:
            raise MllpError("all selections must live on the distribution's margin")
    _check_disjoint(i_sel, h_sel)
    _check_disjoint(i_sel, r_sel)
    q = _schur(p, i_sel, h_sel, r_sel)

    if cross_check:
        pi = p.values
        g_i = build_G(i_sel, p.spec).values.astype(float)
        g_h = build_G(h_sel, p.spec).values.astype(float)
        n = len(p)
        p0 = np.outer(np.ones(n), pi)
        span_sets = list(dict.fromkeys(i_sel.interaction_sets() + r_sel.interaction_sets()))
        p_span = weighted_projector_span(span_sets, p)
        centered = np.eye(n) - p0
        if len(r_sel) > 0:
            g_r = build_G(r_sel, p.spec).values.astype(float)
            f_rr = fisher_F(p, r_sel, r_sel)
            gc = centered @ g_r
            p_rbar = gc @ np.linalg.solve(f_rr, gc.T @ np.diag(pi))
        else:
            p_rbar = np.zeros((n, n))
        q_alt = g_i.T @ np.diag(pi) @ (np.eye(n) - p_rbar) @ centered @ p_span @ g_h
        scale = max(1.0, float(np.abs(q).max()))
        gap = float(np.abs(q - q_alt).max())
        if gap > CROSS_CHECK_TOL * scale:
            raise MllpError(
                f"cross matrix formulas disagree by {gap:.3e}; "
                "numerical conditioning is too poor to trust the result"
            )
    return q


def spectral_radius(m: np.ndarray) -> float:
    m = np.asarray(m, dtype=float)
    if m.size == 0:
        return 0.0
    return float(np.abs(np.linalg.eigvals(m)).max())


def lm_jacobian(
    p: ProbVector,
    i_sel: TermSelection,
    h_sel: TermSelection,
    r_sel: TermSelection,
) -> tuple[np.ndarray, float]:
    """Local linearization ``J`` of the two-step update on ``eta_H``, and its spectral radius.

    ``J = A^-1 B`` with ``A = F_HH - F_HR F_RR^-1 F_RH`` and
    ``B = F_HH - F_HV F_VV^-1 F_VH`` over ``V = R + I``.  The
    difference ``A - B`` equals ``Q' (F_II - F_IR F_RR^-1 F_RI)^-1 Q``
    and is therefore positive semidefinite, which caps the spectral
    radius at 1; the cap is attained exactly when ``Q`` is singular.

    ``J`` is computed as ``1 - X`` where ``A X = A - B``, which stays
    defined when ``A`` is singular but the correction ``A - B`` is
    numerically null (the stalled, non-identifiable case).  A singular
    ``A`` with a non-null correction raises
    :class:`DegenerateReplacementError`.
    """
    _check_disjoint(i_sel, h_sel)
    _check_disjoint(i_sel, r_sel)
    v_sel = r_sel.concat(i_sel)
    a = _schur(p, h_sel, h_sel, r_sel)
    b = _schur(p, h_sel, h_sel, v_sel)
    c = a - b

    if a.size == 0:
        return np.zeros((0, 0)), 0.0
    sv = np.linalg.svd(a, compute_uv=False)
    a_regular = sv[-1] > sv[0] * RANK_RATIO_TOL if sv[0] > 0 else False
    if a_regular:
        x = np.linalg.solve(a, c)
    else:
        scale = max(1.0, float(np.linalg.norm(a)))
        if float(np.linalg.norm(c)) > NULL_BLOCK_TOL * scale:
            raise DegenerateReplacementError(
                "replacement step matrix is singular while the correction term is not null; "
                "the update map is undefined for these selections"
            )
        x = np.linalg.lstsq(a, c, rcond=None)[0]
    j = np.eye(a.shape[0]) - x
    return j, spectral_radius(j)


@dataclass(frozen=True, eq=False)
class LMInputs:
    """Targets and controls for one two-step reconstruction.

    ``mu_r`` and ``mu_i`` carry the pinned mean values of the retained
    and redefined classes; ``eta_i`` carries the new canonical
    constraints on the redefined class; ``eta_l`` the canonical values
    of the remaining free terms.  ``h_sel`` lists the removed terms,
    which must match ``eta_i`` in length.  The four selections must be
    pairwise disjoint and jointly cover the margin's full selection.
    """

    spec: VariableSpec
    h_sel: TermSelection
    mu_r: ParamVector
    mu_i: ParamVector
    eta_i: ParamVector
    eta_l: ParamVector
    eta_h_start: np.ndarray | None = None
    tol: float = LM_TOL
    max_iter: int = LM_MAX_ITER
    divergence_norm: float = LM_DIVERGENCE_NORM
    stall_window: int = LM_STALL_WINDOW

    def __post_init__(self) -> None:
        if self.mu_r.kind != "mean" or self.mu_i.kind != "mean":
            raise MllpError("mu_r and mu_i must be mean parameters")
        if self.eta_i.kind != "canonical" or self.eta_l.kind != "canonical":
            raise MllpError("eta_i and eta_l must be canonical parameters")
        margin = self.h_sel.margin
        for pv in (self.mu_r, self.mu_i, self.eta_i, self.eta_l):
            if pv.selection.margin != margin:
                raise MllpError("all selections must share one margin")
        union = (
            self.mu_r.selection.concat(self.mu_i.selection)
            .concat(self.h_sel)
            .concat(self.eta_l.selection)
        )  # rejects overlaps between the four classes
        if not _is_full_selection(union, self.spec):
            raise MllpError("the four selections must cover the margin's full selection")
        if self.eta_i.selection.terms != self.mu_i.selection.terms:
            raise MllpError("eta_i and mu_i must cover the same terms in the same order")
        if len(self.h_sel) != len(self.eta_i.selection):
            raise MllpError(
                f"replacement needs equal term counts: {len(self.h_sel)} removed vs "
                f"{len(self.eta_i.selection)} redefined"
            )
        if self.eta_h_start is not None:
            start = np.array(self.eta_h_start, dtype=float).reshape(-1)
            if start.shape[0] != len(self.h_sel):
                raise MllpError("eta_h_start length does not match the removed terms")
            object.__setattr__(self, "eta_h_start", start)

    @property
    def margin(self):
        return self.h_sel.margin


@dataclass(frozen=True, eq=False)
class LMResult:
    """A converged reconstruction: the distribution and the solved unknowns."""

    p: ProbVector
    iterations: int
    final_step_norm: float
    eta_h: ParamVector


def lm_reconstruct(inputs: LMInputs) -> LMResult:
    """Run the two-step iteration until the removed terms stop moving.

    Convergence is declared when the max-norm change of ``eta_H``
    falls below ``inputs.tol``; the returned distribution comes from a
    final M-step at the converged value, so the pinned mean values
    hold exactly to the inner solver's tolerance.  Divergence
    (``|eta_H|`` exceeding ``divergence_norm``) and stalling (no new
    best step norm over ``stall_window`` iterations) raise
    :class:`~mllp.params.NonConvergenceError`.
    """
    m_mean_sel = inputs.mu_r.selection.concat(inputs.mu_i.selection)
    m_mean_vals = np.concatenate([inputs.mu_r.values, inputs.mu_i.values])
    l_canon_sel = inputs.eta_i.selection.concat(inputs.eta_l.selection)
    l_canon_vals = np.concatenate([inputs.eta_i.values, inputs.eta_l.values])
    m_canon_sel = inputs.eta_l.selection.concat(inputs.h_sel)
    l_mean_sel = inputs.mu_r.selection.concat(inputs.h_sel)

    eta_h = (
        np.zeros(len(inputs.h_sel))
        if inputs.eta_h_start is None
        else inputs.eta_h_start.copy()
    )

    def m_step(eta_h_val: np.ndarray) -> ProbVector:
        mixed = MixedSpec(
            inputs.spec,
            ParamVector(m_canon_sel, np.concatenate([inputs.eta_l.values, eta_h_val]), "canonical"),
            ParamVector(m_mean_sel, m_mean_vals, "mean"),
        )
        return mixed_solve(mixed)

    def l_step(mu_h_val: np.ndarray) -> ProbVector:
        mixed = MixedSpec(
            inputs.spec,
            ParamVector(l_canon_sel, l_canon_vals, "canonical"),
            ParamVector(l_mean_sel, np.concatenate([inputs.mu_r.values, mu_h_val]), "mean"),
        )
        return mixed_solve(mixed)

    step_norms: list[float] = []
    for iteration in range(1, inputs.max_iter + 1):
        try:
            p_m = m_step(eta_h)
            mu_h = mu_of(p_m, inputs.h_sel).values
            p_l = l_step(mu_h)
        except NonConvergenceError as exc:
            raise NonConvergenceError(
                f"inner mixed solve failed at iteration {iteration}: {exc}",
                iterations=iteration,
                residual=exc.residual,
            ) from exc
        eta_h_new = eta_of(p_l, inputs.h_sel).values
        step = float(np.abs(eta_h_new - eta_h).max()) if eta_h.size else 0.0
        step_norms.append(step)
        eta_h = eta_h_new

        if step < inputs.tol:
            p_final = m_step(eta_h)
            return LMResult(
                p=p_final,
                iterations=iteration,
                final_step_norm=step,
                eta_h=ParamVector(inputs.h_sel, eta_h, "canonical"),
            )
        if eta_h.size and float(np.abs(eta_h).max()) > inputs.divergence_norm:
            raise NonConvergenceError(
                f"replacement values diverged at iteration {iteration} "
                f"(max |eta_H| > {inputs.divergence_norm:g})",
                iterations=iteration,
                residual=step,
            )
        w = inputs.stall_window
        if len(step_norms) > w and min(step_norms[-w:]) >= min(step_norms[:-w]):
            raise NonConvergenceError(
                f"step norms stopped decreasing over the last {w} iterations "
                f"(best {min(step_norms[-w:]):.3e}); the iteration is oscillating",
                iterations=iteration,
                residual=step,
            )
    raise NonConvergenceError(
        f"no convergence in {inputs.max_iter} iterations (last step {step_norms[-1]:.3e})",
        iterations=inputs.max_iter,
        residual=step_norms[-1],
    )
