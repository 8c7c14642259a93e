"""Canonical and mean parameters, and the mixed-parameterization solver.

For a positive distribution ``p`` over a margin ``M``:

- the canonical parameter of a term selection is ``eta = C log p``
  (reference-category interactions);
- the mean parameter is ``mu = G' p`` (marginal event probabilities);
- over a full selection the map ``eta -> p`` is the smooth bijection
  ``log p = G eta - log-normalizer``.

A mixed parameterization splits the full selection into a canonical
side ``U`` and a mean side ``V``.  The pair ``(eta_U, mu_V)`` is again
a smooth bijection onto the positive simplex, and the two sides are
variation independent, so any canonical values can be combined with
any feasible mean values.  :func:`mixed_solve` inverts that map by a
damped Newton iteration in the unknown canonical values of the mean
side, whose exact Jacobian is the Fisher information block ``F_VV``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .design import TermSelection, build_C, build_G
from .tables import MllpError, ProbVector, VariableSpec

__all__ = [
    "NonConvergenceError",
    "InfeasibleTargetsError",
    "ParamVector",
    "MixedSpec",
    "eta_of",
    "p_of_eta",
    "mu_of",
    "fisher_F",
    "mixed_solve",
]

NEWTON_TOL = 1e-10
NEWTON_MAX_ITER = 100
NEWTON_MAX_HALVINGS = 20
STALL_DECREASE = 1e-14
STALL_LIMIT = 5


class NonConvergenceError(MllpError, RuntimeError):
    """An iterative solver exhausted its budget without converging."""

    def __init__(self, message: str, iterations: int = 0, residual: float = float("nan")):
        super().__init__(message)
        self.iterations = iterations
        self.residual = residual


class InfeasibleTargetsError(NonConvergenceError):
    """Mean targets admit no positive distribution (residual stagnated)."""


@dataclass(frozen=True, eq=False)
class ParamVector:
    """Values of one parameter kind over an ordered term selection."""

    selection: TermSelection
    values: np.ndarray = field(repr=False)
    kind: str = "canonical"

    def __post_init__(self) -> None:
        if self.kind not in ("canonical", "mean"):
            raise MllpError(f"parameter kind must be 'canonical' or 'mean', got {self.kind!r}")
        values = np.array(self.values, dtype=float).reshape(-1)
        if values.shape[0] != len(self.selection):
            raise MllpError(
                f"selection has {len(self.selection)} terms but {values.shape[0]} values were given"
            )
        if not np.all(np.isfinite(values)):
            raise MllpError("parameter values must be finite")
        if self.kind == "mean" and (np.any(values <= 0.0) or np.any(values >= 1.0)):
            raise MllpError("mean parameters of a positive distribution lie strictly in (0, 1)")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def __len__(self) -> int:
        return len(self.selection)


def eta_of(p: ProbVector, selection: TermSelection | None = None) -> ParamVector:
    """Canonical parameters ``C log p`` of ``p`` over ``selection``.

    Defaults to the full selection of the margin in canonical order.
    """
    sel = TermSelection.full(p.margin, p.spec) if selection is None else selection
    if sel.margin != p.margin:
        raise MllpError(f"selection margin {sel.margin.vars} does not match {p.margin.vars}")
    c = build_C(sel, p.spec).values
    return ParamVector(sel, c.astype(float) @ np.log(p.values), kind="canonical")


def _is_full_selection(selection: TermSelection, spec: VariableSpec) -> bool:
    full = TermSelection.full(selection.margin, spec)
    return len(selection) == len(full) and set(selection.terms) == set(full.terms)


def _p_from_g(g: np.ndarray, eta: np.ndarray) -> np.ndarray:
    """Positive cell probabilities from ``log p proportional to G eta``."""
    x = g @ eta
    x -= x.max()  # overflow guard; shifts cancel in the normalizer
    p = np.exp(x)
    return p / p.sum()


def p_of_eta(eta: ParamVector, spec: VariableSpec) -> ProbVector:
    """The unique positive distribution with the given full canonical vector."""
    if eta.kind != "canonical":
        raise MllpError("p_of_eta needs canonical parameters")
    if not _is_full_selection(eta.selection, spec):
        raise MllpError("p_of_eta needs a selection covering every term of the margin exactly once")
    g = build_G(eta.selection, spec).values.astype(float)
    return ProbVector(spec, eta.selection.margin, _p_from_g(g, eta.values))


def mu_of(p: ProbVector, selection: TermSelection) -> ParamVector:
    """Mean parameters ``G' p``: the probabilities of the terms' events."""
    if selection.margin != p.margin:
        raise MllpError(f"selection margin {selection.margin.vars} does not match {p.margin.vars}")
    g = build_G(selection, p.spec).values
    return ParamVector(selection, g.T.astype(float) @ p.values, kind="mean")


def fisher_F(p: ProbVector, rows: TermSelection, cols: TermSelection) -> np.ndarray:
    """Fisher information block ``G_rows' (diag(p) - p p') G_cols``."""
    if rows.margin != p.margin or cols.margin != p.margin:
        raise MllpError("row and column selections must share the distribution's margin")
    gr = build_G(rows, p.spec).values.astype(float)
    gc = build_G(cols, p.spec).values.astype(float)
    mr = gr.T @ p.values
    mc = gc.T @ p.values
    return (gr * p.values[:, None]).T @ gc - np.outer(mr, mc)


@dataclass(frozen=True, eq=False)
class MixedSpec:
    """A mixed parameterization problem: canonical targets on one side, mean targets on the other.

    The two selections must partition the full selection of the margin.
    An empty side is allowed (degenerating to a pure canonical or pure
    mean problem).
    """

    spec: VariableSpec
    canonical: ParamVector
    mean: ParamVector

    def __post_init__(self) -> None:
        if self.canonical.kind != "canonical" or self.mean.kind != "mean":
            raise MllpError("MixedSpec sides must be (canonical, mean) in that order")
        cm, mm = self.canonical.selection.margin, self.mean.selection.margin
        if cm != mm:
            raise MllpError(f"sides live on different margins: {cm.vars} vs {mm.vars}")
        union = self.canonical.selection.concat(self.mean.selection)  # rejects duplicates
        if not _is_full_selection(union, self.spec):
            raise MllpError("the two sides must partition the full selection of the margin")

    @property
    def margin(self):
        return self.canonical.selection.margin


def mixed_solve(
    mixed: MixedSpec,
    tol: float = NEWTON_TOL,
    max_iter: int = NEWTON_MAX_ITER,
) -> ProbVector:
    """The unique positive distribution matching a mixed parameter vector.

    Newton iteration in the unknown canonical values ``theta`` of the
    mean side: the residual is ``mu_target - mu(theta)`` and its exact
    Jacobian is the Fisher block ``F_VV`` at the current distribution.
    Steps are halved (up to 20 times) until the max-norm residual does
    not increase.  Residual decrease below 1e-14 for 5 consecutive
    iterations is reported as infeasible mean targets; exceeding
    ``max_iter`` raises NonConvergenceError.
    """
    spec = mixed.spec
    margin = mixed.margin
    sel_all = mixed.canonical.selection.concat(mixed.mean.selection)
    g = build_G(sel_all, spec).values.astype(float)
    n_c = len(mixed.canonical)
    g_v = g[:, n_c:]
    eta_u = mixed.canonical.values
    target = mixed.mean.values

    theta = np.zeros(len(mixed.mean))
    if theta.size == 0:
        return ProbVector(spec, margin, _p_from_g(g, eta_u))

    def residual(th: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        p = _p_from_g(g, np.concatenate([eta_u, th]))
        return p, target - g_v.T @ p

    p, r = residual(theta)
    rnorm = float(np.abs(r).max())
    stalled = 0
    for iteration in range(1, max_iter + 1):
        if rnorm < tol:
            return ProbVector(spec, margin, p)
        f_vv = (g_v * p[:, None]).T @ g_v - np.outer(g_v.T @ p, g_v.T @ p)
        try:
            delta = np.linalg.solve(f_vv, r)
        except np.linalg.LinAlgError:
            delta = np.linalg.lstsq(f_vv, r, rcond=None)[0]

        best = None
        for k in range(NEWTON_MAX_HALVINGS + 1):
            trial = theta + delta * (0.5**k)
            p_t, r_t = residual(trial)
            rn_t = float(np.abs(r_t).max())
            if best is None or rn_t < best[0]:
                best = (rn_t, trial, p_t, r_t)
            if rn_t < rnorm:
                break
        rn_new, theta, p, r = best
        stalled = stalled + 1 if rnorm - rn_new < STALL_DECREASE else 0
        rnorm = rn_new
        if stalled >= STALL_LIMIT:
            raise InfeasibleTargetsError(
                f"mean targets appear infeasible: residual stuck at {rnorm:.3e}",
                iterations=iteration,
                residual=rnorm,
            )
    if rnorm < tol:
        return ProbVector(spec, margin, p)
    raise NonConvergenceError(
        f"mixed solve did not reach tolerance {tol:g} in {max_iter} iterations "
        f"(residual {rnorm:.3e})",
        iterations=max_iter,
        residual=rnorm,
    )
