"""Closed-form and fixed-point estimators that need no MCMC.

The chain here is: scale-up degrees from the known subpopulation totals,
per-respondent mixing rows from either the one-shot ratio estimator or a
Poisson EM fixed point, then latent profile columns by nonnegative least
squares against the implied expected counts.

Respondents reporting zero ties in every known column have no defined
mixing row; those rows come back as NaN and are dropped (and counted)
by the regression stage rather than imputed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .nnls import NnlsIterationError, NnlsResult, nnls_solve
from .types import (ArdDataset, PopulationMargins, ProfileMatrix,
                    ValidationError, check_alignment)


def _known_columns(profile: ProfileMatrix, columns=None) -> np.ndarray:
    cols = profile.known_columns if columns is None else np.asarray(columns, dtype=int)
    if cols.size == 0:
        raise ValidationError("no known subpopulation columns to work with")
    return cols


#------------------------------------------------------------------------------
# Degrees
#------------------------------------------------------------------------------


def scale_up_degree(dataset: ArdDataset, margins: PopulationMargins,
                    columns=None) -> np.ndarray:
    """Network scale-up degrees: total ties over total population coverage.

    d_i = (sum_k y_ik) / (sum_k N_k / N) over the chosen subpopulation
    columns (every column by default).  All-zero response rows give 0.
    """
    cols = (np.arange(dataset.n_subpops) if columns is None
            else np.asarray(columns, dtype=int))
    coverage = margins.subpop_sizes[cols].sum()
    if coverage <= 0:
        raise ValidationError("subpopulation coverage must be positive")
    totals = dataset.counts[:, cols].sum(axis=1)
    return totals * (margins.total_population / coverage)


def group_scale_up_degree(complete_counts: np.ndarray,
                          margins: PopulationMargins,
                          columns) -> np.ndarray:
    """Within-alter-group degrees from complete (per-alter-group) counts.

    d_ia = (sum_k y_iak) / (sum_k N_ak / N_a); the cluster-sample version
    of the scale-up estimator.  ``complete_counts`` is (n, A, K); only
    simulated data can supply it, surveys observe the sum over a.
    """
    y = np.asarray(complete_counts, dtype=np.float64)
    cols = np.asarray(columns, dtype=int)
    if margins.cross_counts is None:
        raise ValidationError("margins carry no cross counts")
    share = margins.cross_counts[:, cols].sum(axis=1) / margins.alter_group_sizes
    if np.any(share <= 0):
        raise ValidationError("every alter group needs nonzero coverage")
    return y[:, :, cols].sum(axis=2) / share[None, :]


#------------------------------------------------------------------------------
# Scaled-down condition
#------------------------------------------------------------------------------


@dataclass(frozen=True)
class ScaledDownReport:
    """Whether sum_k N_ak / N_a is the same for every alter group a."""

    holds: bool
    per_group_share: np.ndarray
    population_share: float
    max_deviation: float
    tolerance: float


def check_scaled_down(margins: PopulationMargins, columns=None,
                      tol=1e-6) -> ScaledDownReport:
    """Test sum_k N_ak / N_a == sum_k N_k / N across alter groups.

    Only columns with cross counts participate; ``columns`` restricts the
    set further.  When the condition holds, the combined subpopulation
    mass covers every alter group proportionally, which is what makes the
    scale-up degree unbiased under nonrandom mixing.  ``tol`` defaults to
    exact-data tightness; pass a looser slack for real census tables.
    """
    if margins.cross_counts is None:
        raise ValidationError("margins carry no cross counts")
    if columns is None:
        columns = [k for k in range(margins.n_subpops) if margins.has_cross_counts(k)]
    cols = np.asarray(columns, dtype=int)
    if cols.size == 0:
        raise ValidationError("no columns with cross counts")
    for k in cols:
        if not margins.has_cross_counts(int(k)):
            raise ValidationError(
                f"column {margins.subpop_names[int(k)]!r} has no cross counts")
    share = (margins.cross_counts[:, cols].sum(axis=1)
             / margins.alter_group_sizes)
    pop_share = margins.subpop_sizes[cols].sum() / margins.total_population
    dev = float(np.max(np.abs(share - pop_share)))
    return ScaledDownReport(holds=dev <= tol, per_group_share=share,
                            population_share=pop_share, max_deviation=dev,
                            tolerance=tol)


#------------------------------------------------------------------------------
# Mixing rows
#------------------------------------------------------------------------------


def simple_ratio_mixing(dataset: ArdDataset, profile: ProfileMatrix,
                        margins: PopulationMargins, columns=None) -> np.ndarray:
    """One-shot mixing estimate per respondent.

    m_ia = sum_k y_ik (N_ak / N_k) / sum_k y_ik over the known columns:
    each reported count is split across alter groups by that
    subpopulation's demographic spread N_ak / N_k.  Zero-total rows are
    undefined and come back as NaN, never imputed.
    """
    check_alignment(dataset, profile)
    cols = _known_columns(profile, columns)
    if margins.cross_counts is None:
        raise ValidationError("margins carry no cross counts")
    spread = margins.cross_counts[:, cols] / margins.subpop_sizes[cols]  # (A, K')
    y = dataset.counts[:, cols].astype(np.float64)
    totals = y.sum(axis=1)
    out = np.full((dataset.n_respondents, margins.n_alter_groups), np.nan)
    ok = totals > 0
    out[ok] = (y[ok] @ spread.T) / totals[ok, None]
    return out


@dataclass(frozen=True)
class EmMixingResult:
    """EM fixed-point output for per-respondent mixing rows.

    ``objective`` traces sum over valid respondents of
    sum_k y_ik log(sum_a m_ia N_ak / N_a), the part of the complete-data
    Poisson likelihood that moves when mixing rows move on the simplex.
    """

    rows: np.ndarray
    objective: np.ndarray
    n_iter: int
    converged: bool
    n_skipped: int


def em_objective(rows, y, spread) -> float:
    """Observed-data profile objective sum_ik y_ik log(sum_a m_ia s_ak)."""
    rows = np.asarray(rows, dtype=np.float64)
    valid = ~np.isnan(rows).any(axis=1)
    mix = rows[valid] @ spread
    yv = y[valid]
    ok = yv > 0
    if np.any(mix[ok] <= 0):
        return -np.inf
    out = np.zeros_like(mix)
    np.log(mix, out=out, where=ok)
    return float(np.sum(yv * out))


def em_mixing(dataset: ArdDataset, profile: ProfileMatrix,
              margins: PopulationMargins, columns=None, init=None,
              max_iter=500, tol=1e-10) -> EmMixingResult:
    """Per-respondent mixing rows by EM on the Poisson tie-splitting model.

    Treats each observed count as a sum of unobserved per-alter-group
    pieces y_iak with Poisson mean d_i m_ia N_ak / N_a.  The E-step splits
    y_ik across alter groups in proportion to m_ia N_ak / N_a; the M-step
    renormalizes each respondent's expected pieces:

        m_ia <- sum_k yhat_iak / sum_k y_ik.

    Starts from population shares N_a / N unless ``init`` is given; stops
    when the largest absolute change in any mixing entry drops below
    ``tol``.  Zero-total respondents have no defined update and are
    returned as NaN rows (counted in ``n_skipped``).
    """
    check_alignment(dataset, profile)
    cols = _known_columns(profile, columns)
    if margins.cross_counts is None:
        raise ValidationError("margins carry no cross counts")
    spread = (margins.cross_counts[:, cols]
              / margins.alter_group_sizes[:, None])    # (A, K'), N_ak / N_a
    y = dataset.counts[:, cols].astype(np.float64)     # (n, K')
    totals = y.sum(axis=1)
    valid = totals > 0
    if init is None:
        rows = np.tile(margins.alter_group_sizes / margins.total_population,
                       (dataset.n_respondents, 1))
    else:
        rows = np.array(init, dtype=np.float64)
        if rows.shape != (dataset.n_respondents, margins.n_alter_groups):
            raise ValidationError("init rows have the wrong shape")
    rows = rows[valid]
    yv = y[valid]
    tv = totals[valid]

    trace = []
    converged = False
    it = 0

    def _objective(r):
        mix = r @ spread
        ok = yv > 0
        out = np.zeros_like(mix)
        np.log(mix, out=out, where=ok)
        return float(np.sum(yv * out)) if np.all(mix[ok] > 0) else -np.inf

    trace.append(_objective(rows))
    for it in range(1, max_iter + 1):
        mix = rows @ spread                            # (n', K')
        ratio = np.divide(yv, mix, out=np.zeros_like(yv), where=yv > 0)
        new = rows * (ratio @ spread.T) / tv[:, None]
        delta = float(np.max(np.abs(new - rows))) if new.size else 0.0
        rows = new
        trace.append(_objective(rows))
        if delta < tol:
            converged = True
            break

    out = np.full((dataset.n_respondents, margins.n_alter_groups), np.nan)
    out[valid] = rows
    return EmMixingResult(rows=out, objective=np.array(trace), n_iter=it,
                          converged=converged,
                          n_skipped=int(np.sum(~valid)))


def group_mixing(rows: np.ndarray, ego_group: np.ndarray, n_ego_groups: int,
                 weights=None) -> np.ndarray:
    """Average per-respondent rows within ego groups.

    NaN rows are skipped; groups with no usable respondents come back NaN.
    ``weights`` (e.g. estimated degrees) switches to a weighted mean.
    """
    rows = np.asarray(rows, dtype=np.float64)
    ego_group = np.asarray(ego_group)
    usable = ~np.isnan(rows).any(axis=1)
    if weights is None:
        w = np.ones(rows.shape[0])
    else:
        w = np.asarray(weights, dtype=np.float64)
    out = np.full((n_ego_groups, rows.shape[1]), np.nan)
    for e in range(n_ego_groups):
        sel = usable & (ego_group == e) & (w > 0)
        if np.any(sel):
            out[e] = np.average(rows[sel], axis=0, weights=w[sel])
    return out


#------------------------------------------------------------------------------
# Latent profile columns
#------------------------------------------------------------------------------


@dataclass(frozen=True)
class LatentProfileResult:
    """Filled profile matrix plus per-column solver reports.

    ``condition_number`` is that of the shared design d_i m_ia; NNLS is
    still well-posed when it is large, but estimates wobble (the design
    columns are collinear because mixing rows sum to one).
    """

    profile: ProfileMatrix
    columns: np.ndarray
    solutions: tuple[NnlsResult, ...]
    n_used: int
    n_dropped: int
    condition_number: float
    warnings: tuple[str, ...]


def _design(degrees, mixing_rows):
    degrees = np.asarray(degrees, dtype=np.float64)
    rows = np.asarray(mixing_rows, dtype=np.float64)
    usable = (~np.isnan(rows).any(axis=1)) & np.isfinite(degrees) & (degrees > 0)
    return degrees[usable, None] * rows[usable], usable


def estimate_latent_profiles(dataset: ArdDataset, profile: ProfileMatrix,
                             degrees: np.ndarray, mixing_rows: np.ndarray,
                             columns=None) -> LatentProfileResult:
    """Fill latent profile columns by nonnegative least squares.

    With degrees and per-respondent mixing rows fixed, the expected count
    in a latent column k is linear in its profile: y_ik = sum_a X_ia
    beta_ak with X_ia = d_i m_ia.  Each latent column solves an
    independent NNLS on the shared design.  Respondents with NaN mixing
    or nonpositive degree are dropped.
    """
    check_alignment(dataset, profile)
    cols = (profile.latent_columns if columns is None
            else np.asarray(columns, dtype=int))
    X, usable = _design(degrees, mixing_rows)
    warnings = []
    if X.shape[0] < profile.n_alter_groups:
        warnings.append(
            f"only {X.shape[0]} usable respondents for "
            f"{profile.n_alter_groups} alter groups; system underdetermined")
    sv = np.linalg.svd(X, compute_uv=False) if X.size else np.array([0.0])
    rank = int(np.sum(sv > 1e-10 * sv.max())) if sv.max() > 0 else 0
    cond = float(sv.max() / sv.min()) if sv.min() > 0 else np.inf
    if rank < profile.n_alter_groups:
        warnings.append(
            f"design rank {rank} < {profile.n_alter_groups}; latent profiles "
            "are not separately identified")

    values = np.array(profile.values)
    sols = []
    for k in cols:
        try:
            res = nnls_solve(X, dataset.counts[usable, k].astype(np.float64))
        except NnlsIterationError as err:
            res = err.result
            warnings.append(
                f"column {profile.subpop_names[k]!r}: regression hit its "
                f"iteration cap, keeping best iterate (kkt gap {res.kkt_gap:.2g})")
        values[:, k] = res.x
        sols.append(res)
    return LatentProfileResult(profile=profile.with_values(values),
                               columns=np.asarray(cols, dtype=int),
                               solutions=tuple(sols),
                               n_used=int(X.shape[0]),
                               n_dropped=int(np.sum(~usable)),
                               condition_number=cond,
                               warnings=tuple(warnings))


def bootstrap_latent_se(dataset: ArdDataset, profile: ProfileMatrix,
                        degrees: np.ndarray, mixing_rows: np.ndarray,
                        columns=None, n_boot=200, rng=None) -> np.ndarray:
    """Bootstrap standard errors for the latent profile estimates.

    Resamples respondents with replacement and reruns the per-column NNLS;
    returns an (A, H) matrix of standard deviations across resamples.
    The point estimates are stable but the collinear design makes their
    spread worth reporting.
    """
    if rng is None:
        rng = np.random.default_rng(0)
    cols = (profile.latent_columns if columns is None
            else np.asarray(columns, dtype=int))
    X, usable = _design(degrees, mixing_rows)
    y = dataset.counts[usable][:, cols].astype(np.float64)
    n = X.shape[0]
    if n == 0:
        raise ValidationError("no usable respondents to resample")
    draws = np.empty((n_boot, profile.n_alter_groups, cols.size))
    for b in range(n_boot):
        idx = rng.integers(0, n, size=n)
        Xb = X[idx]
        for j in range(cols.size):
            # Duplicated rows can degrade a resampled design enough to
            # cycle; the capped iterate is still the best point found.
            try:
                draws[b, :, j] = nnls_solve(Xb, y[idx, j]).x
            except NnlsIterationError as err:
                draws[b, :, j] = err.result.x
    return draws.std(axis=0, ddof=1)
