"""Count-model kernels.

The tie-count model: respondent i in ego group e reports

    y_ik ~ NegBinom(mean = mu_ike, variance = mu_ike * omega_k)

with mu_ike = d_i * sum_a m(e, a) h(a, k).  The negative binomial is
parameterized by its mean and a multiplicative overdispersion omega > 1;
omega -> 1 recovers the Poisson.  Writing xi = mu / (omega - 1), the mass
function is

    P(y) = Gamma(y + xi) / (Gamma(xi) y!) * (1/omega)^xi * ((omega-1)/omega)^y.

Everything here is vectorized over numpy arrays and broadcasts like ufuncs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from .types import ProfileMatrix, ValidationError

#==============================================================================
# Negative binomial, mean/overdispersion form
#==============================================================================


def negbin_logpmf(y, mu, omega):
    """Log mass of the mean/overdispersion negative binomial.

    Broadcasts over all three arguments.  Requires mu > 0 and omega > 1;
    omega close to 1 (huge xi) switches to a Stirling-difference form,
    since gammaln(y+xi) - gammaln(xi) cancels catastrophically there.
    """
    y = np.asarray(y)
    mu = np.asarray(mu, dtype=np.float64)
    omega = np.asarray(omega, dtype=np.float64)
    if np.any(mu <= 0):
        raise ValidationError("negbin mean must be positive")
    if np.any(omega <= 1):
        raise ValidationError("negbin overdispersion must exceed 1")
    xi = mu / (omega - 1.0)
    big = xi > 1e7
    safe_xi = np.where(big, 1.0, xi)
    direct = (gammaln(y + safe_xi) - gammaln(safe_xi)
              - safe_xi * np.log(omega) + y * np.log1p(-1.0 / omega))
    # Stirling difference, rearranged so no O(xi log xi) terms meet:
    # gammaln(y+xi) - gammaln(xi) = y log(xi) + (y+xi-1/2) log1p(y/xi)
    #                               - y + (1/(y+xi) - 1/xi)/12 + O(xi^-3),
    # and y log(xi) folds with the omega terms into y log(mu/omega).
    delta = omega - 1.0
    ratio = np.log1p(delta) / np.where(delta > 0, delta, 1.0)
    asym = (y * np.log(mu / omega) - mu * ratio - y
            + (y + xi - 0.5) * np.log1p(y / xi)
            + (1.0 / (y + xi) - 1.0 / xi) / 12.0)
    return np.where(big, asym, direct) - gammaln(y + 1.0)


def negbin_sample(mu, omega, rng):
    """Draw from the mean/overdispersion negative binomial.

    Gamma-Poisson mixture: rate ~ Gamma(shape = mu/(omega-1),
    scale = omega-1) has mean mu and variance mu*(omega-1), and Poisson
    mixing adds mu, giving variance mu*omega.
    """
    mu = np.asarray(mu, dtype=np.float64)
    omega = np.asarray(omega, dtype=np.float64)
    if np.any(mu <= 0):
        raise ValidationError("negbin mean must be positive")
    if np.any(omega <= 1):
        raise ValidationError("negbin overdispersion must exceed 1")
    shape = mu / (omega - 1.0)
    rate = rng.gamma(shape, omega - 1.0)
    return rng.poisson(rate)


#==============================================================================
# Mean tie counts
#==============================================================================


def mean_ties(degrees, mixing_rows, profile_values):
    """Expected counts: d_i * sum_a m(ego_i, a) h(a, k).

    ``mixing_rows`` is the (n, A) matrix of each respondent's own mixing row
    (already expanded from ego groups); returns an (n, K) array.
    """
    degrees = np.asarray(degrees, dtype=np.float64)
    reach = np.asarray(mixing_rows, dtype=np.float64) @ np.asarray(
        profile_values, dtype=np.float64)
    return degrees[:, None] * reach


#==============================================================================
# Scaled inverse chi-square
#==============================================================================


def scaled_inv_chi2(df, scale_sq, rng, size=None):
    """Draw sigma^2 ~ df * scale_sq / ChiSquare(df)."""
    if df <= 0:
        raise ValidationError("inverse chi-square df must be positive")
    if np.any(np.asarray(scale_sq) <= 0):
        raise ValidationError("inverse chi-square scale must be positive")
    return df * scale_sq / rng.chisquare(df, size=size)


#==============================================================================
# Identifiability screening
#==============================================================================


@dataclass(frozen=True)
class RankReport:
    """Numerical rank of the known profile block.

    Mixing rows are pinned down by the known columns only when that block
    has full row rank A; anything less leaves directions the data cannot
    see.  ``flagged`` is advisory: callers decide whether to refuse.
    """

    rank: int
    required: int
    flagged: bool
    condition_number: float
    singular_values: np.ndarray

    def __str__(self):
        verdict = "DEFICIENT" if self.flagged else "ok"
        return (f"known-profile rank {self.rank}/{self.required} [{verdict}], "
                f"condition number {self.condition_number:.3g}")


def validate_identifiability(profile: ProfileMatrix) -> RankReport:
    """Rank-check the known profile columns.

    Numerical rank counts singular values above 1e-10 times the largest;
    the report flags rank < A (needs at least A known columns with
    independent demographic shapes).
    """
    known = profile.known_values
    if known.shape[1] == 0:
        raise ValidationError("no known profile columns to rank")
    A = profile.n_alter_groups
    sv = np.linalg.svd(known, compute_uv=False)
    top = sv.max()
    rank = int(np.sum(sv > 1e-10 * top)) if top > 0 else 0
    cond = float(top / sv.min()) if rank >= A and sv.size >= A else float("inf")
    sv = np.array(sv)
    sv.flags.writeable = False
    return RankReport(rank=rank, required=A, flagged=rank < A,
                      condition_number=cond, singular_values=sv)
