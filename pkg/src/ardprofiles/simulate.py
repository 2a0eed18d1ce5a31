"""Synthetic ARD generation under the latent nonrandom mixing model.

Counts are drawn as y_ik ~ NegBinom(d_i sum_a m(e_i,a) h(a,k), omega_k)
with log-normal degrees and a configurable ego-group split.  The module
also builds the four known-profile selection regimes used by the
replication study (separable, scaled_down, violating, flat) plus a
deterministic default population and mixing matrix.

The default population and mixing matrix are stand-ins with realistic
scale (300M people, eight gender-by-age alter groups, six ego groups);
real applications supply their own margins.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .kernels import mean_ties, negbin_sample
from .types import (ArdDataset, MixingMatrix, ModelParams, PopulationMargins,
                    ProfileMatrix, ValidationError)

REGIMES = ("separable", "scaled_down", "violating", "flat")

# Fixed stream so regime constructions are a pure function of
# (regime, margins, K); replicate noise comes from SimConfig.seed instead.
_PROFILE_SEED = 742022

# Combined population share of the known subpopulations (sum_k N_k / N).
# Matches the few-percent coverage of a dozen first names.
_KNOWN_SHARE = 0.024

# Dirichlet concentration (times population shares) for scaled-down column
# shapes; lower values give more shape diversity but risk a negative
# balancing column.
_SD_CONC = 16.0


#------------------------------------------------------------------------------
# Default population
#------------------------------------------------------------------------------

_ALTER_NAMES = ("m18-29", "m30-44", "m45-59", "m60p",
                "f18-29", "f30-44", "f45-59", "f60p")
_ALTER_SIZES = np.array([34.5e6, 39.0e6, 36.0e6, 28.5e6,
                         33.0e6, 39.0e6, 37.5e6, 52.5e6])
_ALTER_AGE = np.array([23.5, 37.0, 52.0, 70.0] * 2)
_ALTER_MALE = np.array([1, 1, 1, 1, 0, 0, 0, 0], dtype=bool)

_EGO_NAMES = ("m18-39", "m40-59", "m60p", "f18-39", "f40-59", "f60p")
_EGO_AGE = np.array([28.0, 49.0, 70.0] * 2)
_EGO_MALE = np.array([1, 1, 1, 0, 0, 0], dtype=bool)


def default_margins() -> PopulationMargins:
    """A 300M-person population split into eight gender-by-age alter groups."""
    return PopulationMargins(
        total_population=3.0e8,
        alter_group_sizes=_ALTER_SIZES,
        subpop_sizes=np.array([1.0]),      # placeholder; regimes supply real K
        cross_counts=None,
        alter_group_names=_ALTER_NAMES,
        subpop_names=("placeholder",),
    )


def default_mixing(margins: PopulationMargins | None = None,
                   square: bool = False, age_scale: float = 25.0,
                   gender_affinity: float = 1.5) -> MixingMatrix:
    """Assortative mixing: same-gender and similar-age ties are favored,
    weighted by alter group size.

    The default six ego groups use coarser age bands than the eight alter
    groups, the usual survey situation.  ``square=True`` instead asks
    respondents for the same gender-by-age cell as the alter groups,
    giving an eight-by-eight matrix; with as many ego groups as alter
    groups the latent profile columns are fully identified.  Smaller
    ``age_scale`` and larger ``gender_affinity`` sharpen the assortative
    structure (better conditioned for latent estimation).
    """
    if margins is None:
        margins = default_margins()
    if margins.n_alter_groups != len(_ALTER_NAMES):
        raise ValidationError("default mixing is defined for the default groups")
    if age_scale <= 0 or gender_affinity <= 0:
        raise ValidationError("mixing sharpness parameters must be positive")
    if square:
        ego_names, ego_age, ego_male = _ALTER_NAMES, _ALTER_AGE, _ALTER_MALE
    else:
        ego_names, ego_age, ego_male = _EGO_NAMES, _EGO_AGE, _EGO_MALE
    rows = np.empty((len(ego_names), len(_ALTER_NAMES)))
    for e in range(len(ego_names)):
        age_aff = np.exp(-np.abs(ego_age[e] - _ALTER_AGE) / age_scale)
        gender_aff = np.where(ego_male[e] == _ALTER_MALE, gender_affinity, 1.0)
        rows[e] = margins.alter_group_sizes * age_aff * gender_aff
    return MixingMatrix.from_unnormalized(rows, ego_names,
                                          margins.alter_group_names)


#------------------------------------------------------------------------------
# Known-profile regimes
#------------------------------------------------------------------------------


def _name_sizes(rng, K: int) -> np.ndarray:
    """Per-column population shares t_k with sum_k t_k = _KNOWN_SHARE."""
    raw = rng.lognormal(0.0, 0.45, size=K)
    return _KNOWN_SHARE * raw / raw.sum()


def _separable_cross(rng, margins, K):
    A = margins.n_alter_groups
    cross = np.zeros((A, K))
    for a in range(A):
        cross[a, a] = margins.alter_group_sizes[a]
    for k in range(A, K):
        a = k % A
        frac = 0.08 + 0.04 * rng.random()
        cross[a, k] = frac * margins.alter_group_sizes[a]
    return cross


def _scaled_down_cross(rng, margins, K):
    # Dirichlet shapes centered on the population shares keep row sums
    # comparable across alter groups; the last (largest) column absorbs
    # the remainder so every row sums to exactly _KNOWN_SHARE.
    A = margins.n_alter_groups
    sizes = margins.alter_group_sizes
    N = margins.total_population
    p = sizes / N
    for _ in range(100):
        t = np.sort(_name_sizes(rng, K))
        h = np.empty((A, K))
        for k in range(K - 1):
            shape = rng.dirichlet(_SD_CONC * p)
            h[:, k] = t[k] * N * shape / sizes
        h[:, K - 1] = _KNOWN_SHARE - h[:, :K - 1].sum(axis=1)
        if np.all(h[:, K - 1] > 0) and np.all(h <= 1):
            return h * sizes[:, None]
    raise ValidationError(
        "could not build scaled-down profiles at this K; shares leave no "
        "slack for the balancing column")


def _violating_cross(rng, margins, K):
    # Almost all mass sits in the oldest alter groups: tie counts then say
    # little about the young groups, degree and mixing estimates skew old.
    A = margins.n_alter_groups
    sizes = margins.alter_group_sizes
    N = margins.total_population
    base = np.array([0.004, 0.012, 0.07, 0.42, 0.004, 0.012, 0.06, 0.418])
    t = _name_sizes(rng, K)
    cross = np.empty((A, K))
    for k in range(K):
        w = base * rng.lognormal(0.0, 0.35, size=A)
        cross[:, k] = t[k] * N * (w / w.sum())
    if np.any(cross > sizes[:, None]):
        raise ValidationError("violating regime mass exceeds a group size")
    return cross


def _flat_cross(rng, margins, K):
    share = _KNOWN_SHARE / K
    return np.tile(share * margins.alter_group_sizes[:, None], (1, K))


_REGIME_BUILDERS = {
    "separable": _separable_cross,
    "scaled_down": _scaled_down_cross,
    "violating": _violating_cross,
    "flat": _flat_cross,
}


def regime_margins(regime: str, margins: PopulationMargins,
                   K: int) -> PopulationMargins:
    """Population margins whose K known subpopulations follow a regime.

    Deterministic in (regime, margins, K): the construction draws from a
    fixed internal stream, so repeated calls return identical margins.
    """
    if regime not in _REGIME_BUILDERS:
        raise ValidationError(
            f"unknown regime {regime!r}; pick one of {', '.join(REGIMES)}")
    A = margins.n_alter_groups
    if regime != "flat" and K < A:
        raise ValidationError(
            f"regime {regime!r} needs K >= {A} columns for identifiability")
    if K < 2:
        raise ValidationError("at least two known columns are required")
    rng = np.random.default_rng([_PROFILE_SEED, REGIMES.index(regime), A, K])
    cross = _REGIME_BUILDERS[regime](rng, margins, K)
    names = tuple(f"{regime[:4]}{j + 1}" for j in range(K))
    return PopulationMargins(
        total_population=margins.total_population,
        alter_group_sizes=margins.alter_group_sizes,
        subpop_sizes=cross.sum(axis=0),
        cross_counts=cross,
        alter_group_names=margins.alter_group_names,
        subpop_names=names,
    )


def make_regime_profiles(regime: str, margins: PopulationMargins,
                         K: int) -> ProfileMatrix:
    """Known-profile matrix for one selection regime.

    separable: one whole-group column per alter group plus smaller
    single-group columns; scaled_down: random column shapes with the last
    column balancing every row to a common total share; violating: mass
    concentrated in the oldest groups; flat: all columns identical
    (rank one, fails the identifiability gate by construction).
    """
    return ProfileMatrix.from_margins(regime_margins(regime, margins, K))


def latent_truth_profiles(margins: PopulationMargins, H: int = 6) -> np.ndarray:
    """Deterministic name-like latent columns used as the study's truth.

    Six base shapes sweep young-heavy to old-heavy with gender tilts, at
    masses of roughly 0.4 to 0.75 percent of the population (popular
    first names).  Returns an (A, H) matrix of h(a,k) values, no
    randomness.
    """
    A = margins.n_alter_groups
    ages = _ALTER_AGE if A == len(_ALTER_AGE) else np.linspace(25, 70, A)
    male = _ALTER_MALE if A == len(_ALTER_MALE) else (np.arange(A) % 2 == 0)
    span = ages.max() - ages.min()
    young = (ages.max() - ages) / span
    old = (ages - ages.min()) / span
    shapes = [
        0.5 + 1.5 * young,
        0.5 + 1.5 * old,
        np.ones(A),
        (0.4 + 1.2 * young) * np.where(male, 1.6, 0.7),
        (0.4 + 1.2 * old) * np.where(male, 0.7, 1.6),
        0.6 + 1.8 * np.exp(-((ages - 45.0) / 15.0) ** 2),
    ]
    masses = [0.0040, 0.0060, 0.0050, 0.0075, 0.0045, 0.0055]
    N = margins.total_population
    sizes = margins.alter_group_sizes
    out = np.empty((A, H))
    for j in range(H):
        s = np.asarray(shapes[j % len(shapes)], dtype=np.float64)
        mass = masses[j % len(masses)] * (1.0 + 0.1 * (j // len(shapes)))
        cross = mass * N * s / s.sum()
        out[:, j] = cross / sizes
    return out


#------------------------------------------------------------------------------
# Generation
#------------------------------------------------------------------------------


@dataclass(frozen=True)
class SimConfig:
    """Everything the generator needs, including the ground truth."""

    n: int
    ego_group_probs: np.ndarray
    true_mixing: MixingMatrix
    true_profile: ProfileMatrix
    mu_d: float
    sigma_d: float
    overdispersions: np.ndarray
    seed: int
    profile_regime: str = "custom"

    def __post_init__(self):
        probs = np.array(self.ego_group_probs, dtype=np.float64)
        probs.flags.writeable = False
        object.__setattr__(self, "ego_group_probs", probs)
        omega = np.array(self.overdispersions, dtype=np.float64)
        omega.flags.writeable = False
        object.__setattr__(self, "overdispersions", omega)
        if self.n < 1:
            raise ValidationError("need at least one respondent")
        if probs.ndim != 1 or probs.shape[0] != self.true_mixing.n_ego_groups:
            raise ValidationError("ego group probabilities do not match mixing rows")
        if np.any(probs < 0) or abs(probs.sum() - 1.0) > 1e-9:
            raise ValidationError("ego group probabilities must be a simplex vector")
        if self.sigma_d <= 0:
            raise ValidationError("degree scale must be positive")
        if omega.shape != (self.true_profile.n_subpops,):
            raise ValidationError("one overdispersion per subpopulation required")
        if np.any(omega <= 1):
            raise ValidationError("overdispersions must exceed 1")
        if np.any(np.isnan(self.true_profile.values)):
            raise ValidationError("the generating profile must be fully known")
        if self.true_mixing.n_alter_groups != self.true_profile.n_alter_groups:
            raise ValidationError("mixing and profile alter group counts differ")
        if self.profile_regime not in REGIMES + ("custom",):
            raise ValidationError(f"unknown regime {self.profile_regime!r}")


def default_degree_law(mean_degree: float = 750.0,
                       sigma_d: float = 0.6) -> tuple[float, float]:
    """(mu_d, sigma_d) for log-normal degrees with the given mean."""
    if mean_degree <= 0 or sigma_d <= 0:
        raise ValidationError("degree law parameters must be positive")
    return float(np.log(mean_degree) - 0.5 * sigma_d ** 2), float(sigma_d)


def simulate(config: SimConfig) -> tuple[ArdDataset, ModelParams]:
    """Draw one dataset and return it with the generating parameter state."""
    rng = np.random.default_rng(config.seed)
    E = config.true_mixing.n_ego_groups
    ego = rng.choice(E, size=config.n, p=config.ego_group_probs)
    log_d = rng.normal(config.mu_d, config.sigma_d, size=config.n)

    h = config.true_profile.values
    reach = config.true_mixing.m @ h                     # (E, K)
    if np.any(reach[np.unique(ego)] <= 0):
        raise ValidationError(
            "a profile column is unreachable (zero expected ties) for an "
            "occupied ego group; such columns carry no information")
    mu = mean_ties(np.exp(log_d), config.true_mixing.m[ego], h)
    y = negbin_sample(mu, config.overdispersions[None, :], rng)

    dataset = ArdDataset(
        counts=y,
        ego_group=ego,
        subpop_names=config.true_profile.subpop_names,
        alter_group_names=config.true_profile.alter_group_names,
        ego_group_names=config.true_mixing.ego_group_names,
    )
    m = config.true_mixing.m
    positive = h[h > 0]
    log_h = np.log(positive) if positive.size else np.array([0.0])
    truth = ModelParams(
        log_degrees=log_d,
        mixing=config.true_mixing,
        overdispersions=config.overdispersions,
        latent_profile=h,
        mu_d=config.mu_d,
        sigma_d=config.sigma_d,
        mu_m=m.mean(axis=1),
        sigma_m=np.maximum(m.std(axis=1), 1e-3),
        mu_h=float(log_h.mean()),
        sigma_h=float(max(log_h.std(), 1e-3)),
    )
    return dataset, truth


def simulate_complete(degrees, mixing_rows, profile_values, rng) -> np.ndarray:
    """Poisson complete-data draws y_iak with mean d_i m_ia h(a,k).

    Surveys never observe this (n, A, K) array; it exists so estimator
    identities that involve the per-alter-group split can be exercised.
    Summing over the alter axis gives a Poisson-mixing dataset.
    """
    degrees = np.asarray(degrees, dtype=np.float64)
    rows = np.asarray(mixing_rows, dtype=np.float64)
    h = np.asarray(profile_values, dtype=np.float64)
    lam = degrees[:, None, None] * rows[:, :, None] * h[None, :, :]
    return rng.poisson(lam)
