"""Domain types shared by every estimation routine.

All types are immutable value objects: arrays are copied on construction and
flagged read-only, so instances are safe to share across threads.  Validation
happens once, at construction; downstream code can assume the invariants.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

SIMPLEX_TOL = 1e-12


class ValidationError(ValueError):
    """Raised when a domain object violates one of its invariants."""


class IdentifiabilityError(ValidationError):
    """Raised when estimation is requested but the known profile block
    cannot pin the parameters down (rank below the alter group count)."""


def _frozen(a, dtype=np.float64, ndim=None):
    out = np.array(a, dtype=dtype)
    if ndim is not None and out.ndim != ndim:
        raise ValidationError(f"expected a {ndim}-d array, got shape {out.shape}")
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class PopulationMargins:
    """Census-style counts: total, per alter group, per subpopulation.

    ``cross_counts[a, k]`` is the number of members of subpopulation k inside
    alter group a; columns may be NaN when no census source provides them
    (the latent columns).  Totals and group sizes are integral counts, but
    all margins are stored as float64 so that constructed cross counts can
    satisfy exact ratio identities.
    """

    total_population: float
    alter_group_sizes: np.ndarray
    subpop_sizes: np.ndarray
    cross_counts: np.ndarray | None = None
    alter_group_names: tuple[str, ...] = ()
    subpop_names: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "alter_group_sizes",
                           _frozen(self.alter_group_sizes, ndim=1))
        object.__setattr__(self, "subpop_sizes",
                           _frozen(self.subpop_sizes, ndim=1))
        if self.total_population <= 0:
            raise ValidationError("total population must be positive")
        if np.any(self.alter_group_sizes <= 0):
            raise ValidationError("alter group sizes must be positive")
        if np.any(self.subpop_sizes <= 0):
            raise ValidationError("subpopulation sizes must be positive")
        gap = abs(self.alter_group_sizes.sum() - self.total_population)
        if gap > 1e-6 * self.total_population:
            raise ValidationError(
                f"alter group sizes sum to {self.alter_group_sizes.sum():g}, "
                f"not the total population {self.total_population:g}")
        if not self.alter_group_names:
            object.__setattr__(self, "alter_group_names",
                               tuple(f"a{j + 1}" for j in range(self.n_alter_groups)))
        if not self.subpop_names:
            object.__setattr__(self, "subpop_names",
                               tuple(f"k{j + 1}" for j in range(self.n_subpops)))
        if len(self.alter_group_names) != self.n_alter_groups:
            raise ValidationError("alter group name count mismatch")
        if len(self.subpop_names) != self.n_subpops:
            raise ValidationError("subpopulation name count mismatch")
        if self.cross_counts is not None:
            cc = _frozen(self.cross_counts, ndim=2)
            object.__setattr__(self, "cross_counts", cc)
            if cc.shape != (self.n_alter_groups, self.n_subpops):
                raise ValidationError(
                    f"cross counts have shape {cc.shape}, expected "
                    f"{(self.n_alter_groups, self.n_subpops)}")
            for k in range(self.n_subpops):
                col = cc[:, k]
                if np.all(np.isnan(col)):
                    continue            # latent column, no census block
                if np.any(np.isnan(col)):
                    raise ValidationError(
                        f"cross counts for {self.subpop_names[k]!r} are "
                        "partially missing; a column is all-present or all-absent")
                if np.any(col < 0) or np.any(col > self.alter_group_sizes):
                    raise ValidationError(
                        f"cross counts for {self.subpop_names[k]!r} fall outside "
                        "[0, alter group size]")
                gap = abs(col.sum() - self.subpop_sizes[k])
                if gap > 1e-6 * max(self.subpop_sizes[k], 1.0):
                    raise ValidationError(
                        f"cross counts for {self.subpop_names[k]!r} sum to "
                        f"{col.sum():g}, not the subpopulation size "
                        f"{self.subpop_sizes[k]:g}")

    @property
    def n_alter_groups(self) -> int:
        return self.alter_group_sizes.shape[0]

    @property
    def n_subpops(self) -> int:
        return self.subpop_sizes.shape[0]

    def has_cross_counts(self, k: int) -> bool:
        return (self.cross_counts is not None
                and not np.any(np.isnan(self.cross_counts[:, k])))


@dataclass(frozen=True)
class ProfileMatrix:
    """Alter-group-by-subpopulation relative sizes.

    ``values[a, k]`` is the fraction of alter group a belonging to
    subpopulation k.  ``latent_mask[a, k]`` is True where the entry is
    unknown and must be estimated; the mask is constant within each column.
    Masked cells of ``values`` hold NaN until an estimator fills them.
    """

    values: np.ndarray
    latent_mask: np.ndarray
    alter_group_names: tuple[str, ...] = ()
    subpop_names: tuple[str, ...] = ()

    def __post_init__(self):
        v = _frozen(self.values, ndim=2)
        m = _frozen(self.latent_mask, dtype=bool, ndim=2)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "latent_mask", m)
        if v.shape != m.shape:
            raise ValidationError("values and latent mask shapes differ")
        col_any = m.any(axis=0)
        col_all = m.all(axis=0)
        if np.any(col_any != col_all):
            raise ValidationError("latent mask must be constant within each column")
        known = v[:, ~col_any]
        if known.size and (np.any(~np.isfinite(known)) or np.any(known < 0)
                           or np.any(known > 1)):
            raise ValidationError("known profile entries must lie in [0, 1]")
        filled = v[:, col_any]
        filled = filled[np.isfinite(filled)]
        if np.any(filled < 0):
            raise ValidationError("latent profile entries must be nonnegative")
        if not self.alter_group_names:
            object.__setattr__(self, "alter_group_names",
                               tuple(f"a{j + 1}" for j in range(v.shape[0])))
        if not self.subpop_names:
            object.__setattr__(self, "subpop_names",
                               tuple(f"k{j + 1}" for j in range(v.shape[1])))
        if len(self.alter_group_names) != v.shape[0]:
            raise ValidationError("alter group name count mismatch")
        if len(self.subpop_names) != v.shape[1]:
            raise ValidationError("subpopulation name count mismatch")

    @property
    def n_alter_groups(self) -> int:
        return self.values.shape[0]

    @property
    def n_subpops(self) -> int:
        return self.values.shape[1]

    @property
    def known_columns(self) -> np.ndarray:
        """Indices of columns with fully known entries."""
        return np.flatnonzero(~self.latent_mask.any(axis=0))

    @property
    def latent_columns(self) -> np.ndarray:
        return np.flatnonzero(self.latent_mask.any(axis=0))

    @property
    def known_values(self) -> np.ndarray:
        return self.values[:, self.known_columns]

    @classmethod
    def from_margins(cls, margins: PopulationMargins,
                     latent_columns: Sequence[int] = ()) -> "ProfileMatrix":
        """Build profiles as cross_counts / alter_group_sizes.

        Columns listed in ``latent_columns`` (or lacking cross counts) are
        masked and set to NaN.
        """
        A, K = margins.n_alter_groups, margins.n_subpops
        values = np.full((A, K), np.nan)
        mask = np.zeros((A, K), dtype=bool)
        latent = set(int(k) for k in latent_columns)
        for k in range(K):
            if k in latent or not margins.has_cross_counts(k):
                mask[:, k] = True
            else:
                values[:, k] = margins.cross_counts[:, k] / margins.alter_group_sizes
        return cls(values, mask, margins.alter_group_names, margins.subpop_names)

    def with_values(self, values: np.ndarray) -> "ProfileMatrix":
        """Same mask and names, new entries (used to fill latent cells)."""
        return ProfileMatrix(values, self.latent_mask,
                             self.alter_group_names, self.subpop_names)

    def mask_columns(self, columns) -> "ProfileMatrix":
        """Mark extra columns as latent (entries cleared to NaN).

        ``columns`` holds names or indices; already-latent columns are
        accepted and unchanged.
        """
        idx = []
        for c in columns:
            if isinstance(c, str):
                if c not in self.subpop_names:
                    raise ValidationError(f"no subpopulation named {c!r}")
                idx.append(self.subpop_names.index(c))
            else:
                idx.append(int(c))
        mask = np.array(self.latent_mask)
        values = np.array(self.values)
        mask[:, idx] = True
        values[:, idx] = np.nan
        return ProfileMatrix(values, mask, self.alter_group_names,
                             self.subpop_names)


@dataclass(frozen=True)
class ArdDataset:
    """Observed tie counts: one row per respondent, one column per subpopulation."""

    counts: np.ndarray
    ego_group: np.ndarray
    subpop_names: tuple[str, ...]
    ego_group_names: tuple[str, ...]
    alter_group_names: tuple[str, ...] = ()
    respondent_ids: tuple[str, ...] = ()

    def __post_init__(self):
        y = np.array(self.counts)
        if y.ndim != 2:
            raise ValidationError("counts must be a 2-d array")
        if not np.issubdtype(y.dtype, np.integer):
            if np.any(~np.isfinite(y)) or np.any(y != np.floor(y)):
                raise ValidationError("counts must be finite integers")
            y = y.astype(np.int64)
        if np.any(y < 0):
            raise ValidationError("counts must be nonnegative")
        y = y.astype(np.int64)
        y.flags.writeable = False
        object.__setattr__(self, "counts", y)
        e = _frozen(self.ego_group, dtype=np.int64, ndim=1)
        object.__setattr__(self, "ego_group", e)
        if e.shape[0] != y.shape[0]:
            raise ValidationError("ego group labels do not match respondent count")
        E = len(self.ego_group_names)
        if E == 0:
            raise ValidationError("at least one ego group name is required")
        if e.size and (e.min() < 0 or e.max() >= E):
            raise ValidationError("ego group label outside 0..E-1")
        if len(self.subpop_names) != y.shape[1]:
            raise ValidationError("subpopulation name count mismatch")
        if not self.respondent_ids:
            object.__setattr__(self, "respondent_ids",
                               tuple(f"r{j + 1}" for j in range(y.shape[0])))
        if len(self.respondent_ids) != y.shape[0]:
            raise ValidationError("respondent id count mismatch")
        if len(set(self.respondent_ids)) != len(self.respondent_ids):
            raise ValidationError("respondent ids must be unique")

    @property
    def n_respondents(self) -> int:
        return self.counts.shape[0]

    @property
    def n_subpops(self) -> int:
        return self.counts.shape[1]

    @property
    def n_ego_groups(self) -> int:
        return len(self.ego_group_names)


def check_alignment(dataset: ArdDataset, profile: ProfileMatrix) -> None:
    """Column order must agree between responses and profiles, by name.

    Alter group order is compared only when the dataset carries alter
    names (loaded response files have no alter dimension of their own).
    """
    if dataset.subpop_names != profile.subpop_names:
        raise ValidationError(
            "subpopulation columns differ between responses and profiles: "
            f"{list(dataset.subpop_names)} vs {list(profile.subpop_names)}")
    if (dataset.alter_group_names and profile.alter_group_names
            and dataset.alter_group_names != profile.alter_group_names):
        raise ValidationError(
            "alter group order differs between responses and profiles: "
            f"{list(dataset.alter_group_names)} vs {list(profile.alter_group_names)}")


@dataclass(frozen=True)
class MixingMatrix:
    """Ego-group-by-alter-group expected tie fractions; rows on the simplex."""

    m: np.ndarray
    ego_group_names: tuple[str, ...] = ()
    alter_group_names: tuple[str, ...] = ()

    def __post_init__(self):
        m = _frozen(self.m, ndim=2)
        object.__setattr__(self, "m", m)
        if np.any(~np.isfinite(m)) or np.any(m < 0) or np.any(m > 1):
            raise ValidationError("mixing entries must lie in [0, 1]")
        gaps = np.abs(m.sum(axis=1) - 1.0)
        if np.any(gaps > SIMPLEX_TOL):
            e = int(np.argmax(gaps))
            raise ValidationError(
                f"mixing row {e} sums to {m[e].sum():.17g}, not 1 "
                f"(tolerance {SIMPLEX_TOL:g})")
        if not self.ego_group_names:
            object.__setattr__(self, "ego_group_names",
                               tuple(f"e{j + 1}" for j in range(m.shape[0])))
        if not self.alter_group_names:
            object.__setattr__(self, "alter_group_names",
                               tuple(f"a{j + 1}" for j in range(m.shape[1])))
        if len(self.ego_group_names) != m.shape[0]:
            raise ValidationError("ego group name count mismatch")
        if len(self.alter_group_names) != m.shape[1]:
            raise ValidationError("alter group name count mismatch")

    @classmethod
    def from_unnormalized(cls, rows: np.ndarray, ego_group_names=(),
                          alter_group_names=()) -> "MixingMatrix":
        """Normalize each row to the simplex, then validate."""
        rows = np.asarray(rows, dtype=np.float64)
        sums = rows.sum(axis=1, keepdims=True)
        if np.any(sums <= 0):
            raise ValidationError("cannot normalize a nonpositive mixing row")
        return cls(rows / sums, ego_group_names, alter_group_names)

    @property
    def n_ego_groups(self) -> int:
        return self.m.shape[0]

    @property
    def n_alter_groups(self) -> int:
        return self.m.shape[1]


@dataclass(frozen=True)
class ModelParams:
    """One full parameter state for the count model.

    ``latent_profile`` carries the profile matrix with latent cells filled;
    known cells must match the data profile.  Hyperparameters are scalars
    except the per-ego-row mixing means and scales.
    """

    log_degrees: np.ndarray
    mixing: MixingMatrix
    overdispersions: np.ndarray
    latent_profile: np.ndarray
    mu_d: float = 0.0
    sigma_d: float = 1.0
    mu_m: np.ndarray = field(default_factory=lambda: np.array([]))
    sigma_m: np.ndarray = field(default_factory=lambda: np.array([]))
    mu_h: float = 0.0
    sigma_h: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "log_degrees", _frozen(self.log_degrees, ndim=1))
        object.__setattr__(self, "overdispersions",
                           _frozen(self.overdispersions, ndim=1))
        object.__setattr__(self, "latent_profile", _frozen(self.latent_profile, ndim=2))
        mu_m = self.mu_m if np.size(self.mu_m) else np.zeros(self.mixing.n_ego_groups)
        sigma_m = (self.sigma_m if np.size(self.sigma_m)
                   else np.ones(self.mixing.n_ego_groups))
        object.__setattr__(self, "mu_m", _frozen(mu_m, ndim=1))
        object.__setattr__(self, "sigma_m", _frozen(sigma_m, ndim=1))
        if np.any(~np.isfinite(self.log_degrees)):
            raise ValidationError("log degrees must be finite")
        if np.any(self.overdispersions <= 1):
            raise ValidationError("overdispersions must exceed 1")
        if np.any(self.latent_profile < 0):
            raise ValidationError("profile entries must be nonnegative")
        if self.sigma_d <= 0 or self.sigma_h <= 0 or np.any(self.sigma_m <= 0):
            raise ValidationError("prior scales must be positive")

    @property
    def degrees(self) -> np.ndarray:
        return np.exp(self.log_degrees)
