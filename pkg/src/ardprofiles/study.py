"""Replicated simulation study comparing known-profile selection regimes.

For each regime and replicate: draw a dataset, run the simple pipeline
(scale-up degrees, ratio mixing, group means, NNLS latent columns), and
score the total squared error of the group mixing matrix and of the
latent profile block against the generating truth.  Output is a long
table of (regime, replicate, target, error) rows plus per-regime
quartiles, the data behind a boxplot comparison.

Replicates are paired across regimes: replicate r of every regime uses
the stream seeded by (seed, r), so ego groups and degrees coincide and
regime contrasts are common-random-number comparisons.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import io as ioq
from .estimators import (estimate_latent_profiles, group_mixing,
                         scale_up_degree, simple_ratio_mixing)
from .simulate import (REGIMES, SimConfig, default_degree_law, default_margins,
                       default_mixing, latent_truth_profiles, regime_margins,
                       simulate)
from .types import (MixingMatrix, PopulationMargins, ProfileMatrix,
                    ValidationError)

TARGETS = ("mixing", "latent")
WORKERS_ENV = "ARDPROFILES_WORKERS"


@dataclass(frozen=True)
class StudyConfig:
    """Shape and seeds of the regime-comparison experiment."""

    n: int = 500
    n_known: int = 12
    n_latent: int = 6
    replicates: int = 100
    seed: int = 1
    regimes: tuple[str, ...] = REGIMES
    mean_degree: float = 750.0
    sigma_d: float = 0.6
    overdispersion: float = 5.0
    workers: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "regimes", tuple(self.regimes))
        if self.n < 1 or self.replicates < 1:
            raise ValidationError("need at least one respondent and replicate")
        unknown = [g for g in self.regimes if g not in REGIMES]
        if unknown:
            raise ValidationError(f"unknown regimes {unknown}")
        if self.n_latent < 1:
            raise ValidationError("the study scores at least one latent column")
        if self.overdispersion <= 1:
            raise ValidationError("overdispersion must exceed 1")
        if self.workers is not None and self.workers < 1:
            raise ValidationError("worker count must be positive")


@dataclass(frozen=True)
class StudyResult:
    """Long-format error rows and their per-regime quartiles."""

    rows: tuple[tuple[str, int, str, float], ...]
    summary: dict
    config: StudyConfig = field(repr=False, default=None)


def resolve_workers(explicit: int | None = None) -> int:
    """Worker-thread count: explicit argument, else environment, else 1."""
    if explicit is not None:
        return int(explicit)
    raw = os.environ.get(WORKERS_ENV, "").strip()
    if raw:
        try:
            n = int(raw)
        except ValueError:
            raise ValidationError(
                f"{WORKERS_ENV}={raw!r} is not an integer") from None
        if n < 1:
            raise ValidationError(f"{WORKERS_ENV} must be positive")
        return n
    return 1


#------------------------------------------------------------------------------
# Per-regime fixtures (shared across replicates)
#------------------------------------------------------------------------------


@dataclass(frozen=True)
class _RegimeSetup:
    margins: PopulationMargins
    generating_profile: ProfileMatrix      # every column known, for simulate
    estimation_profile: ProfileMatrix      # latent columns masked
    known_cols: np.ndarray
    latent_cols: np.ndarray
    latent_truth: np.ndarray               # (A, H)


def build_regime(regime: str, base: PopulationMargins, mixing: MixingMatrix,
                 K: int, H: int) -> _RegimeSetup:
    """Fixed known-profile margins plus shared latent truth for one regime.

    The combined margins carry K known columns with cross counts and H
    latent columns whose cross counts are withheld (NaN); the generating
    profile sees every value, the estimation profile only the known ones.
    """
    known = regime_margins(regime, base, K)
    h_lat = latent_truth_profiles(base, H)
    lat_cross = h_lat * base.alter_group_sizes[:, None]
    lat_names = tuple(f"latent{j + 1}" for j in range(H))

    cross = np.concatenate(
        [known.cross_counts, np.full_like(lat_cross, np.nan)], axis=1)
    margins = PopulationMargins(
        total_population=base.total_population,
        alter_group_sizes=base.alter_group_sizes,
        subpop_sizes=np.concatenate([known.subpop_sizes,
                                     lat_cross.sum(axis=0)]),
        cross_counts=cross,
        alter_group_names=base.alter_group_names,
        subpop_names=known.subpop_names + lat_names,
    )
    values = np.concatenate(
        [known.cross_counts / base.alter_group_sizes[:, None], h_lat], axis=1)
    generating = ProfileMatrix(values, np.zeros_like(values, dtype=bool),
                               margins.alter_group_names, margins.subpop_names)
    estimation = generating.mask_columns(lat_names)
    return _RegimeSetup(
        margins=margins,
        generating_profile=generating,
        estimation_profile=estimation,
        known_cols=np.arange(K),
        latent_cols=np.arange(K, K + H),
        latent_truth=h_lat,
    )


#------------------------------------------------------------------------------
# Scoring
#------------------------------------------------------------------------------


def score_replicate(setup: _RegimeSetup, mixing: MixingMatrix,
                    config: StudyConfig, replicate: int,
                    regime: str) -> tuple[float, float]:
    """(mixing error, latent error) for one simulated dataset.

    Errors are total squared deviation from truth summed over all matrix
    entries: the E x A group mixing matrix and the A x H latent block.
    """
    E = mixing.n_ego_groups
    mu_d, sigma_d = default_degree_law(config.mean_degree, config.sigma_d)
    sim = SimConfig(
        n=config.n,
        ego_group_probs=np.full(E, 1.0 / E),
        true_mixing=mixing,
        true_profile=setup.generating_profile,
        mu_d=mu_d,
        sigma_d=sigma_d,
        overdispersions=np.full(setup.generating_profile.n_subpops,
                                config.overdispersion),
        seed=(config.seed, replicate),
        profile_regime=regime,
    )
    dataset, _ = simulate(sim)

    degrees = scale_up_degree(dataset, setup.margins, columns=setup.known_cols)
    rows = simple_ratio_mixing(dataset, setup.estimation_profile,
                               setup.margins, columns=setup.known_cols)
    grouped = group_mixing(rows, dataset.ego_group, E)
    mixing_err = float(np.sum((grouped - mixing.m) ** 2))

    latent = estimate_latent_profiles(dataset, setup.estimation_profile,
                                      degrees, rows,
                                      columns=setup.latent_cols)
    est = latent.profile.values[:, setup.latent_cols]
    latent_err = float(np.sum((est - setup.latent_truth) ** 2))
    return mixing_err, latent_err


def run_study(config: StudyConfig,
              margins: PopulationMargins | None = None,
              mixing: MixingMatrix | None = None) -> StudyResult:
    """Run regimes x replicates and collect long-format error rows.

    Rows come back sorted by (regime order, replicate, target) regardless
    of worker count; each replicate draws from its own (seed, replicate)
    stream, so the result is a pure function of the config.
    """
    if margins is None:
        margins = default_margins()
    if mixing is None:
        mixing = default_mixing(margins)
    setups = {g: build_regime(g, margins, mixing, config.n_known,
                              config.n_latent)
              for g in config.regimes}

    def one_replicate(r: int):
        out = []
        for g in config.regimes:
            me, le = score_replicate(setups[g], mixing, config, r, g)
            out.append((g, r, "mixing", me))
            out.append((g, r, "latent", le))
        return out

    workers = resolve_workers(config.workers)
    reps = range(config.replicates)
    if workers == 1:
        per_rep = [one_replicate(r) for r in reps]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            per_rep = list(pool.map(one_replicate, reps))

    rows = []
    for g in config.regimes:
        for chunk in per_rep:
            rows.extend(t for t in chunk if t[0] == g)
    rows.sort(key=lambda t: (config.regimes.index(t[0]), t[1],
                             TARGETS.index(t[2])))
    return StudyResult(rows=tuple(rows),
                       summary=summarize_rows(rows, config.regimes),
                       config=config)


def summarize_rows(rows, regimes) -> dict:
    """Per (regime, target) quartiles of the error distribution."""
    summary: dict = {}
    for g in regimes:
        summary[g] = {}
        for t in TARGETS:
            errs = np.array([r[3] for r in rows if r[0] == g and r[2] == t])
            if errs.size == 0:
                continue
            q25, q50, q75 = np.percentile(errs, [25.0, 50.0, 75.0])
            summary[g][t] = {"q25": float(q25), "median": float(q50),
                             "q75": float(q75), "n": int(errs.size)}
    return summary


def summary_table(result: StudyResult) -> str:
    """Fixed-width quartile table, one line per regime x target."""
    lines = [f"{'regime':<12} {'target':<8} {'q25':>12} {'median':>12} "
             f"{'q75':>12}"]
    for g, targets in result.summary.items():
        for t, q in targets.items():
            lines.append(f"{g:<12} {t:<8} {q['q25']:>12.6g} "
                         f"{q['median']:>12.6g} {q['q75']:>12.6g}")
    return "\n".join(lines)


def write_study(out_dir, result: StudyResult, seed=None, config=None) -> dict:
    """errors.csv (long format), summary.csv (quartiles), manifest."""
    os.makedirs(out_dir, exist_ok=True)
    files = []

    path = os.path.join(out_dir, "errors.csv")
    files.append("errors.csv")
    fh, w = ioq._open_csv_writer(path)
    with fh:
        w.writerow(["regime", "replicate", "target", "error"])
        for g, r, t, e in result.rows:
            w.writerow([g, r, t, ioq._fmt(e)])

    path = os.path.join(out_dir, "summary.csv")
    files.append("summary.csv")
    fh, w = ioq._open_csv_writer(path)
    with fh:
        w.writerow(["regime", "target", "q25", "median", "q75", "n"])
        for g, targets in result.summary.items():
            for t, q in targets.items():
                w.writerow([g, t, ioq._fmt(q["q25"]), ioq._fmt(q["median"]),
                            ioq._fmt(q["q75"]), q["n"]])

    return ioq._finish_manifest(out_dir, "study", files, config, seed)
