"""Gibbs-Metropolis sampler for the hierarchical tie-count model.

One sweep runs eleven updates: per-respondent degrees (Metropolis on the
log scale), per-ego-group mixing rows (perturb all entries, renormalize
to the simplex), the degree and mixing hyperparameters (exact normal and
scaled-inverse-chi-square draws), overdispersions for known columns
(natural-scale Metropolis), latent profile cells (Metropolis on the log
scale), the profile hyperparameters, and overdispersions for latent
columns.

Estimation is two-stage by default: degrees, mixing, and known-column
overdispersions are fit against the known columns first, then frozen at
their posterior means while the latent profile cells are sampled against
the latent columns.  ``mode="joint"`` runs all eleven updates against the
full likelihood instead.

Proposal scales adapt toward target acceptance rates during burn-in only
and stay fixed afterward, so retained draws come from a fixed transition
kernel.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import gammaln

from . import diagnostics
from .estimators import scale_up_degree
from .kernels import negbin_logpmf, scaled_inv_chi2, validate_identifiability
from .types import (ArdDataset, IdentifiabilityError, ModelParams,
                    PopulationMargins, ProfileMatrix, ValidationError,
                    check_alignment)

MODES = ("two_stage", "joint")
MIXING_PROPOSALS = ("renormalize", "logistic_normal")

_SCALE_FLOOR = 1e-5
_SCALE_CEIL = 50.0


@dataclass(frozen=True)
class SamplerConfig:
    """Chain layout, proposal scales, adaptation, and mode switches.

    ``prior_only`` drops the likelihood and holds hyperparameters fixed,
    so retained draws target the (proper, fixed-hyper) prior; used to
    validate the Metropolis kernels.
    """

    chains: int = 3
    iterations: int = 2000
    burn_in: int = 1000
    thin: int = 1
    scale_degree: float = 0.25
    scale_mixing: float = 0.03
    scale_overdisp: float = 0.4
    scale_profile: float = 0.5
    adapt_window: int = 50
    target_accept_scalar: float = 0.44
    target_accept_row: float = 0.23
    seed: int = 0
    mode: str = "two_stage"
    mixing_proposal: str = "renormalize"
    prior_only: bool = False

    def __post_init__(self):
        if self.chains < 1:
            raise ValidationError("need at least one chain")
        if not 0 <= self.burn_in < self.iterations:
            raise ValidationError("burn-in must be shorter than the run")
        if self.thin < 1 or self.adapt_window < 1:
            raise ValidationError("thin and adapt_window must be >= 1")
        for name in ("scale_degree", "scale_mixing", "scale_overdisp",
                     "scale_profile"):
            if getattr(self, name) <= 0:
                raise ValidationError(f"{name} must be positive")
        for name in ("target_accept_scalar", "target_accept_row"):
            if not 0 < getattr(self, name) < 1:
                raise ValidationError(f"{name} must lie in (0, 1)")
        if self.mode not in MODES:
            raise ValidationError(f"mode must be one of {MODES}")
        if self.mixing_proposal not in MIXING_PROPOSALS:
            raise ValidationError(
                f"mixing_proposal must be one of {MIXING_PROPOSALS}")

    @property
    def n_retained(self) -> int:
        return (self.iterations - self.burn_in + self.thin - 1) // self.thin


#==============================================================================
# Log posterior
#==============================================================================


def _nb_core(y, mu, omega):
    """NB log mass without the gammaln(y+1) term (constant in parameters).

    Out-of-domain means (nonpositive or nonfinite) give -inf so Metropolis
    ratios reject instead of raising.  ``omega`` must already be > 1.
    """
    mu = np.asarray(mu, dtype=np.float64)
    bad = ~np.isfinite(mu) | (mu <= 0)
    safe_mu = np.where(bad, 1.0, mu)
    xi = safe_mu / (omega - 1.0)
    out = (gammaln(y + xi) - gammaln(xi)
           - xi * np.log(omega) + y * np.log1p(-1.0 / omega))
    if np.any(bad):
        out = np.where(bad, -np.inf, out)
    return out


def _norm_delta(new, old, mu, sigma):
    """Change in a normal log prior, shared sigma (normalizers cancel)."""
    return -0.5 * ((new - mu) ** 2 - (old - mu) ** 2) / sigma ** 2


def log_posterior(params: ModelParams, dataset: ArdDataset,
                  profile: ProfileMatrix) -> float:
    """Joint log density up to a constant, for a full parameter state.

    Sum of the NB likelihood over every cell, the log-normal degree
    prior, the normal mixing prior, the log-normal prior on masked
    profile cells, and the overdispersion term -2 log(omega) per column
    (flat prior on 1/omega plus its Jacobian).  Hyperpriors are flat and
    contribute nothing.
    """
    check_alignment(dataset, profile)
    h = params.latent_profile
    if h.shape != profile.values.shape:
        raise ValidationError("profile state has the wrong shape")
    mu = (params.degrees[:, None]
          * (params.mixing.m @ h)[dataset.ego_group, :])
    if np.any(mu <= 0):
        return -np.inf
    total = float(np.sum(negbin_logpmf(dataset.counts, mu,
                                       params.overdispersions[None, :])))
    total += float(np.sum(
        -0.5 * ((params.log_degrees - params.mu_d) / params.sigma_d) ** 2
        - np.log(params.sigma_d)))
    total += float(np.sum(
        -0.5 * ((params.mixing.m - params.mu_m[:, None])
                / params.sigma_m[:, None]) ** 2
        - np.log(params.sigma_m)[:, None]))
    mask = profile.latent_mask
    if np.any(mask):
        logh = np.log(h[mask])
        total += float(np.sum(
            -0.5 * ((logh - params.mu_h) / params.sigma_h) ** 2
            - np.log(params.sigma_h)))
    total += float(np.sum(-2.0 * np.log(params.overdispersions)))
    return total


#==============================================================================
# Sampler state
#==============================================================================


@dataclass
class SamplerState:
    """Mutable chain state plus the fixed data it conditions on.

    ``stage`` picks which columns the likelihood sees: "known" for the
    degree/mixing stage, "latent" for the profile stage, "joint" for all.
    """

    y: np.ndarray
    ego: np.ndarray
    group_idx: tuple
    known_cols: np.ndarray
    latent_cols: np.ndarray
    latent_mask: np.ndarray
    stage: str
    prior_only: bool
    mixing_proposal: str
    log_d: np.ndarray
    m: np.ndarray
    omega: np.ndarray
    h: np.ndarray
    mu_d: float
    sigma_d: float
    mu_m: np.ndarray
    sigma_m: np.ndarray
    mu_h: float
    sigma_h: float
    s_d: np.ndarray
    s_m: np.ndarray
    s_w: np.ndarray
    s_h: np.ndarray

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def n_ego_groups(self) -> int:
        return self.m.shape[0]

    @property
    def n_alter_groups(self) -> int:
        return self.m.shape[1]

    @property
    def active_cols(self) -> np.ndarray:
        if self.stage == "known":
            return self.known_cols
        if self.stage == "latent":
            return self.latent_cols
        return np.arange(self.y.shape[1])


def initial_state(dataset: ArdDataset, profile: ProfileMatrix,
                  margins: PopulationMargins, config: SamplerConfig,
                  rng: np.random.Generator, stage: str = None) -> SamplerState:
    """Build the starting state: scale-up degrees, random-mixing rows,
    overdispersions at 5, masked profile cells at the known-cell mean."""
    check_alignment(dataset, profile)
    n = dataset.n_respondents
    E, A = dataset.n_ego_groups, profile.n_alter_groups
    K = dataset.n_subpops

    d0 = scale_up_degree(dataset, margins, columns=profile.known_columns)
    positive = d0[d0 > 0]
    fill = float(np.median(positive)) if positive.size else 1.0
    d0 = np.where(d0 > 0, d0, fill)
    log_d = np.log(d0)

    # Population-share rows: every ego group starts at random mixing.
    shares = margins.alter_group_sizes / margins.alter_group_sizes.sum()
    m0 = np.tile(shares, (E, 1))
    m0 = m0 / m0.sum(axis=1, keepdims=True)
    h = np.array(profile.values)
    known_mean = float(np.mean(profile.known_values))
    h[profile.latent_mask] = max(known_mean, 1e-8)

    mu_d = float(log_d.mean())
    sigma_d = float(max(log_d.std(), 0.1))
    if config.prior_only:
        # Start at exact stationarity so prior-recovery checks are sharp.
        log_d = rng.normal(mu_d, sigma_d, size=n)

    return SamplerState(
        y=dataset.counts.astype(np.float64),
        ego=dataset.ego_group,
        group_idx=tuple(np.flatnonzero(dataset.ego_group == e) for e in range(E)),
        known_cols=profile.known_columns,
        latent_cols=profile.latent_columns,
        latent_mask=np.array(profile.latent_mask),
        stage=stage or ("known" if config.mode == "two_stage" else "joint"),
        prior_only=config.prior_only,
        mixing_proposal=config.mixing_proposal,
        log_d=log_d,
        m=m0,
        omega=np.full(K, 5.0),
        h=h,
        mu_d=mu_d,
        sigma_d=sigma_d,
        mu_m=m0.mean(axis=1),
        sigma_m=np.full(E, 0.1),
        mu_h=float(np.log(max(known_mean, 1e-8))),
        sigma_h=1.0,
        s_d=np.full(n, config.scale_degree),
        s_m=np.full(E, config.scale_mixing),
        s_w=np.full(K, config.scale_overdisp),
        s_h=np.full((A, K), config.scale_profile),
    )


class _Cache:
    """Current likelihood pieces for the active columns.

    ``mu`` is the (n, C) mean matrix, ``L`` the matching NB log-mass
    (without its constant term).  Updates splice in accepted rows and
    columns so the full matrix is recomputed only here.
    """

    __slots__ = ("cols", "pos", "yc", "mu", "L")

    def __init__(self, state: SamplerState):
        self.cols = state.active_cols
        self.pos = {int(k): j for j, k in enumerate(self.cols)}
        self.yc = state.y[:, self.cols]
        if state.prior_only:
            self.mu = None
            self.L = None
        else:
            reach = state.m @ state.h[:, self.cols]
            self.mu = np.exp(state.log_d)[:, None] * reach[state.ego, :]
            self.L = _nb_core(self.yc, self.mu, state.omega[self.cols])


#==============================================================================
# Metropolis blocks
#==============================================================================


def _update_degrees(state: SamplerState, cache: _Cache,
                    rng: np.random.Generator, idx=None) -> np.ndarray:
    idx = np.arange(state.n) if idx is None else np.asarray(idx, dtype=int)
    eps = rng.normal(0.0, state.s_d[idx])
    new_logd = state.log_d[idx] + eps
    logr = _norm_delta(new_logd, state.log_d[idx], state.mu_d, state.sigma_d)
    if not state.prior_only:
        with np.errstate(over="ignore"):
            mu_new = cache.mu[idx] * np.exp(eps)[:, None]
        L_new = _nb_core(cache.yc[idx], mu_new, state.omega[cache.cols])
        with np.errstate(invalid="ignore"):
            logr = logr + np.sum(L_new - cache.L[idx], axis=1)
    accept = np.log(rng.random(idx.shape[0])) < logr
    hit = idx[accept]
    state.log_d[hit] = new_logd[accept]
    if not state.prior_only and hit.size:
        cache.mu[hit] = mu_new[accept]
        cache.L[hit] = L_new[accept]
    return accept


def _update_mixing(state: SamplerState, cache: _Cache,
                   rng: np.random.Generator, rows=None) -> np.ndarray:
    E, A = state.m.shape
    rows = np.arange(E) if rows is None else np.asarray(rows, dtype=int)
    old = state.m[rows]
    if state.mixing_proposal == "renormalize":
        prop = old + rng.normal(0.0, 1.0, old.shape) * state.s_m[rows, None]
        feasible = np.all(prop > 0, axis=1)
        sums = np.where(feasible, prop.sum(axis=1), 1.0)
        prop = prop / sums[:, None]
        hastings = np.zeros(rows.shape[0])
    else:
        # Random walk on additive log-ratio coordinates; the Jacobian of
        # the simplex transform gives the exact correction below.
        z = np.log(old[:, :A - 1]) - np.log(old[:, A - 1:])
        z = z + rng.normal(0.0, 1.0, z.shape) * state.s_m[rows, None]
        ez = np.exp(np.hstack([z, np.zeros((rows.shape[0], 1))])
                    - np.max(z, axis=1, keepdims=True).clip(min=0))
        prop = ez / ez.sum(axis=1, keepdims=True)
        feasible = np.all(prop > 0, axis=1)
        hastings = np.where(
            feasible,
            np.sum(np.log(np.where(prop > 0, prop, 1.0)), axis=1)
            - np.sum(np.log(old), axis=1),
            0.0)

    dprior = np.sum(_norm_delta(prop, old, state.mu_m[rows, None],
                                state.sigma_m[rows, None]), axis=1)
    logr = np.where(feasible, dprior + hastings, -np.inf)
    accept = np.zeros(rows.shape[0], dtype=bool)
    u = np.log(rng.random(rows.shape[0]))

    if state.prior_only:
        accept = u < logr
        state.m[rows[accept]] = prop[accept]
        return accept

    d = np.exp(state.log_d)
    reach_new = prop @ state.h[:, cache.cols]            # (R, C)
    for r, e in enumerate(rows):
        if not feasible[r]:
            continue
        gi = state.group_idx[e]
        if gi.size == 0:
            dlik = 0.0
            mu_new = None
        else:
            mu_new = d[gi, None] * reach_new[r][None, :]
            L_new = _nb_core(cache.yc[gi], mu_new, state.omega[cache.cols])
            dlik = float(np.sum(L_new - cache.L[gi]))
        if u[r] < logr[r] + dlik:
            accept[r] = True
            state.m[e] = prop[r]
            if gi.size:
                cache.mu[gi] = mu_new
                cache.L[gi] = L_new
    return accept


def _update_overdisp(state: SamplerState, cache: _Cache,
                     rng: np.random.Generator, cols) -> np.ndarray:
    cols = np.asarray(cols, dtype=int)
    pos = np.array([cache.pos[int(k)] for k in cols])
    old = state.omega[cols]
    prop = old + rng.normal(0.0, state.s_w[cols])
    feasible = prop > 1.0
    safe = np.where(feasible, prop, 2.0)
    logr = np.where(feasible, -2.0 * (np.log(safe) - np.log(old)), -np.inf)
    if not state.prior_only:
        L_new = _nb_core(cache.yc[:, pos], cache.mu[:, pos], safe[None, :])
        logr = logr + np.where(feasible,
                               np.sum(L_new - cache.L[:, pos], axis=0), 0.0)
    accept = np.log(rng.random(cols.shape[0])) < logr
    state.omega[cols[accept]] = prop[accept]
    if not state.prior_only and np.any(accept):
        cache.L[:, pos[accept]] = L_new[:, accept]
    return accept


def _update_latent_row(state: SamplerState, cache: _Cache,
                       rng: np.random.Generator, a: int, cols) -> np.ndarray:
    cols = np.asarray(cols, dtype=int)
    old_h = state.h[a, cols]
    eps = rng.normal(0.0, state.s_h[a, cols])
    new_h = old_h * np.exp(eps)
    logr = _norm_delta(np.log(new_h), np.log(old_h), state.mu_h, state.sigma_h)
    if not state.prior_only:
        pos = np.array([cache.pos[int(k)] for k in cols])
        slope = np.exp(state.log_d) * state.m[state.ego, a]       # (n,)
        mu_new = cache.mu[:, pos] + slope[:, None] * (new_h - old_h)[None, :]
        L_new = _nb_core(cache.yc[:, pos], mu_new, state.omega[cols])
        with np.errstate(invalid="ignore"):
            logr = logr + np.sum(L_new - cache.L[:, pos], axis=0)
    accept = np.log(rng.random(cols.shape[0])) < logr
    state.h[a, cols[accept]] = new_h[accept]
    if not state.prior_only and np.any(accept):
        cache.mu[:, pos[accept]] = mu_new[:, accept]
        cache.L[:, pos[accept]] = L_new[:, accept]
    return accept


#==============================================================================
# Gibbs draws for the hyperparameters
#==============================================================================


def _update_hyper_degree(state: SamplerState, rng) -> None:
    n = state.n
    state.mu_d = float(rng.normal(state.log_d.mean(),
                                  state.sigma_d / np.sqrt(n)))
    if n >= 2:
        s2 = float(np.mean((state.log_d - state.mu_d) ** 2))
        state.sigma_d = float(np.sqrt(scaled_inv_chi2(
            n - 1, max(s2, 1e-12), rng)))


def _update_hyper_mixing(state: SamplerState, rng) -> None:
    E, A = state.m.shape
    means = state.m.mean(axis=1)
    state.mu_m = rng.normal(means, state.sigma_m / np.sqrt(A))
    if A >= 2:
        s2 = np.maximum(np.mean((state.m - state.mu_m[:, None]) ** 2, axis=1),
                        1e-12)
        draw = (A - 1) * s2 / rng.chisquare(A - 1, size=E)
        state.sigma_m = np.sqrt(draw)


def _update_hyper_profile(state: SamplerState, rng) -> None:
    mask = state.latent_mask
    count = int(mask.sum())
    if count == 0:
        return
    logh = np.log(state.h[mask])
    state.mu_h = float(rng.normal(logh.mean(),
                                  state.sigma_h / np.sqrt(count)))
    if count >= 2:
        s2 = float(np.mean((logh - state.mu_h) ** 2))
        state.sigma_h = float(np.sqrt(scaled_inv_chi2(
            count - 1, max(s2, 1e-12), rng)))


#==============================================================================
# Public single-site steps
#==============================================================================


def step_degree(state: SamplerState, i: int, rng) -> bool:
    """One Metropolis update of log d_i against the active columns."""
    return bool(_update_degrees(state, _Cache(state), rng, [i])[0])


def step_mixing_row(state: SamplerState, e: int, rng) -> bool:
    """One Metropolis update of mixing row e (perturb, renormalize)."""
    return bool(_update_mixing(state, _Cache(state), rng, [e])[0])


def step_overdispersion(state: SamplerState, k: int, rng) -> bool:
    """One Metropolis update of omega_k on the natural scale."""
    return bool(_update_overdisp(state, _Cache(state), rng, [k])[0])


def step_latent_profile(state: SamplerState, a: int, k: int, rng) -> bool:
    """One Metropolis update of a masked profile cell on the log scale."""
    if not state.latent_mask[a, k]:
        raise ValidationError(f"profile cell ({a}, {k}) is not latent")
    return bool(_update_latent_row(state, _Cache(state), rng, a, [k])[0])


def step_hyperparams(state: SamplerState, rng,
                     blocks: Sequence[str] = ("degree", "mixing",
                                              "profile")) -> None:
    """Exact conditional draws for the hyperparameters.

    ``blocks`` picks which families update: "degree" (mu_d, sigma_d),
    "mixing" (per-row mu_m, sigma_m), "profile" (mu_h, sigma_h).  The
    sigma draws are skipped when fewer than two values inform them.
    """
    for b in blocks:
        if b == "degree":
            _update_hyper_degree(state, rng)
        elif b == "mixing":
            _update_hyper_mixing(state, rng)
        elif b == "profile":
            _update_hyper_profile(state, rng)
        else:
            raise ValidationError(f"unknown hyper block {b!r}")


#==============================================================================
# Chain execution
#==============================================================================


@dataclass(frozen=True)
class PosteriorDraws:
    """Retained draws (chain, draw, ...) plus the acceptance ledger.

    Under two-stage estimation the degree/mixing arrays come from stage
    one and the latent-profile arrays from stage two, aligned by retained
    index; ``frozen_degrees`` and ``frozen_mixing`` record the stage-one
    posterior means the second stage conditioned on.
    """

    log_degrees: np.ndarray
    mixing: np.ndarray
    overdispersions: np.ndarray
    latent_h: np.ndarray
    latent_cols: np.ndarray
    hyper: np.ndarray
    hyper_names: tuple[str, ...]
    accept_rates: dict
    respondent_ids: tuple[str, ...]
    ego_group_names: tuple[str, ...]
    alter_group_names: tuple[str, ...]
    subpop_names: tuple[str, ...]
    mode: str
    frozen_degrees: np.ndarray | None = None
    frozen_mixing: np.ndarray | None = None

    @property
    def n_chains(self) -> int:
        return self.log_degrees.shape[0]

    @property
    def n_retained(self) -> int:
        return self.log_degrees.shape[1]

    def flat(self) -> tuple[np.ndarray, list[str]]:
        """All scalar parameters as (chains, draws, P) with column names."""
        C, T, n = self.log_degrees.shape
        E, A = self.mixing.shape[2], self.mixing.shape[3]
        K = self.overdispersions.shape[2]
        blocks = [self.log_degrees,
                  self.mixing.reshape(C, T, E * A),
                  self.overdispersions]
        names = [f"log_d[{r}]" for r in self.respondent_ids]
        names += [f"m[{e},{a}]" for e in self.ego_group_names
                  for a in self.alter_group_names]
        names += [f"omega[{k}]" for k in self.subpop_names]
        if self.latent_cols.size:
            H = self.latent_cols.shape[0]
            blocks.append(self.latent_h.reshape(C, T, A * H))
            names += [f"h[{a},{self.subpop_names[k]}]"
                      for a in self.alter_group_names
                      for k in self.latent_cols]
        blocks.append(self.hyper)
        names += list(self.hyper_names)
        return np.concatenate(blocks, axis=2), names

    def latent_quantiles(self, qs=(2.5, 25.0, 50.0, 75.0, 97.5)) -> np.ndarray:
        """Pooled quantiles of the latent profile cells, (A, H, len(qs))."""
        if not self.latent_cols.size:
            raise ValidationError("no latent columns were sampled")
        pooled = self.latent_h.reshape(-1, *self.latent_h.shape[2:])
        return np.percentile(pooled, qs, axis=0).transpose(1, 2, 0)


def _adapt(scales, acc, tries, target):
    rate = acc / max(tries, 1)
    return np.clip(scales * np.exp(rate - target), _SCALE_FLOOR, _SCALE_CEIL)


def _run_stage(state: SamplerState, config: SamplerConfig, rng,
               collect: dict) -> dict:
    """Run the update blocks for the state's stage, collecting draws.

    ``collect`` maps draw names to callables of the state.  Returns the
    stacked draws plus post-burn-in acceptance rates per block.
    """
    cache = _Cache(state)
    stage = state.stage
    E, A = state.m.shape
    K = state.y.shape[1]
    known, latent = state.known_cols, state.latent_cols
    do_dm = stage in ("known", "joint")
    do_h = stage in ("latent", "joint") and latent.size > 0

    out = {name: [] for name in collect}
    acc_d = np.zeros(state.n)
    acc_m = np.zeros(E)
    acc_w = np.zeros(K)
    acc_h = np.zeros((A, K))
    window = 0
    post = {"degree": [0, 0], "mixing_row": [0, 0],
            "overdisp_known": [0, 0], "latent_profile": [0, 0],
            "overdisp_latent": [0, 0]}

    def tally(block, acc):
        post[block][0] += int(np.sum(acc))
        post[block][1] += int(np.size(acc))

    for it in range(config.iterations):
        adapting = it < config.burn_in
        if do_dm:
            a1 = _update_degrees(state, cache, rng)
            a2 = _update_mixing(state, cache, rng)
            if not config.prior_only:
                _update_hyper_degree(state, rng)
                _update_hyper_mixing(state, rng)
            a3 = _update_overdisp(state, cache, rng, known)
            if adapting:
                acc_d += a1
                acc_m += a2
                acc_w[known] += a3
            else:
                tally("degree", a1)
                tally("mixing_row", a2)
                tally("overdisp_known", a3)
        if do_h:
            for a in range(A):
                row_cols = latent[state.latent_mask[a, latent]]
                if row_cols.size == 0:
                    continue
                ah = _update_latent_row(state, cache, rng, a, row_cols)
                if adapting:
                    acc_h[a, row_cols] += ah
                else:
                    tally("latent_profile", ah)
            if not config.prior_only:
                _update_hyper_profile(state, rng)
            a4 = _update_overdisp(state, cache, rng, latent)
            if adapting:
                acc_w[latent] += a4
            else:
                tally("overdisp_latent", a4)

        if adapting:
            window += 1
            if window == config.adapt_window or it == config.burn_in - 1:
                if do_dm:
                    state.s_d = _adapt(state.s_d, acc_d, window,
                                       config.target_accept_scalar)
                    state.s_m = _adapt(state.s_m, acc_m, window,
                                       config.target_accept_row)
                    state.s_w[known] = _adapt(state.s_w[known], acc_w[known],
                                              window,
                                              config.target_accept_scalar)
                if do_h:
                    state.s_h = _adapt(state.s_h, acc_h, window,
                                       config.target_accept_scalar)
                    state.s_w[latent] = _adapt(state.s_w[latent],
                                               acc_w[latent], window,
                                               config.target_accept_scalar)
                acc_d[:] = 0
                acc_m[:] = 0
                acc_w[:] = 0
                acc_h[:] = 0
                window = 0
        elif (it - config.burn_in) % config.thin == 0:
            for name, fn in collect.items():
                out[name].append(fn(state))

    stacked = {name: np.array(vals) for name, vals in out.items()}
    rates = {block: (c[0] / c[1] if c[1] else np.nan)
             for block, c in post.items()}
    return {"draws": stacked, "accept": rates}


def _run_chain(chain: int, config: SamplerConfig, dataset: ArdDataset,
               profile: ProfileMatrix, margins: PopulationMargins) -> dict:
    rng = np.random.default_rng([config.seed, chain])
    A = profile.n_alter_groups
    latent = profile.latent_columns
    H = latent.size

    state = initial_state(dataset, profile, margins, config, rng)
    collect_known = {
        "log_d": lambda s: s.log_d.copy(),
        "m": lambda s: s.m.copy(),
        "omega_known": lambda s: s.omega[s.known_cols].copy(),
        "mu_d": lambda s: s.mu_d,
        "sigma_d": lambda s: s.sigma_d,
        "mu_m": lambda s: s.mu_m.copy(),
        "sigma_m": lambda s: s.sigma_m.copy(),
    }
    collect_latent = {
        "h": lambda s: s.h[:, s.latent_cols].copy(),
        "omega_latent": lambda s: s.omega[s.latent_cols].copy(),
        "mu_h": lambda s: s.mu_h,
        "sigma_h": lambda s: s.sigma_h,
    }

    frozen_d = frozen_m = None
    if config.mode == "two_stage":
        state.stage = "known"
        stage1 = _run_stage(state, config, rng, collect_known)
        d_mean = np.exp(stage1["draws"]["log_d"]).mean(axis=0)
        m_mean = stage1["draws"]["m"].mean(axis=0)
        m_mean = m_mean / m_mean.sum(axis=1, keepdims=True)
        frozen_d, frozen_m = d_mean, m_mean
        state.log_d = np.log(d_mean)
        state.m = m_mean
        if H:
            state.stage = "latent"
            stage2 = _run_stage(state, config, rng, collect_latent)
        else:
            stage2 = {"draws": {}, "accept": {}}
        draws = dict(stage1["draws"])
        draws.update(stage2["draws"])
        accept = {k: v for k, v in stage1["accept"].items()
                  if k in ("degree", "mixing_row", "overdisp_known")}
        accept.update({k: v for k, v in stage2["accept"].items()
                       if k in ("latent_profile", "overdisp_latent")})
    else:
        state.stage = "joint"
        both = _run_stage(state, config, rng, {**collect_known,
                                               **collect_latent})
        draws = both["draws"]
        accept = both["accept"]

    T = config.n_retained
    if H == 0:
        draws.setdefault("h", np.zeros((T, A, 0)))
        draws.setdefault("omega_latent", np.zeros((T, 0)))
        draws.setdefault("mu_h", np.full(T, state.mu_h))
        draws.setdefault("sigma_h", np.full(T, state.sigma_h))
    return {"draws": draws, "accept": accept,
            "frozen_d": frozen_d, "frozen_m": frozen_m}


def run(config: SamplerConfig, dataset: ArdDataset, profile: ProfileMatrix,
        margins: PopulationMargins,
        workers: int = 1) -> tuple[PosteriorDraws, dict]:
    """Sample the posterior and report convergence diagnostics.

    Refuses rank-deficient known profiles (the mixing rows would be
    unidentified).  Returns retained draws plus a diagnostics dict with
    split R-hat and effective sample size per scalar parameter and the
    per-block acceptance ledger.  ``workers`` > 1 runs chains on worker
    threads; each chain owns its own (seed, chain) stream, so the draws
    do not depend on the thread count.
    """
    check_alignment(dataset, profile)
    report = validate_identifiability(profile)
    if report.flagged and not config.prior_only:
        raise IdentifiabilityError(f"identifiability gate failed: {report}")
    if margins.n_subpops != dataset.n_subpops:
        raise ValidationError("margins do not cover the response columns")
    known_mass = np.nansum(profile.values, axis=0)[profile.known_columns]
    if np.any(known_mass <= 0):
        k = profile.known_columns[int(np.argmin(known_mass))]
        raise ValidationError(
            f"known column {profile.subpop_names[k]!r} has zero mass in every "
            "alter group; expected counts would be zero")

    if workers > 1 and config.chains > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(
                lambda c: _run_chain(c, config, dataset, profile, margins),
                range(config.chains)))
    else:
        results = [_run_chain(c, config, dataset, profile, margins)
                   for c in range(config.chains)]

    latent = profile.latent_columns
    E = dataset.n_ego_groups
    hyper_names = (["mu_d", "sigma_d"]
                   + [f"mu_m[{e}]" for e in dataset.ego_group_names]
                   + [f"sigma_m[{e}]" for e in dataset.ego_group_names]
                   + ["mu_h", "sigma_h"])

    def stack(name):
        return np.stack([r["draws"][name] for r in results])

    C = config.chains
    T = config.n_retained
    K = dataset.n_subpops
    omega = np.zeros((C, T, K))
    known = profile.known_columns
    omega[:, :, known] = stack("omega_known")
    if latent.size:
        omega[:, :, latent] = stack("omega_latent")
    hyper = np.concatenate([
        stack("mu_d")[:, :, None],
        stack("sigma_d")[:, :, None],
        stack("mu_m"),
        stack("sigma_m"),
        stack("mu_h")[:, :, None],
        stack("sigma_h")[:, :, None],
    ], axis=2)

    draws = PosteriorDraws(
        log_degrees=stack("log_d"),
        mixing=stack("m"),
        overdispersions=omega,
        latent_h=stack("h"),
        latent_cols=latent,
        hyper=hyper,
        hyper_names=tuple(hyper_names),
        accept_rates={block: np.array([r["accept"].get(block, np.nan)
                                       for r in results])
                      for block in results[0]["accept"]},
        respondent_ids=dataset.respondent_ids,
        ego_group_names=dataset.ego_group_names,
        alter_group_names=profile.alter_group_names,
        subpop_names=dataset.subpop_names,
        mode=config.mode,
        frozen_degrees=(np.stack([r["frozen_d"] for r in results])
                        if results[0]["frozen_d"] is not None else None),
        frozen_mixing=(np.stack([r["frozen_m"] for r in results])
                       if results[0]["frozen_m"] is not None else None),
    )

    matrix, names = draws.flat()
    per_param = diagnostics.summarize(matrix, names) if T >= 4 and C >= 1 else {}
    rhats = np.array([v["rhat"] for v in per_param.values()])
    diag = {
        "rhat": {k: v["rhat"] for k, v in per_param.items()},
        "ess": {k: v["ess"] for k, v in per_param.items()},
        "share_rhat_below_1.1": (float(np.mean(rhats < 1.1))
                                 if rhats.size else float("nan")),
        "accept_rates": {k: v.tolist() for k, v in draws.accept_rates.items()},
        "identifiability": str(report),
        "mode": config.mode,
        "seed": config.seed,
    }
    return draws, diag
