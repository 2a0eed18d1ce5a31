"""Command-line front end: simulate, fit (mcmc or simple), study, summarize.

Every command is deterministic given --seed and writes a manifest with
content hashes, so a results directory is reproducible from its manifest
alone.  Exit codes: 0 success, 2 input or configuration error, 3 model
precondition failure (rank-deficient known profiles).
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import __version__
from . import io as ioq
from . import mcmc
from .estimators import (bootstrap_latent_se, check_scaled_down, em_mixing,
                         estimate_latent_profiles, group_mixing,
                         scale_up_degree, simple_ratio_mixing)
from .kernels import validate_identifiability
from .simulate import REGIMES, SimConfig, default_degree_law, default_margins, \
    default_mixing, simulate
from .study import (WORKERS_ENV, StudyConfig, build_regime, resolve_workers,
                    run_study, summary_table, write_study)
from .types import IdentifiabilityError, ValidationError

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_PRECONDITION = 3


def _apply_config_file(args: argparse.Namespace) -> None:
    """Fold a JSON config into parsed flags; config values win.

    Keys use flag spelling with underscores (``burn_in`` for --burn-in).
    Unknown keys are rejected rather than ignored.
    """
    if not getattr(args, "config", None):
        return
    try:
        with open(args.config, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    except OSError as err:
        raise ValidationError(f"cannot read config {args.config}: {err}") from err
    except json.JSONDecodeError as err:
        raise ValidationError(
            f"config {args.config} is not valid JSON: {err}") from err
    if not isinstance(raw, dict):
        raise ValidationError(f"config {args.config} must hold a JSON object")
    for key, value in raw.items():
        attr = key.replace("-", "_")
        if not hasattr(args, attr) or attr in ("config", "func", "command"):
            raise ValidationError(f"config {args.config}: unknown key {key!r}")
        setattr(args, attr, value)


def _echo(args: argparse.Namespace, keys) -> dict:
    return {k: getattr(args, k) for k in keys}


def _print_scaled_down(margins, columns) -> None:
    usable = [int(k) for k in columns if margins.has_cross_counts(int(k))]
    if not usable:
        print("scaled-down check: margins carry no cross counts for the "
              "known columns; condition not checkable")
        return
    rep = check_scaled_down(margins, columns=usable)
    verdict = "holds" if rep.holds else "violated"
    print(f"scaled-down condition {verdict}: max deviation "
          f"{rep.max_deviation:.3g} against combined share "
          f"{rep.population_share:.3g} (tolerance {rep.tolerance:g})")


#------------------------------------------------------------------------------
# simulate
#------------------------------------------------------------------------------


def cmd_simulate(args) -> int:
    base = default_margins()
    mixing = default_mixing(base)
    setup = build_regime(args.regime, base, mixing, args.k, args.latent)
    mu_d, sigma_d = default_degree_law(args.mean_degree, args.sigma_d)
    E = mixing.n_ego_groups
    config = SimConfig(
        n=args.n,
        ego_group_probs=np.full(E, 1.0 / E),
        true_mixing=mixing,
        true_profile=setup.generating_profile,
        mu_d=mu_d,
        sigma_d=sigma_d,
        overdispersions=np.full(setup.generating_profile.n_subpops,
                                args.overdispersion),
        seed=args.seed,
        profile_regime=args.regime,
    )
    dataset, truth = simulate(config)
    echo = _echo(args, ("regime", "n", "k", "latent", "seed", "mean_degree",
                        "sigma_d", "overdispersion"))
    ioq.write_results(args.out, "simulate",
                      estimates={"dataset": dataset,
                                 "profile": setup.estimation_profile,
                                 "margins": setup.margins,
                                 "truth": truth},
                      config=echo, seed=args.seed)

    known = setup.known_cols
    print(f"simulated {dataset.n_respondents} respondents, "
          f"{E} ego groups, {mixing.n_alter_groups} alter groups, "
          f"{len(known)} known + {args.latent} latent columns "
          f"({args.regime} regime)")
    print(f"mean degree {np.exp(truth.log_degrees).mean():.1f}, "
          f"mean known ties per respondent "
          f"{dataset.counts[:, known].sum(axis=1).mean():.1f}")
    _print_scaled_down(setup.margins, known)
    print(validate_identifiability(setup.estimation_profile))
    print(f"wrote {args.out}")
    return EXIT_OK


#------------------------------------------------------------------------------
# fit
#------------------------------------------------------------------------------


def _apply_project_config(args) -> None:
    """fit accepts a ProjectConfig JSON; its values override flags."""
    if not getattr(args, "config", None):
        return
    cfg = ioq.ProjectConfig.from_json(args.config)
    args.responses = cfg.responses
    args.profiles = cfg.profiles
    args.margins = cfg.margins
    args.out = cfg.out_dir
    args.seed = cfg.seed
    if cfg.latent_columns:
        args.latent = ",".join(cfg.latent_columns)
    for key, value in {**cfg.sampler, **cfg.estimator}.items():
        attr = key.replace("-", "_")
        if not hasattr(args, attr):
            raise ValidationError(
                f"config {args.config}: unknown setting {key!r}")
        setattr(args, attr, value)


def _load_fit_inputs(args):
    for label in ("responses", "profiles", "margins"):
        if getattr(args, label) is None:
            raise ValidationError(
                f"--{label} is required (or supply it via --config)")
    if args.out is None:
        raise ValidationError("--out is required")
    if args.seed is None:
        raise ValidationError("--seed is required; runs must be replayable")
    margins = ioq.load_margins(args.margins)
    dataset = ioq.load_responses(args.responses)
    profile = ioq.load_profiles(args.profiles, margins=margins)
    if args.latent:
        names = [s.strip() for s in args.latent.split(",") if s.strip()]
        missing = [nm for nm in names if nm not in dataset.subpop_names]
        if missing:
            raise ValidationError(
                f"latent columns {missing} not present in the responses header")
        profile = profile.mask_columns(names)
    return dataset, profile, margins


def cmd_fit(args) -> int:
    _apply_project_config(args)
    dataset, profile, margins = _load_fit_inputs(args)
    known = profile.known_columns
    _print_scaled_down(margins, known)

    if args.pipeline == "simple":
        return _fit_simple(args, dataset, profile, margins)
    return _fit_mcmc(args, dataset, profile, margins)


def _fit_simple(args, dataset, profile, margins) -> int:
    rank = validate_identifiability(profile)
    print(rank)
    known = profile.known_columns
    degrees = scale_up_degree(dataset, margins, columns=known)

    em_info = {}
    if args.mixing == "em":
        res = em_mixing(dataset, profile, margins, columns=known)
        rows, n_skipped = res.rows, res.n_skipped
        em_info = {"em_iterations": res.n_iter, "em_converged": res.converged}
    else:
        rows = simple_ratio_mixing(dataset, profile, margins, columns=known)
        n_skipped = int(np.isnan(rows).any(axis=1).sum())
    grouped = group_mixing(rows, dataset.ego_group, dataset.n_ego_groups)

    latent = profile.latent_columns
    latent_values = np.zeros((profile.n_alter_groups, 0))
    latent_se = latent_values
    extra = {}
    if latent.size:
        fit = estimate_latent_profiles(dataset, profile, degrees, rows,
                                       columns=latent)
        for msg in fit.warnings:
            print(f"warning: {msg}")
        latent_values = fit.profile.values[:, latent]
        latent_se = bootstrap_latent_se(
            dataset, profile, degrees, rows, columns=latent,
            n_boot=args.boot, rng=np.random.default_rng([args.seed, 1]))
        extra = {"design_condition_number": fit.condition_number,
                 "respondents_used": fit.n_used,
                 "warnings": list(fit.warnings)}

    estimates = {
        "respondent_ids": dataset.respondent_ids,
        "degrees": degrees,
        "mixing_individual": rows,
        "mixing_groups": grouped,
        "ego_group_names": dataset.ego_group_names,
        "alter_group_names": profile.alter_group_names,
        "latent_names": tuple(profile.subpop_names[k] for k in latent),
        "latent_values": latent_values,
        "latent_se": latent_se,
    }
    diag = {"pipeline": "simple", "mixing_method": args.mixing,
            "respondents_skipped_zero_ties": n_skipped,
            "identifiability": str(rank), **em_info, **extra}
    echo = _echo(args, ("pipeline", "responses", "profiles", "margins",
                        "seed", "mixing", "boot", "latent"))
    ioq.write_results(args.out, "simple", estimates=estimates,
                      diagnostics=diag, config=echo, seed=args.seed)
    print(f"estimated degrees for {dataset.n_respondents} respondents "
          f"({n_skipped} skipped for zero known ties); wrote {args.out}")
    return EXIT_OK


def _fit_mcmc(args, dataset, profile, margins) -> int:
    burn = args.burn_in if args.burn_in is not None else args.iters // 2
    config = mcmc.SamplerConfig(
        chains=args.chains, iterations=args.iters, burn_in=burn,
        thin=args.thin, seed=args.seed, mode=args.mode,
        mixing_proposal=args.mixing_proposal)
    draws, diag = mcmc.run(config, dataset, profile, margins,
                           workers=resolve_workers(args.workers))
    echo = _echo(args, ("pipeline", "responses", "profiles", "margins",
                        "seed", "chains", "iters", "thin", "mode",
                        "mixing_proposal", "latent"))
    echo["burn_in"] = burn
    ioq.write_results(args.out, "mcmc", draws=draws, diagnostics=diag,
                      config=echo, seed=args.seed)

    rhats = np.array(list(diag["rhat"].values()))
    if rhats.size:
        worst = max(diag["rhat"], key=diag["rhat"].get)
        print(f"R-hat: {100 * diag['share_rhat_below_1.1']:.1f}% of "
              f"{rhats.size} parameters below 1.1; worst {worst} = "
              f"{diag['rhat'][worst]:.3f}")
    print(f"acceptance: " + ", ".join(
        f"{k} {np.nanmean(v):.2f}" for k, v in draws.accept_rates.items()))
    print(f"wrote {args.out}")
    return EXIT_OK


#------------------------------------------------------------------------------
# study
#------------------------------------------------------------------------------


def cmd_study(args) -> int:
    regimes = REGIMES if args.regimes == "all" else tuple(
        s.strip() for s in args.regimes.split(",") if s.strip())
    config = StudyConfig(
        n=args.n, n_known=args.k, n_latent=args.latent,
        replicates=args.reps, seed=args.seed, regimes=regimes,
        overdispersion=args.overdispersion, workers=args.workers)
    result = run_study(config)
    echo = _echo(args, ("n", "k", "latent", "reps", "seed", "regimes",
                        "overdispersion"))
    write_study(args.out, result, seed=args.seed, config=echo)
    print(summary_table(result))
    print(f"wrote {args.out} ({len(result.rows)} error rows)")
    return EXIT_OK


#------------------------------------------------------------------------------
# summarize
#------------------------------------------------------------------------------


def _load_latent_table(results_dir):
    manifest_path = os.path.join(results_dir, "manifest.json")
    if not os.path.isfile(manifest_path):
        raise ValidationError(
            f"{results_dir} is not a results directory (no manifest.json)")
    with open(manifest_path, "r", encoding="utf-8") as fh:
        manifest = json.load(fh)
    path = os.path.join(results_dir, "latent_profiles.csv")
    if not os.path.isfile(path):
        return manifest, None, None
    rows = ioq._read_rows(path)
    return manifest, rows[0], rows[1:]


def _median_map(header, rows) -> dict:
    """(subpop, alter_group) -> central estimate, for either results kind."""
    if "q50" in header:
        col = header.index("q50")
    elif "estimate" in header:
        col = header.index("estimate")
    else:
        raise ValidationError("latent profile table has no central column")
    return {(r[0], r[1]): float(r[col]) for r in rows}


def cmd_summarize(args) -> int:
    manifest, header, rows = _load_latent_table(args.results)
    print(f"results kind: {manifest['kind']}, seed {manifest['seed']}")
    if header is None:
        print("no latent columns in this run")
        return EXIT_OK

    by_subpop: dict[str, list] = {}
    for r in rows:
        by_subpop.setdefault(r[0], []).append(r)
    for subpop, table in by_subpop.items():
        print(f"\nlatent profile h(a, {subpop}):")
        widths = [max(len(header[j]), 12) for j in range(1, len(header))]
        print("  " + "  ".join(h.rjust(w) for h, w in
                               zip(header[1:], widths)))
        for r in table:
            cells = [r[1].rjust(widths[0])]
            cells += [f"{float(v):.6g}".rjust(w)
                      for v, w in zip(r[2:], widths[1:])]
            print("  " + "  ".join(cells))

    if args.diff:
        _, other_header, other_rows = _load_latent_table(args.diff)
        if other_header is None:
            raise ValidationError(f"{args.diff} has no latent profile table")
        mine = _median_map(header, rows)
        theirs = _median_map(other_header, other_rows)
        shared = [key for key in mine if key in theirs]
        if not shared:
            raise ValidationError("no shared latent cells to diff")
        print("\ncentral-estimate differences vs " + args.diff + ":")
        print(f"  {'subpop':<12} {'alter_group':<12} {'abs diff':>12}")
        for key in shared:
            print(f"  {key[0]:<12} {key[1]:<12} "
                  f"{abs(mine[key] - theirs[key]):>12.6g}")
    return EXIT_OK


#------------------------------------------------------------------------------
# Entry point
#------------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="ardprofiles",
        description="Estimate degrees, mixing, and latent demographic "
                    "profiles from aggregated relational data.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    ps = sub.add_parser("simulate", help="draw a synthetic survey")
    ps.add_argument("--regime", required=True, choices=REGIMES)
    ps.add_argument("--n", type=int, default=500)
    ps.add_argument("--k", type=int, default=12,
                    help="known subpopulation columns")
    ps.add_argument("--latent", type=int, default=6,
                    help="latent subpopulation columns")
    ps.add_argument("--seed", type=int, default=0)
    ps.add_argument("--mean-degree", type=float, default=750.0)
    ps.add_argument("--sigma-d", type=float, default=0.6)
    ps.add_argument("--overdispersion", type=float, default=5.0)
    ps.add_argument("--out", required=True)
    ps.add_argument("--config", help="JSON file whose keys override flags")
    ps.set_defaults(func=cmd_simulate, needs_merge=True)

    pf = sub.add_parser("fit", help="estimate from survey files")
    pf.add_argument("pipeline", choices=("mcmc", "simple"))
    pf.add_argument("--responses")
    pf.add_argument("--profiles")
    pf.add_argument("--margins")
    pf.add_argument("--out")
    pf.add_argument("--seed", type=int)
    pf.add_argument("--latent", default="",
                    help="comma-separated subpop names to treat as latent")
    pf.add_argument("--config", help="ProjectConfig JSON; overrides flags")
    pf.add_argument("--chains", type=int, default=3)
    pf.add_argument("--iters", type=int, default=2000)
    pf.add_argument("--burn-in", type=int, default=None,
                    help="default: half the iterations")
    pf.add_argument("--thin", type=int, default=1)
    pf.add_argument("--mode", choices=mcmc.MODES, default="two_stage")
    pf.add_argument("--mixing-proposal", choices=mcmc.MIXING_PROPOSALS,
                    default="renormalize")
    pf.add_argument("--workers", type=int, default=None,
                    help=f"chain threads (or set {WORKERS_ENV})")
    pf.add_argument("--mixing", choices=("ratio", "em"), default="ratio",
                    help="simple pipeline mixing estimator")
    pf.add_argument("--boot", type=int, default=200,
                    help="bootstrap resamples for latent SEs")
    pf.set_defaults(func=cmd_fit)

    pt = sub.add_parser("study", help="replicated regime comparison")
    pt.add_argument("--reps", type=int, default=100)
    pt.add_argument("--regimes", default="all",
                    help="'all' or comma-separated regime names")
    pt.add_argument("--seed", type=int, default=1)
    pt.add_argument("--n", type=int, default=500)
    pt.add_argument("--k", type=int, default=12)
    pt.add_argument("--latent", type=int, default=6)
    pt.add_argument("--overdispersion", type=float, default=5.0)
    pt.add_argument("--workers", type=int, default=None)
    pt.add_argument("--out", required=True)
    pt.add_argument("--config", help="JSON file whose keys override flags")
    pt.set_defaults(func=cmd_study, needs_merge=True)

    pm = sub.add_parser("summarize", help="tabulate a results directory")
    pm.add_argument("--results", required=True)
    pm.add_argument("--diff", help="second results dir to compare against")
    pm.set_defaults(func=cmd_summarize)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if getattr(args, "needs_merge", False):
            _apply_config_file(args)
        return args.func(args)
    except IdentifiabilityError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_PRECONDITION
    except (ValidationError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
