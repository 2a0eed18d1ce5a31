"""File interchange: CSV matrices, JSON metadata, reproducibility manifest.

Formats (all CSV is RFC-4180, UTF-8, header row required):

  responses.csv   respondent_id, ego_group, <subpop>...   integer counts
  profiles.csv    alter_group, <subpop>...                reals or `?` (latent)
  margins.csv     level, name, count                      long format; level in
                  {total, alter_group, subpop, cross}; cross names are
                  "<alter_group>|<subpop>"
  draws.csv       chain, draw, <parameter>...             one row per retained
                                                          draw per chain

Floats are written in shortest round-trip decimal form, so re-reading
recovers them bit for bit and identical runs produce identical bytes.
The manifest records content hashes of every other file and carries no
timestamps; rerunning a seeded command reproduces it exactly.
"""

from __future__ import annotations

import csv
import hashlib
import json
import os
from dataclasses import dataclass, field

import numpy as np

from .types import (ArdDataset, PopulationMargins, ProfileMatrix,
                    ValidationError)

LATENT_TOKEN = "?"
_QUANTILES = (2.5, 25.0, 50.0, 75.0, 97.5)


def _fmt(x) -> str:
    """Shortest decimal that round-trips to the same float64."""
    return repr(float(x))


def _jsonify(obj):
    """Make numpy-bearing structures JSON-safe (NaN and inf become null)."""
    if isinstance(obj, dict):
        return {str(k): _jsonify(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonify(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonify(v) for v in obj.tolist()]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if np.isfinite(x) else None
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def _write_json(path, obj) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(_jsonify(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")


def _open_csv_writer(path):
    fh = open(path, "w", encoding="utf-8", newline="")
    return fh, csv.writer(fh, lineterminator="\n")


#==============================================================================
# Loaders
#==============================================================================


def _read_rows(path) -> list[list[str]]:
    try:
        with open(path, "r", encoding="utf-8", newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as err:
        raise ValidationError(f"cannot read {path}: {err}") from err
    if not rows:
        raise ValidationError(f"{path} is empty")
    return rows


def load_responses(path) -> ArdDataset:
    """Parse a responses CSV into a validated dataset.

    Header: ``respondent_id, ego_group, <subpop>...``.  Counts must be
    plain nonnegative integers; duplicate respondent ids are rejected.
    Errors name the offending line and column.
    """
    rows = _read_rows(path)
    header = [c.strip() for c in rows[0]]
    if len(header) < 3 or header[0] != "respondent_id" or header[1] != "ego_group":
        raise ValidationError(
            f"{path}: header must start with respondent_id, ego_group and "
            "list at least one subpopulation column")
    subpops = tuple(header[2:])
    if len(set(subpops)) != len(subpops):
        raise ValidationError(f"{path}: duplicate subpopulation columns")

    ids, groups, counts = [], [], []
    for ln, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != len(header):
            raise ValidationError(
                f"{path} line {ln}: expected {len(header)} fields, "
                f"got {len(row)}")
        ids.append(row[0].strip())
        groups.append(row[1].strip())
        vals = []
        for j, cell in enumerate(row[2:]):
            try:
                v = int(cell.strip())
            except ValueError:
                raise ValidationError(
                    f"{path} line {ln}, column {subpops[j]!r}: "
                    f"count {cell.strip()!r} is not an integer") from None
            if v < 0:
                raise ValidationError(
                    f"{path} line {ln}, column {subpops[j]!r}: "
                    f"negative count {v}")
            vals.append(v)
        counts.append(vals)
    if not counts:
        raise ValidationError(f"{path}: no data rows")
    if len(set(ids)) != len(ids):
        dupes = sorted({r for r in ids if ids.count(r) > 1})
        raise ValidationError(f"{path}: duplicate respondent ids {dupes[:5]}")

    ego_names = tuple(dict.fromkeys(groups))     # first-appearance order
    lookup = {name: e for e, name in enumerate(ego_names)}
    return ArdDataset(
        counts=np.array(counts, dtype=np.int64),
        ego_group=np.array([lookup[g] for g in groups], dtype=np.int64),
        subpop_names=subpops,
        ego_group_names=ego_names,
        respondent_ids=tuple(ids),
    )


def load_margins(path) -> PopulationMargins:
    """Parse a long-format margins CSV.

    Rows are (level, name, count) with level in total / alter_group /
    subpop / cross; cross rows name cells as ``<alter_group>|<subpop>``.
    Subpopulations without cross rows become latent (all-NaN) columns.
    """
    rows = _read_rows(path)
    header = [c.strip() for c in rows[0]]
    if header[:3] != ["level", "name", "count"]:
        raise ValidationError(f"{path}: header must be level,name,count")
    total = None
    alters: dict[str, float] = {}
    subpops: dict[str, float] = {}
    cross: dict[tuple[str, str], float] = {}
    for ln, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != 3:
            raise ValidationError(f"{path} line {ln}: expected 3 fields")
        level, name, count = (c.strip() for c in row)
        try:
            value = float(count)
        except ValueError:
            raise ValidationError(
                f"{path} line {ln}: count {count!r} is not numeric") from None
        if level == "total":
            if total is not None:
                raise ValidationError(f"{path} line {ln}: second total row")
            total = value
        elif level == "alter_group":
            if name in alters:
                raise ValidationError(f"{path} line {ln}: duplicate group {name!r}")
            alters[name] = value
        elif level == "subpop":
            if name in subpops:
                raise ValidationError(f"{path} line {ln}: duplicate subpop {name!r}")
            subpops[name] = value
        elif level == "cross":
            if "|" not in name:
                raise ValidationError(
                    f"{path} line {ln}: cross name must be alter|subpop")
            a, k = name.split("|", 1)
            if (a, k) in cross:
                raise ValidationError(f"{path} line {ln}: duplicate cell {name!r}")
            cross[(a, k)] = value
        else:
            raise ValidationError(f"{path} line {ln}: unknown level {level!r}")
    if total is None:
        raise ValidationError(f"{path}: missing total row")
    if not alters or not subpops:
        raise ValidationError(f"{path}: need alter_group and subpop rows")

    alter_names = tuple(alters)
    subpop_names = tuple(subpops)
    cc = None
    if cross:
        cc = np.full((len(alter_names), len(subpop_names)), np.nan)
        for (a, k), v in cross.items():
            if a not in alters:
                raise ValidationError(f"{path}: cross row names unknown group {a!r}")
            if k not in subpops:
                raise ValidationError(f"{path}: cross row names unknown subpop {k!r}")
            cc[alter_names.index(a), subpop_names.index(k)] = v
    return PopulationMargins(
        total_population=total,
        alter_group_sizes=np.array([alters[a] for a in alter_names]),
        subpop_sizes=np.array([subpops[k] for k in subpop_names]),
        cross_counts=cc,
        alter_group_names=alter_names,
        subpop_names=subpop_names,
    )


def load_profiles(path, margins: PopulationMargins | None = None,
                  tol: float = 1e-9) -> ProfileMatrix:
    """Parse a profiles CSV; ``?`` cells mark latent columns.

    When margins with cross counts are supplied, every known cell is
    checked against N_ak / N_a at the given tolerance (alter group and
    subpopulation names must then match the margins).
    """
    rows = _read_rows(path)
    header = [c.strip() for c in rows[0]]
    if len(header) < 2 or header[0] != "alter_group":
        raise ValidationError(
            f"{path}: header must be alter_group, <subpop>...")
    subpops = tuple(header[1:])
    alter_names = []
    values = []
    mask = []
    for ln, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != len(header):
            raise ValidationError(
                f"{path} line {ln}: expected {len(header)} fields")
        alter_names.append(row[0].strip())
        vrow, mrow = [], []
        for j, cell in enumerate(row[1:]):
            cell = cell.strip()
            if cell == LATENT_TOKEN:
                vrow.append(np.nan)
                mrow.append(True)
            else:
                try:
                    vrow.append(float(cell))
                except ValueError:
                    raise ValidationError(
                        f"{path} line {ln}, column {subpops[j]!r}: "
                        f"{cell!r} is neither a number nor {LATENT_TOKEN!r}"
                    ) from None
                mrow.append(False)
        values.append(vrow)
        mask.append(mrow)
    if not values:
        raise ValidationError(f"{path}: no data rows")
    profile = ProfileMatrix(np.array(values), np.array(mask, dtype=bool),
                            tuple(alter_names), subpops)

    if margins is not None and margins.cross_counts is not None:
        if margins.alter_group_names != profile.alter_group_names:
            raise ValidationError(
                "alter group order differs between profiles and margins")
        for k, name in enumerate(subpops):
            if name not in margins.subpop_names:
                continue
            mk = margins.subpop_names.index(name)
            if not margins.has_cross_counts(mk) or k in profile.latent_columns:
                continue
            expect = (margins.cross_counts[:, mk]
                      / margins.alter_group_sizes)
            gap = np.max(np.abs(profile.values[:, k] - expect))
            if gap > tol:
                a = int(np.argmax(np.abs(profile.values[:, k] - expect)))
                raise ValidationError(
                    f"profile column {name!r} disagrees with margins at "
                    f"{profile.alter_group_names[a]!r}: "
                    f"{profile.values[a, k]!r} vs N_ak/N_a = {expect[a]!r}")
    return profile


def load_draws(path) -> tuple[np.ndarray, list[str]]:
    """Read a draws CSV back into (chains, draws, params) plus names."""
    rows = _read_rows(path)
    header = rows[0]
    if header[:2] != ["chain", "draw"]:
        raise ValidationError(f"{path}: header must start with chain, draw")
    names = header[2:]
    data = {}
    for ln, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        c = int(row[0])
        data.setdefault(c, []).append([float(x) for x in row[2:]])
    chains = sorted(data)
    if chains != list(range(len(chains))):
        raise ValidationError(f"{path}: chain indices must be 0..C-1")
    arr = np.array([data[c] for c in chains])
    return arr, names


#==============================================================================
# Writers
#==============================================================================


def write_dataset(path, dataset: ArdDataset) -> None:
    fh, w = _open_csv_writer(path)
    with fh:
        w.writerow(["respondent_id", "ego_group", *dataset.subpop_names])
        for i in range(dataset.n_respondents):
            w.writerow([dataset.respondent_ids[i],
                        dataset.ego_group_names[dataset.ego_group[i]],
                        *map(str, dataset.counts[i].tolist())])


def write_profiles(path, profile: ProfileMatrix) -> None:
    fh, w = _open_csv_writer(path)
    with fh:
        w.writerow(["alter_group", *profile.subpop_names])
        for a in range(profile.n_alter_groups):
            row = [profile.alter_group_names[a]]
            for k in range(profile.n_subpops):
                row.append(LATENT_TOKEN if profile.latent_mask[a, k]
                           else _fmt(profile.values[a, k]))
            w.writerow(row)


def write_margins(path, margins: PopulationMargins) -> None:
    fh, w = _open_csv_writer(path)
    with fh:
        w.writerow(["level", "name", "count"])
        w.writerow(["total", "population", _fmt(margins.total_population)])
        for a, name in enumerate(margins.alter_group_names):
            w.writerow(["alter_group", name, _fmt(margins.alter_group_sizes[a])])
        for k, name in enumerate(margins.subpop_names):
            w.writerow(["subpop", name, _fmt(margins.subpop_sizes[k])])
        if margins.cross_counts is not None:
            for k, kname in enumerate(margins.subpop_names):
                if not margins.has_cross_counts(k):
                    continue
                for a, aname in enumerate(margins.alter_group_names):
                    w.writerow(["cross", f"{aname}|{kname}",
                                _fmt(margins.cross_counts[a, k])])


def write_matrix(path, matrix, row_label, row_names, col_names) -> None:
    """Generic labeled-matrix CSV: one row per row_name."""
    arr = np.asarray(matrix, dtype=np.float64)
    fh, w = _open_csv_writer(path)
    with fh:
        w.writerow([row_label, *col_names])
        for r, name in enumerate(row_names):
            w.writerow([name, *(_fmt(v) for v in arr[r])])


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _finish_manifest(out_dir, kind, files, config, seed) -> dict:
    from . import __version__
    manifest = {
        "kind": kind,
        "package_version": __version__,
        "seed": seed,
        "config": _jsonify(config) if config is not None else None,
        "files": {name: _sha256(os.path.join(out_dir, name))
                  for name in sorted(files)},
    }
    _write_json(os.path.join(out_dir, "manifest.json"), manifest)
    return manifest


def write_results(out_dir, kind, *, draws=None, estimates=None,
                  diagnostics=None, config=None, seed=None) -> dict:
    """Persist one command's outputs and return the manifest.

    ``kind`` is "mcmc" (pass ``draws``: PosteriorDraws), "simple" (pass
    ``estimates``: dict of arrays), or "simulate" (pass ``estimates``
    with dataset/profile/margins/truth entries).  ``diagnostics`` lands
    in diagnostics.json; the manifest hashes every written file.
    """
    os.makedirs(out_dir, exist_ok=True)
    files = []

    def path(name):
        files.append(name)
        return os.path.join(out_dir, name)

    if kind == "mcmc":
        if draws is None:
            raise ValidationError("mcmc results need posterior draws")
        matrix, names = draws.flat()
        fh, w = _open_csv_writer(path("draws.csv"))
        with fh:
            w.writerow(["chain", "draw", *names])
            C, T, _ = matrix.shape
            for c in range(C):
                for t in range(T):
                    w.writerow([c, t, *(_fmt(v) for v in matrix[c, t])])

        d = np.exp(draws.log_degrees.reshape(-1, draws.log_degrees.shape[2]))
        fh, w = _open_csv_writer(path("degrees.csv"))
        with fh:
            w.writerow(["respondent_id", "mean", "q2.5", "q50", "q97.5"])
            qs = np.percentile(d, [2.5, 50.0, 97.5], axis=0)
            for i, rid in enumerate(draws.respondent_ids):
                w.writerow([rid, _fmt(d[:, i].mean()), _fmt(qs[0, i]),
                            _fmt(qs[1, i]), _fmt(qs[2, i])])

        m = draws.mixing.reshape(-1, *draws.mixing.shape[2:])
        fh, w = _open_csv_writer(path("mixing.csv"))
        with fh:
            w.writerow(["ego_group", "alter_group", "mean", "q2.5", "q50",
                        "q97.5"])
            mq = np.percentile(m, [2.5, 50.0, 97.5], axis=0)
            for e, en in enumerate(draws.ego_group_names):
                for a, an in enumerate(draws.alter_group_names):
                    w.writerow([en, an, _fmt(m[:, e, a].mean()),
                                _fmt(mq[0, e, a]), _fmt(mq[1, e, a]),
                                _fmt(mq[2, e, a])])

        if draws.latent_cols.size:
            q = draws.latent_quantiles(_QUANTILES)
            fh, w = _open_csv_writer(path("latent_profiles.csv"))
            with fh:
                w.writerow(["subpop", "alter_group",
                            *(f"q{p:g}" for p in _QUANTILES)])
                for j, k in enumerate(draws.latent_cols):
                    for a, an in enumerate(draws.alter_group_names):
                        w.writerow([draws.subpop_names[k], an,
                                    *(_fmt(v) for v in q[a, j])])

    elif kind == "simple":
        if estimates is None:
            raise ValidationError("simple results need an estimates dict")
        fh, w = _open_csv_writer(path("degrees.csv"))
        with fh:
            w.writerow(["respondent_id", "degree"])
            for rid, v in zip(estimates["respondent_ids"],
                              estimates["degrees"]):
                w.writerow([rid, _fmt(v)])
        write_matrix(path("mixing_individual.csv"),
                     estimates["mixing_individual"], "respondent_id",
                     estimates["respondent_ids"],
                     estimates["alter_group_names"])
        write_matrix(path("mixing_groups.csv"), estimates["mixing_groups"],
                     "ego_group", estimates["ego_group_names"],
                     estimates["alter_group_names"])
        latent_names = estimates["latent_names"]
        if len(latent_names):
            fh, w = _open_csv_writer(path("latent_profiles.csv"))
            with fh:
                w.writerow(["subpop", "alter_group", "estimate",
                            "bootstrap_se"])
                est = estimates["latent_values"]
                se = estimates["latent_se"]
                for j, kname in enumerate(latent_names):
                    for a, an in enumerate(estimates["alter_group_names"]):
                        w.writerow([kname, an, _fmt(est[a, j]),
                                    _fmt(se[a, j])])

    elif kind == "simulate":
        if estimates is None:
            raise ValidationError("simulate results need the artifact dict")
        write_dataset(path("responses.csv"), estimates["dataset"])
        write_profiles(path("profiles.csv"), estimates["profile"])
        write_margins(path("margins.csv"), estimates["margins"])
        truth = estimates["truth"]
        fh, w = _open_csv_writer(path("truth_degrees.csv"))
        with fh:
            w.writerow(["respondent_id", "degree"])
            ds = estimates["dataset"]
            for rid, v in zip(ds.respondent_ids, np.exp(truth.log_degrees)):
                w.writerow([rid, _fmt(v)])
        write_matrix(path("truth_mixing.csv"), truth.mixing.m, "ego_group",
                     truth.mixing.ego_group_names,
                     truth.mixing.alter_group_names)
        write_matrix(path("truth_profile.csv"), truth.latent_profile,
                     "alter_group", estimates["profile"].alter_group_names,
                     estimates["profile"].subpop_names)
    else:
        raise ValidationError(f"unknown result kind {kind!r}")

    if diagnostics is not None:
        _write_json(path("diagnostics.json"), diagnostics)
    return _finish_manifest(out_dir, kind, files, config, seed)


#==============================================================================
# Project configuration
#==============================================================================


@dataclass(frozen=True)
class ProjectConfig:
    """File locations plus run settings, loadable from a JSON file."""

    responses: str
    profiles: str
    margins: str
    out_dir: str
    seed: int
    latent_columns: tuple[str, ...] = ()
    sampler: dict = field(default_factory=dict)
    estimator: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.seed is None:
            raise ValidationError("a seed is required; runs must be replayable")
        for label in ("responses", "profiles", "margins"):
            p = getattr(self, label)
            if not os.path.exists(p):
                raise ValidationError(f"{label} file not found: {p}")
        object.__setattr__(self, "latent_columns", tuple(self.latent_columns))

    @classmethod
    def from_json(cls, path) -> "ProjectConfig":
        try:
            with open(path, "r", encoding="utf-8") as fh:
                raw = json.load(fh)
        except OSError as err:
            raise ValidationError(f"cannot read config {path}: {err}") from err
        except json.JSONDecodeError as err:
            raise ValidationError(f"config {path} is not valid JSON: {err}") from err
        known = {"responses", "profiles", "margins", "out_dir", "seed",
                 "latent_columns", "sampler", "estimator"}
        extra = set(raw) - known
        if extra:
            raise ValidationError(f"config {path}: unknown keys {sorted(extra)}")
        missing = {"responses", "profiles", "margins", "out_dir", "seed"} - set(raw)
        if missing:
            raise ValidationError(f"config {path}: missing keys {sorted(missing)}")
        return cls(**raw)

    def check_latent_columns(self, dataset: ArdDataset) -> None:
        missing = [c for c in self.latent_columns
                   if c not in dataset.subpop_names]
        if missing:
            raise ValidationError(
                f"latent columns {missing} not present in the responses header")
