"""Regime-comparison study: mechanics, determinism, and the ordering claim."""

import numpy as np
import pytest

from ardprofiles.simulate import default_margins, default_mixing
from ardprofiles.study import (StudyConfig, StudyResult, TARGETS, build_regime,
                               resolve_workers, run_study, summarize_rows,
                               summary_table, write_study, WORKERS_ENV)
from ardprofiles.types import ValidationError


def small_config(**kw):
    base = dict(n=30, n_known=8, n_latent=2, replicates=3, seed=5,
                regimes=("scaled_down", "flat"))
    base.update(kw)
    return StudyConfig(**base)


def test_rows_shape_and_order():
    result = run_study(small_config())
    assert len(result.rows) == 2 * 3 * 2
    keys = [(g, r, t) for g, r, t, _ in result.rows]
    expect = [(g, r, t)
              for g in ("scaled_down", "flat")
              for r in range(3)
              for t in TARGETS]
    assert keys == expect
    assert all(np.isfinite(e) and e >= 0 for *_, e in result.rows)


def test_determinism_and_worker_independence():
    a = run_study(small_config())
    b = run_study(small_config())
    c = run_study(small_config(workers=3))
    assert a.rows == b.rows
    assert a.rows == c.rows


def test_replicate_streams_do_not_depend_on_regime_set():
    # Each replicate draws from its own (seed, replicate) stream, so a
    # regime's error rows are unchanged by which other regimes ran or by
    # how many replicates follow.
    both = run_study(small_config())
    alone = run_study(small_config(regimes=("scaled_down",)))
    sd = [row for row in both.rows if row[0] == "scaled_down"]
    assert sd == list(alone.rows)
    fewer = run_study(small_config(replicates=2))
    assert list(fewer.rows) == [row for row in both.rows if row[1] < 2]


def test_summary_quartiles():
    result = run_study(small_config())
    for g in ("scaled_down", "flat"):
        for t in TARGETS:
            q = result.summary[g][t]
            assert q["n"] == 3
            assert q["q25"] <= q["median"] <= q["q75"]
    errs = sorted(e for g, r, t, e in result.rows
                  if g == "flat" and t == "latent")
    assert result.summary["flat"]["latent"]["median"] == pytest.approx(errs[1])


def test_summary_table_lines():
    result = run_study(small_config())
    lines = summary_table(result).splitlines()
    assert lines[0].split() == ["regime", "target", "q25", "median", "q75"]
    assert len(lines) == 1 + 2 * 2
    assert lines[1].startswith("scaled_down")


def test_write_study_roundtrip(tmp_path):
    result = run_study(small_config())
    manifest = write_study(tmp_path, result, seed=5, config={"n": 30})
    assert manifest["kind"] == "study"
    assert set(manifest["files"]) == {"errors.csv", "summary.csv"}
    with open(tmp_path / "errors.csv") as fh:
        lines = fh.read().strip().splitlines()
    assert lines[0] == "regime,replicate,target,error"
    parsed = [ln.split(",") for ln in lines[1:]]
    assert [(g, int(r), t, float(e)) for g, r, t, e in parsed] \
        == list(result.rows)


def test_config_validation():
    with pytest.raises(ValidationError, match="replicate"):
        small_config(replicates=0)
    with pytest.raises(ValidationError, match="bogus"):
        small_config(regimes=("bogus",))
    with pytest.raises(ValidationError, match="latent"):
        small_config(n_latent=0)
    with pytest.raises(ValidationError, match="overdispersion"):
        small_config(overdispersion=1.0)
    with pytest.raises(ValidationError, match="worker"):
        small_config(workers=0)


def test_resolve_workers(monkeypatch):
    monkeypatch.delenv(WORKERS_ENV, raising=False)
    assert resolve_workers() == 1
    assert resolve_workers(4) == 4
    monkeypatch.setenv(WORKERS_ENV, "6")
    assert resolve_workers() == 6
    assert resolve_workers(2) == 2        # explicit beats environment
    monkeypatch.setenv(WORKERS_ENV, "many")
    with pytest.raises(ValidationError, match="not an integer"):
        resolve_workers()
    monkeypatch.setenv(WORKERS_ENV, "0")
    with pytest.raises(ValidationError, match="positive"):
        resolve_workers()


def test_build_regime_structure():
    base = default_margins()
    mixing = default_mixing(base)
    setup = build_regime("violating", base, mixing, 9, 3)
    A = base.n_alter_groups
    assert setup.margins.n_subpops == 12
    assert list(setup.known_cols) == list(range(9))
    assert list(setup.latent_cols) == [9, 10, 11]
    assert setup.margins.subpop_names[9:] == ("latent1", "latent2", "latent3")
    # Latent cross counts are withheld from the margins but present in truth.
    assert np.all(np.isnan(setup.margins.cross_counts[:, 9:]))
    assert not np.any(np.isnan(setup.margins.cross_counts[:, :9]))
    assert setup.latent_truth.shape == (A, 3)
    assert np.array_equal(setup.generating_profile.values[:, 9:],
                          setup.latent_truth)
    assert not setup.generating_profile.latent_mask.any()
    assert np.array_equal(setup.estimation_profile.latent_columns,
                          setup.latent_cols)
    # Latent subpop totals are consistent with their truth profiles.
    expect = (setup.latent_truth * base.alter_group_sizes[:, None]).sum(axis=0)
    assert np.allclose(setup.margins.subpop_sizes[9:], expect)


def test_scaled_down_beats_flat_per_replicate():
    # Paired comparison on common draws: with the known block nearly
    # scaled-down the ratio rows track truth, and the latent regression
    # inherits that accuracy; a flat (rank-1) known block degrades both.
    config = StudyConfig(n=500, n_known=12, n_latent=6, replicates=100,
                         seed=2, regimes=("scaled_down", "flat"), workers=4)
    result = run_study(config)
    errs = {(g, r, t): e for g, r, t, e in result.rows}
    wins = sum(errs[("scaled_down", r, "latent")] < errs[("flat", r, "latent")]
               for r in range(100))
    assert wins >= 95
