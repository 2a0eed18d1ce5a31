"""End-to-end runs of the command line through ``main(argv)``."""

import json
import os

import pytest

from ardprofiles.cli import main

SIM_FILES = ("responses.csv", "profiles.csv", "margins.csv",
             "truth_degrees.csv", "truth_mixing.csv", "truth_profile.csv",
             "manifest.json")


def run_simulate(out, seed=7, regime="scaled_down", n=40, extra=()):
    return main(["simulate", "--regime", regime, "--n", str(n),
                 "--k", "8", "--latent", "2", "--seed", str(seed),
                 "--out", str(out), *extra])


@pytest.fixture(scope="module")
def sim_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("sim")
    assert run_simulate(d) == 0
    return d


def fit_args(sim, out, pipeline="simple"):
    return ["fit", pipeline,
            "--responses", str(sim / "responses.csv"),
            "--profiles", str(sim / "profiles.csv"),
            "--margins", str(sim / "margins.csv"),
            "--seed", "3", "--out", str(out)]


#------------------------------------------------------------------------------
# simulate
#------------------------------------------------------------------------------


def test_simulate_writes_artifacts(sim_dir, capsys):
    for name in SIM_FILES:
        assert (sim_dir / name).is_file()
    with open(sim_dir / "manifest.json") as fh:
        manifest = json.load(fh)
    assert manifest["kind"] == "simulate"
    assert manifest["seed"] == 7
    assert manifest["config"]["regime"] == "scaled_down"
    assert set(manifest["files"]) == set(SIM_FILES) - {"manifest.json"}


def test_simulate_same_seed_byte_identical(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert run_simulate(a) == 0
    assert run_simulate(b) == 0
    for name in SIM_FILES:
        with open(a / name, "rb") as fh:
            left = fh.read()
        with open(b / name, "rb") as fh:
            right = fh.read()
        assert left == right, name


def test_simulate_seed_changes_output(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert run_simulate(a, seed=7) == 0
    assert run_simulate(b, seed=8) == 0
    with open(a / "responses.csv", "rb") as fh:
        left = fh.read()
    with open(b / "responses.csv", "rb") as fh:
        right = fh.read()
    assert left != right


def test_simulate_flat_flags_rank(tmp_path, capsys):
    assert run_simulate(tmp_path / "f", regime="flat") == 0
    out = capsys.readouterr().out
    assert "DEFICIENT" in out
    assert "flat regime" in out


def test_simulate_scaled_down_reports_condition(sim_dir, tmp_path, capsys):
    assert run_simulate(tmp_path / "s") == 0
    out = capsys.readouterr().out
    assert "scaled-down condition holds" in out
    assert "simulated 40 respondents" in out


def test_simulate_rejects_zero_respondents(tmp_path, capsys):
    code = run_simulate(tmp_path / "z", n=0)
    assert code == 2
    assert "error:" in capsys.readouterr().err


def test_simulate_config_file_overrides_flags(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"n": 25, "seed": 11}))
    d = tmp_path / "c"
    assert run_simulate(d, extra=("--config", str(cfg))) == 0
    assert "simulated 25 respondents" in capsys.readouterr().out
    with open(d / "manifest.json") as fh:
        assert json.load(fh)["seed"] == 11


def test_simulate_config_unknown_key(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"respondents": 25}))
    assert run_simulate(tmp_path / "c", extra=("--config", str(cfg))) == 2
    assert "respondents" in capsys.readouterr().err


#------------------------------------------------------------------------------
# fit
#------------------------------------------------------------------------------


def test_fit_simple_end_to_end(sim_dir, tmp_path, capsys):
    out = tmp_path / "fit"
    assert main(fit_args(sim_dir, out)) == 0
    text = capsys.readouterr().out
    assert "estimated degrees for 40 respondents" in text
    for name in ("degrees.csv", "mixing_individual.csv", "mixing_groups.csv",
                 "latent_profiles.csv", "diagnostics.json", "manifest.json"):
        assert (out / name).is_file()
    with open(out / "latent_profiles.csv") as fh:
        header = fh.readline().strip()
    assert header == "subpop,alter_group,estimate,bootstrap_se"
    with open(out / "diagnostics.json") as fh:
        diag = json.load(fh)
    assert diag["pipeline"] == "simple"
    assert diag["mixing_method"] == "ratio"


def test_fit_simple_em_mixing(sim_dir, tmp_path, capsys):
    out = tmp_path / "fit"
    assert main(fit_args(sim_dir, out) + ["--mixing", "em"]) == 0
    with open(out / "diagnostics.json") as fh:
        diag = json.load(fh)
    assert diag["mixing_method"] == "em"
    assert diag["em_iterations"] >= 1


def test_fit_requires_margins(sim_dir, tmp_path, capsys):
    code = main(["fit", "simple",
                 "--responses", str(sim_dir / "responses.csv"),
                 "--profiles", str(sim_dir / "profiles.csv"),
                 "--seed", "3", "--out", str(tmp_path / "x")])
    assert code == 2
    assert "--margins" in capsys.readouterr().err


def test_fit_unknown_latent_name(sim_dir, tmp_path, capsys):
    code = main(fit_args(sim_dir, tmp_path / "x") + ["--latent", "ghost"])
    assert code == 2
    assert "ghost" in capsys.readouterr().err


def test_fit_mcmc_smoke(sim_dir, tmp_path, capsys):
    out = tmp_path / "fit"
    code = main(fit_args(sim_dir, out, pipeline="mcmc")
                + ["--chains", "2", "--iters", "40", "--burn-in", "20"])
    assert code == 0
    text = capsys.readouterr().out
    assert "R-hat:" in text
    assert "acceptance:" in text
    for name in ("draws.csv", "degrees.csv", "mixing.csv",
                 "latent_profiles.csv", "diagnostics.json"):
        assert (out / name).is_file()
    with open(out / "manifest.json") as fh:
        manifest = json.load(fh)
    assert manifest["kind"] == "mcmc"
    assert manifest["config"]["burn_in"] == 20


def test_fit_mcmc_flat_refuses(tmp_path, capsys):
    sim = tmp_path / "sim"
    assert run_simulate(sim, regime="flat") == 0
    code = main(fit_args(sim, tmp_path / "fit", pipeline="mcmc")
                + ["--chains", "1", "--iters", "10"])
    assert code == 3
    assert "rank" in capsys.readouterr().err


def test_fit_project_config(sim_dir, tmp_path, capsys):
    out = tmp_path / "fit"
    cfg = tmp_path / "project.json"
    cfg.write_text(json.dumps({
        "responses": str(sim_dir / "responses.csv"),
        "profiles": str(sim_dir / "profiles.csv"),
        "margins": str(sim_dir / "margins.csv"),
        "out_dir": str(out),
        "seed": 19,
        "estimator": {"mixing": "em", "boot": 25},
    }))
    assert main(["fit", "simple", "--config", str(cfg)]) == 0
    with open(out / "manifest.json") as fh:
        manifest = json.load(fh)
    assert manifest["seed"] == 19
    assert manifest["config"]["mixing"] == "em"
    assert manifest["config"]["boot"] == 25


#------------------------------------------------------------------------------
# study
#------------------------------------------------------------------------------


def test_study_smoke(tmp_path, capsys):
    out = tmp_path / "study"
    code = main(["study", "--reps", "2", "--regimes", "scaled_down,flat",
                 "--n", "30", "--k", "8", "--latent", "2", "--seed", "3",
                 "--out", str(out)])
    assert code == 0
    text = capsys.readouterr().out
    assert "regime" in text and "median" in text
    assert "scaled_down" in text
    with open(out / "errors.csv") as fh:
        lines = fh.read().strip().splitlines()
    assert lines[0] == "regime,replicate,target,error"
    assert len(lines) == 1 + 2 * 2 * 2      # regimes x reps x targets
    with open(out / "manifest.json") as fh:
        assert json.load(fh)["kind"] == "study"


def test_study_unknown_regime(tmp_path, capsys):
    code = main(["study", "--reps", "1", "--regimes", "bogus",
                 "--out", str(tmp_path / "s")])
    assert code == 2
    assert "bogus" in capsys.readouterr().err


#------------------------------------------------------------------------------
# summarize
#------------------------------------------------------------------------------


def test_summarize_simple_results(sim_dir, tmp_path, capsys):
    out = tmp_path / "fit"
    assert main(fit_args(sim_dir, out)) == 0
    capsys.readouterr()
    assert main(["summarize", "--results", str(out)]) == 0
    text = capsys.readouterr().out
    assert "results kind: simple, seed 3" in text
    assert "latent profile h(a, latent1)" in text
    assert "estimate" in text


def test_summarize_diff(sim_dir, tmp_path, capsys):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(fit_args(sim_dir, a)) == 0
    assert main(fit_args(sim_dir, b, pipeline="mcmc")
                + ["--chains", "1", "--iters", "30", "--burn-in", "10"]) == 0
    capsys.readouterr()
    assert main(["summarize", "--results", str(b), "--diff", str(a)]) == 0
    text = capsys.readouterr().out
    assert "results kind: mcmc" in text
    assert "central-estimate differences" in text
    assert "latent1" in text


def test_summarize_rejects_non_results_dir(tmp_path, capsys):
    code = main(["summarize", "--results", str(tmp_path)])
    assert code == 2
    assert "manifest.json" in capsys.readouterr().err


def test_summarize_simulate_run_has_no_latent_table(sim_dir, capsys):
    assert main(["summarize", "--results", str(sim_dir)]) == 0
    assert "no latent columns" in capsys.readouterr().out


#------------------------------------------------------------------------------
# parser plumbing
#------------------------------------------------------------------------------


def test_version_flag(capsys):
    with pytest.raises(SystemExit) as err:
        main(["--version"])
    assert err.value.code == 0
    assert capsys.readouterr().out.strip()


def test_missing_subcommand_is_usage_error(capsys):
    with pytest.raises(SystemExit) as err:
        main([])
    assert err.value.code == 2
