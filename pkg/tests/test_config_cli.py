import numpy as np
import pytest

from sizestructured import io
from sizestructured.cli import EXIT_CONFIG, EXIT_HYPOTHESIS, EXIT_NUMERICAL, EXIT_OK, main
from sizestructured.config import TOLERANCE_ENV, apply_overrides, build_config, load_config, parse_text
from sizestructured.errors import ConfigError
from sizestructured.numerics import TOLERANCE_PROFILES

FAST = ["--override", "grids.dt=0.03125"]


def write_cfg(tmp_path, text, name="scenario.cfg"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def body_lines(path):
    return [ln for ln in path.read_text().splitlines() if not ln.startswith("# created")]


class TestParsing:
    def test_sections_and_comments(self):
        v = parse_text("# comment\n; also\nhorizon = 2\n[model]\nfamily = daphnia_vonbertalanffy\nparam.beta_max = 3\n")
        assert v == {"horizon": 2.0, "model.family": "daphnia_vonbertalanffy", "model.param.beta_max": 3.0}

    @pytest.mark.parametrize(
        "text, message",
        [
            ("horizon = 1\nbogus = 3\n", r":2: unknown key 'bogus'"),
            ("horizon = soon\n", r":1: horizon expects float"),
            ("horizon 1\n", r":1: expected 'key = value'"),
            ("horizon = 1\nhorizon = 2\n", r":2: duplicate key"),
            ("[ ]\n", r":1: empty section"),
            ("grids.n_x = 2.5\n", r"grids.n_x expects int"),
        ],
    )
    def test_errors_carry_line_numbers(self, text, message):
        with pytest.raises(ConfigError, match=message):
            parse_text(text, "f.cfg")

    def test_overrides_win(self):
        v = apply_overrides({"horizon": 1.0}, ["horizon=3", "grids.dt = 0.5"])
        assert v == {"horizon": 3.0, "grids.dt": 0.5}
        with pytest.raises(ConfigError):
            apply_overrides({}, ["horizon"])
        with pytest.raises(ConfigError, match="unknown key"):
            apply_overrides({}, ["nope=1"])


class TestBuildConfig:
    def test_defaults(self):
        cfg = build_config({})
        assert cfg.model.family == "constant_coefficient"
        assert cfg.mu0 == "auto" and cfg.grids.dt == 1.0 / 128.0
        assert cfg.initial.kind == "steady" and cfg.horizon == 1.0

    @pytest.mark.parametrize(
        "values, message",
        [
            ({"run": "dance"}, "run must be one of"),
            ({"horizon": -1.0}, "horizon"),
            ({"model.expr.rho": "1"}, "unknown expression keys"),
            ({"model.family": "daphnia_vonbertalanffy", "model.expr.g": "1"}, "either"),
            ({"weights.mu0": "fast"}, "weights.mu0"),
            ({"weights.mu0": "-1"}, "positive"),
            ({"grids.dt": 0.0}, "grids.dt"),
            ({"grids.n_x": 2}, "at least 4"),
            ({"grids.a_max": 10.0, "grids.n_a": 100, "grids.dt": 0.01}, "must equal grids.dt"),
            ({"initial.kind": "random"}, "initial.kind"),
            ({"initial.kind": "file"}, "needs initial.file"),
            ({"initial.kind": "constant", "initial.b": 1.0}, "needs initial.b"),
            ({"initial.kind": "expression", "initial.S0": 1.0}, "initial.density or"),
            ({"convert.to": "spectrum"}, "convert.to"),
            ({"validate.level": "deep"}, "validate.level"),
            ({"model.box": "1 2 3"}, "four numbers"),
            ({"tolerance.profile": "loose"}, "unknown tolerance profile"),
            ({"tolerance.wiggle": 1.0}, "unknown tolerance"),
        ],
    )
    def test_rejections(self, values, message):
        with pytest.raises(ConfigError, match=message):
            build_config(values)

    def test_tolerance_profile_from_environment(self, monkeypatch):
        monkeypatch.setenv(TOLERANCE_ENV, "strict")
        assert build_config({}).tolerances == TOLERANCE_PROFILES["strict"]
        # an explicit key beats the environment
        assert build_config({"tolerance.profile": "fast"}).tolerances == TOLERANCE_PROFILES["fast"]
        assert build_config({"tolerance.picard_tol": 1e-7}).tolerances.picard_tol == 1e-7

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="not found"):
            load_config(tmp_path / "absent.cfg")

    def test_paths_resolve_next_to_the_file(self, tmp_path):
        cfg = load_config(write_cfg(tmp_path, "outputs = res\n"))
        assert cfg.resolve_path(cfg.outputs) == tmp_path / "res"


class TestCommandLine:
    def test_steady(self, tmp_path, capsys):
        cfg = write_cfg(tmp_path, "model.family = constant_coefficient\n")
        assert main(["steady", "--config", cfg, "--out", str(tmp_path / "o")]) == EXIT_OK
        meta, cols = io.read_table(tmp_path / "o" / "steady.csv")
        assert meta["kind"] == "steady"
        assert cols["S_star"][0] == pytest.approx(0.5, rel=1e-10)
        assert cols["b_star"][0] == pytest.approx(0.5, rel=1e-10)
        assert "1 positive steady state" in capsys.readouterr().out

    def test_zero_horizon_is_identity(self, tmp_path):
        cfg = write_cfg(tmp_path, "horizon = 0\n[model]\nfamily = daphnia_vonbertalanffy\n")
        assert main(["simulate-pde", "--config", cfg, "--out", str(tmp_path / "o")] + FAST) == EXIT_OK
        a = io.read_density(tmp_path / "o" / "density_initial.csv")
        b = io.read_density(tmp_path / "o" / "density_final.csv")
        np.testing.assert_array_equal(a.n_values, b.n_values)
        assert a.S0 == b.S0
        assert main(["simulate-de", "--config", cfg, "--out", str(tmp_path / "d")] + FAST) == EXIT_OK
        ha = io.read_history(tmp_path / "d" / "history_initial.csv")
        hb = io.read_history(tmp_path / "d" / "history_final.csv")
        np.testing.assert_array_equal(ha.phi_values, hb.phi_values)

    def test_runs_are_deterministic(self, tmp_path):
        cfg = write_cfg(tmp_path, "horizon = 0.5\ninitial.perturb_S = 0.05\n[model]\nfamily = instability_demo\n")
        for d in ("r1", "r2"):
            assert main(["simulate-pde", "--config", cfg, "--out", str(tmp_path / d)] + FAST) == EXIT_OK
        for name in ("density_final.csv", "trajectory.csv"):
            assert body_lines(tmp_path / "r1" / name) == body_lines(tmp_path / "r2" / name)

    def test_density_round_trip(self, tmp_path):
        cfg = write_cfg(tmp_path, "[model]\nfamily = daphnia_vonbertalanffy\n")
        assert main(["convert", "--config", cfg, "--out", str(tmp_path / "h")] + FAST) == EXIT_OK
        # the history file feeds back in as the initial state of a conversion to density
        cfg2 = write_cfg(
            tmp_path,
            f"convert.to = density\n[initial]\nkind = file\nfile = {tmp_path / 'h' / 'history.csv'}\n[model]\nfamily = daphnia_vonbertalanffy\n",
            "back.cfg",
        )
        assert main(["convert", "--config", cfg2, "--out", str(tmp_path / "n")] + FAST) == EXIT_OK
        h = io.read_history(tmp_path / "h" / "history.csv")
        io.write_history(tmp_path / "copy.csv", h)
        h2 = io.read_history(tmp_path / "copy.csv")
        np.testing.assert_array_equal(h.phi_values, h2.phi_values)
        np.testing.assert_array_equal(h.ages, h2.ages)
        n = io.read_density(tmp_path / "n" / "density.csv")
        assert n.S0 == pytest.approx(h.S0, abs=1e-12)

    def test_config_error_exit(self, tmp_path, capsys):
        cfg = write_cfg(tmp_path, "horizon = later\n")
        assert main(["steady", "--config", cfg]) == EXIT_CONFIG
        assert "scenario.cfg:1" in capsys.readouterr().err

    def test_numerical_exit_when_no_steady_state(self, tmp_path, capsys):
        cfg = write_cfg(tmp_path, "[model]\nfamily = constant_coefficient\nparam.beta0 = 0.5\n")
        assert main(["steady", "--config", cfg, "--out", str(tmp_path / "o")]) == EXIT_NUMERICAL
        assert "numerical failure" in capsys.readouterr().err

    def test_hypothesis_exit(self, tmp_path):
        text = (
            "[model]\nexpr.g = 1\nexpr.mu = 1.5 - 0.25*x\nexpr.beta = 2*S\nexpr.gamma = 1\nexpr.f = 1 - S\n"
            "x_b = 1\nx_bar = 2\ng_inf = 1\nmu_hat = 1\ng_min = 1\ng_max = 1\nbox = 1 10 0 2\n"
        )
        assert main(["steady", "--config", write_cfg(tmp_path, text), "--out", str(tmp_path / "o")]) == EXIT_HYPOTHESIS

    def test_validate_table(self, tmp_path, capsys):
        cfg = write_cfg(tmp_path, "model.family = constant_coefficient\n")
        assert main(["validate", "--config", cfg, "--out", str(tmp_path / "v")]) == EXIT_OK
        out = capsys.readouterr().out
        assert "FAIL" not in out and "steady_root" in out
        rows = (tmp_path / "v" / "validation.csv").read_text().splitlines()
        assert any(r.startswith("intertwining,pass") for r in rows)

    def test_spectrum(self, tmp_path):
        cfg = write_cfg(tmp_path, "model.family = constant_coefficient\n")
        assert main(["spectrum", "--config", cfg, "--out", str(tmp_path / "s")]) == EXIT_OK
        meta, cols = io.read_table(tmp_path / "s" / "spectrum.csv")
        assert meta["verdict"] == "asymptotically_stable"
        np.testing.assert_allclose(np.sort(cols["im_lambda"]), [-np.sqrt(0.75), np.sqrt(0.75)], atol=1e-9)
        np.testing.assert_allclose(cols["re_lambda"], -0.5, atol=1e-9)

    def test_explicit_scan_needs_all_bounds(self, tmp_path):
        cfg = write_cfg(tmp_path, "spectrum.re_min = -0.5\n")
        assert main(["spectrum", "--config", cfg, "--out", str(tmp_path / "s")]) == EXIT_CONFIG
