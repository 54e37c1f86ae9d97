"""Config parsing, CSV/plot emission, subcommands, exit codes."""

import numpy as np
import pytest

from pdmeshfree.cli import emit_csv, emit_plot, main, parse_config
from pdmeshfree.errors import ValidationError


class TestParseConfig:
    def test_defaults_fill(self):
        cfg = parse_config("dispersion")
        assert cfg["k_points"] == 200
        assert cfg["grid"] == "uniform"
        assert cfg["out"] == "."

    def test_file_values_and_flag_override(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text("grid = perturbed  # comment\nk_points = 50\n")
        cfg = parse_config("dispersion", path, {"k_points": "75"})
        assert cfg["grid"] == "perturbed"
        assert cfg["k_points"] == 75

    def test_unknown_key_named(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text("wibble = 3\n")
        with pytest.raises(ValidationError, match="wibble"):
            parse_config("dispersion", path)

    def test_type_mismatch_named(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text("k_points = many\n")
        with pytest.raises(ValidationError, match="k_points"):
            parse_config("dispersion", path)

    def test_unsupported_order(self):
        with pytest.raises(ValidationError, match="order"):
            parse_config("manufactured", overrides={"order": "4"})

    def test_horizon_rule_citated(self):
        with pytest.raises(ValidationError, match="horizon rule"):
            parse_config("dispersion", overrides={"delta_over_h": "1.5"})
        with pytest.raises(ValidationError, match="horizon rule"):
            parse_config("manufactured",
                         overrides={"order": "3", "horizon": "2.5"})

    def test_missing_config_file(self, tmp_path):
        with pytest.raises(ValidationError):
            parse_config("dispersion", tmp_path / "nope.cfg")


class TestEmitters:
    def test_csv_bytes_stable(self, tmp_path):
        rows = [{"a": 1.0 / 3.0, "b": "x"}, {"a": 2.0, "b": "y"}]
        p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
        emit_csv(rows, ["a", "b"], p1)
        emit_csv(rows, ["a", "b"], p2)
        assert p1.read_bytes() == p2.read_bytes()
        text = p1.read_text()
        assert text.splitlines()[0] == "a,b"
        assert "0.33333333333333331" in text  # 17 significant digits

    def test_empty_rows_rejected(self, tmp_path):
        with pytest.raises(ValidationError):
            emit_csv([], ["a"], tmp_path / "x.csv")

    def test_plot_svg(self, tmp_path):
        x = np.linspace(1e-2, 1.0, 20)
        emit_plot([("one", x, x**2), ("two", x, x)], tmp_path / "p.svg",
                  log_log=True, title="demo")
        svg = (tmp_path / "p.svg").read_text()
        assert svg.startswith("<svg")
        assert svg.count("<polyline") == 2
        assert "demo" in svg

    def test_plot_rejects_nonpositive_loglog(self, tmp_path):
        with pytest.raises(ValidationError):
            emit_plot([("bad", [0.0, 1.0], [1.0, 2.0])], tmp_path / "p.svg",
                      log_log=True)


class TestMain:
    def test_validation_exit_code(self, capsys):
        rc = main(["manufactured", "--order", "7"])
        assert rc == 1
        assert "error: validation" in capsys.readouterr().err

    def test_numerical_exit_code(self, tmp_path, capsys):
        # three collinear nodes cannot support 2D gradients
        cloud = tmp_path / "line.cloud"
        cloud.write_text("0 0.0 0.0 1.0 bulk\n1 1.0 0.0 1.0 bulk\n"
                         "2 2.0 0.0 1.0 bulk\n")
        rc = main(["dump-weights", "--cloud", str(cloud), "--order", "1",
                   "--formulation", "rk", "--horizon", "2.5",
                   "--out", str(tmp_path)])
        assert rc == 2
        assert "error: numerical" in capsys.readouterr().err

    def test_dispersion_deterministic_csv(self, tmp_path):
        out1, out2 = tmp_path / "r1", tmp_path / "r2"
        args = ["dispersion", "--formulation", "ba-rk", "--k-points", "40",
                "--grid", "perturbed", "--seed", "11"]
        assert main(args + ["--out", str(out1)]) == 0
        assert main(args + ["--out", str(out2)]) == 0
        b1 = (out1 / "dispersion.csv").read_bytes()
        assert b1 == (out2 / "dispersion.csv").read_bytes()
        header = b1.decode().splitlines()[0]
        assert header == ("k_norm,re_omega_norm,im_omega_norm,formulation,"
                          "delta_over_h,grid")

    def test_patch_test_subcommand(self, tmp_path, capsys):
        rc = main(["patch-test", "--formulation", "ba-gmls", "--order", "2",
                   "--out", str(tmp_path)])
        assert rc == 0
        assert "PASS" in capsys.readouterr().out
        assert (tmp_path / "patch_test.csv").exists()

    def test_manufactured_subcommand_csv_schema(self, tmp_path):
        rc = main(["manufactured", "--formulation", "ba-rk", "--order", "1",
                   "--levels", "2", "--out", str(tmp_path), "--plot"])
        assert rc == 0
        lines = (tmp_path / "manufactured.csv").read_text().splitlines()
        assert lines[0] == "level,h,n,formulation,rms_u,rms_stress,rate"
        assert len(lines) == 3
        assert (tmp_path / "manufactured.svg").exists()

    def test_dump_weights_columns(self, tmp_path):
        rc = main(["dump-weights", "--h", "0.5", "--order", "1",
                   "--formulation", "gmls", "--family", "kinematic",
                   "--out", str(tmp_path)])
        assert rc == 0
        lines = (tmp_path / "weights.csv").read_text().splitlines()
        assert lines[0] == "node_id,neighbor_id,gamma_x,gamma_y"
