import json
import subprocess
import sys

import pytest

from nsekit.cli import main, parse_grid, parse_ints
from nsekit.errors import ValidationError


def run(*argv):
    return main([str(a) for a in argv])


class TestGrids:
    def test_geom(self):
        assert parse_grid("geom:1e-4:1e-2:3") == pytest.approx([1e-4, 1e-3, 1e-2])

    def test_lin(self):
        assert parse_grid("lin:0.4:0.6:0.1") == [0.4, 0.5, 0.6]

    def test_range_and_list(self):
        assert parse_ints("2..4") == [2, 3, 4]
        assert parse_grid("1, 2.5") == [1.0, 2.5]

    def test_bad(self):
        with pytest.raises(ValidationError):
            parse_grid("geom:1:x:3")
        with pytest.raises(ValidationError):
            parse_ints("1.5,2")


class TestNse:
    def test_registry(self, capsys):
        assert run("nse", "he4") == 0
        out = capsys.readouterr().out
        assert "beta_star: 2" in out

    def test_mix_params(self, capsys):
        assert run("nse", "mix", "--param", "a=0", "--param", "b=1") == 0
        assert "beta_star: 2" in capsys.readouterr().out

    def test_coeffs_file(self, tmp_path, capsys):
        path = tmp_path / "c.json"
        path.write_text(json.dumps({"basis": [0, 0, 1]}))
        assert run("nse", "--coeffs", path) == 0
        assert "beta_star: 1" in capsys.readouterr().out

    def test_strict_cap(self, tmp_path, capsys):
        path = tmp_path / "zero.json"
        path.write_text("[0.0]")
        assert run("nse", "--coeffs", path) == 0
        assert "beta_star: >8" in capsys.readouterr().out
        assert run("nse", "--coeffs", path, "--strict") == 3

    def test_unknown_activation(self, capsys):
        assert run("nse", "softsign") == 2
        assert "unknown activation" in capsys.readouterr().err

    def test_json_output(self, tmp_path):
        out = tmp_path / "nse.json"
        assert run("nse", "tanh", "--json", out) == 0
        assert json.loads(out.read_text())["beta_star"] == 2


class TestConfig:
    def test_unknown_key(self, tmp_path, capsys):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"nse": {"activaton": "he2"}}))
        assert run("--config", cfg, "nse", "he2") == 2
        assert "activaton" in capsys.readouterr().err

    def test_unknown_section(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"fit": {}}))
        assert run("--config", cfg, "nse", "he2") == 2

    def test_malformed(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text("{nse: ")
        assert run("--config", cfg, "nse", "he2") == 2

    def test_environment(self, tmp_path, monkeypatch, capsys):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"nse": {"activation": "z2"}}))
        monkeypatch.setenv("NSEKIT_CONFIG", str(cfg))
        assert run("nse") == 0
        assert "activation: z2" in capsys.readouterr().out

    def test_flag_overrides_config(self, tmp_path, capsys):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"nse": {"activation": "z2"}}))
        assert run("--config", cfg, "nse", "he4") == 0
        assert "activation: he4" in capsys.readouterr().out

    def test_missing_config_file(self, tmp_path):
        assert run("--config", tmp_path / "absent.json", "nse", "he2") == 4

    def test_bad_jobs(self):
        assert run("--jobs", 0, "nse", "he2") == 2


class TestOutputs:
    def test_curve_is_reproducible(self, tmp_path):
        first, second = tmp_path / "a" / "c.csv", tmp_path / "b" / "c.csv"
        for out in (first, second):
            assert run("curve-single-index", "--act", "he2", "--lambdas", "geom:1e-3:1e-1:3", "--out", out) == 0
        assert first.read_bytes() == second.read_bytes()
        meta_a = (first.parent / "c.meta.json").read_text()
        meta_b = (second.parent / "c.meta.json").read_text()
        assert json.loads(meta_a)["config_hash"] == json.loads(meta_b)["config_hash"]
        assert json.loads(meta_a)["asymptote"]["beta_star"] == 1

    def test_curve_range(self, tmp_path):
        assert run("curve-single-index", "--act", "he2", "--lambdas", "20", "--out", tmp_path / "c.csv") == 2

    def test_unwritable(self, tmp_path):
        blocker = tmp_path / "file"
        blocker.write_text("")
        assert run("appendix-c", "--m", "1..3", "--out", blocker / "x.csv") == 4

    def test_eigenvalue_table(self, tmp_path, capsys):
        out = tmp_path / "h.csv"
        assert run("appendix-c", "--m", "1..10", "--out", out) == 0
        text = capsys.readouterr().out
        assert "first indefinite block at m=10" in text
        rows = out.read_text().splitlines()
        assert rows[0] == "m,min_eig_full,min_eig_he2_free,positive_definite" and len(rows) == 11

    def test_eigenvalue_table_cap(self):
        assert run("appendix-c", "--m", "15") == 2

    def test_committee_it_spec(self, tmp_path):
        out = tmp_path / "it.csv"
        assert run("committee", "it-spec", "--act", "he2n", "--grid", "0.3,1.2", "--out", out) == 0
        assert out.read_text().splitlines()[1:] == [
            f"{0.3:.16e},{1e-3:.16e},false",
            f"{1.2:.16e},{1e-3:.16e},true",
        ]

    def test_committee_threshold(self, capsys):
        assert run("committee", "threshold", "--act", "he2n", "--p", "1,2") == 0
        assert "p=2" in capsys.readouterr().out

    def test_construct(self, tmp_path):
        out = tmp_path / "b3.json"
        assert run("construct", "beta3", "--out", out) == 0
        data = json.loads(out.read_text())
        assert data["beta_star"] == 3 and len(data["basis"]) == 21

    def test_hierarchical(self, tmp_path):
        out = tmp_path / "h.csv"
        assert run("hierarchical", "--ks", "8,16,32", "--width", 1000, "--alphas", "geom:1e2:1e4:3",
                   "--out", out) == 0
        assert (tmp_path / "h_mse.csv").exists() and (tmp_path / "h_mse.meta.json").exists()


def test_console_script_help():
    res = subprocess.run([sys.executable, "-m", "nsekit.cli", "--help"], capture_output=True, text=True)
    assert res.returncode == 0 and "simulate" in res.stdout


def test_argparse_usage_error():
    with pytest.raises(SystemExit) as info:
        main(["committee", "bogus-mode"])
    assert info.value.code == 2
