import csv
import json

import numpy as np
import pytest

from nlscatter.cli import main
from nlscatter.config import bundled_configs, load_config, parse_config
from nlscatter.errors import ConfigurationError, ExcludedCaseError, FixtureError, NotFoundError
from nlscatter.fixtures import ENV_VAR, fixture_hash, load_fixture
from nlscatter.grid import read_dump
from nlscatter.runner import RunRecord, cmd_export, cmd_solve, content_version


def quintic_doc():
    return json.loads(bundled_configs()["quintic-1d"].read_text())


class TestConfig:
    def test_round_trip_and_hash(self):
        cfg = load_config("quintic-1d")
        again = parse_config(json.loads(cfg.to_json()))
        assert again.config_hash() == cfg.config_hash()
        assert len(cfg.config_hash()) == 16

    def test_overrides(self):
        cfg = load_config("quintic-1d", ["solver.tol=1e-8", "grid.N=1024", "name=other"])
        assert cfg.solver.tol == 1e-8 and cfg.grid.N == 1024 and cfg.name == "other"
        assert cfg.config_hash() != load_config("quintic-1d").config_hash()

    @pytest.mark.parametrize("override", [
        "grid.N=100",            # not a power of two
        "solver.epsilon=0.5",    # above 1/(p+1)
        "solver.cutoff_t0=30",   # cutoff outside the window
        "grid.bogus=1",          # unknown field
        "schema_version=2",
        "nonlinearity.p=4",
        "malformed",
    ])
    def test_rejected(self, override):
        with pytest.raises(ConfigurationError):
            cfg = load_config("quintic-1d", [override])
            cfg.grid_spec()

    def test_excluded_case(self):
        with pytest.raises(ExcludedCaseError):
            load_config("cubic-1d-excluded")

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigurationError):
            load_config(tmp_path / "nope.json")

    @pytest.mark.parametrize("name", sorted(set(bundled_configs()) - {"cubic-1d-excluded"}))
    def test_bundled_configs_validate(self, name):
        load_config(name)


@pytest.fixture(scope="module")
def quintic_run(tmp_path_factory):
    root = tmp_path_factory.mktemp("runs")
    return cmd_solve(load_config("quintic-1d"), root)


class TestRuns:
    def test_layout(self, quintic_run):
        d = quintic_run.run_dir
        assert d.name == quintic_run.config_hash
        man = json.loads((d / "manifest.json").read_text())
        assert man["content_version"] == content_version()
        for rel in man["paths"].values():
            assert (d / rel).exists()
        u = read_dump(d / "fields/u.bin")
        assert u.values.shape == (401, 512) and not u.dual
        assert read_dump(d / "fields/f_tilde.bin").dual

    def test_matches_frozen_record(self, quintic_run):
        ref = load_fixture("record-quintic-1d")["norms"]
        got = quintic_run.norms
        assert got["solver"]["iterations"] == ref["solver"]["iterations"]
        for key in ("wk_norm_f", "wk_norm_f_tilde", "l2_f_tilde"):
            assert got["scattering"][key] == pytest.approx(ref["scattering"][key], rel=1e-10)
        assert got["weighted_l2_u"] == pytest.approx(ref["weighted_l2_u"], rel=1e-10)

    def test_repeat_goes_to_new_directory(self, quintic_run, tmp_path):
        a = cmd_solve(load_config("quintic-1d"), tmp_path, save_fields=False)
        b = cmd_solve(load_config("quintic-1d"), tmp_path, save_fields=False)
        assert b.run_dir.name == f"{a.config_hash}-r2"
        assert (a.run_dir / "reports/norms.json").read_bytes() == (b.run_dir / "reports/norms.json").read_bytes()
        assert RunRecord.load(b.run_dir).norms == a.norms

    def test_history_csv(self, quintic_run):
        with open(quintic_run.run_dir / "reports/history.csv") as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == quintic_run.diagnostics["iterations"]
        assert float(rows[-1]["diff"]) < float(rows[0]["diff"])


class TestExport:
    def test_fields(self, quintic_run):
        binp, csvp = cmd_export(quintic_run.run_dir, "fields", t=5.0)
        d = read_dump(binp)
        assert d.t == pytest.approx(5.0)
        u = read_dump(quintic_run.run_dir / "fields/u.bin")
        assert np.array_equal(d.values, u.values[250])
        with open(csvp) as fh:
            assert next(csv.reader(fh)) == ["z_1", "re_u", "im_u"]

    def test_scattering_and_norms(self, quintic_run):
        (sc,) = cmd_export(quintic_run.run_dir, "scattering")
        with open(sc) as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["zeta_1", "re_f", "im_f", "re_f_tilde", "im_f_tilde"] and len(rows) == 513
        table, js = cmd_export(quintic_run.run_dir, "norms")
        assert json.loads(js.read_text())["schema_version"] == 1
        assert table.read_text().startswith("norm_index,")

    def test_missing_run(self, tmp_path):
        with pytest.raises(NotFoundError):
            cmd_export(tmp_path, "norms")

    def test_missing_artifact(self, tmp_path):
        rec = cmd_solve(load_config("quintic-1d"), tmp_path, save_fields=False)
        with pytest.raises(NotFoundError):
            cmd_export(rec.run_dir, "fields")


class TestCLI:
    def test_solve_and_export(self, tmp_path, capsys):
        assert main(["solve", "free-1d", "--runs", str(tmp_path)]) == 0
        out = json.loads(capsys.readouterr().out)
        assert out["iterations"] <= 2
        assert main(["export", out["run_dir"], "norms"]) == 0

    def test_configuration_error_exit(self, tmp_path, capsys):
        assert main(["solve", "quintic-1d", "--set", "grid.N=100", "--runs", str(tmp_path)]) == 2
        assert "ConfigurationError" in capsys.readouterr().err

    def test_excluded_case_exit(self, tmp_path, capsys):
        assert main(["solve", "cubic-1d-excluded", "--runs", str(tmp_path)]) == 4
        assert "ExcludedCaseError" in capsys.readouterr().err

    def test_numerical_failure_exit(self, tmp_path):
        code = main(["solve", "quintic-1d", "--set", "data.amplitude=3", "--set", "solver.max_iter=30",
                     "--runs", str(tmp_path), "--no-fields"])
        assert code == 3

    def test_unknown_suite(self):
        with pytest.raises(SystemExit) as exc:
            main(["verify", "everything"])
        assert exc.value.code == 2

    def test_export_missing_run(self, tmp_path):
        assert main(["export", str(tmp_path / "none"), "fields"]) == 2

    def test_fixtures_regen(self, tmp_path, capsys):
        assert main(["fixtures-regen", "--only", "word-counts", "--root", str(tmp_path)]) == 0
        assert (tmp_path / f"word-counts-{fixture_hash('word-counts')}.json").exists()
        assert load_fixture("word-counts", tmp_path)["counts"] == load_fixture("word-counts")["counts"]


class TestFixtures:
    def test_missing_fixture_is_loud(self, tmp_path, monkeypatch):
        monkeypatch.setenv(ENV_VAR, str(tmp_path))
        with pytest.raises(FixtureError, match="fixtures-regen"):
            load_fixture("wk-gaussian")

    def test_unknown_fixture(self):
        with pytest.raises(FixtureError):
            fixture_hash("nope")
