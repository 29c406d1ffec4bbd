"""CLI: config handling, CSV schemas, determinism, negative controls."""

import json
from pathlib import Path

import pytest

from bandmoments.cli import CheckRow, load_config_file, main


def _read(path: Path) -> str:
    return path.read_text()


class TestConfigFile:
    def test_parses_flat_keys(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("# comment\nsize = 32\nensemble = band  # trailing\n\n")
        assert load_config_file(str(cfg)) == {"size": "32", "ensemble": "band"}

    def test_rejects_garbage(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("not a key value line\n")
        with pytest.raises(ValueError):
            load_config_file(str(cfg))

    def test_flags_override_file(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("size = 16\nsamples = 4\nbins = 20\n")
        out1, out2 = tmp_path / "o1", tmp_path / "o2"
        main(["spectrum", "--config", str(cfg), "--out", str(out1)])
        main(["spectrum", "--config", str(cfg), "--size", "24", "--out", str(out2)])
        m1 = json.loads(_read(out1 / "manifest.json"))
        m2 = json.loads(_read(out2 / "manifest.json"))
        assert m1["config"]["size"] == 16
        assert m2["config"]["size"] == 24

    def test_unknown_key_rejected(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("sizzle = 16\n")
        with pytest.raises(ValueError):
            main(["spectrum", "--config", str(cfg), "--out", str(tmp_path / "o")])


class TestSpectrumCommand:
    def test_writes_schema_and_manifest(self, tmp_path):
        out = tmp_path / "spec"
        code = main(["spectrum", "--size", "32", "--samples", "4",
                     "--bins", "25", "--out", str(out)])
        assert code == 0
        lines = _read(out / "spectrum.csv").splitlines()
        assert lines[0] == "bin_left,bin_right,mass,semicircle_mass"
        assert len(lines) == 26
        manifest = json.loads(_read(out / "manifest.json"))
        assert "ks_distance" in manifest["summary"]

    def test_band_ensemble_runs(self, tmp_path):
        out = tmp_path / "b"
        code = main(["spectrum", "--ensemble", "band", "--half-width", "8",
                     "--bandwidth", "3", "--samples", "3", "--bins", "10",
                     "--out", str(out)])
        assert code == 0


class TestScanCommand:
    ARGS = ["scan-f2", "--ensemble", "goe", "--size", "8", "--samples", "400",
            "--xi-diffs", "0,1"]

    def test_schema_and_diagonal_row(self, tmp_path):
        out = tmp_path / "scan"
        assert main(self.ARGS + ["--out", str(out)]) == 0
        lines = _read(out / "scan_f2.csv").splitlines()
        assert lines[0] == "xi1,xi2,ratio,stderr,ds_ref,flag"
        diag = lines[1].split(",")
        assert diag[2] == "1" and diag[3] == "0"

    def test_rerun_is_byte_identical(self, tmp_path):
        out1, out2 = tmp_path / "r1", tmp_path / "r2"
        main(self.ARGS + ["--seed", "3", "--out", str(out1)])
        main(self.ARGS + ["--seed", "3", "--out", str(out2)])
        assert _read(out1 / "scan_f2.csv") == _read(out2 / "scan_f2.csv")

    def test_worker_count_does_not_change_bytes(self, tmp_path, monkeypatch):
        out1, out2 = tmp_path / "w1", tmp_path / "w2"
        main(self.ARGS + ["--seed", "3", "--out", str(out1)])
        monkeypatch.setenv("RMT_THREADS", "2")
        main(self.ARGS + ["--seed", "3", "--out", str(out2)])
        assert _read(out1 / "scan_f2.csv") == _read(out2 / "scan_f2.csv")


class TestVerifyCommands:
    FAST = ["--sets", "3", "--draws", "40000", "--seed", "1"]

    def test_hciz_passes_and_writes_rows(self, tmp_path):
        out = tmp_path / "v"
        code = main(["verify-hciz"] + self.FAST + ["--out", str(out)])
        assert code == 0
        lines = _read(out / "verify.csv").splitlines()
        assert lines[0] == "check_id,measured,reference,tolerance,pass"
        assert all(line.endswith(",1") for line in lines[1:])

    def test_corrupted_constant_detected(self, tmp_path):
        out = tmp_path / "vc"
        code = main(["verify-hciz"] + self.FAST + ["--corrupt", "--out", str(out)])
        assert code == 1
        lines = _read(out / "verify.csv").splitlines()
        assert any(line.endswith(",0") for line in lines[1:])

    def test_verify_rerun_byte_identical(self, tmp_path):
        out1, out2 = tmp_path / "d1", tmp_path / "d2"
        main(["verify-hciz"] + self.FAST + ["--out", str(out1)])
        main(["verify-hciz"] + self.FAST + ["--out", str(out2)])
        assert _read(out1 / "verify.csv") == _read(out2 / "verify.csv")

    def test_reduction_small(self, tmp_path):
        out = tmp_path / "r"
        code = main(["verify-reduction", "--draws", "200000", "--out", str(out)])
        assert code == 0

    def test_chain_suite(self, tmp_path):
        out = tmp_path / "c"
        code = main(["verify-chain", "--tail-draws", "20000", "--out", str(out)])
        assert code == 0

    def test_report_runs_everything(self, tmp_path):
        out = tmp_path / "rep"
        code = main(["report", "--sets", "2", "--draws", "200000",
                     "--samples", "60000", "--tail-draws", "20000",
                     "--out", str(out)])
        assert code == 0
        for rel in ("spectrum/spectrum.csv", "scan_f2/scan_f2.csv",
                    "verify_hciz/verify.csv", "verify_chain/verify.csv",
                    "verify_reduction/verify.csv", "transfer_check/verify.csv",
                    "manifest.json"):
            assert (out / rel).exists()


class TestCheckRow:
    def test_pass_semantics(self):
        assert CheckRow("x", 0.5, 0.5, 0.0).passed
        assert CheckRow("x", 0.6, 0.5, 0.1).passed
        assert not CheckRow("x", 0.7, 0.5, 0.1).passed
