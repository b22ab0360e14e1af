import numpy as np
import pytest

from torus_spde.cli import main
from torus_spde.io import SpectrumTable, read_manifest, read_prediction, read_snapshot, verify_manifest, write_spectra


def simulate(out, *extra):
    return main(["simulate", "--equation", "ac", "--n", "16", "--dt", "0.01", "--t-final", "0.1", "--sigma", "0.5", "--alpha", "0.1", "--seed", "3", "--out", str(out), *extra])


class TestSimulate:
    def test_outputs(self, tmp_path):
        assert simulate(tmp_path, "--snapshot-every", "5") == 0
        names = sorted(p.name for p in tmp_path.iterdir())
        assert names == ["final.tspd", "manifest.json", "spectrum.csv", "step_00000000.tspd", "step_00000005.tspd", "step_00000010.tspd"]
        assert all(verify_manifest(tmp_path / "manifest.json").values())
        doc = read_manifest(tmp_path / "manifest.json")
        assert doc["scheme"]["M"] == 10 and doc["master_seed"] == 3
        assert np.array_equal(read_snapshot(tmp_path / "final.tspd").values, read_snapshot(tmp_path / "step_00000010.tspd").values)

    def test_deterministic(self, tmp_path):
        simulate(tmp_path / "a")
        simulate(tmp_path / "b")
        assert np.array_equal(read_snapshot(tmp_path / "a" / "final.tspd").values, read_snapshot(tmp_path / "b" / "final.tspd").values)

    def test_file_ic(self, tmp_path):
        simulate(tmp_path / "a")
        rc = simulate(tmp_path / "b", "--ic", f"file:{tmp_path / 'a' / 'final.tspd'}")
        assert rc == 0

    def test_one_dimension(self, tmp_path):
        rc = main(["simulate", "--equation", "heat", "--dim", "1", "--n", "32", "--dt", "0.1", "--t-final", "1", "--sigma", "1", "--out", str(tmp_path)])
        assert rc == 0
        assert read_snapshot(tmp_path / "final.tspd").grid.d == 1
        assert not (tmp_path / "spectrum.csv").exists()

    def test_config_errors(self, tmp_path, capsys):
        assert simulate(tmp_path, "--ic", "bogus") == 2
        assert main(["simulate", "--equation", "heat", "--n", "15", "--dt", "0.1", "--t-final", "1", "--out", str(tmp_path)]) == 2
        assert main(["simulate", "--equation", "heat", "--n", "16", "--dt", "0.3", "--t-final", "1", "--out", str(tmp_path)]) == 2
        assert "error" in capsys.readouterr().err

    def test_io_error(self, tmp_path):
        assert simulate(tmp_path, "--ic", f"file:{tmp_path / 'missing.tspd'}") == 4

    def test_numerical_error(self, tmp_path):
        rc = main(["simulate", "--equation", "ac", "--n", "16", "--dt", "0.05", "--t-final", "1", "--sigma", "30", "--alpha", "0.001", "--g", "50", "--dealias", "off", "--out", str(tmp_path)])
        assert rc == 3

    def test_usage_error(self):
        with pytest.raises(SystemExit) as info:
            main(["simulate"])
        assert info.value.code == 2


class TestEnsemble:
    def test_small_preset(self, tmp_path, capsys):
        assert main(["ensemble", "--preset", "heat1d_validation", "--realizations", "2", "--seed", "1", "--out", str(tmp_path)]) == 0
        doc = read_manifest(tmp_path / "manifest.json")
        assert doc["config"]["realizations"] == 2
        assert len(doc["realization_seeds"]["64"]) == 2
        assert "N=64" in capsys.readouterr().out


class TestRenorm:
    def test_prints_constant(self, capsys):
        assert main(["renorm", "--sigma", "1", "--n", "16"]) == 0
        assert "C_N = 1.10365" in capsys.readouterr().out

    @pytest.mark.parametrize("curve", ["cn", "mode-energy", "norm", "heat-series"])
    def test_curves(self, tmp_path, curve):
        assert main(["renorm", "--sigma", "1", "--n", "64", "--curve", curve, "--out", str(tmp_path)]) == 0
        x, v, _ = read_prediction(tmp_path / f"prediction_{curve}.csv")
        assert x.size == v.size > 0
        assert np.all(v >= 0)

    def test_domain_error(self):
        assert main(["renorm", "--sigma", "-1", "--n", "16"]) == 2


class TestAnalyze:
    def spectra(self, tmp_path):
        k = np.arange(1, 33)
        t = SpectrumTable(k, k**-2.0, np.zeros(32), np.ones(32, dtype=int))
        return write_spectra(tmp_path / "spectra.csv", {64: t})

    def test_fit(self, tmp_path, capsys):
        assert main(["analyze", "--spectra", str(self.spectra(tmp_path)), "--fit", "8:16"]) == 0
        lines = capsys.readouterr().out.splitlines()
        assert lines[0] == "N,slope,intercept,r_squared,n_points"
        assert float(lines[1].split(",")[1]) == pytest.approx(-2.0)

    def test_overlay(self, tmp_path, capsys):
        path = self.spectra(tmp_path)
        assert main(["renorm", "--sigma", "1", "--n", "64", "--curve", "mode-energy", "--out", str(tmp_path)]) == 0
        capsys.readouterr()
        assert main(["analyze", "--spectra", str(path), "--overlay", str(tmp_path / "prediction_mode-energy.csv")]) == 0
        lines = capsys.readouterr().out.splitlines()
        assert lines[0] == "N,x,measured,predicted,ratio"
        assert len(lines) == 33

    def test_summary(self, tmp_path, capsys):
        assert main(["analyze", "--spectra", str(self.spectra(tmp_path))]) == 0
        assert "N=64: 32 bins" in capsys.readouterr().out

    def test_errors(self, tmp_path):
        assert main(["analyze", "--spectra", str(tmp_path / "none.csv")]) == 4
        path = self.spectra(tmp_path)
        assert main(["analyze", "--spectra", str(path), "--fit", "8-16"]) == 2
        assert main(["analyze", "--spectra", str(path), "--fit", "8:9"]) == 2

