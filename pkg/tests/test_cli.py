import json

import numpy as np
import pytest

from markovgf.cli import EXIT_CONFIG, EXIT_OK, EXIT_STEP_LIMIT, EXIT_VERIFY_FAILED, main, parse_bounds, parse_grid, ConfigError
from markovgf.canonical import saddle_contour
from markovgf.tables import read_csv, render_csv


def run(tmp_path, name, *argv):
    out = tmp_path / name
    code = main([*argv, "--out", str(out), "--exclude-timestamp"])
    return code, out


def column(columns, rows, name, conv=float):
    i = columns.index(name)
    return [conv(r[i]) for r in rows]


class TestParsing:
    def test_grid(self):
        assert parse_grid("41x41", 2) == [41, 41]
        assert parse_grid("3X4x5", 3) == [3, 4, 5]
        for bad in ("41", "ax3", "0x4"):
            with pytest.raises(ConfigError):
                parse_grid(bad, 2)

    def test_bounds(self):
        assert parse_bounds("-2,2,-1,1", 2) == [(-2.0, 2.0), (-1.0, 1.0)]
        for bad in ("1,2,3", "2,1,0,1", "a,b,c,d", "0,inf,0,1"):
            with pytest.raises(ConfigError):
                parse_bounds(bad, 2)

    def test_tables_round_trip(self):
        text = render_csv({"tool": "x", "n": 3}, ["a", "b"], [[1.5, float("nan")]], {"ok": True})
        meta, cols, rows, footer = read_csv(text)
        assert meta == {"tool": "x", "n": "3"}
        assert cols == ["a", "b"] and rows == [["1.5", "nan"]]
        assert json.loads(footer["ok"]) is True


class TestLandscape:
    def test_defaults_2d(self, tmp_path):
        code, out = run(tmp_path, "l.csv", "landscape", "--p", "0.9", "--q", "0.9")
        assert code == EXIT_OK
        meta, cols, rows, _ = read_csv(str(out))
        assert cols == ["e", "w", "loss", "energy", "grad_e", "grad_w", "class"]
        assert len(rows) == 101 * 101
        assert meta["command"] == "landscape" and meta["p"] == "0.9" and "timestamp" not in meta
        w = np.array(column(cols, rows, "w"))
        energy = np.array(column(cols, rows, "energy"))
        assert np.all(np.isnan(energy[w == 0]))
        assert np.all(np.isfinite(energy[w != 0]))
        classes = set(column(cols, rows, "class", str))
        assert {"NotCritical", "LocalMin"} <= classes

    def test_zero_attention_slice_matches_2d(self, tmp_path):
        _, out2 = run(tmp_path, "l2.csv", "landscape", "--p", "0.2", "--q", "0.3", "--grid", "9x7", "--bounds=-1,1,-1,1")
        _, out3 = run(
            tmp_path, "l3.csv", "landscape", "--p", "0.2", "--q", "0.3", "--mode", "attention3d",
            "--grid", "9x7x3", "--bounds=-1,1,-1,1,-1,1",
        )
        _, c2, r2, _ = read_csv(str(out2))
        _, c3, r3, _ = read_csv(str(out3))
        r3_zero = [r for r in r3 if float(r[c3.index("a")]) == 0.0]
        assert len(r3_zero) == len(r2)
        for name in ("e", "w", "loss", "energy", "grad_e", "grad_w", "class"):
            a = column(c2, r2, name, str)
            b = column(c3, r3_zero, name, str)
            if name in ("class",) or name in ("e", "w"):
                assert a == b
            else:
                np.testing.assert_allclose(np.array(a, float), np.array(b, float), rtol=1e-13, atol=1e-15)

    def test_deterministic_without_timestamp(self, tmp_path):
        args = ("landscape", "--p", "0.7", "--q", "0.6", "--grid", "5x5")
        _, out = run(tmp_path, "a.csv", *args)
        first = out.read_bytes()
        run(tmp_path, "a.csv", *args)
        assert out.read_bytes() == first

    def test_timestamp_present_by_default(self, tmp_path):
        out = tmp_path / "t.csv"
        main(["landscape", "--p", "0.7", "--q", "0.6", "--grid", "3x3", "--out", str(out)])
        assert "timestamp" in read_csv(str(out))[0]

    def test_json(self, tmp_path):
        code, out = run(tmp_path, "l.json", "landscape", "--p", "0.7", "--q", "0.6", "--grid", "3x3", "--format", "json")
        assert code == EXIT_OK
        doc = json.loads(out.read_text())
        assert doc["columns"][0] == "e" and len(doc["rows"]) == 9
        assert doc["metadata"]["tool"] == "markovgf"
        # NaN energies on w = 0 become null
        assert any(r[3] is None for r in doc["rows"])

    @pytest.mark.parametrize(
        "argv",
        [
            ["--p", "0.4", "--q", "0.6"],
            ["--p", "1.2", "--q", "0.3"],
            ["--p", "0.3", "--q", "0.3", "--grid", "4x4x4"],
        ],
    )
    def test_config_errors(self, tmp_path, argv):
        code, out = run(tmp_path, "x.csv", "landscape", *argv)
        assert code == EXIT_CONFIG
        assert not out.exists()

    def test_missing_required_argument(self):
        with pytest.raises(SystemExit) as exc:
            main(["landscape", "--p", "0.3"])
        assert exc.value.code == 2


class TestFlow:
    def test_single_trajectory_footer(self, tmp_path):
        code, out = run(tmp_path, "f.csv", "flow", "--p", "0.9", "--q", "0.9", "--init=1.5,-0.3")
        assert code == EXIT_OK
        meta, cols, rows, footer = read_csv(str(out))
        assert cols == ["t", "e", "w", "loss", "energy", "grad_norm"]
        rep = json.loads(footer["limit_report"])
        assert rep["terminated_by"] == "GradStop"
        assert rep["critical_class"] == "GlobalMin"
        assert rep["predicted_basin"] == "ToGlobal" and rep["agrees_with_prediction"]
        assert rep["energy_drift"] < 1e-8
        assert json.loads(meta["init"]) == [1.5, -0.3]
        losses = column(cols, rows, "loss")
        assert losses[-1] == pytest.approx(rep["loss_final"])

    def test_small_init_axis_limit(self, tmp_path):
        code, out = run(tmp_path, "f.csv", "flow", "--p", "0.9", "--q", "0.9", "--init", "0.01,0.01")
        assert code == EXIT_OK
        rep = json.loads(read_csv(str(out))[3]["limit_report"])
        assert rep["critical_class"] == "LocalMin"
        assert rep["loss_final"] == pytest.approx(0.693147, abs=1e-6)

    def test_three_dimensional_energy_from_axis(self, tmp_path):
        code, out = run(tmp_path, "f.csv", "flow", "--p", "0.2", "--q", "0.3", "--mode", "attention3d", "--init", "0,0.3,0.5")
        assert code == EXIT_OK
        _, cols, rows, footer = read_csv(str(out))
        assert json.loads(footer["limit_report"])["energy_drift"] < 1e-6
        energies = np.array(column(cols, rows, "energy"))
        assert np.ptp(energies) < 1e-6

    def test_several_inits_give_numbered_files(self, tmp_path):
        code, _ = run(tmp_path, "f.csv", "flow", "--p", "0.2", "--q", "0.3", "--init=0.5,0.5", "--init=-1,-1")
        assert code == EXIT_OK
        assert (tmp_path / "f_0000.csv").exists() and (tmp_path / "f_0001.csv").exists()

    def test_gaussian_small_init_reaches_global(self, tmp_path):
        code, _ = run(tmp_path, "g.json", "flow", "--p", "0.1", "--q", "0.1", "--gauss", "0.01", "--count", "200", "--format", "json")
        assert code == EXIT_OK
        files = sorted(tmp_path.glob("g_*.json"))
        assert len(files) == 200
        for f in files:
            rep = json.loads(f.read_text())["footer"]["limit_report"]
            assert rep["critical_class"] == "GlobalMin"
            assert rep["agrees_with_prediction"]

    def test_three_dimensional(self, tmp_path):
        code, out = run(tmp_path, "f3.csv", "flow", "--p", "0.9", "--q", "0.9", "--mode", "attention3d", "--init=0.01,0.01,0.01")
        assert code == EXIT_OK
        _, cols, _, footer = read_csv(str(out))
        assert cols == ["t", "e", "w", "a", "loss", "energy", "grad_norm"]
        rep = json.loads(footer["limit_report"])
        assert rep["critical_class"] == "LocalMin" and "predicted_basin" not in rep

    def test_t_max_is_not_an_error(self, tmp_path):
        code, out = run(tmp_path, "f.csv", "flow", "--p", "0.9", "--q", "0.9", "--init=1.5,-0.3", "--t-max", "1")
        assert code == EXIT_OK
        assert json.loads(read_csv(str(out))[3]["limit_report"])["terminated_by"] == "TMax"

    @pytest.mark.parametrize(
        "extra",
        [[], ["--init=1,2,3"], ["--init=1,1", "--gauss", "0.1"], ["--gauss", "-1"], ["--gauss", "0.1", "--count", "0"], ["--init=1,1", "--tol-grad", "0"]],
    )
    def test_config_errors(self, tmp_path, extra):
        code, _ = run(tmp_path, "f.csv", "flow", "--p", "0.9", "--q", "0.9", *extra)
        assert code == EXIT_CONFIG

    def test_step_limit_exit_code(self, tmp_path, monkeypatch):
        import functools

        import markovgf.cli as cli

        monkeypatch.setattr(cli, "FlowConfig", functools.partial(cli.FlowConfig, max_steps=3))
        args = ("flow", "--p", "0.9", "--q", "0.9", "--init=1.5,-0.3")
        code, out = run(tmp_path, "f.csv", *args)
        assert code == EXIT_STEP_LIMIT
        assert json.loads(read_csv(str(out))[3]["limit_report"])["terminated_by"] == "StepLimit"
        code, _ = run(tmp_path, "f.csv", *args, "--allow-partial")
        assert code == EXIT_OK

    def test_stdout(self, capsys):
        assert main(["flow", "--p", "0.9", "--q", "0.9", "--init=0.3,0", "--exclude-timestamp"]) == EXIT_OK
        text = capsys.readouterr().out
        assert text.startswith("# tool: markovgf")
        assert "limit_report" in text


class TestBasin:
    def test_sweep(self, tmp_path):
        code, out = run(tmp_path, "b.csv", "basin", "--p", "0.9", "--q", "0.9", "--grid", "11x11")
        assert code == EXIT_OK
        _, cols, rows, footer = read_csv(str(out))
        assert cols == ["e", "w", "predicted", "integrated", "agree"]
        summary = json.loads(footer["summary"])
        assert summary["cells"] + summary["excluded_in_band"] == 121
        assert summary["agreement_rate"] == 1.0 and summary["disagreements"] == 0
        assert set(column(cols, rows, "agree", str)) == {"true"}

    def test_predicted_only(self, tmp_path):
        code, out = run(tmp_path, "b.csv", "basin", "--p", "0.1", "--q", "0.1", "--grid", "5x5", "--predicted-only")
        assert code == EXIT_OK
        _, cols, rows, footer = read_csv(str(out))
        assert json.loads(footer["summary"])["agreement_rate"] is None
        # missing values use the NaN marker
        assert set(column(cols, rows, "integrated", str)) == {"nan"}

    def test_local_min_lens_below_saddle(self, tmp_path):
        code, out = run(tmp_path, "b.csv", "basin", "--p", "0.1", "--q", "0.1", "--grid", "21x21")
        assert code == EXIT_OK
        _, cols, rows, _ = read_csv(str(out))
        g = {"e": cols.index("e"), "w": cols.index("w"), "pred": cols.index("predicted")}
        lens = [r for r in rows if r[g["pred"]] == "ToLocalMin"]
        assert lens
        for r in lens:
            e, w = float(r[g["e"]]), float(r[g["w"]])
            assert w < -2 ** -0.5 and abs(e) < saddle_contour(w)

    def test_degenerate_kernel(self, tmp_path):
        code, _ = run(tmp_path, "b.csv", "basin", "--p", "0.3", "--q", "0.7")
        assert code == EXIT_CONFIG

    def test_no_3d_prediction(self, tmp_path):
        code, _ = run(tmp_path, "b.csv", "basin", "--p", "0.3", "--q", "0.2", "--mode", "attention3d", "--predicted-only")
        assert code == EXIT_CONFIG


class TestVerify:
    def test_default_run_passes(self, tmp_path):
        import time

        t0 = time.perf_counter()
        code, out = run(tmp_path, "v.csv", "verify")
        assert code == EXIT_OK
        assert time.perf_counter() - t0 < 120
        _, cols, rows, footer = read_csv(str(out))
        assert len(rows) == 10 and set(column(cols, rows, "passed", str)) == {"true"}
        assert json.loads(footer["all_passed"]) is True

    def test_single_check(self, tmp_path):
        code, out = run(tmp_path, "v.csv", "verify", "--only", "saddle_energy", "--only", "bias_optimality")
        assert code == EXIT_OK
        _, cols, rows, footer = read_csv(str(out))
        assert column(cols, rows, "check", str) == ["saddle_energy", "bias_optimality"]
        assert json.loads(footer["all_passed"]) is True

    def test_coarse_fd_step_fails(self, tmp_path):
        code, out = run(tmp_path, "v.csv", "verify", "--only", "derivative_oracles", "--fd-h", "1e-1")
        assert code == EXIT_VERIFY_FAILED
        _, cols, rows, _ = read_csv(str(out))
        assert column(cols, rows, "passed", str) == ["false"]

    def test_report_is_reproducible(self, tmp_path):
        args = ("verify", "--only", "loss_ordering", "--only", "full_model_collapse", "--seed", "3")
        _, out = run(tmp_path, "a.csv", *args)
        first = out.read_bytes()
        run(tmp_path, "a.csv", *args)
        assert out.read_bytes() == first

    @pytest.mark.parametrize("extra", [["--only", "nope"], ["--fd-h", "0"]])
    def test_config_errors(self, tmp_path, extra):
        code, _ = run(tmp_path, "v.csv", "verify", *extra)
        assert code == EXIT_CONFIG


class TestSample:
    def test_bits(self, tmp_path):
        code, out = run(tmp_path, "s.txt", "sample", "--p", "0.5", "--q", "0.5", "--n", "64", "--seed", "4")
        assert code == EXIT_OK
        lines = out.read_text().splitlines()
        bits = lines[-1]
        assert len(bits) == 64 and set(bits) <= {"0", "1"}
        meta = read_csv(out.read_text())[0]
        assert meta["n"] == "64" and meta["seed"] == "4"

    def test_same_seed_same_bits(self, tmp_path):
        args = ("sample", "--p", "0.2", "--q", "0.3", "--n", "100", "--seed", "1")
        _, out = run(tmp_path, "a.txt", *args)
        first = out.read_bytes()
        run(tmp_path, "a.txt", *args)
        assert out.read_bytes() == first

    def test_rejects_empty(self, tmp_path):
        code, _ = run(tmp_path, "s.txt", "sample", "--p", "0.2", "--q", "0.3", "--n", "0")
        assert code == EXIT_CONFIG

    def test_module_entry_point(self):
        import subprocess
        import sys

        res = subprocess.run(
            [sys.executable, "-m", "markovgf", "sample", "--p", "0.2", "--q", "0.3", "--n", "8", "--exclude-timestamp"],
            capture_output=True,
            text=True,
            check=True,
        )
        assert len(res.stdout.splitlines()[-1]) == 8
