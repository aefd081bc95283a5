"""CLI behavior: ingestion, subcommands, exit codes, and report round-trips."""

import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from macgof.cli import ingest_csv, main
from macgof.errors import DataError


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


@pytest.fixture()
def linear_csv(tmp_path, rng):
    n = 100
    x = rng.uniform(0, 1, n)
    y = 4.7 * x + rng.normal(size=n)
    path = tmp_path / "lin.csv"
    _write_csv(path, ["x", "y"], list(zip(x, y)))
    return path


class TestIngestCsv:
    def test_basic(self, tmp_path):
        path = tmp_path / "d.csv"
        _write_csv(path, ["a", "y"], [[1, 2], [3, 4], [5, 6]])
        sample, info = ingest_csv(path, "y", ["a"])
        assert sample.n == 3 and info["dropped_rows"] == []
        assert np.array_equal(sample.xs[:, 0], [1, 3, 5])

    def test_missing_rows_dropped_and_reported(self, tmp_path):
        path = tmp_path / "d.csv"
        _write_csv(path, ["a", "y"], [[1, 2], ["NA", 4], [5, ""], [7, 8]])
        sample, info = ingest_csv(path, "y", ["a"])
        assert sample.n == 2
        assert info["dropped_rows"] == [3, 4]  # 1-based line numbers, header is 1

    def test_question_mark_is_missing(self, tmp_path):
        path = tmp_path / "d.csv"
        _write_csv(path, ["a", "y"], [[1, 2], ["?", 4]])
        sample, _ = ingest_csv(path, "y", ["a"])
        assert sample.n == 1

    def test_unknown_column(self, tmp_path):
        path = tmp_path / "d.csv"
        _write_csv(path, ["a", "y"], [[1, 2]])
        with pytest.raises(DataError, match="not in header"):
            ingest_csv(path, "z", ["a"])

    def test_non_numeric_cell_reports_location(self, tmp_path):
        path = tmp_path / "d.csv"
        _write_csv(path, ["a", "y"], [[1, 2], ["abc", 4]])
        with pytest.raises(DataError, match="line 3"):
            ingest_csv(path, "y", ["a"])

    def test_categorical_three_levels_two_indicators(self, tmp_path):
        path = tmp_path / "d.csv"
        _write_csv(path, ["g", "y"], [["a", 1], ["b", 2], ["c", 3], ["b", 4]])
        sample, info = ingest_csv(path, "y", ["g"], {"g": None})
        assert info["columns"] == ["g=b", "g=c"]  # reference level 'a' dropped
        assert np.array_equal(sample.xs, [[0, 0], [1, 0], [0, 1], [1, 0]])

    def test_categorical_explicit_reference(self, tmp_path):
        path = tmp_path / "d.csv"
        _write_csv(path, ["g", "y"], [["1", 1], ["2", 2], ["3", 3]])
        sample, info = ingest_csv(path, "y", ["g"], {"g": "3"})
        assert info["columns"] == ["g=1", "g=2"]

    def test_all_rows_missing(self, tmp_path):
        path = tmp_path / "d.csv"
        _write_csv(path, ["a", "y"], [["NA", 1], ["NA", 2]])
        with pytest.raises(DataError, match="no usable rows"):
            ingest_csv(path, "y", ["a"])

    def test_order_stable(self, tmp_path):
        path = tmp_path / "d.csv"
        rows = [[i, i * 2] for i in range(20)]
        _write_csv(path, ["a", "y"], rows)
        s1, _ = ingest_csv(path, "y", ["a"])
        s2, _ = ingest_csv(path, "y", ["a"])
        assert np.array_equal(s1.xs, s2.xs)
        assert np.array_equal(s1.xs[:, 0], np.arange(20.0))


def _run_cli(args):
    return main([str(a) for a in args])


class TestGofCommand:
    def test_report_written_and_parses(self, linear_csv, tmp_path, capsys):
        out = tmp_path / "report.json"
        code = _run_cli(["gof", "--input", linear_csv, "--response", "y",
                         "--covariates", "x", "--b", "10", "--m", "99", "--k", "25",
                         "--seed", "3", "--out", out, "--no-cache"])
        assert code == 0
        payload = json.loads(out.read_text())
        assert payload["kind"] == "gof"
        assert 0 < payload["results"]["p_value"] <= 1
        assert (tmp_path / "report_bootstrap.csv").exists()
        assert (tmp_path / "report_null.csv").exists()
        assert "p_value=" in capsys.readouterr().out

    def test_missing_response_column_exit_2(self, linear_csv, tmp_path):
        code = _run_cli(["gof", "--input", linear_csv, "--response", "nope",
                         "--covariates", "x", "--seed", "1",
                         "--out", tmp_path / "r.json", "--no-cache"])
        assert code == 2

    def test_missing_file_exit_2(self, tmp_path):
        code = _run_cli(["gof", "--input", tmp_path / "absent.csv", "--response", "y",
                         "--covariates", "x", "--seed", "1",
                         "--out", tmp_path / "r.json", "--no-cache"])
        assert code == 2

    def test_usage_error_exit_1(self, linear_csv, tmp_path):
        code = _run_cli(["gof", "--input", linear_csv, "--response", "y",
                         "--covariates", "x", "--feature-map", "cubic",
                         "--seed", "1", "--out", tmp_path / "r.json", "--no-cache"])
        assert code == 1

    def test_rank_deficient_design_exit_3(self, tmp_path, rng):
        n = 30
        x = rng.normal(size=n)
        path = tmp_path / "dup.csv"
        _write_csv(path, ["x1", "x2", "y"], list(zip(x, x, rng.normal(size=n))))
        code = _run_cli(["gof", "--input", path, "--response", "y",
                         "--covariates", "x1,x2", "--seed", "1",
                         "--out", tmp_path / "r.json", "--no-cache"])
        assert code == 3

    def test_external_means_path(self, tmp_path, rng):
        n = 60
        x = rng.normal(size=n)
        mu = np.exp(0.3 * x)
        y = rng.poisson(mu).astype(float)
        data = tmp_path / "pois.csv"
        _write_csv(data, ["x", "y"], list(zip(x, y)))
        means = tmp_path / "means.csv"
        with open(means, "w") as fh:
            fh.write("mean\n" + "\n".join(repr(float(m)) for m in mu) + "\n")
        out = tmp_path / "r.json"
        code = _run_cli(["gof", "--input", data, "--response", "y", "--covariates", "x",
                         "--external-means", means, "--noise", "poisson",
                         "--b", "10", "--m", "99", "--k", "20", "--seed", "2",
                         "--out", out, "--no-cache"])
        assert code == 0
        payload = json.loads(out.read_text())
        assert payload["model"]["family"] == "poisson"

    def test_cache_reused_across_runs(self, linear_csv, tmp_path):
        cache = tmp_path / "cache"
        args = ["gof", "--input", linear_csv, "--response", "y", "--covariates", "x",
                "--b", "10", "--m", "99", "--k", "20", "--seed", "3",
                "--cache-dir", cache, "--out", tmp_path / "r1.json"]
        assert _run_cli(args) == 0
        entries = list(cache.glob("nulldist_*.json"))
        assert len(entries) == 1
        stamp = entries[0].stat().st_mtime_ns
        args[-1] = tmp_path / "r2.json"
        assert _run_cli(args) == 0
        assert entries[0].stat().st_mtime_ns == stamp


class TestDeterminism:
    def test_same_seed_byte_identical_reports(self, linear_csv, tmp_path):
        outs = []
        for name in ("a.json", "b.json"):
            out = tmp_path / name
            code = _run_cli(["gof", "--input", linear_csv, "--response", "y",
                             "--covariates", "x", "--b", "10", "--m", "99",
                             "--k", "25", "--seed", "11", "--out", out, "--no-cache"])
            assert code == 0
            outs.append(out)
        payloads = []
        for out in outs:
            payload = json.loads(out.read_text())
            payload.pop("timing")
            payloads.append(json.dumps(payload, sort_keys=True))
        assert payloads[0] == payloads[1]
        # companion CSVs carry no timestamps at all
        assert (tmp_path / "a_bootstrap.csv").read_bytes() == \
               (tmp_path / "b_bootstrap.csv").read_bytes()
        assert (tmp_path / "a_null.csv").read_bytes() == \
               (tmp_path / "b_null.csv").read_bytes()


class TestTwoSampleCommand:
    def test_identical_files_give_zero_and_p_one(self, linear_csv, tmp_path):
        out = tmp_path / "ts.json"
        code = _run_cli(["two-sample", "--input-a", linear_csv, "--input-b", linear_csv,
                         "--response", "y", "--covariates", "x",
                         "--permutations", "49", "--k", "20", "--seed", "4",
                         "--out", out])
        assert code == 0
        payload = json.loads(out.read_text())
        assert payload["results"]["mac"] == 0.0
        assert payload["results"]["p_value"] == 1.0

    def test_shifted_sample_detected(self, tmp_path, rng):
        n = 150
        x = rng.normal(size=n)
        a = tmp_path / "a.csv"
        b = tmp_path / "b.csv"
        _write_csv(a, ["x", "y"], list(zip(x, x + rng.normal(size=n))))
        _write_csv(b, ["x", "y"], list(zip(x, 3 * x + rng.normal(size=n))))
        out = tmp_path / "ts.json"
        code = _run_cli(["two-sample", "--input-a", a, "--input-b", b,
                         "--response", "y", "--covariates", "x",
                         "--permutations", "99", "--seed", "4", "--out", out])
        assert code == 0
        assert json.loads(out.read_text())["results"]["p_value"] <= 0.05


class TestNullDistCommand:
    def test_precompute_then_gof_hits_cache(self, linear_csv, tmp_path):
        cache = tmp_path / "cache"
        code = _run_cli(["null-dist", "--input", linear_csv, "--response", "y",
                         "--covariates", "x", "--b", "10", "--m", "99", "--k", "20",
                         "--seed", "3", "--cache-dir", cache])
        assert code == 0
        entries = list(cache.glob("nulldist_*.json"))
        assert len(entries) == 1
        stamp = entries[0].stat().st_mtime_ns
        code = _run_cli(["gof", "--input", linear_csv, "--response", "y",
                         "--covariates", "x", "--b", "10", "--m", "99", "--k", "20",
                         "--seed", "3", "--cache-dir", cache,
                         "--out", tmp_path / "r.json"])
        assert code == 0
        assert entries[0].stat().st_mtime_ns == stamp


class TestPowerSimCommand:
    def test_writes_tidy_csv(self, tmp_path):
        out = tmp_path / "rates.csv"
        code = _run_cli(["power-sim", "--example", "1", "--n", "60", "--c", "1,3",
                         "--reps", "20", "--seed", "5", "--out", out])
        assert code == 0
        with open(out) as fh:
            rows = list(csv.DictReader(fh))
        assert [r["c"] for r in rows] == ["1.0", "3.0"]


class TestReplicateCommand:
    def test_synthetic_study(self, tmp_path):
        out = tmp_path / "rep.json"
        code = _run_cli(["replicate", "--example", "5b", "--reps", "2", "--b", "10",
                         "--m", "99", "--k", "20", "--seed", "6", "--out", out])
        assert code == 0
        payload = json.loads(out.read_text())
        assert len(payload["results"]["p_values"]) == 2

    def test_sunspot_recipe(self, tmp_path, rng):
        from macgof.models import simulate_ar, sunspot_ar9_model

        series = simulate_ar(sunspot_ar9_model(), 150, 100, np.full(9, 50.0), rng)
        path = tmp_path / "series.csv"
        with open(path, "w") as fh:
            fh.write("value\n" + "\n".join(repr(float(v)) for v in series) + "\n")
        out = tmp_path / "rep9.json"
        code = _run_cli(["replicate", "--example", "9", "--input", path,
                         "--model", "ar9", "--b", "10", "--m", "99", "--k", "30",
                         "--seed", "6", "--out", out, "--no-cache"])
        assert code == 0
        payload = json.loads(out.read_text())
        assert payload["model"]["family"] == "fixed-ar"
        assert 0 < payload["results"]["p_value"] <= 1

    def test_example_8_points_at_gof(self, tmp_path):
        code = _run_cli(["replicate", "--example", "8", "--seed", "1",
                         "--out", tmp_path / "x.json"])
        assert code == 1

    def test_fuel_economy_recipe(self, tmp_path, rng):
        """Synthetic file with the expected schema, including '?' missing cells."""
        n = 90
        weight = rng.uniform(1500, 4500, n)
        origin = rng.choice(["1", "2", "3"], n)
        mpg = 45 - 0.008 * weight + rng.normal(size=n)
        rows = []
        for i in range(n):
            hp = "?" if i in (5, 17) else f"{rng.uniform(50, 200):.1f}"
            rows.append([f"{mpg[i]:.2f}", int(rng.integers(3, 9)),
                         f"{rng.uniform(70, 450):.1f}", hp, f"{weight[i]:.1f}",
                         f"{rng.uniform(8, 25):.1f}", int(rng.integers(70, 83)),
                         origin[i]])
        path = tmp_path / "cars.csv"
        _write_csv(path, ["mpg", "cylinders", "displacement", "horsepower",
                          "weight", "acceleration", "model_year", "origin"], rows)
        out = tmp_path / "rep7.json"
        code = _run_cli(["replicate", "--example", "7", "--input", path,
                         "--b", "10", "--m", "99", "--k", "30", "--seed", "2",
                         "--out", out, "--no-cache"])
        assert code == 0
        payload = json.loads(out.read_text())
        assert payload["input"]["n"] == n - 2  # the two '?' rows dropped
        assert "origin=1" in payload["input"]["columns"]
        assert "origin=2" in payload["input"]["columns"]
        assert "origin=3" not in payload["input"]["columns"]


class TestCliSubprocess:
    def test_console_entry_point(self, linear_csv, tmp_path):
        out = tmp_path / "r.json"
        proc = subprocess.run(
            [sys.executable, "-m", "macgof.cli", "gof", "--input", str(linear_csv),
             "--response", "y", "--covariates", "x", "--b", "5", "--m", "99",
             "--k", "15", "--seed", "2", "--out", str(out), "--no-cache"],
            capture_output=True, text=True)
        assert proc.returncode == 0, proc.stderr
        assert out.exists()

    def test_seed_printed_when_absent(self, linear_csv, tmp_path):
        proc = subprocess.run(
            [sys.executable, "-m", "macgof.cli", "gof", "--input", str(linear_csv),
             "--response", "y", "--covariates", "x", "--b", "5", "--m", "99",
             "--k", "15", "--out", str(tmp_path / "r.json"), "--no-cache"],
            capture_output=True, text=True)
        assert proc.returncode == 0, proc.stderr
        assert "using seed" in proc.stderr
