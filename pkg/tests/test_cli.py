import csv

import numpy as np
import pytest

from implied_posterior.cli import EXIT_DATA, EXIT_SOLVER, EXIT_USAGE, main
from implied_posterior.data import load_csv, load_german_credit, save_csv, split_consecutive


def _summary(path):
    out = {}
    for line in path.read_text().splitlines():
        k, _, v = line.partition("=")
        out[k] = float(v)
    return out


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


@pytest.fixture
def tutorial_csv(tmp_path):
    path = tmp_path / "tut.csv"
    assert main(["gen-data", "--preset", "tutorial", "--out", str(path)]) == 0
    return path


class TestGenData:
    def test_tutorial_preset(self, tutorial_csv):
        ds = load_csv(tutorial_csv, label_column=0)
        assert len(ds) == 20 and ds.n_plus == 10

    def test_repeatable(self, tmp_path, tutorial_csv):
        again = tmp_path / "again.csv"
        main(["gen-data", "--preset", "tutorial", "--out", str(again)])
        assert again.read_bytes() == tutorial_csv.read_bytes()

    def test_explicit_spec(self, tmp_path):
        out = tmp_path / "g.csv"
        code = main(["gen-data", "--out", str(out), "--mean-plus", "1,1", "--cov-plus", "1,0;0,1",
                     "--mean-minus=-1,-1", "--cov-minus", "2,0.5;0.5,1", "--n-plus", "3",
                     "--n-minus", "4", "--seed", "3"])
        assert code == 0
        assert len(load_csv(out, label_column=0)) == 7

    def test_bad_covariance(self, tmp_path, capsys):
        code = main(["gen-data", "--out", str(tmp_path / "x.csv"), "--mean-plus", "0,0",
                     "--cov-plus", "1,0;0,-1", "--mean-minus", "1,1", "--cov-minus", "1,0;0,1",
                     "--n-plus", "3", "--n-minus", "3"])
        assert code == EXIT_DATA
        assert "positive definite" in capsys.readouterr().err

    def test_incomplete_spec(self, tmp_path):
        assert main(["gen-data", "--out", str(tmp_path / "x.csv")]) == EXIT_USAGE


class TestTrain:
    def test_separable_toy_has_no_slack(self, tmp_path, capsys):
        data = tmp_path / "sep.csv"
        data.write_text("label,f0,f1\n1,2,2\n1,3,1.5\n-1,-2,-1\n-1,-3,-2.5\n")
        code = main(["train", "--data", str(data), "--kernel", "linear", "--c-plus", "100",
                     "--c-minus", "100", "--out", str(tmp_path / "m.model")])
        assert code == 0
        out = dict(line.split("=", 1) for line in capsys.readouterr().out.splitlines())
        assert float(out["max_slack"]) <= 1e-3
        assert float(out["max_kkt_violation"]) <= 1e-3

    def test_german_base_model(self, tmp_path, capsys):
        train, _ = split_consecutive(load_german_credit(), 500)
        save_csv(train, tmp_path / "train.csv")
        code = main(["train", "--preset", "german", "--data", str(tmp_path / "train.csv"),
                     "--out", str(tmp_path / "m.model")])
        assert code == 0
        out = dict(line.split("=", 1) for line in capsys.readouterr().out.splitlines())
        assert float(out["applied_c_plus"]) == 5.0 and float(out["applied_c_minus"]) == 5.0
        gap = float(out["duality_gap"])
        assert gap <= 1e-3 * (1 + abs(float(out["dual_objective"])))

    def test_single_class(self, tmp_path):
        data = tmp_path / "one.csv"
        data.write_text("1,0.5\n1,0.7\n")
        assert main(["train", "--data", str(data), "--out", str(tmp_path / "m")]) == EXIT_DATA

    def test_non_convergence_exit_code(self, tmp_path, tutorial_csv):
        code = main(["train", "--data", str(tutorial_csv), "--kernel", "rbf", "--c-plus", "100",
                     "--c-minus", "100", "--max-iter", "1", "--out", str(tmp_path / "m")])
        assert code == EXIT_SOLVER


class TestGridAndEstimate:
    def test_tutorial_grid_then_estimate(self, tmp_path, tutorial_csv):
        g = tmp_path / "grid"
        assert main(["grid", "--preset", "tutorial", "--data", str(tutorial_csv), "--out", str(g)]) == 0
        levels = _rows(g / "levels.csv")
        assert len(levels) == 9
        assert float(levels[0]["applied_c_plus"]) == pytest.approx(2.0)
        assert float(levels[0]["applied_c_minus"]) == pytest.approx(18.0)
        est, table = tmp_path / "e.csv", tmp_path / "t.csv"
        code = main(["estimate", "--grid", str(g), "--data", str(tutorial_csv), "--out", str(est),
                     "--table", str(table)])
        assert code == 0
        rows = _rows(est)
        assert len(rows) == 20
        assert set(rows[0]) == {"id", "value", "positiveVotes", "onPlaneCount", "degenerate"}
        for r in rows:
            assert 1 / 11 <= float(r["value"]) <= 10 / 11
        assert len(_rows(table)) == 20 * 9

    def test_wide_grid_has_201_entries(self, tmp_path, tutorial_csv):
        g = tmp_path / "grid"
        code = main(["grid", "--data", str(tutorial_csv), "--kernel", "linear", "--c-plus", "10",
                     "--c-minus", "10", "--levels", "199", "--out", str(g)])
        assert code == 0
        manifest = (g / "manifest.txt").read_text()
        assert manifest.count("\nentry=") + 2 == 201

    def test_zero_levels(self, tmp_path, tutorial_csv):
        code = main(["grid", "--data", str(tutorial_csv), "--levels", "0", "--out", str(tmp_path / "g")])
        assert code == EXIT_USAGE

    def test_missing_grid(self, tmp_path, tutorial_csv):
        code = main(["estimate", "--grid", str(tmp_path / "none"), "--data", str(tutorial_csv),
                     "--out", str(tmp_path / "e.csv")])
        assert code == EXIT_DATA

    def test_scaling_travels_with_grid(self, tmp_path, tutorial_csv):
        g = tmp_path / "grid"
        main(["grid", "--preset", "tutorial", "--scaling", "minmax", "--data", str(tutorial_csv),
              "--out", str(g)])
        assert (g / "scaling.txt").exists()
        est = tmp_path / "e.csv"
        assert main(["estimate", "--grid", str(g), "--data", str(tutorial_csv), "--out", str(est)]) == 0


class TestCalibrateAndRoc:
    def test_three_columns(self, tmp_path):
        inp = tmp_path / "s.csv"
        inp.write_text("id,raw,platt,implied,label\n0,-1.0,0.2,0.3,0\n1,0.5,0.6,0.5,1\n"
                       "2,2.0,0.9,0.8,1\n3,0.1,0.4,0.6,0\n")
        prefix = tmp_path / "rep"
        code = main(["calibrate", "--input", str(inp), "--normalize", "raw", "--out-prefix", str(prefix)])
        assert code == 0
        s = _summary(tmp_path / "rep_summary.txt")
        assert set(s) == {f"{m}.{c}" for m in ("calibration_score", "auc") for c in ("raw", "platt", "implied")}
        for c in ("raw", "platt", "implied"):
            assert (tmp_path / f"rep_{c}_bins.csv").exists()
            assert (tmp_path / f"rep_{c}_isotonic.csv").exists()

    def test_perfect_estimates_score_zero(self, tmp_path):
        inp = tmp_path / "s.csv"
        inp.write_text("p,label\n0,0\n0,0\n1,1\n1,1\n")
        main(["calibrate", "--input", str(inp), "--out-prefix", str(tmp_path / "r")])
        assert _summary(tmp_path / "r_summary.txt")["calibration_score.p"] == 0.0

    def test_mismatched_lengths(self, tmp_path):
        inp = tmp_path / "s.csv"
        inp.write_text("p\n0.1\n0.2\n0.3\n")
        labels = tmp_path / "l.csv"
        labels.write_text("1,0\n-1,0\n")
        code = main(["calibrate", "--input", str(inp), "--labels", str(labels),
                     "--out-prefix", str(tmp_path / "r")])
        assert code == EXIT_DATA

    def test_roc(self, tmp_path):
        inp = tmp_path / "s.csv"
        inp.write_text("s,label\n0.1,0\n0.4,0\n0.35,1\n0.8,1\n")
        assert main(["roc", "--input", str(inp), "--out-prefix", str(tmp_path / "r")]) == 0
        assert _summary(tmp_path / "r_summary.txt")["auc.s"] == pytest.approx(0.75)


class TestCompare:
    def test_tutorial_preset(self, tmp_path):
        out = tmp_path / "tut"
        assert main(["compare", "--preset", "tutorial", "--out-dir", str(out)]) == 0
        table = _rows(out / "levels_per_point.csv")
        assert len(table) == 20 * 9
        assert {r["class"] for r in table} <= {"positive", "negative", "onPlane"}
        s = _summary(out / "summary.txt")
        assert s["n_models"] == 9 and s["max_separator_angle_deg"] > 0

    def test_missing_input(self, tmp_path):
        code = main(["compare", "--train", str(tmp_path / "a.csv"), "--test", str(tmp_path / "b.csv"),
                     "--out-dir", str(tmp_path / "o")])
        assert code == EXIT_DATA

    def test_needs_inputs(self, tmp_path):
        assert main(["compare", "--out-dir", str(tmp_path / "o")]) == EXIT_USAGE

    def test_reruns_are_byte_identical(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        main(["compare", "--preset", "tutorial", "--out-dir", str(a)])
        main(["compare", "--preset", "tutorial", "--out-dir", str(b)])
        for name in ("levels_per_point.csv", "estimates.csv", "separators.csv", "summary.txt"):
            assert (a / name).read_bytes() == (b / name).read_bytes()

    def test_config_file_and_flag_precedence(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("# tutorial with a coarser grid\npreset=tutorial\nlevels=5\nseed=7\n")
        out = tmp_path / "o"
        assert main(["--config", str(cfg), "compare", "--out-dir", str(out)]) == 0
        assert _summary(out / "summary.txt")["n_models"] == 5
        out2 = tmp_path / "o2"
        assert main(["--config", str(cfg), "compare", "--levels", "3", "--out-dir", str(out2)]) == 0
        assert _summary(out2 / "summary.txt")["n_models"] == 3

    def test_bad_config_key(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("no_such_option=1\n")
        assert main(["--config", str(cfg), "compare", "--out-dir", str(tmp_path / "o")]) == EXIT_USAGE

    @pytest.mark.slow
    def test_compare_equals_individual_commands(self, tmp_path):
        train, test = split_consecutive(load_german_credit(), 500)
        save_csv(train, tmp_path / "train.csv")
        save_csv(test, tmp_path / "test.csv")
        common = ["--kernel", "rbf", "--gamma", "0.001", "--c-plus", "10", "--c-minus", "10"]
        out = tmp_path / "cmp"
        assert main(["compare", "--train", str(tmp_path / "train.csv"), "--test", str(tmp_path / "test.csv"),
                     *common, "--levels", "9", "--out-dir", str(out)]) == 0
        whole = _summary(out / "summary.txt")

        # reference model at weights (0.5, 0.5) and its scores on both splits
        assert main(["train", "--data", str(tmp_path / "train.csv"), *common, "--out", str(tmp_path / "ref.model"),
                     "--score-data", str(tmp_path / "train.csv"), "--scores-out", str(tmp_path / "tr_scores.csv"),
                     "--score-data", str(tmp_path / "test.csv"), "--scores-out", str(tmp_path / "te_scores.csv")]) == 0
        assert main(["calibrate", "--input", str(tmp_path / "te_scores.csv"), "--columns", "rawScore",
                     "--normalize", "rawScore", "--platt-fit", str(tmp_path / "tr_scores.csv"),
                     "--out-prefix", str(tmp_path / "ref")]) == 0
        ref = _summary(tmp_path / "ref_summary.txt")

        assert main(["grid", "--data", str(tmp_path / "train.csv"), *common, "--levels", "9",
                     "--out", str(tmp_path / "grid")]) == 0
        assert main(["estimate", "--grid", str(tmp_path / "grid"), "--data", str(tmp_path / "test.csv"),
                     "--out", str(tmp_path / "est.csv")]) == 0
        assert main(["calibrate", "--input", str(tmp_path / "est.csv"), "--columns", "value",
                     "--labels", str(tmp_path / "test.csv"), "--out-prefix", str(tmp_path / "imp")]) == 0
        imp = _summary(tmp_path / "imp_summary.txt")

        assert ref["calibration_score.rawScore"] == whole["calibration_score.raw"]
        assert ref["auc.rawScore"] == whole["auc.raw"]
        assert ref["calibration_score.platt"] == whole["calibration_score.platt"]
        assert ref["auc.platt"] == whole["auc.platt"]
        assert ref["platt.A"] == whole["platt.A"] and ref["platt.B"] == whole["platt.B"]
        assert imp["calibration_score.value"] == whole["calibration_score.implied"]
        assert imp["auc.value"] == whole["auc.implied"]

        points = _rows(out / "points.csv")
        est = _rows(tmp_path / "est.csv")
        assert [p["impliedEstimate"] for p in points] == [e["value"] for e in est]
        assert np.all(np.diff([int(p["id"]) for p in points]) == 1)
