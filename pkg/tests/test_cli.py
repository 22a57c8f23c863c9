"""Command-line harness: ingest, reports, sweep, concat, calibrate, exit codes."""

import dataclasses
import math

import numpy as np
import pytest

from zvnav.cli import (
    CsvFormat,
    STANDARD_GRAVITY,
    attach_labels,
    cmd_calibrate,
    cmd_concat,
    cmd_run,
    cmd_simulate,
    cmd_sweep,
    concat_recordings,
    format_calibration,
    format_report,
    format_sweep_table,
    format_trace,
    ingest_csv,
    ingest_labels,
    main,
    parse_report,
    read_meta,
    write_labels_csv,
    write_recording_csv,
    write_meta,
    _rmse,
)
from zvnav.config import (
    default_config,
    format_config,
    load_config,
    merge_config,
    parse_config_text,
)
from zvnav.core import NoiseModel, Recording
from zvnav.errors import CalibrationDataError, ConfigError, InputFormatError, NumericalError
from zvnav.gaitsim import normal_profile, simulate

NM = NoiseModel(sigma_a=0.2, sigma_w=0.02)


@pytest.fixture(scope="module")
def walk_rec():
    lab = simulate(normal_profile(NM, seed=41), 12.0)
    return lab.to_recording("walk-41", "normal")


@pytest.fixture(scope="module")
def still_rec():
    profile = dataclasses.replace(
        normal_profile(NM, seed=9), speed=0.0, step_length=0.0
    )
    return simulate(profile, 6.0).to_recording("still-9", "still")


@pytest.fixture()
def walk_files(walk_rec, tmp_path):
    csv = tmp_path / "walk-41.csv"
    labels = tmp_path / "walk-41.labels.csv"
    write_recording_csv(str(csv), walk_rec)
    write_labels_csv(str(labels), walk_rec.t, walk_rec.stationary)
    write_meta(str(tmp_path / "walk-41.meta"), walk_rec)
    return csv, labels


class TestCsvIngest:
    def test_write_read_round_trip_is_exact(self, walk_rec, tmp_path):
        path = tmp_path / "rt.csv"
        write_recording_csv(str(path), walk_rec)
        back = ingest_csv(str(path))
        assert np.array_equal(back.t, walk_rec.t)
        assert np.array_equal(back.accel, walk_rec.accel)
        assert np.array_equal(back.gyro, walk_rec.gyro)
        assert back.id == "rt"

    def test_three_rows_give_three_samples(self, tmp_path):
        path = tmp_path / "three.csv"
        path.write_text(
            "t,ax,ay,az,gx,gy,gz\n"
            "0.0,0,0,9.81,0,0,0\n"
            "0.004,0,0,9.81,0,0,0\n"
            "0.008,0,0,9.81,0,0,0\n"
        )
        assert len(ingest_csv(str(path))) == 3

    def test_malformed_field_names_row(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text(
            "t,ax,ay,az,gx,gy,gz\n0.0,0,0,9.81,0,0,0\n0.004,0,oops,9.81,0,0,0\n"
        )
        with pytest.raises(InputFormatError, match="row 2.*'oops'"):
            ingest_csv(str(path))

    def test_wrong_field_count_names_row(self, tmp_path):
        path = tmp_path / "short.csv"
        path.write_text("t,ax,ay,az,gx,gy,gz\n0.0,0,0,9.81,0,0\n")
        with pytest.raises(InputFormatError, match="row 1.*got 6"):
            ingest_csv(str(path))

    def test_shuffled_timestamps_name_first_offender(self, tmp_path):
        path = tmp_path / "shuf.csv"
        path.write_text(
            "t,ax,ay,az,gx,gy,gz\n"
            "0.0,0,0,9.81,0,0,0\n"
            "0.008,0,0,9.81,0,0,0\n"
            "0.004,0,0,9.81,0,0,0\n"
            "0.012,0,0,9.81,0,0,0\n"
        )
        with pytest.raises(InputFormatError, match="row 3: timestamp 0.004"):
            ingest_csv(str(path))

    def test_wrong_header_rejected(self, tmp_path):
        path = tmp_path / "hdr.csv"
        path.write_text("time,ax,ay,az,gx,gy,gz\n0.0,0,0,9.81,0,0,0\n")
        with pytest.raises(InputFormatError, match="column 1"):
            ingest_csv(str(path))

    def test_empty_and_headerless_files_rejected(self, tmp_path):
        empty = tmp_path / "empty.csv"
        empty.write_text("")
        with pytest.raises(InputFormatError, match="empty"):
            ingest_csv(str(empty))
        headless = tmp_path / "nodata.csv"
        headless.write_text("t,ax,ay,az,gx,gy,gz\n")
        with pytest.raises(InputFormatError, match="no data rows"):
            ingest_csv(str(headless))

    def test_deg_flag_converts_gyro(self, tmp_path):
        path = tmp_path / "deg.csv"
        path.write_text(
            "t,ax,ay,az,gx,gy,gz\n0.0,0,0,9.81,90,0,0\n0.004,0,0,9.81,90,0,0\n"
        )
        rec = ingest_csv(str(path), CsvFormat(gyro_unit="deg"))
        assert rec.gyro[0, 0] == pytest.approx(math.pi / 2, rel=1e-12)
        si = ingest_csv(str(path))
        assert si.gyro[0, 0] == 90.0

    def test_g_flag_converts_accel(self, tmp_path):
        path = tmp_path / "gee.csv"
        path.write_text(
            "t,ax,ay,az,gx,gy,gz\n0.0,0,0,1.0,0,0,0\n0.004,0,0,1.0,0,0,0\n"
        )
        rec = ingest_csv(str(path), CsvFormat(accel_unit="g"))
        assert rec.accel[0, 2] == STANDARD_GRAVITY

    def test_header_annotation_sets_units(self, tmp_path):
        path = tmp_path / "ann.csv"
        path.write_text(
            "t,ax,ay,az(g),gx_deg,gy[deg/s],gz (deg/s)\n"
            "0.0,0,0,1.0,90,0,0\n0.004,0,0,1.0,90,0,0\n"
        )
        rec = ingest_csv(str(path))
        assert rec.accel[0, 2] == STANDARD_GRAVITY
        assert rec.gyro[0, 0] == pytest.approx(math.pi / 2, rel=1e-12)

    def test_annotation_conflicting_with_flag_rejected(self, tmp_path):
        path = tmp_path / "conf.csv"
        path.write_text("t,ax,ay,az,gx_deg,gy,gz\n0.0,0,0,9.81,0,0,0\n")
        with pytest.raises(InputFormatError, match="deg but --gyro-unit=rad"):
            ingest_csv(str(path), CsvFormat(gyro_unit="rad"))

    def test_mixed_annotations_rejected(self, tmp_path):
        path = tmp_path / "mixed.csv"
        path.write_text("t,ax,ay,az,gx_deg,gy_rad,gz\n0.0,0,0,9.81,0,0,0\n")
        with pytest.raises(InputFormatError, match="conflicting gyro unit"):
            ingest_csv(str(path))

    def test_unreadable_annotation_needs_flag(self, tmp_path):
        path = tmp_path / "odd.csv"
        path.write_text("t,ax,ay,az,gx[furlong],gy,gz\n0.0,0,0,9.81,0,0,0\n")
        with pytest.raises(InputFormatError, match="pass --gyro-unit"):
            ingest_csv(str(path))
        rec = ingest_csv(str(path), CsvFormat(gyro_unit="rad"))
        assert len(rec) == 1


class TestLabels:
    def test_labels_round_trip(self, walk_rec, tmp_path):
        csv = tmp_path / "w.csv"
        labels = tmp_path / "w.labels.csv"
        write_recording_csv(str(csv), walk_rec)
        write_labels_csv(str(labels), walk_rec.t, walk_rec.stationary)
        rec = attach_labels(ingest_csv(str(csv)), *ingest_labels(str(labels)))
        assert np.array_equal(rec.stationary, walk_rec.stationary)

    def test_length_mismatch_rejected(self, walk_rec, tmp_path):
        labels = tmp_path / "short.labels.csv"
        write_labels_csv(str(labels), walk_rec.t[:-1], walk_rec.stationary[:-1])
        csv = tmp_path / "w.csv"
        write_recording_csv(str(csv), walk_rec)
        with pytest.raises(InputFormatError, match="carry 3000 rows"):
            attach_labels(ingest_csv(str(csv)), *ingest_labels(str(labels)))

    def test_time_base_mismatch_rejected(self, walk_rec, tmp_path):
        labels = tmp_path / "off.labels.csv"
        write_labels_csv(str(labels), walk_rec.t + 0.002, walk_rec.stationary)
        csv = tmp_path / "w.csv"
        write_recording_csv(str(csv), walk_rec)
        with pytest.raises(InputFormatError, match="labels row 1"):
            attach_labels(ingest_csv(str(csv)), *ingest_labels(str(labels)))

    def test_nonbinary_label_rejected(self, tmp_path):
        path = tmp_path / "l.csv"
        path.write_text("t,stationary\n0.0,1\n0.004,2\n")
        with pytest.raises(InputFormatError, match="row 2.*0 or 1"):
            ingest_labels(str(path))


class TestConfig:
    def test_defaults_cover_schema(self):
        cfg = default_config()
        assert cfg["detector"] == "shoe"
        assert cfg["threshold_mode"] == "adaptive"
        assert cfg["epsilon"] == 0.05

    def test_parse_skips_comments_and_blanks(self):
        cfg = parse_config_text("# c\n\nc1=-30\n detector = are \n")
        assert cfg == {"c1": -30.0, "detector": "are"}

    def test_unknown_key_rejected(self):
        with pytest.raises(ConfigError, match="unknown config key"):
            parse_config_text("volume=11\n")

    def test_bad_value_rejected(self):
        with pytest.raises(ConfigError, match="not a number"):
            parse_config_text("c1=loud\n")
        with pytest.raises(ConfigError, match="not one of"):
            parse_config_text("detector=magic\n")

    def test_merge_precedence(self):
        cfg = merge_config({"c1": -30.0, "c2": -10.0}, {"c1": -40.0})
        assert cfg["c1"] == -40.0
        assert cfg["c2"] == -10.0
        assert cfg["c3"] == 0.0

    def test_format_parse_round_trip(self):
        cfg = merge_config({"c1": -123.456, "detector": "are"})
        again = merge_config(parse_config_text(format_config(cfg)))
        assert again == cfg

    def test_load_config_reads_file(self, tmp_path):
        path = tmp_path / "x.cfg"
        path.write_text("sigma_a=0.5\n")
        assert load_config(str(path)) == {"sigma_a": 0.5}
        with pytest.raises(ConfigError, match="cannot read"):
            load_config(str(tmp_path / "missing.cfg"))


class TestRunAndReport:
    def test_stationary_recording_closes_loop(self, still_rec):
        report = cmd_run(still_rec, default_config())
        assert report.loop_closure_error_m < 0.05
        assert report.zupt_count > 0.9 * len(still_rec)

    def test_report_round_trips(self, walk_rec):
        report = cmd_run(walk_rec, default_config())
        text = format_report(report)
        parsed = parse_report(text)
        assert parsed["recording_id"] == "walk-41"
        assert parsed["loop_closure_error_m"] == report.loop_closure_error_m
        assert parsed["n_samples"] == len(walk_rec)
        assert parsed["zupt_count"] == report.zupt_count
        assert parsed["params.c1"] == report.params_used["c1"]
        assert parsed["final_position_m"] == tuple(report.trajectory[-1])

    def test_parse_rejects_foreign_text(self):
        with pytest.raises(InputFormatError, match="not a zvnav-report"):
            parse_report("hello=world\n")

    def test_runs_are_deterministic(self, walk_rec):
        cfg = default_config()
        a = format_report(cmd_run(walk_rec, cfg))
        b = format_report(cmd_run(walk_rec, cfg))
        assert a == b

    def test_fixed_mode_matches_degenerate_adaptive(self, walk_rec):
        adaptive = merge_config({"c1": -35.0, "c2": 0.0, "c3": 0.0})
        fixed = merge_config({"threshold_mode": "fixed", "log_gamma": -35.0})
        ra = cmd_run(walk_rec, adaptive)
        rf = cmd_run(walk_rec, fixed)
        assert np.array_equal(ra.decisions, rf.decisions)
        assert ra.loop_closure_error_m == rf.loop_closure_error_m

    def test_fixed_mode_survives_underflowing_gamma(self, still_rec):
        # gamma = exp(-900) is not representable; the log-domain compare is
        report = cmd_run(
            still_rec, merge_config({"threshold_mode": "fixed", "log_gamma": -900.0})
        )
        assert report.zupt_count > 0

    def test_trace_table_shape(self, still_rec):
        cfg = default_config()
        report = cmd_run(still_rec, cfg)
        lines = format_trace(report, still_rec.t).splitlines()
        assert lines[0].split("\t") == [
            "t", "logl", "log_gamma", "decision", "px", "py", "pz",
        ]
        assert len(lines) == len(still_rec) + 1
        warm = lines[1].split("\t")
        assert warm[1] == "nan" and warm[2] == "nan"
        first_full = lines[cfg["window_samples"]].split("\t")
        assert first_full[1] != "nan"

    def test_bad_window_rejected(self, still_rec):
        with pytest.raises(ConfigError, match="window_samples"):
            cmd_run(still_rec, merge_config({"window_samples": 0}))


class TestSweep:
    def test_row_count_and_columns(self, walk_rec, still_rec):
        rows = cmd_sweep([walk_rec, still_rec], default_config(), [-20.0, -200.0])
        subsets = {r["subset"] for r in rows}
        assert subsets == {"normal", "still", "all"}
        for subset in subsets:
            sub = [r for r in rows if r["subset"] == subset]
            assert len(sub) == 3  # grid + adaptive
            assert [r["threshold_mode"] for r in sub] == ["fixed", "fixed", "adaptive"]
        table = format_sweep_table(rows)
        assert table.splitlines()[0] == "threshold_mode\tc1\tsubset\trmse_m\tn_recordings"
        assert len(table.splitlines()) == len(rows) + 1

    def test_recording_without_loop_length_excluded_with_warning(self, walk_rec):
        bare = dataclasses.replace(walk_rec, id="bare", loop_length_m=None)
        with pytest.warns(UserWarning, match="bare.*excluded"):
            rows = cmd_sweep([walk_rec, bare], default_config(), [-20.0])
        for row in rows:
            assert row["n_recordings"] == 1

    def test_single_recording_single_point_grid(self, walk_rec):
        bare = dataclasses.replace(walk_rec, gait_tag=None)
        rows = cmd_sweep([bare], default_config(), [-50.0])
        assert [(r["threshold_mode"], r["subset"]) for r in rows] == [
            ("fixed", "all"),
            ("adaptive", "all"),
        ]

    def test_rmse_of_zero_errors_is_zero(self):
        assert _rmse([0.0, 0.0, 0.0]) == 0.0
        assert _rmse([3.0, 4.0]) == pytest.approx(math.sqrt(12.5))
        assert math.isnan(_rmse([]))

    def test_empty_grid_rejected(self, walk_rec):
        with pytest.raises(ConfigError, match="non-empty"):
            cmd_sweep([walk_rec], default_config(), [])


class TestConcat:
    def test_concat_of_one_equals_run(self, walk_rec):
        cfg = default_config()
        assert format_report(cmd_concat([walk_rec], cfg)) == format_report(
            cmd_run(walk_rec, cfg)
        )

    def test_two_stationary_copies_stay_put(self, still_rec):
        report = cmd_concat([still_rec, still_rec], default_config())
        assert report.loop_closure_error_m < 0.1
        assert len(report.decisions) == 2 * len(still_rec)

    def test_seam_carries_sample_period(self, still_rec, walk_rec):
        merged = concat_recordings([still_rec, walk_rec])
        n = len(still_rec)
        assert len(merged) == n + len(walk_rec)
        seam_dt = merged.t[n] - merged.t[n - 1]
        assert seam_dt == pytest.approx(walk_rec.t[1] - walk_rec.t[0], rel=1e-12)
        assert (np.diff(merged.t) > 0).all()
        assert np.array_equal(
            merged.stationary, np.concatenate([still_rec.stationary, walk_rec.stationary])
        )

    def test_labels_dropped_unless_everywhere(self, still_rec, walk_rec):
        bare = dataclasses.replace(walk_rec, stationary=None)
        assert concat_recordings([still_rec, bare]).stationary is None

    def test_empty_concat_rejected(self):
        with pytest.raises(ConfigError, match="at least one"):
            cmd_concat([], default_config())


class TestCalibrate:
    def test_uninformative_prior_zeroes_speed_term(self, walk_rec):
        params = cmd_calibrate(walk_rec, default_config())
        assert params.c2 < 0.0
        assert params.c3 == 0.0

    def test_informative_prior_engages_speed_term(self, walk_rec):
        params = cmd_calibrate(walk_rec, merge_config({"prior": "informative"}))
        assert params.c3 != 0.0

    def test_missing_labels_rejected(self, walk_rec):
        bare = dataclasses.replace(walk_rec, stationary=None)
        with pytest.raises(CalibrationDataError, match="no stationary labels"):
            cmd_calibrate(bare, default_config())

    def test_out_of_range_epsilon_rejected(self, walk_rec):
        with pytest.raises(ConfigError, match="epsilon"):
            cmd_calibrate(walk_rec, merge_config({"epsilon": 0.6}))

    def test_calibration_output_merges_into_config(self, walk_rec):
        params = cmd_calibrate(walk_rec, default_config())
        cfg = merge_config(parse_config_text(format_calibration(params)))
        assert cfg["c1"] == params.c1
        assert cfg["c2"] == params.c2
        assert cfg["threshold_mode"] == "adaptive"
        report = cmd_run(walk_rec, cfg)
        assert report.loop_closure_error_m < 0.01 * walk_rec.loop_length_m


class TestMainEntry:
    def test_run_writes_report_and_trace(self, walk_files, tmp_path, capsys):
        csv, _ = walk_files
        report_path = tmp_path / "out.report"
        trace_path = tmp_path / "out.tsv"
        code = main([
            "run", str(csv),
            "--report", str(report_path), "--trace", str(trace_path),
        ])
        assert code == 0
        parsed = parse_report(report_path.read_text())
        assert parsed["recording_id"] == "walk-41"
        assert len(trace_path.read_text().splitlines()) == parsed["n_samples"] + 1

    def test_run_prints_report_to_stdout(self, walk_files, capsys):
        csv, _ = walk_files
        assert main(["run", str(csv)]) == 0
        out = capsys.readouterr().out
        assert parse_report(out)["recording_id"] == "walk-41"

    def test_missing_file_exits_2(self, capsys):
        assert main(["run", "/no/such/file.csv"]) == 2
        assert "input error" in capsys.readouterr().err

    def test_bad_config_value_exits_3(self, walk_files, capsys):
        csv, labels = walk_files
        code = main([
            "calibrate", str(csv), "--labels", str(labels), "--epsilon", "0.6",
        ])
        assert code == 3
        assert "config error" in capsys.readouterr().err

    def test_numerical_failure_exits_4(self, walk_files, capsys, monkeypatch):
        csv, _ = walk_files
        def boom(rec, cfg):
            raise NumericalError("synthetic failure")
        monkeypatch.setattr("zvnav.cli.cmd_run", boom)
        assert main(["run", str(csv)]) == 4
        assert "numerical error" in capsys.readouterr().err

    def test_usage_error_exits_3(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["run"])  # missing recording operand
        assert exc.value.code == 3

    def test_print_config_echoes_overrides_and_skips_input(self, capsys):
        code = main([
            "run", "/no/such/file.csv", "--print-config", "--c1", "-33.5",
            "--detector", "are",
        ])
        assert code == 0
        out = capsys.readouterr().out
        assert "c1=-33.5" in out
        assert "detector=are" in out
        cfg = parse_config_text(out)
        assert cfg["window_samples"] == 5

    def test_config_file_and_override_precedence(self, walk_files, tmp_path, capsys):
        csv, _ = walk_files
        cfg_file = tmp_path / "pipe.cfg"
        cfg_file.write_text("c1=-50\nsigma_a=0.3\n")
        code = main([
            "run", str(csv), "--config", str(cfg_file), "--c1", "-60",
            "--print-config",
        ])
        assert code == 0
        cfg = parse_config_text(capsys.readouterr().out)
        assert cfg["c1"] == -60.0
        assert cfg["sigma_a"] == 0.3

    def test_simulate_then_calibrate_then_run(self, tmp_path, capsys):
        prefix = str(tmp_path / "sim")
        assert main(["simulate", "--gait", "normal", "--duration", "12",
                     "--seed", "4", "--out", prefix]) == 0
        params_path = tmp_path / "fit.cfg"
        assert main(["calibrate", prefix + ".csv",
                     "--labels", prefix + ".labels.csv",
                     "--out", str(params_path)]) == 0
        capsys.readouterr()  # drop the simulate banner
        assert main(["run", prefix + ".csv",
                     "--config", str(params_path)]) == 0
        parsed = parse_report(capsys.readouterr().out)
        meta = read_meta(prefix + ".meta")
        assert meta["gait_tag"] == "normal"
        assert parsed["loop_closure_error_m"] < 0.01 * meta["loop_length_m"]

    def test_sweep_uses_meta_tags(self, walk_files, tmp_path, capsys):
        csv, _ = walk_files
        out = tmp_path / "table.tsv"
        code = main(["sweep", str(csv), "--grid=-20,-200", "--out", str(out)])
        assert code == 0
        lines = out.read_text().splitlines()
        assert lines[0] == "threshold_mode\tc1\tsubset\trmse_m\tn_recordings"
        assert len(lines) == 1 + 2 * 3  # subsets normal + all, grid 2 + adaptive
        assert any("\tnormal\t" in line for line in lines[1:])

    def test_concat_cli_matches_run(self, walk_files, capsys):
        csv, _ = walk_files
        assert main(["concat", str(csv)]) == 0
        concat_out = capsys.readouterr().out
        assert main(["run", str(csv)]) == 0
        assert concat_out == capsys.readouterr().out

    def test_straight_path_simulation_has_no_loop_length(self, tmp_path, capsys):
        prefix = str(tmp_path / "line")
        assert main(["simulate", "--gait", "normal", "--duration", "12",
                     "--path", "straight", "--out", prefix]) == 0
        meta = read_meta(prefix + ".meta")
        assert "loop_length_m" not in meta
