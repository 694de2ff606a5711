import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mixtopo.sweeps import (DATA_COLUMNS, AxisRange, ConfigError, MultipleTransitions,
                            NoTransition, SweepConfig, SweepRecord, detect_transition,
                            detect_transitions, emit_figure, evaluate_point, figure_configs,
                            parse_csv, render_csv, run_config_file, run_sweep)


def loop_config(**kw):
    base = dict(family="NH2", embedding="Loop2D", invariant="uhlmann_phase",
                axis=AxisRange("T", 0.5, 0.5, 0.1), samples=64)
    base.update(kw)
    return SweepConfig(**base)


def series(xs, ys):
    return [SweepRecord(axis=x, value=y) for x, y in zip(xs, ys)]


class TestAxisRange:
    def test_inclusive(self):
        assert AxisRange("T", 0.1, 3.0, 0.05).values()[-1] == 3.0
        assert len(AxisRange("T", 0.1, 3.0, 0.05).values()) == 59

    def test_single_point(self):
        assert AxisRange("T", 0.7, 0.7, 0.1).values() == [0.7]

    def test_values_are_rounded(self):
        assert AxisRange("d", 0.0, 4.0, 0.05).values()[3] == 0.15


class TestSweepConfig:
    @settings(max_examples=40, deadline=None)
    @given(st.floats(0.0, 3.0), st.floats(0.01, 1.0), st.integers(1, 2), st.integers(16, 2000),
           st.sampled_from(["re", "abs"]), st.booleans(), st.text(max_size=8))
    def test_json_round_trip(self, start, step, windings, samples, conv, unwrapped, label):
        cfg = loop_config(axis=AxisRange("T", start + 0.01, start + 1.0, step), windings=windings,
                          samples=samples, weight_convention=conv, unwrapped=unwrapped, label=label)
        assert SweepConfig.from_json(cfg.to_json()) == cfg

    def test_round_trip_with_grid_and_outer(self):
        cfg = SweepConfig("NH4", "S4", "chern2", AxisRange("T", 0.1, 0.2, 0.1),
                          outer=AxisRange("R", 0.5, 2.0, 1.5), grid=(16, 16, 8, 8))
        assert SweepConfig.from_json(cfg.to_json()) == cfg

    @pytest.mark.parametrize("kw", [
        {"invariant": "chern3"},
        {"invariant": "chern1"},
        {"axis": AxisRange("R", 0.1, 1.0, 0.1)},
        {"axis": AxisRange("T", 1.0, 0.5, 0.1)},
        {"axis": AxisRange("T", 0.1, 0.5, 0.0)},
        {"axis": AxisRange("x", 0.1, 0.5, 0.1)},
        {"windings": 3},
        {"samples": 4},
        {"weight_convention": "imag"},
        {"family": "NH5"},
        {"embedding": "S4"},
        {"gamma": -1.0},
        {"axis": AxisRange("d", 0.0, 1.0, 0.5), "T": 0.0},
    ])
    def test_invalid(self, kw):
        with pytest.raises(ConfigError):
            loop_config(**kw)

    def test_bad_grid(self):
        with pytest.raises(ValueError):
            SweepConfig("NH2", "Sphere2D", "chern1", AxisRange("T", 0.1, 0.2, 0.1), grid=(4, 4))

    def test_same_inner_and_outer(self):
        with pytest.raises(ConfigError):
            SweepConfig("NH4", "S4", "chern2_nt", AxisRange("T", 0.1, 0.2, 0.1),
                        outer=AxisRange("T", 0.1, 0.2, 0.1))

    def test_unknown_keys(self):
        data = loop_config().to_dict()
        data["colour"] = "red"
        with pytest.raises(ConfigError):
            SweepConfig.from_dict(data)

    def test_not_json(self):
        with pytest.raises(ConfigError):
            SweepConfig.from_json("{nope")
        with pytest.raises(ConfigError):
            SweepConfig.from_json("[1, 2]")


class TestTransitions:
    def test_single(self):
        s = series([0, 1, 2, 3], [np.pi, np.pi, 0, 0])
        assert detect_transition(s, (0, np.pi)) == pytest.approx(1.5)

    def test_interpolates(self):
        s = series([0, 1], [1.0, 0.0])
        assert detect_transition(s, (0, 1)) == pytest.approx(0.5)
        s = series([0, 1], [1.0, 0.25])
        assert detect_transition(s, (0, 1)) == pytest.approx(2 / 3)

    def test_none(self):
        with pytest.raises(NoTransition):
            detect_transition(series([0, 1, 2], [1, 1, 1]), (0, 1))

    def test_multiple(self):
        with pytest.raises(MultipleTransitions) as err:
            detect_transition(series([0, 1, 2], [0, 1, 0]), (0, 1))
        assert err.value.crossings == pytest.approx([0.5, 1.5])

    def test_three_levels(self):
        s = series([0, 1, 2, 3], [2 * np.pi, np.pi, np.pi, 0])
        assert detect_transitions(s, (0, np.pi, 2 * np.pi)) == pytest.approx([0.5, 2.5])

    def test_nan_rows_skipped(self):
        s = series([0, 1, 2], [0.0, float("nan"), 1.0])
        assert detect_transition(s, (0, 1)) == pytest.approx(1.0)

    def test_unsorted_input(self):
        s = series([2, 0, 1], [0, 1, 1])
        assert detect_transition(s, (0, 1)) == pytest.approx(1.5)


class TestRecords:
    @settings(max_examples=50, deadline=None)
    @given(st.floats(allow_nan=False), st.floats(allow_nan=True), st.integers(0, 10 ** 6),
           st.one_of(st.none(), st.floats(allow_nan=False)), st.sampled_from(["", "NearExceptionalPoint"]))
    def test_row_round_trip(self, a, v, ex, outer, err):
        rec = SweepRecord(axis=a, value=v, excluded=ex, outer=outer, error=err)
        back = SweepRecord.from_row(rec.to_row())
        assert back.to_row() == rec.to_row()

    def test_csv_round_trip(self):
        data = {"a": series([0.1, 0.2], [1.0, float("nan")]), "b": series([0.1], [2.0])}
        text = render_csv(data)
        assert text.splitlines()[0] == ",".join(DATA_COLUMNS)
        assert render_csv(parse_csv(text)) == text


class TestSweeps:
    def test_single_point_sweep(self):
        recs = run_sweep(loop_config())
        assert len(recs) == 1
        assert recs[0].value == pytest.approx(np.pi, abs=1e-2)

    def test_numerical_failure_is_nan_row(self):
        cfg = SweepConfig("NH2", "Sphere2D", "chern1", AxisRange("R", 1.0, 1.0, 0.1),
                          grid=(16, 32))
        rec = evaluate_point(cfg, 1.0)
        assert np.isnan(rec.value)
        assert rec.error == "NearExceptionalPoint"

    def test_order_independent_of_threads(self):
        cfg = loop_config(axis=AxisRange("T", 0.5, 2.5, 0.5))
        a = run_sweep(cfg, threads=1)
        b = run_sweep(cfg, threads=3)
        assert [r.to_row() for r in a] == [r.to_row() for r in b]
        assert [r.axis for r in a] == [0.5, 1.0, 1.5, 2.0, 2.5]

    def test_outer_axis(self):
        cfg = SweepConfig("NH4", "S4", "chern2_nt", AxisRange("T", 0.5, 1.0, 0.5),
                          outer=AxisRange("R", 0.5, 2.0, 1.5))
        recs = run_sweep(cfg, threads=2)
        assert [(r.outer, r.axis) for r in recs] == [(0.5, 0.5), (0.5, 1.0), (2.0, 0.5), (2.0, 1.0)]
        assert abs(recs[0].value) < 1e-10
        assert recs[2].value > recs[3].value > 0

    def test_nt_chern_non_increasing(self):
        cfg = SweepConfig("NH2", "Sphere2D", "chern1_nt", AxisRange("T", 0.1, 3.0, 0.5),
                          grid=(40, 80))
        vals = [r.value for r in run_sweep(cfg, threads=2)]
        assert np.all(np.diff(vals) <= 1e-4)

    def test_config_file(self, tmp_path):
        cfg = loop_config(axis=AxisRange("T", 0.5, 2.5, 2.0), label="demo")
        path = tmp_path / "c.json"
        path.write_text(cfg.to_json())
        back, recs = run_config_file(path, tmp_path / "out")
        assert back == cfg
        assert len(recs) == 2
        assert (tmp_path / "out" / "sweep.csv").read_text().startswith("series,")
        assert json.loads((tmp_path / "out" / "sweep.config.json").read_text())["label"] == "demo"


class TestFigures:
    def test_unknown_figure(self):
        with pytest.raises(ValueError):
            figure_configs("fig9")

    @pytest.mark.parametrize("fid", ["fig1", "fig2", "fig3", "fig4", "fig5", "fig6", "figDD"])
    def test_configs_valid(self, fid):
        cfgs = figure_configs(fid)
        assert cfgs and all(c.label for c in cfgs)

    def test_fig1_deterministic_and_plotted(self, tmp_path):
        a = emit_figure("fig1", tmp_path / "a", threads=1)
        b = emit_figure("fig1", tmp_path / "b", threads=3)
        for key in ("csv", "manifest", "config", "script", "png"):
            assert a["paths"][key].read_bytes() == b["paths"][key].read_bytes()
        assert len(a["crossings"]) == 1
        assert a["paths"]["png"].stat().st_size > 1000
