"""Parameter sweeps, transition detection and figure regeneration.

A sweep evaluates one invariant along one axis (T, d or R), optionally
repeated over an outer axis. Points run in a thread pool; records are
sorted by (outer, axis) before anything is written, and the data files
contain no timing or host information, so reruns are byte-identical.
Wall times go to a separate ``*.timing.csv`` sidecar.
"""
from __future__ import annotations

import csv
import io
import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .geometry import uhlmann_phase
from .invariants import (S3_BOUNDS, S4_BOUNDS, SPHERE2D_BOUNDS, QuadratureGrid, dd_invariant,
                         second_chern_4d, second_chern_reduced, thermal_chern_2d)
from .models import Embedding, Family, ModelSpec
from .numerics import NumericsError
from .thermal import CONVENTIONS

INVARIANTS = ("uhlmann_phase", "chern1", "chern1_nt", "dd", "dd_nt", "chern2", "chern2_nt")
AXES = ("T", "d", "R")
FIGURES = ("fig1", "fig2", "fig3", "fig4", "fig5", "fig6", "figDD")

_EMBEDDINGS = {
    "uhlmann_phase": (Embedding.LOOP2D, Embedding.LOOP4D),
    "chern1": (Embedding.SPHERE2D,),
    "chern1_nt": (Embedding.SPHERE2D,),
    "dd": (Embedding.S3,),
    "dd_nt": (Embedding.S3,),
    "chern2": (Embedding.S4,),
    "chern2_nt": (Embedding.S4,),
}
_BOUNDS = {Embedding.SPHERE2D: SPHERE2D_BOUNDS, Embedding.S3: S3_BOUNDS, Embedding.S4: S4_BOUNDS}
DEFAULT_GRIDS = {Embedding.SPHERE2D: (200, 400), Embedding.S3: (64, 64, 64),
                 Embedding.S4: (48, 48, 32, 32)}
MIN_SAMPLES = 16
REDUCED_NODES = 2000


class ConfigError(ValueError):
    """Sweep configuration is invalid."""


class NoTransition(LookupError):
    """Series never crosses a midpoint between the given levels."""


class MultipleTransitions(LookupError):
    """Series crosses more than once; ``crossings`` holds all of them."""

    def __init__(self, crossings):
        super().__init__(f"{len(crossings)} crossings: {crossings}")
        self.crossings = crossings


# ----------------------------------------------------------- configuration

@dataclass(frozen=True)
class AxisRange:
    name: str
    start: float
    stop: float
    step: float = 1.0

    def values(self) -> list[float]:
        """start, start + step, ... up to stop inclusive (rounded to 1e-10)."""
        n = int(math.floor((self.stop - self.start) / self.step + 1e-9))
        return [round(self.start + k * self.step, 10) for k in range(n + 1)]


@dataclass(frozen=True)
class SweepConfig:
    """Declarative sweep. Lengths are in units of gamma."""

    family: str
    embedding: str
    invariant: str
    axis: AxisRange
    gamma: float = 1.0
    r: float = 2.0
    d: float = 2.5
    R: float = 2.0
    T: float = 0.5
    windings: int = 2
    samples: int = 800
    grid: tuple | None = None
    weight_convention: str = "abs"
    unwrapped: bool = False
    refine: bool = False
    outer: AxisRange | None = None
    label: str = ""

    def __post_init__(self):
        if isinstance(self.axis, dict):
            object.__setattr__(self, "axis", AxisRange(**self.axis))
        if isinstance(self.outer, dict):
            object.__setattr__(self, "outer", AxisRange(**self.outer))
        if self.grid is not None:
            object.__setattr__(self, "grid", tuple(int(n) for n in self.grid))
        self.validate()

    def validate(self):
        if self.invariant not in INVARIANTS:
            raise ConfigError(f"unknown invariant {self.invariant!r}")
        try:
            spec = self.base_spec()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        if spec.embedding not in _EMBEDDINGS[self.invariant]:
            raise ConfigError(f"{self.invariant} is not defined on {spec.embedding.value}")
        for ax in filter(None, (self.axis, self.outer)):
            if ax.name not in AXES:
                raise ConfigError(f"unknown axis {ax.name!r}")
            if ax.start > ax.stop:
                raise ConfigError("axis start must not exceed stop")
            if not ax.step > 0:
                raise ConfigError("axis step must be positive")
            if ax.name == "d" and not spec.is_loop:
                raise ConfigError("d sweeps are only defined for loop phases")
            if ax.name == "R" and spec.is_loop:
                raise ConfigError("R sweeps need a sphere embedding")
        if self.outer is not None and self.outer.name == self.axis.name:
            raise ConfigError("outer and inner axes must differ")
        if self.windings not in (1, 2):
            raise ConfigError("windings must be 1 or 2")
        if self.samples < MIN_SAMPLES:
            raise ConfigError(f"at least {MIN_SAMPLES} loop samples per winding")
        if self.weight_convention not in CONVENTIONS:
            raise ConfigError(f"weight convention must be one of {CONVENTIONS}")
        if self.grid is not None and not spec.is_loop:
            QuadratureGrid(self.grid, _BOUNDS[spec.embedding])
        if not self.T > 0 and "T" not in (self.axis.name, getattr(self.outer, "name", None)):
            raise ConfigError("temperature must be positive")

    def base_spec(self) -> ModelSpec:
        return ModelSpec(Family(self.family), Embedding(self.embedding), gamma=self.gamma,
                         r=self.r, d=self.d, R=self.R)

    def quadrature_grid(self) -> QuadratureGrid | None:
        emb = Embedding(self.embedding)
        if emb not in _BOUNDS:
            return None
        return QuadratureGrid(self.grid or DEFAULT_GRIDS[emb], _BOUNDS[emb])

    def to_dict(self) -> dict:
        out = asdict(self)
        out["grid"] = list(self.grid) if self.grid is not None else None
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "SweepConfig":
        known = set(cls.__dataclass_fields__)
        extra = set(data) - known
        if extra:
            raise ConfigError(f"unknown config keys: {sorted(extra)}")
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "SweepConfig":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        return cls.from_dict(data)


@dataclass(frozen=True)
class SweepRecord:
    axis: float
    value: float
    refinement_delta: float = float("nan")
    excluded: int = 0
    ms: int = 0
    error: str = ""
    outer: float | None = None

    def to_row(self) -> dict:
        return {"outer": "" if self.outer is None else repr(self.outer), "axis": repr(self.axis),
                "value": repr(self.value), "refinement_delta": repr(self.refinement_delta),
                "excluded": str(self.excluded), "error": self.error}

    @classmethod
    def from_row(cls, row: dict, ms: int = 0) -> "SweepRecord":
        return cls(axis=float(row["axis"]), value=float(row["value"]),
                   refinement_delta=float(row["refinement_delta"]), excluded=int(row["excluded"]),
                   ms=ms, error=row["error"],
                   outer=None if row["outer"] == "" else float(row["outer"]))


# ---------------------------------------------------------------- sweeps

def _point_config(config: SweepConfig, axis_value: float, outer_value: float | None) -> dict:
    knobs = {"T": config.T, "d": config.d, "R": config.R}
    knobs[config.axis.name] = axis_value
    if config.outer is not None:
        knobs[config.outer.name] = outer_value
    return knobs


def evaluate_point(config: SweepConfig, axis_value: float,
                   outer_value: float | None = None) -> SweepRecord:
    """Compute one sweep point; numerical failures become NaN rows."""
    knobs = _point_config(config, axis_value, outer_value)
    start = time.perf_counter()
    delta, excluded, error = float("nan"), 0, ""
    try:
        spec = config.base_spec().replace(d=knobs["d"], R=knobs["R"])
        T = knobs["T"]
        conv = config.weight_convention
        inv = config.invariant
        if inv == "uhlmann_phase":
            hol = uhlmann_phase(spec, config.windings, T, config.samples, conv)
            value = abs(hol.unwrapped_phase if config.unwrapped else hol.phase)
        elif inv in ("chern1", "chern1_nt"):
            res = thermal_chern_2d(spec, spec.R, T, config.quadrature_grid(), conv,
                                   weighted=inv == "chern1", refine=config.refine)
            value, delta, excluded = res.value, res.refinement_delta, res.excluded_points
        elif inv in ("dd", "dd_nt"):
            res = dd_invariant(spec, spec.R, T, config.quadrature_grid(), weighted=inv == "dd",
                               convention=conv, refine=config.refine)
            value, delta, excluded = res.value, res.refinement_delta, res.excluded_points
        elif inv == "chern2":
            res = second_chern_4d(spec, spec.R, T, config.quadrature_grid(), True, conv,
                                  refine=config.refine)
            value, delta, excluded = res.value, res.refinement_delta, res.excluded_points
        else:
            res = second_chern_reduced(spec, spec.R, T, REDUCED_NODES, weighted=False,
                                       convention=conv)
            value = res.value
    except (NumericsError, ArithmeticError, np.linalg.LinAlgError) as exc:
        value, error = float("nan"), type(exc).__name__
    ms = int(round(1000 * (time.perf_counter() - start)))
    return SweepRecord(axis=axis_value, value=float(value), refinement_delta=float(delta),
                       excluded=int(excluded), ms=ms, error=error, outer=outer_value)


def run_sweep(config: SweepConfig, threads: int = 1) -> list[SweepRecord]:
    """All sweep points, sorted by (outer, axis) whatever the thread count."""
    outers = config.outer.values() if config.outer is not None else [None]
    points = [(a, o) for o in outers for a in config.axis.values()]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            recs = list(pool.map(lambda p: evaluate_point(config, *p), points))
    else:
        recs = [evaluate_point(config, *p) for p in points]
    return sorted(recs, key=lambda r: (-math.inf if r.outer is None else r.outer, r.axis))


def detect_transitions(series, levels) -> list[float]:
    """Axis values where the series crosses midpoints between consecutive levels.

    NaN rows are skipped; each crossing is linearly interpolated between the
    bracketing finite records.
    """
    lv = sorted(float(v) for v in levels)
    if len(lv) < 2:
        raise ValueError("need at least two levels")
    mids = [0.5 * (a + b) for a, b in zip(lv, lv[1:])]
    pts = sorted((r.axis, r.value) for r in series if np.isfinite(r.value))
    out = []
    for (x0, y0), (x1, y1) in zip(pts, pts[1:]):
        for m in mids:
            if (y0 - m) * (y1 - m) < 0:
                out.append(x0 + (m - y0) * (x1 - x0) / (y1 - y0))
    return sorted(out)


def detect_transition(series, levels) -> float:
    """Single crossing; raises NoTransition or MultipleTransitions otherwise."""
    found = detect_transitions(series, levels)
    if not found:
        raise NoTransition("series does not cross any level midpoint")
    if len(found) > 1:
        raise MultipleTransitions(found)
    return found[0]


# --------------------------------------------------------------- figures

def _ax(name, start, stop, step):
    return AxisRange(name, start, stop, step)


def figure_configs(figure_id: str) -> list[SweepConfig]:
    """Canonical sweeps behind each figure."""
    if figure_id == "fig1":
        return [SweepConfig("NH2", "Loop2D", "uhlmann_phase", _ax("T", 0.1, 3.0, 0.05),
                            label="phase")]
    if figure_id == "fig2":
        return [SweepConfig("NH2", "Loop2D", "uhlmann_phase", _ax("d", 0.0, 4.0, 0.05),
                            unwrapped=True, label="unwrapped_phase")]
    if figure_id == "fig3":
        ax = _ax("T", 0.1, 3.0, 0.1)
        return [SweepConfig("NH2", "Sphere2D", "chern1", ax, refine=True, label="C_U"),
                SweepConfig("NH2", "Sphere2D", "chern1_nt", ax, label="C_U_nt")]
    if figure_id == "fig4":
        ax = _ax("R", 0.2, 3.0, 0.05)
        return [SweepConfig("NH2", "Sphere2D", "chern1", ax, refine=True, label="C_U"),
                SweepConfig("NH2", "Sphere2D", "chern1_nt", ax, label="C_U_nt")]
    if figure_id == "fig5":
        return [SweepConfig("NH4", "Loop4D", "uhlmann_phase", _ax("T", 0.1, 3.0, 0.01),
                            label="phase")]
    if figure_id == "fig6":
        return [SweepConfig("NH4", "S4", "chern2_nt", _ax("T", 0.05, 3.0, 0.05),
                            outer=_ax("R", 0.2, 3.0, 0.2), label="C_U2_nt")]
    if figure_id == "figDD":
        ax = _ax("T", 0.1, 2.9, 0.2)
        return [SweepConfig("NH3", "S3", "dd_nt", ax, outer=AxisRange("R", 0.5, 2.0, 1.5),
                            label="DD_nt"),
                SweepConfig("Hermitian3", "S3", "dd", ax, R=1.0, label="DD_hermitian")]
    raise ValueError(f"unknown figure id {figure_id!r}; choose from {FIGURES}")


FIGURE_LEVELS = {"fig1": (0.0, np.pi), "fig2": (0.0, np.pi, 2 * np.pi), "fig4": (0.0, 1.0),
                 "fig5": (0.0, np.pi)}
DATA_COLUMNS = ("series", "outer", "axis", "value", "refinement_delta", "excluded", "error")


def render_csv(series: dict) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=DATA_COLUMNS, lineterminator="\n")
    w.writeheader()
    for label, recs in series.items():
        for r in recs:
            w.writerow({"series": label, **r.to_row()})
    return buf.getvalue()


def parse_csv(text: str) -> dict:
    out: dict = {}
    for row in csv.DictReader(io.StringIO(text)):
        out.setdefault(row["series"], []).append(SweepRecord.from_row(row))
    return out


def _crossings(figure_id: str, series: dict) -> list[float]:
    if figure_id not in FIGURE_LEVELS:
        return []
    first = next(iter(series.values()))
    return [round(x, 10) for x in detect_transitions(first, FIGURE_LEVELS[figure_id])]


PLOT_SCRIPT = '''"""Plot {figure}.csv (written by mixtopo)."""
import csv
import sys
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt


def main(csv_path, png_path):
    series = {{}}
    with open(csv_path, newline="") as fh:
        for row in csv.DictReader(fh):
            key = row["series"] + ("" if row["outer"] == "" else " {outer}=" + row["outer"])
            series.setdefault(key, ([], []))
            series[key][0].append(float(row["axis"]))
            series[key][1].append(float(row["value"]))
    fig, ax = plt.subplots(figsize=(6, 4))
    for key, (x, y) in series.items():
        ax.plot(x, y, marker=".", label=key)
    ax.set_xlabel("{axis} / gamma")
    ax.set_ylabel("{ylabel}")
    ax.legend(fontsize="small")
    fig.tight_layout()
    fig.savefig(png_path, metadata={{"Software": None}})
    plt.close(fig)


if __name__ == "__main__":
    here = Path(__file__).parent
    main(sys.argv[1] if len(sys.argv) > 1 else here / "{figure}.csv",
         sys.argv[2] if len(sys.argv) > 2 else here / "{figure}.png")
'''

_YLABEL = {"uhlmann_phase": "Uhlmann phase", "chern1": "Chern number", "chern1_nt": "Chern number",
           "dd": "DD invariant", "dd_nt": "DD invariant", "chern2": "second Chern number",
           "chern2_nt": "second Chern number"}


def render_plot(csv_path, png_path, axis: str, ylabel: str, outer: str = ""):
    """Render a data file to PNG with the same code the plot script carries."""
    ns: dict = {}
    # the emitted script is the single source of the plotting code
    exec(PLOT_SCRIPT.format(figure="x", axis=axis, ylabel=ylabel, outer=outer or "outer"), ns)
    ns["main"](csv_path, png_path)


def emit_figure(figure_id: str, out_dir, threads: int = 1, plot: bool = True) -> dict:
    """Run a figure's sweeps and write its data, manifest, plot script and PNG.

    Returns a dict of written paths plus the detected crossings.
    """
    configs = figure_configs(figure_id)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    series = {c.label: run_sweep(c, threads) for c in configs}
    paths = {"csv": out / f"{figure_id}.csv", "manifest": out / f"{figure_id}.manifest.json",
             "config": out / f"{figure_id}.config.json", "script": out / f"{figure_id}_plot.py",
             "timing": out / f"{figure_id}.timing.csv"}
    paths["csv"].write_text(render_csv(series), encoding="utf-8")
    crossings = _crossings(figure_id, series)
    paths["config"].write_text(json.dumps([c.to_dict() for c in configs], indent=2, sort_keys=True)
                               + "\n", encoding="utf-8")
    manifest = {"figure": figure_id, "version": __version__, "configs": [c.to_dict() for c in configs],
                "grids": [list(g.dims) if (g := c.quadrature_grid()) else None for c in configs],
                "crossings": crossings, "columns": list(DATA_COLUMNS)}
    paths["manifest"].write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n",
                                 encoding="utf-8")
    first = configs[0]
    outer = first.outer.name if first.outer is not None else ""
    script = PLOT_SCRIPT.format(figure=figure_id, axis=first.axis.name,
                                ylabel=_YLABEL[first.invariant], outer=outer or "outer")
    paths["script"].write_text(script, encoding="utf-8")
    with open(paths["timing"], "w", encoding="utf-8") as fh:
        fh.write("series,outer,axis,ms\n")
        for label, recs in series.items():
            for r in recs:
                fh.write(f"{label},{'' if r.outer is None else r.outer},{r.axis!r},{r.ms}\n")
    if plot:
        paths["png"] = out / f"{figure_id}.png"
        render_plot(paths["csv"], paths["png"], first.axis.name, _YLABEL[first.invariant], outer)
    return {"paths": paths, "crossings": crossings, "series": series}


def run_config_file(path, out_dir=None, threads: int = 1) -> tuple[SweepConfig, list[SweepRecord]]:
    config = SweepConfig.from_json(Path(path).read_text(encoding="utf-8"))
    recs = run_sweep(config, threads)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "sweep.csv").write_text(render_csv({config.label or config.invariant: recs}),
                                       encoding="utf-8")
        (out / "sweep.config.json").write_text(config.to_json() + "\n", encoding="utf-8")
    return config, recs
