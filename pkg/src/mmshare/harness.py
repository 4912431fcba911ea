"""Experiment grids, seeded Monte Carlo runs and CSV/JSON reports.

A grid file is plain ``key = value`` text.  Keys are :class:`ScenarioConfig`
fields (or the short aliases below) plus ``problem`` and ``cell_cap``; a
comma-separated value on a sweepable key becomes one grid axis::

    # analog sharing comparison
    problem = P1, P3
    n_bs = 16, 64, 256
    n_ue = 16

Every (cell, topology seed) trial persists its per-UE rates under
``<out>/ues/`` before the report is rewritten, so an interrupted run resumes
where it stopped.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import itertools
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from . import association as assoc
from .channel import sample_network_channels
from .topology import Precoder, ScenarioConfig, parse_value, read_key_values, sample_topology

DEFAULT_CELL_CAP = 512
REFERENCE_CARRIER = 32e9

ALIASES = {
    "n_bs": "n_bs_antennas",
    "n_ue": "n_ue_antennas",
    "carrier": "carrier_freq",
    "bs_density": "bs_density_per_operator",
    "ue_density": "ue_density_total",
    "sharing": "sharing_mode",
    "problem_id": "problem",
}
SWEEP_KEYS = ("problem", "n_bs_antennas", "n_ue_antennas", "carrier_freq",
              "bs_density_per_operator", "ue_density_total", "sharing_mode", "precoder",
              "single_path")

# Desk scale: fewer topologies on a smaller area, antennas capped at 256.
# Digital cells shrink the area again since every candidate move re-solves
# the precoders.
PRESETS = {
    "desk": {"area_side": 500.0, "n_topologies": 20, "digital_area_side": 250.0,
             "max_bs_antennas": 256},
    "paper": {"area_side": 1000.0, "n_topologies": 100, "digital_area_side": 1000.0,
              "max_bs_antennas": None},
}

CSV_COLUMNS = (
    "cell", "label", "problem", "sharing_mode", "precoder", "n_bs_antennas", "n_ue_antennas",
    "carrier_freq", "bs_density", "ue_density", "single_path", "seed", "status", "n_ue",
    "mean_rate", "p5", "p50", "p95", "i1", "i2", "i3", "operator_utilities", "error",
)


class GridError(ValueError):
    pass


class MissingBaselineError(KeyError):
    pass


def antenna_scale(carrier_freq: float) -> int:
    """Antenna multiplier keeping the array size fixed: 2 at 73 GHz, 1 at 32 GHz."""
    return 2 ** max(0, round(math.log2(carrier_freq / REFERENCE_CARRIER)))


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    if hasattr(value, "value"):
        return str(value.value)
    return str(value)


@dataclass(frozen=True)
class Cell:
    """One grid point: a resolved config and the problem solved on it."""

    index: int
    config: ScenarioConfig
    problem: assoc.ProblemId
    settings: tuple  # (key, value) of the swept axes

    @property
    def label(self) -> str:
        return " ".join(f"{k}={_fmt(v)}" for k, v in self.settings)

    @property
    def spec(self) -> assoc.ProblemSpec:
        return assoc.ProblemSpec.build(self.problem, self.config)


@dataclass
class ExperimentGrid:
    base: ScenarioConfig = field(default_factory=ScenarioConfig)
    sweeps: dict = field(default_factory=dict)  # key -> list of values
    problems: tuple = (assoc.ProblemId.P1,)
    cap: int = DEFAULT_CELL_CAP
    preset: str = "desk"
    output_path: str | None = None

    def __post_init__(self) -> None:
        self.problems = tuple(assoc.ProblemId(p) for p in self.problems)
        for key in self.sweeps:
            if key not in SWEEP_KEYS:
                raise GridError(f"cannot sweep {key!r}")
        if self.preset not in PRESETS:
            raise GridError(f"unknown preset {self.preset!r}")
        if self.size > self.cap:
            raise GridError(f"grid has {self.size} cells, cap is {self.cap}")
        limit = PRESETS[self.preset]["max_bs_antennas"]
        if limit is not None:
            values = self.sweeps.get("n_bs_antennas", [self.base.n_bs_antennas])
            if max(values) > limit:
                raise GridError(f"{self.preset} preset caps n_bs_antennas at {limit}")

    @property
    def size(self) -> int:
        n = len(self.problems)
        for values in self.sweeps.values():
            n *= len(values)
        return n

    @property
    def n_topologies(self) -> int:
        return self.base.n_topologies

    def cells(self) -> list[Cell]:
        keys = list(self.sweeps)
        out = []
        for i, (problem, combo) in enumerate(itertools.product(
                self.problems, itertools.product(*(self.sweeps[k] for k in keys)))):
            changes = dict(zip(keys, combo))
            out.append(Cell(i, self.resolve(changes, problem), problem,
                            (("problem", problem.value),) + tuple(changes.items())))
        return out

    def resolve(self, changes: dict, problem: assoc.ProblemId) -> ScenarioConfig:
        cfg = self.base.replace(**changes)
        digital = problem in (assoc.ProblemId.P4, assoc.ProblemId.P5, assoc.ProblemId.P6) or (
            problem is assoc.ProblemId.RSSI and cfg.precoder is not Precoder.ANALOG)
        # only when the area is still the preset's default
        if digital and self.base.area_side == PRESETS[self.preset]["area_side"]:
            cfg = cfg.replace(area_side=PRESETS[self.preset]["digital_area_side"])
        scale = antenna_scale(cfg.carrier_freq)
        if scale != 1:
            cfg = cfg.replace(n_bs_antennas=cfg.n_bs_antennas * scale,
                              n_ue_antennas=cfg.n_ue_antennas * scale)
        cfg.validate()
        return cfg

    def to_dict(self) -> dict:
        return {
            "base": self.base.to_dict(),
            "sweeps": {k: [_fmt(v) for v in vs] for k, vs in self.sweeps.items()},
            "problems": [p.value for p in self.problems],
            "cap": self.cap,
            "preset": self.preset,
        }


def preset_config(preset: str, base: ScenarioConfig | None = None) -> ScenarioConfig:
    p = PRESETS[preset]
    return (base or ScenarioConfig()).replace(area_side=p["area_side"],
                                             n_topologies=p["n_topologies"])


def load_grid(path: str | Path, preset: str = "desk", seeds: int | None = None) -> ExperimentGrid:
    """Parse a grid file; ``seeds`` overrides ``n_topologies``."""
    if preset not in PRESETS:
        raise GridError(f"unknown preset {preset!r}")
    changes, sweeps = {}, {}
    problems = [assoc.ProblemId.P1]
    cap = DEFAULT_CELL_CAP
    output_path = None
    for raw_key, text in read_key_values(path):
        key = ALIASES.get(raw_key, raw_key)
        if key == "cell_cap":
            cap = int(text)
            continue
        if key == "output_path":
            output_path = text
            continue
        parts = [t.strip() for t in text.split(",")] if key in SWEEP_KEYS else [text]
        if key == "problem":
            problems = [assoc.ProblemId(t.upper()) for t in parts]
            continue
        try:
            values = [parse_value(key, t) for t in parts]
        except KeyError as exc:
            raise GridError(f"{path}: unknown key {raw_key!r}") from exc
        if len(values) > 1:
            sweeps[key] = values
        else:
            changes[key] = values[0]
    base = preset_config(preset).replace(**changes)
    if seeds is not None:
        base = base.replace(n_topologies=int(seeds))
    return ExperimentGrid(base, sweeps, tuple(problems), cap, preset, output_path)


# ---------------------------------------------------------------------------
# trials


@dataclass
class TrialResult:
    cell: int
    seed: int
    rates: np.ndarray  # per UE
    ue_operator: np.ndarray
    components: np.ndarray  # (3, U) interference over noise, averaged over fading
    wall_time: float
    error: str = ""
    serving: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    bs_operator: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    @property
    def ok(self) -> bool:
        return not self.error

    def save(self, path: Path) -> None:
        tmp = path.with_name(path.stem + ".tmp.npz")
        np.savez(tmp, cell=self.cell, seed=self.seed, rates=self.rates,
                 ue_operator=self.ue_operator, components=self.components,
                 wall_time=self.wall_time, error=self.error, serving=self.serving,
                 bs_operator=self.bs_operator)
        os.replace(tmp, path)

    @classmethod
    def load(cls, path: Path) -> "TrialResult":
        with np.load(path) as z:
            return cls(int(z["cell"]), int(z["seed"]), z["rates"], z["ue_operator"],
                       z["components"], float(z["wall_time"]), str(z["error"]),
                       z["serving"], z["bs_operator"])


def run_trial(config: ScenarioConfig, problem, seed: int, cell: int = 0,
              backend: str | None = None) -> TrialResult:
    """Sample topology ``seed``, solve ``problem`` and evaluate actual rates.

    Failures are returned in ``error`` rather than raised.
    """
    start = time.perf_counter()
    try:
        topo = sample_topology(config, seed)
        channels = sample_network_channels(topo, config, seed)
        result = assoc.solve(problem, topo, channels, config, backend=backend)
        report = assoc.evaluate(result)
        return TrialResult(cell, seed, report.per_ue_rate, topo.ue_operator,
                           report.per_ue_components, time.perf_counter() - start,
                           serving=result.association.serving,
                           bs_operator=topo.bs_operator)
    except Exception as exc:  # recorded in the report; the run continues
        empty = np.zeros(0)
        return TrialResult(cell, seed, empty, empty.astype(np.int64), np.zeros((3, 0)),
                           time.perf_counter() - start, f"{type(exc).__name__}: {exc}")


def _run_task(args) -> TrialResult:
    return run_trial(*args)


# ---------------------------------------------------------------------------
# report rows


@dataclass(frozen=True)
class ReportRow:
    cell: int
    label: str
    problem: str
    sharing_mode: str
    precoder: str
    n_bs_antennas: int
    n_ue_antennas: int
    carrier_freq: float
    bs_density: float
    ue_density: float
    single_path: bool
    seed: str  # topology seed, or "all" for rows pooling every seed of a cell
    status: str
    n_ue: int
    mean_rate: float
    p5: float
    p50: float
    p95: float
    i1: float
    i2: float
    i3: float
    operator_utilities: tuple
    error: str = ""
    wall_time: float = field(default=0.0, compare=False)  # kept out of the CSV

    def __post_init__(self) -> None:
        if self.status == "ok" and not self.p5 <= self.p50 <= self.p95:
            raise ValueError("percentiles out of order")

    @property
    def ok(self) -> bool:
        return self.status == "ok"

    def csv_values(self) -> list[str]:
        out = []
        for name in CSV_COLUMNS:
            v = getattr(self, name)
            if name == "operator_utilities":
                v = ";".join(repr(float(x)) for x in v)
            out.append(_fmt(v))
        return out

    @classmethod
    def from_csv(cls, rec: dict) -> "ReportRow":
        utils = tuple(float(x) for x in rec["operator_utilities"].split(";") if x)
        kw = {}
        for f in dataclasses.fields(cls):
            if f.name not in rec:
                continue
            text = rec[f.name]
            if f.name == "operator_utilities":
                kw[f.name] = utils
            elif f.type == "int":
                kw[f.name] = int(text)
            elif f.type == "float":
                kw[f.name] = float(text)
            elif f.type == "bool":
                kw[f.name] = text == "True"
            else:
                kw[f.name] = text
        return cls(**kw)


def summarize(cell: Cell, seed: str, trials: Sequence[TrialResult]) -> ReportRow:
    """Pool the per-UE results of ``trials`` into one row."""
    spec_cfg = cell.spec.effective_config(cell.config) if not _bad_spec(cell) else cell.config
    common = dict(
        cell=cell.index, label=cell.label, problem=cell.problem.value,
        sharing_mode=spec_cfg.sharing_mode.value, precoder=spec_cfg.precoder.value,
        n_bs_antennas=cell.config.n_bs_antennas, n_ue_antennas=cell.config.n_ue_antennas,
        carrier_freq=float(cell.config.carrier_freq),
        bs_density=float(cell.config.bs_density_per_operator),
        ue_density=float(cell.config.ue_density_total),
        single_path=bool(cell.config.single_path), seed=seed,
        wall_time=float(sum(t.wall_time for t in trials)),
    )
    errors = [f"seed {t.seed}: {t.error}" for t in trials if not t.ok]
    if errors:
        nan = float("nan")
        return ReportRow(**common, status="failed", n_ue=0, mean_rate=nan, p5=nan, p50=nan,
                         p95=nan, i1=nan, i2=nan, i3=nan, operator_utilities=(),
                         error=" | ".join(errors))
    rates = np.concatenate([t.rates for t in trials])
    comps = np.concatenate([t.components for t in trials], axis=1)
    n_ops = cell.config.num_operators
    utils = np.zeros(n_ops)
    for t in trials:
        with np.errstate(divide="ignore"):
            utils += np.bincount(t.ue_operator, weights=np.log(t.rates), minlength=n_ops)
    utils /= len(trials)
    p5, p50, p95 = (float(np.percentile(rates, q)) for q in (5, 50, 95))
    i1, i2, i3 = (float(c.mean()) for c in comps)
    return ReportRow(**common, status="ok", n_ue=len(rates), mean_rate=float(rates.mean()),
                     p5=p5, p50=p50, p95=p95, i1=i1, i2=i2, i3=i3,
                     operator_utilities=tuple(float(u) for u in utils))


def _bad_spec(cell: Cell) -> bool:
    try:
        cell.spec
    except ValueError:
        return True
    return False


def build_rows(cells: Sequence[Cell], trials: dict) -> list[ReportRow]:
    """Per-seed rows then one pooled row per cell, in cell/seed order."""
    rows = []
    for cell in cells:
        done = sorted((s, t) for (c, s), t in trials.items() if c == cell.index)
        rows.extend(summarize(cell, str(s), [t]) for s, t in done)
    for cell in cells:
        done = [t for (c, s), t in sorted(trials.items()) if c == cell.index]
        if done:
            rows.append(summarize(cell, "all", done))
    return rows


def write_report(rows: Iterable[ReportRow], path: Path) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in rows:
        w.writerow(r.csv_values())
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(buf.getvalue())
    os.replace(tmp, path)


def read_report(path: str | Path) -> list[ReportRow]:
    with open(path, newline="") as fh:
        return [ReportRow.from_csv(rec) for rec in csv.DictReader(fh)]


def trial_path(out: Path, cell: int, seed: int) -> Path:
    return out / "ues" / f"cell{cell:03d}_seed{seed:03d}.npz"


def load_trials(out: str | Path, cell: int | None = None) -> dict:
    """Persisted trials keyed by (cell, seed)."""
    found = {}
    for path in sorted((Path(out) / "ues").glob("cell*_seed*.npz")):
        if path.stem.endswith(".tmp"):
            continue
        t = TrialResult.load(path)
        if cell is None or t.cell == cell:
            found[(t.cell, t.seed)] = t
    return found


def _cells_of(sidecar: str):
    # resuming is safe when every cell resolves to the same config; the seed
    # count may grow
    cells = json.loads(sidecar)["cells"]
    for c in cells:
        c["config"].pop("n_topologies")
    return cells


def run_experiment(grid: ExperimentGrid, out: str | Path | None = None, jobs: int = 1,
                   backend: str | None = None,
                   progress: Callable[[TrialResult], None] | None = None) -> list[ReportRow]:
    """Run every (cell, seed) trial of ``grid`` and return the report rows.

    With ``out`` set, trials already persisted there are reused and the
    report is rewritten after each new one.
    """
    cells = grid.cells()
    out = Path(out or grid.output_path) if (out or grid.output_path) else None
    trials = {}
    if out is not None:
        sidecar = json.dumps(
            {"columns": list(CSV_COLUMNS), "grid": grid.to_dict(),
             "cells": [{"cell": c.index, "label": c.label, "problem": c.problem.value,
                        "config": c.config.to_dict()} for c in cells]},
            indent=2, sort_keys=True) + "\n"
        previous = out / "report.json"
        if previous.exists() and _cells_of(previous.read_text()) != _cells_of(sidecar):
            raise GridError(f"{out} holds results of a different grid")
        (out / "ues").mkdir(parents=True, exist_ok=True)
        previous.write_text(sidecar)
        trials = {k: v for k, v in load_trials(out).items() if k[0] < len(cells)}
    todo = [(c.config, c.problem, s, c.index, backend)
            for c in cells for s in range(grid.n_topologies)
            if (c.index, s) not in trials]

    def collect(t: TrialResult) -> None:
        trials[(t.cell, t.seed)] = t
        if out is not None:
            t.save(trial_path(out, t.cell, t.seed))
            write_report(build_rows(cells, trials), out / "report.csv")
        if progress is not None:
            progress(t)

    if jobs <= 1:
        for task in todo:
            collect(_run_task(task))
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            for fut in as_completed([pool.submit(_run_task, task) for task in todo]):
                collect(fut.result())

    rows = build_rows(cells, trials)
    if out is not None:
        write_report(rows, out / "report.csv")
        with open(out / "timings.csv", "w") as fh:
            fh.write("cell,seed,wall_time\n")
            for (c, s), t in sorted(trials.items()):
                fh.write(f"{c},{s},{t.wall_time:.3f}\n")
    return rows


# ---------------------------------------------------------------------------
# post-processing


def ccdf(rates) -> tuple[np.ndarray, np.ndarray]:
    """Empirical CCDF: for each distinct rate r, the fraction of rates >= r."""
    r = np.sort(np.asarray(rates, dtype=float).ravel())
    if r.size == 0:
        raise ValueError("ccdf of an empty sample")
    values, first = np.unique(r, return_index=True)
    return values, (r.size - first) / r.size


_MATCH_KEYS = ("n_bs_antennas", "n_ue_antennas", "carrier_freq", "bs_density", "ue_density",
               "single_path", "seed")


@dataclass(frozen=True)
class Comparison:
    cell: int
    baseline_cell: int
    seed: str
    ratios: dict  # "mean"/"p5"/"p50"/"p95" -> ratio, or None when the baseline is 0


def compare_to_baseline(rows: Sequence[ReportRow], baseline_problem) -> list[Comparison]:
    """Percentile ratios of every row against the baseline problem's matching row.

    Rows match on array sizes, carrier, densities, path mode, seed and the
    analog/digital family (the baseline may differ in sharing mode and
    problem).  A zero baseline gives ``None`` instead of an infinite ratio.
    """
    base_id = assoc.ProblemId(baseline_problem).value

    def family(r):
        return "analog" if r.precoder == Precoder.ANALOG.value else "digital"

    def key(r):
        return tuple(getattr(r, k) for k in _MATCH_KEYS) + (family(r),)

    base = {key(r): r for r in rows if r.problem == base_id and r.ok}
    out = []
    for r in rows:
        if r.problem == base_id or not r.ok:
            continue
        b = base.get(key(r))
        if b is None:
            raise MissingBaselineError(f"no {base_id} row matching cell {r.cell} seed {r.seed}")
        ratios = {}
        for q in ("mean_rate", "p5", "p50", "p95"):
            num, den = getattr(r, q), getattr(b, q)
            ratios[q] = None if den == 0 else num / den
        out.append(Comparison(r.cell, b.cell, r.seed, ratios))
    return out
