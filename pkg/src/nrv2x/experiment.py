"""Experiment sweeps: YAML configuration parsing, cartesian expansion,
resumable CSV results, and plottable series extraction.

A sweep file holds a ``base`` mapping of RunConfig fields plus an ``axes``
mapping of field name to value list; the cartesian product of the axes is
enumerated in a deterministic order.  Every completed point writes one CSV
row keyed by the point's canonical configuration key, so re-running a sweep
skips finished points.  A JSON sidecar records the fully resolved
configuration of every point and the code version for reproducibility.
"""

from __future__ import annotations

import csv
import dataclasses
import itertools
import json
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import yaml

from . import __version__
from .engine import MetricsReport, RunConfig, run
from .phy import ConfigurationError

_FIELDS = {f.name: f for f in dataclasses.fields(RunConfig)}
_SWEEP_KEYS = {"base", "axes", "seed", "output", "workers"}

#: configuration columns repeated in every result row
_CONFIG_COLUMNS = (
    "scs_khz", "bandwidth_mhz", "scheduling", "retransmission", "k",
    "harq_max_retx", "dl_cast", "unicast_m", "mcs_table", "slot_type",
    "control_variant", "traffic", "interval_ms", "density_veh_km_lane", "seed",
)


def _coerce(name: str, value):
    if name not in _FIELDS:
        raise ConfigurationError(f"unknown configuration field {name!r}")
    target = _FIELDS[name].type
    if target == "int":
        if isinstance(value, bool) or (isinstance(value, float) and not value.is_integer()):
            raise ConfigurationError(f"field {name!r} expects an integer")
        return int(value)
    if target == "float":
        return float(value)
    if target == "str":
        if not isinstance(value, str):
            raise ConfigurationError(f"field {name!r} expects a string")
        return value
    return value


@dataclasses.dataclass(frozen=True)
class ExperimentSpec:
    """A validated sweep: base configuration plus axis value lists."""

    base: dict
    axes: dict[str, tuple]
    seed: int = 0
    output: str = "results"
    workers: int = 1

    def points(self) -> list[RunConfig]:
        """Deterministic cartesian expansion of the axes over the base."""
        names = sorted(self.axes)
        out = []
        for combo in itertools.product(*(self.axes[n] for n in names)):
            fields = dict(self.base)
            fields.update(dict(zip(names, combo)))
            fields.setdefault("seed", self.seed)
            cfg = RunConfig(**fields)
            cfg.scheme()          # validate the radio combination early
            cfg.traffic_model()
            out.append(cfg)
        return out

    def to_mapping(self) -> dict:
        return {
            "base": dict(self.base),
            "axes": {k: list(v) for k, v in self.axes.items()},
            "seed": self.seed,
            "output": self.output,
            "workers": self.workers,
        }


def spec_from_mapping(doc: dict) -> ExperimentSpec:
    if not isinstance(doc, dict):
        raise ConfigurationError("sweep document must be a mapping")
    unknown = set(doc) - _SWEEP_KEYS
    if unknown:
        raise ConfigurationError(f"unknown sweep keys: {sorted(unknown)}")
    base_doc = doc.get("base") or {}
    axes_doc = doc.get("axes") or {}
    base = {name: _coerce(name, value) for name, value in base_doc.items()}
    axes = {}
    for name, values in axes_doc.items():
        if not isinstance(values, (list, tuple)) or not values:
            raise ConfigurationError(f"axis {name!r} must be a non-empty list")
        if name in base:
            raise ConfigurationError(f"{name!r} appears in both base and axes")
        axes[name] = tuple(_coerce(name, v) for v in values)
    return ExperimentSpec(
        base=base,
        axes=axes,
        seed=int(doc.get("seed", 0)),
        output=str(doc.get("output", "results")),
        workers=int(doc.get("workers", 1)),
    )


def parse_spec(path: str | Path) -> ExperimentSpec:
    with open(path) as fh:
        doc = yaml.safe_load(fh)
    return spec_from_mapping(doc)


def _result_fieldnames() -> list[str]:
    return list(_CONFIG_COLUMNS) + [f.name for f in dataclasses.fields(MetricsReport)]


def _row_for(cfg: RunConfig, report: MetricsReport) -> dict:
    row = {name: getattr(cfg, name) for name in _CONFIG_COLUMNS}
    row.update(report.to_row())
    return row


def _load_done_keys(csv_path: Path) -> set[str]:
    if not csv_path.exists():
        return set()
    with open(csv_path, newline="") as fh:
        return {row["config_key"] for row in csv.DictReader(fh)}


def _run_point(cfg: RunConfig) -> MetricsReport:
    return run(cfg)


def run_sweep(spec: ExperimentSpec, out_dir: str | Path,
              progress=None) -> tuple[Path, int]:
    """Execute every pending sweep point; returns (csv path, failure count).

    Completed points (config keys already present in the CSV) are skipped,
    making interrupted sweeps resumable.  Failing points are recorded in the
    sidecar and do not stop the sweep.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / "results.csv"
    sidecar_path = out / "results.meta.json"
    done = _load_done_keys(csv_path)
    points = [p for p in spec.points() if p.key() not in done]
    new_file = not csv_path.exists()
    failures: list[tuple[str, str]] = []
    sidecar = {"version": __version__, "spec": spec.to_mapping(), "points": {}}
    if sidecar_path.exists():
        sidecar = json.loads(sidecar_path.read_text())
        sidecar["spec"] = spec.to_mapping()

    def emit(writer, fh, cfg, report):
        writer.writerow(_row_for(cfg, report))
        fh.flush()
        sidecar["points"][cfg.key()] = dataclasses.asdict(cfg)
        if progress:
            progress(report)

    with open(csv_path, "a", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=_result_fieldnames())
        if new_file:
            writer.writeheader()
        if spec.workers > 1 and len(points) > 1:
            with ProcessPoolExecutor(max_workers=spec.workers) as pool:
                for cfg, report in zip(points, pool.map(_run_point, points)):
                    emit(writer, fh, cfg, report)
        else:
            for cfg in points:
                try:
                    report = _run_point(cfg)
                except ConfigurationError as exc:
                    failures.append((cfg.key(), str(exc)))
                    sidecar["points"][cfg.key()] = {
                        **dataclasses.asdict(cfg), "error": str(exc)
                    }
                    continue
                emit(writer, fh, cfg, report)
    sidecar["failures"] = failures
    sidecar_path.write_text(json.dumps(sidecar, indent=1, sort_keys=True))
    return csv_path, len(failures)


def read_results(csv_path: str | Path) -> list[dict]:
    """Result rows with numeric columns parsed back to floats."""
    with open(csv_path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    for row in rows:
        for k, v in row.items():
            try:
                row[k] = float(v)
            except (TypeError, ValueError):
                pass
    return rows


# -- figure extraction -------------------------------------------------------------
#
# Each known figure id maps result rows onto (x, y) series files for external
# plotting: ``sel`` filters rows, ``group`` splits them into series, and each
# y-column becomes one file per series.

_FIG_PLANS = {
    "fig3": dict(x="density_veh_km_lane", group=("mcs_table", "interval_ms", "unicast_m"),
                 y=("mean_ms",), sel=dict(dl_cast="unicast")),
    "fig4": dict(x="density_veh_km_lane", group=("mcs_table", "interval_ms"),
                 y=("mean_ms",), sel=dict(dl_cast="broadcast")),
    "fig5": dict(x="bandwidth_mhz", group=("mcs_table", "dl_cast", "unicast_m"),
                 y=("mean_ms",), sel=dict()),
    "fig7": dict(x="density_veh_km_lane", group=("scs_khz", "slot_type"),
                 y=("mean_ms", "util_dl"), sel=dict(mcs_table="LEP")),
    "fig8": dict(x="density_veh_km_lane", group=("scs_khz", "slot_type"),
                 y=("mean_ms", "p90_ms"), sel=dict(mcs_table="LEP")),
    "fig12": dict(x="density_veh_km_lane", group=("control_variant", "scheduling"),
                  y=("mean_ms",), sel=dict()),
}


def emit_figure_data(csv_path: str | Path, figure_id: str,
                     out_dir: str | Path) -> list[Path]:
    """Write per-series (x, y) files for one figure's axes."""
    if figure_id not in _FIG_PLANS:
        raise ConfigurationError(
            f"unknown figure id {figure_id!r}; known: {sorted(_FIG_PLANS)}"
        )
    plan = _FIG_PLANS[figure_id]
    rows = [
        r for r in read_results(csv_path)
        if all(str(r.get(k)) == str(v) or r.get(k) == v for k, v in plan["sel"].items())
    ]
    if not rows:
        raise ConfigurationError(f"no rows in {csv_path} match {figure_id}")
    missing = [c for c in (plan["x"], *plan["group"], *plan["y"]) if c not in rows[0]]
    if missing:
        raise ConfigurationError(f"result table lacks columns {missing}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    series: dict[tuple, list] = {}
    for row in rows:
        key = tuple(row[g] for g in plan["group"])
        series.setdefault(key, []).append(row)
    written = []
    for key, members in sorted(series.items(), key=lambda kv: [str(k) for k in kv[0]]):
        members.sort(key=lambda r: float(r[plan["x"]]))
        label = "_".join(f"{v:g}" if isinstance(v, float) else str(v) for v in key)
        for column in plan["y"]:
            path = out / f"{figure_id}_{label}_{column}.csv"
            with open(path, "w", newline="") as fh:
                writer = csv.writer(fh)
                writer.writerow([plan["x"], column])
                for r in members:
                    writer.writerow([r[plan["x"]], r[column]])
            written.append(path)
    return written
