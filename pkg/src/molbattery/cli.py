"""``simulate <config>``: run a scenario sweep and write result tables.

Exit status: 0 success, 1 numerical failure or violated invariant in at
least one sweep point, 2 configuration error (nothing is written).
"""
import argparse
import csv
import io
import json
import logging
import math
import os
import sys
import tempfile
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

from .config import default_config_path, load_config
from .errors import ConfigError, InvariantViolation, MolBatteryError
from .scenarios import prepare

log = logging.getLogger("molbattery")

EXIT_OK, EXIT_NUMERICAL, EXIT_CONFIG = 0, 1, 2
RESULTS_NAME = "results"
TIMINGS_NAME = "timings.csv"


@dataclass
class ResultRecord:
    scenario_id: str
    sweep_index: int
    config_hash: str
    status: str
    message: str
    inputs: dict
    outputs: dict
    diagnostics: dict
    wall_time: float

    def row(self):
        """Flat mapping in fixed column order (wall time is kept out of it)."""
        out = {
            "scenario_id": self.scenario_id,
            "sweep_index": self.sweep_index,
            "config_hash": self.config_hash,
            "status": self.status,
            "message": self.message,
        }
        out.update({f"in.{k}": v for k, v in self.inputs.items()})
        out.update({f"out.{k}": v for k, v in self.outputs.items()})
        out.update({f"diag.{k}": v for k, v in self.diagnostics.items()})
        return out


# --------------------------------------------------------------------------
# Formatting
# --------------------------------------------------------------------------

def fmt_float(x):
    """17 significant digits; round-trips exactly through ``float``."""
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return format(x, ".17g")


def _scalar(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int,)) and not isinstance(v, bool):
        return str(v)
    if isinstance(v, float):
        return fmt_float(v)
    if hasattr(v, "item"):  # numpy scalar
        return _scalar(v.item())
    return str(v)


def csv_cell(v):
    if v is None:
        return ""
    if isinstance(v, (list, tuple)):
        return "[" + ";".join(_scalar(x) for x in v) + "]"
    return _scalar(v)


def json_value(v):
    if v is None:
        return "null"
    if isinstance(v, bool):
        return "true" if v else "false"
    if hasattr(v, "item") and not isinstance(v, (list, tuple, dict)):
        v = v.item()
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        return fmt_float(v) if math.isfinite(v) else json.dumps(fmt_float(v))
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(json_value(x) for x in v) + "]"
    if isinstance(v, dict):
        return "{" + ", ".join(f"{json.dumps(str(k))}: {json_value(x)}" for k, x in v.items()) + "}"
    return json.dumps(str(v))


def _header(rows):
    cols = []
    seen = set()
    for r in rows:
        for k in r:
            if k not in seen:
                seen.add(k)
                cols.append(k)
    return cols


def render_csv(records):
    rows = [r.row() for r in records]
    cols = _header(rows)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for r in rows:
        w.writerow([csv_cell(r.get(c)) for c in cols])
    return buf.getvalue()


def render_json(records):
    rows = [r.row() for r in records]
    body = ",\n".join("  " + json_value(r) for r in rows)
    return "[\n" + body + "\n]\n"


def render_timings(records):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["scenario_id", "sweep_index", "wall_time_s"])
    for r in records:
        w.writerow([r.scenario_id, r.sweep_index, fmt_float(r.wall_time)])
    return buf.getvalue()


def _atomic_write(path, text):
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def emit(records, out_dir, fmt="csv"):
    """Write the result table and the timings table; return the result path."""
    if not records:
        raise ValueError("no records to emit")
    out_dir = Path(out_dir)
    records = sorted(records, key=lambda r: r.sweep_index)
    if fmt == "csv":
        path = out_dir / f"{RESULTS_NAME}.csv"
        _atomic_write(path, render_csv(records))
    elif fmt == "json":
        path = out_dir / f"{RESULTS_NAME}.json"
        _atomic_write(path, render_json(records))
    else:
        raise ValueError(f"unknown format {fmt!r}")
    _atomic_write(out_dir / TIMINGS_NAME, render_timings(records))
    return path


# --------------------------------------------------------------------------
# Running
# --------------------------------------------------------------------------

def evaluate(cfg, point, verify=False):
    """Evaluate one sweep point; failures are captured in the record."""
    t0 = time.perf_counter()
    prepared = prepare(cfg, point)
    status, message, outputs, diag = "ok", "", {}, {}
    try:
        outputs, diag = prepared.run(verify)
    except InvariantViolation as exc:
        status, message = "invariant_violation", str(exc)
    except MolBatteryError as exc:
        status, message = "numerical_failure", f"{type(exc).__name__}: {exc}"
        diag = dict(getattr(exc, "diagnostics", {}) or {})
    return ResultRecord(cfg.scenario_id, point.index, cfg.config_hash, status, message, prepared.inputs,
                        outputs, diag, time.perf_counter() - t0)


def run(config_path, out_dir=None, fmt=None, threads=1, verify=False):
    """Run a config; return ``(exit_status, records)``."""
    try:
        cfg = load_config(config_path, out_dir=out_dir, fmt=fmt)
    except ConfigError as exc:
        log.error("config error: %s", exc)
        return EXIT_CONFIG, []
    points = cfg.points()
    if threads > 1 and len(points) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            records = list(pool.map(lambda pt: evaluate(cfg, pt, verify), points))
    else:
        records = [evaluate(cfg, pt, verify) for pt in points]
    emit(records, cfg.out_dir, cfg.fmt)
    failed = [r for r in records if r.status != "ok"]
    for r in failed:
        log.error("sweep point %d: %s: %s", r.sweep_index, r.status, r.message)
    return (EXIT_NUMERICAL if failed else EXIT_OK), records


def main(argv=None):
    ap = argparse.ArgumentParser(prog="simulate", description=__doc__.splitlines()[0])
    ap.add_argument("config", help="scenario TOML file, or 'default' for the bundled battery config")
    ap.add_argument("--out", default=None, help="output directory (overrides [output].dir)")
    ap.add_argument("--format", choices=("csv", "json"), default=None)
    ap.add_argument("--threads", type=int, default=1)
    ap.add_argument("--verify", action="store_true", help="run the invariant checks alongside")
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    if args.threads < 1:
        log.error("config error: --threads must be >= 1")
        return EXIT_CONFIG
    path = default_config_path() if args.config == "default" else args.config
    status, records = run(path, args.out, args.format, args.threads, args.verify)
    if records:
        log.info("%d record(s) written, status %d", len(records), status)
    return status


if __name__ == "__main__":
    sys.exit(main())
