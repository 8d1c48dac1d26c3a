"""Scenario configuration files (TOML, schema ``version = 1``).

Layout::

    version = 1
    seed = 0                      # optional

    [scenario]
    kind = "battery-steady"       # see KINDS
    id = "my-run"                 # optional, defaults to the file stem

    [battery]                     # BatteryParams fields
    delta_mu = 1.0

    [spectrum]                    # optional bath spectrum
    law = "excitonic"             # excitonic | chemical | thermal | bare | tabulated
    profile = { kind = "gap_gaussian", g0 = 1e-2, gap = 0.95, width = 0.2 }

    [sweep]                       # cartesian product, last key varies fastest
    "battery.xi0" = [0.0, 0.8, 1.5]

    [output]
    dir = "out"
    format = "csv"                # csv | json

    [tolerances]
    trace_distance = 1e-6

Every table and key is checked against the schema below and anything
unknown is rejected before any computation starts.
"""
import hashlib
import itertools
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError, MolBatteryError
from .operators import BatteryParams

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

SCHEMA_VERSION = 1

BATTERY_KEYS = tuple(BatteryParams.__dataclass_fields__)
SPECTRUM_KEYS = ("law", "profile", "csv", "T1", "delta_g")
EVOLVE_KEYS = ("times", "initial")
FACTORY_KEYS = ("band_a", "band_b", "mode_table", "Gamma_a", "Gamma_b", "gamma_inter", "T", "hot_T",
                "delta_g", "filling", "grid_points")
RWC_KEYS = ("omega", "c", "kappa", "Omega", "T", "lam", "times", "method", "initial")
OUTPUT_KEYS = ("dir", "format")
TOLERANCE_KEYS = ("trace_distance", "rate", "ergotropy", "residual", "cptp")

DEFAULT_TOLERANCES = {
    "trace_distance": 1e-6,
    "rate": 1e-9,
    "ergotropy": 1e-9,
    "residual": 1e-10,
    "cptp": 1e-9,
}

KINDS = {
    "battery-steady": ("battery", "spectrum"),
    "battery-evolve": ("battery", "spectrum", "evolve"),
    "discharge-rate": ("battery", "spectrum"),
    "ergotropy": ("battery",),
    "exciton-factory": ("factory",),
    "rwc-compare": ("rwc",),
}

SECTION_KEYS = {
    "battery": BATTERY_KEYS,
    "spectrum": SPECTRUM_KEYS,
    "evolve": EVOLVE_KEYS,
    "factory": FACTORY_KEYS,
    "rwc": RWC_KEYS,
}

TOP_KEYS = ("version", "seed", "scenario", "sweep", "output", "tolerances") + tuple(SECTION_KEYS)


@dataclass(frozen=True)
class SweepPoint:
    index: int
    overrides: tuple  # ((section, key, value), ...)
    sections: dict


@dataclass(frozen=True)
class ScenarioConfig:
    path: Path
    config_hash: str
    kind: str
    scenario_id: str
    seed: int
    sections: dict
    sweep: tuple  # ((section, key, values), ...)
    out_dir: Path
    fmt: str
    tolerances: dict = field(default_factory=dict)

    def points(self):
        """Sweep points in deterministic index order."""
        if not self.sweep:
            return [SweepPoint(0, (), _copy_sections(self.sections))]
        names = [(s, k) for s, k, _ in self.sweep]
        out = []
        for i, combo in enumerate(itertools.product(*[v for _, _, v in self.sweep])):
            sec = _copy_sections(self.sections)
            for (s, k), v in zip(names, combo):
                sec.setdefault(s, {})[k] = v
            out.append(SweepPoint(i, tuple((s, k, v) for (s, k), v in zip(names, combo)), sec))
        return out


def _copy_sections(sections):
    return {k: dict(v) for k, v in sections.items()}


def _check_keys(table, allowed, where):
    if not isinstance(table, dict):
        raise ConfigError(f"{where}: expected a table")
    for key in table:
        if key not in allowed:
            raise ConfigError(f"{where}: unknown key {key!r}")


def _check_number(value, where, positive=False):
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
        raise ConfigError(f"{where}: expected a finite number, got {value!r}")
    if positive and not value > 0:
        raise ConfigError(f"{where}: must be positive")


def config_hash(raw):
    return hashlib.sha256(raw).hexdigest()


def load_config(path, out_dir=None, fmt=None):
    """Parse and validate a config file; raise ``ConfigError`` on any problem."""
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    try:
        data = tomllib.loads(raw.decode("utf-8"))
    except (tomllib.TOMLDecodeError, UnicodeDecodeError) as exc:
        raise ConfigError(f"{path}: parse error: {exc}") from None
    _check_keys(data, TOP_KEYS, str(path))

    version = data.get("version")
    if version != SCHEMA_VERSION:
        raise ConfigError(f"{path}: 'version' must be {SCHEMA_VERSION}, got {version!r}")

    scen = data.get("scenario")
    if scen is None:
        raise ConfigError(f"{path}: missing [scenario] table")
    _check_keys(scen, ("kind", "id"), "[scenario]")
    kind = scen.get("kind")
    if kind not in KINDS:
        raise ConfigError(f"[scenario].kind: unknown kind {kind!r}; expected one of {sorted(KINDS)}")
    scenario_id = str(scen.get("id", path.stem))

    allowed_sections = KINDS[kind]
    sections = {}
    for name in SECTION_KEYS:
        if name in data:
            if name not in allowed_sections:
                raise ConfigError(f"[{name}] is not used by scenario kind {kind!r}")
            _check_keys(data[name], SECTION_KEYS[name], f"[{name}]")
            sections[name] = dict(data[name])
    for name in allowed_sections:
        sections.setdefault(name, {})

    sweep = []
    for key, values in data.get("sweep", {}).items():
        if "." not in key:
            raise ConfigError(f"[sweep]: key {key!r} must be 'section.parameter'")
        sec, param = key.split(".", 1)
        if sec not in allowed_sections or param not in SECTION_KEYS[sec]:
            raise ConfigError(f"[sweep]: unknown parameter {key!r} for kind {kind!r}")
        if not isinstance(values, list):
            raise ConfigError(f"[sweep].{key}: expected a list of values")
        if values:
            sweep.append((sec, param, tuple(values)))

    output = data.get("output", {})
    _check_keys(output, OUTPUT_KEYS, "[output]")
    fmt = fmt or output.get("format", "csv")
    if fmt not in ("csv", "json"):
        raise ConfigError(f"output format must be 'csv' or 'json', got {fmt!r}")
    out = Path(out_dir) if out_dir is not None else Path(output.get("dir", "out"))

    tolerances = dict(DEFAULT_TOLERANCES)
    tol = data.get("tolerances", {})
    _check_keys(tol, TOLERANCE_KEYS, "[tolerances]")
    for k, v in tol.items():
        _check_number(v, f"[tolerances].{k}", positive=True)
        tolerances[k] = float(v)

    seed = data.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
        raise ConfigError("'seed' must be a non-negative integer")

    cfg = ScenarioConfig(path, config_hash(raw), kind, scenario_id, seed, sections, tuple(sweep), out, fmt,
                         tolerances)
    # resolve every sweep point now so invalid physics never reaches a worker
    from .scenarios import prepare

    for pt in cfg.points():
        try:
            prepare(cfg, pt)
        except ConfigError:
            raise
        except (MolBatteryError, TypeError, ValueError) as exc:
            where = ", ".join(f"{s}.{k}={v!r}" for s, k, v in pt.overrides) or "base parameters"
            raise ConfigError(f"sweep point {pt.index} ({where}): {type(exc).__name__}: {exc}") from None
    return cfg


def default_config_path():
    return Path(__file__).with_name("data") / "default_battery.toml"
