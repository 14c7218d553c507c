"""Experiment configuration: JSON in, validated dataclass out."""

from __future__ import annotations

import hashlib
import json
import logging
import math
from dataclasses import asdict, dataclass, field

from .graphgen import GEOMETRIES, GraphParams, rhombus_shape
from .rng import SWEEP_STREAM, derive_seed

log = logging.getLogger(__name__)

METHODS = ("rotor_sw", "dtwa", "both")
SWEEP_VARIABLES = ("delta", "alpha", "dilution_p", "bond_C", "kappa_scale")
T_GRID_KINDS = ("auto", "linear", "log")


class ConfigError(ValueError):
    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


@dataclass(frozen=True)
class TimeGrid:
    kind: str = "auto"
    t_max: float | None = None
    n_points: int = 200
    factor: float = 4.0


@dataclass(frozen=True)
class Sweep:
    variable: str
    values: tuple


@dataclass(frozen=True)
class ExperimentConfig:
    experiment_id: str
    geometry: str
    params: GraphParams
    sizes: tuple
    delta: float = 0.0
    spin_s: float = 0.5
    method: str = "rotor_sw"
    n_samples: int = 500
    t_grid: TimeGrid = field(default_factory=TimeGrid)
    sweep: Sweep | None = None
    output_dir: str = "out"
    seed: int = 0
    chunk: int = 50
    workers: int = 1
    dense_cap: int = 4096
    warnings: tuple = field(default=(), compare=False)

    def to_dict(self):
        d = {
            "experiment_id": self.experiment_id,
            "geometry": self.geometry,
            "params": asdict(self.params),
            "sizes": list(self.sizes),
            "delta": self.delta,
            "spin_s": self.spin_s,
            "method": self.method,
            "n_samples": self.n_samples,
            "t_grid": asdict(self.t_grid),
            "sweep": None if self.sweep is None else
            {"variable": self.sweep.variable, "values": list(self.sweep.values)},
            "output_dir": self.output_dir,
            "seed": self.seed,
            "chunk": self.chunk,
            "workers": self.workers,
            "dense_cap": self.dense_cap,
        }
        return d

    def dumps(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def digest(self):
        canon = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()

    def point_seed(self, value):
        """Seed of one sweep point: depends on the value, not its position."""
        return point_seed(self.seed, self.sweep.variable if self.sweep else "", value)


def point_seed(master, variable, value):
    key = f"{variable}={float(value)!r}".encode()
    index = int.from_bytes(hashlib.sha256(key).digest()[:7], "little")
    return derive_seed(master, index, SWEEP_STREAM)


_TOP = {"experiment_id", "geometry", "params", "sizes", "delta", "spin_s", "method",
        "n_samples", "t_grid", "sweep", "output_dir", "seed", "chunk", "workers", "dense_cap"}
_PARAMS = set(GraphParams.__dataclass_fields__)
_TGRID = set(TimeGrid.__dataclass_fields__)
_SWEEP = {"variable", "values"}


def _num(d, key, path, errors, kind=float, default=None):
    if key not in d:
        return default
    v = d[key]
    if kind is int:
        if isinstance(v, bool) or not isinstance(v, int):
            errors.append(f"{path}{key}: expected an integer, got {v!r}")
            return default
        return v
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        errors.append(f"{path}{key}: expected a finite number, got {v!r}")
        return default
    return float(v)


def _unknown(d, allowed, path, errors):
    for k in sorted(set(d) - allowed):
        errors.append(f"{path}{k}: unknown key")


def _check_delta(v, path, errors):
    if v is not None and not -1.0 < v < 1.0:
        errors.append(f"{path}: delta={v} violates |delta| < 1 (squeezing regime)")


def _check_size(geometry, n, path, errors):
    if n < 2:
        errors.append(f"{path}: size must be >= 2, got {n}")
        return
    if geometry == "pw2" and (n < 4 or n & (n - 1)):
        errors.append(f"{path}: PW2 size must be a power of two >= 4, got {n}")
    if geometry == "triangular2d":
        try:
            rhombus_shape(n)
        except ValueError as exc:
            errors.append(f"{path}: {exc}")


def from_dict(d):
    """Validate a raw mapping; every problem is collected before raising."""
    errors, warnings = [], []
    if not isinstance(d, dict):
        raise ConfigError(["<root>: expected a JSON object"])
    _unknown(d, _TOP, "", errors)
    exp_id = d.get("experiment_id")
    if not isinstance(exp_id, str) or not exp_id:
        errors.append("experiment_id: required non-empty string")
    geometry = d.get("geometry")
    if geometry not in GEOMETRIES:
        errors.append(f"geometry: unknown geometry {geometry!r}; expected one of {list(GEOMETRIES)}")
    raw_p = d.get("params", {})
    pkw = {}
    if not isinstance(raw_p, dict):
        errors.append("params: expected an object")
        raw_p = {}
    _unknown(raw_p, _PARAMS, "params.", errors)
    for k in ("alpha", "dilution_p", "bond_C", "kappa_scale"):
        v = _num(raw_p, k, "params.", errors)
        if v is not None:
            pkw[k] = v
    dim = _num(raw_p, "dimension", "params.", errors, int)
    if dim is not None:
        if dim not in (1, 2):
            errors.append(f"params.dimension: must be 1 or 2, got {dim}")
        pkw["dimension"] = dim
    if "apply_kac" in raw_p:
        if not isinstance(raw_p["apply_kac"], bool):
            errors.append("params.apply_kac: expected true/false")
        else:
            pkw["apply_kac"] = raw_p["apply_kac"]
    if geometry == "triangular2d":
        pkw.setdefault("dimension", 2)
    if not 0.0 <= pkw.get("dilution_p", 0.0) < 1.0:
        errors.append(f"params.dilution_p: must lie in [0, 1), got {pkw['dilution_p']}")
    if pkw.get("bond_C", 1.0) <= 0:
        errors.append(f"params.bond_C: must be positive, got {pkw['bond_C']}")
    params = GraphParams(**pkw)

    sizes = d.get("sizes")
    if not isinstance(sizes, list) or not sizes:
        errors.append("sizes: required non-empty list of integers")
        sizes = []
    clean_sizes = []
    for i, n in enumerate(sizes):
        if isinstance(n, bool) or not isinstance(n, int):
            errors.append(f"sizes[{i}]: expected an integer, got {n!r}")
            continue
        if geometry in GEOMETRIES:
            _check_size(geometry, n, f"sizes[{i}]", errors)
        clean_sizes.append(n)

    delta = _num(d, "delta", "", errors, default=0.0)
    _check_delta(delta, "delta", errors)
    spin_s = _num(d, "spin_s", "", errors, default=0.5)
    if spin_s is not None and (spin_s <= 0 or abs(2 * spin_s - round(2 * spin_s)) > 1e-12):
        errors.append(f"spin_s: must be a positive half-integer, got {spin_s}")
    method = d.get("method", "rotor_sw")
    if method not in METHODS:
        errors.append(f"method: expected one of {list(METHODS)}, got {method!r}")
    n_samples = _num(d, "n_samples", "", errors, int, 500)
    if n_samples is not None and n_samples < 2:
        errors.append(f"n_samples: must be >= 2, got {n_samples}")

    tg = d.get("t_grid", {})
    tkw = {}
    if not isinstance(tg, dict):
        errors.append("t_grid: expected an object")
        tg = {}
    _unknown(tg, _TGRID, "t_grid.", errors)
    if "kind" in tg:
        if tg["kind"] not in T_GRID_KINDS:
            errors.append(f"t_grid.kind: expected one of {list(T_GRID_KINDS)}, got {tg['kind']!r}")
        tkw["kind"] = tg["kind"]
    if tg.get("t_max") is not None:
        tkw["t_max"] = _num(tg, "t_max", "t_grid.", errors)
        if tkw["t_max"] is not None and tkw["t_max"] <= 0:
            errors.append("t_grid.t_max: must be positive")
    npts = _num(tg, "n_points", "t_grid.", errors, int)
    if npts is not None:
        if npts < 3:
            errors.append("t_grid.n_points: must be >= 3")
        tkw["n_points"] = npts
    fac = _num(tg, "factor", "t_grid.", errors)
    if fac is not None:
        if fac <= 0:
            errors.append("t_grid.factor: must be positive")
        tkw["factor"] = fac
    if tkw.get("kind", "auto") != "auto" and tkw.get("t_max") is None:
        errors.append("t_grid.t_max: required when kind is not 'auto'")
    t_grid = TimeGrid(**tkw)

    sweep = None
    sw = d.get("sweep")
    if sw is not None:
        if not isinstance(sw, dict):
            errors.append("sweep: expected an object or null")
        else:
            _unknown(sw, _SWEEP, "sweep.", errors)
            var = sw.get("variable")
            if var not in SWEEP_VARIABLES:
                errors.append(f"sweep.variable: expected one of {list(SWEEP_VARIABLES)}, got {var!r}")
            vals = sw.get("values")
            if not isinstance(vals, list) or not vals:
                errors.append("sweep.values: required non-empty list")
                vals = []
            uniq = []
            for i, v in enumerate(vals):
                if isinstance(v, bool) or not isinstance(v, (int, float)):
                    errors.append(f"sweep.values[{i}]: expected a number, got {v!r}")
                    continue
                v = float(v)
                if var == "delta":
                    _check_delta(v, f"sweep.values[{i}]", errors)
                if v in uniq:
                    warnings.append(f"sweep.values: duplicate value {v!r} dropped")
                    continue
                uniq.append(v)
            sweep = Sweep(var, tuple(uniq))

    output_dir = d.get("output_dir", "out")
    if not isinstance(output_dir, str) or not output_dir:
        errors.append("output_dir: expected a non-empty string")
    seed = _num(d, "seed", "", errors, int, 0)
    if seed is not None and seed < 0:
        errors.append("seed: must be >= 0")
    chunk = _num(d, "chunk", "", errors, int, 50)
    if chunk is not None and chunk < 1:
        errors.append("chunk: must be >= 1")
    workers = _num(d, "workers", "", errors, int, 1)
    if workers is not None and workers < 1:
        errors.append("workers: must be >= 1")
    dense_cap = _num(d, "dense_cap", "", errors, int, 4096)
    if dense_cap is not None and dense_cap < 2:
        errors.append("dense_cap: must be >= 2")
    if errors:
        raise ConfigError(errors)
    for w in warnings:
        log.warning(w)
    return ExperimentConfig(exp_id, geometry, params, tuple(clean_sizes), delta, spin_s, method,
                            n_samples, t_grid, sweep, output_dir, seed, chunk, workers,
                            dense_cap, tuple(warnings))


def loads(text):
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError([f"<root>: malformed JSON ({exc})"]) from exc
    return from_dict(raw)


def parse_config(path):
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError([f"<file>: cannot read {path}: {exc.strerror}"]) from exc
    return loads(text)
