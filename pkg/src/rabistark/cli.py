"""Command-line front end: ``rabistark scan|trace|ion-compare|channels``.

Runs are described by a TOML file (see ``configs/`` and the README for the
schema).  ``--set section.key=value`` overrides single entries; values are
parsed as TOML literals, falling back to plain strings.  A run writes a data
CSV, a peaks CSV for scans and ``manifest.json``; the manifest's ``config``
entry is itself a valid config (pass the manifest to ``--config``).

Exit codes: 0 ok, 2 configuration error, 3 numerical failure, 4 convergence
check failed.  On any failure the output directory is left untouched.
"""
from __future__ import annotations

import argparse
import copy
import csv
import io
import json
import math
import os
import platform
import re
import shutil
import sys
import tempfile
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

try:
    import tomllib
except ImportError:  # Python < 3.11
    import tomli as tomllib

from . import __version__
from .dynamics import DEFAULT_TOL, TOL_RANGE, IntegrationError, TimeGrid
from .effective import NoRootError, SingularChannelError
from .experiments import (
    ScanSpec,
    TimeRule,
    auto_n_max,
    channel_table,
    compare_ion_model,
    default_workers,
    run_scan,
    run_trace,
    SWEEPABLE,
)
from .models import (
    CalibrationError,
    IonDriveParams,
    LindbladParams,
    ModelParams,
    design_ion_drive,
    ion_calibration,
    kHz,
)

__all__ = ["ConfigError", "RunConfig", "parse_config", "execute", "main", "KINDS"]

KINDS = ("scan", "trace", "ion-compare", "channels")
EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_CONVERGENCE = 0, 2, 3, 4

# section -> {key: (type, default)}; a default of REQUIRED must be supplied
REQUIRED = object()
_NUM = (int, float)
SCHEMA = {
    "": {"kind": (str, None)},
    "model": {
        "omega0": (_NUM, 0.0), "omega": (_NUM, 1.0), "gamma": (_NUM, 0.0), "g": (_NUM, 0.0),
    },
    "ion": {
        "nu": (_NUM, REQUIRED), "eta": (_NUM, REQUIRED), "Omega_r": (_NUM, None),
        "Omega_b": (_NUM, None), "Omega_S": (_NUM, None), "delta_r": (_NUM, 0.0),
        "delta_b": (_NUM, 0.0), "phi_r": (_NUM, -math.pi), "phi_b": (_NUM, -math.pi),
        "phi_S": (_NUM, -math.pi), "ratio_rtol": (_NUM, 1e-2),
    },
    "ion.target": {
        "omega_R": (_NUM, REQUIRED), "omega0": (_NUM, REQUIRED),
        "gamma": (_NUM, REQUIRED), "g": (_NUM, REQUIRED),
    },
    "initial": {"label": (str, REQUIRED), "n": (int, REQUIRED)},
    "scan": {
        "parameter": (str, REQUIRED), "start": (_NUM, REQUIRED), "stop": (_NUM, REQUIRED),
        "step": (_NUM, REQUIRED), "observable": (str, "n_mean"), "prominence": (_NUM, 0.1),
        "refine_halfwidth": (_NUM, None), "refine_points": (int, 401),
    },
    "time": {
        "rule": (str, "fixed"), "T": (_NUM, None), "k": (int, 1), "n": (int, 0),
        "branch": (str, "-"), "per_point": (bool, True), "at": (_NUM, None), "scale": (_NUM, 1.0),
    },
    "grid": {"t_start": (_NUM, 0.0), "t_end": (_NUM, None), "n_samples": (int, 201)},
    "dissipation": {"kappa": (_NUM, REQUIRED)},
    "channels": {
        "k": (int, REQUIRED), "n_min": (int, 0), "n_max": (int, REQUIRED),
        "branches": (list, ["+", "-"]),
    },
    "compare": {"keys": (list, None)},
    "numerics": {
        "n_max": ((int, str), "auto"), "tol": (_NUM, DEFAULT_TOL), "workers": (int, None),
        "basis": (str, "bare"), "convergence_check": (bool, None),
    },
    "output": {"dir": (str, None), "columns": (list, None)},
}
# sections each kind needs / may use
KIND_SECTIONS = {
    "scan": ({"model", "initial", "scan", "time"}, {"numerics", "output"}),
    "trace": ({"model", "initial"}, {"grid", "time", "dissipation", "numerics", "output"}),
    "ion-compare": ({"ion", "initial", "grid"}, {"compare", "numerics", "output"}),
    "channels": ({"model", "channels"}, {"output", "numerics"}),
}


class ConfigError(ValueError):
    """Invalid configuration (syntax, schema or contradictory blocks)."""


class ConvergenceError(RuntimeError):
    """Truncation re-check exceeded its tolerance."""


@dataclass
class RunConfig:
    """Validated run description; ``data`` holds every section with defaults."""

    kind: str
    data: dict
    source: str = ""

    def section(self, name: str) -> dict:
        return self.data.get(name, {})

    @property
    def out_dir(self) -> Optional[str]:
        return self.section("output").get("dir")

    def echo(self) -> dict:
        """Plain-dict copy that :func:`parse_config` accepts unchanged."""
        return copy.deepcopy(self.data)


def _type_ok(value, typ) -> bool:
    typs = typ if isinstance(typ, tuple) else (typ,)
    if isinstance(value, bool) and bool not in typs:
        return False
    return isinstance(value, typs)


def _validate_section(path: str, given: dict) -> dict:
    spec = SCHEMA[path]
    out = {}
    for key, value in given.items():
        full = f"{path}.{key}" if path else key
        if value is None and key in spec:
            continue  # null in an echoed manifest means "use the default"
        if isinstance(value, dict):
            sub = f"{path}.{key}" if path else key
            if sub not in SCHEMA:
                raise ConfigError(f"unknown section '{sub}'")
            continue
        if key not in spec:
            raise ConfigError(f"unknown key '{full}'")
        typ = spec[key][0]
        if not _type_ok(value, typ):
            raise ConfigError(f"'{full}' has wrong type {type(value).__name__}")
        out[key] = float(value) if typ is _NUM else value
    for key, (typ, default) in spec.items():
        if key in out:
            continue
        if default is REQUIRED:
            full = f"{path}.{key}" if path else key
            raise ConfigError(f"missing required key '{full}'")
        out[key] = copy.deepcopy(default)
    return out


def _apply_override(raw: dict, assignment: str):
    if "=" not in assignment:
        raise ConfigError(f"--set expects key=value, got {assignment!r}")
    key, text = assignment.split("=", 1)
    parts = key.strip().split(".")
    if not all(parts):
        raise ConfigError(f"bad --set key {key!r}")
    try:
        value = tomllib.loads(f"v = {text}")["v"]
    except tomllib.TOMLDecodeError:
        value = text
    node = raw
    for part in parts[:-1]:
        node = node.setdefault(part, {})
        if not isinstance(node, dict):
            raise ConfigError(f"--set {key}: '{part}' is not a section")
    node[parts[-1]] = value


def _load_text(text: str) -> dict:
    stripped = text.lstrip()
    if stripped.startswith("{"):
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"JSON syntax error at line {exc.lineno}: {exc.msg}") from None
        # a manifest carries the config under "config"
        return raw["config"] if "config" in raw and "manifest_version" in raw else raw
    try:
        return tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        msg = str(exc)
        m = re.search(r"line (\d+)", msg)
        line = m.group(1) if m else "?"
        raise ConfigError(f"syntax error at line {line}: {msg}") from None


def parse_config(text: str, kind: Optional[str] = None, overrides=()) -> RunConfig:
    """Parse and validate a TOML (or manifest JSON) run description.

    ``kind`` (from the subcommand) must agree with a ``kind`` key in the
    file if both are given.  Unknown sections and keys are rejected, as is a
    file with both a ``model`` and an ``ion`` block.
    """
    raw = _load_text(text)
    for item in overrides:
        _apply_override(raw, item)
    file_kind = raw.get("kind")
    if kind is not None and file_kind is not None and kind != file_kind:
        raise ConfigError(f"subcommand '{kind}' contradicts kind = '{file_kind}' in config")
    kind = kind or file_kind
    if kind not in KINDS:
        raise ConfigError(f"unknown or missing experiment kind {kind!r}; use one of {KINDS}")
    if "model" in raw and "ion" in raw:
        raise ConfigError("config has both 'model' and 'ion' blocks; use exactly one")
    data = {"kind": kind}
    _validate_section("", {k: v for k, v in raw.items() if not isinstance(v, dict)})
    required, optional = KIND_SECTIONS[kind]
    for name, block in raw.items():
        if not isinstance(block, dict):
            continue
        if name not in SCHEMA:
            raise ConfigError(f"unknown section '{name}'")
        if name not in required | optional:
            raise ConfigError(f"section '{name}' is not used by kind '{kind}'")
    for name in sorted(required | optional):
        if name not in raw and name not in required:
            try:
                data[name] = _validate_section(name, {})
            except ConfigError:
                pass  # optional section with required keys: absent
            continue
        if name not in raw:
            raise ConfigError(f"kind '{kind}' needs a '{name}' section")
        data[name] = _validate_section(name, raw[name])
        if name == "ion" and isinstance(raw["ion"].get("target"), dict):
            data["ion"]["target"] = _validate_section("ion.target", raw["ion"]["target"])
    _check_semantics(kind, data)
    return RunConfig(kind=kind, data=data, source=text)


def _check_semantics(kind: str, data: dict):
    num = data.get("numerics", {})
    tol = num.get("tol", DEFAULT_TOL)
    if not TOL_RANGE[0] <= tol <= TOL_RANGE[1]:
        raise ConfigError(f"numerics.tol must lie in [{TOL_RANGE[0]:g}, {TOL_RANGE[1]:g}]")
    n_max = num.get("n_max", "auto")
    if isinstance(n_max, str) and n_max != "auto":
        raise ConfigError("numerics.n_max must be an integer or 'auto'")
    if isinstance(n_max, int) and n_max < 1:
        raise ConfigError("numerics.n_max must be >= 1")
    if num.get("workers") is not None and num["workers"] < 1:
        raise ConfigError("numerics.workers must be >= 1")
    if num.get("basis", "bare") not in ("bare", "sigma_x", "both"):
        raise ConfigError("numerics.basis must be 'bare', 'sigma_x' or 'both'")
    if "initial" in data:
        ini = data["initial"]
        if ini["label"] not in ("e", "g", "plus", "minus"):
            raise ConfigError(f"initial.label {ini['label']!r} is not one of e, g, plus, minus")
        if ini["n"] < 0:
            raise ConfigError("initial.n must be >= 0")
    if kind == "scan":
        sc = data["scan"]
        if sc["parameter"] not in SWEEPABLE:
            raise ConfigError(f"scan.parameter must be one of {SWEEPABLE}")
        if not sc["step"] > 0:
            raise ConfigError("scan.step must be positive")
        if not sc["stop"] >= sc["start"]:
            raise ConfigError("empty sweep range: scan.stop < scan.start")
    if "time" in data and data["time"]["rule"] not in ("fixed", "channel"):
        raise ConfigError("time.rule must be 'fixed' or 'channel'")
    if kind == "scan":
        _time_rule(data["time"])
    if kind == "trace":
        grid = data["grid"]
        if grid["t_end"] is None and data["time"]["rule"] == "fixed" and data["time"]["T"] is None:
            raise ConfigError("trace needs grid.t_end or a [time] rule")
        if grid["n_samples"] < 2:
            raise ConfigError("grid.n_samples must be >= 2")
        if data.get("dissipation", {}).get("kappa", 0.0) < 0:
            raise ConfigError("dissipation.kappa must be >= 0")
    if kind == "ion-compare":
        ion = data["ion"]
        has_target = "target" in ion
        explicit = [ion[k] is not None for k in ("Omega_r", "Omega_b", "Omega_S")]
        if has_target and any(explicit):
            raise ConfigError("ion: give either Omega_r/Omega_b/Omega_S or [ion.target], not both")
        if not has_target and not all(explicit):
            raise ConfigError("ion: Omega_r, Omega_b and Omega_S are required without [ion.target]")
        if data["grid"]["t_end"] is None:
            raise ConfigError("ion-compare needs grid.t_end (ms)")
        if data["initial"]["label"] not in ("plus", "minus"):
            raise ConfigError("ion-compare initial.label must be 'plus' or 'minus'")
    if kind == "channels":
        ch = data["channels"]
        if ch["k"] < 1:
            raise ConfigError("channels.k must be >= 1")
        if ch["n_max"] < ch["n_min"] or ch["n_min"] < 0:
            raise ConfigError("channels: need 0 <= n_min <= n_max")
        bad = [b for b in ch["branches"] if b not in ("+", "-")]
        if bad:
            raise ConfigError(f"channels.branches: unknown branch {bad[0]!r}")


def _time_rule(t: dict) -> TimeRule:
    try:
        return TimeRule(
            kind=t["rule"], T=t["T"], k=t["k"], n=t["n"], branch=t["branch"],
            per_point=t["per_point"], at=t["at"], scale=t["scale"],
        )
    except ValueError as exc:
        raise ConfigError(f"time: {exc}") from None


def _model(cfg: RunConfig) -> ModelParams:
    m = cfg.section("model")
    try:
        return ModelParams(omega0=m["omega0"], omega=m["omega"], gamma=m["gamma"], g=m["g"])
    except ValueError as exc:
        raise ConfigError(f"model: {exc}") from None


def _n_max(cfg: RunConfig, n0: int, k: int) -> int:
    n_max = cfg.section("numerics").get("n_max", "auto")
    n_max = auto_n_max(n0, k) if n_max == "auto" else int(n_max)
    if n0 > n_max:
        raise ConfigError(f"initial.n = {n0} exceeds numerics.n_max = {n_max}")
    return n_max


def ion_drive(cfg: RunConfig) -> IonDriveParams:
    """Drive settings in rad/ms from an ``[ion]`` block (frequencies in kHz)."""
    ion = cfg.section("ion")
    target = ion.get("target")
    if target is not None:
        wR = kHz(target["omega_R"])
        model = ModelParams(
            omega0=target["omega0"] * wR, omega=wR,
            gamma=target["gamma"] * wR, g=target["g"] * wR,
        )
        return design_ion_drive(model, nu=kHz(ion["nu"]), eta=ion["eta"], phi_S=ion["phi_S"])
    return IonDriveParams(
        nu=kHz(ion["nu"]), eta=ion["eta"], Omega_r=kHz(ion["Omega_r"]),
        Omega_b=kHz(ion["Omega_b"]), Omega_S=kHz(ion["Omega_S"]),
        delta_r=kHz(ion["delta_r"]), delta_b=kHz(ion["delta_b"]),
        phi_r=ion["phi_r"], phi_b=ion["phi_b"], phi_S=ion["phi_S"],
    )


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, str):
        return x
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return f"{float(x):.16e}"


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _run_scan(cfg: RunConfig, workers: int):
    sc, ini, num = cfg.section("scan"), cfg.section("initial"), cfg.section("numerics")
    rule = _time_rule(cfg.section("time"))
    refine = None
    if sc["refine_halfwidth"] is not None:
        refine = (sc["refine_halfwidth"], sc["refine_points"])
    check = num.get("convergence_check")
    spec = ScanSpec(
        params=_model(cfg), sweep=sc["parameter"], start=sc["start"], stop=sc["stop"],
        step=sc["step"], initial=(ini["label"], ini["n"]), time_rule=rule,
        observable=sc["observable"], n_max=_n_max(cfg, ini["n"], rule.k), tol=num["tol"],
        prominence=sc["prominence"], refine=refine, recheck=True if check is None else check,
    )
    res = run_scan(spec, workers=workers)
    if not np.all(res.skipped) and np.all(np.isnan(res.observable)):
        raise IntegrationError("every scan point failed")
    files = {
        "data.csv": _csv_text(
            [sc["parameter"], sc["observable"], "time", "skipped"],
            zip(res.values, res.observable, res.times, res.skipped),
        ),
        "peaks.csv": _csv_text(
            ["location", "height", "prominence", "width"],
            [(p.location, p.height, p.prominence, p.width) for p in res.peaks],
        ),
    }
    derived = {
        "n_max": spec.resolved_n_max(),
        "panel_time": spec.panel_time(),
        "n_points": len(res.values),
        "n_skipped": int(res.skipped.sum()),
        "peaks": [asdict(p) for p in res.peaks],
    }
    conv = res.convergence
    return files, derived, conv


def _run_trace(cfg: RunConfig):
    ini, num, grid_s, t = (cfg.section(s) for s in ("initial", "numerics", "grid", "time"))
    p = _model(cfg)
    rule = _time_rule(t) if (t["rule"] == "channel" or t["T"] is not None) else None
    t_end = grid_s["t_end"]
    if t_end is None:
        t_end = rule.resolve(p)
    grid = TimeGrid(grid_s["t_start"], t_end, grid_s["n_samples"])
    n_max = _n_max(cfg, ini["n"], t["k"])
    kappa = cfg.section("dissipation").get("kappa")
    lp = LindbladParams(kappa) if kappa is not None else None
    tr = run_trace(p, (ini["label"], ini["n"]), grid, lindblad=lp, n_max=n_max,
                   tol=num["tol"], basis=num["basis"])
    cols = cfg.section("output").get("columns") or tr.columns()
    missing = [c for c in cols if c not in tr.observables]
    if missing:
        raise ConfigError(f"output.columns: unknown observable {missing[0]!r}")
    rows = zip(tr.times, *(tr[c] for c in cols))
    files = {"data.csv": _csv_text(["time"] + list(cols), rows)}
    derived = {"n_max": n_max, "t_end": t_end, "info": tr.info}
    summary = {c: {"max": float(np.max(tr[c])), "min": float(np.min(tr[c]))} for c in cols}
    derived["summary"] = summary
    conv = {}
    if num.get("convergence_check"):
        big = run_trace(p, (ini["label"], ini["n"]), grid, lindblad=lp, n_max=n_max + 10,
                        tol=num["tol"], basis=num["basis"])
        common = [c for c in cols if c in big.observables]
        drift = max(float(np.max(np.abs(big[c] - tr[c]))) for c in common)
        conv = {"n_max_check": n_max + 10, "max_drift": drift, "converged": drift < 1e-6}
    return files, derived, conv


def _calibration_dict(cal) -> dict:
    out = asdict(cal)
    for key in ("Omega_0", "Omega_DD", "omega_R", "omega0_R", "g_eff", "gamma_eff",
                "g_JC", "g_aJC"):
        out[f"{key}_kHz"] = out[key] / (2 * math.pi)
    return out


def _run_ion_compare(cfg: RunConfig):
    ini, num, grid_s = cfg.section("initial"), cfg.section("numerics"), cfg.section("grid")
    d = ion_drive(cfg)
    grid = TimeGrid(grid_s["t_start"], grid_s["t_end"], grid_s["n_samples"])
    n_max = _n_max(cfg, ini["n"], 1)
    tol = num["tol"]
    keys = cfg.section("compare").get("keys")
    res = compare_ion_model(d, (ini["label"], ini["n"]), grid, n_max=n_max, tol=tol,
                            keys=keys, ratio_rtol=cfg.section("ion")["ratio_rtol"])
    cols = list(res.keys)
    header = ["time"] + [f"model_{c}" for c in cols] + [f"ion_{c}" for c in cols]
    rows = zip(res.reference.times, *(res.reference[c] for c in cols),
               *(res.simulation[c] for c in cols))
    files = {"data.csv": _csv_text(header, rows)}
    drive = asdict(d)
    drive_kHz = {k: v / (2 * math.pi) for k, v in drive.items()
                 if k in ("nu", "Omega_r", "Omega_b", "Omega_S", "delta_r", "delta_b")}
    derived = {
        "n_max": n_max,
        "drive": drive,
        "drive_kHz": drive_kHz,
        "calibration": _calibration_dict(res.calibration),
        "max_deviation": res.max_deviation,
        "max_deviation_by_key": {k: float(np.max(v)) for k, v in res.deviation.items()},
        "outside_lamb_dicke": d.outside_lamb_dicke(n_max),
        "info": res.simulation.info,
    }
    return files, derived, {}


def _run_channels(cfg: RunConfig):
    ch = cfg.section("channels")
    rows = channel_table(_model(cfg), ch["k"], range(ch["n_min"], ch["n_max"] + 1),
                         ch["branches"])
    header = list(rows[0].keys()) if rows else ["k", "n", "branch"]
    files = {"data.csv": _csv_text(header, [[r[h] for h in header] for r in rows])}
    return files, {"rows": rows}, {}


def _versions() -> dict:
    import scipy

    out = {"rabistark": __version__, "python": platform.python_version(),
           "numpy": np.__version__, "scipy": scipy.__version__}
    try:
        import numba

        out["numba"] = numba.__version__
    except ImportError:  # pragma: no cover
        out["numba"] = None
    return out


def execute(cfg: RunConfig, out_dir=None, workers: Optional[int] = None) -> int:
    """Run ``cfg`` and write its artifacts into ``out_dir``; return an exit code.

    Files are first written to a scratch directory and moved into place only
    on success, so a failed run leaves nothing behind.
    """
    out_dir = Path(out_dir or cfg.out_dir or f"rabistark-{cfg.kind}")
    if workers is None:
        workers = cfg.section("numerics").get("workers") or default_workers()
    t0 = time.perf_counter()
    try:
        if cfg.kind == "scan":
            files, derived, conv = _run_scan(cfg, workers)
        elif cfg.kind == "trace":
            files, derived, conv = _run_trace(cfg)
        elif cfg.kind == "ion-compare":
            files, derived, conv = _run_ion_compare(cfg)
        else:
            files, derived, conv = _run_channels(cfg)
        if conv and not conv.get("converged", True):
            raise ConvergenceError(
                f"truncation check drifted by {conv['max_drift']:.3g} at n_max={conv['n_max_check']}"
            )
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ConvergenceError as exc:
        print(f"convergence failure: {exc}", file=sys.stderr)
        return EXIT_CONVERGENCE
    except (IntegrationError, SingularChannelError, NoRootError, CalibrationError,
            ArithmeticError, ValueError) as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    manifest = {
        "manifest_version": 1,
        "kind": cfg.kind,
        "config": cfg.echo(),
        "derived": derived,
        "convergence": conv,
        "wall_clock_s": time.perf_counter() - t0,
        "workers": workers,
        "versions": _versions(),
    }
    files["manifest.json"] = json.dumps(_jsonable(manifest), indent=2, sort_keys=True) + "\n"
    out_dir.parent.mkdir(parents=True, exist_ok=True)
    scratch = Path(tempfile.mkdtemp(prefix=".rabistark-", dir=out_dir.parent))
    try:
        for name, text in files.items():
            (scratch / name).write_text(text)
        out_dir.mkdir(parents=True, exist_ok=True)
        for name in files:
            os.replace(scratch / name, out_dir / name)
    finally:
        shutil.rmtree(scratch, ignore_errors=True)
    print(f"wrote {', '.join(sorted(files))} to {out_dir}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rabistark",
        description="Rabi-Stark model simulations: resonance scans, traces, "
        "trapped-ion comparisons and channel tables.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="kind", required=True)
    for kind in KINDS:
        p = sub.add_parser(kind, help=f"run a {kind} experiment")
        p.add_argument("--config", required=True, help="TOML config or a previous manifest.json")
        p.add_argument("--set", dest="overrides", action="append", default=[],
                       metavar="KEY=VALUE", help="override a config entry (repeatable)")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--workers", type=int, default=None,
                       help="parallel workers for scans (default: $RABISTARK_WORKERS or 1)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        text = Path(args.config).read_text()
        cfg = parse_config(text, kind=args.kind, overrides=args.overrides)
        workers = args.workers
        if workers is not None and workers < 1:
            raise ConfigError("--workers must be >= 1")
        if workers is None and cfg.section("numerics").get("workers") is None:
            workers = default_workers()
    except OSError as exc:
        print(f"config error: cannot read {args.config}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ValueError as exc:  # bad $RABISTARK_WORKERS
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return execute(cfg, out_dir=args.out, workers=workers)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
