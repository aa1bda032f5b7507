"""Command-line front end: ``run``, ``sweep`` and ``peaks``.

Exit codes: 0 success, 2 configuration or input error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import copy
import dataclasses
import hashlib
import json
import math
import os
import sys
import tempfile
import time
from pathlib import Path

import numpy as np

from . import __version__
from .engine import NumericalError
from .ladder import peak_table
from .params import BandFlags, ConfigError, Grid, ModelConfig, Truncation
from .pipeline import Solution, solve
from .presets import INTERPRETATION, PRESETS, preset_names
from .spectra import (
    Spectrum,
    correlation_at_zero,
    dominant_peaks,
    excited_population,
    find_peaks,
    fwhm,
    photon_statistics,
)

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3
THREADS_ENV = "DRESSEDLASER_THREADS"
ORACLE_MAX_N = 30
SWEEP_AXES = ("delta_a", "phi", "gamma_plus_scale", "kappa", "g")

_MODEL_KEYS = {"preset", "gamma", "kappa", "g", "omega0", "delta_a", "phi", "gamma_plus_scale", "band_flags"}
_FLAG_KEYS = {"u_central", "u_plus", "u_minus"}
_NUMERIC_KEYS = {"n_max", "tail_eps", "start", "cap", "method", "grid"}
_GRID_KEYS = {"nu_min", "nu_max", "points"}
_OUTPUT_KEYS = {"dir"}
_METHODS = ("thomas", "mcf", "sparse")


# ---------------------------------------------------------------- config


@dataclasses.dataclass(frozen=True)
class RunConfig:
    model: ModelConfig
    gamma_plus_scale: float
    method: str
    out_dir: str | None
    preset: str | None
    raw: dict

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.raw, sort_keys=True).encode()).hexdigest()[:16]


def _check_keys(section: dict, allowed: set, where: str) -> None:
    if not isinstance(section, dict):
        raise ConfigError(where, "must be a JSON object")
    for key in section:
        if key not in allowed:
            raise ConfigError(f"{where}.{key}" if where else key, "unknown key")


def _number(section, key, where, default=None, integer=False):
    value = section.get(key, default)
    if value is None:
        return None
    ok = isinstance(value, int) if integer else isinstance(value, (int, float))
    if isinstance(value, bool) or not ok:
        kind = "an integer" if integer else "a number"
        raise ConfigError(f"{where}.{key}", f"must be {kind}, got {value!r}")
    return value if integer else float(value)


def parse_config(doc: dict) -> RunConfig:
    """Validate a config document and resolve presets into a RunConfig."""
    _check_keys(doc, {"model", "numerics", "output"}, "")
    model = doc.get("model", {})
    numerics = doc.get("numerics", {})
    output = doc.get("output", {})
    _check_keys(model, _MODEL_KEYS, "model")
    _check_keys(numerics, _NUMERIC_KEYS, "numerics")
    _check_keys(output, _OUTPUT_KEYS, "output")

    preset = model.get("preset")
    base = {}
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigError("model.preset", f"unknown preset {preset!r}; choose from {', '.join(preset_names())}")
        base = copy.deepcopy(PRESETS[preset])
    merged = {**base, **{k: v for k, v in model.items() if k != "preset"}}
    flags = {**base.get("band_flags", {}), **model.get("band_flags", {})}
    _check_keys(flags, _FLAG_KEYS, "model.band_flags")
    for key, value in flags.items():
        if not isinstance(value, bool):
            raise ConfigError(f"model.band_flags.{key}", "must be true or false")

    kwargs = {}
    for key in ("gamma", "kappa", "g", "omega0", "delta_a"):
        v = _number(merged, key, "model")
        if v is not None:
            kwargs[key] = v
    phi = _number(merged, "phi", "model")
    scale = _number(merged, "gamma_plus_scale", "model", default=1.0)
    if not (math.isfinite(scale) and scale >= 0):
        raise ConfigError("model.gamma_plus_scale", "must be a finite number >= 0")

    grid_doc = numerics.get("grid")
    grid = None
    if grid_doc is not None:
        _check_keys(grid_doc, _GRID_KEYS, "numerics.grid")
        for key in ("nu_min", "nu_max"):
            if key not in grid_doc:
                raise ConfigError(f"numerics.grid.{key}", "missing")
        grid = Grid(
            _number(grid_doc, "nu_min", "numerics.grid"),
            _number(grid_doc, "nu_max", "numerics.grid"),
            _number(grid_doc, "points", "numerics.grid", default=2001, integer=True),
        )
    defaults = Truncation()
    trunc = Truncation(
        n_max=_number(numerics, "n_max", "numerics", integer=True),
        tail_eps=_number(numerics, "tail_eps", "numerics", default=defaults.tail_eps),
        start=_number(numerics, "start", "numerics", default=defaults.start, integer=True),
        cap=_number(numerics, "cap", "numerics", default=defaults.cap, integer=True),
    )
    method = numerics.get("method", "thomas")
    if method not in _METHODS:
        raise ConfigError("numerics.method", f"must be one of {', '.join(_METHODS)}")
    out_dir = output.get("dir")
    if out_dir is not None and not isinstance(out_dir, str):
        raise ConfigError("output.dir", "must be a string")

    try:
        cfg = ModelConfig(phi_override=phi, band_flags=BandFlags(**flags), truncation=trunc, grid=grid, **kwargs)
    except ConfigError as exc:
        raise ConfigError(_qualify(exc.field), str(exc).split(": ", 1)[-1]) from exc
    raw = {
        "model": {**{f: getattr(cfg, f) for f in ("gamma", "kappa", "g", "omega0", "delta_a")},
                  "phi": cfg.phi_override, "gamma_plus_scale": scale,
                  "band_flags": dataclasses.asdict(cfg.band_flags)},
        "numerics": {**dataclasses.asdict(trunc), "method": method, "grid": dataclasses.asdict(cfg.resolved_grid())},
    }
    return RunConfig(cfg, scale, method, out_dir, preset, raw)


def _qualify(field: str) -> str:
    if field == "phi_override":
        return "model.phi"
    if field.startswith("truncation."):
        return "numerics." + field.split(".", 1)[1]
    if field.startswith("grid"):
        return "numerics." + field
    return "model." + field


def load_config(path: str) -> RunConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ConfigError("config", f"cannot read {path}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError("config", f"invalid JSON at line {exc.lineno}: {exc.msg}") from exc
    return parse_config(doc)


# ---------------------------------------------------------------- output


def thread_count() -> int:
    value = os.environ.get(THREADS_ENV)
    if value is None:
        return os.cpu_count() or 1
    try:
        n = int(value)
    except ValueError:
        raise ConfigError(THREADS_ENV, f"must be a positive integer, got {value!r}") from None
    if n < 1:
        raise ConfigError(THREADS_ENV, "must be a positive integer")
    return n


def _atomic_write(path: Path, text: str) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def format_csv(nu: np.ndarray, values: np.ndarray) -> str:
    if not (np.all(np.isfinite(nu)) and np.all(np.isfinite(values))):
        raise NumericalError("refusing to serialize non-finite spectrum values")
    lines = ["nu,value"]
    lines.extend(f"{x:.12g},{y:.12g}" for x, y in zip(nu.tolist(), values.tolist()))
    return "\n".join(lines) + "\n"


def write_spectrum(path: Path, spec: Spectrum) -> None:
    _atomic_write(path, format_csv(spec.nu, spec.values))


def write_json(path: Path, doc: dict) -> None:
    _atomic_write(path, json.dumps(doc, indent=2, sort_keys=True, allow_nan=False) + "\n")


def read_spectrum(path: str) -> Spectrum:
    try:
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        with open(path, encoding="utf-8") as fh:
            header = fh.readline().strip()
    except (OSError, ValueError) as exc:
        raise ConfigError("spectrum", f"cannot read {path}: {exc}") from exc
    if header != "nu,value" or data.shape[1] != 2:
        raise ConfigError("spectrum", f"{path} is not a nu,value table")
    # the kind is irrelevant for peak matching
    return Spectrum(data[:, 0], data[:, 1], "cavity")


# ---------------------------------------------------------------- run


def _frame_dict(frame) -> dict:
    return {k: (None if isinstance(v, float) and not math.isfinite(v) else v) for k, v in dataclasses.asdict(frame).items()}


def _spectrum_summary(spec: Spectrum) -> dict:
    peaks = find_peaks(spec)
    dom = dominant_peaks(spec)
    if not peaks:
        return {"peak_count": 0, "dominant_count": 0, "dominant_nu": None, "dominant_fwhm": None}
    top = max(peaks, key=lambda p: p.height)
    width = fwhm(spec, top.index)
    return {
        "peak_count": len(peaks),
        "dominant_count": len(dom),
        "dominant_nu": top.nu,
        "dominant_fwhm": width if math.isfinite(width) else None,
    }


def _stats_doc(sol: Solution, digest: str) -> dict:
    stats = photon_statistics(sol.steady)
    pop1 = excited_population(sol.steady)
    c_cav, c_fl = correlation_at_zero(sol.steady, sol.gen_m1, sol.frame)
    cav_int = sol.cavity.integral()
    fl_int = sol.fluor_lower.integral()
    return {
        "manifest": "manifest.json",
        "config_hash": digest,
        "mean_n": stats.mean_n,
        "mandel_q": stats.mandel_q,
        "mean_a": stats.mean_a,
        "excited_population": pop1,
        "p_n": stats.p_n.tolist(),
        "correlation_at_zero": {"cavity": c_cav.real, "fluor_lower": c_fl.real},
        "integrals": {
            "cavity": cav_int,
            "cavity_expected": 2 * math.pi * stats.mean_n,
            "fluor_lower": fl_int,
            "fluor_lower_expected": math.pi * sol.frame.gamma_minus * pop1,
        },
        "cavity_peaks": _spectrum_summary(sol.cavity),
        "fluor_lower_peaks": _spectrum_summary(sol.fluor_lower),
    }


def _ladder_doc(sol: Solution, digest: str) -> dict:
    pred = peak_table(sol.frame, sol.config.kappa, sol.n_max)
    pops = [None if not math.isfinite(p) else p for p in pred.populations.tolist()]
    return {
        "manifest": "manifest.json",
        "config_hash": digest,
        "grid_spacing": sol.cavity.spacing,
        "meta": pred.meta,
        "peaks": [dataclasses.asdict(p) for p in pred.peaks],
        "populations": pops,
    }


def _oracle_outputs(sol: Solution, out: Path) -> dict:
    from .oracle import build_liouvillian, oracle_spectrum, oracle_steady_state

    if sol.n_max > ORACLE_MAX_N:
        raise NumericalError(f"oracle limited to n_max <= {ORACLE_MAX_N}; this run needs {sol.n_max}")
    L = build_liouvillian(sol.frame, sol.config.kappa, sol.n_max)
    rho = oracle_steady_state(L)
    nu = sol.cavity.nu
    report = {}
    for kind in ("cavity", "fluor_lower", "fluor_central", "fluor_upper"):
        spec = oracle_spectrum(L, rho, kind, nu)
        write_spectrum(out / f"oracle_{kind}.csv", spec)
        engine = {"cavity": sol.cavity, "fluor_lower": sol.fluor_lower}.get(kind)
        if engine is not None:
            report[kind] = {
                "max_relative_deviation": relative_deviation(engine.values, spec.values),
                "max_deviation_over_peak": float(
                    np.abs(engine.values - spec.values).max() / max(np.abs(spec.values).max(), 1e-300)
                ),
            }
    return report


def relative_deviation(a: np.ndarray, b: np.ndarray) -> float:
    """Largest pointwise ``|a - b| / |b|``; points below 1e-12 of the peak use that floor."""
    a = np.asarray(a)
    b = np.asarray(b)
    scale = np.abs(b).max()
    if scale == 0.0:
        return float(np.abs(a).max())
    denom = np.maximum(np.abs(b), 1e-12 * scale)
    return float(np.max(np.abs(a - b) / denom))


def execute_run(rc: RunConfig, out: Path, oracle: bool = False) -> dict:
    """Solve one configuration and write its files into ``out``."""
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    sol = solve(rc.model, rc.gamma_plus_scale, rc.method, thread_count())
    digest = rc.digest()
    files = ["cavity.csv", "fluor_lower.csv", "stats.json", "ladder.json"]
    write_spectrum(out / "cavity.csv", sol.cavity)
    write_spectrum(out / "fluor_lower.csv", sol.fluor_lower)
    stats = _stats_doc(sol, digest)
    write_json(out / "stats.json", stats)
    write_json(out / "ladder.json", _ladder_doc(sol, digest))
    timings = dict(sol.timings)
    if oracle:
        t1 = time.perf_counter()
        report = _oracle_outputs(sol, out)
        timings["oracle"] = time.perf_counter() - t1
        write_json(out / "oracle_report.json", {"manifest": "manifest.json", "config_hash": digest, **report})
        files += [f"oracle_{k}.csv" for k in ("cavity", "fluor_lower", "fluor_central", "fluor_upper")]
        files.append("oracle_report.json")
    timings["total"] = time.perf_counter() - t0
    manifest = {
        "config": rc.raw,
        "config_hash": digest,
        "preset": rc.preset,
        "interpretation": INTERPRETATION if rc.preset else None,
        "frame": _frame_dict(sol.frame),
        "n_max": sol.n_max,
        "tail_mass": sol.tail_mass,
        "timings": timings,
        "version": __version__,
        "warnings": sol.warnings,
        "files": files,
    }
    write_json(out / "manifest.json", manifest)
    return {"solution": sol, "stats": stats, "manifest": manifest}


def _default_out(config_path: str) -> Path:
    return Path(config_path).with_suffix("").parent / (Path(config_path).stem + "_out")


def cmd_run(args) -> int:
    rc = load_config(args.config)
    out = Path(args.out or rc.out_dir or _default_out(args.config))
    result = execute_run(rc, out, oracle=args.oracle)
    for w in result["manifest"]["warnings"]:
        print(f"warning: {w}", file=sys.stderr)
    print(f"wrote {len(result['manifest']['files']) + 1} files to {out}")
    return EXIT_OK


# ---------------------------------------------------------------- sweep


def _parse_values(axis: str, text: str) -> list:
    items = [v.strip() for v in text.split(",") if v.strip()]
    if not items:
        raise ConfigError("values", "empty list")
    values = []
    for item in items:
        if axis == "phi" and item in PRESETS:
            values.append(item)
            continue
        try:
            v = float(item)
        except ValueError:
            raise ConfigError("values", f"{item!r} is not a number") from None
        if not math.isfinite(v):
            raise ConfigError("values", f"{item!r} is not finite")
        values.append(v)
    return values


def _apply_axis(doc: dict, axis: str, value) -> dict:
    doc = copy.deepcopy(doc)
    model = doc.setdefault("model", {})
    if axis == "phi" and isinstance(value, str):
        model["phi"] = PRESETS[value]["phi"]
    elif axis == "delta_a":
        # the mixing angle must follow the detuning, so any pinned angle is dropped
        if "preset" in model:
            preset = copy.deepcopy(PRESETS[model.pop("preset")])
            flags = {**preset.pop("band_flags"), **model.get("band_flags", {})}
            model = {**preset, **model, "band_flags": flags}
            doc["model"] = model
        model["delta_a"] = value
        model.pop("phi", None)
    else:
        model[axis] = value
    return doc


def cmd_sweep(args) -> int:
    if args.axis not in SWEEP_AXES:
        raise ConfigError("axis", f"must be one of {', '.join(SWEEP_AXES)}")
    values = _parse_values(args.axis, args.values)
    try:
        with open(args.config, encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ConfigError("config", f"cannot read {args.config}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError("config", f"invalid JSON at line {exc.lineno}: {exc.msg}") from exc
    base = parse_config(doc)  # validate before any work
    out = Path(args.out or base.out_dir or _default_out(args.config))
    out.mkdir(parents=True, exist_ok=True)
    entries = []
    for value in values:
        label = value if isinstance(value, str) else f"{value:.12g}"
        entry = {"value": value, "dir": f"{args.axis}={label}", "ok": False}
        try:
            rc = parse_config(_apply_axis(doc, args.axis, value))
            res = execute_run(rc, out / entry["dir"])
            stats = res["stats"]
            entry.update(
                ok=True,
                n_max=res["manifest"]["n_max"],
                mean_n=stats["mean_n"],
                mandel_q=stats["mandel_q"],
                **stats["cavity_peaks"],
            )
        except (ConfigError, NumericalError) as exc:
            entry["error"] = str(exc)
        entries.append(entry)
    failures = sum(not e["ok"] for e in entries)
    summary = {"axis": args.axis, "entries": entries, "partial_failure": 0 < failures < len(entries)}
    write_json(out / "summary.json", summary)
    for e in entries:
        if e["ok"]:
            print(f"{args.axis}={e['value']}: <n>={e['mean_n']:.4g} Q={e['mandel_q']:.4g} peaks={e['peak_count']}")
        else:
            print(f"{args.axis}={e['value']}: failed: {e['error']}", file=sys.stderr)
    return EXIT_NUMERIC if failures == len(entries) else EXIT_OK


# ---------------------------------------------------------------- peaks


def match_peaks(spec: Spectrum, ladder: dict, tol_steps: float = 1.0) -> dict:
    """Pair each detected peak with the nearest predicted ladder line."""
    lines = ladder["peaks"]
    h = spec.spacing
    predicted = np.array([p["nu"] for p in lines])
    matched, unmatched = [], []
    for peak in find_peaks(spec):
        k = int(np.argmin(np.abs(predicted - peak.nu)))
        line = lines[k]
        offset = abs(peak.nu - line["nu"]) / h
        if abs(peak.nu) <= tol_steps * h:
            # inner lines crowd towards zero as n grows and merge into one line
            label = "lasing line"
        elif line["n"] == 0:
            label = "vacuum Rabi doublet"
        else:
            label = f"{line['kind']} n={line['n']}"
        row = {"nu": peak.nu, "height": peak.height, "predicted_nu": line["nu"], "kind": line["kind"],
               "n": line["n"], "offset_steps": offset, "label": label}
        if label == "lasing line" or offset <= tol_steps:
            matched.append(row)
        else:
            unmatched.append(row)
    return {"grid_spacing": h, "tolerance_steps": tol_steps, "matched": matched, "unmatched": unmatched}


def cmd_peaks(args) -> int:
    try:
        with open(args.ladder, encoding="utf-8") as fh:
            ladder = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError("ladder", f"cannot read {args.ladder}: {exc}") from exc
    manifest_path = Path(args.spectrum).parent / "manifest.json"
    try:
        with open(manifest_path, encoding="utf-8") as fh:
            manifest = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError("manifest", f"no readable manifest next to {args.spectrum}") from exc
    if manifest.get("config_hash") != ladder.get("config_hash"):
        raise ConfigError("manifest", "spectrum and ladder come from different runs")
    spec = read_spectrum(args.spectrum)
    report = match_peaks(spec, ladder, args.tol)
    text = json.dumps(report, indent=2, allow_nan=False)
    if args.out:
        _atomic_write(Path(args.out), text + "\n")
    print(text)
    return EXIT_OK


# ---------------------------------------------------------------- entry


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dressedlaser", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="solve one configuration")
    p.add_argument("config")
    p.add_argument("--out")
    p.add_argument("--oracle", action="store_true", help="also run the dense reference solver")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="repeat a run along one parameter axis")
    p.add_argument("config")
    p.add_argument("--axis", required=True)
    p.add_argument("--values", required=True, help="comma-separated; phi also accepts preset names")
    p.add_argument("--out")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("peaks", help="match spectrum peaks to ladder lines")
    p.add_argument("spectrum")
    p.add_argument("ladder")
    p.add_argument("--tol", type=float, default=1.0, help="match tolerance in grid steps")
    p.add_argument("--out")
    p.set_defaults(func=cmd_peaks)

    p = sub.add_parser("presets", help="list preset names")
    p.set_defaults(func=lambda args: print("\n".join(preset_names())) or EXIT_OK)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
