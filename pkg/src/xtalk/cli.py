"""Command-line runner: ``xtalk <experiment> --config FILE --out DIR`` and ``xtalk report DIR``."""
from __future__ import annotations

import argparse
import datetime as _dt
import hashlib
import json
import os
import platform
import subprocess
import sys
import time
import warnings
from pathlib import Path

import numpy as np

from . import __version__, _backend
from . import config as cfgmod
from . import experiments

COMMANDS = {
    "check": "check",
    "dd-compare": "dd_compare",
    "qns-demo": "qns_demo",
    "cumulant-validate": "cumulant_validate",
}

EXIT_OK, EXIT_ERROR, EXIT_FAIL = 0, 1, 2


def dumps(obj):
    """Stable JSON text: sorted keys, two-space indent, trailing newline."""
    return json.dumps(obj, sort_keys=True, indent=2, ensure_ascii=False, allow_nan=False,
                      default=_json_default) + "\n"


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"{type(o).__name__} is not JSON serializable")


def describe_version():
    """git-describe of the source tree when available, else the package version."""
    try:
        out = subprocess.run(["git", "describe", "--tags", "--always", "--dirty"],
                             cwd=Path(__file__).resolve().parent, capture_output=True,
                             text=True, timeout=5)
        if out.returncode == 0 and out.stdout.strip():
            return f"{__version__}+g{out.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return __version__


def _sha256(data: bytes):
    return hashlib.sha256(data).hexdigest()


def write_bundle(bundle, out_dir: Path, data, manifest_extra):
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "data").mkdir(exist_ok=True)
    files = {}
    summary = dict(bundle.summary)
    summary["config"] = data
    text = dumps(summary).encode("utf-8")
    (out_dir / "summary.json").write_bytes(text)
    files["summary.json"] = _sha256(text)
    for name, table in sorted(bundle.tables.items()):
        raw = table.encode("utf-8")
        (out_dir / "data" / f"{name}.csv").write_bytes(raw)
        files[f"data/{name}.csv"] = _sha256(raw)
    manifest = dict(manifest_extra)
    manifest["files"] = files
    (out_dir / "manifest.json").write_text(dumps(manifest), encoding="utf-8")


def _warn_list(caught):
    return sorted({f"{w.category.__name__}: {w.message}" for w in caught})


def run_experiment(experiment, config_path, out_dir, seed=None, threads=None, quiet=False):
    """Run one pipeline and write its bundle. Returns the exit code."""
    data = cfgmod.load(config_path)
    if data["experiment"] != experiment:
        raise cfgmod.ConfigError("experiment", f"config is for {data['experiment']!r}, "
                                 f"not {experiment!r}")
    if seed is not None:
        data["seed"] = seed
    data.setdefault("seed", 0)
    n_threads = experiments.resolve_threads(threads)
    started = _dt.datetime.now(_dt.timezone.utc)
    t0 = time.perf_counter()
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        bundle = experiments.run(data, n_threads)
    wall = time.perf_counter() - t0
    bundle.summary["warnings"] = _warn_list(caught)
    passed = bundle.passed
    if passed is None and bundle.summary.get("verdict") in ("PASS", "FAIL"):
        passed = bundle.summary["verdict"] == "PASS"
    manifest = {
        "tool": "xtalk",
        "version": describe_version(),
        "experiment": experiment,
        "config_path": str(Path(config_path)),
        "config_sha256": _sha256(Path(config_path).read_bytes()),
        "seeds": {"master": data["seed"]},
        "threads": n_threads,
        "backend": _backend.BACKEND,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "started_utc": started.isoformat(timespec="seconds"),
        "wall_time_s": round(wall, 3),
        "verdict": None if passed is None else ("PASS" if passed else "FAIL"),
    }
    write_bundle(bundle, Path(out_dir), data, manifest)
    if not quiet:
        print(render_report(Path(out_dir)))
    return EXIT_OK if passed in (None, True) else EXIT_FAIL


# ---------------------------------------------------------------------------
# Report
# ---------------------------------------------------------------------------

def _fmt(v, spec=".4g"):
    if v is None:
        return "-"
    if isinstance(v, bool):
        return "yes" if v else "no"
    if isinstance(v, (int, float)):
        return format(v, spec)
    return str(v)


def _ci(d):
    return f"{_fmt(d.get('estimate'))} [{_fmt(d.get('ci_low'))}, {_fmt(d.get('ci_high'))}]"


def _table(header, rows):
    cols = [header] + [[_fmt(c) for c in r] for r in rows]
    widths = [max(len(str(r[k])) for r in cols) for k in range(len(header))]
    line = lambda r: "  ".join(str(c).ljust(w) for c, w in zip(r, widths)).rstrip()
    return "\n".join([line(header), line(["-" * w for w in widths])] + [line(r) for r in cols[1:]])


def _report_check(s):
    out = [f"sequence: {s['sequence']}   verdict: {s['verdict']}",
           f"residual max|chi| = {_fmt(s['residual'])}  (relative {_fmt(s['relative'])}, "
           f"tolerance {_fmt(s['tolerance'])})"]
    rows = [[e["i"], e["j"], e["J"], e["JT"], e["chi_zz"], e["max_abs_chi"]] for e in s["edges"]]
    out.append(_table(["i", "j", "J", "|J|T", "chi_zz", "max|chi|"], rows))
    return out


def _report_cumulant(s):
    rows = [[r["scale"], r["predicted"], r["monte_carlo"], r["monte_carlo_stderr"], r["discrepancy"]]
            for r in s["scales"]]
    return [_table(["scale", "cumulant", "monte carlo", "stderr", "discrepancy"], rows),
            f"log-log slope: {_fmt(s['slope'])}   verdict: {s['verdict']}"]


def _report_dd(s):
    rows = []
    for name, p in sorted(s["protocols"].items()):
        f = p.get("fit") or {}
        rows.append([name, f.get("lam"), f.get("alpha"), f.get("gamma"), f.get("k"), f.get("residual"),
                     _ci(p["favg"])])
    out = [_table(["protocol", "lambda", "alpha", "gamma", "k", "residual", "F_avg [95% CI]"], rows)]
    c = s["comparison"]
    out.append(f"{c['candidate']} vs {c['reference']}:")
    if "R_lambda" in c:
        out.append(f"  R_lambda = {_ci(c['R_lambda'])}")
    out.append(f"  R_F      = {_ci(c['R_F'])}")
    for r in s.get("j_sweep", []):
        out.append(f"  J x {_fmt(r['j_scale'])}: R_lambda = {_fmt(r['R_lambda'])}, R_F = {_fmt(r['R_F'])}")
    return out


def _report_qns(s):
    out = []
    for tag, res in (("J as configured", s["protocols"]), ("J = 0", s.get("j_zero"))):
        if not res:
            continue
        names = sorted(res)
        n = len(res[names[0]]["per_qubit"])
        rows = [[f"q{q}"] + [res[nm]["per_qubit"][q]["mse"] for nm in names] for q in range(n)]
        rows.append(["mean"] + [res[nm]["mse"]["estimate"] for nm in names])
        out.append(f"MSE per qubit ({tag})")
        out.append(_table(["qubit"] + names, rows))
    if "mse_ratio_cr_over_fttps" in s:
        out.append(f"MSE(CR-FTTPS) / MSE(FTTPS) = {_fmt(s['mse_ratio_cr_over_fttps'])}")
    for k, v in sorted(s.get("checks", {}).items()):
        out.append(f"  {k}: {'PASS' if v else 'FAIL'}")
    return out


_RENDER = {"check": _report_check, "cumulant_validate": _report_cumulant,
           "dd_compare": _report_dd, "qns_demo": _report_qns}


def render_report(bundle_dir: Path) -> str:
    """Human-readable summary of a bundle directory; missing parts are listed."""
    bundle_dir = Path(bundle_dir)
    lines, missing = [], []
    manifest = summary = None
    for name in ("manifest.json", "summary.json"):
        path = bundle_dir / name
        if not path.is_file():
            missing.append(name)
            continue
        try:
            obj = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError:
            missing.append(f"{name} (unreadable)")
            continue
        if name == "manifest.json":
            manifest = obj
        else:
            summary = obj
    data_dir = bundle_dir / "data"
    tables = sorted(p.name for p in data_dir.glob("*.csv")) if data_dir.is_dir() else []
    if not tables:
        missing.append("data/*.csv")
    title = (summary or manifest or {}).get("experiment", "unknown experiment")
    lines.append(f"== xtalk report: {title} ==")
    if manifest:
        lines.append(f"version {manifest.get('version')}  seed {manifest.get('seeds', {}).get('master')}  "
                     f"backend {manifest.get('backend')}")
    else:
        lines.append("manifest: missing")
    if summary:
        render = _RENDER.get(summary.get("experiment"))
        try:
            lines.extend(render(summary) if render else ["(no renderer for this experiment)"])
        except (KeyError, TypeError) as exc:
            lines.append(f"summary incomplete: missing {exc}")
        for w in summary.get("warnings", []):
            lines.append(f"warning: {w}")
    else:
        lines.append("summary: missing")
    lines.append("tables: " + (", ".join(tables) if tables else "none"))
    if missing:
        lines.append("missing artifacts: " + ", ".join(missing))
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------

def _u64(text):
    v = int(text, 0)
    if not 0 <= v < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def _threads(text):
    v = int(text)
    if v < 0:
        raise argparse.ArgumentTypeError("threads must be >= 0")
    return v


def build_parser():
    parser = argparse.ArgumentParser(prog="xtalk", description="Crosstalk-robust control experiments.")
    parser.add_argument("--version", action="version", version=f"xtalk {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for cmd, exp in COMMANDS.items():
        p = sub.add_parser(cmd, help=f"run the {exp} pipeline")
        p.add_argument("--config", required=True, help="JSON config file")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--seed", type=_u64, default=None, help="master seed (overrides the config)")
        p.add_argument("--threads", type=_threads, default=None,
                       help="worker threads, 0 = auto (default: $XTALK_THREADS or auto)")
        p.add_argument("--quiet", action="store_true", help="suppress the report on stdout")
    p = sub.add_parser("report", help="print a text report for an output directory")
    p.add_argument("bundle", help="output directory of a previous run")
    p.add_argument("--out", default=None, help="also write the report to this file")
    p.add_argument("--quiet", action="store_true", help="do not print to stdout")
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "report":
            bundle = Path(args.bundle)
            if not bundle.is_dir():
                raise FileNotFoundError(f"bundle directory {bundle} does not exist")
            text = render_report(bundle)
            if args.out:
                Path(args.out).write_text(text + "\n", encoding="utf-8")
            if not args.quiet:
                print(text)
            return EXIT_OK
        return run_experiment(COMMANDS[args.command], args.config, args.out, args.seed,
                              args.threads, args.quiet)
    except cfgmod.ConfigError as exc:
        print(f"xtalk: config error at {exc.path or '<root>'}: {exc.message}", file=sys.stderr)
        return EXIT_ERROR
    except (OSError, ValueError, RuntimeError) as exc:
        print(f"xtalk: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
