"""Command-line front end.

Subcommands: ``r0``, ``coeffs``, ``states``, ``branch``, ``verify``, ``sweep``
and ``models``.  Exit status is 0 on success, 1 when a check fails and 2 on a
usage or configuration error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import bifcoeffs, continuation, ngm, recipes, steadystate, verify
from .models import ModelError, available_models, get_model

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2
OUTPUT_SCHEMA_VERSION = 1
SWEEP_CSV_HEADER = "# epibif sweep csv v1: one row per R0=1, a=0 hepc3d point; c and e from center-manifold coefficients"

# config keys that set options rather than model parameters
_OPTION_KEYS = {"model", "alpha1", "alpha2", "range", "out", "format", "jobs", "tol_a", "seed", "n"}


class UsageError(Exception):
    pass


def read_config(path) -> dict[str, str]:
    """Parse a flat ``key = value`` file; ``#`` starts a comment."""
    out = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc.strerror}") from None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise UsageError(f"{path}:{lineno}: empty key")
        out[key.replace("-", "_")] = value
    return out


def _parse_assignment(text: str) -> tuple[str, float]:
    if "=" not in text:
        raise UsageError(f"--param expects name=value, got {text!r}")
    name, value = (s.strip() for s in text.split("=", 1))
    try:
        return name, float(value)
    except ValueError:
        raise UsageError(f"parameter {name!r}: {value!r} is not a number") from None


def _parse_range(text: str) -> tuple[float, float]:
    try:
        lo, hi = (float(s) for s in text.split(":"))
    except ValueError:
        raise UsageError(f"--range expects lo:hi, got {text!r}") from None
    if not lo < hi:
        raise UsageError("--range needs lo < hi")
    return lo, hi


class RunConfig:
    """Resolved options: config file first, then command-line flags on top."""

    def __init__(self, args: argparse.Namespace):
        cfg = read_config(args.config) if getattr(args, "config", None) else {}
        opts = {k: v for k, v in cfg.items() if k in _OPTION_KEYS}
        params = {}
        for k, v in cfg.items():
            if k not in _OPTION_KEYS:
                params[k] = _parse_assignment(f"{k}={v}")[1]
        for text in getattr(args, "param", None) or []:
            name, value = _parse_assignment(text)
            params[name] = value

        def pick(name, default=None):
            val = getattr(args, name, None)
            return val if val is not None else opts.get(name, default)

        self.command = args.command
        self.model_id = pick("model")
        self.alpha1 = pick("alpha1")
        self.alpha2 = pick("alpha2")
        rng = pick("range")
        self.range = _parse_range(rng) if rng else None
        self.out = pick("out")
        self.format = pick("format")
        self.jobs = int(pick("jobs", 1))
        tol = pick("tol_a")
        self.tol_a = float(tol) if tol is not None else bifcoeffs.TOL_A
        self.seed = int(pick("seed", 0))
        self.n = int(pick("n", 200))
        self.param_overrides = params
        self.model = None
        self.params: dict = {}

    def load_model(self):
        if not self.model_id:
            raise UsageError("--model is required")
        try:
            self.model = get_model(self.model_id)
        except (ModelError, OSError, ValueError) as exc:
            raise UsageError(str(exc)) from None
        unknown = sorted(set(self.param_overrides) - set(self.model.param_names) - set(self.model.fixed))
        if unknown:
            raise UsageError(f"{self.model.id}: unknown parameter(s) {', '.join(unknown)}")
        merged = {**self.model.defaults, **self.param_overrides}
        try:
            self.params = self.model.validate(merged)
        except ModelError as exc:
            raise UsageError(str(exc)) from None
        for name in (self.alpha1, self.alpha2):
            if name is not None and name not in self.model.param_names:
                raise UsageError(f"{self.model.id}: unknown parameter {name!r}")
        return self.model


def _jsonable(obj):
    return recipes._jsonable(obj)


def _dump_json(obj) -> str:
    return json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n"


def _emit(cfg: RunConfig, text: str, stdout) -> None:
    if cfg.out:
        Path(cfg.out).write_text(text)
    else:
        stdout.write(text)


def _need_format(cfg, allowed, default):
    fmt = cfg.format or default
    if fmt not in allowed:
        raise UsageError(f"{cfg.command}: --format must be one of {', '.join(allowed)}")
    return fmt


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_r0(cfg: RunConfig, stdout) -> int:
    _need_format(cfg, ("json",), "json")
    model = cfg.load_model()
    rep = ngm.r0(model, cfg.params, validated=True)
    out = {"schema_version": OUTPUT_SCHEMA_VERSION, "model": model.id, "params": cfg.params, **rep.to_dict(),
           "stability": ngm.dfe_stability(model, cfg.params, validated=True)}
    _emit(cfg, _dump_json(out), stdout)
    return EXIT_OK


def cmd_coeffs(cfg: RunConfig, stdout, at_threshold: bool = False) -> int:
    _need_format(cfg, ("json",), "json")
    model = cfg.load_model()
    if not cfg.alpha1:
        raise UsageError("coeffs: --alpha1 is required")
    p = dict(cfg.params)
    if at_threshold:
        p[cfg.alpha1] = continuation.threshold_alpha1(model, p, cfg.alpha1, p[cfg.alpha1])
    cc = bifcoeffs.center_coefficients(model, p, cfg.alpha1, cfg.alpha2, tol_a=cfg.tol_a)
    out = {"schema_version": OUTPUT_SCHEMA_VERSION, "model": model.id, "params": p,
           "r0": ngm.r0(model, p).r0, "coefficients": cc.to_dict()}
    status = EXIT_OK
    try:
        cls = bifcoeffs.classify(cc)
        out["classification"] = {"label": cls.label, "flags": sorted(cls.flags)}
    except bifcoeffs.BifurcationError as exc:
        out["classification"] = {"error": str(exc)}
        status = EXIT_FAIL
    _emit(cfg, _dump_json(out), stdout)
    return status


def cmd_states(cfg: RunConfig, stdout) -> int:
    fmt = _need_format(cfg, ("json", "csv"), "json")
    model = cfg.load_model()
    states = steadystate.enumerate(model, cfg.params, validated=True)
    if fmt == "csv":
        buf = io.StringIO()
        buf.write("# epibif states csv v1: one row per steady state\n")
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow([*model.state_names, "positivity", "stability", "max_re", "residual"])
        for st in states:
            wr.writerow([*(repr(float(v)) for v in st.x), st.positivity, st.stability,
                         repr(float(np.max(st.eigenvalues.real))), repr(float(st.residual))])
        _emit(cfg, buf.getvalue(), stdout)
        return EXIT_OK
    out = {"schema_version": OUTPUT_SCHEMA_VERSION, "model": model.id, "params": cfg.params,
           "r0": ngm.r0(model, cfg.params, validated=True).r0,
           "states": [st.to_dict(model.state_names) for st in states]}
    if model.id in steadystate.PARITY_MODELS:
        audit = steadystate.parity_audit(model, cfg.params, validated=True)
        out["parity"] = {"count": audit.count, "parity_ok": audit.parity_ok, "abstained": audit.abstained,
                         "reason": audit.reason}
    _emit(cfg, _dump_json(out), stdout)
    return EXIT_OK


def _branch_start(model, p, alpha1):
    pos = [st for st in steadystate.enumerate(model, p, validated=True) if st.is_positive]
    if pos:
        return pos[0].x, p
    x, a = continuation.bifurcating_start(model, p, alpha1)
    return x, {**p, alpha1: a}


def cmd_branch(cfg: RunConfig, stdout) -> int:
    fmt = _need_format(cfg, ("csv", "json"), "csv")
    model = cfg.load_model()
    if not cfg.alpha1:
        raise UsageError("branch: --alpha1 is required")
    x, p = _branch_start(model, cfg.params, cfg.alpha1)
    br = continuation.trace_both(model, p, cfg.alpha1, x, alpha_range=cfg.range)
    if fmt == "csv":
        _emit(cfg, br.to_csv(), stdout)
    else:
        d = br.to_dict()
        d["folds"] = [fp.to_dict() for fp in continuation.fold_points(br)]
        _emit(cfg, _dump_json(d), stdout)
    return EXIT_OK


def cmd_verify(cfg: RunConfig, stdout, suite: str) -> int:
    fmt = _need_format(cfg, ("json", "text"), "text")
    names = verify.suite_names() if suite == "all" else [suite]
    if any(n not in verify.SUITES for n in names):
        raise UsageError(f"unknown suite {suite!r}; choose from all, {', '.join(verify.suite_names())}")
    reports = []
    for name in names:
        kw = {"cli_runner": run_captured} if name == "hygiene" else {}
        reports.append(verify.run_suite(name, **kw))
    if fmt == "json":
        text = _dump_json([r.to_dict() for r in reports] if len(reports) > 1 else reports[0].to_dict())
    else:
        text = "\n".join(r.summary() for r in reports) + "\n"
    _emit(cfg, text, stdout)
    return EXIT_OK if all(r.passed for r in reports) else EXIT_FAIL


def cmd_sweep(cfg: RunConfig, stdout) -> int:
    fmt = _need_format(cfg, ("csv", "json"), "csv")
    rows = recipes.sweep_c_sign(n=cfg.n, seed=cfg.seed, jobs=cfg.jobs)
    if fmt == "json":
        _emit(cfg, _dump_json({"schema_version": OUTPUT_SCHEMA_VERSION, "rows": rows}), stdout)
        return EXIT_OK
    names = list(get_model("hepc3d").param_names)
    buf = io.StringIO()
    buf.write(SWEEP_CSV_HEADER + "\n")
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow([*names, "c", "e", "class"])
    for r in rows:
        vals = [r[k] for k in names] + [r["c"], r["e"]]
        wr.writerow([_num(v) for v in vals] + [r["class"]])
    _emit(cfg, buf.getvalue(), stdout)
    return EXIT_OK


def _num(v):
    if v is None:
        return ""
    v = float(v)
    return repr(v) if math.isfinite(v) else str(v)


def cmd_models(cfg: RunConfig, stdout) -> int:
    rows = []
    for mid in available_models():
        m = get_model(mid)
        rows.append(f"{mid}: states {', '.join(m.state_names)}; params {', '.join(m.param_names)}")
    stdout.write("\n".join(rows) + "\n")
    return EXIT_OK


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--model", help="built-in model id or path to a JSON model file")
    common.add_argument("--param", action="append", metavar="NAME=VALUE", help="parameter override (repeatable)")
    common.add_argument("--config", metavar="PATH", help="flat key=value file with options and parameters")
    common.add_argument("--alpha1", help="primary bifurcation parameter")
    common.add_argument("--alpha2", help="secondary (unfolding) parameter")
    common.add_argument("--range", metavar="LO:HI", help="alpha1 range for continuation")
    common.add_argument("--out", metavar="PATH", help="write output here instead of stdout")
    common.add_argument("--format", help="json, csv or text depending on the command")
    common.add_argument("--jobs", type=int, help="worker processes for sweeps")
    common.add_argument("--tol-a", dest="tol_a", type=float, help="relative tolerance for a = 0")
    common.add_argument("--seed", type=int, help="random seed for sweeps")

    parser = argparse.ArgumentParser(prog="epibif", description="Backward-bifurcation analysis of epidemic models")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("r0", parents=[common], help="basic reproduction number and DFE stability")
    c = sub.add_parser("coeffs", parents=[common], help="center-manifold coefficients and classification")
    c.add_argument("--at-threshold", action="store_true", help="first move alpha1 to R0 = 1")
    sub.add_parser("states", parents=[common], help="enumerate steady states")
    sub.add_parser("branch", parents=[common], help="continue a steady-state branch in alpha1")
    v = sub.add_parser("verify", parents=[common], help="run an acceptance suite")
    v.add_argument("suite", help=f"all or one of: {', '.join(verify.suite_names())}")
    s = sub.add_parser("sweep", parents=[common], help="sample hepc3d points with R0 = 1, a = 0 and record c, e")
    s.add_argument("--n", type=int, help="number of draws (default 200)")
    sub.add_parser("models", parents=[common], help="list built-in models")
    return parser


def main(argv=None, stdout=None, stderr=None) -> int:
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        cfg = RunConfig(args)
        if args.command == "r0":
            return cmd_r0(cfg, stdout)
        if args.command == "coeffs":
            return cmd_coeffs(cfg, stdout, at_threshold=args.at_threshold)
        if args.command == "states":
            return cmd_states(cfg, stdout)
        if args.command == "branch":
            return cmd_branch(cfg, stdout)
        if args.command == "verify":
            return cmd_verify(cfg, stdout, args.suite)
        if args.command == "sweep":
            return cmd_sweep(cfg, stdout)
        return cmd_models(cfg, stdout)
    except UsageError as exc:
        stderr.write(f"epibif: error: {exc}\n")
        return EXIT_USAGE
    except ModelError as exc:
        stderr.write(f"epibif: {exc}\n")
        return EXIT_FAIL


def run_captured(argv) -> tuple[int, str]:
    """Run the CLI in-process and return ``(exit code, stdout text)``."""
    out, err = io.StringIO(), io.StringIO()
    code = main(list(argv), stdout=out, stderr=err)
    return code, out.getvalue()


if __name__ == "__main__":
    sys.exit(main())
