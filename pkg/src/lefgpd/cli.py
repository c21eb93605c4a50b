"""Command-line front end: ``verify``, ``sweep`` and ``model-kernel``.

Exit codes: 0 pass, 2 failed verdict, 1 configuration or math error.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import sys

import jsonschema
import numpy as np

from .errors import ConfigError, LefgpdError
from .geometry import AffineMap, CircleMap, TorusGeometry
from .heatkernel import EllipticSymbol, model_kernel, model_kernel_total_integral
from .lefschetz import VerificationConfig, sweep, sweep_table, verify

log = logging.getLogger("lefgpd")

CSV_HEADER = "t,tau,str_t_geometric,str_spectral,fixed_point_side,abs_error"

_positive = {"type": "number", "exclusiveMinimum": 0}

CONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["dim", "map"],
    "properties": {
        "dim": {"type": "integer", "minimum": 1},
        "map": {
            "oneOf": [
                {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["type", "matrix"],
                    "properties": {
                        "type": {"const": "affine"},
                        "matrix": {"type": "array", "minItems": 1,
                                   "items": {"type": "array", "minItems": 1, "items": {"type": "integer"}}},
                        "shift": {"type": "array", "items": {"type": "number"}},
                    },
                },
                {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["type", "degree"],
                    "properties": {
                        "type": {"const": "circle_fourier"},
                        "degree": {"type": "integer"},
                        "c0": {"type": "number"},
                        "sin": {"type": "array", "items": {"type": "array", "minItems": 2, "maxItems": 2,
                                                           "prefixItems": [{"type": "integer"}, {"type": "number"}]}},
                        "cos": {"type": "array", "items": {"type": "array", "minItems": 2, "maxItems": 2,
                                                           "prefixItems": [{"type": "integer"}, {"type": "number"}]}},
                    },
                },
            ]
        },
        "complex": {"const": "de_rham"},
        "s": {"type": "integer", "minimum": 1},
        "t_ladder": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "t_max": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
                "ratio": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                "rungs": {"type": "integer", "minimum": 4},
            },
        },
        "grid_size": {"type": "integer", "minimum": 2},
        "tolerances": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"spectral": _positive, "geometric": _positive},
        },
        "output": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "format": {"enum": ["json", "csv"]},
                "path": {"type": ["string", "null"]},
            },
        },
        "deterministic": {"const": True},
        "verbosity": {"type": "integer", "minimum": 0, "maximum": 2},
    },
}


# ---------------------------------------------------------------------------
# serialisation

def format_float(x):
    if x is None:
        return "null"
    x = float(x)
    if not math.isfinite(x):
        return "nan" if math.isnan(x) else ("inf" if x > 0 else "-inf")
    return "%.17g" % x


def dumps(obj, indent=2, _level=0):
    """JSON text with floats written to 17 significant digits (non-finite -> null)."""
    pad = " " * (indent * (_level + 1))
    end = " " * (indent * _level)
    if obj is None or isinstance(obj, bool):
        return json.dumps(obj)
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return format_float(obj) if math.isfinite(obj) else "null"
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {dumps(v, indent, _level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        if len(obj) == 0:
            return "[]"
        items = [f"{pad}{dumps(v, indent, _level + 1)}" for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def csv_table(rows):
    lines = [CSV_HEADER]
    for row in rows:
        lines.append(",".join(format_float(row[c]) for c in CSV_HEADER.split(",")))
    return "\n".join(lines) + "\n"


def _write(text, path):
    if path in (None, "-"):
        sys.stdout.write(text)
        sys.stdout.flush()
        return
    with open(path, "w", newline="\n") as fh:
        fh.write(text)


# ---------------------------------------------------------------------------
# configuration

def _line_of(text, path):
    pos = 0
    for key in path:
        if isinstance(key, str):
            found = text.find(json.dumps(key), pos)
            if found >= 0:
                pos = found
    return text.count("\n", 0, pos) + 1


def _schema_error(err, text):
    path = list(err.absolute_path)
    if err.validator == "additionalProperties" and isinstance(err.instance, dict):
        allowed = set(err.schema.get("properties", {}))
        extra = sorted(set(err.instance) - allowed)
        if extra:
            path.append(extra[0])
    if err.validator == "oneOf" and isinstance(err.instance, dict):
        # descend into the branch selected by the "type" discriminator
        branches = [b.get("properties", {}).get("type", {}).get("const") for b in err.validator_value]
        if err.instance.get("type") in branches:
            chosen = branches.index(err.instance["type"])
            subs = [e for e in err.context if e.relative_schema_path[0] == chosen]
            if subs:
                return _schema_error(subs[0], text)
        path.append("type")
    field = ".".join(str(p) for p in path) or "<root>"
    return ConfigError(f"schema violation at '{field}' (line {_line_of(text, path)}): {err.message}",
                       field=field, line=_line_of(text, path))


def load_config(path):
    """Read and validate a JSON run configuration; returns the parsed dict."""
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON at line {exc.lineno}: {exc.msg}", line=exc.lineno) from exc
    validator = jsonschema.Draft202012Validator(CONFIG_SCHEMA)
    errors = sorted(validator.iter_errors(data), key=lambda e: list(e.absolute_path))
    if errors:
        raise _schema_error(errors[0], text)
    return data


def build_map(entry, dim):
    if entry["type"] == "affine":
        A = np.array(entry["matrix"])
        if A.ndim != 2 or A.shape != (dim, dim):
            raise ConfigError(f"map.matrix must be {dim}x{dim}", field="map.matrix")
        shift = entry.get("shift", [0.0] * dim)
        if len(shift) != dim:
            raise ConfigError(f"map.shift must have {dim} entries", field="map.shift")
        return AffineMap(A, shift)
    if dim != 1:
        raise ConfigError("circle_fourier maps require dim = 1", field="dim")
    return CircleMap(entry["degree"], entry.get("c0", 0.0), entry.get("sin", []), entry.get("cos", []))


def verification_config(data, t_max=None, ratio=None, rungs=None):
    ladder = data.get("t_ladder", {})
    tol = data.get("tolerances", {})
    dim = data["dim"]
    kwargs = dict(
        geom=TorusGeometry(dim, data.get("grid_size", 32)),
        map=build_map(data["map"], dim),
        s=data.get("s", 1),
        t_max=t_max if t_max is not None else ladder.get("t_max", 0.2),
        ratio=ratio if ratio is not None else ladder.get("ratio", 0.5),
        rungs=rungs if rungs is not None else ladder.get("rungs", 4),
        spectral_tol=tol.get("spectral", 1e-10),
        geometric_tol=tol.get("geometric", 1e-4),
    )
    try:
        return VerificationConfig(**kwargs)
    except ValueError as exc:
        raise ConfigError(f"invalid configuration: {exc}") from exc


# ---------------------------------------------------------------------------
# subcommands

def _fail(exc):
    name = type(exc).__name__
    if getattr(exc, "error_type", None):
        name = exc.error_type
    print(f"error: {name}: {exc}", file=sys.stderr)
    return 1


def cmd_verify(args):
    data = load_config(args.config)
    _set_verbosity(data.get("verbosity", 0))
    config = verification_config(data)
    report = verify(config)
    out = args.out or data.get("output", {}).get("path")
    if report.error is not None:
        print(f"error: {report.error_type}: {report.error}", file=sys.stderr)
        _write(dumps(report.to_dict()) + "\n", out)
        return 1
    if data.get("output", {}).get("format", "json") == "csv":
        _write(csv_table(sweep_table(report)), out)
    else:
        _write(dumps(report.to_dict()) + "\n", out)
    log.info("verdict %s", report.verdict)
    return 0 if report.passed else 2


def cmd_sweep(args):
    data = load_config(args.config)
    _set_verbosity(data.get("verbosity", 0))
    config = verification_config(data, args.t_max, args.ratio, args.rungs)
    report, table = sweep(config)
    if report.error is not None:
        print(f"error: {report.error_type}: {report.error}", file=sys.stderr)
        return 1
    _write(csv_table(table), args.out)
    return 0 if report.passed else 2


def parse_symbol(order, dim, coeff):
    """Build an EllipticSymbol from the ``--coeff`` JSON.

    Accepted forms: a number or a symmetric matrix ``a`` (symbol
    ``a |xi|^order``), or ``{"terms": [{"alpha": [...], "a": ...}, ...]}``.
    """
    if order < 2 or order % 2:
        raise ConfigError(f"order must be a positive even integer, got {order}", field="order")
    try:
        parsed = json.loads(coeff)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"--coeff is not valid JSON: {exc.msg}", field="coeff") from exc
    s = order // 2
    try:
        if isinstance(parsed, dict):
            if set(parsed) != {"terms"}:
                raise ConfigError("--coeff object must have exactly the key 'terms'", field="coeff")
            terms = [(t["alpha"], t["a"]) for t in parsed["terms"]]
            return EllipticSymbol(dim, s, terms)
        return EllipticSymbol.laplacian_power(dim, s, parsed)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad coefficient description: {exc}", field="coeff") from exc


def cmd_model_kernel(args):
    sym = parse_symbol(args.order, args.dim, args.coeff)
    total = model_kernel_total_integral(sym)
    axis = np.linspace(-4.0, 4.0, 9) if sym.n == 1 else np.linspace(-2.0, 2.0, 5)
    mesh = np.stack(np.meshgrid(*([axis] * sym.n), indexing="ij"), axis=-1).reshape(-1, sym.n)
    values = model_kernel(sym, mesh)
    payload = {
        "order": args.order,
        "dim": sym.n,
        "rank": sym.rank,
        "total_integral": total.tolist(),
        "samples": {
            "axis": axis.tolist(),
            "points": mesh.tolist(),
            "values": values.tolist(),
        },
    }
    _write(dumps(payload) + "\n", args.out)
    return 0


def _set_verbosity(level):
    logging.basicConfig(stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")
    log.setLevel({0: logging.WARNING, 1: logging.INFO}.get(level, logging.DEBUG))


class _Parser(argparse.ArgumentParser):
    # usage errors are configuration errors (exit 1); 2 is reserved for a failed verdict
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def build_parser():
    parser = _Parser(prog="lefgpd", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("verify", help="run the full comparison and write a JSON report")
    p.add_argument("--config", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("sweep", help="write the t-ladder as a CSV table")
    p.add_argument("--config", required=True)
    p.add_argument("--t-max", type=float, required=True)
    p.add_argument("--ratio", type=float, required=True)
    p.add_argument("--rungs", type=int, required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("model-kernel", help="sample a constant-coefficient model kernel")
    p.add_argument("--order", type=int, required=True)
    p.add_argument("--dim", type=int, required=True)
    p.add_argument("--coeff", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_model_kernel)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except LefgpdError as exc:
        return _fail(exc)


if __name__ == "__main__":
    sys.exit(main())
