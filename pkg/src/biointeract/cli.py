"""Command-line front end.

Exit codes: 0 success, 2 usage or validation error, 3 numerical failure.
When ``--output`` names a file, a ``<output>.manifest.json`` sidecar records
the command, input digest, options, seed, version and timestamp; the output
itself stays byte-for-byte reproducible.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import hashlib
import io
import json
import logging
import sys
from importlib import metadata
from pathlib import Path

import numpy as np

from . import effects as fx
from . import figures, resample
from .glm import ConvergenceFailure, ModelSpec, SingularDesignError, fit
from .tabular import GeneratorInput, TableError, expand_to_records, generate_hammond_dataset, read_table, \
    write_records, write_table
from .variance import wald

log = logging.getLogger("biointeract")

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 2, 3
COEF_NAMES = ("intercept", "x", "z", "x:z")


class UsageError(Exception):
    pass


def _version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "0+unknown"


def _floats(text: str, n: int, name: str) -> tuple[float, ...]:
    try:
        vals = tuple(float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"{name} must be {n} comma-separated numbers") from None
    if len(vals) != n:
        raise argparse.ArgumentTypeError(f"{name} must be {n} comma-separated numbers")
    return vals


def _read_input(path: str) -> tuple[str, str]:
    data = sys.stdin.read() if path == "-" else Path(path).read_text(encoding="utf-8")
    return data, hashlib.sha256(data.encode("utf-8")).hexdigest()


def _load(args) -> tuple:
    text, digest = _read_input(args.input)
    return read_table(io.StringIO(text), args.input_format), digest


def _emit(args, text: str, manifest: dict) -> None:
    if args.output in (None, "-"):
        sys.stdout.write(text)
    else:
        out = Path(args.output)
        out.write_text(text, encoding="utf-8")
        Path(str(out) + ".manifest.json").write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    if getattr(args, "manifest", None):
        Path(args.manifest).write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")


def _manifest(args, digest: str | None, seed=None) -> dict:
    opts = {k: v for k, v in vars(args).items() if k not in ("func", "output", "manifest") and not callable(v)}
    return {
        "command": args.command,
        "input_sha256": digest,
        "options": opts,
        "seed": seed,
        "tool_version": _version(),
        "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
    }


def _dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=False) + "\n"


# --- commands --------------------------------------------------------------------------


def cmd_generate(args) -> int:
    try:
        params = GeneratorInput(tuple(int(v) for v in args.group_sizes), args.rates, args.prevalence)
    except (TableError, ValueError) as exc:
        raise UsageError(str(exc)) from None
    table = generate_hammond_dataset(params)
    buf = io.StringIO()
    if args.records:
        write_records(expand_to_records(table), buf)
    else:
        write_table(table, buf)
    _emit(args, buf.getvalue(), _manifest(args, None))
    return EXIT_OK


def _coef_block(result, scale: float, level: float) -> list[dict]:
    rows = []
    identity = result.spec.link == "identity"
    for j, name in enumerate(COEF_NAMES[: len(result.beta)]):
        row = {"name": name, "estimate": float(result.beta[j])}
        for flavor in ("model", "robust"):
            w = wald(result.beta[j], result.cov(flavor)[j, j], level)
            row[flavor] = w.to_dict()
            if identity:
                row[f"{flavor}_scaled"] = w.to_dict(scale)
        rows.append(row)
    return rows


def cmd_fit(args) -> int:
    table, digest = _load(args)
    spec = ModelSpec(args.link, args.dist, args.estimation, max_iterations=args.max_iterations)
    result = fit(table, spec)
    identity = spec.link == "identity"
    report = {
        "schema_version": fx.SCHEMA_VERSION,
        "model": spec.name,
        "link": spec.link,
        "distribution": None if spec.estimation == "ols" else spec.distribution,
        "estimation": spec.estimation,
        "covariance": "robust" if args.robust else "model",
        "scale": args.scale if identity else None,
        "level": args.level,
        "beta": result.beta.tolist(),
        "beta_scaled": (result.beta * args.scale).tolist() if identity else None,
        "se_model": result.se("model").tolist(),
        "se_robust": result.se("robust").tolist(),
        "cov_model": result.cov_model.tolist(),
        "cov_robust": result.cov_robust.tolist(),
        "coefficients": _coef_block(result, args.scale, args.level),
        "convergence": {
            "converged": result.converged,
            "iterations": result.iterations,
            "deviance": result.deviance,
            "boundary_flag": result.boundary_flag,
        },
    }
    _emit(args, _dumps(report), _manifest(args, digest))
    return EXIT_OK


def cmd_effects(args) -> int:
    table, digest = _load(args)
    report = fx.effect_report(
        table, level=args.level, scale=args.scale, flavor="robust" if args.robust else None,
        reri_source=args.reri_source, fallback=args.fallback, max_iterations=args.max_iterations,
        log=log.warning,
    )
    if report.strategy != "binomial_identity":
        log.warning("identity estimates from fallback strategy %s", report.strategy)
    if args.table:
        text = fx.render_table(report) + "\n"
    else:
        body = report.to_dict()
        body["verdict"] = fx.additivity_verdict(report, args.alpha).to_dict()
        text = _dumps(body)
    _emit(args, text, _manifest(args, digest))
    return EXIT_OK


def cmd_bootstrap(args) -> int:
    table, digest = _load(args)
    statistic = "reri_log" if args.statistic == "reri" else args.statistic
    try:
        config = resample.BootstrapConfig(args.replicates, args.seed, statistic, not args.unstratified, args.level)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    result = resample.bootstrap(table, config, workers=args.workers)
    body = {"schema_version": fx.SCHEMA_VERSION, **result.to_dict()}
    _emit(args, _dumps(body), _manifest(args, digest, seed=args.seed))
    if args.dump_replicates:
        with open(args.dump_replicates, "w", encoding="utf-8", newline="") as fh:
            resample.write_replicates(result, fh)
    return EXIT_OK


def cmd_plot(args) -> int:
    table, digest = _load(args)
    fig = figures.figure_series(table, args.which, args.scale, args.level)
    if args.plot_format == "csv":
        buf = io.StringIO()
        figures.write_csv(fig, buf)
        text = buf.getvalue()
    else:
        text = figures.render_svg(fig)
    _emit(args, text, _manifest(args, digest))
    return EXIT_OK


# --- parser ----------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="biointeract",
                                     description="Additive and multiplicative interaction for two binary exposures.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {_version()}")
    parser.add_argument("--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, needs_input=True):
        if needs_input:
            p.add_argument("--input", required=True, help="CSV path, or - for stdin")
            p.add_argument("--input-format", dest="input_format", choices=("aggregated", "individual"),
                           default="aggregated")
        p.add_argument("--output", help="write here instead of stdout (adds a .manifest.json sidecar)")
        p.add_argument("--manifest", help="also write the run manifest to this path")

    def inference(p):
        p.add_argument("--scale", type=float, default=100000.0, help="display multiplier for risks")
        p.add_argument("--level", type=float, default=0.95)

    p = sub.add_parser("generate", help="synthesize the asbestos/smoking cohort")
    common(p, needs_input=False)
    p.add_argument("--group-sizes", type=lambda s: _floats(s, 2, "--group-sizes"), default=(73763, 17800))
    p.add_argument("--rates", type=lambda s: _floats(s, 4, "--rates"), default=(11.3, 122.6, 58.4, 601.6),
                   help="deaths per 100k indexed 2*z + x")
    p.add_argument("--prevalence", type=float, default=0.28)
    p.add_argument("--records", action="store_true", help="emit individual-level CSV")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("fit", help="fit one model and report coefficients")
    common(p)
    inference(p)
    p.add_argument("--link", choices=("identity", "log", "logit"), default="identity")
    p.add_argument("--dist", choices=("binomial", "poisson"), default="binomial")
    p.add_argument("--estimation", choices=("mle_irls", "ols"), default="mle_irls")
    p.add_argument("--robust", action="store_true", help="mark robust covariance as primary")
    p.add_argument("--max-iterations", type=int, default=100)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("effects", help="IC, RERI and product-term tests")
    common(p)
    inference(p)
    p.add_argument("--fallback", action="store_true",
                   help="on identity non-convergence try poisson+robust, then ols+robust")
    p.add_argument("--robust", action="store_true")
    p.add_argument("--reri-source", choices=("log", "logit"), default="log")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--table", action="store_true", help="human-readable table instead of JSON")
    p.add_argument("--max-iterations", type=int, default=100)
    p.set_defaults(func=cmd_effects)

    p = sub.add_parser("bootstrap", help="percentile bootstrap interval")
    common(p)
    p.add_argument("--statistic", choices=("reri", "reri_log", "reri_logit", "ic"), default="reri")
    p.add_argument("--replicates", type=int, default=500)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--level", type=float, default=0.95)
    p.add_argument("--unstratified", action="store_true")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--dump-replicates", help="write replicate values as one-column CSV")
    p.set_defaults(func=cmd_bootstrap)

    p = sub.add_parser("plot", help="figure data (csv) or static svg")
    p.add_argument("which", choices=tuple(figures.FIGURES))
    common(p)
    inference(p)
    p.add_argument("--format", dest="plot_format", choices=("svg", "csv"), default="csv")
    p.set_defaults(func=cmd_plot)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except ConvergenceFailure as exc:
        sys.stderr.write(json.dumps(exc.to_dict()) + "\n")
        return EXIT_NUMERIC
    except resample.BootstrapError as exc:
        sys.stderr.write(json.dumps({"error": "bootstrap_failure", "message": str(exc),
                                     "partial": exc.partial.to_dict()}) + "\n")
        return EXIT_NUMERIC
    except SingularDesignError as exc:
        sys.stderr.write(json.dumps({"error": "singular_design", "message": str(exc)}) + "\n")
        return EXIT_NUMERIC
    except np.linalg.LinAlgError as exc:
        sys.stderr.write(json.dumps({"error": "numerical", "message": str(exc)}) + "\n")
        return EXIT_NUMERIC
    except (UsageError, TableError, ValueError, OSError) as exc:
        parser.print_usage(sys.stderr)
        sys.stderr.write(f"{parser.prog}: error: {exc}\n")
        return EXIT_USAGE

if __name__ == "__main__":
    sys.exit(main())
