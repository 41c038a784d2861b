"""Command line: ``simulate`` runs a Monte Carlo grid, ``infer`` analyses a panel file.

Exit status: 0 success, 1 usage error, 2 data error, 3 numerical failure.
"""

import argparse
import json
import sys

from .exceptions import DataError, NumericalError
from .harness import METHODS, ExperimentConfig, run_experiment, run_inference

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3
DESIGNS = ("d1", "d2", "d3", "d4", "d5", "hetero", "nonsep", "spatial-sweep")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _floats(text):
    try:
        return [float(v) for v in text.replace(",", " ").split()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected numbers, got {text!r}") from None


def _names(choices):
    def parse(text):
        out = [v.strip() for v in text.split(",") if v.strip()]
        bad = [v for v in out if v not in choices]
        if bad or not out:
            raise argparse.ArgumentTypeError(f"choose from {', '.join(choices)}; got {text!r}")
        return out

    return parse


def load_config(path):
    """Read a JSON or YAML mapping."""
    with open(path) as fh:
        text = fh.read()
    if str(path).lower().endswith(".json"):
        data = json.loads(text)
    else:
        import yaml

        data = yaml.safe_load(text)
    if not isinstance(data, dict):
        raise UsageError(f"{path}: config must be a key-value mapping")
    return {k.replace("-", "_"): v for k, v in data.items()}


def build_parser():
    p = _Parser(prog="twoway-pwb", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    s = sub.add_parser("simulate", help="Monte Carlo rejection frequencies")
    s.add_argument("--config", help="JSON or YAML file; its keys override the flags")
    s.add_argument("--design", type=_names(DESIGNS), default=["d1"],
                   help="design(s), comma separated")
    s.add_argument("--n", type=int, default=50)
    s.add_argument("--t", type=int, default=50)
    s.add_argument("--k", type=int, default=5)
    s.add_argument("--b", type=int, default=999)
    s.add_argument("--reps", type=int, default=1000)
    s.add_argument("--alpha", type=float, default=0.05)
    s.add_argument("--method", type=_names(METHODS), default=["pwb-h"],
                   help="method(s), comma separated")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", help="output path (default: stdout)")
    s.add_argument("--format", choices=("csv", "json"), default="csv")
    s.add_argument("--workers", type=int, default=1)
    s.add_argument("--ar-rho", type=float, default=0.5, help="AR(1) coefficient of time effects")
    s.add_argument("--rho-d", type=float, default=0.10, help="spatial decay")
    s.add_argument("--rho-d-grid", type=_floats, help="spatial decay values for spatial-sweep")
    s.add_argument("--nonsep-sigma", type=float, default=10.0)
    s.add_argument("--bandwidth", type=float)
    s.add_argument("--q", type=float)

    i = sub.add_parser("infer", help="bootstrap inference on a panel file")
    i.add_argument("--config", help="JSON or YAML file; its keys override the flags")
    i.add_argument("--data", help="panel CSV or JSON")
    i.add_argument("--method", choices=[m for m in METHODS if m != "oracle"], default="pwb-h")
    i.add_argument("--beta0", type=_floats, help="null value, K numbers (default zeros)")
    i.add_argument("--rho", type=_floats, help="unit vector, K numbers (default last coordinate)")
    i.add_argument("--alpha", type=float, default=0.05)
    i.add_argument("--b", type=int, default=999)
    i.add_argument("--seed", type=int, default=0)
    i.add_argument("--bandwidth", type=float)
    i.add_argument("--q", type=float)
    i.add_argument("--out", help="write the JSON report here instead of stdout")
    return p


def _experiment_config(args):
    values = {
        "designs": args.design,
        "grid": [(args.n, args.t)],
        "k": args.k,
        "b": args.b,
        "reps": args.reps,
        "alpha": args.alpha,
        "methods": args.method,
        "seed": args.seed,
        "rho": args.ar_rho,
        "rho_d": args.rho_d,
        "nonsep_sigma": args.nonsep_sigma,
        "bandwidth": args.bandwidth,
        "q": args.q,
        "workers": args.workers,
    }
    if args.rho_d_grid:
        values["rho_d_grid"] = args.rho_d_grid
    out, fmt = args.out, args.format
    if args.config:
        cfg = load_config(args.config)
        out = cfg.pop("out", out)
        fmt = cfg.pop("format", fmt)
        for short, long in (("design", "designs"), ("method", "methods")):
            if short in cfg:
                v = cfg.pop(short)
                cfg[long] = v.split(",") if isinstance(v, str) else v
        if "n" in cfg or "t" in cfg:
            cfg["grid"] = [(cfg.pop("n", args.n), cfg.pop("t", args.t))]
        values.update(cfg)
    return ExperimentConfig.from_mapping(values), out, fmt


def _simulate(args):
    config, out, fmt = _experiment_config(args)
    if fmt not in ("csv", "json"):
        raise UsageError(f"unknown format {fmt!r}")
    table = run_experiment(config)
    if out:
        table.write(out, fmt)
    else:
        sys.stdout.write(table.to_json() if fmt == "json" else table.to_csv())


def _infer(args):
    opts = {
        "data": args.data, "method": args.method, "beta0": args.beta0, "rho": args.rho,
        "alpha": args.alpha, "b": args.b, "seed": args.seed,
        "bandwidth": args.bandwidth, "q": args.q, "out": args.out,
    }
    if args.config:
        opts.update(load_config(args.config))
    if not opts["data"]:
        raise UsageError("infer: --data is required")
    out = opts.pop("out")
    path = opts.pop("data")
    try:
        open(path).close()
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror}") from None
    report = run_inference(path, **opts)
    text = json.dumps(report, indent=2) + "\n"
    if out:
        with open(out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            parser.print_help(sys.stderr)
            return EXIT_USAGE
        (_simulate if args.command == "simulate" else _infer)(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericalError as exc:
        where = getattr(exc, "stage", None)
        prefix = f"numerical failure in stage {where}" if where else "numerical failure"
        print(f"{prefix}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValueError, TypeError) as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
