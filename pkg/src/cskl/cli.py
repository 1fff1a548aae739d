"""``cskl`` command line: sketch, merge, learn, eval, experiment.

Exit codes: 0 success, 1 I/O or invalid input, 2 fingerprint mismatch,
3 numerical failure.
"""
import argparse
import json
import sys
import time

import numpy as np

from ._config import DEFAULT_JOBS
from .core import CsklError, FeatureKind, FeatureScheme, FingerprintMismatch, NumericalFailure, RngId
from .decoders import DecoderOptions, decode_diracs, decode_gmm, decode_pca
from .evaluation import clustering_risk, gmm_negative_log_likelihood, pca_risk
from .experiment import ExperimentGrid, read_results, run_experiment, success_rates
from .frequencies import draw_frequencies
from .io import dump_json, load_dataset, load_json, model_from_dict, model_to_dict, read_sketch, write_sketch
from .kernels import lambda_for_gmm_separation, lambda_for_separation
from .sketching import merge_all, sketch_dataset

EXIT_IO = 1
EXIT_FINGERPRINT = 2
EXIT_NUMERICAL = 3

TASK_KIND = {
    "kmeans": FeatureKind.WEIGHTED_FOURIER,
    "kmedians": FeatureKind.WEIGHTED_FOURIER,
    "gmm": FeatureKind.PLAIN_FOURIER,
    "pca": FeatureKind.QUADRATIC_MOMENT,
}
RNGS = {"philox": RngId.PHILOX, "pcg64": RngId.PCG64}


class UsageError(CsklError):
    pass


class _Parser(argparse.ArgumentParser):
    # usage errors share the "invalid input" exit code; 2 is reserved
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_IO, f"{self.prog}: error: {message}\n")


def _data_args(p):
    p.add_argument("--dim", type=int, help="expected data dimension (inferred when omitted)")
    p.add_argument("--format", choices=("csv", "binary"), help="dataset format (default: from extension)")
    p.add_argument("--chunk-size", type=int, default=4096)


def build_parser():
    parser = _Parser(prog="cskl", description="Compressive statistical learning from sketches.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("sketch", help="sketch a dataset into a binary sketch file")
    p.add_argument("data")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--task", choices=sorted(TASK_KIND), required=True)
    p.add_argument("--m", type=int, required=True, help="sketch size")
    p.add_argument("--lambda", dest="lam", type=float, help="frequency scale")
    p.add_argument("--epsilon", type=float, help="target separation; sets lambda with --k")
    p.add_argument("--k", type=int, help="number of components (only for --epsilon)")
    p.add_argument("--covariance", help="CSV file with the known d x d covariance (gmm); identity by default")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--rng", choices=sorted(RNGS), default="philox")
    _data_args(p)

    p = sub.add_parser("merge", help="merge sketch files of the same scheme")
    p.add_argument("inputs", nargs="+")
    p.add_argument("-o", "--output", required=True)

    p = sub.add_parser("learn", help="decode a model from a sketch file")
    p.add_argument("sketch")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--task", choices=sorted(TASK_KIND), required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--epsilon", type=float, help="separation enforced with --constraints on")
    p.add_argument("--radius", type=float, help="search radius R (required for mixtures)")
    p.add_argument("--restarts", type=int, default=DecoderOptions.restarts)
    p.add_argument("--tol", type=float)
    p.add_argument("--constraints", choices=("on", "off"), default="off")
    p.add_argument("--seed", type=int, default=0, help="decoder seed")
    p.add_argument("--timing", action="store_true", help="record wall-clock time in the model file")

    p = sub.add_parser("eval", help="risk of a model on a dataset")
    p.add_argument("model")
    p.add_argument("data")
    p.add_argument("-o", "--output", help="also write the report as JSON")
    _data_args(p)

    p = sub.add_parser("experiment", help="run a phase-transition grid")
    p.add_argument("grid", help="JSON file with the ExperimentGrid fields")
    p.add_argument("-o", "--output", required=True, help="results CSV (appended, resumable)")
    p.add_argument("--jobs", type=int, default=DEFAULT_JOBS)
    p.add_argument("--timing", action="store_true", help="fill the runtime column")
    return parser


def _scheme_lambda(args):
    if args.task == "pca":
        return 0.0
    if args.lam is not None:
        return args.lam
    if args.epsilon is None or args.k is None:
        raise UsageError("give --lambda, or --epsilon together with --k")
    if args.task == "gmm":
        return lambda_for_gmm_separation(args.epsilon, args.k)
    return lambda_for_separation(args.epsilon, args.k)


def cmd_sketch(args):
    data = load_dataset(args.data, dim=args.dim, fmt=args.format)
    cov = None
    if args.covariance is not None:
        if args.task != "gmm":
            raise UsageError("--covariance only applies to --task gmm")
        cov = np.loadtxt(args.covariance, delimiter=",", ndmin=2)
    scheme = FeatureScheme(TASK_KIND[args.task], data.dim, args.m, lam=_scheme_lambda(args),
                           covariance=cov, seed=args.seed, rng_id=RNGS[args.rng])
    sk = sketch_dataset(data, draw_frequencies(scheme), chunk_size=args.chunk_size)
    write_sketch(args.output, scheme, sk)
    print(f"m={scheme.sketch_size} n={sk.count} fingerprint={scheme.fingerprint().hex()}")


def cmd_merge(args):
    if len(args.inputs) < 2:
        raise UsageError("merge needs at least two sketch files")
    loaded = [read_sketch(p) for p in args.inputs]
    scheme = loaded[0][0]
    for path, (s, _) in zip(args.inputs[1:], loaded[1:]):
        if not s.compatible(scheme):
            raise FingerprintMismatch(f"{path} was sketched with a different scheme")
    out = merge_all(sk for _, sk in loaded)
    write_sketch(args.output, scheme, out)
    print(f"m={scheme.sketch_size} n={out.count} fingerprint={scheme.fingerprint().hex()}")


def cmd_learn(args):
    t0 = time.perf_counter()
    scheme, sk = read_sketch(args.sketch)
    if scheme.kind is not TASK_KIND[args.task]:
        raise UsageError(f"task {args.task} cannot be learned from a {scheme.kind.name} sketch")
    freq = draw_frequencies(scheme)
    options = {"k": args.k, "seed": args.seed, "restarts": args.restarts, "constraints": args.constraints}
    if args.task == "pca":
        tol = args.tol if args.tol is not None else 1e-15
        options["tol"] = tol
        res = decode_pca(sk, freq, args.k, tol=tol)
    else:
        if args.radius is None:
            raise UsageError("--radius is required for mixture tasks")
        if args.constraints == "on" and args.epsilon is None:
            raise UsageError("--constraints on needs --epsilon")
        opts = DecoderOptions(restarts=args.restarts, seed=args.seed,
                              tol=args.tol if args.tol is not None else DecoderOptions.tol,
                              enforce_constraints=args.constraints == "on")
        options.update(tol=opts.tol, epsilon=args.epsilon, radius=args.radius)
        decode = decode_gmm if args.task == "gmm" else decode_diracs
        res = decode(sk, freq, args.k, (args.epsilon, args.radius), opts)
    wall = time.perf_counter() - t0 if args.timing else None
    dump_json(args.output, model_to_dict(args.task, res.model, res.residual, options, scheme, wall))
    print(f"task={args.task} residual={res.residual:.6g}")


def cmd_eval(args):
    task, model = model_from_dict(load_json(args.model))
    data = load_dataset(args.data, dim=args.dim, fmt=args.format)
    if task == "kmeans":
        report = {"risk": clustering_risk(data, model, 2), "measure": "mean squared distance"}
    elif task == "kmedians":
        report = {"risk": clustering_risk(data, model, 1), "measure": "mean distance"}
    elif task == "gmm":
        report = {"risk": gmm_negative_log_likelihood(data, model), "measure": "negative log-likelihood"}
    else:
        report = {"risk": pca_risk(data, model[1]), "measure": "mean squared projection residual"}
    report["task"] = task
    text = json.dumps(report, sort_keys=True)
    print(text)
    if args.output:
        dump_json(args.output, report)


def cmd_experiment(args):
    grid = ExperimentGrid.from_file(args.grid)
    run_experiment(grid, args.output, jobs=max(1, args.jobs), timing=args.timing)
    for (d, k, m), rate in success_rates(read_results(args.output)).items():
        print(f"d={d} k={k} m={m} success={rate:.3f}")


COMMANDS = {"sketch": cmd_sketch, "merge": cmd_merge, "learn": cmd_learn, "eval": cmd_eval,
            "experiment": cmd_experiment}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        COMMANDS[args.command](args)
    except FingerprintMismatch as exc:
        print(f"cskl: fingerprint mismatch: {exc}", file=sys.stderr)
        return EXIT_FINGERPRINT
    except (NumericalFailure, np.linalg.LinAlgError) as exc:
        print(f"cskl: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (CsklError, OSError, ValueError) as exc:
        print(f"cskl: error: {exc}", file=sys.stderr)
        return EXIT_IO
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
