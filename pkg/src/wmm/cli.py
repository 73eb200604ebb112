"""Command-line interface: ``wmm estimate | simulate | posterior``.

Exit codes: 0 success, 1 invalid input, 2 no informative path, 3 rejection
sampling stalled, 4 invalid experiment or trial count, 5 empty posterior
support.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from wmm import __version__, build_version
from wmm.bayes import (HiddenHyper, PriorSpec, posterior_hidden, posterior_moments,
                       posterior_simple)
from wmm.errors import EmptyPathSet, EmptySupport, InvalidParameter, RejectionStall, WmmError
from wmm.estimator import build_matrix, compute_weights, two_stage_estimate, wmm_estimate
from wmm.io import (DocumentError, ResultDocument, fixture_path, load_tree, write_csv_atomic,
                    write_text_atomic)
from wmm.rng import RandomStream
from wmm.sampling import Scheme
from wmm.simulation import METHODS, PUBLISHED_RMSE, ExperimentConfig, run_experiment
from wmm.tree import evidence_combinations, informative_paths

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_NO_PATH = 2
EXIT_STALL = 3
EXIT_EXPERIMENT = 4
EXIT_SUPPORT = 5


class _Parser(argparse.ArgumentParser):
    # argparse's own exit status 2 would collide with "no informative path"
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


class _UsageError(Exception):
    def __init__(self, parser, message, code):
        super().__init__(message)
        self.parser = parser
        self.code = code


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected true/false, got {text!r}")


def _seed(text: str) -> int:
    v = int(text, 0)
    if not 0 <= v < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def _numbers(text: str, kind=float):
    try:
        return [kind(t) for t in text.replace(",", " ").split()]
    except ValueError:
        raise InvalidParameter(f"expected a comma-separated list, got {text!r}") from None


def _resolve_tree(text: str) -> Path:
    path = Path(text)
    if path.exists():
        return path
    bundled = fixture_path(text)
    if bundled.exists():
        return bundled
    raise FileNotFoundError(f"no tree file or bundled fixture named {text!r}")


def cmd_estimate(args) -> int:
    spec, evidence = load_tree(_resolve_tree(args.tree))
    scheme = Scheme.coerce(args.scheme)
    rng = RandomStream(args.seed)
    if args.two_stage:
        result = two_stage_estimate(spec, evidence, args.runs, scheme, rng, args.interval)
    else:
        combos = evidence_combinations(evidence)
        combo = combos[0]
        paths = informative_paths(spec, combo)
        matrix = build_matrix(spec, paths, combo, args.runs, scheme, rng.spawn("combination", 0))
        result = wmm_estimate(matrix, compute_weights(matrix), args.interval)
        if len(combos) > 1:
            result.warnings.append(
                f"two-stage disabled: used the first of {len(combos)} evidence combinations")
        result.combination_count = len(combos)
    for w in result.warnings:
        print(f"warning: {w}", file=sys.stderr)
    doc = ResultDocument.from_result(result, scheme, args.runs, args.seed, build_version())
    text = doc.to_json()
    if args.out:
        write_text_atomic(args.out, text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _fmt(x: float) -> str:
    return repr(float(x))


def cmd_simulate(args) -> int:
    if args.experiment not in range(1, 6):
        raise _UsageError(args.parser, f"--experiment must be 1-5, got {args.experiment}",
                          EXIT_EXPERIMENT)
    if args.trials < 2:
        raise _UsageError(args.parser, f"--trials must be at least 2, got {args.trials}",
                          EXIT_EXPERIMENT)
    if args.runs < 2:
        raise _UsageError(args.parser, "--runs must be at least 2", EXIT_INPUT)
    cfg = ExperimentConfig.for_experiment(args.experiment, trials=args.trials, runs=args.runs,
                                          seed=args.seed, point_estimate=args.point_estimate)
    result = run_experiment(cfg)
    out = Path(args.out_dir)
    header = ["trial", "s_p", "s_q", "A", "B", "logZ_closed", "logZ_wmm_ind", "logZ_wmm_dir"]
    write_csv_atomic(out / "trials.csv", header, result.trial_rows())
    rows = []
    for m in METHODS:
        published = PUBLISHED_RMSE[m][args.experiment - 1]
        rows.append([m, _fmt(result.rmse[m]), _fmt(published)])
    rows.append(["mcmc", "", _fmt(PUBLISHED_RMSE["mcmc"][args.experiment - 1])])
    write_csv_atomic(out / "summary.csv",
                     ["method", "rmse", "published_rmse"], rows)
    print(f"experiment {args.experiment}: {cfg.trials} trials, M={cfg.runs}, seed={cfg.seed}")
    print(f"{'method':<10}{'rmse':>12}{'published':>12}")
    for m, r, p in rows:
        shown = f"{float(r):>12.4e}" if r else f"{'-':>12}"
        print(f"{m:<10}{shown}{float(p):>12.4e}")
    return EXIT_OK


def cmd_posterior(args) -> int:
    prior = PriorSpec.parse(args.prior)
    if args.support:
        lo, hi = _numbers(args.support, int)
        prior = PriorSpec(prior.kind, prior.a, prior.b, (lo, hi))
    counts = _numbers(args.counts, int)
    hyper = _numbers(args.hyper)
    if args.mode == "simple":
        if len(counts) != 2 or len(hyper) != 4:
            raise _UsageError(args.parser, "simple mode needs --counts a,b and 4 --hyper values",
                              EXIT_INPUT)
        grid = posterior_simple(counts[0], counts[1], *hyper, prior)
    else:
        if len(counts) != 3 or len(hyper) != 8:
            raise _UsageError(args.parser,
                              "hidden mode needs --counts b,c,c_tilde and 8 --hyper values",
                              EXIT_INPUT)
        grid = posterior_hidden(*counts, HiddenHyper.from_sequence(hyper), prior,
                                mc_samples=args.mc_samples, rng=RandomStream(args.seed, "hidden"),
                                method=args.method)
    mom = posterior_moments(grid)
    rows = [[int(z), _fmt(p)] for z, p in zip(grid.z_values, grid.pmf)]
    write_csv_atomic(args.out, ["z", "pmf"], rows)
    summary = {
        "mode": args.mode,
        "mean": mom.mean,
        "sd": mom.sd,
        "mean_log": mom.mean_log,
        "quantiles": {k: mom.quantile(float(k)) for k in ("0.025", "0.5", "0.975")},
        "grid": [int(grid.z_values[0]), int(grid.z_values[-1])],
        "version": build_version(),
    }
    if args.mode == "hidden":
        summary.update(method=args.method, seed=args.seed)
        if grid.mc_stderr is not None:
            summary["mc_stderr_max"] = float(max(s for s in grid.mc_stderr if s == s))
    moments = Path(args.moments) if args.moments else Path(args.out).with_suffix(".json")
    write_text_atomic(moments, json.dumps(summary, indent=2, sort_keys=True) + "\n")
    print(f"mean {mom.mean:.3f}  sd {mom.sd:.3f}  "
          f"95% [{summary['quantiles']['0.025']}, {summary['quantiles']['0.975']}]")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="wmm", description="Weighted multiplier method for population size.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("estimate", help="estimate the root size of a tree document")
    p.add_argument("--tree", required=True, help="tree JSON file or bundled fixture name")
    p.add_argument("--runs", type=int, default=100_000)
    p.add_argument("--seed", type=_seed, default=0)
    p.add_argument("--scheme", choices=["ind", "dir"], default="dir")
    p.add_argument("--interval", type=float, default=0.95, help="interval mass")
    p.add_argument("--two-stage", type=_bool, default=True, metavar="BOOL")
    p.add_argument("--out", help="result JSON path (default: standard output)")
    p.set_defaults(func=cmd_estimate, parser=p)

    p = sub.add_parser("simulate", help="run one of the simulation experiments 1-5")
    p.add_argument("--experiment", type=int, required=True)
    p.add_argument("--trials", type=int, default=1000)
    p.add_argument("--runs", type=int, default=2000, help="WMM runs per trial")
    p.add_argument("--seed", type=_seed, default=0)
    p.add_argument("--point-estimate", choices=["mean_log", "log_mean"], default="mean_log",
                   help="posterior functional used as the closed-form estimate")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_simulate, parser=p)

    p = sub.add_parser("posterior", help="posterior grid of the root size")
    p.add_argument("--mode", choices=["simple", "hidden"], required=True)
    p.add_argument("--counts", required=True, help="a,b (simple) or b,c,c_tilde (hidden)")
    p.add_argument("--hyper", required=True,
                   help="ap,bp,aq,bq (simple) or ap,bp,aq,bq,ar,br,as,bs (hidden)")
    p.add_argument("--prior", required=True, help="uniform:u,v or gauss:mu,sigma")
    p.add_argument("--support", help="zmin,zmax restriction of the grid")
    p.add_argument("--mc-samples", type=int, default=100_000)
    p.add_argument("--method", choices=["mc", "exact"], default="mc")
    p.add_argument("--seed", type=_seed, default=0)
    p.add_argument("--out", required=True, help="CSV path for the pmf")
    p.add_argument("--moments", help="JSON path for the moments (default: OUT with .json)")
    p.set_defaults(func=cmd_posterior, parser=p)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except _UsageError as exc:
        exc.parser.print_usage(sys.stderr)
        print(f"wmm {args.command}: error: {exc}", file=sys.stderr)
        return exc.code
    except EmptyPathSet as exc:
        print(f"wmm: {exc}", file=sys.stderr)
        return EXIT_NO_PATH
    except RejectionStall as exc:
        print(f"wmm: rejection sampling stalled: {exc}", file=sys.stderr)
        return EXIT_STALL
    except EmptySupport as exc:
        print(f"wmm: empty support: {exc}", file=sys.stderr)
        return EXIT_SUPPORT
    except (WmmError, DocumentError, ValueError, OSError) as exc:
        print(f"wmm: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
