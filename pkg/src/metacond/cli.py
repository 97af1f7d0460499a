"""
Command-line interface.

Exit codes: 0 success, 2 bad input, 3 fitting failure, 4 degenerate
conditioning, 5 unreadable or unsupported model file.
"""

import argparse
import csv
import logging
import sys

import numpy as np

from .errors import (DegenerateConditioning, DomainError, FitError, FormatError,
                     MetacondError, UnsupportedShape)
from .evaluation import (DEFAULT_METHODS, FITTERS, MethodSpec, compare_fitters, crps_ordering,
                         evaluate_split, summarize_fitters, write_fitter_csv)
from .gmcm import FitOptions
from .pipeline import (ConditionRequest, JointConfig, conditional_cdf, conditional_sample,
                       fit_joint, load_model, save_model)
from .scenarios import GMCM_CONFIGS, SCENARIOS, generate

EXIT_OK, EXIT_INPUT, EXIT_FIT, EXIT_COND, EXIT_FORMAT = 0, 2, 3, 4, 5

FAMILY_FLAGS = {"gmcm": "gmcm", "gc": "gaussian-copula", "tgmm": "tgmm",
                "student-t": "student-t"}

# first five features of the public files, in file order
DATASETS = {
    "wine": {"skip": 1, "columns": ["alcohol", "malic_acid", "ash", "alcalinity_of_ash",
                                    "magnesium"], "K": 3},
    "breast-cancer": {"skip": 2, "columns": ["radius_mean", "texture_mean", "perimeter_mean",
                                             "area_mean", "smoothness_mean"], "K": 2},
}
DATASET_GIVEN = (3, 4)

EPILOG = """exit codes:
  0  success
  2  input error (unparsable CSV, unknown column, invalid option)
  3  fitting failure (message names the failing column or phase)
  4  degenerate conditioning
  5  model file with unknown format_version or malformed content

options file:
  --options-file PATH reads 'key = value' lines ('#' starts a comment);
  keys are long flag names without dashes (e.g. 'k = 3', 'margins = empirical').
  Command-line flags override the file."""


class InputError(Exception):
    """User-supplied input could not be used."""


logger = logging.getLogger("metacond")


# ---------------------------------------------------------------------------
# data input
# ---------------------------------------------------------------------------

def read_csv(path):
    """Numeric CSV with a header row. Returns (data, column names)."""
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
    except OSError as err:
        raise InputError(f"cannot read {path}: {err}") from None
    if not rows:
        raise InputError(f"{path} is empty")
    header = [h.strip() for h in rows[0]]
    data = []
    for r, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != len(header):
            raise InputError(f"{path}: row {r} has {len(row)} cells, header has {len(header)}")
        vals = []
        for c, cell in enumerate(row):
            try:
                v = float(cell)
            except ValueError:
                raise InputError(f"{path}: non-numeric cell at row {r}, column {c + 1} "
                                 f"({header[c]!r}): {cell!r}") from None
            if not np.isfinite(v):
                raise InputError(f"{path}: non-finite cell at row {r}, column {c + 1}")
            vals.append(v)
        data.append(vals)
    if not data:
        raise InputError(f"{path} has no data rows")
    return np.array(data), header


def read_dataset(path, name):
    """Load a public dataset file and keep its first five features, z-scored."""
    spec = DATASETS[name]
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = [r for r in csv.reader(fh) if r]
    except OSError as err:
        raise InputError(f"cannot read {path}: {err}") from None
    data = []
    for r, row in enumerate(rows, start=1):
        cells = row[spec["skip"]:spec["skip"] + 5]
        if len(cells) < 5:
            raise InputError(f"{path}: row {r} has too few columns for the {name} layout")
        try:
            data.append([float(c) for c in cells])
        except ValueError:
            raise InputError(f"{path}: non-numeric feature at row {r}") from None
    X = np.array(data)
    sd = X.std(axis=0, ddof=1)
    if np.any(sd == 0):
        raise InputError(f"{path}: a selected feature is constant")
    return (X - X.mean(axis=0)) / sd, list(spec["columns"])


def load_data(args):
    if getattr(args, "dataset", None):
        return read_dataset(args.csv, args.dataset)
    return read_csv(args.csv)


def write_matrix(path, header, X):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in np.atleast_2d(X):
            w.writerow([repr(float(v)) for v in row])


def _column_index(names, token):
    token = token.strip()
    if token in names:
        return names.index(token)
    try:
        j = int(token)
    except ValueError:
        raise InputError(f"unknown column {token!r}; columns are {names}") from None
    if not 0 <= j < len(names):
        raise InputError(f"column index {j} out of range")
    return j


def parse_given(spec, names):
    """``"col=value,..."`` into sorted (indices, values)."""
    pairs = {}
    for item in filter(None, (s.strip() for s in spec.split(","))):
        if "=" not in item:
            raise InputError(f"expected col=value, got {item!r}")
        key, val = item.split("=", 1)
        j = _column_index(names, key)
        try:
            pairs[j] = float(val)
        except ValueError:
            raise InputError(f"non-numeric conditioning value {val!r}") from None
    if not pairs:
        raise InputError("no conditioning values given")
    if len(pairs) >= len(names):
        raise InputError("conditioning on every column leaves no target")
    idx = sorted(pairs)
    return tuple(idx), np.array([pairs[j] for j in idx])


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_fit(args):
    X, names = load_data(args)
    cfg = JointConfig(margins=args.margins, seed=args.seed,
                      fit=FitOptions(max_iter=args.max_iter, seed=args.seed))
    model = fit_joint(X, FAMILY_FLAGS[args.family], args.k, cfg, names)
    save_model(model, args.out)
    info = model.fit_info
    print(f"family: {args.family}  K: {info.get('K')}  margins: {args.margins}  n: {info['n']}")
    print(f"copula loglik: {info['loglik']!r}  iterations: {info['iterations']}")
    if model.latent.tag in ("gaussian-copula", "student-t"):
        R = getattr(model.latent.params, "cov", None)
        R = model.latent.params.scale if R is None else R
        print("correlation:")
        for row in R:
            print("  " + " ".join(f"{v: .4f}" for v in row))
    print(f"model written to {args.out}")
    return EXIT_OK


def _read_grid(path):
    try:
        with open(path, encoding="utf-8") as fh:
            tokens = [t for line in fh for t in line.replace(",", " ").split()]
    except OSError as err:
        raise InputError(f"cannot read {path}: {err}") from None
    vals = []
    for t in tokens:
        try:
            vals.append(float(t))
        except ValueError:
            continue  # header tokens
    if not vals:
        raise InputError(f"{path} holds no grid values")
    return np.sort(np.array(vals))


def cmd_condition(args):
    model = load_model(args.model)
    names = list(model.column_names)
    given, values = parse_given(args.given, names)
    req = ConditionRequest(given, values, args.n)
    target = [names[j] for j in range(len(names)) if j not in given]
    if args.cdf_grid:
        grid = _read_grid(args.cdf_grid)
        F = conditional_cdf(model, req, grid)
        write_matrix(args.out, ["grid", "value"], np.column_stack([grid, F]))
    else:
        S = conditional_sample(model, req, np.random.default_rng(args.seed))
        write_matrix(args.out, target, S)
    print(f"wrote {args.out}")
    return EXIT_OK


def _ordering_footer(report):
    ok, c = crps_ordering(report.aggregate)
    if ok is None:
        return "table-3 ordering: not checked (needs GC, GMCM, TGMM, CKDE with a univariate target)"
    return (f"table-3 ordering {{GMCM, TGMM}} < CKDE < GC: {'PASS' if ok else 'FAIL'} "
            f"(GMCM {c['GMCM']:.4f}, TGMM {c['TGMM']:.4f}, CKDE {c['CKDE']:.4f}, GC {c['GC']:.4f})")


def cmd_score(args):
    if args.synthetic:
        X, names = generate(args.synthetic, args.n, np.random.default_rng(args.seed))
        given = (1,)
    else:
        if not args.csv:
            raise InputError("score needs a CSV file or --synthetic")
        X, names = load_data(args)
        if args.given:
            given = tuple(sorted({_column_index(names, t) for t in args.given.split(",")}))
        elif args.dataset:
            given = DATASET_GIVEN
        else:
            given = (len(names) - 1,)
    K = args.k if args.k is not None else DATASETS.get(args.dataset or "", {}).get("K", 2)
    fit = FitOptions(max_iter=args.max_iter, seed=args.seed)
    methods = [MethodSpec.from_name(m.strip(), K=K, margins=args.margins, fit=fit)
               for m in args.methods.split(",") if m.strip()]
    report = evaluate_split(X, methods, given, n_samples=args.n_samples, n_splits=args.splits,
                            seed=args.seed, K=K, max_test=args.max_test)
    report.metadata["columns"] = names
    report.to_csv(args.out_prefix + ".csv")
    report.to_json(args.out_prefix + ".json")
    for method, scores in sorted(report.aggregate.items()):
        line = "  ".join(f"{s} {v['mean']:.4f} (sd {v['sd']:.4f})" for s, v in sorted(scores.items()))
        print(f"{method:10s} {line}")
    for f in report.failures:
        where = "" if f["point"] is None else f" point {f['point']}"
        print(f"FAILED {f['method']} split {f['split']}{where}: {f['error']}")
    if args.synthetic:
        print(_ordering_footer(report))
    print(f"wrote {args.out_prefix}.csv and {args.out_prefix}.json")
    return EXIT_OK if report.aggregate else EXIT_FIT


def cmd_compare_fitters(args):
    config = GMCM_CONFIGS[args.config]
    opts = FitOptions(max_iter=args.max_iter, seed=args.seed)
    rows = compare_fitters(config, args.n, args.reps, seed=args.seed, opts=opts)
    write_fitter_csv(rows, args.out)
    summary = summarize_fitters(rows)
    for method in FITTERS:
        s = summary[method]
        print(f"{method:4s} loglik {s['loglik'][0]:.3f} (sd {s['loglik'][1]:.3f})  "
              f"energy distance {s['energy_distance'][0]:.6f} (sd {s['energy_distance'][1]:.6f})")
    ll = {m: summary[m]["loglik"][0] for m in FITTERS}
    ed = {m: summary[m]["energy_distance"][0] for m in FITTERS}
    best_ll = ll["AD"] > ll["FD"] and ll["AD"] > ll["PEM"]
    best_ed = ed["AD"] < ed["FD"] and ed["AD"] < ed["PEM"]
    print(f"AD highest mean loglik: {'PASS' if best_ll else 'FAIL'}")
    print(f"AD lowest mean energy distance: {'PASS' if best_ed else 'FAIL'}")
    for r in rows:
        if r["error"]:
            print(f"FAILED {r['method']} replicate {r['replicate']}: {r['error']}")
    print(f"wrote {args.out}")
    return EXIT_OK


def cmd_generate(args):
    X, names = generate(args.scenario, args.n, np.random.default_rng(args.seed))
    write_matrix(args.out, names, X)
    print(f"wrote {args.n} rows to {args.out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return v


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="random seed (default 0)")
    common.add_argument("--threads", type=_positive_int, default=None,
                        help="worker cap; all computations here are single-threaded")
    common.add_argument("--options-file", help="key = value defaults file")
    common.add_argument("-v", "--verbose", action="store_true", help="log progress")

    p = argparse.ArgumentParser(prog="metacond", description="Conditional sampling with "
                                "meta models built on Gaussian mixture copulas.",
                                epilog=EPILOG, formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = p.add_subparsers(dest="command", required=True)

    f = sub.add_parser("fit", parents=[common], help="fit a meta model to a CSV file")
    f.add_argument("csv")
    f.add_argument("--family", choices=sorted(FAMILY_FLAGS), default="gmcm")
    f.add_argument("--k", type=_positive_int, default=2)
    f.add_argument("--margins", choices=("gmm-aic", "empirical"), default="gmm-aic")
    f.add_argument("--max-iter", type=_positive_int, default=10000)
    f.add_argument("--dataset", choices=sorted(DATASETS))
    f.add_argument("--out", required=True)
    f.set_defaults(func=cmd_fit)

    c = sub.add_parser("condition", parents=[common], help="sample or evaluate a conditional")
    c.add_argument("model")
    c.add_argument("--given", required=True, help='"col=value,..." by name or index')
    c.add_argument("--n", type=_positive_int, default=1000)
    c.add_argument("--cdf-grid", help="file of grid values; writes grid,value instead of samples")
    c.add_argument("--out", required=True)
    c.set_defaults(func=cmd_condition)

    s = sub.add_parser("score", parents=[common], help="score methods on random splits")
    s.add_argument("csv", nargs="?")
    s.add_argument("--methods", default=",".join(DEFAULT_METHODS))
    s.add_argument("--splits", type=_positive_int, default=3)
    s.add_argument("--given", help="conditioning columns (names or indices)")
    s.add_argument("--k", type=_positive_int, default=None,
                   help="mixture components (default 3 for wine, 2 otherwise)")
    s.add_argument("--margins", choices=("gmm-aic", "empirical"), default="gmm-aic")
    s.add_argument("--max-iter", type=_positive_int, default=10000)
    s.add_argument("--n-samples", type=_positive_int, default=1000)
    s.add_argument("--max-test", type=_positive_int, default=None)
    s.add_argument("--dataset", choices=sorted(DATASETS))
    s.add_argument("--synthetic", choices=("gmm", "meta-gmm"))
    s.add_argument("--n", type=_positive_int, default=2000, help="rows for --synthetic")
    s.add_argument("--out-prefix", default="scores")
    s.set_defaults(func=cmd_score)

    cf = sub.add_parser("compare-fitters", parents=[common], help="AD vs FD vs PEM")
    cf.add_argument("--config", choices=sorted(GMCM_CONFIGS), default="2d")
    cf.add_argument("--n", type=_positive_int, default=1000)
    cf.add_argument("--reps", type=_positive_int, default=5)
    cf.add_argument("--max-iter", type=_positive_int, default=10000)
    cf.add_argument("--out", default="compare.csv")
    cf.set_defaults(func=cmd_compare_fitters)

    g = sub.add_parser("generate", parents=[common], help="write a synthetic scenario CSV")
    g.add_argument("--scenario", choices=SCENARIOS, required=True)
    g.add_argument("--n", type=_positive_int, default=2000)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_generate)
    return p


def read_options_file(path):
    opts = {}
    try:
        with open(path, encoding="utf-8") as fh:
            for k, line in enumerate(fh, start=1):
                line = line.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise InputError(f"{path}:{k}: expected 'key = value'")
                key, val = (t.strip() for t in line.split("=", 1))
                opts[key.replace("-", "_")] = val
    except OSError as err:
        raise InputError(f"cannot read options file: {err}") from None
    return opts


def _apply_options(parser, argv):
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--options-file")
    known, _ = pre.parse_known_args(argv)
    args = parser.parse_args(argv)
    if not known.options_file:
        return args
    opts = read_options_file(known.options_file)
    sub = parser._subparsers._group_actions[0].choices[args.command]
    valid = {a.dest: a for a in sub._actions}
    for key, val in opts.items():
        if key not in valid:
            raise InputError(f"unknown option {key!r} in options file")
        action = valid[key]
        sub.set_defaults(**{key: action.type(val) if action.type else val})
    return parser.parse_args(argv)


def main(argv=None):
    argv = sys.argv[1:] if argv is None else argv
    parser = build_parser()
    try:
        args = _apply_options(parser, argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        return args.func(args)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code not in (0, None) else EXIT_OK
    except (InputError, UnsupportedShape) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_INPUT
    except FormatError as err:
        print(f"format error: {err}", file=sys.stderr)
        return EXIT_FORMAT
    except FitError as err:
        where = f" (column {err.column})" if err.column is not None else ""
        print(f"fit error in {err.phase} phase{where}: {err}", file=sys.stderr)
        return EXIT_FIT
    except DegenerateConditioning as err:
        print(f"conditioning error: {err}", file=sys.stderr)
        return EXIT_COND
    except DomainError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_INPUT
    except MetacondError as err:
        print(f"fit error: {err}", file=sys.stderr)
        return EXIT_FIT


if __name__ == "__main__":
    sys.exit(main())
