"""Command-line front end: ``dgmm {fit,predict,select,generate,evaluate,reproduce}``.

Exit codes: 0 success, 2 usage or validation error, 1 runtime failure.
Every command writes its artifacts plus a flat ``manifest.txt`` into an
output directory (``./out/<timestamp>-<command>`` unless ``--out`` is given).
"""

import argparse
import csv
import logging
import os
import platform
import sys
import time
from dataclasses import asdict
from datetime import datetime

import numpy as np

from . import __version__, _kernels
from .data import DataFormatError, encode_labels, generate_smiley, load_csv, save_csv, standardize
from .metrics import adjusted_rand_index, misclassification_rate
from .model import DegeneratePosteriorError, DgmmSpec, classify
from .selection import SearchSpace, model_search
from .sem import FitConfig, FitError, fit
from .serialize import ParamFormatError, dumps_with_extra, load_params_with_extra

log = logging.getLogger("dgmm")


class UsageError(ValueError):
    pass


# -- flag grammar ------------------------------------------------------------

def int_list(text):
    """``"4,1"`` -> (4, 1)."""
    try:
        out = tuple(int(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a comma-separated integer list, got {text!r}") from None
    if not out:
        raise argparse.ArgumentTypeError("empty list")
    return out


def int_range(text):
    """``"1..5"`` -> (1, 2, 3, 4, 5); also accepts ``"3"`` and ``"1,3,5"``."""
    text = text.strip()
    if ".." in text:
        lo, _, hi = text.partition("..")
        try:
            lo, hi = int(lo), int(hi)
        except ValueError:
            raise argparse.ArgumentTypeError(f"bad range {text!r}; use LO..HI") from None
        if lo > hi:
            raise argparse.ArgumentTypeError(f"empty range {text!r}")
        return tuple(range(lo, hi + 1))
    return int_list(text)


# -- artifacts ----------------------------------------------------------------

def out_dir(args):
    if args.out:
        path = args.out
    else:
        stamp = datetime.now().strftime("%Y%m%d-%H%M%S")
        path = os.path.join("out", f"{stamp}-{args.command}")
        base, n = path, 1
        while os.path.exists(path):
            n += 1
            path = f"{base}-{n}"
    os.makedirs(path, exist_ok=True)
    return path


def write_manifest(path, args, extra):
    entries = {
        "command": args.command,
        "argv": " ".join(sys.argv[1:]) if sys.argv else "",
        "library_version": __version__,
        "kernel_backend": _kernels.BACKEND,
        "python": platform.python_version(),
        "numpy": np.__version__,
    }
    for key, value in sorted(vars(args).items()):
        if key != "func":
            entries[f"arg.{key}"] = value
    entries.update(extra)
    with open(os.path.join(path, "manifest.txt"), "w") as fh:
        for key, value in entries.items():
            if isinstance(value, (tuple, list)):
                value = ",".join(map(str, value))
            fh.write(f"{key} = {value}\n")


def write_labels(path, labels, name="label"):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([name])
        w.writerows([int(v)] for v in labels)


def write_trace(path, trace):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iteration", "loglik"])
        for i, v in enumerate(trace):
            w.writerow([i, repr(float(v))])


def read_labels(path, column=None):
    """Label column of a CSV: ``column`` if given, else ``class``/``label``, else the last column."""
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    if len(rows) < 2:
        raise DataFormatError(f"{path}: no label rows")
    header = [c.strip() for c in rows[0]]
    if column is not None:
        if column not in header:
            raise DataFormatError(f"{path}: no column named {column!r}")
        idx = header.index(column)
    else:
        idx = next((header.index(c) for c in ("class", "label") if c in header), len(header) - 1)
    values = []
    for i, r in enumerate(rows[1:], start=2):
        if idx >= len(r):
            raise DataFormatError(f"{path}: row {i} has no column {idx + 1}")
        values.append(r[idx].strip())
    return values


# -- shared helpers --------------------------------------------------------------

def load_data(args):
    label = args.labels
    ds = load_csv(args.data, has_header=not args.no_header, label_column=label, delimiter=args.delimiter)
    if getattr(args, "standardize", False):
        ds = standardize(ds)
    return ds


def make_config(args, n_starts=None):
    return FitConfig(
        m_replicates=args.replicates,
        max_iters=args.iters,
        burn_in=args.burn_in,
        n_starts=n_starts or args.starts,
        seed=args.seed,
        tol=args.tol,
        e_step_mode=args.e_step,
        n_jobs=args.threads,
    )


def report_scores(labels_true, labels_pred):
    if labels_true is None:
        return {}
    ari = adjusted_rand_index(labels_true, labels_pred)
    mr = misclassification_rate(labels_true, labels_pred)
    print(f"ARI: {ari:.6f}")
    print(f"misclassification rate: {mr:.6f}")
    return {"ari": repr(ari), "misclassification_rate": repr(mr)}


def data_entries(ds):
    out = {"dataset": ds.fingerprint(), "n": ds.n, "p": ds.p}
    if ds.constant_columns:
        out["constant_columns"] = ds.constant_columns
    return out


def save_fit(path, res, ds, args):
    extra = {}
    if ds.center is not None:
        extra = {"data.center": ds.center, "data.scale": ds.scale}
    with open(os.path.join(path, "params.txt"), "w") as fh:
        fh.write(dumps_with_extra(res.averaged_params, extra))
    write_labels(os.path.join(path, "labels.csv"), res.labels)
    write_trace(os.path.join(path, "trace.csv"), res.loglik_trace)


# -- commands -------------------------------------------------------------------

def cmd_fit(args):
    k = args.k
    r = args.r
    if args.h is not None and not (len(k) == len(r) == args.h):
        raise UsageError(f"--h {args.h} needs --k and --r with {args.h} entries each")
    ds = load_data(args)
    spec = DgmmSpec(ds.p, k, r)
    config = make_config(args)
    path = out_dir(args)
    t0 = time.perf_counter()
    res = fit(spec, ds.x, config)
    wall = time.perf_counter() - t0
    save_fit(path, res, ds, args)
    print(f"model: {spec}")
    print(f"log-likelihood: {res.loglik:.6f}")
    print(f"BIC: {res.bic:.6f}")
    scores = report_scores(ds.labels, res.labels)
    write_manifest(path, args, {
        **data_entries(ds), **{f"config.{a}": b for a, b in asdict(config).items()},
        "spec": str(spec), "loglik": repr(res.loglik), "bic": repr(res.bic),
        "n_params": res.n_params, "best_start": res.start, "iterations": res.n_iter,
        "converged": res.converged, "failed_starts": len(res.failures), **scores,
        "wall_seconds": f"{wall:.3f}",
    })
    print(f"artifacts: {path}")
    return 0


def cmd_predict(args):
    params, extra = load_params_with_extra(args.params)
    ds = load_csv(args.data, has_header=not args.no_header, label_column=args.labels,
                  delimiter=args.delimiter)
    x = ds.x
    if "data.center" in extra:
        x = (x - extra["data.center"]) / extra["data.scale"]
    if x.shape[1] != params.spec.p:
        raise UsageError(f"data has {x.shape[1]} columns but the model expects {params.spec.p}")
    path = out_dir(args)
    labels = classify(params, x)
    write_labels(os.path.join(path, "labels.csv"), labels)
    scores = report_scores(ds.labels, labels)
    write_manifest(path, args, {**data_entries(ds), "spec": str(params.spec), **scores})
    print(f"artifacts: {path}")
    return 0


def _search_space(args, p):
    h = args.h or (2,)
    r_chains = tuple(args.r) if args.r else None
    if r_chains is not None:
        bad = [c for c in r_chains if len(c) not in h]
        if bad:
            raise UsageError(f"--r chain {bad[0]} does not match any depth in --h {h}")
    return SearchSpace(h=tuple(h), k_hidden=tuple(args.k_hidden), r_chains=r_chains)


def cmd_select(args):
    ds = load_data(args)
    space = _search_space(args, ds.p)
    specs = space.specs(ds.p, args.k1)
    if not specs:
        raise UsageError(f"empty grid: no latent chain satisfies p={ds.p} > r1 > ... > rh >= 1 "
                         f"for h in {space.h}")
    if args.dry_run:
        print(f"grid size: {len(specs)}")
        for s in specs:
            print(s)
        return 0
    path = out_dir(args)
    config = make_config(args)
    t0 = time.perf_counter()
    result = model_search(ds.x, args.k1, space, config, labels=ds.labels, n_jobs=args.threads)
    result.write_csv(os.path.join(path, "scores.csv"))
    best = result.best
    print(f"candidates: {len(result.table)}")
    print(f"best: {best.spec}  BIC {best.bic:.6f}")
    res = best.fit
    if args.refit_starts:
        res = fit(best.spec, ds.x, make_config(args, n_starts=args.refit_starts))
    save_fit(path, res, ds, args)
    scores = report_scores(ds.labels, res.labels)
    write_manifest(path, args, {
        **data_entries(ds), **{f"config.{a}": b for a, b in asdict(config).items()},
        "grid_size": len(specs), "best_spec": str(best.spec), "best_bic": repr(res.bic),
        "best_loglik": repr(res.loglik), **scores,
        "wall_seconds": f"{time.perf_counter() - t0:.3f}",
    })
    print(f"artifacts: {path}")
    return 0


def cmd_generate(args):
    rng = np.random.default_rng(args.seed)
    ds = generate_smiley(args.n, args.sd_eyes, args.sd_mouth, args.sd_noise, rng)
    path = out_dir(args)
    target = os.path.join(path, "smiley.csv")
    save_csv(ds, target)
    write_manifest(path, args, data_entries(ds))
    print(f"wrote {ds.n} rows to {target}")
    return 0


def cmd_evaluate(args):
    a = read_labels(args.true, args.true_column)
    b = read_labels(args.pred, args.pred_column)
    if len(a) != len(b):
        raise UsageError(f"label files differ in length: {len(a)} vs {len(b)}")
    ca, _ = encode_labels(a)
    cb, _ = encode_labels(b)
    print(f"n: {len(a)}")
    report_scores(ca, cb)
    return 0


def smiley_protocol(replicates=25, seed=0, n_starts=10, n_jobs=1, n=1000, config=None, progress=None):
    """Repeated smiley benchmark: k1 = 4, h = 2, r = (2, 1), k2 in 1..5 by BIC.

    Replicate ``i`` draws its data from ``default_rng([seed, i])`` and fits
    with config seed ``[seed, i]``. Returns one dict per replicate; ``trace``
    belongs to the winning fit and ``traces`` holds the retained chain of
    every candidate.
    """
    space = SearchSpace(h=(2,), k_hidden=(1, 2, 3, 4, 5), r_chains=((2, 1),))
    base = config or FitConfig(n_starts=n_starts)
    rows = []
    for i in range(replicates):
        t0 = time.perf_counter()
        ds = generate_smiley(n, rng=np.random.default_rng([seed, i]))
        cfg = FitConfig(**{**asdict(base), "seed": [seed, i], "n_jobs": 1})
        result = model_search(ds.x, 4, space, cfg, labels=ds.labels, n_jobs=n_jobs)
        best = result.best
        row = {
            "replicate": i,
            "k2": best.spec.k[1],
            "ari": adjusted_rand_index(ds.labels, best.fit.labels),
            "misclassification_rate": misclassification_rate(ds.labels, best.fit.labels),
            "bic": best.bic,
            "labels": best.fit.labels,
            "trace": best.fit.loglik_trace,
            "traces": [row.fit.loglik_trace for row in result.table if row.fit is not None],
            "seconds": time.perf_counter() - t0,
        }
        rows.append(row)
        if progress is not None:
            progress(row)
    return rows


def cmd_reproduce(args):
    path = out_dir(args)
    t0 = time.perf_counter()

    def show(row):
        print(f"replicate {row['replicate']:3d}: k2={row['k2']} ARI {row['ari']:.4f} "
              f"m.r. {row['misclassification_rate']:.4f} ({row['seconds']:.1f} s)", flush=True)

    rows = smiley_protocol(args.replicates, args.seed, args.starts, args.threads, args.n, progress=show)
    with open(os.path.join(path, "replicates.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["replicate", "k2", "ari", "misclassification_rate", "bic", "seconds"])
        for r in rows:
            w.writerow([r["replicate"], r["k2"], repr(r["ari"]), repr(r["misclassification_rate"]),
                        repr(r["bic"]), f"{r['seconds']:.3f}"])
    ari = np.array([r["ari"] for r in rows])
    mr = np.array([r["misclassification_rate"] for r in rows])
    se = (lambda v: v.std(ddof=1) / np.sqrt(v.size) if v.size > 1 else float("nan"))
    print(f"ARI  median {np.median(ari):.4f}  mean {ari.mean():.4f} (se {se(ari):.4f})")
    print(f"m.r. median {np.median(mr):.4f}  mean {mr.mean():.4f} (se {se(mr):.4f})")
    write_manifest(path, args, {"median_ari": repr(float(np.median(ari))),
                                "median_misclassification_rate": repr(float(np.median(mr))),
                                "wall_seconds": f"{time.perf_counter() - t0:.3f}"})
    print(f"artifacts: {path}")
    return 0


# -- parser ---------------------------------------------------------------------

def _data_flags(p, required=True):
    p.add_argument("--data", required=required, help="input CSV")
    p.add_argument("--labels", default=None, help="label column (name or 0-based index); excluded from features")
    p.add_argument("--no-header", action="store_true", help="the CSV has no header row")
    p.add_argument("--delimiter", default=",")


def _fit_flags(p):
    p.add_argument("--starts", type=int, default=10, help="independent SEM chains")
    p.add_argument("--iters", type=int, default=200, help="maximum SEM iterations per chain")
    p.add_argument("--burn-in", type=int, default=20)
    p.add_argument("--replicates", type=int, default=10, help="Monte Carlo draws per observation")
    p.add_argument("--tol", type=float, default=1e-4, help="relative early-stopping tolerance")
    p.add_argument("--e-step", choices=("monte_carlo", "exact_moments"), default="monte_carlo")
    p.add_argument("--standardize", action="store_true", help="center and scale columns before fitting")


def _common(p):
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=1, help="worker processes (-1 for all cores)")
    p.add_argument("--out", default=None, help="output directory")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser():
    parser = argparse.ArgumentParser(prog="dgmm", description="Deep Gaussian mixture models.")
    parser.add_argument("--version", action="version", version=f"dgmm {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="fit one architecture")
    _data_flags(p)
    p.add_argument("--h", type=int, default=None, help="depth (optional; checked against --k/--r)")
    p.add_argument("--k", type=int_list, required=True, help="components per layer, e.g. 4,1")
    p.add_argument("--r", type=int_list, required=True, help="latent dimensions per layer, e.g. 2,1")
    _fit_flags(p)
    _common(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("predict", help="classify data with a saved parameter file")
    _data_flags(p)
    p.add_argument("--params", required=True, help="parameter file written by fit or select")
    _common(p)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("select", help="BIC search over architectures")
    _data_flags(p)
    p.add_argument("--k1", type=int, required=True, help="number of clusters (first-layer components)")
    p.add_argument("--h", type=int_range, default=None, help="depths, e.g. 2 or 1..3 (default 2)")
    p.add_argument("--k2", "--k-hidden", dest="k_hidden", type=int_range, default=(1, 2, 3, 4, 5),
                   help="component counts tried at every hidden layer (default 1..5)")
    p.add_argument("--r", type=int_list, action="append", default=None,
                   help="pin a latent dimension chain; repeatable (default: all admissible)")
    p.add_argument("--refit-starts", type=int, default=0, help="refit the winner with this many starts")
    p.add_argument("--dry-run", action="store_true", help="print the grid and exit")
    _fit_flags(p)
    _common(p)
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("generate", help="write a synthetic data set")
    p.add_argument("dataset", choices=("smiley",))
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--sd-eyes", type=float, default=0.45)
    p.add_argument("--sd-mouth", type=float, default=0.35)
    p.add_argument("--sd-noise", type=float, default=0.5)
    _common(p)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("evaluate", help="ARI and misclassification rate between two label files")
    p.add_argument("--true", required=True)
    p.add_argument("--pred", required=True)
    p.add_argument("--true-column", default=None)
    p.add_argument("--pred-column", default=None)
    p.set_defaults(func=cmd_evaluate, out=None, verbose=False)

    p = sub.add_parser("reproduce", help="repeated smiley benchmark")
    p.add_argument("benchmark", choices=("smiley",))
    p.add_argument("--replicates", type=int, default=25)
    p.add_argument("--starts", type=int, default=10)
    p.add_argument("--n", type=int, default=1000)
    _common(p)
    p.set_defaults(func=cmd_reproduce)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (UsageError, DataFormatError, ParamFormatError, FileNotFoundError, IsADirectoryError) as exc:
        print(f"dgmm {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except (FitError, DegeneratePosteriorError, np.linalg.LinAlgError, RuntimeError) as exc:
        print(f"dgmm {args.command}: failed: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        # model and config validation, e.g. the latent dimension chain
        print(f"dgmm {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"dgmm {args.command}: failed: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
