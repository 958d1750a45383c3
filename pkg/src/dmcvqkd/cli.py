"""Command-line surface: solve, gen-data, train, predict, eval, bench.

Exit codes: 0 success (solve: converged), 2 solve hit the iteration cap,
1 runtime error, 64 bad flags or invalid parameter values.  All tabular
output is UTF-8 CSV with a header row and LF line endings, written to a
temporary file and atomically renamed, so interrupted commands never leave
partial outputs behind.
"""

import argparse
import math
import os
import sys
import time

import numpy as np

from . import datagen, surrogate
from .channel import FEATURE_LENGTH, InvalidParameterError, ProtocolParams, assemble_features
from .datagen import DatasetFormatError, GridSpec, desk_scale_spec
from .solver import SolveOptions, key_rate

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_MAX_ITER = 2
EXIT_USAGE = 64

HISTOGRAM_EDGES = np.linspace(-1.0, 1.0, 201)  # fixed 0.01-wide bins


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse that reports usage problems with exit code 64."""

    def error(self, message):
        raise _UsageError(message)


def _atomic_write(path, text):
    tmp = str(path) + ".tmp"
    with open(tmp, "w", newline="\n", encoding="utf-8") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _fmt(v):
    return f"{v:.17g}"


# ---------------------------------------------------------------------------
# parameter plumbing


def _add_param_flags(p, require=True):
    p.add_argument("--L", type=float, required=require, help="fiber length in km")
    p.add_argument("--mu", type=float, required=require, help="signal intensity (mean photon number)")
    p.add_argument("--xi", type=float, required=require, help="excess noise in shot-noise units")
    p.add_argument("--nc", type=int, default=4, help="photon-number cutoff (default 4)")
    p.add_argument("--p0", type=float, default=0.25)
    p.add_argument("--p1", type=float, default=0.25)
    p.add_argument("--p2", type=float, default=0.25)
    p.add_argument("--p3", type=float, default=0.25)
    p.add_argument("--beta", type=float, default=0.95, help="reconciliation efficiency")
    p.add_argument("--delta-c", type=float, default=0.0, help="postselection threshold")


def _params_from_args(args):
    return ProtocolParams(
        L=args.L, mu=args.mu, xi=args.xi,
        probs=(args.p0, args.p1, args.p2, args.p3),
        beta=args.beta, delta_c=args.delta_c, nc=args.nc,
    )


def _add_solver_flags(p):
    p.add_argument("--fw-tol", type=float, default=None, help="Frank-Wolfe gap tolerance")
    p.add_argument("--fw-max-iter", type=int, default=None, help="Frank-Wolfe iteration cap")


def _options_from_args(args):
    opts = SolveOptions()
    kwargs = {}
    if getattr(args, "fw_tol", None) is not None:
        kwargs["fw_tol"] = args.fw_tol
    if getattr(args, "fw_max_iter", None) is not None:
        kwargs["fw_max_iter"] = args.fw_max_iter
    if kwargs:
        from dataclasses import replace
        opts = replace(opts, **kwargs)
    return opts


# ---------------------------------------------------------------------------
# solve


def cmd_solve(args):
    params = _params_from_args(args)
    t0 = time.perf_counter()
    report = key_rate(params, _options_from_args(args))
    wall = time.perf_counter() - t0
    print(f"key_rate: {report.key_rate:.12g}")
    print(f"certified_lower_bound: {report.certified_lower_bound:.12g}")
    print(f"primal_objective: {report.primal_objective:.12g}")
    print(f"fw_gap: {report.fw_gap:.6g}")
    print(f"p_pass: {report.p_pass:.12g}")
    print(f"delta_ec: {report.delta_ec:.12g}")
    print(f"iterations: {report.iterations}")
    print(f"constraint_repair: {report.constraint_repair:.6g}")
    print(f"status: {report.status}")
    print(f"wall_time_s: {wall:.3f}")
    if report.status == "converged":
        return EXIT_OK
    if report.status == "max-iterations":
        return EXIT_MAX_ITER
    return EXIT_ERROR


# ---------------------------------------------------------------------------
# gen-data


_LIST_KEYS = {"xi_values", "L_values", "mu_sweep", "probs"}
_FLOAT_KEYS = {"xi_jitter", "beta", "delta_c"}
_INT_KEYS = {"samplings_per_point", "instances_per_sampling", "nc", "master_seed", "restart_budget"}


def parse_config(text):
    """Line-oriented ``key = value`` config; '#' starts a comment.

    List values are comma separated; extra noise bands use
    ``extra_bands = xi:L1|L2|... ; xi:...``.
    """
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"config line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key in _LIST_KEYS:
            out[key] = tuple(float(v) for v in value.split(",") if v.strip())
        elif key in _FLOAT_KEYS:
            out[key] = float(value)
        elif key in _INT_KEYS:
            out[key] = int(value)
        elif key == "extra_bands":
            bands = []
            for part in value.split(";"):
                part = part.strip()
                if not part:
                    continue
                xi_s, ls = part.split(":", 1)
                bands.append((float(xi_s), tuple(float(v) for v in ls.split("|") if v.strip())))
            out[key] = tuple(bands)
        else:
            raise ValueError(f"config line {lineno}: unknown key {key!r}")
    return out


def cmd_gen_data(args):
    if args.preset == "desk":
        spec = desk_scale_spec()
    else:
        spec = GridSpec()
    overrides = {}
    if args.config:
        with open(args.config) as fh:
            overrides.update(parse_config(fh.read()))
    for key in ("nc", "master_seed", "samplings_per_point", "instances_per_sampling"):
        flag = getattr(args, key)
        if flag is not None:
            overrides[key] = flag
    if args.xi_values:
        overrides["xi_values"] = tuple(float(v) for v in args.xi_values.split(","))
        overrides.setdefault("extra_bands", ())
    if args.l_values:
        overrides["L_values"] = tuple(float(v) for v in args.l_values.split(","))
    if args.mu_sweep:
        overrides["mu_sweep"] = tuple(float(v) for v in args.mu_sweep.split(","))
    if overrides:
        from dataclasses import replace
        spec = replace(spec, **overrides)

    part_dir = args.out + ".parts" if args.resume else None

    def progress(xi, L, n):
        print(f"grid point xi={xi} L={L}: {n} samples", flush=True)

    dataset = datagen.generate_dataset(
        spec, workers=args.workers, part_dir=part_dir, progress=progress,
    )
    datagen.save_dataset(dataset, args.out)
    print(f"wrote {len(dataset)} samples to {args.out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# train


def cmd_train(args):
    dataset = datagen.load_dataset(args.data)
    if len(dataset) == 0:
        print("error: training dataset is empty", file=sys.stderr)
        return EXIT_ERROR
    hp = surrogate.LossHyperparams(gamma=args.gamma, epsilon=args.epsilon)
    config = surrogate.TrainConfig(seed=args.seed, epochs=args.epochs)
    model = surrogate.train(dataset.features, dataset.labels, hp, config)
    surrogate.save_model(model, args.model_out)
    log_path = args.log or args.model_out + ".log.csv"
    lines = ["epoch,train_loss,val_loss"]
    for i, (tr, vl) in enumerate(zip(model.metadata["train_loss_history"],
                                     model.metadata["val_loss_history"])):
        lines.append(f"{i},{_fmt(tr)},{_fmt(vl)}")
    _atomic_write(log_path, "\n".join(lines) + "\n")
    print(f"trained {model.metadata['epochs_run']} epochs "
          f"(best epoch {model.metadata['best_epoch']}, "
          f"validation loss {model.metadata['best_val_loss']:.6g})")
    print(f"model: {args.model_out}")
    print(f"log: {log_path}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# predict


def _load_feature_rows(path):
    """Feature matrix from a dataset-format CSV, labels optional."""
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines:
        return np.zeros((0, FEATURE_LENGTH))
    header = lines[0].split(",")
    feat_cols = [f"f{i:02d}" for i in range(FEATURE_LENGTH)]
    if header[:FEATURE_LENGTH] != feat_cols:
        raise DatasetFormatError(
            f"expected feature columns f00..f28 first, got {header[:3]}...", line=1
        )
    rows = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) < FEATURE_LENGTH:
            raise DatasetFormatError(
                f"row has {len(parts)} fields, needs at least {FEATURE_LENGTH}", line=lineno
            )
        try:
            rows.append([float(v) for v in parts[:FEATURE_LENGTH]])
        except ValueError as exc:
            raise DatasetFormatError(str(exc), line=lineno) from exc
    return np.asarray(rows, dtype=np.float64)


def cmd_predict(args):
    model = surrogate.load_model(args.model)
    if args.features_file:
        feats = _load_feature_rows(args.features_file)
        rates = surrogate.predict(model, feats) if len(feats) else np.zeros(0)
        text = "\n".join(_fmt(r) for r in rates)
        if args.out:
            _atomic_write(args.out, text + ("\n" if len(feats) else ""))
            print(f"wrote {len(feats)} predictions to {args.out}")
        else:
            print(text)
        return EXIT_OK
    if args.L is None or args.mu is None or args.xi is None:
        raise _UsageError("predict needs either --features-file or --L/--mu/--xi")
    params = _params_from_args(args)
    rate = surrogate.predict(model, assemble_features(params))
    print(_fmt(rate))
    return EXIT_OK


# ---------------------------------------------------------------------------
# eval


def evaluate_predictions(labels, predictions):
    """Relative deviations, secure fraction, and the fixed-bin histogram.

    Deviation convention: (prediction - label)/label, so secure predictions
    (prediction strictly below the certified rate) are negative.
    """
    labels = np.asarray(labels, dtype=np.float64)
    predictions = np.asarray(predictions, dtype=np.float64)
    dev = (predictions - labels) / labels
    secure = float(np.mean(predictions < labels)) if len(labels) else 0.0
    clipped = np.clip(dev, -1.0, np.nextafter(1.0, 0.0))
    hist, _ = np.histogram(clipped, bins=HISTOGRAM_EDGES)
    return dev, secure, hist


def cmd_eval(args):
    model = surrogate.load_model(args.model)
    dataset = datagen.load_dataset(args.data)
    if len(dataset) == 0:
        print("error: evaluation dataset is empty", file=sys.stderr)
        return EXIT_ERROR
    preds = surrogate.predict(model, dataset.features)
    dev, secure, hist = evaluate_predictions(dataset.labels, preds)

    prefix = args.out_prefix
    lines = ["index,xi_grid,L,label,prediction,relative_deviation"]
    for i in range(len(dataset)):
        lines.append(
            f"{i},{_fmt(dataset.xi_grid[i])},{_fmt(dataset.L[i])},"
            f"{_fmt(dataset.labels[i])},{_fmt(preds[i])},{_fmt(dev[i])}"
        )
    _atomic_write(prefix + "_deviations.csv", "\n".join(lines) + "\n")

    lines = ["bin_left,bin_right,count"]
    for k in range(len(hist)):
        lines.append(f"{_fmt(HISTOGRAM_EDGES[k])},{_fmt(HISTOGRAM_EDGES[k + 1])},{hist[k]}")
    _atomic_write(prefix + "_histogram.csv", "\n".join(lines) + "\n")

    lines = ["xi_grid,L,n,secure_fraction,mean_deviation,mean_abs_deviation"]
    cells = {}
    for i in range(len(dataset)):
        cells.setdefault((dataset.xi_grid[i], dataset.L[i]), []).append(i)
    for (xi, ell) in sorted(cells):
        idx = np.asarray(cells[(xi, ell)])
        cell_secure = float(np.mean(preds[idx] < dataset.labels[idx]))
        lines.append(
            f"{_fmt(xi)},{_fmt(ell)},{len(idx)},{_fmt(cell_secure)},"
            f"{_fmt(float(np.mean(dev[idx])))},{_fmt(float(np.mean(np.abs(dev[idx]))))}"
        )
    _atomic_write(prefix + "_per_grid.csv", "\n".join(lines) + "\n")

    print(f"n_samples: {len(dataset)}")
    print(f"secure_fraction: {secure:.6f}")
    print(f"deviation_min: {float(dev.min()):.6f}")
    print(f"deviation_max: {float(dev.max()):.6f}")
    print(f"deviation_mean: {float(dev.mean()):.6f}")
    print(f"deviation_median: {float(np.median(dev)):.6f}")
    print(f"histogram_total: {int(hist.sum())}")
    print(f"artifacts: {prefix}_deviations.csv {prefix}_histogram.csv {prefix}_per_grid.csv")
    return EXIT_OK


# ---------------------------------------------------------------------------
# bench


def cmd_bench(args):
    model = surrogate.load_model(args.model)
    points = []
    for spec in args.point or ["0.008:5:0.45", "0.008:25:0.45"]:
        try:
            xi_s, l_s, mu_s = spec.split(":")
            points.append((float(xi_s), float(l_s), float(mu_s)))
        except ValueError:
            raise _UsageError(f"bad --point {spec!r}, expected xi:L:mu")
    opts = _options_from_args(args)
    lines = ["xi,L,mu,solver_seconds,surrogate_seconds,log10_time_ratio,solver_rate,surrogate_rate"]
    for xi, ell, mu in points:
        params = ProtocolParams(L=ell, mu=mu, xi=xi, nc=args.nc)
        feats = assemble_features(params)
        solver_times = []
        report = None
        for _ in range(args.solver_runs):
            t0 = time.perf_counter()
            report = key_rate(params, opts)
            solver_times.append(time.perf_counter() - t0)
        t_solver = float(np.median(solver_times))
        surrogate.predict(model, feats)  # warm-up outside the clock
        reps = max(1000, args.surrogate_reps)
        t0 = time.perf_counter()
        for _ in range(reps):
            pred = surrogate.predict(model, feats)
        t_surrogate = (time.perf_counter() - t0) / reps
        ratio = math.log10(t_solver / t_surrogate)
        print(f"xi={xi} L={ell} mu={mu}: solver {t_solver:.3f}s, "
              f"surrogate {t_surrogate * 1e6:.1f}us, log10 ratio {ratio:.2f}", flush=True)
        lines.append(
            f"{_fmt(xi)},{_fmt(ell)},{_fmt(mu)},{_fmt(t_solver)},{_fmt(t_surrogate)},"
            f"{_fmt(ratio)},{_fmt(report.key_rate)},{_fmt(pred)}"
        )
    _atomic_write(args.out, "\n".join(lines) + "\n")
    print(f"wrote {args.out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# entry point


def build_parser():
    parser = _Parser(prog="dmcvqkd", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="certified key rate for one parameter point")
    _add_param_flags(p)
    _add_solver_flags(p)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("gen-data", help="run a labeled grid campaign")
    p.add_argument("--out", required=True, help="dataset CSV to write")
    p.add_argument("--preset", choices=["desk", "full"], default="desk",
                   help="base grid (desk: 160-sample test grid; full: the complete campaign)")
    p.add_argument("--config", help="key = value config file overriding the preset")
    p.add_argument("--xi-values", help="comma list overriding the noise grid")
    p.add_argument("--l-values", help="comma list overriding the distance grid")
    p.add_argument("--mu-sweep", help="comma list overriding the intensity sweep")
    p.add_argument("--nc", type=int, default=None)
    p.add_argument("--master-seed", dest="master_seed", type=int, default=None)
    p.add_argument("--samplings", dest="samplings_per_point", type=int, default=None)
    p.add_argument("--instances", dest="instances_per_sampling", type=int, default=None)
    p.add_argument("--workers", type=int, default=None,
                   help=f"pool size (default: ${datagen.WORKERS_ENV} or cpu count)")
    p.add_argument("--resume", action="store_true",
                   help="keep per-point chunks next to --out and skip finished points")
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="fit the surrogate on a labeled dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--model-out", required=True)
    p.add_argument("--log", help="training log CSV (default: <model-out>.log.csv)")
    p.add_argument("--gamma", type=float, default=0.2)
    p.add_argument("--epsilon", type=float, default=0.8)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--epochs", type=int, default=200)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="surrogate key rates for params or a feature file")
    p.add_argument("--model", required=True)
    p.add_argument("--features-file", help="CSV with f00..f28 columns (label column optional)")
    p.add_argument("--out", help="write predictions here instead of stdout")
    _add_param_flags(p, require=False)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("eval", help="surrogate quality against a labeled dataset")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out-prefix", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bench", help="solver-vs-surrogate wall-clock comparison")
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--point", action="append", help="xi:L:mu, repeatable")
    p.add_argument("--nc", type=int, default=4)
    p.add_argument("--solver-runs", type=int, default=5)
    p.add_argument("--surrogate-reps", type=int, default=1000)
    _add_solver_flags(p)
    p.set_defaults(func=cmd_bench)

    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except InvalidParameterError as exc:
        print(f"invalid parameters: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DatasetFormatError, surrogate.ModelFormatError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except Exception as exc:  # solver/training failures
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
