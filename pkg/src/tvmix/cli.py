"""Command-line interface.

Subcommands: ``returns`` (price CSV to log returns), ``fit`` (models m1/m2/m3
on CSVs, m4 behind --mcem), ``predict-weights``, ``var`` and ``simulate``.
Every output table carries a provenance header (command line, seed, config
hash) as ``#`` comment lines, so a table can be regenerated from its own
header. Exit codes: 0 success, 1 usage, 2 data error, 3 numerical failure
(with a diagnostics file).
"""

from __future__ import annotations

import argparse
import hashlib
import json
import shlex
import sys
import warnings
from pathlib import Path

import numpy as np
import pandas as pd

from . import __version__
from .distributions import CauchyParams, GaussianParams, MixtureParams
from .em import EmConfig, FitResult, SharedMixtureParams, fit_independent, fit_shared
from .exceptions import DataError, NumericalError
from .io import (
    align_macro,
    group_by_interval,
    log_returns,
    read_macro_csv,
    read_price_csv,
    write_interval_csv,
)
from .logistic import LogisticMixtureParams, fisher_std_errors, fit_logistic, logistic_weights
from .mcem import Ar1Params, ArLogisticMixtureParams, McemConfig, fit_mcem
from .risk import EXPECTED_SHORTFALL_REFUSAL, var_report
from .series import IntervalSeries, WeightSeries
from .simulate import design_from_dict, run_replications, train_test_weight_eval


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _build_parser():
    parser = _Parser(prog="tvmix", description=__doc__)
    parser.add_argument("--seed", type=int, default=None,
                        help="global RNG seed (overrides design/config seeds)")
    parser.add_argument("--config", type=Path, default=None,
                        help="JSON with 'em' and 'mcem' option objects")
    parser.add_argument("--out", type=Path, default=Path("."),
                        help="output directory")
    parser.add_argument("--format", choices=("csv", "json"), default="csv")
    sub = parser.add_subparsers(dest="command")

    p_ret = sub.add_parser("returns", help="price CSV -> log returns")
    p_ret.add_argument("--prices", type=Path, required=True)
    p_ret.add_argument("--price-column", default=None)
    p_ret.add_argument("--group", choices=("year", "month"), default=None)

    p_fit = sub.add_parser("fit", help="fit a mixture model to return data")
    p_fit.add_argument("--model", choices=("m1", "m2", "m3", "m4"),
                       required=True)
    p_fit.add_argument("--prices", type=Path, default=None)
    p_fit.add_argument("--returns", type=Path, default=None)
    p_fit.add_argument("--price-column", default=None)
    p_fit.add_argument("--group", choices=("year", "month"), default="year")
    p_fit.add_argument("--macro", type=Path, default=None,
                       help="monthly predictor CSV (m3/m4)")
    p_fit.add_argument("--transform", action="append", default=[],
                       metavar="COL=KIND",
                       help="per-column transform: level or first-difference")
    p_fit.add_argument("--drop-column", action="append", default=[],
                       help="drop a macro column (e.g. one of a collinear pair)")
    p_fit.add_argument("--mcem", action="store_true",
                       help="required to run the m4 Monte Carlo EM fit")
    p_fit.add_argument("--no-std-errors", action="store_true",
                       help="skip Fisher-information standard errors (m3)")

    p_pred = sub.add_parser("predict-weights",
                            help="predicted weights from a fitted m3 model")
    p_pred.add_argument("--model-file", type=Path, required=True)
    p_pred.add_argument("--macro", type=Path, required=True)
    p_pred.add_argument("--transform", action="append", default=[])
    p_pred.add_argument("--drop-column", action="append", default=[])

    p_var = sub.add_parser("var", help="value-at-risk table from a fitted model")
    p_var.add_argument("--model-file", type=Path, required=True)
    p_var.add_argument("--levels", default="0.01,0.05",
                       help="comma-separated quantile levels")
    p_var.add_argument("--expected-shortfall", action="store_true")

    p_sim = sub.add_parser("simulate", help="run a simulation design file")
    p_sim.add_argument("--design", type=Path, required=True)
    p_sim.add_argument("--n-jobs", type=int, default=1)
    return parser


def _provenance(argv, seed, config_blob):
    digest = hashlib.sha256(
        json.dumps(config_blob or {}, sort_keys=True).encode()).hexdigest()
    return {
        "command": "tvmix " + shlex.join(argv),
        "package": f"tvmix {__version__}",
        "seed": "none" if seed is None else str(seed),
        "config_sha256": digest,
    }


def _header_lines(prov, extra=()):
    return [f"{k}: {v}" for k, v in prov.items()] + list(extra)


def _write_frame(frame, out_dir, name, fmt, prov, extra=()):
    out_dir.mkdir(parents=True, exist_ok=True)
    if fmt == "csv":
        path = out_dir / f"{name}.csv"
        with open(path, "w") as fh:
            for line in _header_lines(prov, extra):
                fh.write(f"# {line}\n")
            frame.to_csv(fh, index=False, float_format="%.15g")
    else:
        path = out_dir / f"{name}.json"
        payload = {"_provenance": prov,
                   "rows": frame.to_dict(orient="records")}
        if extra:
            payload["_notes"] = list(extra)
        path.write_text(json.dumps(payload, indent=2, default=str))
    return path


def _write_json(obj, out_dir, name, prov):
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / f"{name}.json"
    obj = dict(obj)
    obj["_provenance"] = prov
    path.write_text(json.dumps(obj, indent=2, default=str))
    return path


def _load_config(path):
    if path is None:
        return None
    try:
        return json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read config {path}: {exc}") from exc


def _em_config(blob):
    return EmConfig(**(blob or {}).get("em", {}))


def _mcem_config(blob):
    return McemConfig(**(blob or {}).get("mcem", {}))


def _parse_transforms(items):
    out = {}
    for item in items:
        if "=" not in item:
            raise DataError(f"--transform expects COL=KIND, got {item!r}")
        col, kind = item.split("=", 1)
        out[col] = kind
    return out


def _load_returns(args):
    if (args.returns is None) == (args.prices is None):
        raise DataError("pass exactly one of --returns or --prices")
    if args.prices is not None:
        prices = read_price_csv(args.prices, price_column=args.price_column)
        return log_returns(prices)
    frame = pd.read_csv(args.returns, comment="#")
    date_col = frame.columns[0]
    value_cols = [c for c in frame.columns[1:]]
    if not value_cols:
        raise DataError(f"{args.returns} has no value column")
    idx = pd.DatetimeIndex(pd.to_datetime(frame[date_col], format="ISO8601"))
    return pd.Series(frame[value_cols[0]].to_numpy(dtype=float), index=idx,
                     name="log_return")


def _cmd_returns(args, prov, config):
    returns = _load_returns(argparse.Namespace(
        returns=None, prices=args.prices, price_column=args.price_column))
    frame = pd.DataFrame({"date": returns.index.strftime("%Y-%m-%d"),
                          "log_return": returns.to_numpy()})
    _write_frame(frame, args.out, "returns", args.format, prov)
    if args.group:
        series = group_by_interval(returns, args.group)
        write_interval_csv(series, args.out / "intervals.csv",
                           header_lines=_header_lines(prov))
    return 0


def _model_json_m1(results):
    return {
        "model": "m1",
        "intervals": [
            {
                "label": str(r.label),
                "error": r.error,
                **({} if r.error else {
                    "mu": r.params.gaussian.mu,
                    "sigma": r.params.gaussian.sigma,
                    "theta": r.params.cauchy.theta,
                    "delta": r.params.cauchy.delta,
                    "alpha": r.params.alpha,
                    "converged": r.converged,
                    "iterations": r.iterations,
                    "loglik": r.loglik,
                }),
            }
            for r in results
        ],
    }


def _shared_model_json(model, result, labels):
    g, c = result.params.gaussian, result.params.cauchy
    out = {
        "model": model,
        "gaussian": {"mu": g.mu, "sigma": g.sigma},
        "cauchy": {"theta": c.theta, "delta": c.delta},
        "labels": [str(lab) for lab in labels],
        "converged": bool(result.converged),
        "iterations": int(result.iterations),
        "loglik": result.loglik,
    }
    if result.weights is not None:
        out["weights"] = {
            "values": result.weights.values.tolist(),
            "provenance": result.weights.provenance,
        }
    return out


def _cmd_fit(args, prov, config):
    returns = _load_returns(args)
    if args.model in ("m3", "m4") and args.macro is None:
        raise DataError(f"model {args.model} needs --macro predictors")
    group_rule = "month" if args.model in ("m3", "m4") else args.group
    series = group_by_interval(returns, group_rule)
    em_cfg = _em_config(config)

    extra_notes = ["VaR convention: losses positive; see 'var' subcommand"]
    if args.model == "m1":
        results = fit_independent(series, em_cfg)
        rows = []
        for r in results:
            if r.error is not None:
                rows.append({"interval": r.label, "error": r.error})
                continue
            rows.append({
                "interval": r.label,
                "mu": r.params.gaussian.mu, "sigma": r.params.gaussian.sigma,
                "theta": r.params.cauchy.theta, "delta": r.params.cauchy.delta,
                "alpha": r.params.alpha, "converged": r.converged,
            })
        _write_frame(pd.DataFrame(rows), args.out, "params", args.format, prov)
        _write_json(_model_json_m1(results), args.out, "model", prov)
        return 0

    if args.model == "m2":
        result = fit_shared(series, em_cfg)
        model_blob = _shared_model_json("m2", result, series.labels)
    elif args.model == "m3":
        panel = read_macro_csv(args.macro)
        X, corr = align_macro(series, panel,
                              transforms=_parse_transforms(args.transform),
                              drop=args.drop_column)
        result = fit_logistic(series, X, em_cfg)
        model_blob = _shared_model_json("m3", result, series.labels)
        model_blob["beta"] = result.params.beta.tolist()
        model_blob["columns"] = list(X.coef_names)
        corr_frame = corr.reset_index().rename(columns={"index": "column"})
        _write_frame(corr_frame, args.out, "correlations", args.format, prov)
        if not args.no_std_errors:
            se = fisher_std_errors(series, X, result)
            model_blob["std_errors"] = {
                "mu": se["mu"], "sigma": se["sigma"], "theta": se["theta"],
                "delta": se["delta"], "beta": list(se["beta"]),
            }
    else:
        if not args.mcem:
            raise DataError("m4 runs Monte Carlo EM, which is orders of "
                            "magnitude slower than m1-m3; pass --mcem to "
                            "confirm")
        warnings.warn("m4 Monte Carlo EM can take a long time on large series")
        panel = read_macro_csv(args.macro)
        X, _ = align_macro(series, panel,
                           transforms=_parse_transforms(args.transform),
                           drop=args.drop_column)
        result = fit_mcem(series, X, _mcem_config(config), seed=args.seed,
                          em_config=em_cfg)
        model_blob = _shared_model_json("m4", result, series.labels)
        model_blob["beta"] = result.params.beta.tolist()
        model_blob["columns"] = list(X.coef_names)
        model_blob["ar1"] = {"phi": result.params.ar1.phi,
                             "sigma_a": result.params.ar1.sigma_a}

    g = model_blob["gaussian"]
    c = model_blob["cauchy"]
    rows = [
        {"parameter": "mu", "estimate": g["mu"]},
        {"parameter": "sigma", "estimate": g["sigma"]},
        {"parameter": "theta", "estimate": c["theta"]},
        {"parameter": "delta", "estimate": c["delta"]},
    ]
    if "beta" in model_blob:
        rows += [{"parameter": f"beta[{name}]", "estimate": b}
                 for name, b in zip(model_blob["columns"], model_blob["beta"])]
    if "std_errors" in model_blob:
        se = model_blob["std_errors"]
        flat = {"mu": se["mu"], "sigma": se["sigma"], "theta": se["theta"],
                "delta": se["delta"]}
        flat.update({f"beta[{n}]": s for n, s in
                     zip(model_blob["columns"], se["beta"])})
        for row in rows:
            row["std_error"] = flat.get(row["parameter"], np.nan)
    _write_frame(pd.DataFrame(rows), args.out, "params", args.format, prov,
                 extra=extra_notes)
    if result.weights is not None:
        wframe = pd.DataFrame({
            "interval": [str(lab) for lab in series.labels],
            "gaussian_weight": result.weights.values,
            "cauchy_weight": 1.0 - result.weights.values,
        })
        _write_frame(wframe, args.out, "weights", args.format, prov)
    _write_json(model_blob, args.out, "model", prov)
    if not result.converged:
        print("warning: fit did not converge within iteration budget",
              file=sys.stderr)
    return 0


def _read_model_file(path):
    try:
        return json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read model file {path}: {exc}") from exc


def _fit_from_model_json(blob):
    model = blob.get("model")
    if model == "m1":
        results = []
        for row in blob["intervals"]:
            if row.get("error"):
                continue
            params = MixtureParams(
                GaussianParams(row["mu"], row["sigma"]),
                CauchyParams(row["theta"], row["delta"]), row["alpha"])
            results.append(FitResult(
                params=params, loglik_trace=np.array([row.get("loglik", 0.0)]),
                iterations=row.get("iterations", 0),
                converged=bool(row.get("converged")), label=row["label"]))
        if not results:
            raise DataError("model file has no usable intervals")
        return results
    gaussian = GaussianParams(blob["gaussian"]["mu"], blob["gaussian"]["sigma"])
    cauchy = CauchyParams(blob["cauchy"]["theta"], blob["cauchy"]["delta"])
    labels = tuple(blob.get("labels", []))
    weights = blob.get("weights")
    if model == "m2":
        params = SharedMixtureParams(gaussian, cauchy,
                                     np.asarray(weights["values"], dtype=float))
    elif model == "m3":
        params = LogisticMixtureParams(gaussian, cauchy,
                                       np.asarray(blob["beta"], dtype=float))
    elif model == "m4":
        params = ArLogisticMixtureParams(
            gaussian, cauchy, np.asarray(blob["beta"], dtype=float),
            Ar1Params(blob["ar1"]["phi"], blob["ar1"]["sigma_a"]))
    else:
        raise DataError(f"model file has unknown model {model!r}")
    wseries = None
    if weights is not None:
        wseries = WeightSeries(np.asarray(weights["values"], dtype=float),
                               provenance=weights.get("provenance", "estimated"),
                               labels=labels or None)
    return FitResult(params=params, loglik_trace=np.array([blob.get("loglik", 0.0)]),
                     iterations=int(blob.get("iterations", 0)),
                     converged=bool(blob.get("converged")), weights=wseries)


def _cmd_predict_weights(args, prov, config):
    blob = _read_model_file(args.model_file)
    if blob.get("model") != "m3" or "beta" not in blob:
        raise DataError("predict-weights needs an m3 model file with "
                        "coefficients")
    panel = read_macro_csv(args.macro)
    labels = [str(m) for m in panel.months]
    # align_macro only uses the interval labels; one dummy observation per
    # month lets it resolve transforms and coverage for prediction months.
    dummy = IntervalSeries([[0.0]] * len(labels), labels=labels)
    transforms = _parse_transforms(args.transform)
    if any(kind == "first-difference" for kind in transforms.values()):
        labels = labels[1:]
        dummy = IntervalSeries([[0.0]] * len(labels), labels=labels)
    X, _ = align_macro(dummy, panel, transforms=transforms,
                       drop=args.drop_column)
    trained = list(blob.get("columns", []))
    if trained and list(X.coef_names) != trained:
        raise DataError(f"predictor columns {list(X.coef_names)} do not match "
                        f"the fitted model's {trained}")
    weights = logistic_weights(X, np.asarray(blob["beta"], dtype=float),
                               provenance="predicted", labels=tuple(labels))
    frame = pd.DataFrame({
        "interval": labels,
        "gaussian_weight": weights.values,
        "cauchy_weight": 1.0 - weights.values,
    })
    _write_frame(frame, args.out, "predicted_weights", args.format, prov)
    return 0


def _cmd_var(args, prov, config):
    if args.expected_shortfall:
        print(EXPECTED_SHORTFALL_REFUSAL, file=sys.stderr)
        return 1
    blob = _read_model_file(args.model_file)
    fit = _fit_from_model_json(blob)
    levels = [float(x) for x in str(args.levels).split(",") if x]
    table = var_report(fit, levels)
    _write_frame(table, args.out, "var", args.format, prov,
                 extra=["VaR convention: losses positive "
                        "(VaR = -return quantile)"])
    return 0


def _cmd_simulate(args, prov, config):
    try:
        design_blob = json.loads(Path(args.design).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read design {args.design}: {exc}") from exc
    if args.seed is not None:
        design_blob["seed"] = args.seed
    design = design_from_dict(design_blob)
    summary = run_replications(design, em_config=_em_config(config),
                               mcem_config=_mcem_config(config),
                               n_jobs=args.n_jobs)
    _write_frame(summary.param_rows, args.out, "summary", args.format, prov)
    payload = summary.to_json_dict()
    if summary.weight_rows is not None:
        _write_frame(summary.weight_rows, args.out, "weights", args.format, prov)
    if summary.weight_track is not None:
        _write_frame(summary.weight_track, args.out, "weight_track",
                     args.format, prov)
    split = design_blob.get("train_test_split")
    if split is not None:
        train_mse, test_mse = train_test_weight_eval(design, float(split),
                                                     em_config=_em_config(config))
        payload["train_weight_mse"] = train_mse
        payload["test_weight_mse"] = test_mse
    _write_json(payload, args.out, "summary_full", prov)
    return 0


_HANDLERS = {
    "returns": _cmd_returns,
    "fit": _cmd_fit,
    "predict-weights": _cmd_predict_weights,
    "var": _cmd_var,
    "simulate": _cmd_simulate,
}


def cli_main(argv):
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return 1
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    if args.command is None:
        parser.print_help(sys.stderr)
        return 1
    config = _load_config(args.config)
    prov = _provenance(argv, args.seed, config)
    handler = _HANDLERS[args.command]
    try:
        return handler(args, prov, config)
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        args.out.mkdir(parents=True, exist_ok=True)
        diag = args.out / "diagnostics.json"
        diag.write_text(json.dumps({
            "error": str(exc), "type": type(exc).__name__,
            "_provenance": prov,
        }, indent=2))
        print(f"numerical failure: {exc} (diagnostics in {diag})",
              file=sys.stderr)
        return 3


def main():
    sys.exit(cli_main(sys.argv[1:]))


if __name__ == "__main__":
    main()
