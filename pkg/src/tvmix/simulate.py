"""Simulation designs, data generators and the replication harness.

Generators reproduce the deterministic-count sampling scheme: each interval
contains exactly ``round(alpha_i * n_i)`` Gaussian draws (round-half-to-even)
with the remainder Cauchy, shuffled. Predictors for the logistic-weight
designs are drawn i.i.d. standard normal; this choice is not part of the model
and materially affects the bias of the recovered coefficients, so it is
surfaced here rather than buried in the generator.

Seeding uses ``numpy.random.SeedSequence`` spawning: one child per replicate,
grandchildren per interval, so replicates can run in parallel and reproduce
independently of scheduling order.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from scipy.special import expit

from .distributions import CauchyParams, GaussianParams, MixtureParams, sample_mixture
from .em import EmConfig, SharedMixtureParams, fit_independent, fit_shared
from .exceptions import DataError, NumericalError
from .logistic import LogisticMixtureParams, fit_logistic, predict_weights
from .mcem import Ar1Params, ArLogisticMixtureParams, McemConfig, ar1_covariance, fit_mcem
from .series import ExogenousMatrix, IntervalSeries, WeightSeries

_MODELS = ("m1", "m2", "m3", "m4")


@dataclass(frozen=True)
class SimDesign:
    """One simulation study: model, shape, truth, replication count, seed."""

    model: str
    k: int
    n_i: object  # int or per-interval sequence
    true_params: object
    replicates: int = 1
    seed: int = 0
    sampling_scheme: str = "deterministic-count"

    def __post_init__(self):
        if self.model not in _MODELS:
            raise DataError(f"model must be one of {_MODELS}, got {self.model!r}")
        if self.k < 1 or self.replicates < 1:
            raise DataError("k and replicates must be >= 1")
        if self.sampling_scheme not in ("deterministic-count", "bernoulli"):
            raise DataError(f"unknown sampling scheme {self.sampling_scheme!r}")
        counts = self.counts  # validates length/positivity
        if np.any(counts < 1):
            raise DataError("every interval needs at least one observation")
        expected = {
            "m1": MixtureParams, "m2": SharedMixtureParams,
            "m3": LogisticMixtureParams, "m4": ArLogisticMixtureParams,
        }[self.model]
        if not isinstance(self.true_params, expected):
            raise DataError(f"model {self.model} needs {expected.__name__} truth")
        if self.model == "m2" and self.true_params.k != self.k:
            raise DataError("weight schedule length must equal k")

    @property
    def counts(self):
        if np.isscalar(self.n_i):
            return np.full(self.k, int(self.n_i))
        counts = np.asarray(self.n_i, dtype=int)
        if counts.size != self.k:
            raise DataError(f"n_i schedule has {counts.size} entries for k={self.k}")
        return counts

    @property
    def n_predictors(self):
        """Predictor count for the logistic designs (intercept excluded)."""
        if self.model in ("m3", "m4"):
            return self.true_params.beta.size - 1
        return 0


def default_weight_schedule(k, level=0.55, amplitude=0.35):
    """Smooth level-plus-sinusoid weight path for figure-style studies."""
    i = np.arange(k)
    return level + amplitude * np.sin(2.0 * np.pi * i / max(k, 1))


def generate(design: SimDesign, seed_seq=None):
    """Draw one dataset: (IntervalSeries, ExogenousMatrix or None, truth dict).

    The truth dict carries the design parameters and the realized per-interval
    weights (for the logistic designs these depend on the drawn predictors).
    """
    if seed_seq is None:
        seed_seq = np.random.SeedSequence(design.seed)
    counts = design.counts
    children = seed_seq.spawn(design.k + 2)
    interval_seeds, aux = children[:design.k], children[design.k:]

    params = design.true_params
    X = None
    if design.model == "m1":
        alphas = np.full(design.k, params.alpha)
        gaussian, cauchy = params.gaussian, params.cauchy
    elif design.model == "m2":
        alphas = params.alphas
        gaussian, cauchy = params.gaussian, params.cauchy
    else:
        rng_x = np.random.default_rng(aux[0])
        X = ExogenousMatrix(rng_x.standard_normal((design.k, design.n_predictors)),
                            intercept=True)
        eta = X.design() @ params.beta
        if design.model == "m4":
            rng_e = np.random.default_rng(aux[1])
            chol = np.linalg.cholesky(ar1_covariance(params.ar1, design.k))
            eta = eta + chol @ rng_e.standard_normal(design.k)
        alphas = expit(eta)
        gaussian, cauchy = params.gaussian, params.cauchy

    intervals = [
        sample_mixture(int(n), MixtureParams(gaussian, cauchy, float(a)),
                       seed, scheme=design.sampling_scheme)
        for n, a, seed in zip(counts, alphas, interval_seeds)
    ]
    series = IntervalSeries(intervals)
    truth = {
        "params": params,
        "weights": WeightSeries(alphas, provenance="true", labels=series.labels),
    }
    return series, X, truth


def _estimates(design, series, X, em_config, mcem_config, mcem_seed):
    """Fit the matching model and flatten (names, true, estimates, aux)."""
    params = design.true_params
    if design.model == "m1":
        results = fit_independent(series, em_config)
        names, true, est = [], [], []
        for i, r in enumerate(results):
            if r.error is not None:
                raise NumericalError(f"interval {i} failed: {r.error}")
            suffix = f"_{i}" if design.k > 1 else ""
            names += [f"mu{suffix}", f"sigma{suffix}", f"theta{suffix}",
                      f"delta{suffix}", f"alpha{suffix}"]
            true += list(params.as_tuple())
            est += list(r.params.as_tuple())
        return names, np.array(true), np.array(est), None, None
    if design.model == "m2":
        r = fit_shared(series, em_config)
        names = ["mu", "sigma", "theta", "delta"] \
            + [f"alpha_{i}" for i in range(design.k)]
        g, c = params.gaussian, params.cauchy
        true = np.concatenate([[g.mu, g.sigma, c.theta, c.delta], params.alphas])
        fg, fc = r.params.gaussian, r.params.cauchy
        est = np.concatenate([[fg.mu, fg.sigma, fc.theta, fc.delta],
                              r.params.alphas])
        return names, true, est, r.weights.values, None
    if design.model == "m3":
        r = fit_logistic(series, X, em_config)
    else:
        r = fit_mcem(series, X, mcem_config, seed=mcem_seed,
                     em_config=em_config)
    g, c = params.gaussian, params.cauchy
    names = ["mu", "sigma", "theta", "delta"] \
        + [f"beta_{j}" for j in range(params.beta.size)]
    true = np.concatenate([[g.mu, g.sigma, c.theta, c.delta], params.beta])
    fg, fc = r.params.gaussian, r.params.cauchy
    est = np.concatenate([[fg.mu, fg.sigma, fc.theta, fc.delta],
                          r.params.beta])
    if design.model == "m4":
        names += ["phi", "sigma_a"]
        true = np.concatenate([true, [params.ar1.phi, params.ar1.sigma_a]])
        est = np.concatenate([est, [r.params.ar1.phi, r.params.ar1.sigma_a]])
    return names, true, est, r.weights.values, None


@dataclass
class SimSummary:
    """Replication aggregates in the (true, mean, SE, MSE) table layout."""

    param_rows: pd.DataFrame
    n_replicates: int
    n_failed: int
    failures: list = field(default_factory=list)
    weight_rows: pd.DataFrame | None = None
    weight_mse: float | None = None
    weight_track: pd.DataFrame | None = None

    def to_json_dict(self):
        out = {
            "n_replicates": self.n_replicates,
            "n_failed": self.n_failed,
            "parameters": self.param_rows.to_dict(orient="records"),
        }
        if self.weight_rows is not None:
            out["weights"] = self.weight_rows.to_dict(orient="records")
        if self.weight_mse is not None:
            out["weight_mse"] = self.weight_mse
        return out


def _summary_frame(names, true, est_matrix):
    est = np.asarray(est_matrix)
    r = est.shape[0]
    mean = est.mean(axis=0)
    se = est.std(axis=0, ddof=1) if r > 1 else np.full(mean.shape, np.nan)
    mse = np.mean((est - true[None, :]) ** 2, axis=0)
    return pd.DataFrame({
        "parameter": names, "true": true, "mean": mean, "se": se, "mse": mse,
    })


def run_replications(design: SimDesign, em_config: EmConfig | None = None,
                     mcem_config: McemConfig | None = None, n_jobs=1):
    """Run the design's replicates, fit the matching model, aggregate.

    Individual replicate failures are recorded and excluded; the run aborts if
    more than 5% fail. Replicates are independent and may run in parallel;
    results do not depend on scheduling because every replicate owns a spawned
    seed.
    """
    em_config = em_config or EmConfig()
    mcem_config = mcem_config or McemConfig()
    seeds = np.random.SeedSequence(design.seed).spawn(design.replicates)

    def one(rep):
        seq = seeds[rep]
        series, X, truth = generate(design, seq)
        try:
            names, true, est, weights, _ = _estimates(
                design, series, X, em_config, mcem_config,
                mcem_seed=seq.spawn(1)[0])
        except (DataError, NumericalError) as exc:
            return ("error", rep, str(exc))
        w_true = truth["weights"].values
        w_mse = None if weights is None else float(np.mean((weights - w_true) ** 2))
        return ("ok", names, true, est, weights, w_true, w_mse)

    outputs = Parallel(n_jobs=n_jobs)(delayed(one)(r)
                                      for r in range(design.replicates))
    failures = [(o[1], o[2]) for o in outputs if o[0] == "error"]
    oks = [o for o in outputs if o[0] == "ok"]
    n_failed = design.replicates - len(oks)
    if n_failed > 0.05 * design.replicates:
        raise NumericalError(
            f"{n_failed}/{design.replicates} replicates failed; first error: "
            f"{failures[0][1] if failures else 'unknown'}")
    if not oks:
        raise NumericalError("all replicates failed")

    names, true = oks[0][1], oks[0][2]
    est_matrix = np.vstack([o[3] for o in oks])
    param_rows = _summary_frame(names, true, est_matrix)

    weight_rows = None
    weight_mse = None
    weight_track = None
    if design.model == "m2":
        mask = [n.startswith("alpha_") for n in names]
        weight_rows = param_rows[mask].reset_index(drop=True)
    elif design.model in ("m3", "m4"):
        mses = [o[6] for o in oks if o[6] is not None]
        weight_mse = float(np.mean(mses)) if mses else None
        first = oks[0]
        weight_track = pd.DataFrame({
            "interval": np.arange(len(first[5])),
            "true": first[5],
            "estimated": first[4],
        })
    return SimSummary(param_rows=param_rows, n_replicates=design.replicates,
                      n_failed=n_failed, failures=failures,
                      weight_rows=weight_rows, weight_mse=weight_mse,
                      weight_track=weight_track)


def train_test_weight_eval(design: SimDesign, split,
                           em_config: EmConfig | None = None):
    """Weight-prediction check: fit on leading intervals, predict the rest.

    Returns mean (train MSE, test MSE) of the fitted/predicted weights against
    the realized truth over the design's replicates. Designs with temporally
    correlated weights are evaluated with the logistic fit too, which is the
    robustness protocol for that model.
    """
    if design.model not in ("m3", "m4"):
        raise DataError("train/test weight evaluation applies to the logistic "
                        "and autocorrelated designs only")
    split = float(split)
    if not 0.0 < split < 1.0:
        raise DataError(f"split must lie strictly between 0 and 1, got {split}")
    em_config = em_config or EmConfig()
    n_train = int(round(split * design.k))
    n_coef = design.true_params.beta.size
    if n_train < n_coef + 1:
        raise DataError(f"{n_train} training intervals cannot identify "
                        f"{n_coef} coefficients; need at least {n_coef + 1}")
    if n_train >= design.k:
        raise DataError("split leaves no test intervals")

    seeds = np.random.SeedSequence(design.seed).spawn(design.replicates)
    train_mses, test_mses = [], []
    for seq in seeds:
        series, X, truth = generate(design, seq)
        w_true = truth["weights"].values
        train_series = series.subset(range(n_train))
        X_train = ExogenousMatrix(X.rows[:n_train], intercept=X.intercept,
                                  columns=X.columns)
        X_test = ExogenousMatrix(X.rows[n_train:], intercept=X.intercept,
                                 columns=X.columns)
        fit = fit_logistic(train_series, X_train, em_config)
        w_train = fit.weights.values
        w_test = predict_weights(fit, X_test).values
        train_mses.append(np.mean((w_train - w_true[:n_train]) ** 2))
        test_mses.append(np.mean((w_test - w_true[n_train:]) ** 2))
    return float(np.mean(train_mses)), float(np.mean(test_mses))


# ---------------------------------------------------------------------------
# Design (de)serialization for the CLI
# ---------------------------------------------------------------------------

def design_from_dict(d):
    """Build a :class:`SimDesign` from the JSON design-file schema."""
    try:
        model = d["model"]
        k = int(d["k"])
        n_i = d["n_i"]
        tp = d["true_params"]
    except KeyError as exc:
        raise DataError(f"design file is missing required key {exc}") from exc
    gaussian = GaussianParams(float(tp["mu"]), float(tp["sigma"]))
    cauchy = CauchyParams(float(tp["theta"]), float(tp["delta"]))
    if model == "m1":
        params = MixtureParams(gaussian, cauchy, float(tp["alpha"]))
    elif model == "m2":
        params = SharedMixtureParams(gaussian, cauchy,
                                     np.asarray(tp["alphas"], dtype=float))
    elif model == "m3":
        params = LogisticMixtureParams(gaussian, cauchy,
                                       np.asarray(tp["beta"], dtype=float))
    elif model == "m4":
        params = ArLogisticMixtureParams(
            gaussian, cauchy, np.asarray(tp["beta"], dtype=float),
            Ar1Params(float(tp["phi"]), float(tp["sigma_a"])))
    else:
        raise DataError(f"unknown model {model!r} in design file")
    return SimDesign(
        model=model, k=k, n_i=n_i, true_params=params,
        replicates=int(d.get("replicates", 1)),
        seed=int(d.get("seed", 0)),
        sampling_scheme=d.get("sampling_scheme", "deterministic-count"),
    )
