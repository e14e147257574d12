"""Pattern-sweep evaluation: per-pattern metrics, aggregation, reports.

Metrics are computed for every (method, repetition, pattern) triple and
aggregated by pattern popcount: patterns are averaged within a
repetition first, dispersion is reported across repetitions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np

from .missingness import mask_to_bits
from .schema import PlaceholderPolicy
from .worlds import BinnedConditional, GaussianWorld, bayes_conditional_mean

__all__ = [
    "PatternResult",
    "SweepReport",
    "mse",
    "mse_vs_bayes",
    "error_rate",
    "jsd",
    "marginal_fidelity",
    "marginal_fidelity_binned",
    "regression_pattern_metrics",
    "classification_pattern_metrics",
    "marginal_jsd_metrics",
    "run_pattern_sweep",
    "report_rows",
    "aggregates_dict",
]

MetricFn = Callable[[np.ndarray], float]


def mse(predictions: np.ndarray, targets: np.ndarray) -> float:
    predictions = np.asarray(predictions, dtype=float).ravel()
    targets = np.asarray(targets, dtype=float).ravel()
    if predictions.shape != targets.shape:
        raise ValueError(f"length mismatch: {predictions.shape} vs {targets.shape}")
    if predictions.size == 0:
        raise ValueError("mse of empty input")
    return float(np.mean((predictions - targets) ** 2))


def mse_vs_bayes(
    predict_fn: Callable[[np.ndarray, np.ndarray], np.ndarray],
    world: GaussianWorld,
    x_test: np.ndarray,
    pattern: np.ndarray,
) -> float:
    """MSE between a model's prediction under a pattern and the exact oracle.

    The model sees the test rows with the pattern applied through its own
    imputation rule; the oracle conditions on the unmasked coordinates.
    """
    predictions = predict_fn(x_test, pattern)
    observed_idx = [i for i, b in enumerate(pattern) if b == 0]
    oracle = bayes_conditional_mean(world, observed_idx, x_test[:, observed_idx])
    return mse(predictions, oracle)


def error_rate(predicted_labels: np.ndarray, labels: np.ndarray) -> float:
    predicted_labels = np.asarray(predicted_labels).ravel()
    labels = np.asarray(labels).ravel()
    if predicted_labels.shape != labels.shape or labels.size == 0:
        raise ValueError("label vectors must be equal-length and nonempty")
    return float(np.mean(predicted_labels != labels))


def jsd(p: np.ndarray, q: np.ndarray) -> float:
    """Jensen-Shannon divergence with natural log; lies in [0, ln 2]."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape:
        raise ValueError("distributions must share a support size")
    for name, dist in (("p", p), ("q", q)):
        if (dist < 0).any() or abs(dist.sum() - 1.0) > 1e-9:
            raise ValueError(f"{name} is not a normalized distribution")
    m = (p + q) / 2.0

    def _kl(a, b):
        sel = a > 0
        return float(np.sum(a[sel] * np.log(a[sel] / b[sel])))

    return 0.5 * _kl(p, m) + 0.5 * _kl(q, m)


def marginal_fidelity_binned(
    model_p1: np.ndarray, estimate: BinnedConditional
) -> float:
    """Mass-weighted mean JSD between model and empirical bin marginals."""
    model_p1 = np.asarray(model_p1, dtype=float)
    if model_p1.shape[0] != estimate.positions.shape[0]:
        raise ValueError("model probabilities must align with the bin positions")
    occupied = estimate.occupied
    if not occupied.any():
        raise ValueError("no occupied bins to compare against")
    weights = estimate.mass[occupied]
    weights = weights / weights.sum()
    divs = [
        jsd(np.array([pm, 1.0 - pm]), np.array([pe, 1.0 - pe]))
        for pm, pe in zip(model_p1[occupied], estimate.p1[occupied])
    ]
    return float(np.dot(weights, divs))


def marginal_fidelity(
    predict_proba: Callable[[np.ndarray], np.ndarray],
    estimate: BinnedConditional,
    feature: int,
    d: int,
    policy: PlaceholderPolicy,
) -> float:
    """JSD between model marginals and an empirical estimate for one feature.

    The model is queried with the conditioning feature at each bin
    position and every other feature at its knockout placeholder.
    """
    rows = np.tile(policy.knockout_values, (estimate.positions.shape[0], 1))
    if rows.shape[1] != d:
        raise ValueError("policy length does not match d")
    rows[:, feature] = estimate.positions
    proba = np.asarray(predict_proba(rows), dtype=float)
    return marginal_fidelity_binned(proba[:, 1], estimate)


@dataclass(frozen=True)
class PatternResult:
    pattern: str
    metric: str
    per_rep: tuple[float, ...]
    n_test: int

    def __post_init__(self):
        if self.n_test <= 0:
            raise ValueError("n_test must be positive")

    @property
    def popcount(self) -> int:
        return self.pattern.count("1")

    @property
    def value(self) -> float:
        return float(np.mean(self.per_rep))


@dataclass(frozen=True)
class SweepReport:
    method: str
    metrics: tuple[str, ...]
    results: tuple[PatternResult, ...]
    n_reps: int

    def __post_init__(self):
        seen = set()
        for r in self.results:
            key = (r.metric, r.pattern)
            if key in seen:
                raise ValueError(f"duplicate pattern result {key}")
            seen.add(key)
        for metric in self.metrics:
            patterns = {r.pattern for r in self.results if r.metric == metric}
            expected = {r.pattern for r in self.results}
            if patterns != expected:
                raise ValueError(f"metric {metric} is missing some patterns")

    def by_popcount(self) -> dict[tuple[str, int], dict]:
        """Per-(metric, popcount): patterns averaged within a repetition,
        then mean/std across repetitions."""
        grouped: dict[tuple[str, int], list[PatternResult]] = {}
        for r in self.results:
            grouped.setdefault((r.metric, r.popcount), []).append(r)
        out = {}
        for key, results in sorted(grouped.items()):
            per_rep = np.mean([r.per_rep for r in results], axis=0)
            out[key] = {
                "mean": float(per_rep.mean()),
                "std": float(per_rep.std(ddof=1)) if per_rep.size > 1 else 0.0,
                "per_rep": [float(v) for v in per_rep],
                "n_patterns": len(results),
            }
        return out


def run_pattern_sweep(
    method_metrics: Mapping[str, Sequence[Mapping[str, MetricFn]]],
    patterns: Sequence[np.ndarray],
    n_test: int,
) -> dict[str, SweepReport]:
    """Evaluate every (method, repetition, pattern, metric) combination.

    ``method_metrics[name]`` is one mapping of metric name to callable per
    repetition; each callable takes a pattern and returns a finite metric
    value. The returned reports are complete: every pattern appears for
    every metric of every method.
    """
    reports = {}
    for name in sorted(method_metrics):
        reps = method_metrics[name]
        if not reps:
            raise ValueError(f"method {name!r} has no trained repetitions")
        metric_names = sorted(reps[0])
        for r, rep in enumerate(reps):
            if sorted(rep) != metric_names:
                raise ValueError(f"method {name!r} repetition {r} has inconsistent metrics")
        results = []
        for metric in metric_names:
            for pattern in patterns:
                values = tuple(float(reps[r][metric](pattern)) for r in range(len(reps)))
                if any(not math.isfinite(v) for v in values):
                    raise ValueError(
                        f"non-finite {metric} for method {name!r} at pattern "
                        f"{mask_to_bits(pattern)}"
                    )
                results.append(PatternResult(mask_to_bits(pattern), metric, values, n_test))
        reports[name] = SweepReport(
            method=name,
            metrics=tuple(metric_names),
            results=tuple(results),
            n_reps=len(reps),
        )
    return reports


def regression_pattern_metrics(
    predict_fn: Callable[[np.ndarray, np.ndarray], np.ndarray],
    world: GaussianWorld | None,
    x_test: np.ndarray,
    y_test: np.ndarray,
) -> dict[str, Callable]:
    """Metric callables for one trained regression model (one repetition).

    Without a world (e.g. data loaded from a file) there is no exact
    oracle, so only the observation MSE is produced.
    """
    cache: dict[str, np.ndarray] = {}

    def _predictions(pattern: np.ndarray) -> np.ndarray:
        key = mask_to_bits(pattern)
        if key not in cache:
            cache[key] = predict_fn(x_test, pattern)
        return cache[key]

    def _mse_obs(pattern: np.ndarray) -> float:
        return mse(_predictions(pattern), y_test)

    if world is None:
        return {"mse_obs": _mse_obs}

    def _mse_bayes(pattern: np.ndarray) -> float:
        observed_idx = [i for i, b in enumerate(pattern) if b == 0]
        oracle = bayes_conditional_mean(world, observed_idx, x_test[:, observed_idx])
        return mse(_predictions(pattern), oracle)

    return {"mse_obs": _mse_obs, "mse_bayes": _mse_bayes}


def classification_pattern_metrics(
    proba_fn: Callable[[np.ndarray, np.ndarray], np.ndarray],
    x_test: np.ndarray,
    y_test: np.ndarray,
) -> dict[str, Callable]:
    """Metric callables for one trained classifier (one repetition)."""

    def _error(pattern: np.ndarray) -> float:
        proba = proba_fn(x_test, pattern)
        return error_rate(np.argmax(proba, axis=1), y_test)

    return {"error": _error}


def marginal_jsd_metrics(marginal_jsd_fn: Callable[[int], float]) -> dict[str, Callable]:
    """Marginal-fidelity metric for the single-observed-feature patterns.

    Run this as its own sweep restricted to patterns with exactly one
    unmasked feature; ``marginal_jsd_fn(feature)`` evaluates the fidelity
    for that feature.
    """

    def _marginal_jsd(pattern: np.ndarray) -> float:
        observed = [i for i, b in enumerate(pattern) if b == 0]
        if len(observed) != 1:
            raise ValueError("marginal_jsd applies only to single-observed patterns")
        return marginal_jsd_fn(observed[0])

    return {"marginal_jsd": _marginal_jsd}


def report_rows(reports: Mapping[str, SweepReport]) -> list[tuple]:
    """Long-format rows (method, pattern, popcount, metric, rep, value)."""
    rows = []
    for name in sorted(reports):
        report = reports[name]
        for result in sorted(report.results, key=lambda r: (r.metric, r.popcount, r.pattern)):
            for rep, value in enumerate(result.per_rep):
                rows.append((name, result.pattern, result.popcount, result.metric, rep, value))
    return rows


def aggregates_dict(reports: Mapping[str, SweepReport]) -> dict:
    out = {}
    for name in sorted(reports):
        agg = reports[name].by_popcount()
        out[name] = {
            f"{metric}/popcount={popcount}": stats for (metric, popcount), stats in agg.items()
        }
    return out
