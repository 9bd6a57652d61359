"""
Replicate Harness

Simulates R datasets from an experiment, runs every requested method on each
and aggregates interval containment, widths and test decisions per
parameter group. A failed replicate is recorded in the report, never dropped.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from efi.core.config import settings
from efi.core.errors import DomainError, EFIError
from efi.core.rng import RngStreams, replicate_seeds
from efi.schemas.experiment import ExperimentConfig
from efi.schemas.report import CoverageReport, CoverageRow, ReplicateFailure
from efi.services.baselines import run_baseline
from efi.services.inference import mediation_decision, percentile_ci, point_estimate, ssl_accuracy
from efi.services.models import (
    Dataset,
    LogisticBinary,
    ModelFamily,
    SSLLogistic,
    family_truth,
    make_family,
    simulate,
)
from efi.services.sampler import run_efi

logger = logging.getLogger(__name__)


@dataclass
class MethodOutcome:
    intervals: Dict[str, Tuple[float, float]] = field(default_factory=dict)
    reject: Optional[bool] = None


@dataclass
class ReplicateResult:
    replicate: int
    outcomes: Dict[str, MethodOutcome] = field(default_factory=dict)
    failures: List[ReplicateFailure] = field(default_factory=list)


def run_method(
    method: str,
    family: ModelFamily,
    dataset: Dataset,
    config: ExperimentConfig,
    seed: int,
) -> MethodOutcome:
    """One method on one dataset: the EFI chain or a closed-form baseline."""
    streams = RngStreams(seed)
    if method != "efi":
        result = run_baseline(
            method, family, dataset, config.level, streams.integer_seed("baseline")
        )
        return MethodOutcome(intervals=result.intervals, reject=result.reject)

    samples = run_efi(dataset, family, config, seed=seed)
    truth = family.default_truth()
    intervals = {
        name: percentile_ci(samples, name, config.level)
        for name, _, _ in family.report_targets(truth)
        if name in samples.names
    }
    reject = None
    if family.name == "mediation":
        reject = mediation_decision(samples, config.level)
    elif family.name == "behrens_fisher":
        lo, hi = intervals["mu_diff"]
        reject = not lo <= 0.0 <= hi
    return MethodOutcome(intervals=intervals, reject=reject)


def _run_replicate(
    config: ExperimentConfig, methods: Sequence[str], replicate: int, seed: int
) -> ReplicateResult:
    family = make_family(config.family)
    truth = family_truth(family, config.family)
    dataset = simulate(family, truth, config.n, RngStreams(seed).integer_seed("simulation"))
    result = ReplicateResult(replicate=replicate)
    for method in methods:
        try:
            result.outcomes[method] = run_method(method, family, dataset, config, seed)
        except EFIError as exc:
            logger.warning("replicate %d: method %s failed: %s", replicate, method, exc)
            result.failures.append(
                ReplicateFailure(replicate=replicate, method=method, error=str(exc))
            )
    return result


def _aggregate(
    methods: Sequence[str],
    targets: List[Tuple[str, str, float]],
    results: List[ReplicateResult],
) -> List[CoverageRow]:
    hits = []
    decisions = []
    for res in results:
        for method, outcome in res.outcomes.items():
            if outcome.reject is not None:
                decisions.append({"method": method, "reject": float(outcome.reject)})
            for name, group, true_value in targets:
                if name not in outcome.intervals:
                    continue
                lo, hi = outcome.intervals[name]
                hits.append(
                    {
                        "method": method,
                        "group": group,
                        "covered": float(lo <= true_value <= hi),
                        "width": hi - lo,
                    }
                )

    hit_frame = pd.DataFrame(hits, columns=["method", "group", "covered", "width"])
    reject_rate = (
        pd.DataFrame(decisions, columns=["method", "reject"]).groupby("method")["reject"].mean()
    )
    groups = list(dict.fromkeys(group for _, group, _ in targets))

    rows = []
    for method in methods:
        subset = hit_frame[hit_frame["method"] == method]
        rate = float(reject_rate[method]) if method in reject_rate.index else None
        for group in groups:
            cells = subset[subset["group"] == group]
            if cells.empty and rate is None:
                continue
            rows.append(
                CoverageRow(
                    group=group,
                    method=method,
                    coverage=float(cells["covered"].mean()) if len(cells) else None,
                    width_mean=float(cells["width"].mean()) if len(cells) else None,
                    width_std=float(cells["width"].std(ddof=0)) if len(cells) else None,
                    reject_rate=rate,
                    count=int(len(cells)),
                )
            )
    return rows


def coverage_harness(
    config: ExperimentConfig,
    methods: Optional[Sequence[str]] = None,
    threads: Optional[int] = None,
    evaluation_truth: Optional[np.ndarray] = None,
) -> CoverageReport:
    """
    Coverage and width of every method over ``config.replicates`` simulated
    datasets. ``evaluation_truth`` replaces the simulation truth when scoring
    containment.
    """
    methods = list(methods or config.methods)
    workers = threads or config.threads or settings.DEFAULT_THREADS
    seeds = replicate_seeds(config.seed, config.replicates)

    family = make_family(config.family)
    truth = family_truth(family, config.family)
    scored = truth if evaluation_truth is None else np.asarray(evaluation_truth, dtype=float)
    targets = family.report_targets(scored)

    logger.info(
        "harness %s: %d replicates, methods=%s, workers=%d",
        config.name,
        config.replicates,
        methods,
        workers,
    )
    results: List[ReplicateResult] = Parallel(n_jobs=workers, prefer="threads")(
        delayed(_run_replicate)(config, methods, r, seed) for r, seed in enumerate(seeds)
    )
    results.sort(key=lambda res: res.replicate)

    failures = [failure for res in results for failure in res.failures]
    if failures:
        logger.warning("harness %s: %d method runs failed", config.name, len(failures))
    return CoverageReport(
        experiment=config.name,
        level=config.level,
        replicates=config.replicates,
        rows=_aggregate(methods, targets, results),
        failures=failures,
    )


# ── Semi-supervised cross-validation ───────────────────────────────────────


def ssl_cross_validation(
    config: ExperimentConfig, folds: int = 5, seed: Optional[int] = None
) -> List[float]:
    """
    K-fold accuracy of the EFI point-estimate classifier on one synthetic
    dataset. Each training fold loses ``label_missing_fraction`` of its labels.
    """
    if folds < 2:
        raise DomainError("cross-validation needs at least 2 folds")
    seed = config.seed if seed is None else seed
    streams = RngStreams(seed)
    fam_cfg = config.family
    family = SSLLogistic(fam_cfg.p, fam_cfg.label_missing_fraction)
    full = LogisticBinary(fam_cfg.p).simulate(
        family_truth(family, fam_cfg), config.n, streams.simulation
    )
    order = streams.baseline.permutation(config.n)
    accuracies = []
    for k, test_rows in enumerate(np.array_split(order, folds)):
        train_rows = np.setdiff1d(order, test_rows)
        train = full.subset(train_rows)
        mask = np.zeros(train.n, dtype=bool)
        n_missing = int(round(fam_cfg.label_missing_fraction * train.n))
        mask[streams.baseline.permutation(train.n)[:n_missing]] = True
        train = Dataset(
            Y=np.where(mask, 0.0, train.Y[:, 0])[:, None], X=train.X, label_mask=mask
        )
        samples = run_efi(train, family, config, seed=seed + k + 1)
        test = full.subset(test_rows)
        accuracies.append(ssl_accuracy(point_estimate(samples), test.X, test.Y[:, 0]))
        logger.info("ssl fold %d/%d: accuracy %.4f", k + 1, folds, accuracies[-1])
    return accuracies
