"""Experiment driver: trains the defender, crafts poisons, replays erasure
requests one by one and measures how long the fast approximate updates last
before full retraining triggers.

A trial is a pure function of (config, trial_seed) apart from wall-clock
timings. The benign baseline runs the identical pipeline with the un-crafted
reference rows erased in the same order, so crafting is the only difference
between modes.
"""

from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass, field, replace

import numpy as np

from .attack import (
    AttackConfig,
    AttackContext,
    CostFunctionKind,
    NormBallConstraint,
    PoisonBatch,
    pgd_craft,
)
from .certified_removal import (
    RETRAINED,
    OneVsRestState,
    RemovalBudget,
    learn,
    learn_ovr,
    unlearn,
    unlearn_ovr,
)
from .data import binarize, load_idx, make_split, normalize, synth_gaussian
from .model_core import Dataset

MODES = ("benign", "white_box", "grey_box")
ERASE_ORDERS = ("poison_first", "random_clean")
DATASETS = ("synthetic", "binary-mnist", "mnist", "fashion", "har")

CSV_COLUMNS = (
    "trial_seed",
    "mode",
    "retrain_interval_first",
    "retrain_interval_meangap",
    "censored",
    "retrain_count",
    "n_requests",
    "acc_initial",
    "acc_final",
)


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: str = "synthetic"
    data_dir: str | None = None
    synth_n: int = 2000
    synth_d: int = 50
    synth_classes: int = 2
    synth_separation: float = 1.0
    budget: RemovalBudget = field(default_factory=RemovalBudget)
    cost_kind: str = "influence_norm"
    ignore_model_dependence: bool = True
    norm_p: str = "l1"
    radius: float | None = None  # raw units; None -> d / 20
    n_pgd: int = 10
    m_poison: int = 100
    mode: str = "benign"
    erase_order: str = "poison_first"
    n_requests: int | None = None  # None -> m_poison
    trials: int = 10
    base_seed: int = 0
    test_fraction: float = 0.2
    surrogate_fraction: float = 0.2
    output_path: str | None = None

    def __post_init__(self):
        if self.dataset not in DATASETS:
            raise ValueError(f"unknown dataset {self.dataset!r}")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.erase_order not in ERASE_ORDERS:
            raise ValueError(f"erase_order must be one of {ERASE_ORDERS}")
        if self.cost_kind not in ("grnb", "influence_norm", "gradient_norm"):
            raise ValueError(f"unknown cost kind {self.cost_kind!r}")
        if self.norm_p not in ("l1", "linf"):
            raise ValueError("norm_p must be 'l1' or 'linf'")
        if self.trials < 1:
            raise ValueError("need at least one trial")
        if self.m_poison < 0:
            raise ValueError("m_poison must be nonnegative")
        if self.radius is not None and self.radius < 0:
            raise ValueError("radius must be nonnegative")


@dataclass(frozen=True)
class RequestRecord:
    index: int
    erased_id: int
    outcome: str
    beta_before: float
    beta_after: float
    wall_time: float


@dataclass(frozen=True)
class IntervalStats:
    first_retrain: float
    mean_gap: float
    censored: bool


@dataclass(frozen=True, eq=False)
class TrialResult:
    trial_seed: int
    mode: str
    retrain_interval: float
    retrain_interval_meangap: float
    censored: bool
    retrain_count: int
    accuracy_initial: float
    accuracy_final: float
    log: tuple


@dataclass(frozen=True, eq=False)
class PreparedData:
    pool: Dataset
    file_test: Dataset | None
    bounds: tuple


@dataclass(frozen=True, eq=False)
class ExperimentReport:
    config: ExperimentConfig
    trials: tuple
    summary: dict


def retrain_interval(log) -> IntervalStats:
    """Primary metric: approximate updates served before the first retrain
    (censored at the request count when no retrain happens). The mean-gap
    variant #approximate / #retrains is reported alongside."""
    log = tuple(log)
    if not log:
        raise ValueError("request log is empty")
    outcomes = [rec.outcome for rec in log]
    n_retrain = outcomes.count(RETRAINED)
    n_approx = len(outcomes) - n_retrain
    if n_retrain == 0:
        return IntervalStats(float(len(outcomes)), float(len(outcomes)), True)
    first = outcomes.index(RETRAINED)
    return IntervalStats(float(first), n_approx / n_retrain, False)


def accuracy(state, test: Dataset) -> float:
    """Fraction of test points classified correctly. Binary scores tie toward
    +1; multiclass takes the argmax over the one-vs-rest scores."""
    if test.n == 0:
        raise ValueError("test set is empty")
    if isinstance(state, OneVsRestState):
        thetas = np.stack([m.theta for m in state.models], axis=1)
        scores = test.features @ thetas
        pred = np.asarray(state.classes)[np.argmax(scores, axis=1)]
        return float(np.mean(pred == test.labels))
    scores = test.features @ state.theta
    pred = np.where(scores >= 0.0, 1, -1)
    return float(np.mean(pred == test.labels))


# --------------------------------------------------------------- pipeline --

def prepare_data(config: ExperimentConfig) -> PreparedData:
    """Load or generate the working pool (normalized) and, for datasets that
    ship predefined splits, the held-out test set."""
    if config.dataset == "synthetic":
        raw = synth_gaussian(
            config.synth_n,
            config.synth_d,
            config.synth_classes,
            config.synth_separation,
            config.base_seed,
        )
        if config.synth_classes == 2:
            raw = binarize(raw, 0, 1)
        return PreparedData(normalize(raw), None, raw.feature_bounds)
    if config.data_dir is None:
        raise ValueError(f"dataset {config.dataset!r} requires --data-dir")
    if config.dataset in ("mnist", "fashion", "binary-mnist"):
        train_raw = load_idx(
            os.path.join(config.data_dir, "train-images-idx3-ubyte"),
            os.path.join(config.data_dir, "train-labels-idx1-ubyte"),
        )
        test_raw = load_idx(
            os.path.join(config.data_dir, "t10k-images-idx3-ubyte"),
            os.path.join(config.data_dir, "t10k-labels-idx1-ubyte"),
        )
        if config.dataset == "binary-mnist":
            train_raw = binarize(train_raw, 3, 8)
            test_raw = binarize(test_raw, 3, 8)
        return PreparedData(
            normalize(train_raw), normalize(test_raw), train_raw.feature_bounds
        )
    # har: delimited sensor data with predefined splits
    from .data import load_delimited

    train_raw = load_delimited(
        os.path.join(config.data_dir, "X_train.txt"),
        os.path.join(config.data_dir, "y_train.txt"),
    )
    test_raw = load_delimited(
        os.path.join(config.data_dir, "X_test.txt"),
        os.path.join(config.data_dir, "y_test.txt"),
    )
    return PreparedData(
        normalize(train_raw), normalize(test_raw), train_raw.feature_bounds
    )


def _craft_constraints(config, prepared, reference):
    """Validity box plus perturbation ball, converted from raw units to the
    normalized feature space by the recorded scale constant."""
    lo, hi = prepared.bounds
    scale = prepared.pool.scale
    m, d = reference.shape
    validity = NormBallConstraint(
        p=np.inf,
        center=np.full((m, d), lo / scale),
        radius=(hi - lo) / scale,
    )
    # radii are stated in raw feature units and divided by the recorded scale
    radius_raw = config.radius if config.radius is not None else d / 20.0
    perturb = NormBallConstraint(
        p=1 if config.norm_p == "l1" else np.inf,
        center=reference,
        radius=radius_raw / scale,
    )
    return (validity, perturb)


def _craft_poison(config, prepared, clean: Dataset, reference, labels):
    batch = PoisonBatch(features=reference.copy(), labels=labels, reference=reference)
    attack_cfg = AttackConfig(
        cost=CostFunctionKind(config.cost_kind, config.ignore_model_dependence),
        constraints=_craft_constraints(config, prepared, reference),
        n_pgd=config.n_pgd,
    )
    context = AttackContext(
        clean=clean,
        poison_labels=labels,
        lam=config.budget.lam,
        cost=attack_cfg.cost,
    )
    return pgd_craft(batch, attack_cfg, context)


def run_trial(config: ExperimentConfig, trial_seed: int,
              prepared: PreparedData | None = None) -> TrialResult:
    """One seeded pass: split, craft (attack modes), learn, then erase the
    designated rows one unlearn call at a time."""
    if prepared is None:
        prepared = prepare_data(config)
    pool = prepared.pool
    seeds = np.random.SeedSequence(trial_seed).generate_state(3)
    split_seed, learn_seed, order_seed = (int(s) for s in seeds)

    split = make_split(
        pool.n,
        0.0 if prepared.file_test is not None else config.test_fraction,
        config.m_poison,
        config.mode == "grey_box",
        config.surrogate_fraction,
        split_seed,
    )
    train = pool.subset(split.train_indices)
    test = prepared.file_test if prepared.file_test is not None else pool.subset(
        split.test_indices
    )
    pos = np.searchsorted(split.train_indices, split.poison_indices)
    multiclass = not train.is_binary()

    radius_raw = config.radius if config.radius is not None else pool.d / 20.0
    attack_active = (
        config.mode != "benign" and config.m_poison > 0 and radius_raw > 0.0
    )
    defender_train = train
    if attack_active:
        if multiclass:
            raise ValueError("slow-down crafting is implemented for binary tasks only")
        reference = train.features[pos]
        labels = train.labels[pos]
        if config.mode == "grey_box":
            if split.surrogate_indices.size == 0:
                raise ValueError("grey_box mode needs a nonempty surrogate pool")
            clean = pool.subset(split.surrogate_indices)
        else:
            clean_pos = np.setdiff1d(np.arange(train.n), pos)
            clean = train.subset(clean_pos)
        crafted = _craft_poison(config, prepared, clean, reference, labels)
        features = train.features.copy()
        features[pos] = crafted.features
        defender_train = Dataset(features, train.labels, train.scale)

    # erase sequence: positions in the defender's train set
    rng = np.random.default_rng(order_seed)
    clean_positions = np.setdiff1d(np.arange(train.n), pos)
    shuffled_clean = rng.permutation(clean_positions)
    if config.erase_order == "poison_first":
        sequence = np.concatenate([pos, shuffled_clean])
    else:
        sequence = shuffled_clean
    n_requests = config.n_requests if config.n_requests is not None else config.m_poison
    if n_requests < 1:
        raise ValueError("a trial needs at least one erasure request")
    if n_requests >= train.n:
        raise ValueError("cannot erase the entire training set")
    if n_requests > sequence.size:
        raise ValueError("not enough rows to serve the requested erasures")
    sequence = sequence[:n_requests]
    erase_features = defender_train.features[sequence].copy()
    erase_labels = defender_train.labels[sequence].copy()
    erased_ids = split.train_indices[sequence]

    learner = learn_ovr if multiclass else learn
    unlearner = unlearn_ovr if multiclass else unlearn
    state = learner(defender_train, config.budget, learn_seed)
    acc_initial = accuracy(state, test)

    request_seeds = np.random.SeedSequence(learn_seed).generate_state(n_requests)
    current = defender_train
    records = []
    for k in range(n_requests):
        erase = Dataset(erase_features[k:k + 1], erase_labels[k:k + 1], current.scale)
        beta_before = (
            max(m.beta for m in state.models)
            if isinstance(state, OneVsRestState)
            else state.beta
        )
        state, current, outcome = unlearner(
            state, current, erase, config.budget, int(request_seeds[k])
        )
        records.append(
            RequestRecord(
                index=k,
                erased_id=int(erased_ids[k]),
                outcome=outcome.kind,
                beta_before=beta_before,
                beta_after=outcome.beta_after,
                wall_time=outcome.wall_time,
            )
        )
    acc_final = accuracy(state, test)
    stats = retrain_interval(records)
    return TrialResult(
        trial_seed=trial_seed,
        mode=config.mode,
        retrain_interval=stats.first_retrain,
        retrain_interval_meangap=stats.mean_gap,
        censored=stats.censored,
        retrain_count=state.retrain_count,
        accuracy_initial=acc_initial,
        accuracy_final=acc_final,
        log=tuple(records),
    )


# ------------------------------------------------------------- experiment --

def _mean_std(values):
    arr = np.asarray(values, dtype=np.float64)
    return float(arr.mean()), float(arr.std())


def _fmt(x) -> str:
    if isinstance(x, bool):
        return str(int(x))
    if isinstance(x, float):
        return f"{x:.6g}"
    return str(x)


def cumulative_retrains(trial: TrialResult) -> np.ndarray:
    flags = np.array([rec.outcome == RETRAINED for rec in trial.log], dtype=np.int64)
    return np.cumsum(flags)


def run_experiment(config: ExperimentConfig) -> ExperimentReport:
    """Run seeded trials base_seed .. base_seed + trials - 1, aggregate the
    interval and accuracy statistics, and (optionally) write the per-trial
    CSV, JSON summary and the cumulative retrain-count series."""
    prepared = prepare_data(config)
    trials = tuple(
        run_trial(config, config.base_seed + i, prepared)
        for i in range(config.trials)
    )
    interval_mean, interval_std = _mean_std([t.retrain_interval for t in trials])
    meangap_mean, meangap_std = _mean_std([t.retrain_interval_meangap for t in trials])
    retrain_mean, retrain_std = _mean_std([t.retrain_count for t in trials])
    acc0_mean, _ = _mean_std([t.accuracy_initial for t in trials])
    acc1_mean, _ = _mean_std([t.accuracy_final for t in trials])
    wall = [rec.wall_time for t in trials for rec in t.log]
    summary = {
        "dataset": config.dataset,
        "mode": config.mode,
        "trials": config.trials,
        "base_seed": config.base_seed,
        "retrain_interval_first_mean": interval_mean,
        "retrain_interval_first_std": interval_std,
        "retrain_interval_meangap_mean": meangap_mean,
        "retrain_interval_meangap_std": meangap_std,
        "retrain_count_mean": retrain_mean,
        "retrain_count_std": retrain_std,
        "censored_trials": sum(t.censored for t in trials),
        "accuracy_initial_mean": acc0_mean,
        "accuracy_final_mean": acc1_mean,
        "wall_time_per_request_mean": float(np.mean(wall)) if wall else 0.0,
    }
    report = ExperimentReport(config=config, trials=trials, summary=summary)
    if config.output_path:
        write_report(report, config.output_path)
    return report


def write_report(report: ExperimentReport, out_dir):
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "trials.csv"), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for t in report.trials:
            writer.writerow(
                [
                    t.trial_seed,
                    t.mode,
                    _fmt(t.retrain_interval),
                    _fmt(t.retrain_interval_meangap),
                    int(t.censored),
                    t.retrain_count,
                    len(t.log),
                    _fmt(t.accuracy_initial),
                    _fmt(t.accuracy_final),
                ]
            )
    with open(os.path.join(out_dir, "summary.json"), "w") as fh:
        json.dump(report.summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    series = [cumulative_retrains(t) for t in report.trials]
    n_req = max(len(s) for s in series)
    with open(os.path.join(out_dir, "cumulative.csv"), "w", newline="") as fh:
        writer = csv.writer(fh)
        header = ["request"] + [f"trial_{t.trial_seed}" for t in report.trials] + ["mean"]
        writer.writerow(header)
        for k in range(n_req):
            row = [k + 1]
            vals = []
            for s in series:
                v = int(s[min(k, len(s) - 1)])
                vals.append(v)
                row.append(v)
            row.append(_fmt(float(np.mean(vals))))
            writer.writerow(row)


# ------------------------------------------------------------------ sweep --

SWEEP_AXES = ("sigma", "lambda", "radius", "norm_p", "cost_fn", "dataset")


def _with_axis_value(config: ExperimentConfig, axis: str, value) -> ExperimentConfig:
    if axis == "sigma":
        return replace(config, budget=replace(config.budget, sigma=float(value)))
    if axis == "lambda":
        return replace(config, budget=replace(config.budget, lam=float(value)))
    if axis == "radius":
        return replace(config, radius=float(value))
    if axis == "norm_p":
        return replace(config, norm_p=str(value))
    if axis == "cost_fn":
        return replace(config, cost_kind=str(value))
    if axis == "dataset":
        return replace(config, dataset=str(value))
    raise ValueError(f"unknown sweep axis {axis!r}; choose from {SWEEP_AXES}")


def percent_reduction(benign: float, attack: float) -> float:
    if benign == attack:
        return 0.0
    if benign == 0.0:
        return math.nan
    return 100.0 * (benign - attack) / benign


def sweep(config: ExperimentConfig, axis: str, values) -> list:
    """Run a benign/attacked experiment pair per axis value and tabulate the
    intervals with the percentage reduction."""
    attack_mode = config.mode if config.mode != "benign" else "white_box"
    rows = []
    for value in values:
        cfg = _with_axis_value(replace(config, output_path=None), axis, value)
        benign_report = run_experiment(replace(cfg, mode="benign"))
        attack_report = run_experiment(replace(cfg, mode=attack_mode))
        b = benign_report.summary["retrain_interval_first_mean"]
        a = attack_report.summary["retrain_interval_first_mean"]
        rows.append(
            {
                "axis": axis,
                "value": value,
                "benign_interval": b,
                "attack_interval": a,
                "pct_reduction": percent_reduction(b, a),
                "benign_accuracy": benign_report.summary["accuracy_initial_mean"],
                "attack_accuracy": attack_report.summary["accuracy_initial_mean"],
            }
        )
    if config.output_path:
        os.makedirs(config.output_path, exist_ok=True)
        path = os.path.join(config.output_path, "sweep.csv")
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(
                ["axis", "value", "benign_interval", "attack_interval",
                 "pct_reduction", "benign_accuracy", "attack_accuracy"]
            )
            for row in rows:
                writer.writerow([row["axis"], row["value"]] + [
                    _fmt(row[k]) for k in (
                        "benign_interval", "attack_interval", "pct_reduction",
                        "benign_accuracy", "attack_accuracy")
                ])
    return rows
