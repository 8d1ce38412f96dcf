"""Desk-scale classifiers and the three-set evaluation protocol.

Models are deliberately small and exactly reproducible: nearest centroid on
standardized features, brute-force k-NN on raw features (the leakage probe),
and a linear softmax head trained by full-batch gradient descent. Every
report carries its confusion matrix, so protocol identities (full-scene
confusion equals the cellwise sum of the train, val, and test parts) can be
checked exactly.

Percent-scale conventions: overall accuracy is 100 * trace / total, average
accuracy is the mean per-class recall over classes that appear in the truth,
and kappa is scaled to [-100, 100].
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

import numpy as np

from .core import ConfigError, GroundTruth, HSICube, PatchSpec, ValidationError
from .patching import extract_patch, flatten_patch
from .splitting import SplitIndices

FEATURE_KINDS = ("spectrum", "patch")


class DivergenceError(RuntimeError):
    """Softmax training produced a non-finite loss or gradient."""

    def __init__(self, epoch: int, learning_rate: float):
        super().__init__(
            f"training diverged at epoch {epoch} with learning rate {learning_rate}; "
            "reduce the learning rate or increase the L2 penalty"
        )
        self.epoch = epoch
        self.learning_rate = learning_rate


def features_for(
    cube: HSICube,
    gt: GroundTruth,
    indices: Sequence[int],
    kind: str,
    spec: PatchSpec,
) -> np.ndarray:
    """Build the (n, d) float64 feature matrix for the given pixel indices.

    "spectrum" uses the raw band vector; "patch" uses the flattened padded
    window around each pixel, so d = window^2 * bands.
    """
    if kind not in FEATURE_KINDS:
        raise ConfigError(f"unknown feature kind {kind!r}; expected one of {FEATURE_KINDS}")
    if kind == "spectrum":
        flat = cube.values.reshape(-1, cube.bands)
        return flat[np.asarray(indices, dtype=np.int64)].astype(np.float64)
    rows = [
        flatten_patch(extract_patch(cube, gt, *divmod(int(i), cube.cols), spec))
        for i in indices
    ]
    out = np.empty((len(rows), spec.window * spec.window * cube.bands), dtype=np.float64)
    for i, r in enumerate(rows):
        out[i] = r
    return out


def labels_at(gt: GroundTruth, indices: Sequence[int]) -> np.ndarray:
    return gt.labels.ravel()[np.asarray(indices, dtype=np.int64)].astype(np.int64)


@dataclass(frozen=True)
class Standardizer:
    """Per-feature affine map fitted on training data only."""

    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, x: np.ndarray) -> "Standardizer":
        mean = x.mean(axis=0)
        std = x.std(axis=0)
        std = np.where(std == 0.0, 1.0, std)  # constant features pass through centered
        return cls(mean=mean, std=std)

    def apply(self, x: np.ndarray) -> np.ndarray:
        return (x - self.mean) / self.std


def _check_features(model_dim: int, x: np.ndarray, what: str) -> None:
    if x.ndim != 2 or x.shape[1] != model_dim:
        raise ConfigError(
            f"{what} expects feature dimension {model_dim}, got shape {x.shape}; "
            "feature kind or window does not match the fitted model"
        )


@dataclass(frozen=True)
class CentroidModel:
    """Nearest class mean in standardized feature space; ties pick the smaller label."""

    labels: np.ndarray  # (k,) ascending class labels
    centroids: np.ndarray  # (k, d), standardized space
    scaler: Standardizer
    feature_kind: str

    @property
    def dim(self) -> int:
        return self.centroids.shape[1]

    def predict(self, features: np.ndarray) -> np.ndarray:
        _check_features(self.dim, features, "centroid model")
        z = self.scaler.apply(features)
        d2 = ((z[:, None, :] - self.centroids[None, :, :]) ** 2).sum(axis=2)
        return self.labels[np.argmin(d2, axis=1)]  # argmin keeps the first (smallest label)


def fit_centroid(features: np.ndarray, labels: np.ndarray, feature_kind: str) -> CentroidModel:
    classes = np.unique(labels)
    if classes.size < 2:
        raise ValidationError("centroid fit needs at least two classes")
    scaler = Standardizer.fit(features)
    z = scaler.apply(features)
    centroids = np.stack([z[labels == c].mean(axis=0) for c in classes])
    return CentroidModel(
        labels=classes.astype(np.int64), centroids=centroids,
        scaler=scaler, feature_kind=feature_kind,
    )


@dataclass(frozen=True)
class KnnModel:
    """Brute-force k nearest neighbors on raw, unstandardized features.

    Kept unstandardized on purpose: with k=1 and overlapping patch windows
    it reproduces memorized training content, which is exactly the leakage
    signal the overlap harness is meant to expose.

    Tie policy, fully deterministic: neighbor order is stable argsort by
    (distance, training index); the vote winner is the majority label, vote
    ties resolved by smaller summed neighbor distance, then smaller label.
    """

    train_features: np.ndarray  # (n, d) float64
    train_labels: np.ndarray  # (n,) int64
    k: int
    feature_kind: str

    @property
    def dim(self) -> int:
        return self.train_features.shape[1]

    @property
    def labels(self) -> np.ndarray:
        return np.unique(self.train_labels)

    def predict(self, features: np.ndarray) -> np.ndarray:
        _check_features(self.dim, features, "k-NN model")
        t = self.train_features
        # squared distances, clipped since cancellation can go slightly negative
        d2 = (
            (features * features).sum(axis=1)[:, None]
            - 2.0 * features @ t.T
            + (t * t).sum(axis=1)[None, :]
        )
        np.maximum(d2, 0.0, out=d2)
        order = np.argsort(d2, axis=1, kind="stable")[:, : self.k]
        out = np.empty(features.shape[0], dtype=np.int64)
        for i in range(features.shape[0]):
            votes: dict[int, int] = {}
            dist_sum: dict[int, float] = {}
            for j in order[i]:
                lab = int(self.train_labels[j])
                votes[lab] = votes.get(lab, 0) + 1
                dist_sum[lab] = dist_sum.get(lab, 0.0) + math.sqrt(float(d2[i, j]))
            out[i] = min(votes, key=lambda lab: (-votes[lab], dist_sum[lab], lab))
        return out


def fit_knn(features: np.ndarray, labels: np.ndarray, k: int, feature_kind: str) -> KnnModel:
    if k < 1:
        raise ConfigError(f"k must be >= 1, got {k}")
    if k > features.shape[0]:
        raise ConfigError(f"k={k} exceeds the {features.shape[0]} training samples")
    return KnnModel(
        train_features=np.ascontiguousarray(features, dtype=np.float64),
        train_labels=np.asarray(labels, dtype=np.int64),
        k=k,
        feature_kind=feature_kind,
    )


@dataclass(frozen=True)
class SoftmaxModel:
    """Linear softmax head over standardized features."""

    labels: np.ndarray  # (k,) ascending class labels
    weights: np.ndarray  # (k, d)
    bias: np.ndarray  # (k,)
    scaler: Standardizer
    feature_kind: str

    @property
    def dim(self) -> int:
        return self.weights.shape[1]

    def predict(self, features: np.ndarray) -> np.ndarray:
        probs = softmax_forward(self, features)
        return self.labels[np.argmax(probs, axis=1)]  # argmax keeps the first (smallest label)


def _softmax_rows(z: np.ndarray) -> np.ndarray:
    shifted = z - z.max(axis=1, keepdims=True)  # max shift keeps exp finite
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def softmax_forward(model: SoftmaxModel, features: np.ndarray) -> np.ndarray:
    """Class probabilities for raw feature rows (a single vector is accepted)."""
    single = features.ndim == 1
    x = features[None, :] if single else features
    _check_features(model.dim, x, "softmax model")
    z = model.scaler.apply(x) @ model.weights.T + model.bias
    p = _softmax_rows(z)
    return p[0] if single else p


def softmax_loss_grad(
    model: SoftmaxModel,
    features: np.ndarray,
    labels: np.ndarray,
    l2: float,
) -> tuple[float, np.ndarray, np.ndarray]:
    """Mean cross-entropy plus (l2 / 2) * ||W||^2 and its exact gradient.

    The penalty applies to the weights only, never the bias. Returns
    (loss, dW, db).
    """
    _check_features(model.dim, features, "softmax loss")
    x = model.scaler.apply(features)
    n = x.shape[0]
    positions = np.searchsorted(model.labels, labels)
    if positions.max(initial=0) >= model.labels.size or not np.array_equal(
        model.labels[positions], labels
    ):
        raise ValidationError("labels outside the model's class set")
    # overflow is allowed to produce inf/nan here; the training loop treats
    # any non-finite loss or gradient as divergence
    with np.errstate(over="ignore", invalid="ignore"):
        z = x @ model.weights.T + model.bias
        shifted = z - z.max(axis=1, keepdims=True)
        # log-sum-exp keeps the loss finite even when a probability underflows
        log_p = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
        p = np.exp(log_p)
        loss = -float(log_p[np.arange(n), positions].mean())
        loss += 0.5 * l2 * float((model.weights ** 2).sum())
        dz = p.copy()
        dz[np.arange(n), positions] -= 1.0
        dz /= n
        dw = dz.T @ x + l2 * model.weights
        db = dz.sum(axis=0)
    return loss, dw, db


@dataclass(frozen=True)
class EpochStat:
    epoch: int
    train_loss: float
    val_accuracy: float  # percent


def train_softmax(
    train_features: np.ndarray,
    train_labels: np.ndarray,
    val_features: np.ndarray,
    val_labels: np.ndarray,
    *,
    epochs: int,
    learning_rate: float,
    l2: float,
    seed: int,
    feature_kind: str,
) -> tuple[SoftmaxModel, list[EpochStat]]:
    """Full-batch gradient descent, returning the best-validation snapshot.

    The kept model is the one with the highest validation accuracy seen
    during training; ties keep the earliest epoch. Non-finite loss or
    gradients abort with DivergenceError naming the epoch and learning rate.
    """
    classes = np.unique(train_labels)
    if classes.size < 2:
        raise ValidationError("softmax fit needs at least two classes")
    scaler = Standardizer.fit(train_features)
    rng = np.random.default_rng(seed)
    d = train_features.shape[1]
    model = SoftmaxModel(
        labels=classes.astype(np.int64),
        weights=0.01 * rng.standard_normal((classes.size, d)),
        bias=np.zeros(classes.size),
        scaler=scaler,
        feature_kind=feature_kind,
    )
    best = model
    best_acc = overall_accuracy(val_labels, model.predict(val_features))
    curve: list[EpochStat] = []
    for epoch in range(1, epochs + 1):
        loss, dw, db = softmax_loss_grad(model, train_features, train_labels, l2)
        if not (math.isfinite(loss) and np.isfinite(dw).all() and np.isfinite(db).all()):
            raise DivergenceError(epoch, learning_rate)
        model = replace(
            model,
            weights=model.weights - learning_rate * dw,
            bias=model.bias - learning_rate * db,
        )
        val_acc = overall_accuracy(val_labels, model.predict(val_features))
        curve.append(EpochStat(epoch=epoch, train_loss=loss, val_accuracy=val_acc))
        if val_acc > best_acc:
            best_acc = val_acc
            best = model
    return best, curve


@dataclass(frozen=True)
class ConfusionMatrix:
    """Integer confusion counts; rows are true classes, columns predictions."""

    labels: tuple[int, ...]
    cells: np.ndarray  # (k, k) int64

    @property
    def total(self) -> int:
        return int(self.cells.sum())


def confusion(
    true_labels: Sequence[int],
    predicted_labels: Sequence[int],
    classes: int | Iterable[int],
) -> ConfusionMatrix:
    """Count (true, predicted) pairs; an int class argument means labels 1..k."""
    t = np.asarray(true_labels, dtype=np.int64)
    p = np.asarray(predicted_labels, dtype=np.int64)
    if t.shape != p.shape or t.ndim != 1:
        raise ValidationError(f"label arrays must be equal-length 1-d, got {t.shape} and {p.shape}")
    if isinstance(classes, int):
        classes = range(1, classes + 1)
    labels = tuple(sorted(int(c) for c in classes))
    if len(labels) != len(set(labels)) or not labels:
        raise ValidationError("class list must be non-empty and free of duplicates")
    pos = {c: i for i, c in enumerate(labels)}
    cells = np.zeros((len(labels), len(labels)), dtype=np.int64)
    for ti, pi in zip(t.tolist(), p.tolist()):
        if ti not in pos or pi not in pos:
            raise ValidationError(f"label outside the class set: true={ti}, predicted={pi}")
        cells[pos[ti], pos[pi]] += 1
    return ConfusionMatrix(labels=labels, cells=cells)


def overall_accuracy(true_labels: Sequence[int], predicted_labels: Sequence[int]) -> float:
    t = np.asarray(true_labels)
    p = np.asarray(predicted_labels)
    if t.size == 0:
        raise ValidationError("cannot score an empty set")
    return 100.0 * float((t == p).sum()) / t.size


@dataclass(frozen=True)
class ClassMetrics:
    label: int
    support: int  # true samples (row sum)
    predicted: int  # predicted samples (column sum)
    correct: int  # diagonal cell
    recall: float | None  # percent; None when the class has no true samples
    precision: float | None  # percent; None when never predicted
    f1: float | None  # percent; None when recall and precision are both undefined


@dataclass(frozen=True)
class EvalMetrics:
    oa: float  # percent
    aa: float  # percent, mean recall over classes with support
    kappa: float  # [-100, 100]
    degenerate_kappa: bool  # expected agreement was exactly 1
    per_class: tuple[ClassMetrics, ...]


def metrics(cm: ConfusionMatrix) -> EvalMetrics:
    """Exact percent-scale metrics from integer confusion counts.

    Kappa uses rational arithmetic, so the only rounding is the final float
    conversion. When expected agreement is exactly 1 (all mass in one
    row/column pair) kappa's denominator vanishes; that case is flagged and
    scored 100 for perfect agreement, 0 otherwise.
    """
    total = cm.total
    if total == 0:
        raise ValidationError("confusion matrix is empty")
    cells = cm.cells
    k = len(cm.labels)
    diag = int(np.trace(cells))
    row_sums = cells.sum(axis=1)
    col_sums = cells.sum(axis=0)

    per_class: list[ClassMetrics] = []
    recalls: list[Fraction] = []
    for i, label in enumerate(cm.labels):
        support = int(row_sums[i])
        predicted = int(col_sums[i])
        correct = int(cells[i, i])
        recall = Fraction(100 * correct, support) if support else None
        precision = Fraction(100 * correct, predicted) if predicted else None
        if recall is not None:
            recalls.append(recall)
        if recall is not None and precision is not None and (recall or precision):
            f1 = 2 * recall * precision / (recall + precision)
        elif recall == 0 or precision == 0:
            f1 = Fraction(0)
        else:
            f1 = None
        per_class.append(ClassMetrics(
            label=label, support=support, predicted=predicted, correct=correct,
            recall=None if recall is None else float(recall),
            precision=None if precision is None else float(precision),
            f1=None if f1 is None else float(f1),
        ))
    if not recalls:
        raise ValidationError("no class has any true sample")

    p_o = Fraction(diag, total)
    expected = sum(int(row_sums[i]) * int(col_sums[i]) for i in range(k))
    p_e = Fraction(expected, total * total)
    if p_e == 1:
        kappa = Fraction(100) if p_o == 1 else Fraction(0)
        degenerate = True
    else:
        kappa = 100 * (p_o - p_e) / (1 - p_e)
        degenerate = False
    return EvalMetrics(
        oa=float(100 * p_o),
        aa=float(sum(recalls) / len(recalls)),
        kappa=float(kappa),
        degenerate_kappa=degenerate,
        per_class=tuple(per_class),
    )


@dataclass(frozen=True)
class EvalReport:
    set_name: str  # "val", "test", "full", or a harness-specific name
    sample_count: int
    metrics: EvalMetrics
    cm: ConfusionMatrix
    wall_time_seconds: float  # featurize + predict, fitting excluded
    flags: tuple[str, ...] = ()


def _predict_chunked(model, features: np.ndarray, threads: int) -> np.ndarray:
    if threads <= 1 or features.shape[0] < 2 * threads:
        return model.predict(features)
    chunks = np.array_split(np.arange(features.shape[0]), threads)
    with ThreadPoolExecutor(max_workers=threads) as pool:
        parts = list(pool.map(lambda ix: model.predict(features[ix]), chunks))
    return np.concatenate(parts)


def predict_indices(
    model,
    cube: HSICube,
    gt: GroundTruth,
    indices: Sequence[int],
    spec: PatchSpec,
    threads: int = 1,
) -> np.ndarray:
    features = features_for(cube, gt, indices, model.feature_kind, spec)
    return _predict_chunked(model, features, threads)


def evaluate_set(
    model,
    cube: HSICube,
    gt: GroundTruth,
    indices: Sequence[int],
    spec: PatchSpec,
    set_name: str,
    *,
    true_labels: np.ndarray | None = None,
    flags: tuple[str, ...] = (),
    threads: int = 1,
) -> EvalReport:
    """Score one index set; wall time covers featurization and prediction."""
    if len(indices) == 0:
        raise ValidationError(f"evaluation set {set_name!r} is empty")
    start = time.perf_counter()
    features = features_for(cube, gt, indices, model.feature_kind, spec)
    predictions = _predict_chunked(model, features, threads)
    elapsed = time.perf_counter() - start
    truth = labels_at(gt, indices) if true_labels is None else np.asarray(true_labels)
    cm = confusion(truth, predictions, model.labels.tolist())
    return EvalReport(
        set_name=set_name,
        sample_count=len(indices),
        metrics=metrics(cm),
        cm=cm,
        wall_time_seconds=elapsed,
        flags=flags,
    )


@dataclass(frozen=True)
class ProtocolReports:
    """The three-set protocol: disjoint val, disjoint test, full labeled scene."""

    val: EvalReport
    test: EvalReport
    full: EvalReport

    def as_list(self) -> list[EvalReport]:
        return [self.val, self.test, self.full]


def evaluate_protocol(
    model,
    cube: HSICube,
    gt: GroundTruth,
    splits: SplitIndices,
    spec: PatchSpec,
    threads: int = 1,
) -> ProtocolReports:
    """Produce the val / test / full-labeled-scene reports for a fitted model.

    The full pass scores every labeled pixel of the scene, training pixels
    included; its report is flagged accordingly, since that number is the
    optimistic one the disjoint test set is meant to correct.
    """
    full_indices = np.flatnonzero(gt.labels.ravel()).tolist()
    return ProtocolReports(
        val=evaluate_set(model, cube, gt, splits.val_indices(), spec, "val", threads=threads),
        test=evaluate_set(model, cube, gt, splits.test_indices(), spec, "test", threads=threads),
        full=evaluate_set(
            model, cube, gt, full_indices, spec, "full",
            flags=("includes training pixels",), threads=threads,
        ),
    )


OVERLAP_WATERMARK = "OVERLAP MODE: evaluation set includes training pixels"


@dataclass(frozen=True)
class OverlapEvalResult:
    """Deliberately contaminated evaluation next to its honest counterpart."""

    report: EvalReport  # test set plus reused training pixels, watermarked
    honest: EvalReport  # the clean disjoint test set
    reused_count: int
    reused_oa: float  # percent accuracy on the reused training pixels alone
    fresh_oa: float  # percent accuracy on the honest part of the mixed set


def evaluate_with_training_reuse(
    model,
    cube: HSICube,
    gt: GroundTruth,
    splits: SplitIndices,
    spec: PatchSpec,
    reuse_fraction: float,
    seed: int,
    threads: int = 1,
) -> OverlapEvalResult:
    """Append a seeded sample of training pixels to the test set and score it.

    This is the inflation demonstration: a model that memorizes its training
    data scores perfectly on the reused portion, so the mixed number exceeds
    the honest one whenever the honest accuracy is below 100 percent.
    """
    if not 0.0 < reuse_fraction <= 1.0:
        raise ConfigError(f"reuse fraction must be in (0, 1], got {reuse_fraction}")
    train = splits.train_indices()
    test = splits.test_indices()
    reuse_count = max(1, math.ceil(reuse_fraction * len(train)))
    rng = np.random.default_rng(seed)
    reused = [int(i) for i in rng.choice(np.asarray(train, dtype=np.int64),
                                         size=reuse_count, replace=False)]

    # each subset is featurized and predicted once; the mixed report reuses
    # both segments, so its wall time is the sum of the segment times
    honest = evaluate_set(model, cube, gt, test, spec, "test", threads=threads)
    start = time.perf_counter()
    reused_features = features_for(cube, gt, reused, model.feature_kind, spec)
    reused_preds = _predict_chunked(model, reused_features, threads)
    reused_elapsed = time.perf_counter() - start
    reused_truth = labels_at(gt, reused)

    reused_cm = confusion(reused_truth, reused_preds, list(honest.cm.labels))
    mixed_cm = ConfusionMatrix(labels=honest.cm.labels, cells=honest.cm.cells + reused_cm.cells)
    report = EvalReport(
        set_name="test+reused",
        sample_count=len(test) + reuse_count,
        metrics=metrics(mixed_cm),
        cm=mixed_cm,
        wall_time_seconds=honest.wall_time_seconds + reused_elapsed,
        flags=(OVERLAP_WATERMARK,),
    )
    return OverlapEvalResult(
        report=report,
        honest=honest,
        reused_count=reuse_count,
        reused_oa=overall_accuracy(reused_truth, reused_preds),
        fresh_oa=honest.metrics.oa,
    )


def report_to_dict(report: EvalReport) -> dict:
    """JSON-ready view of a report; confusion cells included row-major."""
    return {
        "set": report.set_name,
        "samples": report.sample_count,
        "oa": report.metrics.oa,
        "aa": report.metrics.aa,
        "kappa": report.metrics.kappa,
        "degenerate_kappa": report.metrics.degenerate_kappa,
        "wall_time_seconds": report.wall_time_seconds,
        "flags": list(report.flags),
        "labels": list(report.cm.labels),
        "confusion": report.cm.cells.tolist(),
        "per_class": [
            {
                "label": c.label,
                "support": c.support,
                "predicted": c.predicted,
                "correct": c.correct,
                "recall": c.recall,
                "precision": c.precision,
                "f1": c.f1,
            }
            for c in report.metrics.per_class
        ],
    }


def _fmt(value: float | None) -> str:
    return "-" if value is None else f"{value:.2f}"


def format_report_table(reports: Sequence[EvalReport]) -> str:
    """Plain-text table: one recall column per report, then the summary rows."""
    header = ["class"] + [r.set_name for r in reports]
    labels = reports[0].cm.labels
    rows = [header]
    for i, label in enumerate(labels):
        row = [str(label)]
        for r in reports:
            if r.cm.labels != labels:
                raise ValidationError("reports disagree on the class set")
            row.append(_fmt(r.metrics.per_class[i].recall))
        rows.append(row)
    for name, pick in (
        ("Kappa", lambda r: r.metrics.kappa),
        ("OA", lambda r: r.metrics.oa),
        ("AA", lambda r: r.metrics.aa),
        ("Time(s)", lambda r: r.wall_time_seconds),
    ):
        rows.append([name] + [f"{pick(r):.2f}" for r in reports])
    widths = [max(len(row[i]) for row in rows) for i in range(len(header))]
    lines = ["  ".join(cell.rjust(w) for cell, w in zip(row, widths)) for row in rows]
    flagged = [f"[{r.set_name}] {flag}" for r in reports for flag in r.flags]
    return "\n".join(lines + flagged)


def curve_csv(curve: Sequence[EpochStat]) -> str:
    lines = ["epoch,train_loss,val_accuracy"]
    for s in curve:
        lines.append(f"{s.epoch},{s.train_loss!r},{s.val_accuracy!r}")
    return "\n".join(lines) + "\n"
