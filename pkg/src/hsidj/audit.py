"""Split integrity verification and spatial patch-overlap leakage measurement.

Index-level disjointness does not make patch windows disjoint: two distinct
pixels closer than the window size share raster cells, so a test patch can
contain training pixels. `verify_disjoint` checks the index-level contract;
`leakage_report` quantifies the residual window overlap that survives it.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import GroundTruth, PatchSpec
from .splitting import SplitIndices, split_counts, ClassTooSmallError

_MAX_LISTED = 10  # offending indices quoted per violation message


@dataclass
class DisjointCheck:
    """Outcome of the index-level split verification; all violations listed."""

    train_val_disjoint: bool = True
    train_test_disjoint: bool = True
    val_test_disjoint: bool = True
    union_complete: bool = True
    labels_consistent: bool = True
    counts_match: bool = True
    violations: list[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.violations


def _clip(indices) -> str:
    listed = sorted(indices)[:_MAX_LISTED]
    suffix = ", ..." if len(indices) > _MAX_LISTED else ""
    return f"{listed}{suffix} ({len(indices)} total)"


def verify_disjoint(s: SplitIndices, gt: GroundTruth) -> DisjointCheck:
    """Check pairwise emptiness, completeness, label consistency, and counts.

    Violations are collected into the returned report rather than raised, so
    a broken split is described in full.
    """
    check = DisjointCheck()
    train = set(s.train_indices())
    val = set(s.val_indices())
    test = set(s.test_indices())

    for name, attr, a, b in (
        ("train/val", "train_val_disjoint", train, val),
        ("train/test", "train_test_disjoint", train, test),
        ("val/test", "val_test_disjoint", val, test),
    ):
        both = a & b
        if both:
            setattr(check, attr, False)
            check.violations.append(f"{name} intersection is not empty: {_clip(both)}")

    flattened = gt.labels.ravel()
    labeled = {int(i) for i in range(flattened.size) if flattened[i] != 0}
    union = train | val | test
    missing = labeled - union
    extra = union - labeled
    if missing:
        check.union_complete = False
        check.violations.append(f"labeled pixels not covered by any set: {_clip(missing)}")
    if extra:
        check.union_complete = False
        check.violations.append(f"split indexes pixels outside the labeled set: {_clip(extra)}")

    per_class_sizes: dict[int, int] = {}
    for c in s.classes:
        # out-of-range indices count as wrong rather than crashing the audit
        wrong = [
            i
            for i in c.train + c.val + c.test
            if not 0 <= i < flattened.size or int(flattened[i]) != c.label
        ]
        if wrong:
            check.labels_consistent = False
            check.violations.append(
                f"class {c.label}: indices with a different ground-truth label: {_clip(wrong)}"
            )
        per_class_sizes[c.label] = int((flattened == c.label).sum())

    for c in s.classes:
        n = per_class_sizes[c.label]
        try:
            tr, va, te = split_counts(n, s.test_ratio, s.val_ratio)
        except ClassTooSmallError as exc:
            check.counts_match = False
            check.violations.append(f"class {c.label}: {exc}")
            continue
        got = (len(c.train), len(c.val), len(c.test))
        if got != (tr, va, te):
            check.counts_match = False
            check.violations.append(
                f"class {c.label}: counts {got} do not match the ({tr}, {va}, {te}) "
                f"required by n={n}, test_ratio={s.test_ratio}, val_ratio={s.val_ratio}"
            )
    return check


def shared_pixels(c1: tuple[int, int], c2: tuple[int, int], spec: PatchSpec) -> int:
    """Number of raster cells the windows centered at c1 and c2 share."""
    ws = spec.window
    dr = abs(c1[0] - c2[0])
    dc = abs(c1[1] - c2[1])
    return max(0, ws - dr) * max(0, ws - dc)


@dataclass(frozen=True)
class OverlapStats:
    """Window-overlap summary of one evaluation set against the training set."""

    eval_total: int
    overlapping: int  # eval patches sharing >= 1 cell with some train patch
    fraction: float
    # mean over eval patches of (window cells covered by any train window) / window^2
    mean_shared_fraction: float
    # worst (eval index, train index, shared cells) pairs: for each eval patch
    # its largest single-pair share (smaller train index on ties), top_k kept
    worst: list[tuple[int, int, int]]


@dataclass(frozen=True)
class LeakageReport:
    window: int
    index_disjoint: tuple[bool, bool, bool]  # train/val, train/test, val/test
    union_complete: bool | None  # None when no ground truth was supplied
    counts_match: bool | None
    test_vs_train: OverlapStats
    val_vs_train: OverlapStats


def _overlap_stats(
    eval_indices: list[int],
    train_cells: dict[tuple[int, int], list[tuple[int, int, int]]],
    cols: int,
    spec: PatchSpec,
    top_k: int,
) -> OverlapStats:
    ws = spec.window
    overlapping = 0
    coverage_sum = 0.0
    best_pairs: list[tuple[int, int, int]] = []
    mask = np.zeros((ws, ws), dtype=bool)
    for idx in eval_indices:
        r, c = divmod(idx, cols)
        cell_r, cell_c = r // ws, c // ws
        best_shared = 0
        best_train = -1
        mask[:] = False
        for gr in (cell_r - 1, cell_r, cell_r + 1):
            for gc in (cell_c - 1, cell_c, cell_c + 1):
                for tr_r, tr_c, tr_idx in train_cells.get((gr, gc), ()):
                    dr = abs(r - tr_r)
                    dc = abs(c - tr_c)
                    if dr >= ws or dc >= ws:
                        continue
                    shared = (ws - dr) * (ws - dc)
                    if shared > best_shared or (shared == best_shared and tr_idx < best_train):
                        best_shared = shared
                        best_train = tr_idx
                    # intersection rectangle in the eval window's local frame
                    r0 = max(0, tr_r - r)
                    c0 = max(0, tr_c - c)
                    mask[r0 : r0 + ws - dr, c0 : c0 + ws - dc] = True
        if best_shared > 0:
            overlapping += 1
            coverage_sum += float(mask.sum()) / (ws * ws)
            best_pairs.append((idx, best_train, best_shared))
    best_pairs.sort(key=lambda t: (-t[2], t[0]))
    total = len(eval_indices)
    return OverlapStats(
        eval_total=total,
        overlapping=overlapping,
        fraction=overlapping / total if total else 0.0,
        mean_shared_fraction=coverage_sum / total if total else 0.0,
        worst=best_pairs[:top_k],
    )


def leakage_report(
    s: SplitIndices,
    spec: PatchSpec,
    gt: GroundTruth | None = None,
    top_k: int = 10,
) -> LeakageReport:
    """Measure window overlap of test and validation patches with train patches.

    Overlap means sharing at least one raster cell, i.e. Chebyshev distance
    between centers below the window size. Training centers are bucketed into
    a grid of window-sized cells, so each evaluated patch only inspects its
    3x3 cell neighborhood instead of every training center. Expects an
    index-disjoint split (see verify_disjoint); the disjointness triple is
    recomputed for the report header, and the completeness and count checks
    are filled in when the ground truth is supplied.
    """
    train = s.train_indices()
    val = s.val_indices()
    test = s.test_indices()
    train_set, val_set, test_set = set(train), set(val), set(test)
    ws = spec.window
    cols = s.cols

    union_complete: bool | None = None
    counts_match: bool | None = None
    if gt is not None:
        check = verify_disjoint(s, gt)
        union_complete = check.union_complete
        counts_match = check.counts_match

    train_cells: dict[tuple[int, int], list[tuple[int, int, int]]] = {}
    for idx in train:
        r, c = divmod(idx, cols)
        train_cells.setdefault((r // ws, c // ws), []).append((r, c, idx))

    return LeakageReport(
        window=ws,
        index_disjoint=(
            not (train_set & val_set),
            not (train_set & test_set),
            not (val_set & test_set),
        ),
        union_complete=union_complete,
        counts_match=counts_match,
        test_vs_train=_overlap_stats(test, train_cells, cols, spec, top_k),
        val_vs_train=_overlap_stats(val, train_cells, cols, spec, top_k),
    )
