"""Class balancing by interpolation, optionally gated by curve similarity.

Plain SMOTE draws synthetic minority rows on segments between real rows and
their nearest neighbours. The curve-gated variant generates whole batches
and only keeps a batch if the principal curve of (minority + batch) stays
cosine-similar to the raw minority curve, so balancing cannot bend the
distribution's one-dimensional summary.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .curve import CurveConfig, curve_cosine_similarity, fit_curve
from .errors import CannotInterpolateError
from .rng import named_rng


@dataclass(frozen=True)
class SmoteConfig:
    k_neighbors: int = 5
    fix_column: int | None = None  # index of the 0/1 fix flag, if present


@dataclass(frozen=True)
class SmotePcConfig:
    similarity_threshold: float = 0.95
    max_rejects: int = 50
    batch_fraction: float = 0.25
    resample_points: int = 100
    smote: SmoteConfig = field(default_factory=SmoteConfig)
    curve: CurveConfig = field(default_factory=CurveConfig)

    def __post_init__(self) -> None:
        if not 0.0 < self.batch_fraction <= 1.0:
            raise ValueError(f"batch_fraction must be in (0, 1], got {self.batch_fraction}")
        if not -1.0 <= self.similarity_threshold <= 1.0:
            raise ValueError("similarity_threshold must be in [-1, 1]")
        if self.max_rejects < 1:
            raise ValueError("max_rejects must be >= 1")


@dataclass(frozen=True)
class BalancedSet:
    """Original rows (input order) followed by synthetic rows per class."""

    features: np.ndarray  # (N, m)
    labels: np.ndarray  # (N,)
    synthetic: np.ndarray  # (N,) bool
    base_index: np.ndarray  # (N,) original-row index each row derives from
    per_class_counts: dict[int, int]
    curve_similarity: float  # raw-minority curve vs final augmented curve
    rejected_batches: int
    relaxed_threshold: float | None  # lowest gate used, when decay engaged

    def __len__(self) -> int:
        return len(self.labels)


def _neighbor_table(points: np.ndarray, k_neighbors: int) -> np.ndarray:
    """Indices (n, k) of each row's k nearest Euclidean neighbours, self
    excluded, distance ties broken by row order."""
    n = len(points)
    k = min(k_neighbors, n - 1)
    sq = np.sum(points**2, axis=1)
    dist = sq[:, None] + sq[None, :] - 2.0 * (points @ points.T)
    np.fill_diagonal(dist, np.inf)
    order = np.argsort(dist, axis=1, kind="stable")
    return order[:, :k]


def _vote_fix(
    synth: np.ndarray, base_idx: np.ndarray, minority: np.ndarray,
    neighbors: np.ndarray, fix_column: int | None,
) -> np.ndarray:
    """Replace any interpolated fix values with the majority vote of the base
    point plus its neighbourhood; exact ties keep the base point's flag."""
    if fix_column is None or len(synth) == 0:
        return synth
    base_flag = minority[base_idx, fix_column]
    neighbor_flags = minority[neighbors[base_idx], fix_column]  # (k_needed, k)
    votes = np.column_stack([base_flag, neighbor_flags])
    mean = votes.mean(axis=1)
    out = synth.copy()
    out[:, fix_column] = np.where(mean > 0.5, 1.0, np.where(mean < 0.5, 0.0, base_flag))
    return out


def _smote_draw(
    minority: np.ndarray,
    k_needed: int,
    config: SmoteConfig,
    rng: np.random.Generator,
    neighbors: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Draw k_needed interpolants; returns (points, base_row_indices)."""
    n, m = minority.shape
    if n < 2:
        raise CannotInterpolateError(f"need at least 2 minority rows, got {n}")
    if neighbors is None:
        neighbors = _neighbor_table(minority, config.k_neighbors)
    if k_needed == 0:
        return np.empty((0, m)), np.empty(0, dtype=np.int64)
    base = np.arange(k_needed, dtype=np.int64) % n  # round-robin over rows
    pick = rng.integers(0, neighbors.shape[1], size=k_needed)
    nn = neighbors[base, pick]
    u = rng.random(k_needed)
    points = minority[base] + u[:, None] * (minority[nn] - minority[base])
    points = _vote_fix(points, base, minority, neighbors, config.fix_column)
    return points, base


def smote_sample(
    minority: np.ndarray, k_needed: int, config: SmoteConfig | None = None, seed: int = 0
) -> np.ndarray:
    """Plain SMOTE: k_needed synthetic rows interpolated between round-robin
    base rows and a uniformly chosen one of their k nearest neighbours."""
    config = config or SmoteConfig()
    minority = np.asarray(minority, dtype=np.float64)
    rng = named_rng(seed, "smote")
    points, _ = _smote_draw(minority, k_needed, config, rng)
    return points


def _majority_label(labels: np.ndarray) -> int:
    values, counts = np.unique(labels, return_counts=True)
    return int(values[np.argmax(counts)])  # ties: smaller label


def smote_balance(
    features: np.ndarray,
    labels: np.ndarray,
    config: SmoteConfig | None = None,
    seed: int = 0,
) -> BalancedSet:
    """Balance every minority class by plain interpolation, no curve gate.

    Same bookkeeping as the gated variant (originals first, then synthetic
    rows with their base-row indices); curve_similarity is NaN because no
    curve is ever fitted."""
    config = config or SmoteConfig()
    features = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if len(features) != len(labels):
        raise ValueError("features and labels disagree on length")

    major = _majority_label(labels)
    n_major = int(np.sum(labels == major))
    out_feat = [features]
    out_labels = [labels]
    out_synth = [np.zeros(len(labels), dtype=bool)]
    out_base = [np.arange(len(labels), dtype=np.int64)]
    for l in sorted(int(v) for v in np.unique(labels)):
        deficit = n_major - int(np.sum(labels == l))
        if l == major or deficit == 0:
            continue
        rows = np.flatnonzero(labels == l)
        if len(rows) < 2:
            raise CannotInterpolateError(
                f"class {l} has {len(rows)} row(s); interpolation needs at least 2"
            )
        rng = named_rng(seed, "smote-plain", l)
        synth, base = _smote_draw(features[rows], deficit, config, rng)
        out_feat.append(synth)
        out_labels.append(np.full(deficit, l, dtype=np.int64))
        out_synth.append(np.ones(deficit, dtype=bool))
        out_base.append(rows[base])

    all_labels = np.concatenate(out_labels)
    values, counts = np.unique(all_labels, return_counts=True)
    return BalancedSet(
        features=np.vstack(out_feat),
        labels=all_labels,
        synthetic=np.concatenate(out_synth),
        base_index=np.concatenate(out_base),
        per_class_counts={int(v): int(c) for v, c in zip(values, counts)},
        curve_similarity=float("nan"),
        rejected_batches=0,
        relaxed_threshold=None,
    )


def smote_pc(
    features: np.ndarray,
    labels: np.ndarray,
    config: SmotePcConfig | None = None,
    seed: int = 0,
) -> BalancedSet:
    """Balance every minority class up to the majority count, accepting each
    SMOTE batch only while the minority principal curve survives it."""
    config = config or SmotePcConfig()
    features = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if len(features) != len(labels):
        raise ValueError("features and labels disagree on length")

    major = _majority_label(labels)
    n_major = int(np.sum(labels == major))

    out_feat = [features]
    out_labels = [labels]
    out_synth = [np.zeros(len(labels), dtype=bool)]
    out_base = [np.arange(len(labels), dtype=np.int64)]
    min_similarity = 1.0
    rejected_total = 0
    relaxed: float | None = None

    for l in sorted(int(v) for v in np.unique(labels)):
        if l == major:
            continue
        rows = np.flatnonzero(labels == l)
        minority = features[rows]
        deficit = n_major - len(rows)
        if deficit == 0:
            continue
        if len(rows) < 2:
            raise CannotInterpolateError(
                f"class {l} has {len(rows)} row(s); interpolation needs at least 2"
            )

        rng = named_rng(seed, "smote", l)
        neighbors = _neighbor_table(minority, config.smote.k_neighbors)
        raw_curve, _ = fit_curve(minority, config.curve)

        batch_size = max(1, int(np.ceil(config.batch_fraction * deficit)))
        accepted: list[np.ndarray] = []
        accepted_base: list[np.ndarray] = []
        total = 0
        streak = 0
        while total < deficit:
            batch, base = _smote_draw(minority, batch_size, config.smote, rng, neighbors)
            trial_curve, _ = fit_curve(np.vstack([minority, batch]), config.curve)
            similarity = curve_cosine_similarity(
                raw_curve, trial_curve, config.resample_points
            )
            gate = config.similarity_threshold
            if streak >= config.max_rejects:
                gate -= 0.01 * (streak - config.max_rejects + 1)
                relaxed = gate if relaxed is None else min(relaxed, gate)
            if similarity >= gate:
                accepted.append(batch)
                accepted_base.append(base)
                total += len(batch)
                streak = 0
            else:
                rejected_total += 1
                streak += 1

        synth = np.vstack(accepted)
        base_rows = np.concatenate(accepted_base)
        if total > deficit:
            keep = np.sort(
                named_rng(seed, "smote-subsample", l).choice(total, deficit, replace=False)
            )
            synth = synth[keep]
            base_rows = base_rows[keep]

        final_curve, _ = fit_curve(np.vstack([minority, synth]), config.curve)
        similarity = curve_cosine_similarity(raw_curve, final_curve, config.resample_points)
        min_similarity = min(min_similarity, similarity)

        out_feat.append(synth)
        out_labels.append(np.full(deficit, l, dtype=np.int64))
        out_synth.append(np.ones(deficit, dtype=bool))
        out_base.append(rows[base_rows])

    all_labels = np.concatenate(out_labels)
    values, counts = np.unique(all_labels, return_counts=True)
    return BalancedSet(
        features=np.vstack(out_feat),
        labels=all_labels,
        synthetic=np.concatenate(out_synth),
        base_index=np.concatenate(out_base),
        per_class_counts={int(v): int(c) for v, c in zip(values, counts)},
        curve_similarity=min_similarity,
        rejected_batches=rejected_total,
        relaxed_threshold=relaxed,
    )


@dataclass(frozen=True)
class BalanceReport:
    """Pairwise curve similarities between raw, SMOTE and curve-gated data.

    scope "minority" compares curves of the minority-class cloud before and
    after augmentation, which is where balancing adds rows; scope "full"
    compares curves of the whole dataset with the label appended as an
    extra coordinate."""

    raw_vs_smote: float
    raw_vs_smotepc: float
    smote_vs_smotepc: float
    scope: str


def balance_report(
    features: np.ndarray,
    labels: np.ndarray,
    balanced: BalancedSet,
    config: SmotePcConfig | None = None,
    seed: int = 0,
    scope: str = "minority",
) -> BalanceReport:
    """Fit curves on the raw rows, a plain-SMOTE balanced copy, and the
    curve-gated result, and report their pairwise similarities."""
    if scope not in ("minority", "full"):
        raise ValueError(f"unknown scope {scope!r}")
    config = config or SmotePcConfig()
    features = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)

    major = _majority_label(labels)
    plain = smote_balance(features, labels, config.smote, seed)
    smote_feat = plain.features
    smote_labels = plain.labels
    if scope == "minority":
        keep = labels != major
        spaces = {
            "raw": features[keep],
            "smote": smote_feat[smote_labels != major],
            "smotepc": balanced.features[balanced.labels != major],
        }
    else:
        spaces = {
            "raw": np.column_stack([features, labels.astype(np.float64)]),
            "smote": np.column_stack([smote_feat, smote_labels.astype(np.float64)]),
            "smotepc": np.column_stack(
                [balanced.features, balanced.labels.astype(np.float64)]
            ),
        }
    curves = {k: fit_curve(v, config.curve)[0] for k, v in spaces.items()}
    return BalanceReport(
        raw_vs_smote=curve_cosine_similarity(
            curves["raw"], curves["smote"], config.resample_points
        ),
        raw_vs_smotepc=curve_cosine_similarity(
            curves["raw"], curves["smotepc"], config.resample_points
        ),
        smote_vs_smotepc=curve_cosine_similarity(
            curves["smote"], curves["smotepc"], config.resample_points
        ),
        scope=scope,
    )
