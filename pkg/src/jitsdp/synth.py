"""Synthetic changeset generators with planted, known structure.

Three families: a curved-manifold imbalance fixture for the balancer, a
Markov label process for history-signal checks, and feature-linear datasets
whose concept rotates or flips over time for drift/incremental checks.
Generated metric values are shifted to stay nonnegative, so the usual
log transform should be disabled when consuming them.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import DEFAULT_FEATURES, ChangeMetrics, Changeset, Dataset
from .rng import named_rng

_METRIC_SHIFT = 6.0  # keeps N(0,1) latent features comfortably nonnegative


@dataclass(frozen=True)
class ManifoldConfig:
    n_total: int = 2000
    minority_fraction: float = 1.0 / 11.0  # 10:1 majority:minority
    amplitude: float = 3.0
    periods: float = 6.0
    x_scale: float = 0.45
    majority_periods: float = 2.0  # majority occupies [0, majority_periods]
    minority_start_period: float = 2.0  # minority occupies [start, periods]
    noise: float = 0.1


def manifold_imbalance(
    config: ManifoldConfig | None = None, seed: int = 0
) -> tuple[np.ndarray, np.ndarray]:
    """2-D fixture: both classes live on one folded sine path
    (x_scale * t, A sin t). The majority sits densely on the head of the
    path; the minority is spread thin over the folded tail, so interpolation
    between minority neighbours can cut across those folds while the overall
    cloud keeps a well-defined one-dimensional shape. Returns
    (features, labels) with rows shuffled deterministically."""
    config = config or ManifoldConfig()
    rng = named_rng(seed, "manifold")
    n_min = int(round(config.n_total * config.minority_fraction))
    n_maj = config.n_total - n_min
    maj_end = config.majority_periods * 2.0 * np.pi
    min_start = config.minority_start_period * 2.0 * np.pi
    end = config.periods * 2.0 * np.pi

    def on_path(t: np.ndarray) -> np.ndarray:
        pts = np.column_stack([config.x_scale * t, config.amplitude * np.sin(t)])
        return pts + rng.normal(0.0, config.noise, pts.shape)

    features = np.vstack(
        [
            on_path(np.sort(rng.uniform(0.0, maj_end, n_maj))),
            on_path(np.sort(rng.uniform(min_start, end, n_min))),
        ]
    )
    labels = np.concatenate([np.zeros(n_maj, dtype=np.int64), np.ones(n_min, dtype=np.int64)])
    order = rng.permutation(len(labels))
    return features[order], labels[order]


def _latent_to_dataset(
    latent: np.ndarray, labels: np.ndarray, project: str, start_ts: int = 1_600_000_000
) -> Dataset:
    """Wrap an (n, 14) latent matrix as changesets: 13 continuous metrics
    shifted nonnegative plus the fix flag from the latent sign."""
    n = len(latent)
    fix_col = DEFAULT_FEATURES.index("fix")
    rows = []
    for i in range(n):
        values = {
            name: float(max(0.0, _METRIC_SHIFT + latent[i, k]))
            for k, name in enumerate(DEFAULT_FEATURES)
            if name != "fix"
        }
        rows.append(
            Changeset(
                id=f"c{i:06d}",
                timestamp=start_ts + i * 3600,
                metrics=ChangeMetrics(fix=bool(latent[i, fix_col] > 0.0), **values),
                label=int(labels[i]),
            )
        )
    return Dataset(changesets=tuple(rows), project=project)


def markov_dataset(
    n: int,
    p_defect_after_defect: float = 0.9,
    p_defect_after_clean: float = 0.1,
    seed: int = 0,
) -> Dataset:
    """Labels follow a two-state Markov chain; features are pure noise, so
    any predictive signal must come from label history."""
    rng = named_rng(seed, "markov")
    labels = np.empty(n, dtype=np.int64)
    labels[0] = int(rng.random() < 0.5)
    draws = rng.random(n)
    for i in range(1, n):
        p = p_defect_after_defect if labels[i - 1] == 1 else p_defect_after_clean
        labels[i] = int(draws[i] < p)
    latent = rng.normal(0.0, 1.0, (n, len(DEFAULT_FEATURES)))
    return _latent_to_dataset(latent, labels, project=f"markov-{seed}")


def drifting_dataset(
    n: int,
    drift_start_fraction: float = 0.6,
    total_rotation_deg: float = 240.0,
    separation: float = 3.0,
    intercept: float = -1.0,
    mode: str = "rotate",
    seed: int = 0,
) -> Dataset:
    """Feature-linear labels whose concept direction moves over time.

    Until drift_start_fraction of the rows the concept is fixed; afterwards
    it rotates linearly in the (la, ld) latent plane up to total_rotation_deg
    at the last row ("rotate"), or flips sign at the drift point ("flip").
    """
    if mode not in ("rotate", "flip"):
        raise ValueError(f"unknown drift mode {mode!r}")
    rng = named_rng(seed, "drift")
    latent = rng.normal(0.0, 1.0, (n, len(DEFAULT_FEATURES)))
    i_a = DEFAULT_FEATURES.index("la")
    i_b = DEFAULT_FEATURES.index("ld")

    start = int(n * drift_start_fraction)
    angles = np.zeros(n)
    if mode == "rotate":
        ramp = np.linspace(0.0, np.deg2rad(total_rotation_deg), max(1, n - start))
        angles[start:] = ramp
    else:
        angles[start:] = np.pi

    w_a = np.cos(angles)
    w_b = np.sin(angles)
    logits = separation * (w_a * latent[:, i_a] + w_b * latent[:, i_b]) + intercept
    labels = (rng.random(n) < 1.0 / (1.0 + np.exp(-logits))).astype(np.int64)
    return _latent_to_dataset(latent, labels, project=f"drift-{mode}-{seed}")


def manifold_dataset(
    config: ManifoldConfig | None = None, seed: int = 0, shift: float = 8.0
) -> Dataset:
    """The manifold imbalance fixture wrapped as changesets: the two path
    coordinates land in the la/ld columns (shifted nonnegative), every other
    metric is zero, and the dataset's active features are just those two."""
    features, labels = manifold_imbalance(config, seed)
    zeros = {name: 0.0 for name in DEFAULT_FEATURES if name not in ("la", "ld", "fix")}
    rows = []
    for i in range(len(labels)):
        metrics = ChangeMetrics(
            la=float(features[i, 0] + shift),
            ld=float(features[i, 1] + shift),
            fix=False,
            **zeros,
        )
        rows.append(
            Changeset(
                id=f"m{i:06d}",
                timestamp=1_600_000_000 + i * 3600,
                metrics=metrics,
                label=int(labels[i]),
            )
        )
    return Dataset(
        changesets=tuple(rows),
        feature_names=("la", "ld"),
        project=f"manifold-{seed}",
    )


def joint_signal_dataset(
    n: int,
    separation: float = 3.0,
    history_weight: float = 1.5,
    intercept: float = -0.5,
    seed: int = 0,
) -> Dataset:
    """Labels depend on current features and on the previous label, so both
    a feature route and a history route carry signal."""
    rng = named_rng(seed, "joint")
    latent = rng.normal(0.0, 1.0, (n, len(DEFAULT_FEATURES)))
    i_a = DEFAULT_FEATURES.index("la")
    labels = np.empty(n, dtype=np.int64)
    prev = 0
    draws = rng.random(n)
    for i in range(n):
        logit = separation * latent[i, i_a] + history_weight * (2 * prev - 1) + intercept
        labels[i] = int(draws[i] < 1.0 / (1.0 + np.exp(-logit)))
        prev = labels[i]
    return _latent_to_dataset(latent, labels, project=f"joint-{seed}")
