import numpy as np
import pytest

from jitsdp.data import ChangeMetrics, Changeset, Dataset


def make_metrics(**overrides) -> ChangeMetrics:
    base = dict(
        ns=1.0, nd=2.0, nf=3.0, entropy=0.5, la=10.0, ld=4.0, lt=100.0,
        ndev=2.0, age=30.0, nuc=1.0, exp=5.0, rexp=2.5, sexp=1.0, fix=False,
    )
    base.update(overrides)
    return ChangeMetrics(**base)


def make_dataset(labels, start_ts=1_000_000, step=3600, metrics=None, files=None):
    """Dataset with the given label sequence and evenly spaced timestamps."""
    shared = make_metrics() if metrics is None else None
    rows = []
    for i, label in enumerate(labels):
        rows.append(
            Changeset(
                id=f"c{i:06d}",
                timestamp=start_ts + i * step,
                metrics=shared if metrics is None else metrics[i],
                label=int(label),
                modified_files=None if files is None else frozenset(files[i]),
            )
        )
    return Dataset(changesets=tuple(rows))


def dataset_from_matrix(matrix, labels=None, feature_names=None, start_ts=1_000_000):
    """Wrap an (n, 14) feature matrix into a Dataset, canonical feature order."""
    from jitsdp.data import DEFAULT_FEATURES

    matrix = np.asarray(matrix, dtype=float)
    names = DEFAULT_FEATURES if feature_names is None else feature_names
    if labels is None:
        labels = np.zeros(len(matrix), dtype=int)
    rows = []
    for i in range(len(matrix)):
        values = dict(zip(names, matrix[i]))
        fix = bool(values.pop("fix", 0.0) >= 0.5)
        rows.append(
            Changeset(
                id=f"c{i:06d}",
                timestamp=start_ts + i * 3600,
                metrics=ChangeMetrics(fix=fix, **values),
                label=int(labels[i]),
            )
        )
    return Dataset(changesets=tuple(rows), feature_names=tuple(names))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
