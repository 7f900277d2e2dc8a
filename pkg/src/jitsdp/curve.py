"""Principal curve fitting on changeset feature clouds.

Hastie-Stuetzle style alternation specialised to polylines: start from the
first principal component, then repeat project -> smooth-by-arclength ->
re-vertex until the mean squared projection distance stops moving. Curves
summarise a segment's distribution and are compared by an
orientation-normalized cosine over resampled vertices.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateCurveError, InsufficientDataError


@dataclass(frozen=True)
class CurveConfig:
    segments: int = 50
    max_iter: int = 20
    tol: float = 1e-4
    smooth_span: float = 0.3  # fraction of the arclength range

    def __post_init__(self) -> None:
        if self.segments < 1 or self.max_iter < 1:
            raise ValueError("segments and max_iter must be >= 1")
        if not 0.0 < self.smooth_span <= 1.0:
            raise ValueError(f"smooth_span must be in (0, 1], got {self.smooth_span}")
        if self.tol <= 0:
            raise ValueError(f"tol must be positive, got {self.tol}")


@dataclass(frozen=True)
class PrincipalCurve:
    """Polyline with cumulative arclength per vertex (arclength[0] == 0)."""

    vertices: np.ndarray  # (k, d)
    arclength: np.ndarray  # (k,)

    def __post_init__(self) -> None:
        v = np.asarray(self.vertices, dtype=np.float64)
        if v.ndim != 2 or v.shape[0] < 2:
            raise ValueError("curve needs a (k>=2, d) vertex array")
        if not np.isfinite(v).all():
            raise ValueError("curve vertices must be finite")
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "arclength", np.asarray(self.arclength, dtype=np.float64))

    @property
    def dim(self) -> int:
        return self.vertices.shape[1]

    @property
    def length(self) -> float:
        return float(self.arclength[-1])

    def to_json(self) -> str:
        return json.dumps(
            {
                "dim": self.dim,
                "vertices": self.vertices.tolist(),
                "arclength": self.arclength.tolist(),
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "PrincipalCurve":
        raw = json.loads(text)
        vertices = np.asarray(raw["vertices"], dtype=np.float64)
        if vertices.ndim != 2 or vertices.shape[1] != raw["dim"]:
            raise ValueError("vertex array inconsistent with declared dim")
        arclength = _cumulative_arclength(vertices)
        stored = np.asarray(raw["arclength"], dtype=np.float64)
        if stored.shape != arclength.shape or not np.allclose(stored, arclength, atol=1e-6):
            raise ValueError("stored arclength inconsistent with vertices")
        return cls(vertices=vertices, arclength=arclength)


@dataclass(frozen=True)
class CurveFitReport:
    iterations: int
    final_distance: float  # mean squared projection distance
    converged: bool
    distance_history: tuple[float, ...]


def _cumulative_arclength(vertices: np.ndarray) -> np.ndarray:
    steps = np.linalg.norm(np.diff(vertices, axis=0), axis=1)
    return np.concatenate([[0.0], np.cumsum(steps)])


def make_curve(vertices: np.ndarray) -> PrincipalCurve:
    vertices = np.asarray(vertices, dtype=np.float64)
    return PrincipalCurve(vertices=vertices, arclength=_cumulative_arclength(vertices))


def project_many(curve: PrincipalCurve, points: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Project points onto the polyline.

    Returns (lambda, feet, sq_dist); distance ties resolve to the smaller
    arclength because segments are scanned in order.
    """
    x = np.atleast_2d(np.asarray(points, dtype=np.float64))
    if x.shape[1] != curve.dim:
        raise ValueError(f"points have dim {x.shape[1]}, curve has {curve.dim}")
    v = curve.vertices
    seg = v[1:] - v[:-1]  # (k-1, d)
    seg_len_sq = np.einsum("sd,sd->s", seg, seg)
    safe = np.where(seg_len_sq > 0, seg_len_sq, 1.0)

    diff = x[:, None, :] - v[None, :-1, :]  # (n, k-1, d)
    t = np.einsum("nsd,sd->ns", diff, seg) / safe
    t = np.clip(np.where(seg_len_sq > 0, t, 0.0), 0.0, 1.0)
    feet = v[None, :-1, :] + t[:, :, None] * seg[None, :, :]
    sq = np.einsum("nsd,nsd->ns", x[:, None, :] - feet, x[:, None, :] - feet)

    best = np.argmin(sq, axis=1)  # first minimum -> smallest arclength
    rows = np.arange(len(x))
    lam = curve.arclength[best] + t[rows, best] * np.sqrt(seg_len_sq[best])
    return lam, feet[rows, best], sq[rows, best]


def project(curve: PrincipalCurve, point: np.ndarray) -> tuple[float, np.ndarray, float]:
    """Closest point on the curve: (arclength parameter, foot, distance)."""
    lam, feet, sq = project_many(curve, np.asarray(point, dtype=np.float64)[None, :])
    return float(lam[0]), feet[0], float(np.sqrt(sq[0]))


def resample(curve: PrincipalCurve, n_points: int) -> PrincipalCurve:
    """Vertices at equally spaced arclength, endpoints included."""
    if n_points < 2:
        raise ValueError(f"n_points must be >= 2, got {n_points}")
    if curve.length <= 0:
        raise DegenerateCurveError("cannot resample a zero-length curve")
    targets = np.linspace(0.0, curve.length, n_points)
    knots, keep = np.unique(curve.arclength, return_index=True)
    out = np.column_stack(
        [np.interp(targets, knots, curve.vertices[keep, j]) for j in range(curve.dim)]
    )
    return PrincipalCurve(vertices=out, arclength=targets.copy())


def curve_cosine_similarity(a: PrincipalCurve, b: PrincipalCurve, n_points: int = 100) -> float:
    """Cosine similarity of two curves as resampled, centered, flattened
    vertex vectors; orientation-normalized by also trying b reversed."""
    if a.dim != b.dim:
        raise ValueError(f"curve dims differ: {a.dim} vs {b.dim}")
    pa = resample(a, n_points).vertices
    pb = resample(b, n_points).vertices
    ua = (pa - pa.mean(axis=0)).ravel()
    norm_a = np.linalg.norm(ua)
    best = -1.0
    for candidate in (pb, pb[::-1]):
        ub = (candidate - candidate.mean(axis=0)).ravel()
        norm_b = np.linalg.norm(ub)
        if norm_a == 0.0 or norm_b == 0.0:
            raise DegenerateCurveError("curve has no spatial extent after centering")
        best = max(best, float(np.dot(ua, ub) / (norm_a * norm_b)))
    return best


def _smooth_to_vertices(
    points: np.ndarray, lam: np.ndarray, n_vertices: int, span: float
) -> np.ndarray:
    """Tricube-weighted local linear fit of each coordinate against
    arclength, evaluated at equally spaced targets.

    First-order fitting keeps the curve ends anchored (plain local averaging
    would pull them half a window inward). Targets whose window is empty fall
    back to the nearest projected point; windows without arclength spread
    fall back to the weighted mean.
    """
    lo, hi = float(lam.min()), float(lam.max())
    if hi <= lo:
        raise DegenerateCurveError("points have no spread along the curve")
    targets = np.linspace(lo, hi, n_vertices)
    half = span * (hi - lo) / 2.0
    rel = np.abs(targets[:, None] - lam[None, :]) / half  # (k, n)
    w = np.where(rel < 1.0, (1.0 - rel**3) ** 3, 0.0)
    totals = w.sum(axis=1)
    empty = totals == 0.0
    if empty.any():
        nearest = np.argmin(np.abs(targets[:, None] - lam[None, :]), axis=1)
        w[empty, :] = 0.0
        w[empty, nearest[empty]] = 1.0
        totals = w.sum(axis=1)

    lam_bar = (w @ lam) / totals
    mean = (w @ points) / totals[:, None]
    centered = lam[None, :] - lam_bar[:, None]  # (k, n)
    s_ll = np.einsum("kn,kn->k", w, centered**2)
    s_ly = (w * centered) @ points  # (k, d)
    stable = s_ll > 1e-12 * totals * half**2
    slope = np.where(stable[:, None], s_ly / np.where(stable, s_ll, 1.0)[:, None], 0.0)
    return mean + slope * (targets - lam_bar)[:, None]


def fit_curve(
    points: np.ndarray, config: CurveConfig | None = None
) -> tuple[PrincipalCurve, CurveFitReport]:
    """Fit a principal curve to a point cloud.

    Starts from the first principal component spanning the data, then
    alternates projection and arclength smoothing until the relative change
    in mean squared projection distance drops below tol.
    """
    config = config or CurveConfig()
    x = np.asarray(points, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError("points must be a 2-D array")
    n, d = x.shape
    if d < 2:
        raise ValueError(f"need at least 2 dimensions, got {d}")
    if n < d + 1:
        raise InsufficientDataError(f"need at least {d + 1} points for dim {d}, got {n}")
    if not np.isfinite(x).all():
        raise ValueError("points must be finite")

    mean = x.mean(axis=0)
    centered = x - mean
    if not centered.any():
        raise DegenerateCurveError("all points identical; no curve through them")
    # first principal component via SVD of the centered cloud
    _, _, vt = np.linalg.svd(centered, full_matrices=False)
    direction = vt[0]
    lam0 = centered @ direction
    k = config.segments + 1
    vertices = mean + np.linspace(lam0.min(), lam0.max(), k)[:, None] * direction
    curve = make_curve(vertices)

    lam, _, sq = project_many(curve, x)
    msd = float(sq.mean())
    history = [msd]
    converged = False
    iterations = 0
    for _ in range(config.max_iter):
        smoothed = _smooth_to_vertices(x, lam, k, config.smooth_span)
        fine = make_curve(smoothed)
        if fine.length <= 0:
            raise DegenerateCurveError("smoothing collapsed the curve to a point")
        curve = resample(fine, k)
        iterations += 1
        lam, _, sq = project_many(curve, x)
        new_msd = float(sq.mean())
        history.append(new_msd)
        if abs(msd - new_msd) / max(msd, 1e-30) < config.tol:
            converged = True
            break
        msd = new_msd

    return curve, CurveFitReport(
        iterations=iterations,
        final_distance=history[-1],
        converged=converged,
        distance_history=tuple(history),
    )
