"""Min-max (Chebyshev) fitting primitives.

Two closely related problems back the regularity estimators:

* ``chebyshev_center``: the constant minimizing the sup of Euclidean
  residuals over a finite point set, i.e. the center of the minimum
  enclosing ball.  Solved in closed form for d = 1 and by the randomized
  incremental (Welzl-style) algorithm for d = 2, made deterministic by a
  fixed-key shuffle.

* ``fit_affine_*``: affine models minimizing the max-abs-component residual
  over samples.  The fit is a small dense LP (variables: model coefficients
  plus one slack), solved with HiGHS after a least-squares warm start that
  doubles as the degeneracy detector.  Because the model depends on the
  spatial offset only, samples sharing an offset are pruned to their
  componentwise envelope before the LP, which keeps the constraint count at
  twice the number of distinct offsets.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from numpy.random import Generator, Philox
from scipy.optimize import linprog


class FitError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Minimum enclosing ball
# ---------------------------------------------------------------------------

def chebyshev_center(points) -> tuple:
    """Center and radius of the smallest ball enclosing the points.

    Accepts (N,) scalars or (N, d) vectors with d in {1, 2}.  The returned
    radius is the achieved sup of |p - center|.
    """
    pts = np.asarray(points, dtype=float)
    if pts.size == 0:
        raise FitError("empty point set")
    if pts.ndim == 1:
        pts = pts[:, None]
    d = pts.shape[1]
    if d == 1:
        lo, hi = float(pts.min()), float(pts.max())
        return np.array([0.5 * (lo + hi)]), 0.5 * (hi - lo)
    if d != 2:
        raise FitError(f"chebyshev_center supports d in {{1, 2}}, got {d}")
    cx, cy, r = _min_enclosing_circle(pts)
    return np.array([cx, cy]), r


def _min_enclosing_circle(pts: np.ndarray) -> tuple:
    rng = Generator(Philox(key=np.array([0x6D65623, 0], dtype=np.uint64)))
    order = rng.permutation(len(pts))
    shuffled = [tuple(pts[i]) for i in order]
    c = None
    for i, p in enumerate(shuffled):
        if c is None or not _in_circle(c, p):
            c = _circle_one_point(shuffled[: i + 1], p)
    return c


def _circle_one_point(points, p):
    c = (p[0], p[1], 0.0)
    for i, q in enumerate(points):
        if not _in_circle(c, q):
            if c[2] == 0.0:
                c = _diameter(p, q)
            else:
                c = _circle_two_points(points[: i + 1], p, q)
    return c


def _circle_two_points(points, p, q):
    circ = _diameter(p, q)
    left = None
    right = None
    px, py = p
    qx, qy = q
    for r in points:
        if _in_circle(circ, r):
            continue
        cross = _cross(px, py, qx, qy, r[0], r[1])
        c = _circumcircle(p, q, r)
        if c is None:
            continue
        if cross > 0.0 and (
            left is None
            or _cross(px, py, qx, qy, c[0], c[1]) > _cross(px, py, qx, qy, left[0], left[1])
        ):
            left = c
        elif cross < 0.0 and (
            right is None
            or _cross(px, py, qx, qy, c[0], c[1]) < _cross(px, py, qx, qy, right[0], right[1])
        ):
            right = c
    if left is None and right is None:
        return circ
    if left is None:
        return right
    if right is None:
        return left
    return left if left[2] <= right[2] else right


def _diameter(a, b):
    cx = 0.5 * (a[0] + b[0])
    cy = 0.5 * (a[1] + b[1])
    r = max(math.hypot(cx - a[0], cy - a[1]), math.hypot(cx - b[0], cy - b[1]))
    return (cx, cy, r)


def _circumcircle(a, b, c):
    ox = (min(a[0], b[0], c[0]) + max(a[0], b[0], c[0])) / 2
    oy = (min(a[1], b[1], c[1]) + max(a[1], b[1], c[1])) / 2
    ax, ay = a[0] - ox, a[1] - oy
    bx, by = b[0] - ox, b[1] - oy
    cx, cy = c[0] - ox, c[1] - oy
    d = (ax * (by - cy) + bx * (cy - ay) + cx * (ay - by)) * 2.0
    if d == 0.0:
        return None
    x = ox + ((ax * ax + ay * ay) * (by - cy) + (bx * bx + by * by) * (cy - ay) + (cx * cx + cy * cy) * (ay - by)) / d
    y = oy + ((ax * ax + ay * ay) * (cx - bx) + (bx * bx + by * by) * (ax - cx) + (cx * cx + cy * cy) * (bx - ax)) / d
    r = max(math.hypot(x - a[0], y - a[1]), math.hypot(x - b[0], y - b[1]), math.hypot(x - c[0], y - c[1]))
    return (x, y, r)


_EPS_IN = 1.0 + 1e-12


def _in_circle(c, p) -> bool:
    return c is not None and math.hypot(p[0] - c[0], p[1] - c[1]) <= c[2] * _EPS_IN


def _cross(x0, y0, x1, y1, x2, y2) -> float:
    return (x1 - x0) * (y2 - y0) - (y1 - y0) * (x2 - x0)


# ---------------------------------------------------------------------------
# Min-max affine fits
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AffineModel:
    """x |-> B (x - x') + b; fits assign symmetric entries from shared
    parameters, so B == B.T holds bitwise on their output."""

    basepoint: np.ndarray
    B: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "B", np.atleast_2d(np.asarray(self.B, dtype=float)))
        object.__setattr__(self, "b", np.asarray(self.b, dtype=float).reshape(-1))
        object.__setattr__(self, "basepoint", np.asarray(self.basepoint, dtype=float).reshape(-1))

    def __call__(self, xrel: np.ndarray) -> np.ndarray:
        return np.asarray(xrel) @ self.B.T + self.b


@dataclass(frozen=True)
class ScalarAffine:
    """x |-> slope.(x - x') + offset, the scalar-valued fit used on increments."""

    basepoint: np.ndarray
    slope: np.ndarray
    offset: float

    def __call__(self, xrel: np.ndarray) -> np.ndarray:
        return np.asarray(xrel) @ np.asarray(self.slope) + self.offset


@dataclass(frozen=True)
class FitResult:
    model: object
    residual: float
    degenerate: bool


def _prune_envelope(xrel: np.ndarray, values: np.ndarray) -> tuple:
    """Collapse samples sharing an offset to componentwise min/max.

    Valid for the max-abs-component objective because the model value at a
    given offset is shared by all its samples.
    """
    uniq, inv = np.unique(xrel, axis=0, return_inverse=True)
    c = values.shape[1]
    vmax = np.full((len(uniq), c), -np.inf)
    vmin = np.full((len(uniq), c), np.inf)
    np.maximum.at(vmax, inv, values)
    np.minimum.at(vmin, inv, values)
    x2 = np.concatenate([uniq, uniq], axis=0)
    v2 = np.concatenate([vmax, vmin], axis=0)
    return x2, v2


def _solve_minmax_lp(design: np.ndarray, targets: np.ndarray, warm: np.ndarray) -> tuple:
    """min t s.t. |design @ theta - targets| <= t, refined from a warm start."""
    nrow, npar = design.shape
    A_ub = np.zeros((2 * nrow, npar + 1))
    A_ub[:nrow, :npar] = design
    A_ub[nrow:, :npar] = -design
    A_ub[:, npar] = -1.0
    b_ub = np.concatenate([targets, -targets])
    c = np.zeros(npar + 1)
    c[npar] = 1.0
    res = linprog(
        c,
        A_ub=A_ub,
        b_ub=b_ub,
        bounds=[(None, None)] * npar + [(0, None)],
        method="highs",
    )
    if not res.success:
        return warm, float(np.max(np.abs(design @ warm - targets))), True
    return res.x[:npar], float(res.x[npar]), False


def _sym_index_pairs(d: int) -> list:
    return [(i, j) for i in range(d) for j in range(i, d)]


def fit_affine_gradient(
    xrel,
    values,
    pin_b: Optional[np.ndarray] = None,
    symmetric: bool = True,
) -> FitResult:
    """Min-max fit of a vector field by B(x - x') + b with symmetric B.

    ``values`` are d-component samples at offsets ``xrel`` from the
    basepoint.  The residual is the optimal sup over samples of the largest
    absolute component; ``pin_b`` freezes the constant term (the default
    slope analyses pin it to the field's basepoint value).
    """
    x = np.asarray(xrel, dtype=float)
    v = np.asarray(values, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    d = x.shape[1]
    if v.ndim == 1:
        v = v[:, None]
    if v.shape[1] != d:
        raise FitError("gradient fit expects d-component values")
    n_par_b = 0 if pin_b is not None else d
    pairs = _sym_index_pairs(d) if symmetric else [(i, j) for i in range(d) for j in range(d)]
    n_par = len(pairs) + n_par_b
    if 2 * x.shape[0] < n_par + 1:
        raise FitError(f"need at least {n_par + 1} samples, got {x.shape[0]}")

    xp, vp = _prune_envelope(x, v)
    if pin_b is not None:
        vp = vp - np.asarray(pin_b, dtype=float)[None, :]

    # one constraint row per (pruned sample, component)
    design = np.zeros((xp.shape[0], d, n_par))
    for p_idx, (i, j) in enumerate(pairs):
        design[:, i, p_idx] += xp[:, j]
        if symmetric and i != j:
            design[:, j, p_idx] += xp[:, i]
    if pin_b is None:
        for c in range(d):
            design[:, c, len(pairs) + c] = 1.0
    nrow = xp.shape[0] * d
    design = design.reshape(nrow, n_par)
    targets = vp.reshape(nrow)

    warm, *_ = np.linalg.lstsq(design, targets, rcond=None)
    rank = np.linalg.matrix_rank(design)
    degenerate = rank < n_par
    if degenerate:
        theta, resid = warm, float(np.max(np.abs(design @ warm - targets)))
    else:
        theta, resid, failed = _solve_minmax_lp(design, targets, warm)
        degenerate = failed

    B = np.zeros((d, d))
    for p_idx, (i, j) in enumerate(pairs):
        B[i, j] = theta[p_idx]
        if symmetric and i != j:
            B[j, i] = theta[p_idx]
    b = np.asarray(pin_b, dtype=float) if pin_b is not None else theta[len(pairs):]
    model = AffineModel(basepoint=np.zeros(d), B=B, b=b)
    return FitResult(model=model, residual=resid, degenerate=degenerate)


def fit_affine_scalar(xrel, values, pin_offset: Optional[float] = None) -> FitResult:
    """Min-max fit of scalar samples by slope.(x - x') + offset."""
    x = np.asarray(xrel, dtype=float)
    v = np.asarray(values, dtype=float).reshape(-1)
    if x.ndim == 1:
        x = x[:, None]
    d = x.shape[1]
    n_par = d + (0 if pin_offset is not None else 1)
    if 2 * x.shape[0] < n_par + 1:
        raise FitError(f"need at least {n_par + 1} samples, got {x.shape[0]}")
    xp, vp = _prune_envelope(x, v[:, None])
    targets = vp[:, 0] - (pin_offset if pin_offset is not None else 0.0)
    if pin_offset is not None:
        design = xp
    else:
        design = np.concatenate([xp, np.ones((xp.shape[0], 1))], axis=1)

    warm, *_ = np.linalg.lstsq(design, targets, rcond=None)
    rank = np.linalg.matrix_rank(design)
    degenerate = rank < n_par
    if degenerate:
        theta, resid = warm, float(np.max(np.abs(design @ warm - targets)))
    else:
        theta, resid, failed = _solve_minmax_lp(design, targets, warm)
        degenerate = failed
    slope = theta[:d]
    offset = float(pin_offset) if pin_offset is not None else float(theta[d])
    return FitResult(
        model=ScalarAffine(basepoint=np.zeros(d), slope=slope, offset=offset),
        residual=resid,
        degenerate=degenerate,
    )
