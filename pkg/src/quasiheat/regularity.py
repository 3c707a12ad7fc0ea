"""Estimators for parabolic regularity and gradient modelledness.

Everything here consumes :class:`~quasiheat.grid.SpaceTimeField` snapshots and
produces numbers that discretize sup-type quantities:

* parabolic Hoelder seminorms over deterministic stratified pair sets,
* best-constant approximation of gradient increments across dyadic scales,
* mollified time-derivative terms,
* scalar/vector min-max affine fits over parabolic cylinders,
* the per-basepoint modelling remainder, i.e. how well the gradient of the
  difference between the nonlinear solution and its frozen-coefficient model
  is approximated by an affine map on shrinking cylinders, and the no-model
  baseline oscillation it is contrasted with.

Sup norms over cylinders are exact over the grid samples; seminorms are
stratified-sampled with a pair budget and are certified lower bounds of the
discrete sup.  All sampling is deterministic given the parameters.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .fitting import chebyshev_center, fit_affine_gradient, fit_affine_scalar
from .grid import (
    GridSpec,
    ParabolicCylinder,
    SpaceTimeField,
    cylinder_samples,
    increment,
    lattice_shifts,
    mollify,
    mollify_deriv,
)
from .nonlinearity import Nonlinearity, freeze, increment_averaged_coefficient


class RegularityError(ValueError):
    pass


@dataclass(frozen=True)
class RegularityParams:
    """Knobs shared by the estimators.

    ``radii`` is the dyadic radius set, truncated to [4*dx, 1/4] (the torus
    and snapshot cadence bound both ends); ``pair_budget`` caps the sampled
    pairs per separation scale in seminorms; ``y_budget`` caps the lattice
    shifts probed per scale in increment estimators.
    """

    alpha: float
    radii: np.ndarray
    pair_budget: int = 100_000
    y_budget: int = 32
    seed: int = 0

    def __post_init__(self):
        if not (0.5 < self.alpha < 1.0):
            raise RegularityError("alpha must lie in (1/2, 1): second differences gain requires 2*alpha > 1")
        radii = np.sort(np.asarray(self.radii, dtype=float))
        if len(radii) == 0:
            raise RegularityError("empty radius set")
        rv = radii.view()
        rv.flags.writeable = False
        object.__setattr__(self, "radii", rv)

    @staticmethod
    def for_grid(
        grid: GridSpec,
        alpha: float,
        r_min_factor: int = 4,
        r_max: float = 0.25,
        pair_budget: int = 100_000,
        y_budget: int = 32,
        seed: int = 0,
    ) -> "RegularityParams":
        r = r_min_factor * grid.dx
        radii = []
        while r <= r_max + 1e-12:
            radii.append(r)
            r *= 2.0
        return RegularityParams(
            alpha=alpha,
            radii=np.array(radii),
            pair_budget=pair_budget,
            y_budget=y_budget,
            seed=seed,
        )


def _comp_abs(diff: np.ndarray, n_lead: int) -> np.ndarray:
    """Max absolute value over trailing component axes."""
    out = np.abs(diff)
    while out.ndim > n_lead:
        out = out.max(axis=-1)
    return out


# ---------------------------------------------------------------------------
# Hoelder seminorm
# ---------------------------------------------------------------------------

def _region_box(f: SpaceTimeField, region: ParabolicCylinder):
    """Bounding-box view (with wrap) of a cylinder plus an in-ball mask."""
    grid = f.grid
    it = f.time_index(region.t)
    lo = f.times[it] - region.r * region.r
    j0 = int(np.searchsorted(f.times, lo + 1e-14, side="right"))
    node0 = f.node_index(region.x)
    m = int(math.ceil(region.r / grid.dx)) - 1
    offs = np.arange(-m, m + 1)
    if grid.dim == 1:
        nodes = (node0[0] + offs) % grid.n
        box = f.values[j0 : it + 1][:, nodes]
        mask = (np.abs(offs * grid.dx) < region.r - 1e-12)[None, :] & np.ones(
            (it + 1 - j0, 1), dtype=bool
        )
    else:
        ox, oy = np.meshgrid(offs, offs, indexing="ij")
        nodes = ((node0[0] + ox) % grid.n, (node0[1] + oy) % grid.n)
        box = f.values[j0 : it + 1][:, nodes[0], nodes[1]]
        inball = np.hypot(ox * grid.dx, oy * grid.dx) < region.r - 1e-12
        mask = inball[None] & np.ones((it + 1 - j0, 1, 1), dtype=bool)
    return box, mask, f.times[j0 : it + 1]


def _pair_classes(
    n_space: int, n_time: int, dx: float, snap_dt: float, exhaustive: bool, signed: bool
):
    """Offset classes (time shift in snapshots, signed spatial shift in nodes).

    Spatial shifts are taken modulo the torus in the full-field case, so the
    exhaustive listing of sx in [0, n) covers both signs there; on a box
    (``signed``) the negative shifts are listed explicitly.  The dyadic
    listing adds the negative shift for the mixed space-time classes, where
    the sign is not redundant.
    """
    classes = []
    if exhaustive:
        lo = -(n_space - 1) if signed else 0
        for st in range(0, n_time):
            for sx in range(lo, n_space):
                if st == 0 and sx == 0:
                    continue
                if st == 0 and not signed and sx > n_space // 2:
                    continue  # pure-space pairs are sign-symmetric on the torus
                if st == 0 and signed and sx < 0:
                    continue
                classes.append((st, sx))
        return classes
    sx = 1
    while sx <= max(n_space // 2, 1):
        classes.append((0, sx))
        st_par = int(round((sx * dx) ** 2 / snap_dt))
        if 1 <= st_par < n_time:
            classes.append((st_par, sx))
            classes.append((st_par, -sx))
        sx *= 2
    st = 1
    while st < n_time:
        classes.append((st, 0))
        st *= 2
    return classes


def holder_seminorm(
    f: SpaceTimeField,
    alpha: float,
    region: Optional[ParabolicCylinder] = None,
    pair_budget: int = 100_000,
) -> float:
    """Discrete parabolic Hoelder seminorm sup |f(z)-f(z')| / d(z,z')^alpha.

    Pairs are enumerated by offset classes (spatial and temporal shifts on
    dyadic scales, plus the parabolically matched mixed classes); within a
    class every anchor is used, decimated by a deterministic time-axis
    stride when the count exceeds the budget.  Falls back to full offset
    enumeration when the field is small enough, making the estimate
    exhaustive over grid pairs.
    """
    grid = f.grid
    dim = grid.dim
    if region is None:
        vals = f.values
        mask = None
        n_space = grid.n
    else:
        vals, mask, _ = _region_box(f, region)
        n_space = vals.shape[1]
    n_time = vals.shape[0]
    if n_time * int(np.prod(vals.shape[1 : 1 + dim])) < 2:
        raise RegularityError("need at least two samples in the region")
    snap_dt = grid.snap_dt if n_time > 1 else 1.0

    n_anchors = n_time * int(np.prod(vals.shape[1 : 1 + dim]))
    n_offsets = n_time * n_space * (n_space if dim == 2 else 1)
    exhaustive = n_anchors * n_offsets <= pair_budget * 8
    classes = _pair_classes(
        n_space, n_time, grid.dx, snap_dt, exhaustive, signed=region is not None
    )

    best = 0.0
    for st, sx in classes:
        if dim == 1:
            shift_specs = [(sx,)]
        elif exhaustive:
            lo_y = -(n_space - 1) if region is not None else 0
            shift_specs = [(sx, sy) for sy in range(lo_y, n_space)]
        else:
            shift_specs = [(sx, 0), (0, sx), (sx, sx), (sx, -sx)]
        for sv in shift_specs:
            if st == 0 and all(s == 0 for s in sv):
                continue
            if region is None:
                # torus wrap: shift s and s - n give the same pair family
                sd = [min(abs(s) % grid.n, grid.n - abs(s) % grid.n) for s in sv]
            else:
                sd = [abs(s) for s in sv]
            dist = (math.sqrt(st * snap_dt) if st else 0.0) + math.hypot(
                *[s * grid.dx for s in sd]
            )
            if dist == 0.0:
                continue
            if region is None:
                shifted = vals
                for ax, s in enumerate(sv):
                    if s % grid.n:
                        shifted = np.roll(shifted, -s, axis=1 + ax)
                a_view = shifted[st:] if st else shifted
                b_view = vals[: n_time - st] if st else vals
                stride = max(1, int(np.ceil(a_view.shape[0] * np.prod(a_view.shape[1 : 1 + dim]) / pair_budget)))
                diff = a_view[::stride] - b_view[::stride]
                ratios = _comp_abs(diff, diff.ndim - len(f.component_shape)) / dist**alpha
                best = max(best, float(ratios.max()))
            else:
                # within a box, shifts are plain slices; both ends must be in-ball
                sl_src = [slice(0, n_time - st)]
                sl_dst = [slice(st, n_time)]
                ok = n_time - st > 0
                for s in sv:
                    w = vals.shape[1]
                    if s >= 0:
                        sl_src.append(slice(0, w - s))
                        sl_dst.append(slice(s, w))
                        ok = ok and (w - s > 0)
                    else:
                        sl_src.append(slice(-s, w))
                        sl_dst.append(slice(0, w + s))
                        ok = ok and (w + s > 0)
                if not ok:
                    continue
                a = vals[tuple(sl_dst)]
                bsl = vals[tuple(sl_src)]
                msk = mask[tuple(sl_dst)] & mask[tuple(sl_src)]
                if not msk.any():
                    continue
                diff = _comp_abs(a - bsl, msk.ndim)
                ratios = np.where(msk, diff, 0.0) / dist**alpha
                best = max(best, float(ratios.max()))
    return best


# ---------------------------------------------------------------------------
# Increment constants
# ---------------------------------------------------------------------------

def increment_constant(
    grad_f: SpaceTimeField,
    z: tuple,
    params: RegularityParams,
    spacetime: bool = False,
) -> float:
    """Best-constant approximation of gradient increments across scales.

    For each dyadic scale l and lattice shift |y| <= l the optimal constant
    k for delta_y(grad f) on the ball (or parabolic cylinder, when
    ``spacetime``) of radius l is the Chebyshev center of the sampled
    values; the estimator returns sup over (l, y) of radius(l, y) / l^(2 alpha).
    """
    t0, x0 = z
    grid = grad_f.grid
    best = 0.0
    for l in params.radii:
        shifts = lattice_shifts(grid, l, budget=params.y_budget)
        if len(shifts) == 0:
            continue
        for y in shifts:
            dg = increment(grad_f, y)
            cyl = ParabolicCylinder(t=t0, x=x0, r=float(l))
            cs = cylinder_samples(dg, cyl)
            vals = cs.values if spacetime else cs.values[-1:]
            pts = vals.reshape(-1, vals.shape[-1])
            if grid.dim == 1:
                lo, hi = pts.min(), pts.max()
                rad = 0.5 * (hi - lo)
            else:
                if len(pts) > 20_000:
                    # deterministic decimation; the enclosing-ball radius of a
                    # subset is a certified lower bound of the full sup
                    pts = pts[:: int(np.ceil(len(pts) / 20_000))]
                _, rad = chebyshev_center(pts)
            best = max(best, float(rad) / float(l) ** (2 * params.alpha))
    return best


def time_term_constant(
    f: SpaceTimeField,
    z: tuple,
    params: RegularityParams,
) -> float:
    """Mollified time-derivative terms of the space-time interpolation bound.

    sum_{i=0..d} sup_r r^(1-2 alpha) sup_{|y|<=r} sup over P_r(z) of
    |d/dt (delta_y f)_{r,i}|, with the i >= 1 channels convolved against the
    r-scaled derivative bump (r times the sampled-kernel derivative) and d/dt
    taken by centered differences on the snapshot cadence.
    """
    t0, x0 = z
    grid = f.grid
    if not f.is_scalar:
        raise RegularityError("time terms are defined for scalar fields")
    total = 0.0
    for i in range(grid.dim + 1):
        best = 0.0
        for r in params.radii:
            if r < 2 * grid.dx or r >= 0.5:
                continue
            n_slab = int(round(r * r / grid.snap_dt))
            if n_slab < 3:
                continue
            win = _time_window(f, t0, float(r))
            shifts = lattice_shifts(grid, r, budget=params.y_budget)
            for y in shifts:
                dyf = increment(win, y)
                smooth = mollify(dyf, r) if i == 0 else _scaled_deriv(dyf, r, i - 1)
                dt_field = _time_derivative(smooth)
                # when t' is the trajectory's last snapshot the centered
                # difference is unavailable there; evaluate one step earlier
                t_eval = min(t0, float(dt_field.times[-1]))
                cyl = ParabolicCylinder(t=t_eval, x=x0, r=float(r))
                cs = cylinder_samples(dt_field, cyl)
                sup = float(np.max(np.abs(cs.values)))
                best = max(best, float(r) ** (1 - 2 * params.alpha) * sup)
        total += best
    return total


def _time_window(f: SpaceTimeField, t0: float, r: float) -> SpaceTimeField:
    """Restrict to the snapshots needed for the slab plus one-step margins."""
    it = f.time_index(t0)
    lo = f.times[it] - r * r
    j0 = int(np.searchsorted(f.times, lo + 1e-14, side="right"))
    j0 = max(j0 - 1, 0)
    j1 = min(it + 2, len(f.times))
    return SpaceTimeField(f.grid, f.times[j0:j1], f.values[j0:j1])


def _scaled_deriv(f: SpaceTimeField, r: float, axis: int) -> SpaceTimeField:
    g = mollify_deriv(f, r, axis)
    return SpaceTimeField(g.grid, g.times, r * g.values)


def _time_derivative(f: SpaceTimeField) -> SpaceTimeField:
    if len(f.times) < 3:
        raise RegularityError("need at least 3 snapshots for a centered time derivative")
    dt = f.times[1:] - f.times[:-1]
    if np.max(np.abs(dt - dt[0])) > 1e-12:
        raise RegularityError("snapshots must be uniformly spaced")
    vals = (f.values[2:] - f.values[:-2]) / (2.0 * dt[0])
    return SpaceTimeField(f.grid, f.times[1:-1], vals)


# ---------------------------------------------------------------------------
# Increment-vs-gradient affine transfer
# ---------------------------------------------------------------------------

def increment_affine_pair(
    f: SpaceTimeField,
    grad_f: SpaceTimeField,
    z: tuple,
    y,
    l: float,
) -> tuple:
    """(lhs, rhs) of the increment-to-gradient affine comparison.

    lhs: min-max residual of fitting delta_y f by a spatial affine function
    on P_l(z).  rhs: |y| times the min-max residual of fitting grad f by a
    symmetric affine model on P_2l(z).
    """
    t0, x0 = z
    dyf = increment(f, y)
    cs = cylinder_samples(dyf, ParabolicCylinder(t=t0, x=x0, r=float(l)))
    x, v = cs.flat()
    lhs = fit_affine_scalar(x, v).residual
    cs2 = cylinder_samples(grad_f, ParabolicCylinder(t=t0, x=x0, r=2.0 * float(l)))
    x2, v2 = cs2.flat()
    rhs = float(np.linalg.norm(np.atleast_1d(y))) * fit_affine_gradient(x2, v2).residual
    return lhs, rhs


def flux_mismatch(
    A: Nonlinearity,
    grad_u: SpaceTimeField,
    y,
    z: tuple,
) -> SpaceTimeField:
    """(a_y - a(z)) applied to delta_y grad u, the source driving the
    difference equation once the coefficient is frozen at z."""
    t0, x0 = z
    ay = increment_averaged_coefficient(A, grad_u, y)
    az = freeze(A, grad_u.value_at(t0, x0), basepoint=z).matrix
    dgrad = increment(grad_u, y).values
    g = np.einsum("...ij,...j->...i", ay.values - az, dgrad)
    return SpaceTimeField(grad_u.grid, grad_u.times, g)


# ---------------------------------------------------------------------------
# Modelling remainder and baseline
# ---------------------------------------------------------------------------

@dataclass
class BasepointReport:
    """Remainder-vs-radius analysis of one basepoint."""

    z: tuple
    radii: list
    residuals: list          # pinned-b min-max residuals per radius
    residuals_free: list     # free-b cross-check per radius
    models: list             # AffineModel per radius (pinned-b)
    slope: Optional[float]
    m_z: float
    b_gap: float             # |b_free(r_min) - grad w(z)|
    b_reference: list        # grad w(z), the pinned constant term
    baseline_slope: Optional[float]
    baseline_values: list
    stability_residuals: list  # residual of the r_min model replayed at each radius
    degenerate: bool
    increment_n: Optional[float] = None

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        d["z"] = [self.z[0], list(np.atleast_1d(self.z[1]))]
        d["models"] = [
            {"B": m.B.tolist(), "b": m.b.tolist()} for m in self.models
        ]
        return d


def _loglog_slope(radii, values, tiny: float = 1e-13) -> Optional[float]:
    r = np.asarray(radii, dtype=float)
    v = np.asarray(values, dtype=float)
    keep = v > tiny
    if keep.sum() < 4:
        return None
    coef = np.polyfit(np.log(r[keep]), np.log(v[keep]), 1)
    return float(coef[0])


def modelling_remainder(
    grad_u: SpaceTimeField,
    grad_v_a: SpaceTimeField,
    z: tuple,
    params: RegularityParams,
    with_increment_constant: bool = False,
) -> BasepointReport:
    """Fit affine models to grad(u - v_a) on shrinking cylinders around z.

    The constant term is pinned to the basepoint value of the difference
    gradient (its optimal limit); a free-constant fit is kept as the
    recovery cross-check.  Returns the residual table, the r^(-2 alpha)
    normalized sup M_z, the log-log slope, and the stability replay of the
    smallest-radius model across all radii.
    """
    if len(params.radii) < 4:
        raise RegularityError("need at least 4 radii for slope estimation")
    if not np.array_equal(grad_u.times, grad_v_a.times):
        raise RegularityError("gradient fields must share snapshot times")
    t0, x0 = z
    gw = SpaceTimeField(grad_u.grid, grad_u.times, grad_u.values - grad_v_a.values)
    b_ref = np.asarray(gw.value_at(t0, x0), dtype=float).reshape(-1)

    residuals, residuals_free, models = [], [], []
    free_models = []
    sample_sets = []
    for r in params.radii:
        cs = cylinder_samples(gw, ParabolicCylinder(t=t0, x=x0, r=float(r)))
        x, v = cs.flat()
        pinned = fit_affine_gradient(x, v, pin_b=b_ref)
        free = fit_affine_gradient(x, v)
        residuals.append(pinned.residual)
        residuals_free.append(free.residual)
        models.append(pinned.model)
        free_models.append(free.model)
        sample_sets.append((x, v))

    # replay the smallest-radius B across every radius
    b0 = models[0]
    stability = []
    for (x, v) in sample_sets:
        pred = x @ b0.B.T + b_ref[None, :]
        stability.append(float(np.max(np.abs(v - pred))))

    alpha2 = 2.0 * params.alpha
    m_z = max(
        res / float(r) ** alpha2 for res, r in zip(residuals, params.radii)
    )
    scale = float(np.max(np.abs(gw.values))) if gw.values.size else 0.0
    degenerate = scale <= 1e-12 or max(residuals) <= 1e-12
    slope = None if degenerate else _loglog_slope(params.radii, residuals)
    b_gap = float(np.max(np.abs(free_models[0].b - b_ref)))

    base_slope, base_vals = baseline_remainder(grad_u, z, params)
    inc_n = None
    if with_increment_constant:
        inc_n = increment_constant(gw, z, params, spacetime=True)

    return BasepointReport(
        z=z,
        radii=[float(r) for r in params.radii],
        residuals=[float(v) for v in residuals],
        residuals_free=[float(v) for v in residuals_free],
        models=models,
        slope=slope,
        m_z=float(m_z),
        b_gap=b_gap,
        b_reference=[float(v) for v in b_ref],
        baseline_slope=base_slope,
        baseline_values=[float(v) for v in base_vals],
        stability_residuals=stability,
        degenerate=bool(degenerate),
        increment_n=inc_n,
    )


def baseline_remainder(
    grad_u: SpaceTimeField,
    z: tuple,
    params: RegularityParams,
) -> tuple:
    """No-model control: oscillation of grad u around its basepoint value.

    Measured as the root-mean-square of grad u - grad u(z) over the cylinder
    samples; unlike the raw sup, the RMS does not inherit the
    sample-count growth of shrinking cylinders, so its log-log slope tracks
    the field's actual Hoelder exponent.  Returns (slope or None, table).
    """
    t0, x0 = z
    ref = np.asarray(grad_u.value_at(t0, x0), dtype=float)
    vals = []
    for r in params.radii:
        cs = cylinder_samples(grad_u, ParabolicCylinder(t=t0, x=x0, r=float(r)))
        diff = cs.values - ref
        vals.append(float(np.sqrt(np.mean(diff * diff))))
    slope = _loglog_slope(params.radii, vals)
    return slope, vals


# ---------------------------------------------------------------------------
# Aggregated report
# ---------------------------------------------------------------------------

@dataclass
class ModellingReport:
    """Per-basepoint remainder curves plus the global modelling constant."""

    alpha: float
    entries: list = field(default_factory=list)

    def add(self, seed: int, report: BasepointReport) -> None:
        self.entries.append((seed, report))

    @property
    def m_global(self) -> float:
        return max((r.m_z for _, r in self.entries), default=0.0)

    def slopes(self) -> list:
        return [r.slope for _, r in self.entries if r.slope is not None]

    def baseline_slopes(self) -> list:
        return [r.baseline_slope for _, r in self.entries if r.baseline_slope is not None]

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "m_global": self.m_global,
            "entries": [
                {"seed": seed, **rep.to_dict()} for seed, rep in self.entries
            ],
        }
