"""Space-time grid, fields, and the geometric/analytic primitives.

Fields live on the unit torus [0, 1)^d sampled at n points per axis, with
time-indexed snapshots.  This module provides the parabolic
(Carnot-Caratheodory) metric, parabolic cylinders, lattice increments,
mollification by a compactly supported bump, and spectral gradients.
Everything is periodic; non-periodic analytic test fields are handled by the
callers keeping their analysis windows away from the seam.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class GridError(ValueError):
    pass


def _is_power_of_two(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class GridSpec:
    """Uniform grid on [0,1)^d times a uniform snapshot cadence.

    ``dt`` is the solver time step; snapshots are retained every
    ``snap_stride`` steps.  The cadence is constrained so the thinnest
    analysis cylinder (radius 4*dx, depth (4*dx)^2) contains a snapshot.
    """

    dim: int
    n: int
    t_end: float
    dt: float
    snap_stride: int

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise GridError(f"dim must be 1 or 2, got {self.dim}")
        if not _is_power_of_two(self.n):
            raise GridError(f"n must be a power of two, got {self.n}")
        if self.dt <= 0:
            raise GridError("dt must be positive")
        if self.t_end < 1.0:
            raise GridError("t_end must be >= 1")
        if self.snap_stride < 1:
            raise GridError("snap_stride must be >= 1")
        r_min = 4.0 * self.dx
        if self.snap_stride * self.dt > r_min * r_min * (1 + 1e-12):
            raise GridError(
                "snapshot cadence too coarse: snap_stride*dt must be <= (4*dx)^2"
            )

    @property
    def dx(self) -> float:
        return 1.0 / self.n

    @property
    def n_steps(self) -> int:
        return round(self.t_end / self.dt)

    @property
    def snap_dt(self) -> float:
        return self.snap_stride * self.dt

    @property
    def shape(self) -> tuple:
        return (self.n,) * self.dim

    def snapshot_times(self) -> np.ndarray:
        """Times at which solvers retain snapshots, t=0 included."""
        m = self.n_steps // self.snap_stride
        return np.arange(m + 1) * self.snap_dt

    @staticmethod
    def create(dim: int, n: int, cfl: float = 0.25, t_end: float = 1.0) -> "GridSpec":
        """Derive dt = cfl*dx^2 and the coarsest admissible snapshot cadence."""
        if not (0 < cfl <= 0.25):
            raise GridError(f"cfl must lie in (0, 1/4], got {cfl}")
        dx = 1.0 / n
        dt = cfl * dx * dx
        stride = max(1, int(round(16.0 / cfl)))
        while stride * dt > 16.0 * dx * dx * (1 + 1e-12):
            stride //= 2
        return GridSpec(dim=dim, n=n, t_end=t_end, dt=dt, snap_stride=stride)

    def to_dict(self) -> dict:
        return {
            "dim": self.dim,
            "n": self.n,
            "t_end": self.t_end,
            "dt": self.dt,
            "snap_stride": self.snap_stride,
        }


def torus_delta(x1, x2) -> np.ndarray:
    """Signed shortest representative of x1 - x2 on the unit torus, per axis."""
    d = np.asarray(x1, dtype=float) - np.asarray(x2, dtype=float)
    return (d + 0.5) % 1.0 - 0.5


def torus_distance(x1, x2) -> float:
    return float(np.linalg.norm(torus_delta(x1, x2)))


def cc_distance(z1, z2) -> float:
    """Parabolic distance |t-t'|^(1/2) + |x-x'| with periodic spatial part."""
    t1, x1 = z1
    t2, x2 = z2
    return math.sqrt(abs(t1 - t2)) + torus_distance(x1, x2)


@dataclass(frozen=True)
class SpaceTimeField:
    """Snapshots of a scalar/vector/matrix field on the grid.

    ``values`` has shape (T, n[, n], *component-dims); fields are implicitly
    zero for t <= 0.  Instances are immutable; the stored array view is
    read-only.
    """

    grid: GridSpec
    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if values.shape[0] != times.shape[0]:
            raise GridError("values and times disagree on snapshot count")
        if values.shape[1 : 1 + self.grid.dim] != self.grid.shape:
            raise GridError(
                f"spatial shape {values.shape[1:1 + self.grid.dim]} does not match grid {self.grid.shape}"
            )
        if times.ndim != 1 or (len(times) > 1 and np.any(np.diff(times) <= 0)):
            raise GridError("snapshot times must be strictly increasing")
        if not np.all(np.isfinite(values)):
            raise GridError("field values must be finite")
        tv = times.view()
        vv = values.view()
        tv.flags.writeable = False
        vv.flags.writeable = False
        object.__setattr__(self, "times", tv)
        object.__setattr__(self, "values", vv)

    @property
    def component_shape(self) -> tuple:
        return self.values.shape[1 + self.grid.dim :]

    @property
    def is_scalar(self) -> bool:
        return self.component_shape == ()

    def time_index(self, t: float, tol: float = None) -> int:
        """Index of the snapshot nearest to t; error if none is close."""
        idx = int(np.argmin(np.abs(self.times - t)))
        tol = 0.5 * self.grid.snap_dt if tol is None else tol
        if abs(self.times[idx] - t) > tol + 1e-14:
            raise GridError(f"no snapshot near t={t}")
        return idx

    def node_index(self, x) -> tuple:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        idx = np.round(x * self.grid.n).astype(int) % self.grid.n
        if np.max(np.abs(torus_delta(x, idx / self.grid.n))) > 1e-9:
            raise GridError(f"point {x} is not a grid node")
        return tuple(int(i) for i in idx)

    def value_at(self, t: float, x):
        it = self.time_index(t)
        return self.values[(it,) + self.node_index(x)]


def increment(f: SpaceTimeField, y) -> SpaceTimeField:
    """Spatial increment f(t, x+y) - f(t, x) for a lattice shift y."""
    y = np.atleast_1d(np.asarray(y, dtype=float))
    if y.shape != (f.grid.dim,):
        raise GridError(f"shift must have {f.grid.dim} components")
    steps = y / f.grid.dx
    s = np.round(steps).astype(int)
    if np.max(np.abs(steps - s)) > 1e-9:
        raise GridError(f"shift {y} is not a lattice vector")
    shifted = f.values
    for axis, si in enumerate(s):
        if si:
            shifted = np.roll(shifted, -int(si), axis=1 + axis)
    return SpaceTimeField(f.grid, f.times, shifted - f.values)


def lattice_shifts(grid: GridSpec, max_norm: float, budget: int = None) -> np.ndarray:
    """Nonzero lattice vectors y with |y| <= max_norm, optionally thinned.

    Thinning keeps a deterministic stride-decimated subset that always
    includes the extreme axis-aligned shifts.
    """
    m = int(math.floor(max_norm / grid.dx + 1e-9))
    if m < 1:
        return np.zeros((0, grid.dim))
    if grid.dim == 1:
        offs = np.arange(-m, m + 1)
        shifts = offs[offs != 0].reshape(-1, 1)
    else:
        rng_off = np.arange(-m, m + 1)
        ox, oy = np.meshgrid(rng_off, rng_off, indexing="ij")
        pts = np.stack([ox.ravel(), oy.ravel()], axis=1)
        norms = np.linalg.norm(pts, axis=1)
        keep = (norms > 0) & (norms * grid.dx <= max_norm + 1e-12)
        shifts = pts[keep]
    if budget is not None and len(shifts) > budget:
        extremes = [s for s in shifts if np.count_nonzero(s) == 1 and np.max(np.abs(s)) == m]
        stride = int(np.ceil(len(shifts) / max(budget - len(extremes), 1)))
        thinned = shifts[::stride]
        shifts = np.unique(np.vstack([thinned] + [np.asarray(extremes)]), axis=0)
    return shifts * grid.dx


@dataclass(frozen=True)
class ParabolicCylinder:
    """Backward cylinder (t'-r^2, t'] x B_r(x') around basepoint z = (t', x')."""

    t: float
    x: tuple
    r: float

    def __post_init__(self):
        if not (self.r > 0 and self.r < 0.5):
            raise GridError(f"cylinder radius must lie in (0, 1/2), got {self.r}")
        object.__setattr__(self, "x", tuple(float(v) for v in np.atleast_1d(self.x)))

    @property
    def basepoint(self) -> tuple:
        return (self.t, self.x)


@dataclass(frozen=True)
class CylinderSamples:
    """Grid samples of a field over a parabolic cylinder.

    ``values`` has shape (Ts, Nn, *components); the last time row is the
    basepoint time, and ``xrel[j]`` is the signed torus displacement of node j
    from the basepoint.  Times below zero carry the implicit zero extension.
    """

    times: np.ndarray
    xrel: np.ndarray
    values: np.ndarray
    basepoint_node: int

    @property
    def n_samples(self) -> int:
        return self.values.shape[0] * self.values.shape[1]

    @property
    def basepoint_value(self):
        return self.values[-1, self.basepoint_node]

    def flat(self) -> tuple:
        """(xrel, values) with time and node axes merged."""
        ts, nn = self.values.shape[:2]
        comp = self.values.shape[2:]
        x = np.broadcast_to(self.xrel[None, :, :], (ts, nn, self.xrel.shape[1]))
        return x.reshape(ts * nn, -1), self.values.reshape((ts * nn,) + comp)


def cylinder_samples(f: SpaceTimeField, cyl: ParabolicCylinder) -> CylinderSamples:
    """All grid nodes with torus distance < r from x', at snapshots in (t'-r^2, t']."""
    grid = f.grid
    it = f.time_index(cyl.t)
    t0 = f.times[it]
    lo = t0 - cyl.r * cyl.r
    j0 = int(np.searchsorted(f.times, lo + 1e-14, side="right"))
    if j0 > it:
        raise GridError("empty time slab: snapshot cadence insufficient for radius")

    node0 = f.node_index(cyl.x)
    m = int(math.ceil(cyl.r / grid.dx)) - 1
    offs = np.arange(-m, m + 1)
    if grid.dim == 1:
        sel = offs * grid.dx
        keep = np.abs(sel) < cyl.r - 1e-12
        offs1 = offs[keep]
        nodes = (node0[0] + offs1) % grid.n
        xrel = (offs1 * grid.dx).reshape(-1, 1)
        vals = f.values[j0 : it + 1][:, nodes]
        bnode = int(np.nonzero(offs1 == 0)[0][0])
    else:
        ox, oy = np.meshgrid(offs, offs, indexing="ij")
        pts = np.stack([ox.ravel(), oy.ravel()], axis=1)
        keep = np.linalg.norm(pts * grid.dx, axis=1) < cyl.r - 1e-12
        pts = pts[keep]
        nodes = ((node0[0] + pts[:, 0]) % grid.n, (node0[1] + pts[:, 1]) % grid.n)
        xrel = pts * grid.dx
        vals = f.values[j0 : it + 1][:, nodes[0], nodes[1]]
        bnode = int(np.nonzero((pts == 0).all(axis=1))[0][0])

    times = f.times[j0 : it + 1].copy()
    # zero-extension below t = 0, on the snapshot cadence
    n_below = 0
    snap_dt = grid.snap_dt
    if f.times[0] <= snap_dt and lo < f.times[0] - snap_dt:
        n_below = int(math.floor((f.times[0] - lo) / snap_dt - 1e-12))
    if n_below > 0:
        below = f.times[0] - snap_dt * np.arange(n_below, 0, -1)
        times = np.concatenate([below, times])
        vals = np.concatenate([np.zeros((n_below,) + vals.shape[1:]), vals])
    return CylinderSamples(times=times, xrel=xrel, values=vals, basepoint_node=bnode)


# ---------------------------------------------------------------------------
# Mollification
# ---------------------------------------------------------------------------

def _bump(u2: np.ndarray) -> np.ndarray:
    """exp(-1/(1-|u|^2)) for |u| < 1, zero outside (u2 = |u|^2)."""
    out = np.zeros_like(u2)
    inside = u2 < 1.0
    out[inside] = np.exp(-1.0 / (1.0 - u2[inside]))
    return out


@dataclass(frozen=True)
class Mollifier:
    """Discrete kernels for the rescaled radial bump at scale r.

    ``mass_kernel`` integrates to exactly 1 after renormalization and has
    vanishing first moments by symmetry.  ``deriv_kernels[i]`` samples the
    i-th partial derivative of the rescaled bump (same renormalization), so
    convolving with it approximates the partial derivative of the smoothing.
    """

    grid: GridSpec
    r: float
    mass_kernel: np.ndarray = field(repr=False)
    deriv_kernels: tuple = field(repr=False)

    @staticmethod
    def build(grid: GridSpec, r: float) -> "Mollifier":
        if not (2 * grid.dx <= r < 0.5):
            raise GridError(f"mollifier scale must lie in [2*dx, 1/2), got {r}")
        n, dx, d = grid.n, grid.dx, grid.dim
        m = int(math.ceil(r / dx))
        offs = np.arange(-m, m + 1)
        if d == 1:
            u = offs * dx / r
            u2 = u * u
            raw = _bump(u2)
            # d/du of the bump, times the chain rule factor 1/r
            du = np.zeros_like(u)
            inside = u2 < 1.0
            du[inside] = raw[inside] * (-2.0 * u[inside] / (1.0 - u2[inside]) ** 2)
            quad = (dx / r) ** d
            mass = raw * quad
            z = mass.sum()
            mass = mass / z
            deriv = (du * quad / (r * z),)
            coords = (offs % n,)
        else:
            ux, uy = np.meshgrid(offs * dx / r, offs * dx / r, indexing="ij")
            u2 = ux * ux + uy * uy
            raw = _bump(u2)
            inside = u2 < 1.0
            fac = np.zeros_like(raw)
            fac[inside] = raw[inside] * (-2.0 / (1.0 - u2[inside]) ** 2)
            quad = (dx / r) ** d
            mass = raw * quad
            z = mass.sum()
            mass = mass / z
            deriv = (fac * ux * quad / (r * z), fac * uy * quad / (r * z))
            coords = (offs % n, offs % n)

        def embed(kern):
            full = np.zeros(grid.shape)
            if d == 1:
                np.add.at(full, coords[0], kern)
            else:
                ix, iy = np.meshgrid(coords[0], coords[1], indexing="ij")
                np.add.at(full, (ix, iy), kern)
            return full

        return Mollifier(
            grid=grid,
            r=r,
            mass_kernel=embed(mass),
            deriv_kernels=tuple(embed(k) for k in deriv),
        )


_MOLLIFIER_CACHE: dict = {}


def _mollifier(grid: GridSpec, r: float) -> Mollifier:
    key = (grid.dim, grid.n, round(r / grid.dx))
    if key not in _MOLLIFIER_CACHE:
        _MOLLIFIER_CACHE[key] = Mollifier.build(grid, r)
    return _MOLLIFIER_CACHE[key]


def _convolve(f: SpaceTimeField, kernel: np.ndarray) -> np.ndarray:
    axes = tuple(range(1, 1 + f.grid.dim))
    n = f.grid.n
    khat = np.fft.rfftn(kernel, axes=tuple(range(f.grid.dim)))
    shape = khat.shape
    # align kernel spectrum against (T, spatial..., comp...) value layout
    expand = (1,) * 1 + shape + (1,) * len(f.component_shape)
    fhat = np.fft.rfftn(f.values, axes=axes)
    out = np.fft.irfftn(fhat * khat.reshape(expand), s=f.grid.shape, axes=axes)
    return out


def mollify(f: SpaceTimeField, r: float) -> SpaceTimeField:
    """Convolve each snapshot with the unit-mass bump at scale r (entrywise)."""
    mol = _mollifier(f.grid, r)
    return SpaceTimeField(f.grid, f.times, _convolve(f, mol.mass_kernel))


def mollify_deriv(f: SpaceTimeField, r: float, axis: int) -> SpaceTimeField:
    """Convolve with the sampled i-th partial of the scale-r bump.

    Annihilates constants exactly and approximates the i-th partial
    derivative of ``mollify(f, r)``.
    """
    mol = _mollifier(f.grid, r)
    if not (0 <= axis < f.grid.dim):
        raise GridError(f"axis {axis} out of range for dim {f.grid.dim}")
    return SpaceTimeField(f.grid, f.times, _convolve(f, mol.deriv_kernels[axis]))


# ---------------------------------------------------------------------------
# Spectral gradient
# ---------------------------------------------------------------------------

def _wavenumbers(grid: GridSpec) -> list:
    """2*pi*integer frequencies, shaped for the rfftn layout per axis."""
    n = grid.n
    if grid.dim == 1:
        return [2 * np.pi * np.fft.rfftfreq(n, d=grid.dx)]
    kx = 2 * np.pi * np.fft.fftfreq(n, d=grid.dx)
    ky = 2 * np.pi * np.fft.rfftfreq(n, d=grid.dx)
    return [kx[:, None], ky[None, :]]


def spectral_gradient(f: SpaceTimeField) -> SpaceTimeField:
    """Fourier-exact gradient of a scalar field, returned with a trailing d axis."""
    if not f.is_scalar:
        raise GridError("spectral_gradient expects a scalar field")
    axes = tuple(range(1, 1 + f.grid.dim))
    fhat = np.fft.rfftn(f.values, axes=axes)
    ks = _wavenumbers(f.grid)
    comps = [
        np.fft.irfftn(1j * k[None] * fhat, s=f.grid.shape, axes=axes) for k in ks
    ]
    return SpaceTimeField(f.grid, f.times, np.stack(comps, axis=-1))


# ---------------------------------------------------------------------------
# Snapshot CSV dumps
# ---------------------------------------------------------------------------

def write_field_csv(f: SpaceTimeField, path) -> None:
    """One CSV row per (t, node, component), plus a GridSpec JSON sidecar."""
    path = Path(path)
    dim = f.grid.dim
    comp = f.component_shape
    ncomp = int(np.prod(comp)) if comp else 1
    flat = f.values.reshape(f.values.shape[: 1 + dim] + (ncomp,))
    xs = np.arange(f.grid.n) * f.grid.dx
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t"] + [f"x_{i + 1}" for i in range(dim)] + ["component_index", "value"])
        for it, t in enumerate(f.times):
            for node in np.ndindex(f.grid.shape):
                coords = [repr(float(xs[i])) for i in node]
                for c in range(ncomp):
                    w.writerow([repr(float(t))] + coords + [c, repr(float(flat[(it,) + node + (c,)]))])
    sidecar = {"grid": f.grid.to_dict(), "component_shape": list(comp)}
    path.with_suffix(path.suffix + ".json").write_text(json.dumps(sidecar, sort_keys=True))


def read_field_csv(path) -> SpaceTimeField:
    path = Path(path)
    meta = json.loads(path.with_suffix(path.suffix + ".json").read_text())
    grid = GridSpec(**meta["grid"])
    comp = tuple(meta["component_shape"])
    ncomp = int(np.prod(comp)) if comp else 1
    rows = {}
    with path.open() as fh:
        rd = csv.reader(fh)
        next(rd)
        for row in rd:
            t = float(row[0])
            node = tuple(int(round(float(v) * grid.n)) for v in row[1 : 1 + grid.dim])
            c = int(row[1 + grid.dim])
            rows.setdefault(t, {})[node + (c,)] = float(row[2 + grid.dim])
    times = np.array(sorted(rows))
    values = np.zeros((len(times),) + grid.shape + (ncomp,))
    for it, t in enumerate(times):
        for key, v in rows[t].items():
            values[(it,) + key] = v
    if not comp:
        values = values[..., 0]
    else:
        values = values.reshape(values.shape[: 1 + grid.dim] + comp)
    return SpaceTimeField(grid, times, values)
