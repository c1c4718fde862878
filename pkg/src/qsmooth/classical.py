"""Grid-based classical filtering and time-symmetric smoothing.

The signal model is a jump-diffusion generator (drift, diagonal diffusion,
jump kernels) discretized in conservative finite-volume form: first-order
upwind drift, central diffusion, tabulated jump rates. The discrete adjoint
used by the backward (retrodictive) equations is the exact transpose of the
assembled forward generator, which makes the forward/backward duality
pairing conserved to roundoff step by step.

Observations are Poissonian click channels with state-dependent intensities.
`snyder_step` is the normalized nonlinear filter; `pardoux_forward_step` and
`retrodictive_backward_step` are the linear unnormalized forward/backward
updates whose product gives the smoothing density.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .errors import (
    DegenerateRecordError,
    DimensionMismatchError,
    ImpossibleEventError,
    ModelError,
    StepSizeError,
)
from .grids import ClassicalGrid, DensityGrid
from .output import SmootherOutput
from .records import MeasurementRecord

BC_REFLECTING = "reflecting"
BC_ABSORBING = "absorbing"
BC_PERIODIC = "periodic"
_BCS = (BC_REFLECTING, BC_ABSORBING, BC_PERIODIC)


@dataclass
class ClassicalModel:
    """Jump-diffusion generator pieces plus click intensities.

    drift and diffusion are per-axis entries, each either a constant, an
    array over the grid, or a callable of the flattened coordinate arrays
    (one positional argument per axis). diffusion entries are the diagonal
    B_aa of the diffusion matrix; cross terms are not supported.

    jumps is a list of (axis, K) pairs. K[i, j] >= 0 is the transition rate
    from point j to point i along that axis (diagonal entries are ignored
    and recomputed as -column sums). axis=None means K addresses the full
    flattened grid, which is practical only for small grids.

    intensities holds one entry per click channel, same evaluation rules as
    drift.
    """

    drift: Sequence | None = None
    diffusion: Sequence | None = None
    jumps: Sequence[tuple[int | None, np.ndarray]] = field(default_factory=tuple)
    intensities: Sequence = field(default_factory=tuple)

    def discretize(self, grid: ClassicalGrid, bcs: Sequence[str] | str = BC_REFLECTING):
        return DiscreteClassicalModel(self, grid, bcs)


def _eval_field(spec, grid: ClassicalGrid) -> np.ndarray:
    """Evaluate a constant / array / callable field to a flat (npoints,) array."""
    if callable(spec):
        vals = np.asarray(spec(*grid.coords()), dtype=float)
        return np.broadcast_to(vals, (grid.npoints,)).astype(float).ravel()
    vals = np.asarray(spec, dtype=float)
    if vals.ndim == 0:
        return np.full(grid.npoints, float(vals))
    if vals.shape == grid.shape or vals.size == grid.npoints:
        return vals.reshape(grid.npoints).astype(float)
    raise DimensionMismatchError(f"field of shape {vals.shape} does not fit grid {grid.shape}")


def _face_pairs(shape, axis, periodic):
    """Index arrays (left cells, right cells) for the interior faces of one axis."""
    idx = np.arange(int(np.prod(shape))).reshape(shape)
    left = np.moveaxis(idx, axis, 0)[:-1].ravel()
    right = np.moveaxis(idx, axis, 0)[1:].ravel()
    if periodic and shape[axis] > 1:
        wrap_l = np.moveaxis(idx, axis, 0)[-1].ravel()
        wrap_r = np.moveaxis(idx, axis, 0)[0].ravel()
        left = np.concatenate([left, wrap_l])
        right = np.concatenate([right, wrap_r])
    return left, right


def _boundary_cells(shape, axis, side):
    idx = np.arange(int(np.prod(shape))).reshape(shape)
    sl = np.moveaxis(idx, axis, 0)
    return (sl[0] if side == "lower" else sl[-1]).ravel()


class DiscreteClassicalModel:
    """A ClassicalModel bound to a grid: assembled generator plus intensities.

    Exposes the sparse forward generator G (d/dt P = G P on flattened
    densities), its transpose for the adjoint flow, per-channel intensity
    tables, and the stability bounds used by the CFL check.
    """

    def __init__(self, model: ClassicalModel, grid: ClassicalGrid, bcs):
        if isinstance(bcs, str):
            bcs = (bcs,) * grid.ndim
        if len(bcs) != grid.ndim or any(b not in _BCS for b in bcs):
            raise ModelError(f"boundary conditions must be one of {_BCS} per axis")
        self.model = model
        self.grid = grid
        self.bcs = tuple(bcs)
        self._assemble()
        lams = []
        for lam_spec in model.intensities:
            lam = _eval_field(lam_spec, grid)
            if np.any(lam < 0):
                raise ModelError("click intensities must be nonnegative on the grid")
            lams.append(lam)
        self.lambdas = np.array(lams) if lams else np.zeros((0, grid.npoints))

    # -- generator assembly -------------------------------------------------

    def _assemble(self):
        grid, model = self.grid, self.model
        n = grid.npoints
        shape = grid.shape
        dx = grid.spacings
        rows, cols, vals = [], [], []

        def add(r, c, v):
            rows.append(np.asarray(r).ravel())
            cols.append(np.asarray(c).ravel())
            vals.append(np.asarray(v, dtype=float).ravel())

        self.max_drift_rate = 0.0  # max |A| / dx, times dt must stay <= 1
        self.max_diffusion_rate = 0.0  # max B / dx^2, times dt must stay <= 1/2

        drift = model.drift or [None] * grid.ndim
        diffusion = model.diffusion or [None] * grid.ndim
        if len(drift) != grid.ndim or len(diffusion) != grid.ndim:
            raise DimensionMismatchError("drift/diffusion need one entry per axis")

        for a in range(grid.ndim):
            if shape[a] < 2:
                continue
            periodic = self.bcs[a] == BC_PERIODIC
            absorbing = self.bcs[a] == BC_ABSORBING
            left, right = _face_pairs(shape, a, periodic)

            if drift[a] is not None:
                A = _eval_field(drift[a], grid)
                a_face = 0.5 * (A[left] + A[right])
                self.max_drift_rate = max(
                    self.max_drift_rate,
                    float(np.max(np.abs(a_face), initial=0.0)) / dx[a],
                )
                pos = np.maximum(a_face, 0.0) / dx[a]
                neg = np.minimum(a_face, 0.0) / dx[a]
                # upwind flux F = pos*P_left + neg*P_right leaves `left`, enters `right`
                add(left, left, -pos)
                add(left, right, -neg)
                add(right, left, pos)
                add(right, right, neg)
                if absorbing:
                    lo = _boundary_cells(shape, a, "lower")
                    hi = _boundary_cells(shape, a, "upper")
                    add(lo, lo, np.minimum(A[lo], 0.0) / dx[a])  # outflow through lower face
                    add(hi, hi, -np.maximum(A[hi], 0.0) / dx[a])

            if diffusion[a] is not None:
                B = _eval_field(diffusion[a], grid)
                if np.any(B < -1e-14):
                    raise ModelError("diagonal diffusion must be nonnegative")
                self.max_diffusion_rate = max(
                    self.max_diffusion_rate, float(B.max(initial=0.0)) / dx[a] ** 2
                )
                d_face = 0.5 * (B[left] + B[right]) / 2.0  # D = B/2 at faces
                rate = d_face / dx[a] ** 2
                add(left, left, -rate)
                add(left, right, rate)
                add(right, right, -rate)
                add(right, left, rate)
                if absorbing:
                    lo = _boundary_cells(shape, a, "lower")
                    hi = _boundary_cells(shape, a, "upper")
                    add(lo, lo, -(B[lo] / 2.0) / dx[a] ** 2)
                    add(hi, hi, -(B[hi] / 2.0) / dx[a] ** 2)

        G = sp.coo_matrix(
            (np.concatenate(vals) if vals else np.zeros(0),
             (np.concatenate(rows) if rows else np.zeros(0, dtype=int),
              np.concatenate(cols) if cols else np.zeros(0, dtype=int))),
            shape=(n, n),
        ).tocsr()

        self.max_jump_rate = 0.0
        for axis, K in model.jumps:
            if axis is None:
                K = np.asarray(K, dtype=float)
                if K.shape != (n, n):
                    raise DimensionMismatchError("full jump matrix must be (npoints, npoints)")
                J = sp.csr_matrix(K)
            else:
                K = np.asarray(K, dtype=float)
                na = shape[axis]
                if K.shape != (na, na):
                    raise DimensionMismatchError(f"axis {axis} jump matrix must be ({na}, {na})")
                pre = int(np.prod(shape[:axis])) if axis > 0 else 1
                post = int(np.prod(shape[axis + 1:])) if axis + 1 < grid.ndim else 1
                J = sp.kron(sp.eye(pre), sp.kron(sp.csr_matrix(K), sp.eye(post)), format="csr")
            J = J.tolil()
            J.setdiag(0.0)
            J = J.tocsr()
            if J.nnz and J.data.min() < 0:
                raise ModelError("jump rates must be nonnegative off the diagonal")
            out_rate = np.asarray(J.sum(axis=0)).ravel()
            self.max_jump_rate = max(self.max_jump_rate, float(out_rate.max(initial=0.0)))
            G = G + J - sp.diags(out_rate)

        self.generator = G.tocsr()
        self.generator_T = self.generator.T.tocsr()

    # -- stepping -----------------------------------------------------------

    def cfl_check(self, dt: float):
        if dt <= 0:
            raise StepSizeError("dt must be positive")
        if self.max_drift_rate * dt > 1.0:
            raise StepSizeError(
                f"drift CFL violated: |A| dt/dx = {self.max_drift_rate * dt:.3g} > 1"
            )
        if self.max_diffusion_rate * dt > 0.5:
            raise StepSizeError(
                f"diffusion CFL violated: B dt/dx^2 = {self.max_diffusion_rate * dt:.3g} > 1/2"
            )
        if self.max_jump_rate * dt > 1.0:
            raise StepSizeError("jump out-rate times dt exceeds 1")

    def expected_intensity(self, values_flat: np.ndarray) -> np.ndarray:
        """Per-channel <lambda> under the (normalized) flat density."""
        return self.lambdas @ values_flat * self.grid.cell_volume


def _require_same_grid(d: DensityGrid, m: DiscreteClassicalModel):
    if d.grid != m.grid:
        raise DimensionMismatchError("density and model grids differ")


def ck_step(P: DensityGrid, dmodel: DiscreteClassicalModel, dt: float) -> DensityGrid:
    """One explicit step of the prior jump-diffusion propagation.

    Negative undershoot from the explicit update is clamped at zero; when the
    input is normalized the output is renormalized as well.
    """
    _require_same_grid(P, dmodel)
    dmodel.cfl_check(dt)
    v = P.values.ravel()
    out = v + dt * (dmodel.generator @ v)
    np.maximum(out, 0.0, out=out)
    result = DensityGrid(P.grid, out.reshape(P.grid.shape))
    return result.normalize() if P.normalized else result


def snyder_step(
    F: DensityGrid, dmodel: DiscreteClassicalModel, dN: Sequence[int], dt: float
) -> DensityGrid:
    """Normalized nonlinear filter update for Poissonian click channels."""
    _require_same_grid(F, dmodel)
    if not F.normalized:
        raise ModelError("filter input must be normalized")
    dmodel.cfl_check(dt)
    dN = np.atleast_1d(np.asarray(dN))
    if dN.size != dmodel.lambdas.shape[0]:
        raise DimensionMismatchError("one click increment per channel required")
    v = F.values.ravel()
    out = v + dt * (dmodel.generator @ v)
    lam_bar = dmodel.expected_intensity(v)
    for mu, lam in enumerate(dmodel.lambdas):
        if dN[mu] and lam_bar[mu] <= 0.0:
            raise ImpossibleEventError(f"click on channel {mu} with zero expected intensity")
        if lam_bar[mu] > 0.0:
            coeff = (dN[mu] - dt * lam_bar[mu]) / lam_bar[mu]
            out += coeff * (lam - lam_bar[mu]) * v
        else:
            out += -dt * lam * v  # zero-intensity limit of the innovation term
    np.maximum(out, 0.0, out=out)
    return DensityGrid(F.grid, out.reshape(F.grid.shape)).normalize()


def _measurement_factor(lambdas: np.ndarray, dN, dt: float) -> np.ndarray:
    """Sum over channels of (dN - dt)(lambda - 1), as a flat multiplier field."""
    dN = np.atleast_1d(np.asarray(dN, dtype=float))
    if dN.size != lambdas.shape[0]:
        raise DimensionMismatchError("one click increment per channel required")
    if lambdas.shape[0] == 0:
        return np.zeros(1)
    return ((dN - dt)[:, None] * (lambdas - 1.0)).sum(axis=0)


def pardoux_forward_step(
    f: DensityGrid, dmodel: DiscreteClassicalModel, dN, dt: float
) -> DensityGrid:
    """Linear unnormalized forward update; exactly linear in f."""
    _require_same_grid(f, dmodel)
    dmodel.cfl_check(dt)
    v = f.values.ravel()
    out = v + dt * (dmodel.generator @ v) + _measurement_factor(dmodel.lambdas, dN, dt) * v
    return DensityGrid(f.grid, out.reshape(f.grid.shape))


def retrodictive_backward_step(
    g: DensityGrid, dmodel: DiscreteClassicalModel, dN, dt: float
) -> DensityGrid:
    """Linear backward update of the retrodictive likelihood.

    Steps g from t+dt to t using the transpose of the assembled forward
    generator, with the same per-step measurement factor as the forward
    equation.
    """
    _require_same_grid(g, dmodel)
    dmodel.cfl_check(dt)
    v = g.values.ravel()
    out = v + dt * (dmodel.generator_T @ v) + _measurement_factor(dmodel.lambdas, dN, dt) * v
    return DensityGrid(g.grid, out.reshape(g.grid.shape))


def combine_smooth(f: DensityGrid, g: DensityGrid) -> DensityGrid:
    """Smoothing density h = g f / integral(g f)."""
    if f.grid != g.grid:
        raise DimensionMismatchError("forward and backward densities live on different grids")
    w = f.values * g.values
    total = float(w.sum() * f.grid.cell_volume)
    if total <= 0.0:
        raise DegenerateRecordError("zero overlap between forward and backward densities")
    return DensityGrid(f.grid, w / total, normalized=True)


# -- record sweeps ----------------------------------------------------------


def filter_sweep(
    dmodel: DiscreteClassicalModel,
    record: MeasurementRecord,
    prior: DensityGrid,
    store_stride: int = 1,
):
    """Run the normalized filter over a record.

    Returns (times, densities) where densities[k] is the filtering density
    at the stored mesh times (always including t0 and T).
    """
    stored_idx, stored = [], []
    F = prior if prior.normalized else prior.normalize()
    stored_idx.append(0)
    stored.append(F.values.ravel().copy())
    for k in range(record.n_steps):
        F = snyder_step(F, dmodel, record.counts[k], record.dt)
        if (k + 1) % store_stride == 0 or k + 1 == record.n_steps:
            stored_idx.append(k + 1)
            stored.append(F.values.ravel().copy())
    times = record.t0 + record.dt * np.asarray(stored_idx)
    return times, np.asarray(stored)


def _linear_sweep(dmodel, record, v0, store_stride, direction, rescale):
    """Shared driver for the forward/backward linear sweeps (flat arrays)."""
    G = dmodel.generator if direction == "forward" else dmodel.generator_T
    lambdas = dmodel.lambdas
    dt = record.dt
    n_steps = record.n_steps
    v = v0.astype(float).copy()
    step_order = range(n_steps) if direction == "forward" else range(n_steps - 1, -1, -1)

    snapshots = {}
    logscale = {}
    scale = 0.0
    if direction == "forward":
        snapshots[0] = v.copy()
        logscale[0] = scale
    else:
        snapshots[n_steps] = v.copy()
        logscale[n_steps] = scale
    for k in step_order:
        v = v + dt * (G @ v) + _measurement_factor(lambdas, record.counts[k], dt) * v
        if rescale:
            m = float(np.abs(v).max())
            if m > 0.0:
                v /= m
                scale += np.log(m)
        idx = k + 1 if direction == "forward" else k
        if idx % store_stride == 0 or idx in (0, n_steps):
            snapshots[idx] = v.copy()
            logscale[idx] = scale
    return snapshots, logscale


def pardoux_sweep(dmodel, record, prior: DensityGrid, store_stride: int = 1, rescale: bool = True):
    """Forward linear sweep; returns times, stacked snapshots and log scales."""
    snaps, logs = _linear_sweep(
        dmodel, record, prior.values.ravel(), store_stride, "forward", rescale
    )
    idx = np.array(sorted(snaps))
    times = record.t0 + record.dt * idx
    return times, np.asarray([snaps[i] for i in idx]), np.asarray([logs[i] for i in idx])


def retrodictive_sweep(dmodel, record, store_stride: int = 1, rescale: bool = True):
    """Backward linear sweep from the flat terminal condition g(T) = 1."""
    g_T = np.ones(dmodel.grid.npoints)
    snaps, logs = _linear_sweep(dmodel, record, g_T, store_stride, "backward", rescale)
    idx = np.array(sorted(snaps))
    times = record.t0 + record.dt * idx
    return times, np.asarray([snaps[i] for i in idx]), np.asarray([logs[i] for i in idx])


def smooth_record(
    dmodel: DiscreteClassicalModel,
    record: MeasurementRecord,
    prior: DensityGrid,
    store_stride: int = 1,
    keep_densities: bool = False,
) -> SmootherOutput:
    """Time-symmetric smoothing over a full record.

    Runs the linear forward and backward sweeps, combines them at the stored
    mesh times, and reports posterior moments for both the filtering
    (normalized forward) and smoothing densities.
    """
    t_f, f_snap, _ = pardoux_sweep(dmodel, record, prior, store_stride)
    t_g, g_snap, _ = retrodictive_sweep(dmodel, record, store_stride)
    if t_f.shape != t_g.shape or not np.allclose(t_f, t_g):
        raise DimensionMismatchError("forward/backward snapshot meshes differ")
    grid = dmodel.grid
    vol = grid.cell_volume
    coords = grid.coords()

    def moments(rows):
        w = np.clip(rows, 0.0, None) * vol
        tot = w.sum(axis=1, keepdims=True)
        tot[tot == 0.0] = 1.0
        w = w / tot
        means = np.stack([w @ c for c in coords], axis=1)
        vars_ = np.stack([w @ (c**2) for c in coords], axis=1) - means**2
        return means, np.maximum(vars_, 0.0)

    prod = f_snap * g_snap
    totals = prod.sum(axis=1) * vol
    if np.any(totals <= 0.0):
        raise DegenerateRecordError("zero forward/backward overlap at some stored time")
    h_rows = prod / totals[:, None]
    s_mean, s_var = moments(h_rows)
    f_mean, f_var = moments(f_snap)
    return SmootherOutput(
        times=t_f,
        grid=grid,
        smooth_mean=s_mean,
        smooth_var=s_var,
        filter_mean=f_mean,
        filter_var=f_var,
        densities=h_rows if keep_densities else None,
        filter_densities=(
            f_snap / (f_snap.sum(axis=1, keepdims=True) * vol) if keep_densities else None
        ),
    )
