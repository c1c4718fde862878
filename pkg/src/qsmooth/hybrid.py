"""Hybrid classical-quantum filtering and time-symmetric smoothing.

States are operator-valued densities over a classical grid (HybridOperator).
The generator splits into a quantum part (Hamiltonian plus optional fixed
dissipators), a classical-conditioned coupling Hamiltonian, and the classical
jump-diffusion generator acting entrywise across the grid. Poissonian click
channels and Gaussian (homodyne-type) channels drive the measurement terms.

All updates are single additive explicit Euler steps. That choice makes the
backward effect equation the exact algebraic adjoint of the forward update,
so the pairing integral dx tr[g f] is conserved along a record to roundoff,
not merely to discretization order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .classical import DiscreteClassicalModel
from .errors import (
    DegenerateRecordError,
    DimensionMismatchError,
    ImpossibleEventError,
    ModelError,
)
from .grids import DensityGrid, HybridOperator
from .linalg import adjoint, herm_defect, symmetrize
from .output import SmootherOutput
from .records import MeasurementRecord

_ZERO_INTENSITY = 1e-300


def _as_op_stack(op, npoints: int, dim: int | None) -> np.ndarray:
    """Normalize a channel operator to an (npoints, d, d) complex stack."""
    a = np.asarray(op, dtype=complex)
    if a.ndim == 2:
        a = a[None, :, :]
    if a.ndim != 3 or a.shape[-1] != a.shape[-2]:
        raise DimensionMismatchError(f"operator stack has shape {a.shape}")
    if a.shape[0] not in (1, npoints):
        raise DimensionMismatchError("operator stack must be constant or per grid point")
    if dim is not None and a.shape[-1] != dim:
        raise DimensionMismatchError("operator dimension mismatch")
    if not np.all(np.isfinite(a.view(float))):
        raise ModelError("operator contains non-finite entries")
    return a


class HybridModel:
    """Generator and measurement channels for a hybrid system on a grid.

    hamiltonian is the bare quantum Hamiltonian; coupling(x) adds the
    classical-conditioned interaction Hamiltonian evaluated per grid point
    (callable of the flattened coordinate arrays returning (npoints, d, d),
    or a precomputed stack). lindblads are fixed dissipators belonging to the
    prior quantum evolution, not to any measurement channel. jump_ops are the
    click-channel operators; gauss_ops and R define the Gaussian channels.
    classical is a DiscreteClassicalModel bound to the same grid (its own
    intensity table is not used here).
    """

    def __init__(
        self,
        grid,
        dim,
        hamiltonian=None,
        coupling=None,
        lindblads=(),
        jump_ops=(),
        gauss_ops=(),
        R=None,
        classical=None,
    ):
        self.grid = grid
        self.dim = int(dim)
        n = grid.npoints

        h_total = np.zeros((1, dim, dim), dtype=complex)
        if hamiltonian is not None:
            h_total = h_total + _as_op_stack(hamiltonian, n, dim)
        if coupling is not None:
            if callable(coupling):
                coords = grid.coords()
                stack = np.asarray(coupling(*coords), dtype=complex)
                if stack.shape == (dim, dim):
                    stack = stack[None, :, :]
            else:
                stack = coupling
            h_total = h_total + _as_op_stack(stack, n, dim)
        if herm_defect(h_total) > 1e-10 * max(1.0, float(np.abs(h_total).max())):
            raise ModelError("total Hamiltonian must be Hermitian per grid point")
        self.h_total = h_total if h_total.shape[0] > 1 or np.any(h_total) else None

        self.lindblads = [_as_op_stack(L, n, dim) for L in lindblads]
        self.jump_ops = [_as_op_stack(L, n, dim) for L in jump_ops]
        self._lind_LdL = [adjoint(L) @ L for L in self.lindblads]
        self._jump_LdL = [adjoint(L) @ L for L in self.jump_ops]

        self.gauss_ops = [_as_op_stack(C, n, dim) for C in gauss_ops]
        if self.gauss_ops:
            if R is None:
                raise ModelError("gaussian channels need a covariance rate R")
            R = np.atleast_2d(np.asarray(R, dtype=float))
            if R.shape != (len(self.gauss_ops),) * 2:
                raise DimensionMismatchError("R must be m x m for m gaussian channels")
            if np.max(np.abs(R - R.T)) > 1e-12 or np.linalg.eigvalsh(R).min() <= 0:
                raise ModelError("R must be symmetric positive-definite")
            self.R = R
            self.Rinv = np.linalg.inv(R)
            # S = sum_jk Rinv[j,k] C_j^dag C_k, shared by both dt/8 blocks
            m = len(self.gauss_ops)
            S = np.zeros((1, dim, dim), dtype=complex)
            for j in range(m):
                for k in range(m):
                    S = S + self.Rinv[j, k] * (adjoint(self.gauss_ops[j]) @ self.gauss_ops[k])
            self.gauss_S = S
        else:
            self.R = None
            self.Rinv = None
            self.gauss_S = None

        if classical is not None and classical.grid != grid:
            raise DimensionMismatchError("classical generator bound to a different grid")
        self.classical = classical

    @property
    def n_jump_channels(self) -> int:
        return len(self.jump_ops)

    @property
    def n_gauss_channels(self) -> int:
        return len(self.gauss_ops)

    def cfl_check(self, dt: float):
        if self.classical is not None:
            self.classical.cfl_check(dt)

    # -- generator pieces (all return d(mats), not updated states) ----------

    def _classical_term(self, mats: np.ndarray) -> np.ndarray:
        if self.classical is None:
            return 0.0
        n, d = mats.shape[0], mats.shape[-1]
        flat = mats.reshape(n, d * d)
        return (self.classical.generator @ flat).reshape(n, d, d)

    def _classical_term_adjoint(self, mats: np.ndarray) -> np.ndarray:
        if self.classical is None:
            return 0.0
        n, d = mats.shape[0], mats.shape[-1]
        flat = mats.reshape(n, d * d)
        return (self.classical.generator_T @ flat).reshape(n, d, d)

    def _hamiltonian_term(self, mats: np.ndarray, sign: float) -> np.ndarray:
        # sign=-1 gives -i[H, .], sign=+1 the adjoint +i[H, .]
        if self.h_total is None:
            return 0.0
        return sign * 1j * (self.h_total @ mats - mats @ self.h_total)

    def _dissipator(self, mats, L, LdL):
        return L @ mats @ adjoint(L) - 0.5 * (LdL @ mats + mats @ LdL)

    def _dissipator_adjoint(self, mats, L, LdL):
        return adjoint(L) @ mats @ L - 0.5 * (mats @ LdL + LdL @ mats)

    def _gauss_block(self, mats):
        """dt/8 Gaussian decoherence block of the forward equations."""
        acc = np.zeros_like(mats)
        m = len(self.gauss_ops)
        for j in range(m):
            for k in range(m):
                acc += self.Rinv[j, k] * (self.gauss_ops[j] @ mats @ adjoint(self.gauss_ops[k]))
        return 0.125 * (2.0 * acc - self.gauss_S @ mats - mats @ self.gauss_S)

    def _gauss_block_adjoint(self, mats):
        acc = np.zeros_like(mats)
        m = len(self.gauss_ops)
        for j in range(m):
            for k in range(m):
                acc += self.Rinv[j, k] * (adjoint(self.gauss_ops[k]) @ mats @ self.gauss_ops[j])
        return 0.125 * (2.0 * acc - mats @ self.gauss_S - self.gauss_S @ mats)

    def _record_operator(self, dy) -> np.ndarray:
        """X = C^T R^-1 dy as an operator stack."""
        dy = np.atleast_1d(np.asarray(dy, dtype=float))
        if dy.size != len(self.gauss_ops):
            raise DimensionMismatchError("one gaussian increment per channel required")
        w = self.Rinv @ dy
        X = np.zeros((1, self.dim, self.dim), dtype=complex)
        for j, C in enumerate(self.gauss_ops):
            X = X + w[j] * C
        return X

    def expected_intensities(self, state: HybridOperator) -> np.ndarray:
        """Per click channel <L^dag L> = integral dx tr[L^dag L F]."""
        vol = self.grid.cell_volume
        return np.array(
            [float(np.einsum("xij,xji->", LdL, state.mats).real) * vol for LdL in self._jump_LdL]
        )

    def expected_gauss(self, state: HybridOperator) -> np.ndarray:
        vol = self.grid.cell_volume
        return np.array(
            [complex(np.einsum("xij,xji->", C, state.mats) * vol) for C in self.gauss_ops]
        )


def _check_counts(model: HybridModel, dN) -> np.ndarray:
    dN = np.atleast_1d(np.asarray(dN))
    if dN.size != model.n_jump_channels:
        raise DimensionMismatchError("one click increment per jump channel required")
    return dN


def hybrid_prior_step(rho: HybridOperator, model: HybridModel, dt: float) -> HybridOperator:
    """Unconditional propagation under the full hybrid generator."""
    model.cfl_check(dt)
    m = rho.mats
    out = m + dt * (model._classical_term(m) + model._hamiltonian_term(m, -1.0))
    for L, LdL in zip(model.lindblads, model._lind_LdL):
        out = out + dt * model._dissipator(m, L, LdL)
    return HybridOperator(rho.grid, symmetrize(out))


def quantum_zakai_step(
    fh: HybridOperator, model: HybridModel, dN, dt: float
) -> HybridOperator:
    """Linear unnormalized forward update with Poissonian channels only."""
    return combined_step_forward(fh, model, dN, None, dt)


def combined_step_forward(
    fh: HybridOperator, model: HybridModel, dN, dy, dt: float
) -> HybridOperator:
    """Linear forward update with click and Gaussian records together."""
    model.cfl_check(dt)
    dN = _check_counts(model, dN)
    m = fh.mats
    out = m + dt * (model._classical_term(m) + model._hamiltonian_term(m, -1.0))
    for L, LdL in zip(model.lindblads, model._lind_LdL):
        out = out + dt * model._dissipator(m, L, LdL)
    for mu, (L, LdL) in enumerate(zip(model.jump_ops, model._jump_LdL)):
        out = out + dt * model._dissipator(m, L, LdL)
        out = out + (float(dN[mu]) - dt) * (L @ m @ adjoint(L) - m)
    if model.n_gauss_channels:
        out = out + dt * model._gauss_block(m)
        X = model._record_operator(dy)
        out = out + 0.5 * (X @ m + m @ adjoint(X))
    return HybridOperator(fh.grid, symmetrize(out))


def effect_backward_step(
    gh: HybridOperator, model: HybridModel, dN, dt: float
) -> HybridOperator:
    """Adjoint update stepping the effect operator from t+dt back to t."""
    return combined_step_backward(gh, model, dN, None, dt)


def combined_step_backward(
    gh: HybridOperator, model: HybridModel, dN, dy, dt: float
) -> HybridOperator:
    """Adjoint of combined_step_forward under the Hilbert-Schmidt pairing."""
    model.cfl_check(dt)
    dN = _check_counts(model, dN)
    m = gh.mats
    out = m + dt * (model._classical_term_adjoint(m) + model._hamiltonian_term(m, +1.0))
    for L, LdL in zip(model.lindblads, model._lind_LdL):
        out = out + dt * model._dissipator_adjoint(m, L, LdL)
    for mu, (L, LdL) in enumerate(zip(model.jump_ops, model._jump_LdL)):
        out = out + dt * model._dissipator_adjoint(m, L, LdL)
        out = out + (float(dN[mu]) - dt) * (adjoint(L) @ m @ L - m)
    if model.n_gauss_channels:
        out = out + dt * model._gauss_block_adjoint(m)
        X = model._record_operator(dy)
        out = out + 0.5 * (m @ X + adjoint(X) @ m)
    return HybridOperator(gh.grid, symmetrize(out))


def quantum_snyder_step(
    Fh: HybridOperator, model: HybridModel, dN, dt: float
) -> HybridOperator:
    """Normalized nonlinear filter update for Poissonian channels."""
    return combined_snyder_step(Fh, model, dN, None, dt)


def combined_snyder_step(
    Fh: HybridOperator, model: HybridModel, dN, dy, dt: float
) -> HybridOperator:
    """Normalized filter update with click and Gaussian records together."""
    model.cfl_check(dt)
    dN = _check_counts(model, dN)
    m = Fh.mats
    out = m + dt * (model._classical_term(m) + model._hamiltonian_term(m, -1.0))
    for L, LdL in zip(model.lindblads, model._lind_LdL):
        out = out + dt * model._dissipator(m, L, LdL)
    lam_bar = model.expected_intensities(Fh)
    for mu, (L, LdL) in enumerate(zip(model.jump_ops, model._jump_LdL)):
        out = out + dt * model._dissipator(m, L, LdL)
        sandwich = L @ m @ adjoint(L)
        if lam_bar[mu] > _ZERO_INTENSITY:
            coeff = (float(dN[mu]) - dt * lam_bar[mu]) / lam_bar[mu]
            out = out + coeff * (sandwich - lam_bar[mu] * m)
        elif dN[mu]:
            raise ImpossibleEventError(f"click on channel {mu} with zero expected intensity")
        else:
            out = out - dt * sandwich
    if model.n_gauss_channels:
        out = out + dt * model._gauss_block(m)
        deta = filtered_gaussian_innovation(Fh, model, dy, dt)
        cbar = model.expected_gauss(Fh)
        w = model.Rinv @ deta
        X = np.zeros((1, model.dim, model.dim), dtype=complex)
        for j, C in enumerate(model.gauss_ops):
            X = X + w[j] * (C - cbar[j] * np.eye(model.dim))
        out = out + 0.5 * (X @ m + m @ adjoint(X))
    return HybridOperator(Fh.grid, symmetrize(out)).normalize()


def filtered_gaussian_innovation(
    Fh: HybridOperator, model: HybridModel, dy, dt: float
) -> np.ndarray:
    """Innovation increment dy - (dt/2) <C + C^dag> under the current filter."""
    dy = np.atleast_1d(np.asarray(dy, dtype=float))
    if dy.size != model.n_gauss_channels:
        raise DimensionMismatchError("one gaussian increment per channel required")
    cbar = model.expected_gauss(Fh)
    return dy - dt * cbar.real


def smooth_density(fh: HybridOperator, gh: HybridOperator) -> DensityGrid:
    """Smoothing density h(x) = tr[g(x) f(x)] / integral dx tr[g f]."""
    if fh.grid != gh.grid or fh.dim != gh.dim:
        raise DimensionMismatchError("forward and backward states are incompatible")
    w = np.einsum("xij,xji->x", gh.mats, fh.mats).real
    total = float(w.sum() * fh.grid.cell_volume)
    if total <= 0.0:
        raise DegenerateRecordError("zero overlap between forward and backward states")
    h = w / total
    if h.min() < -1e-9:
        raise ModelError(f"smoothing density has a negative value {h.min():.3e}")
    return DensityGrid(fh.grid, np.clip(h, 0.0, None).reshape(fh.grid.shape), normalized=False).normalize()


@dataclass
class MeasurementOperatorSet:
    """First-order Kraus pair for one click channel at step dt.

    no_click = 1 - L^dag L dt / 2 and click = L sqrt(dt); completeness holds
    to first order with defect bounded by 2 (L^dag L dt)^2.
    """

    no_click: np.ndarray
    click: np.ndarray

    @staticmethod
    def for_channel(L: np.ndarray, dt: float) -> "MeasurementOperatorSet":
        L = np.asarray(L, dtype=complex)
        eye = np.eye(L.shape[-1], dtype=complex)
        LdL = adjoint(L) @ L
        return MeasurementOperatorSet(no_click=eye - 0.5 * dt * LdL, click=np.sqrt(dt) * L)

    def completeness_defect(self) -> float:
        total = adjoint(self.no_click) @ self.no_click + adjoint(self.click) @ self.click
        return float(np.max(np.abs(total - np.eye(total.shape[-1]))))


# -- record sweeps ------------------------------------------------------------


def _gauss_row(record: MeasurementRecord, k: int):
    return None if record.gaussians is None else record.gaussians[k]


def hybrid_forward_sweep(
    model: HybridModel,
    record: MeasurementRecord,
    prior: HybridOperator,
    store_stride: int = 1,
    rescale: bool = True,
):
    """Linear forward sweep; returns (times, stacked mats, log scales)."""
    fh = prior
    snaps = {0: fh.mats.copy()}
    logs = {0: 0.0}
    scale = 0.0
    for k in range(record.n_steps):
        fh = combined_step_forward(fh, model, record.counts[k], _gauss_row(record, k), record.dt)
        mats = fh.mats
        if rescale:
            mnorm = float(np.abs(mats).max())
            if mnorm > 0.0:
                mats = mats / mnorm
                scale += np.log(mnorm)
                fh = HybridOperator(fh.grid, mats)
        idx = k + 1
        if idx % store_stride == 0 or idx == record.n_steps:
            snaps[idx] = fh.mats.copy()
            logs[idx] = scale
    order = np.array(sorted(snaps))
    times = record.t0 + record.dt * order
    return times, np.asarray([snaps[i] for i in order]), np.asarray([logs[i] for i in order])


def hybrid_backward_sweep(
    model: HybridModel,
    record: MeasurementRecord,
    store_stride: int = 1,
    rescale: bool = True,
    terminal: HybridOperator | None = None,
):
    """Adjoint sweep from g(T) proportional to the identity (or a given effect)."""
    if terminal is None:
        gh = HybridOperator(model.grid, np.eye(model.dim, dtype=complex))
    else:
        gh = terminal
    n = record.n_steps
    snaps = {n: gh.mats.copy()}
    logs = {n: 0.0}
    scale = 0.0
    for k in range(n - 1, -1, -1):
        gh = combined_step_backward(gh, model, record.counts[k], _gauss_row(record, k), record.dt)
        mats = gh.mats
        if rescale:
            mnorm = float(np.abs(mats).max())
            if mnorm > 0.0:
                mats = mats / mnorm
                scale += np.log(mnorm)
                gh = HybridOperator(gh.grid, mats)
        if k % store_stride == 0 or k == 0:
            snaps[k] = gh.mats.copy()
            logs[k] = scale
    order = np.array(sorted(snaps))
    times = record.t0 + record.dt * order
    return times, np.asarray([snaps[i] for i in order]), np.asarray([logs[i] for i in order])


def smooth_hybrid_record(
    model: HybridModel,
    record: MeasurementRecord,
    prior: HybridOperator,
    store_stride: int = 1,
    keep_densities: bool = False,
    observables: dict[str, np.ndarray] | None = None,
) -> SmootherOutput:
    """Forward/backward sweeps plus the smoothing combination at stored times."""
    t_f, f_snap, _ = hybrid_forward_sweep(model, record, prior, store_stride)
    t_g, g_snap, _ = hybrid_backward_sweep(model, record, store_stride)
    if t_f.shape != t_g.shape or not np.allclose(t_f, t_g):
        raise DimensionMismatchError("forward/backward snapshot meshes differ")
    grid = model.grid
    vol = grid.cell_volume
    coords = grid.coords()

    w = np.einsum("txij,txji->tx", g_snap, f_snap).real
    totals = w.sum(axis=1) * vol
    if np.any(totals <= 0.0):
        raise DegenerateRecordError("zero forward/backward overlap at some stored time")
    h_rows = w / totals[:, None]

    f_marg = np.einsum("txii->tx", f_snap).real
    f_tot = f_marg.sum(axis=1) * vol
    f_rows = f_marg / f_tot[:, None]

    def moments(rows):
        ww = np.clip(rows, 0.0, None) * vol
        tot = ww.sum(axis=1, keepdims=True)
        tot[tot == 0.0] = 1.0
        ww = ww / tot
        means = np.stack([ww @ c for c in coords], axis=1)
        vars_ = np.stack([ww @ (c**2) for c in coords], axis=1) - means**2
        return means, np.maximum(vars_, 0.0)

    s_mean, s_var = moments(h_rows)
    f_mean, f_var = moments(f_rows)

    q_expect = {}
    if observables:
        # expectations under the normalized filtering state at stored times
        norm = np.einsum("txii->t", f_snap).real * vol
        for name, A in observables.items():
            vals = np.einsum("ij,txji->t", np.asarray(A, dtype=complex), f_snap).real * vol
            q_expect[name] = vals / norm

    return SmootherOutput(
        times=t_f,
        grid=grid,
        smooth_mean=s_mean,
        smooth_var=s_var,
        filter_mean=f_mean,
        filter_var=f_var,
        densities=h_rows if keep_densities else None,
        filter_densities=f_rows if keep_densities else None,
        quantum_expect=q_expect,
    )
