"""Measurement records, reproducible random streams and record sampling."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatchError, ModelError, StepSizeError
from .linalg import symmetrize

RATE_WARN_LEVEL = 0.1  # lambda*dt above this is flagged as coarse
RATE_ERROR_LEVEL = 1.0  # lambda*dt above this is not a valid Bernoulli step


@dataclass(frozen=True)
class RngStream:
    """Named substream of a seeded generator.

    Identical (seed, stream_id) pairs reproduce identical draws bit-exactly;
    distinct stream ids are statistically independent, which is how
    Monte-Carlo trials parallelize.
    """

    seed: int
    stream_id: int = 0

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=(self.stream_id,))
        return np.random.default_rng(ss)


def _as_generator(rng) -> np.random.Generator:
    if isinstance(rng, RngStream):
        return rng.generator()
    if isinstance(rng, np.random.Generator):
        return rng
    return RngStream(int(rng)).generator()


@dataclass
class MeasurementRecord:
    """Fixed-step record of Poissonian counts and optional Gaussian increments.

    counts[k, mu] is the 0/1 increment dN_mu over [t_k, t_k + dt); gaussians,
    when present, holds the raw increments dy over the same step. R is the
    covariance rate of the Gaussian channels and Q the process-noise rate
    of the signal model that produced the record (both optional metadata).
    """

    t0: float
    T: float
    dt: float
    counts: np.ndarray
    gaussians: np.ndarray | None = None
    R: np.ndarray | None = None
    Q: np.ndarray | None = None
    channel_names: tuple[str, ...] | None = None
    seed: int | None = None
    _steps: int = field(init=False, repr=False)

    def __post_init__(self):
        self.counts = np.asarray(self.counts)
        if self.counts.ndim == 1:
            self.counts = self.counts[:, None]
        if self.counts.ndim != 2:
            raise DimensionMismatchError("counts must be (n_steps, n_channels)")
        if not np.isin(self.counts, (0, 1)).all():
            raise ModelError("count increments must be 0 or 1")
        self.counts = self.counts.astype(np.int8)
        nsteps = int(round((self.T - self.t0) / self.dt))
        if nsteps != self.counts.shape[0]:
            raise DimensionMismatchError(
                f"round((T-t0)/dt) = {nsteps} does not match {self.counts.shape[0]} count rows"
            )
        self._steps = nsteps
        if self.gaussians is not None:
            self.gaussians = np.asarray(self.gaussians, dtype=float)
            if self.gaussians.ndim == 1:
                self.gaussians = self.gaussians[:, None]
            if self.gaussians.shape[0] != nsteps:
                raise DimensionMismatchError("gaussian rows must match the step count")
            if self.R is None:
                raise ModelError("gaussian channels need a covariance rate R")
        if self.R is not None:
            self.R = np.atleast_2d(np.asarray(self.R, dtype=float))
            w = np.linalg.eigvalsh(symmetrize(self.R.astype(complex)).real)
            if np.max(np.abs(self.R - self.R.T)) > 1e-12 or w.min() <= 0:
                raise ModelError("R must be symmetric positive-definite")
        if self.Q is not None:
            self.Q = np.atleast_2d(np.asarray(self.Q, dtype=float))

    @property
    def n_steps(self) -> int:
        return self._steps

    @property
    def n_count_channels(self) -> int:
        return self.counts.shape[1]

    @property
    def n_gaussian_channels(self) -> int:
        return 0 if self.gaussians is None else self.gaussians.shape[1]

    def times(self) -> np.ndarray:
        """Mesh t_0 .. T of step boundaries, length n_steps + 1."""
        return self.t0 + self.dt * np.arange(self._steps + 1)

    def total_counts(self) -> np.ndarray:
        return self.counts.sum(axis=0)


def sample_poisson_record(
    rates,
    dt: float,
    rng,
    *,
    t0: float = 0.0,
    trajectory: np.ndarray | None = None,
    times: np.ndarray | None = None,
    gaussian_means: np.ndarray | None = None,
    R: np.ndarray | None = None,
    seed_label: int | None = None,
) -> MeasurementRecord:
    """Draw a Poissonian (and optionally Gaussian) record along a trajectory.

    `rates` is either an (n_steps, n_channels) array of intensities already
    evaluated along the signal path, or a callable lambda(x, t) -> per-channel
    intensities applied to `trajectory` (one state per step) at the step
    start times. Each step emits dN = 1 with probability lambda*dt.

    Gaussian channels, when configured, emit dy = mean + dw with
    dw ~ N(0, R dt); `gaussian_means` holds the per-step drift contribution
    (typically dt * <C + C^dag>/2 along the truth).
    """
    gen = _as_generator(rng)
    if callable(rates):
        if trajectory is None:
            raise ModelError("callable rates need a trajectory to evaluate on")
        traj = np.asarray(trajectory)
        tgrid = times if times is not None else t0 + dt * np.arange(len(traj))
        lam = np.asarray([np.atleast_1d(rates(x, t)) for x, t in zip(traj, tgrid)], dtype=float)
    else:
        lam = np.asarray(rates, dtype=float)
        if lam.ndim == 1:
            lam = lam[:, None]
    if lam.ndim != 2:
        raise DimensionMismatchError("rates must evaluate to (n_steps, n_channels)")
    if np.any(lam < 0):
        raise ModelError("intensities must be nonnegative")
    lam_dt = lam * dt
    worst = float(lam_dt.max(initial=0.0))
    if worst > RATE_ERROR_LEVEL:
        raise StepSizeError(f"lambda*dt = {worst:.3g} exceeds 1; reduce dt")
    if worst > RATE_WARN_LEVEL:
        warnings.warn(
            f"lambda*dt reaches {worst:.3g}; the Bernoulli step approximation is coarse",
            stacklevel=2,
        )
    counts = (gen.random(lam_dt.shape) < lam_dt).astype(np.int8)

    gaussians = None
    if gaussian_means is not None:
        if R is None:
            raise ModelError("gaussian channels need R")
        mu = np.asarray(gaussian_means, dtype=float)
        if mu.ndim == 1:
            mu = mu[:, None]
        if mu.shape[0] != lam.shape[0]:
            raise DimensionMismatchError("gaussian_means rows must match rate rows")
        Rm = np.atleast_2d(np.asarray(R, dtype=float))
        chol = np.linalg.cholesky(Rm * dt)
        noise = gen.standard_normal(mu.shape) @ chol.T
        gaussians = mu + noise

    n_steps = lam.shape[0]
    return MeasurementRecord(
        t0=t0,
        T=t0 + n_steps * dt,
        dt=dt,
        counts=counts,
        gaussians=gaussians,
        R=np.atleast_2d(np.asarray(R, dtype=float)) if R is not None else None,
        seed=seed_label,
    )
