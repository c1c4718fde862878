"""Result container shared by the classical, hybrid and Kalman smoothers."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .grids import ClassicalGrid


@dataclass
class SmootherOutput:
    """Per-time smoothing summary along a record.

    times holds the evaluation instants tau; smooth_mean/var and
    filter_mean/var are per-axis posterior moments (shape (n_times, ndim)).
    densities optionally stores the full smoothing density rows h(., tau),
    and quantum_expect maps observable names to tr[F A] traces when a
    quantum subsystem is present.
    """

    times: np.ndarray
    grid: ClassicalGrid | None
    smooth_mean: np.ndarray
    smooth_var: np.ndarray
    filter_mean: np.ndarray | None = None
    filter_var: np.ndarray | None = None
    densities: np.ndarray | None = None
    filter_densities: np.ndarray | None = None
    quantum_expect: dict[str, np.ndarray] = field(default_factory=dict)
    extras: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.smooth_mean = np.atleast_2d(np.asarray(self.smooth_mean, dtype=float))
        self.smooth_var = np.atleast_2d(np.asarray(self.smooth_var, dtype=float))
        if self.smooth_mean.shape[0] != self.times.size:
            self.smooth_mean = self.smooth_mean.T
        if self.smooth_var.shape[0] != self.times.size:
            self.smooth_var = self.smooth_var.T
