"""Classical grids, grid densities and operator-valued grid states."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatchError, ModelError
from .linalg import adjoint, herm_defect, symmetrize

NORMALIZATION_TOL = 1e-9


@dataclass(frozen=True)
class ClassicalGrid:
    """Uniform rectangular grid over the classical state space.

    Each axis has `size` points spanning [lower, upper] inclusive with
    spacing (upper - lower)/(size - 1). A single-point axis is allowed as a
    degenerate pinned coordinate and carries integration weight 1.
    """

    sizes: tuple[int, ...]
    lowers: tuple[float, ...]
    uppers: tuple[float, ...]

    def __post_init__(self):
        if not (len(self.sizes) == len(self.lowers) == len(self.uppers)):
            raise DimensionMismatchError("grid axis specs must have equal length")
        if len(self.sizes) == 0:
            raise ModelError("grid needs at least one axis")
        for n, lo, hi in zip(self.sizes, self.lowers, self.uppers):
            if n < 1:
                raise ModelError("each axis needs >= 1 points")
            if n > 1 and not hi > lo:
                raise ModelError(f"axis bounds must satisfy upper > lower, got [{lo}, {hi}]")

    @property
    def ndim(self) -> int:
        return len(self.sizes)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.sizes

    @property
    def npoints(self) -> int:
        return int(np.prod(self.sizes))

    @property
    def spacings(self) -> tuple[float, ...]:
        return tuple(
            (hi - lo) / (n - 1) if n > 1 else 1.0
            for n, lo, hi in zip(self.sizes, self.lowers, self.uppers)
        )

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacings))

    def axis(self, a: int) -> np.ndarray:
        n = self.sizes[a]
        if n == 1:
            return np.array([self.lowers[a]])
        return np.linspace(self.lowers[a], self.uppers[a], n)

    def coords(self) -> list[np.ndarray]:
        """Flattened meshgrid coordinate arrays, one (npoints,) array per axis."""
        mesh = np.meshgrid(*[self.axis(a) for a in range(self.ndim)], indexing="ij")
        return [m.ravel() for m in mesh]

    @staticmethod
    def regular(size: int, lower: float, upper: float) -> "ClassicalGrid":
        return ClassicalGrid((size,), (lower,), (upper,))

    @staticmethod
    def labels(values) -> "ClassicalGrid":
        """Grid whose points are explicit labels of a finite state chain.

        Points are assumed equally spaced; with two states {x0, x1} the cell
        width equals x1 - x0, so densities and state masses differ by that
        factor.
        """
        v = np.asarray(values, dtype=float)
        if v.ndim != 1 or v.size < 1:
            raise ModelError("labels need a 1d nonempty value list")
        if v.size > 1:
            d = np.diff(v)
            if not np.allclose(d, d[0]):
                raise ModelError("label values must be equally spaced")
        return ClassicalGrid((v.size,), (float(v[0]),), (float(v[-1]),))


@dataclass
class DensityGrid:
    """Nonnegative values on a grid; a probability density when normalized.

    `values` holds densities with respect to the grid cell measure, so a
    normalized density satisfies sum(values) * cell_volume == 1.
    """

    grid: ClassicalGrid
    values: np.ndarray
    normalized: bool = field(default=False)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float).reshape(self.grid.shape)
        if not np.all(np.isfinite(self.values)):
            raise ModelError("density contains non-finite values")
        if self.normalized:
            total = self.total_mass()
            if abs(total - 1.0) > NORMALIZATION_TOL:
                raise ModelError(f"density flagged normalized but mass is {total!r}")

    def total_mass(self) -> float:
        return float(self.values.sum() * self.grid.cell_volume)

    def normalize(self) -> "DensityGrid":
        total = self.total_mass()
        if total <= 0:
            raise ModelError("cannot normalize a density with nonpositive mass")
        return DensityGrid(self.grid, self.values / total, normalized=True)

    def mean(self) -> np.ndarray:
        """Per-axis mean of the normalized density."""
        w = self.values.ravel() * self.grid.cell_volume
        w = w / w.sum()
        return np.array([float(np.dot(w, c)) for c in self.grid.coords()])

    def variance(self) -> np.ndarray:
        w = self.values.ravel() * self.grid.cell_volume
        w = w / w.sum()
        out = []
        for c in self.grid.coords():
            mu = float(np.dot(w, c))
            out.append(float(np.dot(w, (c - mu) ** 2)))
        return np.array(out)

    def l1_distance(self, other: "DensityGrid") -> float:
        if other.grid != self.grid:
            raise DimensionMismatchError("densities live on different grids")
        return float(np.abs(self.values - other.values).sum() * self.grid.cell_volume)

    @staticmethod
    def uniform(grid: ClassicalGrid) -> "DensityGrid":
        v = np.full(grid.shape, 1.0 / (grid.npoints * grid.cell_volume))
        return DensityGrid(grid, v, normalized=True)

    @staticmethod
    def from_masses(grid: ClassicalGrid, masses) -> "DensityGrid":
        """Density whose cells carry the given probability masses."""
        p = np.asarray(masses, dtype=float).reshape(grid.shape)
        d = DensityGrid(grid, p / grid.cell_volume)
        return d.normalize() if abs(p.sum() - 1.0) <= 1e-12 else d


@dataclass
class HybridOperator:
    """One complex matrix per classical grid point: rho(x), f(x), g(x).

    Stored flattened as an (npoints, dim, dim) array. The hybrid trace is
    integral dx tr[.] with the grid cell measure.
    """

    grid: ClassicalGrid
    mats: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.mats, dtype=complex)
        if m.ndim == 2:
            m = np.broadcast_to(m, (self.grid.npoints,) + m.shape).copy()
        if m.ndim != 3 or m.shape[0] != self.grid.npoints or m.shape[1] != m.shape[2]:
            raise DimensionMismatchError(
                f"expected (npoints, d, d) matrices, got shape {m.shape}"
            )
        if not np.all(np.isfinite(m.view(float))):
            raise ModelError("hybrid operator contains non-finite entries")
        self.mats = m

    @property
    def dim(self) -> int:
        return self.mats.shape[-1]

    def hybrid_trace(self) -> complex:
        return complex(np.einsum("xii->", self.mats) * self.grid.cell_volume)

    def normalize(self) -> "HybridOperator":
        t = self.hybrid_trace().real
        if t <= 0:
            raise ModelError("cannot normalize: hybrid trace is nonpositive")
        return HybridOperator(self.grid, self.mats / t)

    def symmetrized(self) -> "HybridOperator":
        return HybridOperator(self.grid, symmetrize(self.mats))

    def herm_defect(self) -> float:
        return herm_defect(self.mats)

    def classical_density(self) -> DensityGrid:
        """Marginal density over x: tr[rho(x)] per grid point."""
        tr = np.einsum("xii->x", self.mats).real
        return DensityGrid(self.grid, tr.reshape(self.grid.shape))

    def expectation(self, observable: np.ndarray) -> float:
        """Hybrid expectation integral dx tr[A rho(x)] for a fixed observable."""
        a = np.asarray(observable, dtype=complex)
        val = np.einsum("ij,xji->", a, self.mats) * self.grid.cell_volume
        return float(val.real)

    def min_eigenvalue(self) -> float:
        w = np.linalg.eigvalsh(symmetrize(self.mats))
        return float(w.min())

    @staticmethod
    def from_state(grid: ClassicalGrid, weights: DensityGrid, rho: np.ndarray) -> "HybridOperator":
        """Product state: classical density times one quantum state."""
        rho = np.asarray(rho, dtype=complex)
        mats = weights.values.ravel()[:, None, None] * rho[None, :, :]
        return HybridOperator(grid, mats)


def hybrid_pairing(g: HybridOperator, f: HybridOperator) -> float:
    """Duality pairing integral dx tr[g(x) f(x)]."""
    if g.grid != f.grid or g.dim != f.dim:
        raise DimensionMismatchError("pairing needs matching grids and dimensions")
    val = np.einsum("xij,xji->", g.mats, f.mats) * g.grid.cell_volume
    return float(val.real)
