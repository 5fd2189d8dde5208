"""Uniform rectilinear grids and six-component field snapshots."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .errors import GridError


def _tuple(value, n, cast):
    if np.ndim(value) == 0:
        return tuple(cast(value) for _ in range(n))
    value = tuple(cast(v) for v in value)
    if len(value) != n:
        raise GridError(f"expected {n} entries, got {len(value)}")
    return value


@dataclass(frozen=True)
class Grid:
    """Uniform grid over 1 to 3 active physical axes.

    Inactive axes are held at ``fixed`` coordinates; fields are assumed to
    carry ``exp(i pinned_k . x / eps)`` along them, so derivatives and
    Wigner wave vectors use ``pinned_k`` for those components.
    """

    shape: tuple
    spacing: tuple
    origin: tuple
    axes: tuple = (0, 1, 2)
    periodic: tuple = (True, True, True)
    fixed: tuple = (0.0, 0.0, 0.0)
    pinned_k: tuple = (0.0, 0.0, 0.0)

    def __post_init__(self):
        d = len(self.shape)
        if not 1 <= d <= 3:
            raise GridError("a grid has between 1 and 3 active axes")
        object.__setattr__(self, "shape", _tuple(self.shape, d, int))
        object.__setattr__(self, "spacing", _tuple(self.spacing, d, float))
        object.__setattr__(self, "origin", _tuple(self.origin, d, float))
        axes = tuple(int(a) for a in self.axes)[:d] if len(self.axes) >= d else None
        if axes is None or len(set(axes)) != d or not all(0 <= a < 3 for a in axes):
            raise GridError(f"invalid active axes {self.axes!r} for a {d}-D grid")
        object.__setattr__(self, "axes", axes)
        periodic = self.periodic[:d] if np.ndim(self.periodic) else self.periodic
        object.__setattr__(self, "periodic", _tuple(periodic, d, bool))
        object.__setattr__(self, "fixed", _tuple(self.fixed, 3, float))
        object.__setattr__(self, "pinned_k", _tuple(self.pinned_k, 3, float))
        if any(n < 2 for n in self.shape) or any(h <= 0 for h in self.spacing):
            raise GridError("grid needs at least 2 nodes and positive spacing per axis")

    @classmethod
    def uniform(cls, n, length, axes=(0, 1, 2), origin=None, periodic=True, **kw):
        """Grid of ``n`` nodes per axis covering ``[origin, origin + length)``."""
        axes = tuple(axes)
        d = len(np.atleast_1d(n)) if np.ndim(n) else len(axes)
        n = _tuple(n, d, int)
        length = _tuple(length, d, float)
        spacing = tuple(L / m for L, m in zip(length, n))
        if origin is None:
            origin = tuple(-L / 2 for L in length)
        return cls(
            shape=n,
            spacing=spacing,
            origin=_tuple(origin, d, float),
            axes=axes[:d],
            periodic=_tuple(periodic, d, bool),
            **kw,
        )

    @property
    def ndim(self) -> int:
        return len(self.shape)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    @property
    def extent(self) -> tuple:
        return tuple(n * h for n, h in zip(self.shape, self.spacing))

    @property
    def inactive_axes(self) -> tuple:
        return tuple(a for a in range(3) if a not in self.axes)

    def coords(self, i: int) -> np.ndarray:
        return self.origin[i] + self.spacing[i] * np.arange(self.shape[i])

    def points(self) -> np.ndarray:
        """Physical coordinates of every node, shape ``(*shape, 3)``."""
        mesh = np.meshgrid(*[self.coords(i) for i in range(self.ndim)], indexing="ij")
        out = np.empty(self.shape + (3,))
        for a in range(3):
            out[..., a] = self.fixed[a]
        for i, a in enumerate(self.axes):
            out[..., a] = mesh[i]
        return out

    def point(self, index) -> np.ndarray:
        out = np.array(self.fixed, dtype=float)
        for i, a in enumerate(self.axes):
            out[a] = self.origin[i] + self.spacing[i] * index[i]
        return out

    def nearest_index(self, x) -> np.ndarray:
        """Nearest node indices for physical points ``x`` of shape ``(..., 3)``."""
        x = np.asarray(x, dtype=float)
        idx = np.empty(x.shape[:-1] + (self.ndim,), dtype=int)
        for i, a in enumerate(self.axes):
            j = np.rint((x[..., a] - self.origin[i]) / self.spacing[i]).astype(int)
            if self.periodic[i]:
                j = np.mod(j, self.shape[i])
            elif np.any((j < 0) | (j >= self.shape[i])):
                raise GridError(f"point outside grid along axis x{a + 1}")
            idx[..., i] = j
        return idx

    def angular_frequencies(self, i: int) -> np.ndarray:
        """FFT angular frequencies (radians per unit length) along active axis ``i``."""
        return 2 * np.pi * np.fft.fftfreq(self.shape[i], d=self.spacing[i])

    def same_as(self, other: "Grid") -> bool:
        return self == other


@dataclass
class FieldSnapshot:
    """Complex field values on a grid: shape ``(*grid.shape, n_components)``."""

    grid: Grid
    values: np.ndarray
    epsilon_scale: float
    cutoff: Optional[np.ndarray] = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        v = np.asarray(self.values)
        if v.shape[: self.grid.ndim] != self.grid.shape or v.ndim != self.grid.ndim + 1:
            raise GridError(
                f"field values of shape {v.shape} do not match grid {self.grid.shape} + (n,)"
            )
        if not np.all(np.isfinite(v)):
            raise GridError("field contains non-finite values")
        if not self.epsilon_scale > 0:
            raise ValueError("epsilon_scale must be positive")
        self.values = v.astype(complex, copy=False)
        if self.cutoff is not None:
            c = np.asarray(self.cutoff, dtype=float)
            if c.shape != self.grid.shape:
                raise GridError("cutoff must be a scalar field on the grid")
            if np.any(c < 0) or np.any(c > 1):
                raise GridError("cutoff must lie in [0, 1]")
            self.cutoff = c

    @property
    def n_components(self) -> int:
        return self.values.shape[-1]

    def norm(self) -> float:
        return float(np.sqrt(self.grid.cell_volume * np.sum(np.abs(self.values) ** 2)))

    def inner(self, other: "FieldSnapshot") -> complex:
        """L2 inner product ``(self, other) = sum self * conj(other) dx``."""
        if not self.grid.same_as(other.grid):
            raise GridError("inner product of fields on different grids")
        return complex(self.grid.cell_volume * np.sum(self.values * np.conj(other.values)))

    def energy_density(self) -> np.ndarray:
        return np.sum(np.abs(self.values) ** 2, axis=-1)

    def with_values(self, values, **changes) -> "FieldSnapshot":
        return replace(self, values=np.asarray(values), **changes)

    def windowed(self) -> "FieldSnapshot":
        """Field multiplied by its cutoff (identity if none is stored)."""
        if self.cutoff is None:
            return self
        return replace(self, values=self.values * self.cutoff[..., None], cutoff=None)


def cosine_cutoff(grid: Grid, center: Sequence[float], core: float, ramp: float) -> np.ndarray:
    """Smooth radial cutoff: 1 within ``core`` of ``center``, 0 beyond ``core + ramp``."""
    pts = grid.points()
    r = np.linalg.norm(pts - np.asarray(center, dtype=float), axis=-1)
    t = np.clip((r - core) / ramp, 0.0, 1.0)
    return np.cos(0.5 * np.pi * t) ** 2
