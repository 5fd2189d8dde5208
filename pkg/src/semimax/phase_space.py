"""Windowed discrete Wigner transform and phase-space mode densities.

The transform at node ``x`` and wave vector ``k`` is

    W(x, k) = (2 pi)^-d (2/eps)^d h^d  sum_m w_m exp(2 i m h.k / eps)
              f(x - m h) f(x + m h)^*

over integer lags ``m`` with ``|m_i| <= M_i``. With the ``+M`` and ``-M``
lags folded together this is a length ``2M`` inverse DFT, sampled at
``k_j = j pi eps / (2 M h)``. The sum over ``k`` nodes times the node volume
reproduces ``w_0 |f(x)|^2`` exactly.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np
from scipy import ndimage

from .errors import GridError, WindowError
from .grid import FieldSnapshot, Grid
from .spectral import K_MIN, MODE_LABELS, Medium, eigensystem

EMPTY_MASS = "EMPTY_MASS"

_TAPERS = ("cosine", "none")


@dataclass(frozen=True)
class WindowSpec:
    """Lag window: ``half_width`` lags per active axis and a taper shape.

    ``cosine`` is a Tukey taper whose outer ``taper_fraction`` of lags rolls
    off to zero; ``none`` is rectangular with half weight on the end lags.
    """

    half_width: Union[int, tuple]
    taper: str = "cosine"
    taper_fraction: float = 0.05

    def __post_init__(self):
        if self.taper not in _TAPERS:
            raise WindowError(f"unknown taper {self.taper!r}; choose from {_TAPERS}")
        if not 0.0 <= self.taper_fraction <= 1.0:
            raise WindowError("taper_fraction must lie in [0, 1]")
        hw = np.atleast_1d(self.half_width)
        if np.any(hw < 1) or not np.all(hw == np.round(hw)):
            raise WindowError("half_width must be a positive integer per axis")

    def half_widths(self, ndim: int) -> tuple:
        hw = np.atleast_1d(self.half_width).astype(int)
        if hw.size == 1:
            return (int(hw[0]),) * ndim
        if hw.size != ndim:
            raise WindowError(f"window has {hw.size} half widths for a {ndim}-D grid")
        return tuple(int(v) for v in hw)

    def weights(self, half_width: int) -> np.ndarray:
        """Taper weights for lags ``-M .. M`` (length ``2M + 1``, ``w_0 = 1``)."""
        m = np.arange(-half_width, half_width + 1)
        r = np.abs(m) / half_width
        if self.taper == "none":
            w = np.ones(m.size)
            w[[0, -1]] = 0.5
            return w
        a = self.taper_fraction
        w = np.ones(m.size)
        if a > 0:
            edge = r > 1.0 - a
            w[edge] = 0.5 * (1.0 + np.cos(np.pi * (r[edge] - 1.0 + a) / a))
        return w

    def k_axis(self, half_width: int, spacing: float, eps: float) -> np.ndarray:
        j = np.arange(-half_width, half_width)
        return j * np.pi * eps / (2 * half_width * spacing)

    def k_max(self, spacing: float, eps: float) -> float:
        """Half-width of the sampled k interval along one axis."""
        return np.pi * eps / (2 * spacing)


@dataclass
class WignerGrid:
    """Matrix Wigner samples: ``values`` has shape ``(P, *k_shape, n, n)``."""

    grid: Grid
    probes: np.ndarray
    probe_indices: np.ndarray
    k_axes: tuple
    values: np.ndarray
    window: WindowSpec
    epsilon_scale: float
    smoothing: Optional[tuple] = None
    meta: dict = field(default_factory=dict)

    @property
    def n_probes(self) -> int:
        return self.values.shape[0]

    @property
    def k_shape(self) -> tuple:
        return tuple(a.size for a in self.k_axes)

    @property
    def k_cell(self) -> float:
        return float(np.prod([a[1] - a[0] for a in self.k_axes]))

    def k_vectors(self) -> np.ndarray:
        """Full 3-vectors at every k node, shape ``(*k_shape, 3)``; inactive
        components come from the grid's pinned wave vector."""
        mesh = np.meshgrid(*self.k_axes, indexing="ij")
        out = np.empty(self.k_shape + (3,))
        for a in range(3):
            out[..., a] = self.grid.pinned_k[a]
        for i, a in enumerate(self.grid.axes):
            out[..., a] = mesh[i]
        return out

    def check_invariants(self, tol: float = 1e-10) -> None:
        """Raise ``GridError`` if Hermiticity or the real trace fails at ``tol``
        relative to the largest entry."""
        scale = max(float(np.max(np.abs(self.values))) if self.values.size else 0.0, 1e-300)
        if self.hermiticity_error() > tol * scale:
            raise GridError("Wigner samples are not Hermitian")
        if self.trace_imag_max() > tol * scale:
            raise GridError("Wigner trace is not real")

    def trace(self) -> np.ndarray:
        return np.real(np.trace(self.values, axis1=-2, axis2=-1))

    def trace_imag_max(self) -> float:
        return float(np.max(np.abs(np.imag(np.trace(self.values, axis1=-2, axis2=-1)))))

    def hermiticity_error(self) -> float:
        v = self.values
        return float(np.max(np.abs(v - np.conj(np.swapaxes(v, -1, -2)))))

    def marginal(self) -> np.ndarray:
        """``sum_k tr W dk`` per probe."""
        axes = tuple(range(1, 1 + len(self.k_axes)))
        return np.sum(self.trace(), axis=axes) * self.k_cell

    def component_marginal(self) -> np.ndarray:
        """``sum_k W dk`` per probe, shape ``(P, n, n)``."""
        axes = tuple(range(1, 1 + len(self.k_axes)))
        return np.sum(self.values, axis=axes) * self.k_cell

    def lattice_shape(self) -> Optional[tuple]:
        """Shape of the probe block if probes fill a contiguous index box in
        C order, else ``None``."""
        idx = self.probe_indices
        lo, hi = idx.min(axis=0), idx.max(axis=0)
        shape = tuple(int(v) for v in hi - lo + 1)
        if int(np.prod(shape)) != idx.shape[0]:
            return None
        expected = np.stack(
            np.meshgrid(*[np.arange(a, b + 1) for a, b in zip(lo, hi)], indexing="ij"), -1
        ).reshape(-1, idx.shape[1])
        return shape if np.array_equal(expected, idx) else None


@dataclass
class ModeDensities:
    """Scalar densities ``mu_alpha = d_alpha^T W d_alpha`` per mode label."""

    labels: tuple
    probes: np.ndarray
    k: np.ndarray
    mu: np.ndarray
    k_cell: float
    valid: np.ndarray
    imag_max: float
    cross: Optional[np.ndarray] = None
    outside: float = 0.0
    x_cell: Optional[float] = None
    x_shape: Optional[tuple] = None

    def mode(self, label: str) -> np.ndarray:
        return self.mu[..., self.labels.index(label)]

    def energy_trace(self) -> np.ndarray:
        """``sum_alpha mu_alpha``, which equals ``tr(A0 W)`` at each node."""
        return np.sum(self.mu, axis=-1)

    def mass(self, label: Optional[str] = None) -> np.ndarray:
        """Per-probe k-integrated density of one mode or of all modes."""
        dens = self.energy_trace() if label is None else self.mode(label)
        return np.sum(dens, axis=tuple(range(1, dens.ndim))) * self.k_cell


def _resolve_probes(grid: Grid, probes, probe_indices) -> tuple:
    if (probes is None) == (probe_indices is None):
        raise GridError("pass exactly one of probes or probe_indices")
    if probe_indices is not None:
        idx = np.atleast_2d(np.asarray(probe_indices, dtype=int))
        if idx.shape[1] != grid.ndim:
            raise GridError("probe indices need one entry per active axis")
        if np.any(idx < 0) or np.any(idx >= np.asarray(grid.shape)):
            raise GridError("probe index outside grid")
    else:
        idx = np.atleast_2d(grid.nearest_index(np.atleast_2d(np.asarray(probes, dtype=float))))
    pts = np.array([grid.point(i) for i in idx])
    return idx, pts


def _check_window(grid: Grid, idx: np.ndarray, half_widths: tuple) -> None:
    for i, M in enumerate(half_widths):
        n = grid.shape[i]
        if grid.periodic[i]:
            if 2 * M > n:
                raise WindowError(
                    f"window of {2 * M} lags exceeds the {n} periodic nodes on axis {i}"
                )
        else:
            lo, hi = idx[:, i] - M, idx[:, i] + M
            if np.any(lo < 0) or np.any(hi > n - 1):
                raise WindowError(
                    f"window of half width {M} leaves the non-periodic grid on axis {i}; "
                    "move probes inward or shrink the window"
                )


def resolution_defect(snapshot: FieldSnapshot, half_widths: Sequence[int] = ()) -> float:
    """Fraction of spectral energy whose scaled wave number ``eps |xi|`` falls
    outside the sampled k interval on some active axis.

    A Hann taper over the whole grid suppresses leakage on non-periodic axes.
    """
    grid = snapshot.grid
    f = snapshot.values
    for i in range(grid.ndim):
        if not grid.periodic[i]:
            shape = [1] * f.ndim
            shape[i] = grid.shape[i]
            f = f * np.hanning(grid.shape[i]).reshape(shape)
    spec = np.abs(np.fft.fftn(f, axes=tuple(range(grid.ndim)))) ** 2
    spec = spec.sum(axis=-1)
    total = spec.sum()
    if total == 0:
        return 0.0
    outside = np.zeros(grid.shape, dtype=bool)
    eps = snapshot.epsilon_scale
    for i in range(grid.ndim):
        xi = eps * np.abs(grid.angular_frequencies(i))
        kmax = np.pi * eps / (2 * grid.spacing[i])
        shape = [1] * grid.ndim
        shape[i] = grid.shape[i]
        outside |= (xi > kmax * (1 - 1e-12)).reshape(shape)
    return float(spec[outside].sum() / total)


def _fold(arr: np.ndarray, axis: int) -> np.ndarray:
    """Add the ``+M`` lag into the ``-M`` slot and drop it (length ``2M``)."""
    head = np.take(arr, [0], axis=axis) + np.take(arr, [-1], axis=axis)
    body = np.take(arr, np.arange(1, arr.shape[axis] - 1), axis=axis)
    return np.concatenate([head, body], axis=axis)


def _probe_wigner(values, grid, index, half_widths, weights, eps) -> np.ndarray:
    d = grid.ndim
    minus, plus = [], []
    for i, M in enumerate(half_widths):
        m = np.arange(-M, M + 1)
        lo, hi = index[i] - m, index[i] + m
        if grid.periodic[i]:
            lo, hi = np.mod(lo, grid.shape[i]), np.mod(hi, grid.shape[i])
        minus.append(lo)
        plus.append(hi)
    fm = values[np.ix_(*minus)]
    fp = values[np.ix_(*plus)]
    g = fm[..., :, None] * np.conj(fp[..., None, :])
    for i in range(d):
        shape = [1] * (d + 2)
        shape[i] = weights[i].size
        g = g * weights[i].reshape(shape)
    for i in range(d):
        g = _fold(g, i)
    axes = tuple(range(d))
    # lags ordered -M..M-1; shift m = 0 to the front for the DFT
    g = np.fft.ifftshift(g, axes=axes)
    n_total = int(np.prod([2 * M for M in half_widths]))
    out = np.fft.fftshift(np.fft.ifftn(g, axes=axes), axes=axes) * n_total
    scale = np.prod([h / (np.pi * eps) for h in grid.spacing])
    out *= scale
    return 0.5 * (out + np.conj(np.swapaxes(out, -1, -2)))


def wigner_transform(
    snapshot: FieldSnapshot,
    window: WindowSpec,
    probes=None,
    probe_indices=None,
    threads: Optional[int] = None,
    resolution_tol: Optional[float] = 1e-3,
) -> WignerGrid:
    """Matrix-valued windowed Wigner transform at the given probe nodes.

    Parameters
    ----------
    snapshot : FieldSnapshot
        Field samples; a stored cutoff is applied before transforming.
    window : WindowSpec
        Lag window. Non-periodic axes need ``M`` nodes on both sides of every
        probe; periodic axes need ``2M <= N``.
    probes, probe_indices : array_like
        Physical probe points ``(P, 3)`` (snapped to the nearest node) or
        integer node indices ``(P, d)``.
    threads : int, optional
        Worker threads over probes. Output does not depend on this.
    resolution_tol : float or None
        Maximum fraction of field energy allowed outside the sampled k range;
        ``None`` skips the check.

    Returns
    -------
    WignerGrid
    """
    grid = snapshot.grid
    snap = snapshot.windowed()
    eps = snap.epsilon_scale
    hw = window.half_widths(grid.ndim)
    idx, pts = _resolve_probes(grid, probes, probe_indices)
    _check_window(grid, idx, hw)
    if resolution_tol is not None:
        defect = resolution_defect(snap, hw)
        if defect > resolution_tol:
            raise WindowError(
                f"field energy fraction {defect:.3g} lies outside the sampled k range "
                f"(|k| <= pi eps / 2h); refine the grid"
            )
    weights = [window.weights(M) for M in hw]
    k_axes = tuple(window.k_axis(M, h, eps) for M, h in zip(hw, grid.spacing))
    n = snap.n_components
    out = np.empty((idx.shape[0],) + tuple(2 * M for M in hw) + (n, n), dtype=complex)

    def work(p):
        out[p] = _probe_wigner(snap.values, grid, idx[p], hw, weights, eps)

    if threads is not None and threads > 1 and idx.shape[0] > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(work, range(idx.shape[0])))
    else:
        for p in range(idx.shape[0]):
            work(p)
    result = WignerGrid(
        grid=grid,
        probes=pts,
        probe_indices=idx,
        k_axes=k_axes,
        values=out,
        window=window,
        epsilon_scale=eps,
    )
    result.check_invariants()
    # marginal must equal w_0 |f(x_p)|^2 with w_0 = 1
    energy = np.sum(np.abs(snap.values[tuple(idx.T)]) ** 2, axis=-1)
    scale = max(float(energy.max()) if energy.size else 0.0, 1e-300)
    if np.max(np.abs(result.marginal() - energy), initial=0.0) > 1e-9 * scale:
        raise GridError("Wigner marginal does not reproduce the windowed energy density")
    return result


def project_modes(
    wigner: WignerGrid,
    medium: Medium,
    k_min: float = K_MIN,
    cross: bool = False,
) -> ModeDensities:
    """Scalar mode densities ``mu_alpha = d_alpha^T W d_alpha``.

    Nodes with ``|k| < k_min`` carry no frame; they are zeroed and flagged
    in ``valid``. ``cross=True`` also returns the full ``D^T W D`` matrix.
    """
    if wigner.values.shape[-1] != 6:
        raise GridError("mode projection needs six-component fields")
    kv = wigner.k_vectors()
    knorm = np.linalg.norm(kv, axis=-1)
    valid_k = knorm >= k_min
    safe_k = np.where(valid_k[..., None], kv, np.array([0.0, 0.0, 1.0]))
    P = wigner.n_probes
    kshape = wigner.k_shape
    x = np.broadcast_to(
        wigner.probes.reshape((P,) + (1,) * len(kshape) + (3,)), (P,) + kshape + (3,)
    )
    k = np.broadcast_to(safe_k, (P,) + kshape + (3,))
    es = eigensystem(medium, x, k, k_min=k_min)
    D = es.duals
    W = wigner.values
    mu_c = np.einsum("...ia,...ij,...ja->...a", D.conj(), W, D)
    imag_max = float(np.max(np.abs(mu_c.imag))) if mu_c.size else 0.0
    valid = np.broadcast_to(valid_k, (P,) + kshape).copy()
    mu = np.where(valid[..., None], mu_c.real, 0.0)
    full = None
    if cross:
        full = np.einsum("...ia,...ij,...jb->...ab", D.conj(), W, D)
        full = np.where(valid[..., None, None], full, 0.0)
    return ModeDensities(
        labels=MODE_LABELS,
        probes=wigner.probes,
        k=kv,
        mu=mu,
        k_cell=wigner.k_cell,
        valid=valid,
        imag_max=imag_max,
        cross=full,
    )


def shell_mass_fraction(
    densities: Union[WignerGrid, ModeDensities],
    medium: Medium,
    omega: float,
    band: float,
) -> dict:
    """Fraction of phase-space mass within ``| v|k| - |omega| | <= band |omega|``.

    For a ``WignerGrid`` the absolute trace density is used (key ``"trace"``);
    for ``ModeDensities`` each transverse mode and the absolute total are
    reported. Zero total mass yields ``EMPTY_MASS`` rather than a number.
    """
    if not omega > 0 or not band > 0:
        raise ValueError("omega and band must be positive")
    if isinstance(densities, WignerGrid):
        kv = densities.k_vectors()
        dens = {"trace": np.abs(densities.trace())}
        probes = densities.probes
    else:
        kv = densities.k
        dens = {lab: np.abs(densities.mode(lab)) for lab in densities.labels}
        dens["total"] = sum(dens.values())
        probes = densities.probes
    P = probes.shape[0]
    kshape = kv.shape[:-1]
    v = medium.speed(probes).reshape((P,) + (1,) * len(kshape))
    disp = v * np.linalg.norm(kv, axis=-1)[None, ...]
    mask = np.abs(disp - omega) <= band * omega
    out = {}
    for key, d in dens.items():
        total = float(np.sum(d))
        out[key] = EMPTY_MASS if total == 0.0 else float(np.sum(d[mask]) / total)
    return out


def husimi_smooth(wigner: WignerGrid, sigma_x, sigma_k) -> WignerGrid:
    """Gaussian-smoothed Wigner samples (Husimi-type density).

    Convolves in ``k`` on every probe and in ``x`` across the probe block,
    which must be a contiguous index box. ``sigma_x * sigma_k >= eps / 2`` on
    every active axis is required; smaller widths raise ``WindowError``.
    Kernels are normalized on the discrete nodes so total mass is kept;
    periodic axes wrap, other axes reflect at the block edge.
    """
    d = wigner.grid.ndim
    sx = np.broadcast_to(np.asarray(sigma_x, dtype=float), (d,))
    sk = np.broadcast_to(np.asarray(sigma_k, dtype=float), (d,))
    eps = wigner.epsilon_scale
    if np.any(sx <= 0) or np.any(sk <= 0):
        raise WindowError("smoothing widths must be positive")
    if np.any(sx * sk < eps / 2 * (1 - 1e-12)):
        raise WindowError(
            f"inadmissible widths: sigma_x * sigma_k must be >= eps/2 = {eps / 2:.3g}"
        )
    lat = wigner.lattice_shape()
    if lat is None:
        raise WindowError("x smoothing needs probes filling a contiguous node block")
    kshape = wigner.k_shape
    n = wigner.values.shape[-1]
    block = wigner.values.reshape(lat + kshape + (n, n))
    dk = [a[1] - a[0] for a in wigner.k_axes]
    sig = [sx[i] / wigner.grid.spacing[i] for i in range(d)]
    sig += [sk[i] / dk[i] for i in range(d)]
    modes = []
    for i in range(d):
        full_axis = lat[i] == wigner.grid.shape[i]
        modes.append("wrap" if (wigner.grid.periodic[i] and full_axis) else "reflect")
    modes += ["wrap"] * d
    sig += [0.0, 0.0]
    modes += ["constant", "constant"]
    re = ndimage.gaussian_filter(block.real, sig, mode=modes, truncate=10.0)
    im = ndimage.gaussian_filter(block.imag, sig, mode=modes, truncate=10.0)
    smoothed = (re + 1j * im).reshape(wigner.values.shape)
    smoothed = 0.5 * (smoothed + np.conj(np.swapaxes(smoothed, -1, -2)))
    return WignerGrid(
        grid=wigner.grid,
        probes=wigner.probes,
        probe_indices=wigner.probe_indices,
        k_axes=wigner.k_axes,
        values=smoothed,
        window=wigner.window,
        epsilon_scale=eps,
        smoothing=(tuple(sx), tuple(sk)),
        meta=dict(wigner.meta),
    )
