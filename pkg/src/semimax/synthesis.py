"""Exact and asymptotic high-frequency solutions of the time-harmonic system.

Fields are written as ``u(x) = A(x) b(x, grad S) exp(i S(x) / eps)``. With
the ``exp(+i k.x/eps)`` phase the residual

    (i omega / eps) A0 u + sum_j A^j d_j u

vanishes for ``b`` on the ``-v|k|`` eigenbranch, so the user-facing mode
labels ``+1``/``+2`` are realised by the eigenvectors ``-1``/``-2``.
:func:`field_mode` gives the eigen label that :func:`project_modes` will
report for a synthesized field.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import DegenerateDirectionError, GridError, MediumError
from .grid import FieldSnapshot, Grid
from .spectral import A_J, K_MIN, Medium, a0_matrix, eigensystem
from .transport import RayState, TransportScenario, transport_ensemble, RayEnsemble

COMMENSURATE_TOL = 1e-9
SHELL_TOL = 1e-12


def field_mode(label: str) -> str:
    """Eigenvector label carried by a synthesized field of user mode ``label``."""
    p = label.lstrip("+")
    if p not in ("1", "2"):
        raise ValueError(f"synthesized fields carry transverse modes '+1' or '+2', got {label!r}")
    return "-" + p


# ---------------------------------------------------------------- residual


def _derivative(values: np.ndarray, grid: Grid, i: int) -> np.ndarray:
    xi = grid.angular_frequencies(i)
    shape = [1] * values.ndim
    shape[i] = -1
    return np.fft.ifft(1j * xi.reshape(shape) * np.fft.fft(values, axis=i), axis=i)


def _check_differentiable(snap: FieldSnapshot, tol: float = 1e-12) -> None:
    grid = snap.grid
    scale = np.max(np.abs(snap.values)) if snap.values.size else 0.0
    for i in range(grid.ndim):
        if grid.periodic[i]:
            continue
        ends = np.take(snap.values, [0, -1], axis=i)
        if np.max(np.abs(ends)) > tol * max(scale, 1e-300):
            raise GridError(
                f"spectral derivative along non-periodic axis x{grid.axes[i] + 1} needs a field vanishing at both ends"
            )


def gradient(snap: FieldSnapshot) -> np.ndarray:
    """Spectral gradient ``(*shape, n, 3)``; inactive axes use the pinned wave vector."""
    _check_differentiable(snap)
    grid = snap.grid
    out = np.empty(snap.values.shape + (3,), dtype=complex)
    for a in grid.inactive_axes:
        out[..., a] = (1j * grid.pinned_k[a] / snap.epsilon_scale) * snap.values
    for i, a in enumerate(grid.axes):
        out[..., a] = _derivative(snap.values, grid, i)
    return out


def maxwell_residual(snap: FieldSnapshot, medium: Medium, omega: float) -> float:
    """Relative residual ``|(i w/eps) A0 u + sum A^j d_j u| / |(w/eps) A0 u|``."""
    if snap.n_components != 6:
        raise GridError("the Maxwell residual needs 6-component fields")
    eps = snap.epsilon_scale
    x = snap.grid.points()
    e, h = medium.coefficients(x)
    a0 = a0_matrix(e, h)
    g = gradient(snap)
    a0u = np.einsum("...ab,...b->...a", a0, snap.values)
    res = (1j * omega / eps) * a0u + np.einsum("jab,...bj->...a", A_J, g)
    denom = np.linalg.norm(a0u) * omega / eps
    if denom == 0:
        return 0.0
    return float(np.linalg.norm(res) / denom)


def divergences(snap: FieldSnapshot, medium: Medium) -> tuple:
    """Max moduli of ``div(eps E)`` and ``div(eta H)``, scaled by ``eps``."""
    e, h = medium.coefficients(snap.grid.points())
    out = []
    for sl, coef in ((slice(0, 3), e), (slice(3, 6), h)):
        part = snap.with_values(coef[..., None] * snap.values[..., sl])
        g = gradient(part)
        div = sum(g[..., j, j] for j in range(3))
        out.append(float(np.max(np.abs(div))) * snap.epsilon_scale)
    return tuple(out)


# -------------------------------------------------------------- plane waves


@dataclass
class PlaneWaveSpec:
    """Homogeneous-medium plane wave ``amplitude * b * exp(i k0.x/eps)``.

    ``omega`` defaults to ``v|k0|``; an explicit value must be on-shell to
    ``1e-12`` relative.
    """

    k0: np.ndarray
    epsilon_scale: float
    amplitude: complex = 1.0
    mode: str = "+1"
    epsilon: float = 1.0
    eta: float = 1.0
    omega: Optional[float] = None

    def __post_init__(self):
        self.k0 = np.asarray(self.k0, dtype=float).reshape(3)
        if self.epsilon_scale <= 0:
            raise ValueError("epsilon_scale must be positive")
        field_mode(self.mode)
        if np.linalg.norm(self.k0) < K_MIN:
            raise DegenerateDirectionError("plane-wave vector below the floor")
        w = self.speed * np.linalg.norm(self.k0)
        if self.omega is None:
            self.omega = float(w)
        elif abs(w - self.omega) > SHELL_TOL * self.omega:
            raise ValueError(f"plane wave off-shell: v|k0| = {w!r}, omega = {self.omega!r}")

    @property
    def speed(self) -> float:
        return 1.0 / np.sqrt(self.epsilon * self.eta)

    @property
    def medium(self) -> Medium:
        return Medium.homogeneous(self.epsilon, self.eta)

    def polarization(self, k=None) -> np.ndarray:
        k = self.k0 if k is None else np.asarray(k, dtype=float)
        return eigensystem(self.medium, np.zeros(3), k).vector(field_mode(self.mode))


def commensurate_k(k0, grid: Grid, eps: float) -> np.ndarray:
    """Nearest wave vector whose phase ``exp(i k.x/eps)`` is periodic on the grid.

    Only periodic active axes are adjusted; inactive axes must already carry
    ``k0`` as their pinned component.
    """
    k = np.asarray(k0, dtype=float).copy()
    for a in grid.inactive_axes:
        if k[a] != grid.pinned_k[a]:
            raise GridError(f"grid pins k{a + 1} = {grid.pinned_k[a]}, plane wave has {k[a]}")
    for i, a in enumerate(grid.axes):
        if not grid.periodic[i]:
            continue
        length = grid.extent[i]
        q = k[a] * length / (2 * np.pi * eps)
        n = np.rint(q)
        if abs(q - n) > COMMENSURATE_TOL * max(1.0, abs(q)):
            k[a] = 2 * np.pi * eps * n / length
    return k


def _assemble(amp, b, phase, eps) -> np.ndarray:
    return amp[..., None] * b * np.exp(1j * phase / eps)[..., None]


def plane_wave_field(spec: PlaneWaveSpec, grid: Grid, strict: bool = False) -> FieldSnapshot:
    """Sample a plane wave on ``grid``.

    On periodic axes ``k0`` is replaced by the nearest commensurate vector and
    ``omega`` by ``v|k|``; ``meta`` reports both. ``strict=True`` turns any
    adjustment into a ``GridError``.
    """
    eps = spec.epsilon_scale
    k = commensurate_k(spec.k0, grid, eps)
    adjusted = not np.array_equal(k, spec.k0)
    if adjusted and strict:
        raise GridError(f"k0 = {spec.k0.tolist()} is not commensurate with the grid (nearest {k.tolist()})")
    omega = float(spec.speed * np.linalg.norm(k)) if adjusted else spec.omega
    b = spec.polarization(k)
    x = grid.points()
    amp = np.full(grid.shape, complex(spec.amplitude))
    values = _assemble(amp, b, x @ k, eps)
    snap = FieldSnapshot(grid, values, eps)
    snap.meta.update(
        kind="plane-wave",
        k_requested=spec.k0.tolist(),
        k=k.tolist(),
        adjusted=bool(adjusted),
        omega=omega,
        mode=spec.mode,
        field_mode=field_mode(spec.mode),
        eigen_residual=float(np.linalg.norm(np.einsum("j,jab,b->a", k, A_J, b) + omega * a0_matrix(spec.epsilon, spec.eta) @ b)),
    )
    return snap


# ------------------------------------------------------------ mirror field


@dataclass
class MirrorFieldSpec:
    """Incident plane wave heading into the conductor ``x3 = 0`` plus its reflection."""

    incident: PlaneWaveSpec

    def __post_init__(self):
        if not self.incident.k0[2] < 0:
            raise ValueError("the incident wave vector needs k3 < 0")

    def reflected_k(self, k=None) -> np.ndarray:
        k = (self.incident.k0 if k is None else np.asarray(k, dtype=float)).copy()
        k[2] = -k[2]
        return k

    def coefficients(self, k=None) -> np.ndarray:
        """Reflection amplitudes on the two reflected polarizations.

        Solves the 2x2 system making ``E1`` and ``E2`` of incident plus
        reflected vanish on the wall.
        """
        inc = self.incident
        k = inc.k0 if k is None else np.asarray(k, dtype=float)
        es = eigensystem(inc.medium, np.zeros(3), self.reflected_k(k))
        basis = np.column_stack([es.vector("-1")[:2], es.vector("-2")[:2]])
        rhs = -complex(inc.amplitude) * inc.polarization(k)[:2]
        return np.linalg.solve(basis, rhs)


def conductor_mirror_field(spec: MirrorFieldSpec, grid: Grid, strict: bool = False) -> FieldSnapshot:
    """Superposition vanishing tangentially on ``x3 = 0``.

    ``grid`` must have ``x3`` active with its first node on the wall.
    """
    if 2 not in grid.axes:
        raise GridError("the mirror field needs x3 as an active axis")
    i3 = grid.axes.index(2)
    if abs(grid.origin[i3]) > 1e-12:
        raise GridError("the grid must start on the wall x3 = 0")
    inc = spec.incident
    eps = inc.epsilon_scale
    k = commensurate_k(inc.k0, grid, eps)
    adjusted = not np.array_equal(k, inc.k0)
    if adjusted and strict:
        raise GridError(f"k0 = {inc.k0.tolist()} is not commensurate with the grid (nearest {k.tolist()})")
    kr = spec.reflected_k(k)
    r = spec.coefficients(k)
    es_r = eigensystem(inc.medium, np.zeros(3), kr)
    b_r = r[0] * es_r.vector("-1") + r[1] * es_r.vector("-2")
    x = grid.points()
    amp = np.full(grid.shape, complex(inc.amplitude))
    values = _assemble(amp, inc.polarization(k), x @ k, eps) + _assemble(np.ones(grid.shape), b_r, x @ kr, eps)
    wall = np.take(values, 0, axis=i3)[..., :2]
    snap = FieldSnapshot(grid, values, eps)
    omega = float(inc.speed * np.linalg.norm(k))
    snap.meta.update(
        kind="mirror",
        k_incident=k.tolist(),
        k_reflected=kr.tolist(),
        adjusted=bool(adjusted),
        omega=omega,
        coefficients=[[c.real, c.imag] for c in r],
        reflected_energy=float(np.sum(np.abs(r) ** 2)),
        tangential_residual=float(np.max(np.abs(wall))) if wall.size else 0.0,
        field_mode=field_mode(inc.mode),
    )
    return snap


# -------------------------------------------------------------------- WKB


@dataclass
class LinearPhase:
    """``S(x) = k0 . x``."""

    k0: np.ndarray

    def __post_init__(self):
        self.k0 = np.asarray(self.k0, dtype=float).reshape(3)

    def __call__(self, x):
        return np.asarray(x, dtype=float) @ self.k0

    def grad(self, x):
        return np.broadcast_to(self.k0, np.shape(x)).copy()


@dataclass
class EikonalPhase:
    """Stratified eikonal ``S = k'.x' + S3(x3)`` built from one traced ray.

    ``S3`` and ``k3`` are cubic splines through the trajectory samples.
    """

    k_prime: np.ndarray
    omega: float
    x3_center: float
    s3: CubicSpline
    k3: CubicSpline
    span: tuple

    def _x3(self, x):
        x3 = np.asarray(x, dtype=float)[..., 2]
        if np.any(x3 < self.span[0]) or np.any(x3 > self.span[1]):
            raise GridError(f"x3 outside the traced span {self.span}")
        return x3

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return x[..., :2] @ self.k_prime + self.s3(self._x3(x))

    def grad(self, x):
        x = np.asarray(x, dtype=float)
        out = np.empty(x.shape)
        out[..., :2] = self.k_prime
        out[..., 2] = self.k3(self._x3(x))
        return out


def eikonal_phase(medium: Medium, omega: float, k_prime, span, x3_center: float = 0.0,
                  dt: float = 0.005) -> EikonalPhase:
    """Trace the ray through ``(0, 0, x3_center)`` with ``v|k| = omega`` and
    ``k3 > 0`` both ways, accumulating ``dS3 = k3 dx3``.

    The medium must be stratified (``v`` depending on ``x3`` only) so that
    ``k'`` is conserved.
    """
    kp = np.asarray(k_prime, dtype=float).reshape(2)
    lo, hi = float(span[0]), float(span[1])
    if not lo <= x3_center <= hi:
        raise ValueError("x3_center must lie inside the span")
    x0 = np.array([0.0, 0.0, x3_center])
    v0 = float(medium.speed(x0))
    disc = (omega / v0) ** 2 - kp @ kp
    if disc <= 0:
        raise MediumError("no propagating normal wave number at the profile center")
    k0 = np.array([kp[0], kp[1], np.sqrt(disc)])
    scn = TransportScenario("whole-space", medium)
    pieces = {}
    for label, end in (("+1", hi), ("-1", lo)):
        # the '-' branch retraces the '+' ray backwards in time
        ens = RayEnsemble.from_states([RayState(x0, k0, label)], medium=medium)
        t_final = abs(end - x3_center) * np.linalg.norm(k0) / (v0 * k0[2]) + 4 * dt
        while True:
            tr = transport_ensemble(ens, scn, t_final, dt, record=True).trajectory
            xs, ks = tr["x"][:, 0], tr["k"][:, 0]
            if np.any(np.abs(medium.grad_speed(xs)[:, :2]) > 0):
                raise MediumError("the eikonal helper needs a stratified medium")
            if np.any(ks[:, 2] <= 0):
                raise MediumError("the traced ray turns within the span")
            if (xs[-1, 2] - end) * (1 if label == "+1" else -1) >= 0:
                break
            t_final *= 1.5
        pieces[label] = (xs[:, 2], ks[:, 2])
    x3 = np.concatenate([pieces["-1"][0][::-1], pieces["+1"][0]])
    k3 = np.concatenate([pieces["-1"][1][::-1], pieces["+1"][1]])
    x3, keep = np.unique(x3, return_index=True)
    k3 = k3[keep]
    k3_spline = CubicSpline(x3, k3)
    anti = k3_spline.antiderivative()
    s3 = CubicSpline(x3, anti(x3) - anti(x3_center))
    return EikonalPhase(kp, float(omega), float(x3_center), s3, k3_spline, (float(x3[0]), float(x3[-1])))


def gaussian_profile(center, width: float, amplitude: complex = 1.0) -> Callable:
    c = np.asarray(center, dtype=float).reshape(3)

    def amp(x):
        d = np.asarray(x, dtype=float) - c
        return amplitude * np.exp(-np.sum(d * d, axis=-1) / (2 * width**2))

    return amp


def wkb_field(
    medium: Medium,
    phase,
    amplitude: Callable,
    mode: str,
    epsilon_scale: float,
    grid: Grid,
    omega: float,
    center=None,
    k_min: float = K_MIN,
    support_tol: float = 1e-14,
) -> FieldSnapshot:
    """``A(x) b(x, grad S(x)) exp(i S(x)/eps)`` sampled on ``grid``.

    ``phase`` provides ``__call__`` and ``grad``. ``v|grad S| = omega`` must
    hold at ``center`` (default: the amplitude peak on the grid) to
    ``1e-8``; elsewhere the deviation is only reported. ``grad S`` below
    ``k_min`` where ``|A|`` exceeds ``support_tol`` times its peak raises.
    """
    x = grid.points()
    amp = np.asarray(amplitude(x), dtype=complex)
    mag = np.abs(amp)
    peak = mag.max() if mag.size else 0.0
    support = mag > support_tol * peak
    gs = phase.grad(x)
    gnorm = np.linalg.norm(gs, axis=-1)
    if np.any(gnorm[support] < k_min):
        raise DegenerateDirectionError("phase gradient vanishes on the amplitude support")
    if center is None:
        center = x[np.unravel_index(np.argmax(mag), mag.shape)]
    center = np.asarray(center, dtype=float)
    w_center = float(medium.speed(center) * np.linalg.norm(phase.grad(center)))
    if abs(w_center - omega) > 1e-8 * omega:
        raise ValueError(f"phase is off-shell at the profile center: v|grad S| = {w_center!r}, omega = {omega!r}")
    dev = np.abs(medium.speed(x) * gnorm - omega) / omega
    b = np.zeros(grid.shape + (6,))
    safe = np.where(support[..., None], gs, np.array([0.0, 0.0, 1.0]))
    b[support] = eigensystem(medium, x[support], safe[support], k_min).vector(field_mode(mode))
    values = _assemble(amp, b, phase(x), epsilon_scale)
    snap = FieldSnapshot(grid, values, epsilon_scale)
    snap.meta.update(
        kind="wkb",
        omega=float(omega),
        mode=mode,
        field_mode=field_mode(mode),
        shell_deviation_max=float(dev[support].max()) if np.any(support) else 0.0,
    )
    return snap
