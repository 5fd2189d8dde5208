"""Constant Maxwell matrices, media, the dispersion matrix and its eigensystem.

The unknown is the six-vector ``u = (E1, E2, E3, H1, H2, H3)``. The
time-harmonic system is symmetric hyperbolic with

    A0 = diag(eps, eps, eps, eta, eta, eta),   A^j = [[0, Q_j^T], [Q_j, 0]],

where ``Q_j`` is the cross product with the j-th basis vector. The
dispersion matrix ``L(x, k) = sum_j A0^{-1} k_j A^j`` has eigenvalues
``0, +v|k|, -v|k|``, each of multiplicity two, with ``v = 1/sqrt(eps*eta)``.

All functions broadcast over leading axes: ``x`` and ``k`` have shape
``(..., 3)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import DegenerateDirectionError, EvanescentError, MediumError

#: Default floor on |k|; the propagation frame is singular at k = 0.
K_MIN = 1e-8

#: Eigenvector ordering used by every array-valued accessor.
MODE_LABELS = ("+1", "+2", "-1", "-2", "0_1", "0_2")
TRANSVERSE_MODES = MODE_LABELS[:4]

Q = np.array(
    [
        [[0.0, 0.0, 0.0], [0.0, 0.0, -1.0], [0.0, 1.0, 0.0]],
        [[0.0, 0.0, 1.0], [0.0, 0.0, 0.0], [-1.0, 0.0, 0.0]],
        [[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 0.0]],
    ]
)


def _block(q: np.ndarray) -> np.ndarray:
    a = np.zeros((6, 6))
    a[:3, 3:] = q.T
    a[3:, :3] = q
    return a


#: A^1, A^2, A^3 stacked along the first axis.
A_J = np.stack([_block(q) for q in Q])

#: Boundary matrix of the perfect-conductor problem (rows/cols H1, H2).
A_B = np.zeros((6, 6))
A_B[3, 4] = -1.0
A_B[4, 3] = 1.0

#: Calderon projection: keeps the tangential components of E and H.
CALDERON_M = np.diag([1.0, 1.0, 0.0, 1.0, 1.0, 0.0])


def a0_matrix(eps, eta) -> np.ndarray:
    """Return ``A0 = diag(eps I3, eta I3)`` with shape ``(..., 6, 6)``."""
    eps = np.asarray(eps, dtype=float)
    eta = np.asarray(eta, dtype=float)
    diag = np.concatenate(
        [np.repeat(eps[..., None], 3, axis=-1), np.repeat(eta[..., None], 3, axis=-1)],
        axis=-1,
    )
    out = np.zeros(diag.shape + (6,))
    idx = np.arange(6)
    out[..., idx, idx] = diag
    return out


def c_matrix(sigma) -> np.ndarray:
    """Return the conductivity matrix ``C = diag(sigma I3, 0)``."""
    sigma = np.asarray(sigma, dtype=float)
    return a0_matrix(sigma, np.zeros_like(sigma))


def _constant(value: float) -> Callable[[np.ndarray], np.ndarray]:
    def f(x):
        x = np.asarray(x, dtype=float)
        return np.full(x.shape[:-1], float(value))

    return f


def _zero_gradient(x):
    return np.zeros(np.shape(x), dtype=float)


@dataclass(frozen=True)
class Medium:
    """Smooth scalar coefficient fields ``eps(x)``, ``eta(x)``, ``sigma(x)``.

    Each field is a callable mapping points of shape ``(..., 3)`` to values of
    shape ``(...)``. Gradients are optional; missing ones fall back to central
    differences with step ``fd_step * length_scale``.
    """

    epsilon: Callable[[np.ndarray], np.ndarray]
    eta: Callable[[np.ndarray], np.ndarray]
    sigma: Optional[Callable[[np.ndarray], np.ndarray]] = None
    grad_epsilon: Optional[Callable[[np.ndarray], np.ndarray]] = None
    grad_eta: Optional[Callable[[np.ndarray], np.ndarray]] = None
    region: str = "whole-space"
    length_scale: float = 1.0
    fd_step: float = 1e-5
    description: str = field(default="", compare=False)

    @classmethod
    def homogeneous(cls, epsilon=1.0, eta=1.0, sigma=0.0, region="whole-space"):
        if epsilon <= 0 or eta <= 0:
            raise MediumError(f"epsilon and eta must be positive, got {epsilon}, {eta}")
        return cls(
            epsilon=_constant(epsilon),
            eta=_constant(eta),
            sigma=_constant(sigma),
            grad_epsilon=_zero_gradient,
            grad_eta=_zero_gradient,
            region=region,
            description=f"homogeneous eps={epsilon} eta={eta} sigma={sigma}",
        )

    @classmethod
    def from_speed(cls, speed, grad_speed=None, eta=1.0, region="whole-space"):
        """Medium with prescribed speed ``v(x)`` and constant ``eta``.

        ``eps = 1/(v^2 eta)`` so that ``v = 1/sqrt(eps*eta)`` holds exactly up
        to round-off.
        """
        eta = float(eta)

        def epsilon(x):
            return 1.0 / (speed(x) ** 2 * eta)

        grad_epsilon = None
        if grad_speed is not None:

            def grad_epsilon(x):
                v = speed(x)
                return (-2.0 / (v**3 * eta))[..., None] * grad_speed(x)

        return cls(
            epsilon=epsilon,
            eta=_constant(eta),
            sigma=_constant(0.0),
            grad_epsilon=grad_epsilon,
            grad_eta=_zero_gradient,
            region=region,
            description="speed-profile medium",
        )

    @classmethod
    def linear_speed(cls, gradient, v0=1.0, eta=1.0, region="whole-space"):
        """Medium with ``v(x) = v0 + gradient . x``."""
        g = np.asarray(gradient, dtype=float)

        def speed(x):
            return v0 + np.asarray(x, dtype=float) @ g

        def grad_speed(x):
            return np.broadcast_to(g, np.shape(x)).copy()

        return cls.from_speed(speed, grad_speed, eta=eta, region=region)

    def coefficients(self, x):
        """Validated ``(eps, eta)`` at ``x``."""
        x = np.asarray(x, dtype=float)
        eps = np.asarray(self.epsilon(x), dtype=float)
        eta = np.asarray(self.eta(x), dtype=float)
        eps, eta = np.broadcast_arrays(eps, eta)
        if not (np.all(np.isfinite(eps)) and np.all(np.isfinite(eta))):
            raise MediumError("non-finite coefficient value")
        if np.any(eps <= 0) or np.any(eta <= 0):
            raise MediumError("epsilon and eta must be positive on the domain")
        return eps, eta

    def conductivity(self, x):
        x = np.asarray(x, dtype=float)
        if self.sigma is None:
            return np.zeros(x.shape[:-1])
        return np.asarray(self.sigma(x), dtype=float)

    def speed(self, x):
        eps, eta = self.coefficients(x)
        return 1.0 / np.sqrt(eps * eta)

    def _central_difference(self, f, x):
        x = np.asarray(x, dtype=float)
        h = self.fd_step * self.length_scale
        out = np.empty(x.shape)
        for j in range(3):
            e = np.zeros(3)
            e[j] = h
            out[..., j] = (f(x + e) - f(x - e)) / (2 * h)
        return out

    def grad_coefficients(self, x):
        x = np.asarray(x, dtype=float)
        if self.grad_epsilon is not None:
            ge = np.asarray(self.grad_epsilon(x), dtype=float)
        else:
            ge = self._central_difference(self.epsilon, x)
        if self.grad_eta is not None:
            gh = np.asarray(self.grad_eta(x), dtype=float)
        else:
            gh = self._central_difference(self.eta, x)
        return ge, gh

    def grad_speed(self, x):
        """``grad v = -v/2 (grad eps/eps + grad eta/eta)``."""
        eps, eta = self.coefficients(x)
        ge, gh = self.grad_coefficients(x)
        v = 1.0 / np.sqrt(eps * eta)
        return (-0.5 * v)[..., None] * (ge / eps[..., None] + gh / eta[..., None])


def _check_k(k, k_min):
    k = np.asarray(k, dtype=float)
    if k.shape[-1] != 3:
        raise ValueError(f"wave vector must have trailing dimension 3, got {k.shape}")
    norm = np.linalg.norm(k, axis=-1)
    if np.any(~(norm >= k_min)):
        raise DegenerateDirectionError(
            f"|k| below the floor k_min={k_min:g} (min |k| = {np.min(norm):g})"
        )
    return k, norm


def dispersion_matrix(medium: Medium, x, k, k_min: float = K_MIN) -> np.ndarray:
    """``L(x, k) = sum_j A0(x)^{-1} k_j A^j`` with shape ``(..., 6, 6)``."""
    k, _ = _check_k(k, k_min)
    eps, eta = medium.coefficients(x)
    s = np.einsum("...j,jab->...ab", k, A_J)
    scale = np.concatenate(
        [np.repeat((1.0 / eps)[..., None], 3, -1), np.repeat((1.0 / eta)[..., None], 3, -1)],
        axis=-1,
    )
    return scale[..., :, None] * s


@dataclass(frozen=True)
class PropagationFrame:
    """Orthonormal triple ``(khat, z1, z2)`` and the polar angles of ``k``."""

    khat: np.ndarray
    z1: np.ndarray
    z2: np.ndarray
    theta: np.ndarray
    phi: np.ndarray

    def gram(self) -> np.ndarray:
        m = np.stack([self.khat, self.z1, self.z2], axis=-2)
        return m @ np.swapaxes(m, -1, -2)


def propagation_frame(k, k_min: float = K_MIN) -> PropagationFrame:
    """Polar-coordinate frame of ``k``; on the polar axis ``phi`` is fixed to 0."""
    k, norm = _check_k(k, k_min)
    kperp = np.hypot(k[..., 0], k[..., 1])
    cos_t = k[..., 2] / norm
    sin_t = kperp / norm
    on_axis = kperp == 0.0
    safe = np.where(on_axis, 1.0, kperp)
    cos_p = np.where(on_axis, 1.0, k[..., 0] / safe)
    sin_p = np.where(on_axis, 0.0, k[..., 1] / safe)
    khat = np.stack([sin_t * cos_p, sin_t * sin_p, cos_t], axis=-1)
    z1 = np.stack([cos_t * cos_p, cos_t * sin_p, -sin_t], axis=-1)
    z2 = np.stack([-sin_p, cos_p, np.zeros_like(cos_p)], axis=-1)
    theta = np.arctan2(sin_t, cos_t)
    phi = np.arctan2(sin_p, cos_p)
    return PropagationFrame(khat, z1, z2, theta, phi)


@dataclass(frozen=True)
class EigenSystem:
    """Closed-form eigenpairs of ``L(x, k)`` and their duals ``d = A0 b``.

    Vectors are real. ``vectors`` stacks them as columns in ``MODE_LABELS``
    order, so ``L @ vectors == vectors * eigenvalues[..., None, :]``.
    """

    omega0: np.ndarray
    omega_plus: np.ndarray
    omega_minus: np.ndarray
    bp_1: np.ndarray
    bp_2: np.ndarray
    bm_1: np.ndarray
    bm_2: np.ndarray
    b0_1: np.ndarray
    b0_2: np.ndarray
    eps: np.ndarray
    eta: np.ndarray

    @property
    def vectors(self) -> np.ndarray:
        return np.stack(
            [self.bp_1, self.bp_2, self.bm_1, self.bm_2, self.b0_1, self.b0_2], axis=-1
        )

    @property
    def eigenvalues(self) -> np.ndarray:
        return np.stack(
            [
                self.omega_plus,
                self.omega_plus,
                self.omega_minus,
                self.omega_minus,
                self.omega0,
                self.omega0,
            ],
            axis=-1,
        )

    @property
    def a0(self) -> np.ndarray:
        return a0_matrix(self.eps, self.eta)

    @property
    def duals(self) -> np.ndarray:
        return self.a0 @ self.vectors

    def vector(self, label: str) -> np.ndarray:
        return self.vectors[..., MODE_LABELS.index(label)]

    def dual(self, label: str) -> np.ndarray:
        return self.duals[..., MODE_LABELS.index(label)]

    def eigenvalue(self, label: str) -> np.ndarray:
        return self.eigenvalues[..., MODE_LABELS.index(label)]


def eigensystem(medium: Medium, x, k, k_min: float = K_MIN) -> EigenSystem:
    frame = propagation_frame(k, k_min)
    eps, eta = medium.coefficients(x)
    norm = np.linalg.norm(np.asarray(k, dtype=float), axis=-1)
    v = 1.0 / np.sqrt(eps * eta)
    se = np.sqrt(2.0 * eps)[..., None]
    sh = np.sqrt(2.0 * eta)[..., None]
    z1, z2, kh = frame.z1, frame.z2, frame.khat
    zeros = np.zeros_like(kh)
    bp_1 = np.concatenate([z1 / se, z2 / sh], axis=-1)
    bp_2 = np.concatenate([z2 / se, -z1 / sh], axis=-1)
    bm_1 = np.concatenate([z1 / se, -z2 / sh], axis=-1)
    bm_2 = np.concatenate([z2 / se, z1 / sh], axis=-1)
    b0_1 = np.concatenate([kh / np.sqrt(eps)[..., None], zeros], axis=-1)
    b0_2 = np.concatenate([zeros, kh / np.sqrt(eta)[..., None]], axis=-1)
    omega = v * norm
    return EigenSystem(
        omega0=np.zeros_like(omega),
        omega_plus=omega,
        omega_minus=-omega,
        bp_1=bp_1,
        bp_2=bp_2,
        bm_1=bm_1,
        bm_2=bm_2,
        b0_1=b0_1,
        b0_2=b0_2,
        eps=np.broadcast_to(eps, omega.shape),
        eta=np.broadcast_to(eta, omega.shape),
    )


@dataclass
class NormalizationReport:
    """Pairings of an eigensystem; every ``*_dev`` is a max absolute deviation."""

    gram: np.ndarray
    flux: np.ndarray
    flux_expected: np.ndarray
    boundary_ab: np.ndarray
    boundary_a3: np.ndarray
    boundary_a3_expected: np.ndarray
    gram_dev: float
    flux_dev: float
    boundary_dev: float
    tolerance: float = 1e-10

    @property
    def ok(self) -> bool:
        return max(self.gram_dev, self.flux_dev, self.boundary_dev) <= self.tolerance

    def rows(self):
        return [
            {"check": "gram", "max_abs_dev": self.gram_dev, "tolerance": self.tolerance},
            {"check": "flux", "max_abs_dev": self.flux_dev, "tolerance": self.tolerance},
            {"check": "boundary", "max_abs_dev": self.boundary_dev, "tolerance": self.tolerance},
        ]


def normalization_report(es: EigenSystem, medium: Medium, x, k, tolerance: float = 1e-10):
    """Evaluate ``(A0 b_a, b_b)``, ``(A^j b_+, b_+)`` and the boundary pairings."""
    vecs = es.vectors
    gram = np.swapaxes(vecs, -1, -2) @ es.a0 @ vecs
    plus = np.stack([es.bp_1, es.bp_2], axis=-2)
    flux = np.einsum("...ma,jab,...mb->...mj", plus, A_J, plus)
    frame = propagation_frame(k)
    v = medium.speed(x)
    expected = (v[..., None] * frame.khat)[..., None, :]
    expected = np.broadcast_to(expected, flux.shape)
    b = es.bp_1
    ab = np.einsum("...a,ab,...b->...", b, A_B, b)
    a3 = np.einsum("...a,ab,...b->...", b, A_J[2], b)
    a3_expected = v * frame.khat[..., 2]
    eye = np.broadcast_to(np.eye(6), gram.shape)
    return NormalizationReport(
        gram=gram,
        flux=flux,
        flux_expected=expected,
        boundary_ab=ab,
        boundary_a3=a3,
        boundary_a3_expected=a3_expected,
        gram_dev=float(np.max(np.abs(gram - eye))),
        flux_dev=float(np.max(np.abs(flux - expected))),
        boundary_dev=float(max(np.max(np.abs(ab)), np.max(np.abs(a3 - a3_expected)))),
        tolerance=tolerance,
    )


def normal_root(medium: Medium, x_prime, k_prime, omega):
    """Positive root ``k3+ = sqrt(w^2/v(x',0)^2 - |k'|^2)`` of ``v|k| = w``.

    Raises :class:`EvanescentError` if any ``|k'| >= w/v``.
    """
    x_prime = np.asarray(x_prime, dtype=float)
    k_prime = np.asarray(k_prime, dtype=float)
    foot = np.concatenate([x_prime, np.zeros(x_prime.shape[:-1] + (1,))], axis=-1)
    v = medium.speed(foot)
    disc = (omega / v) ** 2 - np.sum(k_prime**2, axis=-1)
    if np.any(disc <= 0):
        raise EvanescentError("tangential wave vector outside the hyperbolic region")
    return np.sqrt(disc)


def boundary_pairings(medium: Medium, x_prime, k_prime, omega) -> dict:
    """Pairings of ``b_+^1`` at the two on-shell wave vectors ``k+/-=(k', +/-k3)``.

    Returns arrays for ``(A_b b(k), b(k))`` at both roots, the cross pairings
    ``(A^3 b(k+), b(k-))`` and ``(A_b b(k+), b(k-))``, and the residual of
    ``(sum_{j<=2} k_j A^j - w A0) b(k+/-) + k3+/- A^3 b(k+/-)``.
    """
    k3 = normal_root(medium, x_prime, k_prime, omega)
    x_prime = np.asarray(x_prime, dtype=float)
    k_prime = np.asarray(k_prime, dtype=float)
    foot = np.concatenate([x_prime, np.zeros(x_prime.shape[:-1] + (1,))], axis=-1)
    kp = np.concatenate([k_prime, k3[..., None]], axis=-1)
    km = np.concatenate([k_prime, -k3[..., None]], axis=-1)
    bp = eigensystem(medium, foot, kp).bp_1
    bm = eigensystem(medium, foot, km).bp_1
    eps, eta = medium.coefficients(foot)
    a0 = a0_matrix(eps, eta)

    def pair(m, a, b):
        return np.einsum("...a,ab,...b->...", b, m, a)

    def eigen_residual(kvec, b):
        tang = np.einsum("...j,jab->...ab", kvec[..., :2], A_J[:2])
        lhs = (tang - omega * a0) @ b[..., None]
        rhs = -kvec[..., 2, None, None] * (A_J[2] @ b[..., None])
        return np.max(np.abs(lhs - rhs), axis=(-2, -1))

    return {
        "ab_self_plus": pair(A_B, bp, bp),
        "ab_self_minus": pair(A_B, bm, bm),
        "a3_cross": pair(A_J[2], bp, bm),
        "ab_cross": pair(A_B, bp, bm),
        "eigen_residual": np.maximum(eigen_residual(kp, bp), eigen_residual(km, bm)),
    }
