"""Semiclassical operators on periodic grids and symbol utilities.

Two quantizations are provided for a symbol ``a(x, k)``:

* standard (Kohn-Nirenberg): ``a(x, eps D) f(x) = sum_xi e^{i x xi} a(x, eps xi) f^(xi)``
* Weyl: the kernel uses ``a((x + y)/2, eps xi)``.

Symbols may be sums of separable terms ``c fx(x) fk(k)``, which keeps
products and Poisson-bracket corrections separable and cheap to apply.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .errors import EvanescentError, GridError, SymbolError
from .grid import FieldSnapshot, Grid
from .phase_space import WindowSpec, wigner_transform
from .spectral import K_MIN, Medium, a0_matrix, dispersion_matrix

ArrayFn = Callable[[np.ndarray], np.ndarray]

# bound on symbol evaluations for the direct (non-separable) paths
_DIRECT_LIMIT = 2**27


def _ones(x):
    return np.ones(np.shape(x)[:-1])


def _zeros3(x):
    return np.zeros(np.shape(x))


@dataclass(frozen=True)
class SeparableTerm:
    """``coefficient * fx(x) * fk(k)``; gradients return trailing dimension 3."""

    fx: ArrayFn = _ones
    fk: ArrayFn = _ones
    grad_fx: Optional[ArrayFn] = _zeros3
    grad_fk: Optional[ArrayFn] = _zeros3
    coefficient: complex = 1.0

    def __call__(self, x, k):
        return self.coefficient * self.fx(x) * self.fk(k)


def _check_finite(values, what="symbol"):
    if not np.all(np.isfinite(values)):
        raise SymbolError(f"{what} evaluation produced non-finite values")
    return values


@dataclass(frozen=True)
class SymbolFunction:
    """Scalar or 6x6 matrix symbol ``a(x, k)``.

    Built either from separable ``terms`` or from a general ``func`` that
    broadcasts over ``x`` and ``k`` of shape ``(..., 3)``. Analytic gradients
    are optional; operations that need them raise ``SymbolError`` if absent.
    """

    terms: tuple = ()
    func: Optional[Callable] = None
    grad_x_func: Optional[Callable] = None
    grad_k_func: Optional[Callable] = None
    matrix: bool = False
    commuting: bool = False
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if (self.func is None) == (len(self.terms) == 0):
            raise SymbolError("a symbol needs either separable terms or a general function")
        if self.matrix and self.terms:
            raise SymbolError("matrix symbols must be given as a general function")

    # constructors

    @classmethod
    def constant(cls, c: complex = 1.0) -> "SymbolFunction":
        return cls(terms=(SeparableTerm(coefficient=c),))

    @classmethod
    def of_x(cls, fx: ArrayFn, grad: Optional[ArrayFn] = None) -> "SymbolFunction":
        return cls(terms=(SeparableTerm(fx=fx, grad_fx=grad),))

    @classmethod
    def of_k(cls, fk: ArrayFn, grad: Optional[ArrayFn] = None) -> "SymbolFunction":
        return cls(terms=(SeparableTerm(fk=fk, grad_fk=grad),))

    @classmethod
    def separable(cls, fx, fk, grad_fx=None, grad_fk=None, coefficient=1.0) -> "SymbolFunction":
        return cls(terms=(SeparableTerm(fx, fk, grad_fx, grad_fk, coefficient),))

    @classmethod
    def wave_component(cls, j: int) -> "SymbolFunction":
        """The symbol ``k_j``."""
        e = np.zeros(3)
        e[j] = 1.0
        return cls.of_k(lambda k: np.asarray(k)[..., j], lambda k: np.broadcast_to(e, np.shape(k)).copy())

    @classmethod
    def general(cls, func, grad_x=None, grad_k=None, matrix=False, commuting=False, **meta):
        return cls(
            func=func, grad_x_func=grad_x, grad_k_func=grad_k, matrix=matrix, commuting=commuting, meta=meta
        )

    # evaluation

    @property
    def is_separable(self) -> bool:
        return bool(self.terms)

    @property
    def has_gradients(self) -> bool:
        if self.terms:
            return all(t.grad_fx is not None and t.grad_fk is not None for t in self.terms)
        return self.grad_x_func is not None and self.grad_k_func is not None

    def __call__(self, x, k):
        x = np.asarray(x, dtype=float)
        k = np.asarray(k, dtype=float)
        if self.terms:
            return sum(t(x, k) for t in self.terms)
        return self.func(x, k)

    def grad_x(self, x, k):
        x, k = np.asarray(x, dtype=float), np.asarray(k, dtype=float)
        if not self.has_gradients:
            raise SymbolError("symbol has no analytic x-gradient")
        if self.terms:
            return sum(t.coefficient * t.grad_fx(x) * t.fk(k)[..., None] for t in self.terms)
        return self.grad_x_func(x, k)

    def grad_k(self, x, k):
        x, k = np.asarray(x, dtype=float), np.asarray(k, dtype=float)
        if not self.has_gradients:
            raise SymbolError("symbol has no analytic k-gradient")
        if self.terms:
            return sum(t.coefficient * t.fx(x)[..., None] * t.grad_fk(k) for t in self.terms)
        return self.grad_k_func(x, k)

    def fd_gradients(self, x, k, h: float = 1e-5) -> tuple:
        """Central-difference ``(grad_x, grad_k)`` for scalar symbols."""
        x, k = np.asarray(x, dtype=float), np.asarray(k, dtype=float)
        gx = np.empty(np.broadcast_shapes(x.shape, k.shape), dtype=complex)
        gk = np.empty_like(gx)
        for j in range(3):
            e = np.zeros(3)
            e[j] = h
            gx[..., j] = (self(x + e, k) - self(x - e, k)) / (2 * h)
            gk[..., j] = (self(x, k + e) - self(x, k - e)) / (2 * h)
        return gx, gk

    # algebra

    def __add__(self, other: "SymbolFunction") -> "SymbolFunction":
        if self.terms and other.terms:
            return SymbolFunction(terms=self.terms + other.terms)
        return _general_combine(self, other, lambda a, b: a + b, lambda a, ga, b, gb: ga + gb)

    def __neg__(self) -> "SymbolFunction":
        return self.scale(-1.0)

    def __sub__(self, other: "SymbolFunction") -> "SymbolFunction":
        return self + (-other)

    def scale(self, c: complex) -> "SymbolFunction":
        if self.terms:
            return SymbolFunction(
                terms=tuple(
                    SeparableTerm(t.fx, t.fk, t.grad_fx, t.grad_fk, c * t.coefficient) for t in self.terms
                )
            )
        gx = None if self.grad_x_func is None else (lambda x, k: c * self.grad_x_func(x, k))
        gk = None if self.grad_k_func is None else (lambda x, k: c * self.grad_k_func(x, k))
        return SymbolFunction.general(lambda x, k: c * self.func(x, k), gx, gk, matrix=self.matrix)

    def __mul__(self, other: "SymbolFunction") -> "SymbolFunction":
        """Pointwise product ``(self * other)(x, k)``."""
        if self.terms and other.terms:
            return SymbolFunction(terms=tuple(_term_product(s, t) for s in self.terms for t in other.terms))
        if self.matrix or other.matrix:
            raise SymbolError("pointwise products are implemented for scalar symbols only")
        return _general_combine(
            self, other, lambda a, b: a * b, lambda a, ga, b, gb: ga * b[..., None] + a[..., None] * gb
        )


def _term_product(s: SeparableTerm, t: SeparableTerm) -> SeparableTerm:
    def fx(x):
        return s.fx(x) * t.fx(x)

    def fk(k):
        return s.fk(k) * t.fk(k)

    gfx = gfk = None
    if s.grad_fx is not None and t.grad_fx is not None:
        def gfx(x):
            return s.grad_fx(x) * t.fx(x)[..., None] + s.fx(x)[..., None] * t.grad_fx(x)
    if s.grad_fk is not None and t.grad_fk is not None:
        def gfk(k):
            return s.grad_fk(k) * t.fk(k)[..., None] + s.fk(k)[..., None] * t.grad_fk(k)
    return SeparableTerm(fx, fk, gfx, gfk, s.coefficient * t.coefficient)


def _general_combine(a: SymbolFunction, b: SymbolFunction, op, grad_op) -> SymbolFunction:
    def func(x, k):
        return op(a(x, k), b(x, k))

    gx = gk = None
    if a.has_gradients and b.has_gradients:
        def gx(x, k):
            return grad_op(a(x, k), a.grad_x(x, k), b(x, k), b.grad_x(x, k))

        def gk(x, k):
            return grad_op(a(x, k), a.grad_k(x, k), b(x, k), b.grad_k(x, k))
    return SymbolFunction.general(func, gx, gk, matrix=a.matrix or b.matrix)


def poisson_term(b: SymbolFunction, a: SymbolFunction) -> SymbolFunction:
    """``grad_k b . grad_x a``, separable whenever both inputs are."""
    if not (a.has_gradients and b.has_gradients):
        raise SymbolError("product correction needs analytic gradients of both symbols")
    if a.terms and b.terms:
        terms = []
        for s in b.terms:
            for t in a.terms:
                for j in range(3):
                    terms.append(
                        SeparableTerm(
                            fx=lambda x, s=s, t=t, j=j: s.fx(x) * t.grad_fx(x)[..., j],
                            fk=lambda k, s=s, t=t, j=j: s.grad_fk(k)[..., j] * t.fk(k),
                            grad_fx=None,
                            grad_fk=None,
                            coefficient=s.coefficient * t.coefficient,
                        )
                    )
        return SymbolFunction(terms=tuple(terms))

    def func(x, k):
        return np.sum(b.grad_k(x, k) * a.grad_x(x, k), axis=-1)

    return SymbolFunction.general(func)


# ---------------------------------------------------------------- operators


def _require_periodic(grid: Grid):
    if not all(grid.periodic):
        raise GridError("pseudodifferential operators need a periodic grid")


def _scaled_k(grid: Grid, eps: float) -> np.ndarray:
    """``eps * xi`` on the FFT lattice with pinned inactive components, ``(*shape, 3)``."""
    xi = np.meshgrid(*[grid.angular_frequencies(i) for i in range(grid.ndim)], indexing="ij")
    out = np.empty(grid.shape + (3,))
    for a in range(3):
        out[..., a] = grid.pinned_k[a]
    for i, a in enumerate(grid.axes):
        out[..., a] = eps * xi[i]
    return out


def _fft(values, d):
    return np.fft.fftn(values, axes=tuple(range(d)))


def _ifft(values, d):
    return np.fft.ifftn(values, axes=tuple(range(d)))


def _apply_kn_direct(a: SymbolFunction, snap: FieldSnapshot) -> np.ndarray:
    grid = snap.grid
    d, n = grid.ndim, grid.size
    if n * n > _DIRECT_LIMIT:
        raise GridError(f"direct quantization of a general symbol on {n} nodes is too large")
    F = _fft(snap.values, d).reshape(n, -1)
    x = grid.points().reshape(n, 3)
    k = _scaled_k(grid, snap.epsilon_scale).reshape(n, 3)
    idx = np.stack(np.meshgrid(*[np.arange(s) for s in grid.shape], indexing="ij"), -1).reshape(n, d)
    frac = idx / np.asarray(grid.shape)
    out = np.empty((n, F.shape[1]), dtype=complex)
    rows = max(1, _DIRECT_LIMIT // (8 * n))
    for start in range(0, n, rows):
        sl = slice(start, min(n, start + rows))
        phase = np.exp(2j * np.pi * (idx[sl] @ frac.T))
        sym = _check_finite(a(x[sl, None, :], k[None, :, :]))
        if a.matrix:
            out[sl] = np.einsum("pm,pmab,mb->pa", phase, sym, F) / n
        else:
            out[sl] = (phase * sym) @ F / n
    return out.reshape(snap.values.shape)


def apply_pdo(a: SymbolFunction, snap: FieldSnapshot) -> FieldSnapshot:
    """Standard quantization ``a(x, eps D) f`` on a periodic grid.

    Separable symbols use one FFT pair per term; general symbols use the
    direct ``O(N_x N_k)`` sum.
    """
    grid = snap.grid
    _require_periodic(grid)
    d = grid.ndim
    if a.terms:
        x = grid.points()
        k = _scaled_k(grid, snap.epsilon_scale)
        F = _fft(snap.values, d)
        out = np.zeros_like(snap.values)
        for t in a.terms:
            fk = _check_finite(np.broadcast_to(t.fk(k), grid.shape))
            fx = _check_finite(np.broadcast_to(t.fx(x), grid.shape))
            out += t.coefficient * fx[..., None] * _ifft(fk[..., None] * F, d)
        return snap.with_values(out)
    return snap.with_values(_apply_kn_direct(a, snap))


def _offsets(grid: Grid):
    """Minimal-image offsets per axis with end weights for even sizes."""
    out = []
    for n in grid.shape:
        r = np.arange(-(n // 2), n - n // 2)
        w = np.ones(r.size)
        if n % 2 == 0:
            r = np.append(r, n // 2)
            w = np.append(w, 1.0)
            w[0] = w[-1] = 0.5
        out.append((r, w))
    return out


def apply_weyl(a: SymbolFunction, snap: FieldSnapshot) -> FieldSnapshot:
    """Weyl quantization ``a^w(x, eps D) f`` on a periodic grid.

    The kernel is summed over minimal-image offsets ``r`` with midpoints
    ``x - r h / 2``; the two offsets ``+-N/2`` on even axes share half weight.
    """
    grid = snap.grid
    _require_periodic(grid)
    d, n = grid.ndim, grid.size
    eps = snap.epsilon_scale
    x = grid.points()
    k = _scaled_k(grid, eps)
    h = np.asarray(grid.spacing)
    offs = _offsets(grid)
    r_mesh = np.stack(np.meshgrid(*[o[0] for o in offs], indexing="ij"), -1).reshape(-1, d)
    w_mesh = np.prod(np.stack(np.meshgrid(*[o[1] for o in offs], indexing="ij"), -1), -1).reshape(-1)
    shift3 = np.zeros((r_mesh.shape[0], 3))
    for i, ax in enumerate(grid.axes):
        shift3[:, ax] = r_mesh[:, i] * h[i] / 2

    out = np.zeros_like(snap.values)
    f = snap.values
    if a.terms:
        for t in a.terms:
            # inverse FFT of fk gives the kernel in offset space
            kern = _ifft(np.broadcast_to(t.fk(k), grid.shape).astype(complex), d)
            _check_finite(kern)
            for r, w, s in zip(r_mesh, w_mesh, shift3):
                kr = kern[tuple(np.mod(r, grid.shape))]
                if kr == 0:
                    continue
                fx = _check_finite(np.broadcast_to(t.fx(x - s), grid.shape))
                out += (t.coefficient * w * kr) * fx[..., None] * np.roll(f, tuple(r), axis=tuple(range(d)))
        return snap.with_values(out)

    if n * n * r_mesh.shape[0] > _DIRECT_LIMIT:
        raise GridError("direct Weyl quantization of a general symbol is limited to small grids")
    kk = k.reshape(n, 3)
    idx = np.stack(np.meshgrid(*[np.arange(s) for s in grid.shape], indexing="ij"), -1).reshape(n, d)
    frac = idx / np.asarray(grid.shape)
    xs = x.reshape(n, 3)
    for r, w, s in zip(r_mesh, w_mesh, shift3):
        phase = np.exp(2j * np.pi * (frac @ r))  # e^{i r . xi h} per frequency
        sym = _check_finite(a((xs - s)[:, None, :], kk[None, :, :]))
        shifted = np.roll(f, tuple(r), axis=tuple(range(d))).reshape(n, -1)
        if a.matrix:
            kern = np.einsum("pmab,m->pab", sym, phase) / n
            out += (w * np.einsum("pab,pb->pa", kern, shifted)).reshape(out.shape)
        else:
            kern = sym @ phase / n
            out += (w * kern[:, None] * shifted).reshape(out.shape)
    return snap.with_values(out)


def operator_difference(a: SymbolFunction, snap: FieldSnapshot) -> float:
    """``||a^w f - a(x, eps D) f|| / ||f||``."""
    diff = apply_weyl(a, snap).values - apply_pdo(a, snap).values
    return float(np.sqrt(snap.grid.cell_volume * np.sum(np.abs(diff) ** 2)) / snap.norm())


def sobolev_norm(snap: FieldSnapshot, s: float) -> float:
    """Scaled Sobolev norm with FFT multiplier ``(1 + |eps xi|^2)^{s/2}``.

    Pinned inactive wave-vector components are included in ``|eps xi|``;
    ``s = 0`` gives the L2 norm.
    """
    grid = snap.grid
    _require_periodic(grid)
    k = _scaled_k(grid, snap.epsilon_scale)
    mult = (1.0 + np.sum(k**2, axis=-1)) ** (s / 2)
    F = _fft(snap.values, grid.ndim)
    return float(np.sqrt(grid.cell_volume * np.sum(np.abs(mult[..., None] * F) ** 2) / grid.size))


# ------------------------------------------------------- product remainder


@dataclass
class RemainderReport:
    """Product-rule remainder ``||R_eps f|| / ||f||`` per scale and its fitted order."""

    epsilons: np.ndarray
    remainders: np.ndarray
    first_order: np.ndarray
    fitted_order: float
    exact: bool

    def rows(self):
        for e, r, c in zip(self.epsilons, self.remainders, self.first_order):
            yield {
                "epsilon": float(e),
                "lhs": float(r),
                "rhs": float(c),
                "abs_diff": float(r),
                "fitted_order": self.fitted_order,
            }


def fit_order(epsilons, values) -> float:
    """Least-squares slope of ``log values`` against ``log epsilons``."""
    e = np.log(np.asarray(epsilons, dtype=float))
    v = np.log(np.asarray(values, dtype=float))
    return float(np.polyfit(e, v, 1)[0])


def product_remainder(
    a: SymbolFunction,
    b: SymbolFunction,
    field: Union[FieldSnapshot, Callable[[float], FieldSnapshot]],
    epsilon_list: Sequence[float],
    exact_tol: float = 1e-13,
) -> RemainderReport:
    """Remainder of the first-order product rule for standard quantization.

    ``R f = b(x,eps D) a(x,eps D) f - (ba)(x,eps D) f - (eps/i) (grad_k b . grad_x a)(x,eps D) f``

    ``field`` is either a fixed snapshot (its scale is replaced by each
    ``eps``) or a factory ``eps -> FieldSnapshot``. When every relative
    remainder is below ``exact_tol`` the report is flagged ``exact`` and the
    fitted order is ``inf``.
    """
    if not (a.has_gradients and b.has_gradients):
        raise SymbolError("product remainder needs analytic gradients of both symbols")
    eps_arr = np.asarray(sorted(epsilon_list, reverse=True), dtype=float)
    if eps_arr.size < 2 or np.any(eps_arr <= 0):
        raise ValueError("need at least two positive scales")
    ba = b * a
    corr = poisson_term(b, a)
    rem, first = [], []
    for eps in eps_arr:
        snap = field(eps) if callable(field) else field.with_values(field.values, epsilon_scale=eps)
        lhs = apply_pdo(b, apply_pdo(a, snap)).values
        c1 = (eps / 1j) * apply_pdo(corr, snap).values
        r = lhs - apply_pdo(ba, snap).values - c1
        nf = snap.norm()
        scale = np.sqrt(snap.grid.cell_volume)
        rem.append(scale * np.linalg.norm(r) / nf)
        first.append(scale * np.linalg.norm(c1) / nf)
    rem = np.array(rem)
    exact = bool(np.all(rem <= exact_tol))
    order = float("inf") if exact else fit_order(eps_arr, np.maximum(rem, 1e-300))
    return RemainderReport(eps_arr, rem, np.array(first), order, exact)


# ---------------------------------------------------------------- duality


@dataclass
class DualityResult:
    """Both sides of ``<a, W> = (a^w f, f)`` and their difference."""

    phase_space: complex
    quadratic_form: complex
    norm_sq: float

    @property
    def difference(self) -> float:
        return abs(self.phase_space - self.quadratic_form)

    @property
    def relative(self) -> float:
        return self.difference / self.norm_sq if self.norm_sq > 0 else self.difference


def duality_pairing(a: SymbolFunction, snap: FieldSnapshot, threads: Optional[int] = None) -> DualityResult:
    """Pair a symbol with the Wigner transform of ``snap`` and compare with
    the Weyl quadratic form.

    The Wigner side uses every grid node as a probe and a rectangular window
    of ``N`` lags per axis (all grid sizes must be even), so ``a = a(x)`` is
    matched exactly and ``k``-dependent symbols to spectral accuracy.
    """
    grid = snap.grid
    _require_periodic(grid)
    if any(n % 2 for n in grid.shape):
        raise GridError("duality pairing needs an even number of nodes per axis")
    window = WindowSpec(tuple(n // 2 for n in grid.shape), taper="none")
    idx = np.stack(np.meshgrid(*[np.arange(s) for s in grid.shape], indexing="ij"), -1).reshape(-1, grid.ndim)
    W = wigner_transform(snap, window, probe_indices=idx, threads=threads, resolution_tol=None)
    kv = W.k_vectors()
    x = W.probes.reshape((-1,) + (1,) * len(W.k_shape) + (3,))
    sym = _check_finite(a(x, kv[None]))
    if a.matrix:
        lhs = np.einsum("...ab,...ba->", sym, W.values)
    else:
        lhs = np.sum(sym * np.trace(W.values, axis1=-2, axis2=-1))
    lhs *= W.k_cell * grid.cell_volume
    aw = apply_weyl(a, snap).values
    rhs = grid.cell_volume * np.sum(aw * np.conj(snap.values))
    return DualityResult(complex(lhs), complex(rhs), snap.norm() ** 2)


# ------------------------------------------------------ boundary symbols


@dataclass
class SymbolDecomposition:
    """``a(x, k) = a0(k') + a1(k') k3 + a2(k) (v|k| - omega)`` at fixed ``x``."""

    symbol: SymbolFunction
    medium: Medium
    omega: float
    x: np.ndarray
    guard: float = 1e-6

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float)
        self.v = float(self.medium.speed(self.x))

    def k3_root(self, k_prime) -> np.ndarray:
        k_prime = np.asarray(k_prime, dtype=float)
        disc = (self.omega / self.v) ** 2 - np.sum(k_prime**2, axis=-1)
        if np.any(disc <= 0):
            raise EvanescentError("decomposition is only defined for |k'| < omega / v")
        return np.sqrt(disc)

    def _eval(self, k_prime, k3):
        k = np.concatenate([np.asarray(k_prime, dtype=float), np.asarray(k3, dtype=float)[..., None]], -1)
        return self.symbol(np.broadcast_to(self.x, k.shape), k)

    def a0(self, k_prime):
        r = self.k3_root(k_prime)
        return 0.5 * (self._eval(k_prime, r) + self._eval(k_prime, -r))

    def a1(self, k_prime):
        r = self.k3_root(k_prime)
        return (self._eval(k_prime, r) - self._eval(k_prime, -r)) / (2 * r)

    def _quotient(self, k):
        kp, k3 = k[..., :2], k[..., 2]
        num = self.symbol(np.broadcast_to(self.x, k.shape), k) - self.a0(kp) - self.a1(kp) * k3
        with np.errstate(divide="ignore", invalid="ignore"):
            return num / (self.v * np.linalg.norm(k, axis=-1) - self.omega)

    def off_shell(self, k) -> np.ndarray:
        k = np.asarray(k, dtype=float)
        return np.abs(self.v * np.linalg.norm(k, axis=-1) - self.omega) >= self.guard * self.omega

    def _band_step(self, k_prime, root):
        # k3 distance covered by the guard band near a root
        knorm = self.omega / self.v
        return 2.0 * self.guard * self.omega * knorm / (self.v * np.abs(root))

    def a2(self, k) -> np.ndarray:
        """Quotient off the guard band; inside it, quadratic extrapolation
        from three nodes on the query's side of the nearest root."""
        k = np.asarray(k, dtype=float)
        kp = k[..., :2]
        self.k3_root(kp)
        out = np.array(self._quotient(k))
        inside = ~self.off_shell(k)
        if np.any(inside):
            kin = k[inside]
            root = self.k3_root(kin[..., :2]) * np.sign(kin[..., 2] + (kin[..., 2] == 0))
            step = self._band_step(kin[..., :2], root)
            t = kin[..., 2] - root
            side = np.where(t >= 0, 1.0, -1.0)
            nodes = np.stack([side * step * m for m in (1.0, 2.0, 3.0)], -1)
            vals = np.stack(
                [self._quotient(np.concatenate([kin[..., :2], (root + nodes[..., i])[..., None]], -1)) for i in range(3)],
                -1,
            )
            out[inside] = _lagrange3(nodes, vals, t)
        return out

    def shell_limits(self, k_prime, sign: float = 1.0) -> tuple:
        """One-sided extrapolated limits of ``a2`` at the root ``sign * k3+``
        and a symmetric quadratic interpolant across it."""
        kp = np.asarray(k_prime, dtype=float)
        root = sign * self.k3_root(kp)
        step = self._band_step(kp, root)

        def q(offset):
            return self._quotient(np.concatenate([kp, (root + offset)[..., None]], -1))

        right = _lagrange3(np.stack([step, 2 * step, 3 * step], -1), np.stack([q(step), q(2 * step), q(3 * step)], -1), 0.0)
        left = _lagrange3(
            np.stack([-step, -2 * step, -3 * step], -1), np.stack([q(-step), q(-2 * step), q(-3 * step)], -1), 0.0
        )
        mid = _lagrange3(
            np.stack([-2 * step, 2 * step, 3 * step], -1), np.stack([q(-2 * step), q(2 * step), q(3 * step)], -1), 0.0
        )
        return left, right, mid

    def reconstruct(self, k) -> np.ndarray:
        k = np.asarray(k, dtype=float)
        kp = k[..., :2]
        return self.a0(kp) + self.a1(kp) * k[..., 2] + self.a2(k) * (
            self.v * np.linalg.norm(k, axis=-1) - self.omega
        )


def _lagrange3(nodes, vals, t):
    """Quadratic through ``(nodes[..., i], vals[..., i])`` evaluated at ``t``."""
    t = np.asarray(t, dtype=float)
    out = 0.0
    for i in range(3):
        li = 1.0
        for j in range(3):
            if j != i:
                li = li * (t - nodes[..., j]) / (nodes[..., i] - nodes[..., j])
        out = out + li * vals[..., i]
    return out


def decompose_symbol(a: SymbolFunction, medium: Medium, omega: float, x) -> SymbolDecomposition:
    """Split a scalar symbol at ``x`` into its shell part and normal-wave remainder.

    ``a0`` and ``a1`` solve ``a(x, k', k3) = a0 + a1 k3`` at the two real roots
    ``k3 = +-sqrt(omega^2/v^2 - |k'|^2)``; ``a2`` is the quotient by
    ``v|k| - omega``. Evaluating at ``|k'| >= omega / v`` raises
    ``EvanescentError``.
    """
    if a.matrix:
        raise SymbolError("decomposition is defined for scalar symbols")
    if not omega > 0:
        raise ValueError("omega must be positive")
    return SymbolDecomposition(a, medium, omega, x)


def commuting_residual(a: SymbolFunction, medium: Medium, omega: float, x, k, k_min: float = K_MIN) -> float:
    """``max |a (L - omega) - (L^T - omega) a|`` relative to ``|a|`` for a matrix symbol."""
    if not a.matrix:
        raise SymbolError("the commutation constraint applies to matrix symbols")
    L = dispersion_matrix(medium, x, k, k_min)
    am = np.asarray(a(x, k))
    eye = np.eye(6)
    res = am @ (L - omega * eye) - (np.swapaxes(L, -1, -2) - omega * eye) @ am
    scale = max(float(np.max(np.abs(am))), 1e-300)
    return float(np.max(np.abs(res)) / scale)


def energy_symbol(medium: Medium, scalar: Optional[SymbolFunction] = None) -> SymbolFunction:
    """``A0(x) * s(x, k)``: a matrix symbol of commuting class."""
    s = scalar if scalar is not None else SymbolFunction.constant(1.0)

    def func(x, k):
        eps, eta = medium.coefficients(np.broadcast_to(x, np.broadcast_shapes(np.shape(x), np.shape(k))))
        return a0_matrix(eps, eta) * np.asarray(s(x, k))[..., None, None]

    return SymbolFunction.general(func, matrix=True, commuting=True)
