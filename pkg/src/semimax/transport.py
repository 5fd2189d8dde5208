"""Ray (bicharacteristic) transport of scalar mode densities.

Each mode density is carried by weighted particles following

    dx/dt = s v(x) k/|k|,    dk/dt = -s |k| grad v(x),

with ``s = +1`` for the ``+`` modes and ``s = -1`` for the ``-`` modes, so
``v|k|`` is conserved. Interfaces are handled as events: rays are stopped
on the surface by bisection, reflected or split, and the crossing is
recorded in a :class:`BoundaryMeasure`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from .errors import (
    DegenerateDirectionError,
    EmptyEnsembleError,
    EvanescentError,
    EventLocationError,
)
from .phase_space import ModeDensities
from .spectral import CALDERON_M, K_MIN, MODE_LABELS, Medium, eigensystem

TRANSPORT_MODES = ("+1", "+2", "-1", "-2")
BRANCH = np.array([1.0, 1.0, -1.0, -1.0])

ALIVE, EXITED, FAILED, ABSORBED = 0, 1, 2, 3
STATUS_NAMES = ("alive", "exited", "failed", "absorbed")
REGIONS = ("exterior", "interior", "whole-space")

EVENT_TOL = 1e-10
_MAX_BISECT = 200


def mode_index(label: str) -> int:
    try:
        return TRANSPORT_MODES.index(label)
    except ValueError:
        raise ValueError(f"transport mode must be one of {TRANSPORT_MODES}, got {label!r}") from None


def hamiltonian_rhs(medium: Medium, x, k, branch, k_min: float = K_MIN):
    """Right side ``(grad_k w, -grad_x w)`` for ``w = branch * v(x)|k|``."""
    x = np.asarray(x, dtype=float)
    k = np.asarray(k, dtype=float)
    knorm = np.linalg.norm(k, axis=-1)
    if np.any(~(knorm >= k_min)):
        raise DegenerateDirectionError("wave vector below the floor in the ray equations")
    s = np.asarray(branch, dtype=float)
    v = medium.speed(x)
    gv = medium.grad_speed(x)
    xdot = (s * v / knorm)[..., None] * k
    kdot = -(s * knorm)[..., None] * gv
    return xdot, kdot


# ------------------------------------------------------------------ states


@dataclass
class RayState:
    x: np.ndarray
    k: np.ndarray
    mode: str = "+1"
    weight: float = 1.0
    region: str = "exterior"
    alive: bool = True

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float).reshape(3)
        self.k = np.asarray(self.k, dtype=float).reshape(3)
        mode_index(self.mode)
        if not self.weight >= 0:
            raise ValueError("ray weight must be non-negative")
        if self.region not in REGIONS:
            raise ValueError(f"region must be one of {REGIONS}")


@dataclass
class RayEnsemble:
    """Struct-of-arrays ray population.

    ``status`` codes: 0 alive, 1 exited the box, 2 event location failed,
    3 absorbed. Mass is never created or destroyed; splitting redistributes
    it among new rays.
    """

    x: np.ndarray
    k: np.ndarray
    mode: np.ndarray
    weight: np.ndarray
    region: np.ndarray
    status: np.ndarray
    omega0: np.ndarray
    path: np.ndarray
    seed: Optional[int] = None
    initial_mass: float = 0.0
    time: float = 0.0
    max_drift: float = 0.0
    max_drift_rate: float = 0.0

    @classmethod
    def from_arrays(cls, x, k, mode="+1", weight=1.0, region="exterior", seed=None, medium=None):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        k = np.atleast_2d(np.asarray(k, dtype=float))
        n = x.shape[0]
        if k.shape != (n, 3) or x.shape != (n, 3):
            raise ValueError("x and k must both have shape (n, 3)")
        if isinstance(mode, str):
            mode = np.full(n, mode_index(mode))
        else:
            mode = np.array([mode_index(m) if isinstance(m, str) else int(m) for m in mode], dtype=int)
        weight = np.broadcast_to(np.asarray(weight, dtype=float), (n,)).copy()
        if np.any(weight < 0):
            raise ValueError("ray weights must be non-negative")
        if isinstance(region, str):
            region = np.full(n, REGIONS.index(region))
        else:
            region = np.asarray(region, dtype=int)
        omega0 = np.zeros(n)
        if medium is not None and n:
            omega0 = medium.speed(x) * np.linalg.norm(k, axis=1)
        return cls(
            x=x.copy(),
            k=k.copy(),
            mode=mode,
            weight=weight,
            region=region,
            status=np.zeros(n, dtype=int),
            omega0=omega0,
            path=np.zeros(n),
            seed=seed,
            initial_mass=float(np.sum(weight)),
        )

    @classmethod
    def from_states(cls, states: Sequence[RayState], seed=None, medium=None):
        if not states:
            return cls.from_arrays(np.zeros((0, 3)), np.zeros((0, 3)), seed=seed)
        ens = cls.from_arrays(
            np.array([s.x for s in states]),
            np.array([s.k for s in states]),
            mode=[s.mode for s in states],
            weight=[s.weight for s in states],
            region=np.array([REGIONS.index(s.region) for s in states]),
            seed=seed,
            medium=medium,
        )
        ens.status[:] = [ALIVE if s.alive else ABSORBED for s in states]
        return ens

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def alive(self) -> np.ndarray:
        return self.status == ALIVE

    def states(self) -> List[RayState]:
        return [
            RayState(self.x[i], self.k[i], TRANSPORT_MODES[self.mode[i]], float(self.weight[i]),
                     REGIONS[self.region[i]], bool(self.status[i] == ALIVE))
            for i in range(self.n)
        ]

    def masses(self) -> Dict[str, float]:
        return {name: float(np.sum(self.weight[self.status == c])) for c, name in enumerate(STATUS_NAMES)}

    def bookkeeping_error(self) -> float:
        """``|initial - (alive + exited + failed + absorbed)|`` relative to the initial mass."""
        total = sum(self.masses().values())
        return abs(total - self.initial_mass) / max(self.initial_mass, 1e-300)

    def copy(self) -> "RayEnsemble":
        return RayEnsemble(
            self.x.copy(), self.k.copy(), self.mode.copy(), self.weight.copy(), self.region.copy(),
            self.status.copy(), self.omega0.copy(), self.path.copy(), self.seed, self.initial_mass,
            self.time, self.max_drift, self.max_drift_rate,
        )

    def _append(self, x, k, mode, weight, region, omega0, path):
        self.x = np.concatenate([self.x, x])
        self.k = np.concatenate([self.k, k])
        self.mode = np.concatenate([self.mode, mode])
        self.weight = np.concatenate([self.weight, weight])
        self.region = np.concatenate([self.region, region])
        self.status = np.concatenate([self.status, np.zeros(len(weight), dtype=int)])
        self.omega0 = np.concatenate([self.omega0, omega0])
        self.path = np.concatenate([self.path, path])


# -------------------------------------------------------- boundary measure


BOUNDARY_COLUMNS = ("x1'", "x2'", "k1'", "k2'", "branch", "mode", "weight", "factor")


@dataclass
class BoundaryMeasure:
    """Weighted samples of the boundary measures on ``(x', k')``.

    Branch ``alpha`` holds samples with ``k3 = k3-`` (negative normal
    component), ``beta`` those with ``k3 = k3+``. Every event deposits the
    arriving ray on its branch and the departing ray on the other one. Each
    sample keeps its raw weight and the flux factor ``v k3 k3/|k|``.
    """

    interface: str = "x3=0"
    convention: str = "alpha: k3 = k3-, beta: k3 = k3+"
    _rows: Dict[str, list] = field(default_factory=lambda: {"alpha": [], "beta": []})

    def deposit(self, x, k, mode, weight, factor):
        """Vectorized deposit; the branch follows the sign of ``k3``."""
        x, k = np.atleast_2d(x), np.atleast_2d(k)
        weight = np.atleast_1d(weight)
        if np.any(weight < 0):
            raise ValueError("boundary samples must have non-negative weight")
        branch = np.where(k[:, 2] < 0, "alpha", "beta")
        block = np.column_stack([x[:, 0], x[:, 1], k[:, 0], k[:, 1], np.atleast_1d(mode), weight, np.atleast_1d(factor)])
        for name in ("alpha", "beta"):
            sel = branch == name
            if np.any(sel):
                self._rows[name].append(block[sel])

    def samples(self, branch: str) -> np.ndarray:
        """``(n, 7)`` array: x1', x2', k1', k2', mode index, weight, factor."""
        rows = self._rows[branch]
        return np.concatenate(rows) if rows else np.zeros((0, 7))

    def count(self, branch: str) -> int:
        return self.samples(branch).shape[0]

    def total(self, branch: str, mode: Optional[str] = None, flux: bool = False) -> float:
        s = self.samples(branch)
        if mode is not None:
            s = s[s[:, 4] == mode_index(mode)]
        w = s[:, 5] * s[:, 6] if flux else s[:, 5]
        return float(np.sum(w))

    def merge(self, other: "BoundaryMeasure") -> "BoundaryMeasure":
        out = BoundaryMeasure(self.interface, self.convention)
        for b in ("alpha", "beta"):
            out._rows[b] = list(self._rows[b]) + list(other._rows[b])
        return out

    def rows(self):
        """CSV rows in deposit order, alpha before beta."""
        for b in ("alpha", "beta"):
            for r in self.samples(b):
                yield (r[0], r[1], r[2], r[3], b, TRANSPORT_MODES[int(r[4])], r[5], r[6])


# ------------------------------------------------------------------ chart


def _zero_phi(xp):
    return np.zeros(np.shape(xp)[:-1])


def _zero_grad(xp):
    return np.zeros(np.shape(xp))


@dataclass(frozen=True)
class InterfaceChart:
    """Surface ``x3 = phi(x')`` and the flattening ``(y, z) = (x', x3 - phi(x'))``."""

    phi: Callable = _zero_phi
    grad_phi: Callable = _zero_grad
    name: str = "flat"

    @classmethod
    def flat(cls) -> "InterfaceChart":
        return cls()

    @classmethod
    def planar(cls, slope, offset: float = 0.0) -> "InterfaceChart":
        a = np.asarray(slope, dtype=float).reshape(2)

        def phi(xp):
            return np.asarray(xp)[..., :2] @ a + offset

        def grad(xp):
            return np.broadcast_to(a, np.shape(xp)[:-1] + (2,)).copy()

        return cls(phi, grad, f"plane({a[0]:g},{a[1]:g},{offset:g})")

    def height(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return x[..., 2] - self.phi(x[..., :2])

    def flatten(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        out = x.copy()
        out[..., 2] = self.height(x)
        return out

    def unflatten(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        out = y.copy()
        out[..., 2] = y[..., 2] + self.phi(y[..., :2])
        return out

    def flatten_k(self, x, k) -> np.ndarray:
        """Phase-preserving pullback: ``k_y = k' + k3 grad phi``, ``k_z = k3``."""
        k = np.asarray(k, dtype=float)
        g = self.grad_phi(np.asarray(x, dtype=float)[..., :2])
        out = k.copy()
        out[..., :2] = k[..., :2] + k[..., 2:3] * g
        return out

    def unflatten_k(self, x, kc) -> np.ndarray:
        kc = np.asarray(kc, dtype=float)
        g = self.grad_phi(np.asarray(x, dtype=float)[..., :2])
        out = kc.copy()
        out[..., :2] = kc[..., :2] - kc[..., 2:3] * g
        return out

    def normal(self, x) -> np.ndarray:
        g = self.grad_phi(np.asarray(x, dtype=float)[..., :2])
        n = np.concatenate([-g, np.ones(g.shape[:-1] + (1,))], axis=-1)
        return n / np.linalg.norm(n, axis=-1, keepdims=True)

    def reflect(self, x, k) -> np.ndarray:
        """Specular reflection done in chart coordinates.

        With ``k_y`` fixed, ``|k|`` is a quadratic in ``k_z`` whose two roots
        sum to ``2 k_y . g / (1 + |g|^2)``; the outgoing ray takes the other
        root. For ``g = 0`` this is exactly ``k_z -> -k_z``.
        """
        kc = self.flatten_k(x, k)
        g = self.grad_phi(np.asarray(x, dtype=float)[..., :2])
        ky, kz = kc[..., :2], kc[..., 2]
        kz_new = 2.0 * np.sum(ky * g, axis=-1) / (1.0 + np.sum(g * g, axis=-1)) - kz
        out = kc.copy()
        out[..., 2] = kz_new
        return self.unflatten_k(x, out)


def mirror_matrix(normal) -> np.ndarray:
    """Householder reflection ``I - 2 n n^T`` for a unit normal."""
    n = np.asarray(normal, dtype=float)
    return np.eye(3) - 2.0 * n[..., :, None] * n[..., None, :]


# ------------------------------------------------------- boundary laws


def reflect_flat(x, k, mode, weight, medium: Medium, omega: Optional[float] = None,
                 measure: Optional[BoundaryMeasure] = None) -> np.ndarray:
    """Perfect-conductor reflection at ``x3 = 0``: ``k3 -> -k3``, weight kept.

    Negation keeps ``|k|`` and ``k'`` bitwise; the on-shell root of
    ``v|k| = omega`` agrees with it to the ray's frequency drift. Raises
    ``EvanescentError`` if ``|k'|`` exceeds ``omega / v`` (impossible for an
    on-shell ray).
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    k = np.atleast_2d(np.asarray(k, dtype=float))
    v = medium.speed(x)
    kn = np.linalg.norm(k, axis=1)
    if omega is not None:
        kp = np.linalg.norm(k[:, :2], axis=1)
        if np.any(v * kp > omega * (1 + 1e-8)):
            raise EvanescentError("ray reached the conductor with |k'| > omega / v")
    out = k.copy()
    out[:, 2] = -k[:, 2]
    if measure is not None:
        factor = v * k[:, 2] ** 2 / kn
        measure.deposit(x, k, mode, weight, factor)
        measure.deposit(x, out, mode, weight, factor)
    return out


@dataclass
class SplitResult:
    """Outcome of a Calderon split for a batch of rays."""

    reflected_k: np.ndarray
    reflected_fraction: np.ndarray
    transmitted_k: np.ndarray
    transmitted_modes: np.ndarray
    transmitted_fraction: np.ndarray
    evanescent: np.ndarray
    capped: np.ndarray


def calderon_dyad(b) -> np.ndarray:
    """``M (b b^T) M`` for incident polarization vectors ``b``."""
    b = np.asarray(b, dtype=float)
    dyad = b[..., :, None] * b[..., None, :]
    return CALDERON_M @ dyad @ CALDERON_M


def calderon_split(x, k, mode, source: Medium, target: Medium, into_negative: bool = True,
                   k_min: float = K_MIN) -> SplitResult:
    """Split rays at the interface ``x3 = 0`` between two media.

    The transmitted wave vector keeps ``k'`` and takes the root of
    ``v_target |k| = v_source |k_in|`` whose group velocity points into the
    target side. Interior densities come from pairing ``M b b^T M`` with the
    target duals of the two transverse modes on the incident branch; the
    reflected fraction is the complement. Rays with no real root reflect
    completely. For strong contrasts the raw pairing can exceed one; it is
    then rescaled to one (no reflection) and flagged in ``capped`` so the
    reflected weight never turns negative.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    k = np.atleast_2d(np.asarray(k, dtype=float))
    mode = np.atleast_1d(np.asarray(mode, dtype=int))
    n = x.shape[0]
    s = BRANCH[mode]
    omega = source.speed(x) * np.linalg.norm(k, axis=1)
    vt = target.speed(x)
    disc = (omega / vt) ** 2 - np.sum(k[:, :2] ** 2, axis=1)
    evan = disc <= 0
    root = np.sqrt(np.where(evan, 0.0, disc))
    direction = -1.0 if into_negative else 1.0
    kt = k.copy()
    kt[:, 2] = direction * s * root

    b_in = np.empty((n, 6))
    es_in = eigensystem(source, x, k, k_min)
    for i, label in enumerate(TRANSPORT_MODES):
        sel = mode == i
        b_in[sel] = es_in.vector(label)[sel]
    # the dyad is rank one, so the pairing is the square of d^T M b
    mb = b_in @ CALDERON_M

    t_modes = np.where(s[:, None] > 0, np.array([0, 1]), np.array([2, 3]))
    frac = np.zeros((n, 2))
    ok = ~evan
    if np.any(ok):
        es_t = eigensystem(target, x[ok], kt[ok], k_min)
        for j in range(2):
            d = np.empty((int(ok.sum()), 6))
            for i, label in enumerate(TRANSPORT_MODES):
                sel = t_modes[ok, j] == i
                d[sel] = es_t.dual(label)[sel]
            frac[ok, j] = np.einsum("na,na->n", d, mb[ok]) ** 2
    total = frac.sum(axis=1)
    capped = total > 1.0
    frac[capped] /= total[capped, None]
    refl = k.copy()
    refl[:, 2] = -k[:, 2]
    return SplitResult(
        reflected_k=refl,
        reflected_fraction=np.where(capped, 0.0, 1.0 - frac.sum(axis=1)),
        transmitted_k=kt,
        transmitted_modes=t_modes,
        transmitted_fraction=frac,
        evanescent=evan,
        capped=capped,
    )


def flatten_chart(chart: InterfaceChart, x, k=None):
    """Chart coordinates of points (and wave vectors, if given)."""
    y = chart.flatten(x)
    if k is None:
        return y
    return y, chart.flatten_k(x, k)


def unflatten_chart(chart: InterfaceChart, y, kc=None):
    x = chart.unflatten(y)
    if kc is None:
        return x
    return x, chart.unflatten_k(x, kc)


# ---------------------------------------------------------------- scenario


@dataclass
class TransportScenario:
    """Geometry and media for ray transport.

    ``kind``:
      * ``whole-space``: no interface.
      * ``half-space``: conductor at ``x3 = 0``, rays live in ``x3 > 0``.
      * ``curved``: conductor at ``x3 = phi(x')`` given by ``chart``.
      * ``two-media``: interface ``x3 = 0``; exterior ``x3 > 0``, interior ``x3 < 0``.
    """

    kind: str
    exterior: Medium
    interior: Optional[Medium] = None
    chart: Optional[InterfaceChart] = None
    omega: Optional[float] = None
    box: Optional[tuple] = None

    def __post_init__(self):
        if self.kind not in ("whole-space", "half-space", "curved", "two-media"):
            raise ValueError(f"unknown scenario kind {self.kind!r}")
        if self.kind == "two-media" and self.interior is None:
            raise ValueError("two-media scenario needs an interior medium")
        if self.kind == "curved" and self.chart is None:
            raise ValueError("curved scenario needs an interface chart")

    def medium_for(self, region: int) -> Medium:
        if region == 1 and self.interior is not None:
            return self.interior
        return self.exterior


@dataclass
class TransportResult:
    ensemble: RayEnsemble
    measures: Dict[str, BoundaryMeasure]
    events: int
    failed_events: int
    trajectory: Optional[dict] = None


def _rhs(scn: TransportScenario, x, k, mode, region):
    xdot = np.empty_like(x)
    kdot = np.empty_like(k)
    for r in np.unique(region):
        sel = region == r
        xd, kd = hamiltonian_rhs(scn.medium_for(int(r)), x[sel], k[sel], BRANCH[mode[sel]])
        xdot[sel], kdot[sel] = xd, kd
    return xdot, kdot


def _rk4(scn, x, k, mode, region, h):
    h = np.asarray(h, dtype=float)
    hh = h[..., None] if h.ndim else h
    a1, b1 = _rhs(scn, x, k, mode, region)
    a2, b2 = _rhs(scn, x + 0.5 * hh * a1, k + 0.5 * hh * b1, mode, region)
    a3, b3 = _rhs(scn, x + 0.5 * hh * a2, k + 0.5 * hh * b2, mode, region)
    a4, b4 = _rhs(scn, x + hh * a3, k + hh * b3, mode, region)
    return (x + hh / 6.0 * (a1 + 2 * a2 + 2 * a3 + a4), k + hh / 6.0 * (b1 + 2 * b2 + 2 * b3 + b4))


def _gap(scn: TransportScenario, x, region) -> np.ndarray:
    """Signed distance-like function, positive on the ray's own side."""
    if scn.kind == "half-space":
        return x[:, 2]
    if scn.kind == "curved":
        return scn.chart.height(x)
    if scn.kind == "two-media":
        return np.where(region == 1, -x[:, 2], x[:, 2])
    return np.ones(x.shape[0])


def _locate(scn, x0, k0, mode, region, h):
    """Bisect the step fraction so that the ray lands on the surface."""
    lo = np.zeros(x0.shape[0])
    hi = np.full(x0.shape[0], float(h))
    xe, ke = x0.copy(), k0.copy()
    done = np.zeros(x0.shape[0], dtype=bool)
    for _ in range(_MAX_BISECT):
        todo = ~done
        if not np.any(todo):
            break
        mid = 0.5 * (lo[todo] + hi[todo])
        xm, km = _rk4(scn, x0[todo], k0[todo], mode[todo], region[todo], mid)
        g = _gap(scn, xm, region[todo])
        hit = np.abs(g) <= EVENT_TOL
        idx = np.flatnonzero(todo)
        xe[idx], ke[idx] = xm, km
        lo[idx] = np.where(g > 0, mid, lo[idx])
        hi[idx] = np.where(g > 0, hi[idx], mid)
        hi[idx[hit]] = mid[hit]
        done[idx[hit]] = True
        # interval collapsed without reaching the tolerance
        stuck = (hi[idx] - lo[idx]) <= 4 * np.finfo(float).eps * max(float(h), 1.0)
        if np.any(stuck & ~hit):
            break
    return xe, ke, hi, done


def transport_ensemble(
    ensemble: RayEnsemble,
    scenario: TransportScenario,
    t_final: float,
    dt: float = 0.01,
    record: bool = False,
) -> TransportResult:
    """Advance every alive ray to ``t_final`` with RK4 and event handling.

    The input ensemble is not modified. ``record=True`` keeps per-step
    positions and wave vectors of the original rays (small ensembles only).
    Each ray moves with the speed of the region it currently occupies,
    interior rays included.
    """
    if dt <= 0 or t_final < 0:
        raise ValueError("dt must be positive and t_final non-negative")
    ens = ensemble.copy()
    if ens.n and not np.any(ens.omega0):
        ens.omega0 = np.array([
            float(scenario.medium_for(int(r)).speed(xx) * np.linalg.norm(kk))
            for xx, kk, r in zip(ens.x, ens.k, ens.region)
        ])
    measures = {"exterior": BoundaryMeasure(), "interior": BoundaryMeasure()}
    if scenario.kind == "curved":
        measures["exterior"].interface = scenario.chart.name
    events = failed = 0
    n0 = ens.n
    traj = {"t": [0.0], "x": [ens.x[:n0].copy()], "k": [ens.k[:n0].copy()]} if record else None
    n_steps = int(np.ceil(t_final / dt - 1e-12))
    t = ens.time
    for step in range(n_steps):
        h = min(dt, t_final - step * dt)
        if h <= 0:
            break
        act = np.flatnonzero(ens.status == ALIVE)
        if act.size:
            x0, k0 = ens.x[act], ens.k[act]
            m, r = ens.mode[act], ens.region[act]
            x1, k1 = _rk4(scenario, x0, k0, m, r, h)
            if scenario.kind != "whole-space":
                g0 = _gap(scenario, x0, r)
                g1 = _gap(scenario, x1, r)
                cross = np.flatnonzero((g0 > 0) & (g1 <= 0))
                if cross.size:
                    xe, ke, tau, ok = _locate(scenario, x0[cross], k0[cross], m[cross], r[cross], h)
                    events += int(ok.sum())
                    bad = cross[~ok]
                    if bad.size:
                        failed += bad.size
                        ens.status[act[bad]] = FAILED
                        x1[bad], k1[bad] = xe[~ok], ke[~ok]
                    good = cross[ok]
                    xe, ke, rest = xe[ok], ke[ok], h - tau[ok]
                    kn, extra = _apply_event(ens, scenario, act[good], xe, ke, measures)
                    x1[good], k1[good] = _rk4(scenario, xe, kn, m[good], r[good], rest)
                    if extra is not None:
                        src, xs, ks = extra
                        start = ens.n - len(src)
                        xn, kn2 = _rk4(scenario, xs, ks, ens.mode[start:], ens.region[start:],
                                       (h - tau[ok])[src])
                        ens.x[start:], ens.k[start:] = xn, kn2
            still = ens.status[act] == ALIVE
            ens.path[act[still]] += np.linalg.norm(x1[still] - x0[still], axis=1)
            ens.x[act[still]], ens.k[act[still]] = x1[still], k1[still]
        t += h
        if scenario.box is not None:
            lo, hi = (np.asarray(b, dtype=float) for b in scenario.box)
            out = (ens.status == ALIVE) & np.any((ens.x < lo) | (ens.x > hi), axis=1)
            ens.status[out] = EXITED
        if record:
            traj["t"].append(t)
            traj["x"].append(ens.x[:n0].copy())
            traj["k"].append(ens.k[:n0].copy())
        _update_drift(ens, scenario)
    ens.time = t
    if record:
        traj = {key: np.array(v) for key, v in traj.items()}
    return TransportResult(ens, measures, events, failed, traj)


def _update_drift(ens: RayEnsemble, scn: TransportScenario):
    if ens.n == 0:
        return
    w = np.empty(ens.n)
    for r in np.unique(ens.region):
        sel = ens.region == r
        w[sel] = scn.medium_for(int(r)).speed(ens.x[sel]) * np.linalg.norm(ens.k[sel], axis=1)
    drift = np.abs(w - ens.omega0) / np.where(ens.omega0 > 0, ens.omega0, 1.0)
    ens.max_drift = max(ens.max_drift, float(np.max(drift)))
    rate = drift / np.maximum(ens.path, 1.0)
    ens.max_drift_rate = max(ens.max_drift_rate, float(np.max(rate)))


def _apply_event(ens, scn, idx, xe, ke, measures):
    """Apply the boundary law at located events; returns new k for the
    event rays and, for splits, the spawned rays needing their remaining step."""
    m = ens.mode[idx]
    w = ens.weight[idx]
    if scn.kind == "half-space":
        kn = reflect_flat(xe, ke, m, w, scn.exterior, scn.omega, measures["exterior"])
        return kn, None
    if scn.kind == "curved":
        kn = scn.chart.reflect(xe, ke)
        v = scn.exterior.speed(xe)
        kc_in = scn.chart.flatten_k(xe, ke)
        kc_out = scn.chart.flatten_k(xe, kn)
        factor = v * kc_in[:, 2] ** 2 / np.linalg.norm(ke, axis=1)
        yz = scn.chart.flatten(xe)
        measures["exterior"].deposit(yz, kc_in, m, w, factor)
        measures["exterior"].deposit(yz, kc_out, m, w, factor)
        return kn, None
    # two-media
    r = ens.region[idx]
    kn = ke.copy()
    spawned_src, spawned_x, spawned_k = [], [], []
    for reg in (0, 1):
        sel = np.flatnonzero(r == reg)
        if not sel.size:
            continue
        src = scn.exterior if reg == 0 else scn.interior
        tgt = scn.interior if reg == 0 else scn.exterior
        res = calderon_split(xe[sel], ke[sel], m[sel], src, tgt, into_negative=(reg == 0))
        kn[sel] = res.reflected_k
        w_in = w[sel]
        ens.weight[idx[sel]] = w_in * res.reflected_fraction
        name_src = REGIONS[reg]
        name_tgt = REGIONS[1 - reg]
        v = src.speed(xe[sel])
        factor = v * ke[sel, 2] ** 2 / np.linalg.norm(ke[sel], axis=1)
        measures[name_src].deposit(xe[sel], ke[sel], m[sel], w_in, factor)
        measures[name_src].deposit(xe[sel], res.reflected_k, m[sel], w_in * res.reflected_fraction, factor)
        ok = ~res.evanescent
        for j in range(2):
            wt = w_in[ok] * res.transmitted_fraction[ok, j]
            n_new = int(ok.sum())
            if not n_new:
                continue
            vt = tgt.speed(xe[sel][ok])
            kt = res.transmitted_k[ok]
            ens._append(
                xe[sel][ok], kt, res.transmitted_modes[ok, j], wt,
                np.full(n_new, 1 - reg), vt * np.linalg.norm(kt, axis=1), ens.path[idx[sel][ok]],
            )
            measures[name_tgt].deposit(xe[sel][ok], kt, res.transmitted_modes[ok, j], wt,
                                       vt * kt[:, 2] ** 2 / np.linalg.norm(kt, axis=1))
            spawned_src.append(sel[ok])
            spawned_x.append(xe[sel][ok])
            spawned_k.append(kt)
    if spawned_src:
        return kn, (np.concatenate(spawned_src), np.concatenate(spawned_x), np.concatenate(spawned_k))
    return kn, None


@dataclass
class Trajectory:
    t: np.ndarray
    x: np.ndarray
    k: np.ndarray
    events: int
    omega_drift: float
    status: str


def integrate_ray(ray: RayState, medium: Medium, dt: float, n_steps: int,
                  scenario: Optional[TransportScenario] = None) -> Trajectory:
    """RK4 trajectory of one ray with the scenario's event handling.

    Without a scenario the ray moves in ``medium`` with no interface.
    """
    scn = scenario or TransportScenario("whole-space", medium)
    ens = RayEnsemble.from_states([ray], medium=scn.medium_for(REGIONS.index(ray.region)))
    res = transport_ensemble(ens, scn, n_steps * dt, dt, record=True)
    tr = res.trajectory
    status = STATUS_NAMES[res.ensemble.status[0]]
    if status == "failed":
        raise EventLocationError("bisection could not place the ray on the surface")
    return Trajectory(tr["t"], tr["x"][:, 0], tr["k"][:, 0], res.events, res.ensemble.max_drift, status)


# ----------------------------------------------------------------- binning


@dataclass(frozen=True)
class PhaseLattice:
    """Node coordinates for cloud-in-cell deposition.

    ``x_axes`` and ``k_axes`` map physical axis index to uniformly spaced
    node arrays; axes not listed are integrated out.
    """

    x_axes: dict
    k_axes: dict

    def _all(self):
        return [("x", a, np.asarray(c, dtype=float)) for a, c in sorted(self.x_axes.items())] + [
            ("k", a, np.asarray(c, dtype=float)) for a, c in sorted(self.k_axes.items())
        ]

    @property
    def x_shape(self):
        return tuple(len(c) for _, c in sorted(self.x_axes.items()))

    @property
    def k_shape(self):
        return tuple(len(c) for _, c in sorted(self.k_axes.items()))

    @property
    def x_cell(self) -> float:
        return float(np.prod([c[1] - c[0] for _, c in sorted(self.x_axes.items())]))

    @property
    def k_cell(self) -> float:
        return float(np.prod([c[1] - c[0] for _, c in sorted(self.k_axes.items())]))


def bin_ensemble(ensemble: RayEnsemble, lattice: PhaseLattice, alive_only: bool = True) -> ModeDensities:
    """Cloud-in-cell deposition of ray weights onto a phase-space lattice.

    ``mu`` is a density: deposited mass divided by the ``x`` and ``k`` cell
    volumes, so ``sum(mu) * x_cell * k_cell`` is the deposited mass. Mass
    falling outside the lattice is reported in ``outside``.
    """
    sel = ensemble.alive if alive_only else np.ones(ensemble.n, dtype=bool)
    axes = lattice._all()
    shape = tuple(len(c) for _, _, c in axes)
    grid = np.zeros(shape + (len(MODE_LABELS),))
    x, k = ensemble.x[sel], ensemble.k[sel]
    w, mode = ensemble.weight[sel], ensemble.mode[sel]
    lower, frac, inside = [], [], np.ones(w.size, dtype=bool)
    for kind, a, c in axes:
        q = (x if kind == "x" else k)[:, a]
        pos = (q - c[0]) / (c[1] - c[0])
        i0 = np.floor(pos).astype(int)
        f = pos - i0
        # a ray exactly on the last node belongs to the last cell
        last = i0 == len(c) - 1
        i0 = np.where(last, len(c) - 2, i0)
        f = np.where(last, 1.0, f)
        inside &= (i0 >= 0) & (i0 <= len(c) - 2)
        lower.append(i0)
        frac.append(f)
    outside = float(np.sum(w[~inside]))
    d = len(axes)
    lower = [l[inside] for l in lower]
    frac = [f[inside] for f in frac]
    wi, mi = w[inside], mode[inside]
    for corner in range(2**d):
        bits = [(corner >> j) & 1 for j in range(d)]
        wt = wi.copy()
        index = []
        for j, bit in enumerate(bits):
            wt = wt * (frac[j] if bit else 1.0 - frac[j])
            index.append(lower[j] + bit)
        np.add.at(grid, tuple(index) + (mi,), wt)
    cell = lattice.x_cell * lattice.k_cell
    xs = lattice.x_shape
    probes = np.zeros(xs + (3,))
    mesh = np.meshgrid(*[np.asarray(c, dtype=float) for _, c in sorted(lattice.x_axes.items())], indexing="ij")
    for j, (a, _) in enumerate(sorted(lattice.x_axes.items())):
        probes[..., a] = mesh[j]
    kvec = np.zeros(lattice.k_shape + (3,))
    kmesh = np.meshgrid(*[np.asarray(c, dtype=float) for _, c in sorted(lattice.k_axes.items())], indexing="ij")
    for j, (a, _) in enumerate(sorted(lattice.k_axes.items())):
        kvec[..., a] = kmesh[j]
    mu = grid.reshape((int(np.prod(xs)),) + lattice.k_shape + (len(MODE_LABELS),)) / cell
    out = ModeDensities(
        labels=MODE_LABELS,
        probes=probes.reshape(-1, 3),
        k=kvec,
        mu=mu,
        k_cell=lattice.k_cell,
        valid=np.ones(mu.shape[:-1], dtype=bool),
        imag_max=0.0,
        outside=outside,
        x_cell=lattice.x_cell,
        x_shape=xs,
    )
    return out


def require_rays(ensemble: RayEnsemble) -> None:
    if ensemble.n == 0 or ensemble.initial_mass <= 0:
        raise EmptyEnsembleError("the ray ensemble is empty")
