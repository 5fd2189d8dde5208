"""Scenario pipelines: synthesis, Wigner analysis, ray transport and comparison."""

from __future__ import annotations

import json
import platform
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional

import numpy as np
import scipy

from .config import ScenarioConfig
from .errors import ConfigError
from .expr import COORDS, parse_expression
from .grid import FieldSnapshot, Grid
from .io import save_field, save_wigner, write_csv
from .phase_space import WindowSpec, project_modes, shell_mass_fraction, wigner_transform
from .spectral import MODE_LABELS, Medium, eigensystem
from .synthesis import MirrorFieldSpec, PlaneWaveSpec, conductor_mirror_field, field_mode, plane_wave_field
from .transport import (
    BOUNDARY_COLUMNS,
    REGIONS,
    STATUS_NAMES,
    TRANSPORT_MODES,
    InterfaceChart,
    PhaseLattice,
    RayEnsemble,
    TransportScenario,
    bin_ensemble,
    require_rays,
    transport_ensemble,
)

# ------------------------------------------------------------------ report


@dataclass
class Check:
    """One measured quantity against its tolerance.

    ``comparator`` is ``"<="`` or ``">="``. Non-finite values always fail.
    """

    name: str
    value: float
    tolerance: float
    comparator: str = "<="
    criterion: Optional[int] = None
    detail: str = ""

    @property
    def passed(self) -> bool:
        v = self.value
        if v is None or not np.isfinite(v):
            return False
        return bool(v <= self.tolerance if self.comparator == "<=" else v >= self.tolerance)

    def to_dict(self) -> dict:
        v = self.value
        return {
            "name": self.name,
            "criterion": self.criterion,
            "value": float(v) if v is not None and np.isfinite(v) else None,
            "tolerance": self.tolerance,
            "comparator": self.comparator,
            "passed": self.passed,
            "detail": self.detail,
        }

    def line(self) -> str:
        v = "nan" if self.value is None or not np.isfinite(self.value) else f"{self.value:.6g}"
        tag = "PASS" if self.passed else "FAIL"
        return f"{tag} {self.name}: {v} {self.comparator} {self.tolerance:g}" + (f" ({self.detail})" if self.detail else "")


def environment() -> dict:
    return {
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "platform": platform.platform(),
    }


@dataclass
class RunReport:
    name: str
    checks: List[Check] = field(default_factory=list)
    seed: Optional[int] = None
    timings: dict = field(default_factory=dict)
    errors: list = field(default_factory=list)
    files: list = field(default_factory=list)

    def add(self, check: Check) -> Check:
        if any(c.name == check.name for c in self.checks):
            raise ValueError(f"duplicate check {check.name!r}")
        self.checks.append(check)
        return check

    @property
    def passed(self) -> bool:
        return not self.errors and bool(self.checks) and all(c.passed for c in self.checks)

    def exit_code(self) -> int:
        return 0 if self.passed else 1

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "passed": self.passed,
            "seed": self.seed,
            "environment": environment(),
            "checks": [c.to_dict() for c in self.checks],
            "errors": self.errors,
            "timings": self.timings,
            "files": self.files,
        }

    def write(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")


class _Timer:
    def __init__(self, report: RunReport, key: str):
        self.report, self.key = report, key

    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.report.timings[self.key] = time.perf_counter() - self.t0
        return False


# ---------------------------------------------------------------- helpers


def _constant_coefficients(cfg: ScenarioConfig, name: str = "exterior") -> tuple:
    spec = cfg.media[name]
    if spec.speed is not None:
        v = parse_expression(spec.speed, cfg.parameters)
        eta = parse_expression(spec.eta, cfg.parameters)
        if not (v.is_constant and eta.is_constant):
            raise ConfigError("plane-wave scenarios need a homogeneous medium")
        e0 = float(eta(np.zeros(3)))
        return 1.0 / (float(v(np.zeros(3))) ** 2 * e0), e0
    eps = parse_expression(spec.epsilon, cfg.parameters)
    eta = parse_expression(spec.eta, cfg.parameters)
    if not (eps.is_constant and eta.is_constant):
        raise ConfigError("plane-wave scenarios need a homogeneous medium")
    return float(eps(np.zeros(3))), float(eta(np.zeros(3)))


def incident_wave_vector(cfg: ScenarioConfig, v: float) -> np.ndarray:
    d = np.asarray(cfg.wave["direction"], dtype=float)
    return cfg.omega / v * d / np.linalg.norm(d)


def _window(cfg: ScenarioConfig) -> WindowSpec:
    w = cfg.window
    return WindowSpec(w["half_width"], w["taper"], w["taper_fraction"])


def peak_mass(kvec: np.ndarray, dens: np.ndarray, center, radius: float) -> np.ndarray:
    """Sum of ``dens`` over k nodes within ``radius`` of ``center`` (per leading index)."""
    near = np.linalg.norm(kvec - np.asarray(center), axis=-1) <= radius
    return dens[:, near].sum(axis=1)


def _chart_from_config(cfg: ScenarioConfig) -> InterfaceChart:
    phi = parse_expression(cfg.interface.get("phi", "0"), cfg.parameters)
    if COORDS[2] in phi.symbolic.free_symbols:
        raise ConfigError("the interface height phi may depend on x1 and x2 only")

    def lift(xp):
        xp = np.asarray(xp, dtype=float)
        return np.concatenate([xp, np.zeros(xp.shape[:-1] + (1,))], axis=-1)

    return InterfaceChart(lambda xp: phi(lift(xp)), lambda xp: phi.gradient(lift(xp))[..., :2], f"phi={phi.source}")


# ------------------------------------------------------- cross-validation


@dataclass
class CrossResult:
    epsilon: float
    field: FieldSnapshot
    wigner: object
    densities: object
    k_incident: np.ndarray
    k_reflected: np.ndarray
    wigner_peaks: tuple
    ray_peaks: tuple
    ray_lattice: object
    trace_nu: tuple
    measure_nu: tuple
    trace_k_peak: float
    deposit_k: float
    dk_trace: float
    rays: object
    measure: object
    trace_wigner: object
    timings: dict

    @property
    def wigner_ratio(self) -> float:
        return self.wigner_peaks[1] / self.wigner_peaks[0]

    @property
    def ray_ratio(self) -> float:
        return self.ray_peaks[1] / self.ray_peaks[0]

    @property
    def trace_ratio(self) -> float:
        return self.trace_nu[1] / self.trace_nu[0]

    @property
    def measure_ratio(self) -> float:
        return self.measure_nu[1] / self.measure_nu[0]


def cross_validate(cfg: ScenarioConfig, threads: Optional[int] = None, strict: bool = False,
                   epsilon: Optional[float] = None) -> CrossResult:
    """Mirror field versus ray transport in the conductor half-space.

    Peaks are reported as ``(k3 < 0, k3 > 0)`` pairs for both the interior
    Wigner densities and the binned rays; boundary weights as
    ``(alpha, beta)`` for the trace Wigner matrix and the deposited samples.
    """
    timings = {}
    t0 = time.perf_counter()
    e_val, h_val = _constant_coefficients(cfg)
    v = 1.0 / np.sqrt(e_val * h_val)
    eps = cfg.epsilons[-1] if epsilon is None else epsilon
    k0 = incident_wave_vector(cfg, v)
    if k0[2] >= 0:
        raise ConfigError("the incident direction must point into the wall")
    nodes = cfg.grid["nodes"]
    if len(nodes) != 2:
        raise ConfigError("the conductor scenario uses a 2-D (x1, x3) grid")
    h = np.pi * eps / cfg.grid["resolution"]
    grid = Grid(tuple(nodes), (h, h), (0.0, 0.0), axes=(0, 2), periodic=(True, False), pinned_k=(0.0, k0[1], 0.0))
    spec = MirrorFieldSpec(PlaneWaveSpec(k0, eps, cfg.wave["amplitude"], cfg.wave["mode"], e_val, h_val))
    snap = conductor_mirror_field(spec, grid, strict=strict)
    k_in = np.asarray(snap.meta["k_incident"])
    k_re = np.asarray(snap.meta["k_reflected"])
    timings["synthesis"] = time.perf_counter() - t0

    # interior Wigner densities
    t0 = time.perf_counter()
    window = _window(cfg)
    m = window.half_widths(2)
    if cfg.probes:
        probe_idx = grid.nearest_index(np.asarray(cfg.probes))
    else:
        n1, n3 = nodes
        probe_idx = np.array([[i, j] for i in (n1 // 4, n1 // 2, 3 * n1 // 4) for j in (n3 // 2 - n3 // 8, n3 // 2, n3 // 2 + n3 // 8)])
    if np.any(probe_idx[:, 1] < m[1]) or np.any(probe_idx[:, 1] > nodes[1] - 1 - m[1]):
        raise ConfigError("interior probes must keep the Wigner window inside the half-space")
    medium = Medium.homogeneous(e_val, h_val)
    w = wigner_transform(snap, window, probe_indices=probe_idx, threads=threads)
    dens = project_modes(w, medium)
    kvec = w.k_vectors()
    radius = min(0.25 * np.linalg.norm(k_in), 0.5 * abs(k_in[2]))
    fm = snap.meta["field_mode"]
    other = fm[0] + ("2" if fm[1] == "1" else "1")
    mu = dens.mode(fm) + dens.mode(other)
    wp = (
        float(np.mean(peak_mass(kvec, mu, k_in, radius)) * dens.k_cell),
        float(np.mean(peak_mass(kvec, mu, k_re, radius)) * dens.k_cell),
    )
    timings["wigner"] = time.perf_counter() - t0

    # steady ray stream: rays enter along k3 > 0 for the '-' field branch
    t0 = time.perf_counter()
    n_rays = int(cfg.rays["count"])
    rng = np.random.default_rng(cfg.rays["seed"])
    z_probe = probe_idx[:, 1] * h
    zlo, zhi = float(z_probe.min()), float(z_probe.max())
    margin = max(m[1] * h, 4 * h)
    depth = zhi + margin
    ray_k = k_re if fm.startswith("-") else k_in
    khat3 = abs(ray_k[2]) / np.linalg.norm(ray_k)
    t_final = depth / (v * khat3)
    length = grid.extent[0]
    x = np.column_stack([
        rng.uniform(0, length, n_rays),
        np.zeros(n_rays),
        rng.uniform(0, 2 * depth, n_rays),
    ])
    k = np.broadcast_to(ray_k, (n_rays, 3)).copy()
    ens = RayEnsemble.from_arrays(x, k, mode=fm, weight=1.0 / max(n_rays, 1), seed=cfg.rays["seed"], medium=medium)
    require_rays(ens)
    scn = TransportScenario("half-space", medium, omega=float(snap.meta["omega"]))
    res = transport_ensemble(ens, scn, t_final, dt=min(cfg.rays["dt"], t_final / 4))
    kmax = 1.25 * np.linalg.norm(k_in)
    lattice = PhaseLattice({2: np.linspace(zlo, zhi, 9)}, {2: np.linspace(-kmax, kmax, 41)})
    binned = bin_ensemble(res.ensemble, lattice)
    per_k = binned.mu.sum(axis=-1).sum(axis=0) * binned.x_cell * binned.k_cell
    k3_nodes = lattice.k_axes[2]
    rp = (float(per_k[k3_nodes < 0].sum()), float(per_k[k3_nodes > 0].sum()))
    measure = res.measures["exterior"]
    mnu = (measure.total("alpha"), measure.total("beta"))
    dep_k = float(np.mean(measure.samples("alpha")[:, 2])) if measure.count("alpha") else float("nan")
    timings["transport"] = time.perf_counter() - t0

    # boundary trace Wigner matrix and its decomposition on the two branches
    t0 = time.perf_counter()
    trace_grid = Grid((nodes[0],), (h,), (0.0,), axes=(0,), periodic=(True,), pinned_k=(0.0, k0[1], 0.0))
    trace = FieldSnapshot(trace_grid, snap.values[:, 0, :], eps)
    mb = min(2 * m[0], nodes[0] // 2)
    tw = wigner_transform(trace, WindowSpec(mb, "cosine", 1.0), probe_indices=np.arange(0, nodes[0], nodes[0] // 8)[:, None],
                          threads=threads)
    tk = tw.k_vectors()
    tr_profile = np.mean(tw.trace(), axis=0)
    kpeak = float(tk[np.argmax(tr_profile), 0])
    near = np.abs(tk[..., 0] - k_in[0]) <= radius
    wmat = np.mean(tw.values[:, near].sum(axis=1), axis=0) * tw.k_cell
    es_m = eigensystem(medium, np.zeros(3), k_in)
    es_p = eigensystem(medium, np.zeros(3), k_re)
    basis = np.column_stack([es_m.vector(fm), es_m.vector(other), es_p.vector(fm), es_p.vector(other)])
    pinv = np.linalg.pinv(basis)
    nmat = pinv @ wmat @ pinv.conj().T
    tnu = (float(np.real(nmat[0, 0] + nmat[1, 1])), float(np.real(nmat[2, 2] + nmat[3, 3])))
    timings["trace"] = time.perf_counter() - t0

    return CrossResult(
        epsilon=eps, field=snap, wigner=w, densities=dens, k_incident=k_in, k_reflected=k_re,
        wigner_peaks=wp, ray_peaks=rp, ray_lattice=lattice, trace_nu=tnu, measure_nu=mnu,
        trace_k_peak=kpeak, deposit_k=dep_k, dk_trace=float(tw.k_axes[0][1] - tw.k_axes[0][0]),
        rays=res, measure=measure, trace_wigner=tw, timings=timings,
    )


def cross_checks(cr: CrossResult, cfg: ScenarioConfig, criterion: Optional[int] = 10) -> List[Check]:
    amp2 = abs(cfg.wave["amplitude"]) ** 2
    return [
        Check("cross.peak_ratio", abs(cr.wigner_ratio / cr.ray_ratio - 1.0), cfg.tolerance("cross.peak_ratio", 0.10),
              criterion=criterion, detail=f"wigner {cr.wigner_ratio:.4f} vs rays {cr.ray_ratio:.4f}"),
        Check("cross.peak_weight", max(abs(p / amp2 - 1.0) for p in cr.wigner_peaks), cfg.tolerance("cross.peak_weight", 0.05),
              criterion=criterion, detail=f"peaks {cr.wigner_peaks[0]:.4f}, {cr.wigner_peaks[1]:.4f}"),
        Check("cross.boundary_ratio", abs(cr.trace_ratio / cr.measure_ratio - 1.0), cfg.tolerance("cross.boundary_ratio", 0.15),
              criterion=criterion, detail=f"trace {cr.trace_ratio:.4f} vs deposits {cr.measure_ratio:.4f}"),
        Check("cross.boundary_support", abs(cr.trace_k_peak - cr.deposit_k), cr.dk_trace, criterion=criterion,
              detail=f"trace peak k1' {cr.trace_k_peak:.4f}, deposits k1' {cr.deposit_k:.4f}"),
        Check("cross.boundary_branches", min(cr.trace_nu) / max(max(cr.trace_nu), 1e-300), 0.5, ">=", criterion=criterion,
              detail="both k3 branches carry trace mass"),
    ]


# ------------------------------------------------------------- pipelines


def _free_space(cfg: ScenarioConfig, report: RunReport, out: Optional[Path], threads, strict):
    e_val, h_val = _constant_coefficients(cfg)
    v = 1.0 / np.sqrt(e_val * h_val)
    k0 = incident_wave_vector(cfg, v)
    nodes = cfg.grid["nodes"]
    axes = (0, 2, 1)[: len(nodes)]
    medium = Medium.homogeneous(e_val, h_val)
    fractions, purities = [], []
    for i, eps in enumerate(cfg.epsilons):
        # fixed physical box and window: nodes and half-width grow like 1/eps
        scale = max(1, int(round(cfg.epsilons[0] / eps)))
        nodes = [n * scale for n in cfg.grid["nodes"]]
        window = WindowSpec(cfg.window["half_width"] * scale, cfg.window["taper"], cfg.window["taper_fraction"])
        h = np.pi * eps / cfg.grid["resolution"]
        pinned = [0.0, 0.0, 0.0]
        for a in range(3):
            if a not in axes:
                pinned[a] = k0[a]
        grid = Grid(tuple(nodes), (h,) * len(nodes), (0.0,) * len(nodes), axes=axes, pinned_k=tuple(pinned))
        spec = PlaneWaveSpec(k0, eps, cfg.wave["amplitude"], cfg.wave["mode"], e_val, h_val)
        snap = plane_wave_field(spec, grid, strict=strict)
        probe_idx = grid.nearest_index(np.asarray(cfg.probes)) if cfg.probes else np.array([[n // 2 for n in nodes]])
        w = wigner_transform(snap, window, probe_indices=probe_idx, threads=threads)
        dens = project_modes(w, medium)
        frac = shell_mass_fraction(w, medium, snap.meta["omega"], 0.1)["trace"]
        fractions.append(frac)
        total = sum(float(np.abs(dens.mode(lbl)).sum()) for lbl in dens.labels)
        purities.append(float(np.abs(dens.mode(snap.meta["field_mode"])).sum()) / max(total, 1e-300))
        if out is not None:
            save_field(out / f"field_{i}.smxf", snap)
            save_wigner(out / f"wigner_{i}.smxw", w)
            _write_slice(out / f"phase_space_{i}.csv", w, dens)
            report.files += [f"field_{i}.smxf", f"wigner_{i}.smxw", f"phase_space_{i}.csv"]
    report.add(Check("free.shell_fraction", fractions[-1], cfg.tolerance("free.shell_fraction", 0.9), ">="))
    report.add(Check("free.shell_trend", -min(np.diff(fractions), default=0.0), 1e-12, "<=",
                     detail="largest decrease of the shell fraction along the ladder"))
    report.add(Check("free.mode_purity", purities[-1], cfg.tolerance("free.mode_purity", 0.99), ">="))
    # rays carry the same wave vector and stay on the shell
    n = int(cfg.rays["count"])
    rng = np.random.default_rng(cfg.rays["seed"])
    ens = RayEnsemble.from_arrays(rng.normal(size=(n, 3)), np.broadcast_to(k0, (n, 3)), mode=field_mode(cfg.wave["mode"]),
                                  weight=1.0 / max(n, 1), seed=cfg.rays["seed"], medium=medium)
    require_rays(ens)
    res = transport_ensemble(ens, TransportScenario("whole-space", medium), 1.0, cfg.rays["dt"])
    report.add(Check("free.ray_drift", res.ensemble.max_drift_rate, 1e-8))
    if out is not None:
        rows = [(e, f, p) for e, f, p in zip(cfg.epsilons, fractions, purities)]
        write_csv(out / "comparison.csv", ["epsilon", "shell_fraction", "mode_purity"], rows)
        report.files.append("comparison.csv")


def _write_slice(path, w, dens, probe: int = 0):
    kv = w.k_vectors().reshape(-1, 3)
    mu = dens.mu[probe].reshape(-1, len(MODE_LABELS))
    tr = w.trace()[probe].reshape(-1)
    rows = ([*kv[i], tr[i], *mu[i]] for i in range(kv.shape[0]))
    write_csv(path, ["k1", "k2", "k3", "trace"] + [f"mu{lbl}" for lbl in MODE_LABELS], rows)


def _write_measure(path, measure):
    write_csv(path, list(BOUNDARY_COLUMNS), measure.rows())


def _half_space(cfg: ScenarioConfig, report: RunReport, out: Optional[Path], threads, strict):
    cr = cross_validate(cfg, threads=threads, strict=strict)
    report.timings.update({f"cross.{k}": v for k, v in cr.timings.items()})
    for c in cross_checks(cr, cfg, criterion=None):
        report.add(c)
    report.add(Check("cross.bookkeeping", cr.rays.ensemble.bookkeeping_error(), 1e-12))
    report.add(Check("cross.tangential_E", cr.field.meta["tangential_residual"], 1e-12))
    if out is not None:
        save_field(out / "mirror_field.smxf", cr.field)
        save_wigner(out / "mirror_wigner.smxw", cr.wigner)
        _write_slice(out / "phase_space_probe0.csv", cr.wigner, cr.densities)
        _write_measure(out / "boundary_measure.csv", cr.measure)
        lat = cr.ray_lattice
        d = bin_ensemble(cr.rays.ensemble, lat)
        z = lat.x_axes[2]
        kz = lat.k_axes[2]
        dm = d.mu.sum(axis=-1).reshape(len(z), len(kz))
        write_csv(out / "rays_binned.csv", ["x3", "k3", "density"], ((z[i], kz[j], dm[i, j]) for i in range(len(z)) for j in range(len(kz))))
        rows = [
            ("peak_k3_minus", cr.wigner_peaks[0], cr.ray_peaks[0]),
            ("peak_k3_plus", cr.wigner_peaks[1], cr.ray_peaks[1]),
            ("peak_ratio", cr.wigner_ratio, cr.ray_ratio),
            ("boundary_alpha", cr.trace_nu[0], cr.measure_nu[0]),
            ("boundary_beta", cr.trace_nu[1], cr.measure_nu[1]),
            ("boundary_ratio", cr.trace_ratio, cr.measure_ratio),
        ]
        write_csv(out / "comparison.csv", ["quantity", "wigner", "rays"], rows)
        report.files += ["mirror_field.smxf", "mirror_wigner.smxw", "phase_space_probe0.csv", "boundary_measure.csv",
                         "rays_binned.csv", "comparison.csv"]


def _interface_rays(cfg: ScenarioConfig, scn: TransportScenario, medium: Medium) -> RayEnsemble:
    n = int(cfg.rays["count"])
    rng = np.random.default_rng(cfg.rays["seed"])
    v = float(medium.speed(np.zeros(3)))
    k0 = incident_wave_vector(cfg, v)
    mode = cfg.wave["mode"]
    x = np.column_stack([rng.uniform(-1, 1, n), rng.uniform(-1, 1, n), rng.uniform(0.5, 1.5, n)])
    # the '+' ray branch moves along k, so it heads into the surface when k3 < 0
    k = np.broadcast_to(k0 if k0[2] < 0 else k0 * np.array([1, 1, -1]), (n, 3)).copy()
    ens = RayEnsemble.from_arrays(x, k, mode=mode, weight=1.0 / max(n, 1), seed=cfg.rays["seed"], medium=medium)
    require_rays(ens)
    return ens


INTERFACE_BOX = ((-20.0, -20.0, -5.0), (20.0, 20.0, 5.0))


def transport_stage(cfg: ScenarioConfig, t_final: float = 3.0):
    """Ray stage of the configured scenario on its own.

    Rays start in a unit slab above the surface and head into it. Returns
    the initial ensemble and the transport result.
    """
    med = cfg.medium("exterior")
    if cfg.scenario == "free-space":
        scn = TransportScenario("whole-space", med, omega=cfg.omega)
    elif cfg.scenario == "half-space-conductor":
        scn = TransportScenario("half-space", med, omega=cfg.omega, box=INTERFACE_BOX)
    elif cfg.scenario == "calderon-interface":
        scn = TransportScenario("two-media", med, cfg.medium("interior"), omega=cfg.omega, box=INTERFACE_BOX)
    else:
        scn = TransportScenario("curved", med, chart=_chart_from_config(cfg), omega=cfg.omega, box=INTERFACE_BOX)
    ens = _interface_rays(cfg, scn, med)
    if scn.chart is not None:
        ens.x[:, 2] += scn.chart.phi(ens.x[:, :2])
    return ens, transport_ensemble(ens, scn, t_final, cfg.rays["dt"])


def write_rays(path, ensemble: RayEnsemble) -> None:
    rows = (
        (*ensemble.x[i], *ensemble.k[i], TRANSPORT_MODES[ensemble.mode[i]], ensemble.weight[i],
         REGIONS[ensemble.region[i]], STATUS_NAMES[ensemble.status[i]])
        for i in range(ensemble.n)
    )
    write_csv(path, ["x1", "x2", "x3", "k1", "k2", "k3", "mode", "weight", "region", "status"], rows)


def _calderon(cfg: ScenarioConfig, report: RunReport, out: Optional[Path], threads, strict):
    ens, res = transport_stage(cfg)
    e = res.ensemble
    report.add(Check("calderon.bookkeeping", e.bookkeeping_error(), 1e-12))
    spawned = np.arange(ens.n, e.n)
    kp_dev = float(np.max(np.abs(e.k[spawned, :2] - ens.k[0, :2]))) if spawned.size and np.all(ens.k[:, :2] == ens.k[0, :2]) else 0.0
    report.add(Check("calderon.tangential_k", kp_dev, 0.0, detail="homogeneous media keep k' exactly"))
    report.add(Check("calderon.events", float(res.failed_events), 0.0, detail="failed event locations"))
    masses = {r: float(e.weight[e.region == i].sum()) for i, r in enumerate(("exterior", "interior"))}
    if out is not None:
        _write_measure(out / "boundary_measure_exterior.csv", res.measures["exterior"])
        _write_measure(out / "boundary_measure_interior.csv", res.measures["interior"])
        write_csv(out / "comparison.csv", ["region", "mass"], sorted(masses.items()))
        report.files += ["boundary_measure_exterior.csv", "boundary_measure_interior.csv", "comparison.csv"]


def _curved(cfg: ScenarioConfig, report: RunReport, out: Optional[Path], threads, strict):
    _, res = transport_stage(cfg)
    report.add(Check("curved.bookkeeping", res.ensemble.bookkeeping_error(), 1e-12))
    report.add(Check("curved.events", float(res.failed_events), 0.0, detail="failed event locations"))
    report.add(Check("curved.drift", res.ensemble.max_drift_rate, 1e-8))
    if out is not None:
        _write_measure(out / "boundary_measure.csv", res.measures["exterior"])
        report.files.append("boundary_measure.csv")


PIPELINES = {
    "free-space": _free_space,
    "half-space-conductor": _half_space,
    "calderon-interface": _calderon,
    "curved-interface": _curved,
}


def run_scenario(cfg: ScenarioConfig, out_dir=None, threads: Optional[int] = None, strict: bool = False) -> RunReport:
    """Run the configured pipeline, emit files into ``out_dir`` (if given) and
    return the report. Module errors propagate to the caller."""
    report = RunReport(f"run:{cfg.scenario}", seed=cfg.rays["seed"])
    out = None
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "config.yaml").write_text(cfg.dump(), encoding="utf-8")
        report.files.append("config.yaml")
    with _Timer(report, "total"):
        PIPELINES[cfg.scenario](cfg, report, out, threads, strict)
    if out is not None:
        report.write(out / "report.json")
    return report
