import cmath
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from semimax.errors import GridError, WindowError
from semimax.grid import FieldSnapshot, Grid, cosine_cutoff
from semimax.phase_space import (
    EMPTY_MASS,
    WignerGrid,
    WindowSpec,
    husimi_smooth,
    project_modes,
    resolution_defect,
    shell_mass_fraction,
    wigner_transform,
)
from semimax.spectral import Medium, eigensystem

# mean Tukey weight over 2M folded lags, M = 64, taper 0.05 (scalar loop oracle)
CONC_M64_T005 = 0.9750617068730368


def line_grid(n=256, length=1.0, periodic=True, **kw):
    return Grid.uniform(n, length, axes=(2,), periodic=periodic, **kw)


def plane_wave(grid, k0, eps, vec=None):
    vec = np.eye(6)[0] if vec is None else vec
    phase = np.zeros(grid.shape)
    pts = grid.points()
    for a in range(3):
        phase = phase + k0[a] * pts[..., a]
    return FieldSnapshot(grid, np.exp(1j * phase / eps)[..., None] * vec, eps)


def direct_wigner(f, p, M, h, eps, w):
    """Scalar-loop oracle for a 1-D periodic grid at node p."""
    N = f.shape[0]
    out = []
    for j in range(-M, M):
        k = j * math.pi * eps / (2 * M * h)
        acc = np.zeros((f.shape[1], f.shape[1]), dtype=complex)
        for m in range(-M, M + 1):
            ph = cmath.exp(2j * m * h * k / eps)
            acc += w[m + M] * ph * np.outer(f[(p - m) % N], np.conj(f[(p + m) % N]))
        out.append(acc * h / (math.pi * eps))
    return np.array(out)


class TestWindow:
    def test_weights(self):
        w = WindowSpec(16).weights(16)
        assert w.size == 33 and w[16] == 1.0
        np.testing.assert_array_equal(w, w[::-1])
        assert w[0] == 0.0
        r = WindowSpec(16, taper="none").weights(16)
        assert r[0] == r[-1] == 0.5 and np.all(r[1:-1] == 1)

    @pytest.mark.parametrize(
        "kw", [dict(half_width=0), dict(half_width=4, taper="hann"), dict(half_width=4, taper_fraction=2)]
    )
    def test_rejects(self, kw):
        with pytest.raises(WindowError):
            WindowSpec(**kw)

    def test_k_axis_spacing(self):
        k = WindowSpec(8).k_axis(8, 0.1, 0.5)
        np.testing.assert_allclose(np.diff(k), np.pi * 0.5 / (2 * 8 * 0.1))
        assert k[8] == 0.0


class TestTransform:
    def test_matches_direct_sum(self, rng):
        g = line_grid(32)
        f = rng.normal(size=(32, 3)) + 1j * rng.normal(size=(32, 3))
        eps = 0.3
        win = WindowSpec(8, taper="cosine", taper_fraction=0.3)
        W = wigner_transform(FieldSnapshot(g, f, eps), win, probe_indices=[[5]], resolution_tol=None)
        ref = direct_wigner(f, 5, 8, g.spacing[0], eps, win.weights(8))
        ref = 0.5 * (ref + np.conj(np.swapaxes(ref, -1, -2)))
        np.testing.assert_allclose(W.values[0], ref, atol=1e-13)

    def test_zero_field(self):
        g = line_grid(64)
        W = wigner_transform(FieldSnapshot(g, np.zeros((64, 6)), 0.1), WindowSpec(8), probe_indices=[[3]])
        assert np.all(W.values == 0)

    @pytest.mark.parametrize("n_wave", [3, 8, 17])
    def test_plane_wave_concentration(self, n_wave):
        eps = 1 / 32
        g = line_grid(256)
        k0 = eps * 2 * np.pi * n_wave
        W = wigner_transform(plane_wave(g, (0, 0, k0), eps), WindowSpec(64), probe_indices=[[0], [77]])
        tr = W.trace()
        j = np.argmin(np.abs(W.k_axes[0] - k0))
        conc = tr[:, j] / tr.sum(axis=1)
        np.testing.assert_allclose(conc, CONC_M64_T005, rtol=1e-12)
        assert np.all(conc >= 0.95)

    def test_plane_wave_rectangular_is_exact(self):
        eps = 1 / 32
        g = line_grid(128)
        k0 = eps * 2 * np.pi * 5
        W = wigner_transform(plane_wave(g, (0, 0, k0), eps), WindowSpec(64, taper="none"), probe_indices=[[9]])
        tr = W.trace()[0]
        j = np.argmax(tr)
        assert W.k_axes[0][j] == pytest.approx(k0)
        assert tr[j] / tr.sum() == pytest.approx(1.0, abs=1e-12)

    def test_two_dimensional_plane_wave(self):
        eps = 1 / 16
        g = Grid.uniform((64, 64), (1.0, 1.0), axes=(0, 2))
        k0 = (eps * 2 * np.pi * 3, 0.0, eps * 2 * np.pi * 5)
        W = wigner_transform(plane_wave(g, k0, eps), WindowSpec(32), probe_indices=[[10, 20]])
        tr = W.trace()[0]
        i, j = np.unravel_index(np.argmax(tr), tr.shape)
        assert W.k_axes[0][i] == pytest.approx(k0[0]) and W.k_axes[1][j] == pytest.approx(k0[2])
        assert tr[i, j] / tr.sum() >= 0.95
        assert W.marginal()[0] == pytest.approx(1.0, abs=1e-12)

    def test_gaussian_bump_parseval(self):
        g = line_grid(200, length=20.0, periodic=False)
        x = g.coords(0)
        f = np.exp(-x**2)[:, None] * np.array([1, 0.5, 0, 0, 0, -0.25])
        snap = FieldSnapshot(g, f, 1.0)
        W = wigner_transform(snap, WindowSpec(40), probe_indices=[[90], [100], [120]])
        expected = np.sum(np.abs(f[[90, 100, 120]]) ** 2, axis=1)
        np.testing.assert_allclose(W.marginal(), expected, atol=1e-6)

    def test_hermitian_real_trace(self, rng):
        g = Grid.uniform((24, 24), (1.0, 1.0), axes=(0, 1))
        f = rng.normal(size=(24, 24, 6)) + 1j * rng.normal(size=(24, 24, 6))
        W = wigner_transform(FieldSnapshot(g, f, 1.0), WindowSpec(6), probe_indices=[[0, 0], [5, 9]], resolution_tol=None)
        scale = np.max(np.abs(W.values))
        assert W.hermiticity_error() <= 1e-10 * scale
        assert W.trace_imag_max() <= 1e-10 * scale

    def test_localisation_exact(self, rng):
        g = line_grid(128, periodic=False)
        f = rng.normal(size=(128, 6)) + 1j * rng.normal(size=(128, 6))
        f2 = f.copy()
        f2[:40] = rng.normal(size=(40, 6))
        f2[90:] = 0.0
        win = WindowSpec(20)
        W1 = wigner_transform(FieldSnapshot(g, f, 1.0), win, probe_indices=[[64]], resolution_tol=None)
        W2 = wigner_transform(FieldSnapshot(g, f2, 1.0), win, probe_indices=[[64]], resolution_tol=None)
        np.testing.assert_array_equal(W1.values, W2.values)

    @pytest.mark.parametrize("c, exact", [(0.5, True), (0.7 - 0.2j, False)])
    def test_cutoff_rule(self, rng, c, exact):
        g = line_grid(128, periodic=False)
        f = rng.normal(size=(128, 6)) + 1j * rng.normal(size=(128, 6))
        x = g.coords(0)
        phi = np.where(np.abs(x - x[64]) <= 21 * g.spacing[0], c, c * np.exp(-(x - x[64]) ** 2))
        win = WindowSpec(20)
        W1 = wigner_transform(FieldSnapshot(g, f, 1.0), win, probe_indices=[[64]], resolution_tol=None)
        W2 = wigner_transform(FieldSnapshot(g, f * phi[:, None], 1.0), win, probe_indices=[[64]], resolution_tol=None)
        if exact:
            np.testing.assert_array_equal(W2.values, abs(c) ** 2 * W1.values)
        else:
            np.testing.assert_allclose(W2.values, abs(c) ** 2 * W1.values, rtol=1e-13, atol=1e-15)

    def test_cutoff_field_is_applied(self):
        g = line_grid(64, periodic=False)
        theta = cosine_cutoff(g, (0, 0, 0), 0.1, 0.2)
        snap = FieldSnapshot(g, np.ones((64, 6)), 1.0, cutoff=theta)
        W = wigner_transform(snap, WindowSpec(4), probe_indices=[[32], [50]], resolution_tol=None)
        np.testing.assert_allclose(W.marginal(), 6 * theta[[32, 50]] ** 2, atol=1e-12)

    def test_threads_do_not_change_output(self, rng):
        g = line_grid(128)
        f = rng.normal(size=(128, 6)) + 0j
        snap = FieldSnapshot(g, f, 1.0)
        probes = np.arange(0, 128, 7)[:, None]
        a = wigner_transform(snap, WindowSpec(16), probe_indices=probes, resolution_tol=None)
        b = wigner_transform(snap, WindowSpec(16), probe_indices=probes, threads=4, resolution_tol=None)
        np.testing.assert_array_equal(a.values, b.values)

    def test_physical_probes_snap(self):
        g = line_grid(64)
        snap = FieldSnapshot(g, np.ones((64, 6)), 1.0)
        W = wigner_transform(snap, WindowSpec(4), probes=[[0.3, 0.1, g.coords(0)[10] + 0.2 * g.spacing[0]]])
        assert W.probe_indices[0, 0] == 10
        assert W.probes[0, 2] == pytest.approx(g.coords(0)[10])

    def test_window_exceeding_grid(self):
        g = line_grid(32, periodic=False)
        snap = FieldSnapshot(g, np.ones((32, 6)), 1.0)
        with pytest.raises(WindowError):
            wigner_transform(snap, WindowSpec(8), probe_indices=[[3]])
        gp = line_grid(32)
        with pytest.raises(WindowError):
            wigner_transform(FieldSnapshot(gp, np.ones((32, 6)), 1.0), WindowSpec(17), probe_indices=[[3]])

    def test_unresolved_field_rejected(self):
        g = line_grid(64)
        eps = 0.01
        # eps * xi = eps * 2 pi * 30 lies beyond pi eps / 2h = eps * 2 pi * 16
        snap = plane_wave(g, (0, 0, eps * 2 * np.pi * 30), eps)
        assert resolution_defect(snap) > 0.99
        with pytest.raises(WindowError):
            wigner_transform(snap, WindowSpec(8), probe_indices=[[0]])

    def test_bad_snapshot(self):
        g = line_grid(8)
        with pytest.raises(ValueError):
            FieldSnapshot(g, np.ones((8, 6)), 0.0)
        with pytest.raises(GridError):
            FieldSnapshot(g, np.full((8, 6), np.nan), 1.0)
        with pytest.raises(GridError):
            FieldSnapshot(g, np.ones((7, 6)), 1.0)
        with pytest.raises(GridError):
            FieldSnapshot(g, np.ones((8, 6)), 1.0, cutoff=np.full(8, 1.5))

    @settings(max_examples=25, deadline=None)
    @given(
        seed=st.integers(0, 2**31 - 1),
        half=st.integers(2, 16),
        eps=st.floats(0.01, 2.0),
        taper=st.sampled_from(["cosine", "none"]),
    )
    def test_parseval_property(self, seed, half, eps, taper):
        r = np.random.default_rng(seed)
        g = line_grid(40)
        f = r.normal(size=(40, 6)) + 1j * r.normal(size=(40, 6))
        p = r.integers(0, 40, size=(3, 1))
        W = wigner_transform(FieldSnapshot(g, f, eps), WindowSpec(half, taper), probe_indices=p, resolution_tol=None)
        np.testing.assert_allclose(W.marginal(), np.sum(np.abs(f[p[:, 0]]) ** 2, axis=1), rtol=1e-10)


def single_node_wigner(vectors, k_axis, pinned=(0.3, -0.2, 0.0)):
    g = Grid.uniform(16, 1.0, axes=(2,), pinned_k=pinned)
    vals = vectors[:, :, None] * np.conj(vectors[:, None, :])
    return WignerGrid(
        grid=g,
        probes=np.array([[0.0, 0.0, 0.1]]),
        probe_indices=np.array([[3]]),
        k_axes=(k_axis,),
        values=vals[None],
        window=WindowSpec(8),
        epsilon_scale=1.0,
    )


class TestModes:
    def setup_method(self):
        self.medium = Medium.homogeneous(epsilon=2.0, eta=0.5)

    def test_biorthogonal_pick(self):
        k_axis = np.linspace(-2, 2, 16, endpoint=False)
        kv = np.stack([np.full(16, 0.3), np.full(16, -0.2), k_axis], -1)
        es = eigensystem(self.medium, np.zeros((16, 3)), kv)
        W = single_node_wigner(es.vector("+1"), k_axis)
        md = project_modes(W, self.medium)
        np.testing.assert_allclose(md.mode("+1"), 1.0, atol=1e-12)
        for lab in ("+2", "-1", "-2", "0_1", "0_2"):
            np.testing.assert_allclose(md.mode(lab), 0.0, atol=1e-12)
        assert md.imag_max <= 1e-12

    def test_energy_trace_identity(self, rng):
        g = Grid.uniform(64, 1.0, axes=(0,), pinned_k=(0.0, 0.4, 0.1))
        f = rng.normal(size=(64, 6)) + 1j * rng.normal(size=(64, 6))
        W = wigner_transform(FieldSnapshot(g, f, 0.2), WindowSpec(16), probe_indices=[[4], [40]], resolution_tol=None)
        md = project_modes(W, self.medium, cross=True)
        a0 = np.diag([2.0] * 3 + [0.5] * 3)
        expected = np.real(np.einsum("ij,...ji->...", a0, W.values))
        np.testing.assert_allclose(md.energy_trace(), expected, atol=1e-8)
        np.testing.assert_allclose(np.einsum("...aa->...a", md.cross).real, md.mu, atol=1e-12)

    def test_small_k_nodes_flagged(self):
        g = Grid.uniform(32, 1.0, axes=(2,))
        W = wigner_transform(FieldSnapshot(g, np.ones((32, 6)), 1.0), WindowSpec(8), probe_indices=[[1]])
        md = project_modes(W, self.medium)
        zero = np.argmin(np.abs(W.k_axes[0]))
        assert not md.valid[0, zero] and md.valid.sum() == 15
        assert np.all(md.mu[0, zero] == 0)

    def test_zero(self):
        g = Grid.uniform(32, 1.0, axes=(2,), pinned_k=(0.1, 0, 0))
        W = wigner_transform(FieldSnapshot(g, np.zeros((32, 6)), 1.0), WindowSpec(8), probe_indices=[[1]])
        assert np.all(project_modes(W, self.medium).mu == 0)

    def test_mode_pure_plane_wave(self):
        eps = 1 / 32
        v = self.medium.speed(np.zeros(3))
        omega = 1.0
        g = Grid.uniform(256, 1.0, axes=(2,), pinned_k=(0.0, 0.0, 0.0))
        k0 = np.array([0.0, 0.0, eps * 2 * np.pi * 8])
        omega = v * k0[2]
        b = eigensystem(self.medium, np.zeros(3), k0).vector("-1")
        snap = plane_wave(g, k0, eps, vec=b)
        W = wigner_transform(snap, WindowSpec(128, taper="none"), probe_indices=[[0], [100]])
        md = project_modes(W, self.medium)
        dens = np.abs(md.mu)
        kn = np.linalg.norm(md.k, axis=-1)
        shell = np.abs(v * kn - omega) <= 0.1 * omega
        on = dens[:, shell, :].sum(axis=(0, 1))
        assert on[md.labels.index("-1")] / on.sum() >= 0.99


class TestShell:
    medium = Medium.homogeneous(epsilon=1.0, eta=1.0)

    def fraction(self, eps, factor):
        g = line_grid(256, length=1.0)
        n_wave = round(factor * 1.0 / (2 * np.pi * eps))
        snap = plane_wave(g, (0, 0, eps * 2 * np.pi * n_wave), eps)
        # Hann taper: an on-node wave fills three k-nodes with no sidelobes
        W = wigner_transform(snap, WindowSpec(128, taper_fraction=1.0), probe_indices=[[10]], resolution_tol=None)
        return shell_mass_fraction(W, self.medium, omega=eps * 2 * np.pi * round(1.0 / (2 * np.pi * eps)), band=0.1)

    def test_on_shell(self):
        assert self.fraction(1 / 64, 1.0)["trace"] >= 0.9

    def test_off_shell(self):
        assert self.fraction(1 / 64, 2.0)["trace"] <= 0.05

    def test_empty(self):
        g = line_grid(32)
        W = wigner_transform(FieldSnapshot(g, np.zeros((32, 6)), 0.1), WindowSpec(8), probe_indices=[[0]])
        assert shell_mass_fraction(W, self.medium, 1.0, 0.1) == {"trace": EMPTY_MASS}
        md = project_modes(W, self.medium)
        out = shell_mass_fraction(md, self.medium, 1.0, 0.1)
        assert all(v == EMPTY_MASS for v in out.values())

    def test_band_must_be_positive(self):
        g = line_grid(32)
        W = wigner_transform(FieldSnapshot(g, np.ones((32, 6)), 0.1), WindowSpec(8), probe_indices=[[0]])
        with pytest.raises(ValueError):
            shell_mass_fraction(W, self.medium, 1.0, 0.0)


class TestHusimi:
    def fringes(self, eps, n=256):
        g = line_grid(n)
        x = g.coords(0)
        k1 = eps * 2 * np.pi * round(0.8 / (2 * np.pi * eps))
        f = (np.exp(1j * k1 * x / eps) + np.exp(-1j * k1 * x / eps))[:, None] * np.eye(6)[1]
        snap = FieldSnapshot(g, f, eps)
        return wigner_transform(snap, WindowSpec(n // 2, taper="none"), probe_indices=np.arange(n)[:, None])

    def test_fringes_negative_raw_not_smoothed(self):
        eps = 1 / 32
        W = self.fringes(eps)
        assert W.trace().min() < -0.1 * W.trace().max()
        H = husimi_smooth(W, 0.05, eps / (2 * 0.05))
        assert H.trace().min() >= -1e-10 * H.trace().max()
        assert H.marginal().sum() == pytest.approx(W.marginal().sum(), rel=1e-12)

    def test_plane_wave_nonnegative(self):
        eps = 1 / 16
        g = line_grid(128)
        snap = plane_wave(g, (0, 0, eps * 2 * np.pi * 4), eps)
        W = wigner_transform(snap, WindowSpec(64), probe_indices=np.arange(128)[:, None])
        H = husimi_smooth(W, 0.04, eps / 0.08)
        assert H.trace().min() >= -1e-10 * H.trace().max()

    def test_zero(self):
        g = line_grid(32)
        W = wigner_transform(FieldSnapshot(g, np.zeros((32, 6)), 0.1), WindowSpec(8), probe_indices=np.arange(32)[:, None])
        assert np.all(husimi_smooth(W, 0.1, 1.0).values == 0)

    def test_inadmissible_widths(self):
        W = self.fringes(1 / 16, n=64)
        with pytest.raises(WindowError):
            husimi_smooth(W, 0.01, 0.01)

    def test_needs_lattice(self):
        g = line_grid(32)
        W = wigner_transform(FieldSnapshot(g, np.ones((32, 6)), 0.1), WindowSpec(8), probe_indices=[[0], [5]])
        with pytest.raises(WindowError):
            husimi_smooth(W, 0.1, 1.0)

    def test_negativity_shrinks_with_eps(self):
        worst = []
        for eps in (1 / 16, 1 / 32, 1 / 64):
            W = self.fringes(eps)
            H = husimi_smooth(W, 0.05, eps / 0.1)
            rel = max(0.0, -H.trace().min() / H.trace().max())
            # below 1e-13 is round-off
            worst.append(rel if rel > 1e-13 else 0.0)
        assert max(worst) <= 1e-10
        assert worst[0] >= worst[1] >= worst[2]
