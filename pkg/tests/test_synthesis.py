import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from semimax.errors import DegenerateDirectionError, GridError, MediumError
from semimax.grid import FieldSnapshot, Grid
from semimax.phase_space import WindowSpec, project_modes, wigner_transform
from semimax.quantization import fit_order
from semimax.spectral import Medium, eigensystem
from semimax.synthesis import (
    LinearPhase,
    MirrorFieldSpec,
    PlaneWaveSpec,
    commensurate_k,
    conductor_mirror_field,
    divergences,
    eikonal_phase,
    field_mode,
    gaussian_profile,
    maxwell_residual,
    plane_wave_field,
    wkb_field,
)

STRATIFIED = Medium.linear_speed([0.0, 0.0, 0.1])


def square(n=64, eps=1 / 16, res=8, pinned=(0.0, 0.0, 0.0)):
    h = np.pi * eps / res
    return Grid((n, n), (h, h), (0.0, 0.0), axes=(0, 2), pinned_k=pinned)


def line(eps, res=8, half_extent=6.0, pinned=(0.3, 0.0, 0.0)):
    h = np.pi * eps / res
    n = 2 * int(np.ceil(half_extent / h))
    return Grid((n,), (h,), (-n * h / 2,), axes=(2,), periodic=(False,), pinned_k=pinned)


class TestPlaneWave:
    def test_field_mode_labels(self):
        assert field_mode("+1") == "-1" and field_mode("2") == "-2"
        with pytest.raises(ValueError):
            field_mode("0_1")

    @pytest.mark.parametrize("mode", ["+1", "+2"])
    @pytest.mark.parametrize("coef", [(1.0, 1.0), (2.25, 1.0), (0.5, 3.0)])
    def test_residual_and_divergence(self, mode, coef):
        eps = 1 / 16
        spec = PlaneWaveSpec([0.5, 0.0, 0.75], eps, 1.0, mode, *coef)
        snap = plane_wave_field(spec, square(eps=eps, pinned=(0, 0, 0)))
        med = Medium.homogeneous(*coef)
        assert maxwell_residual(snap, med, snap.meta["omega"]) <= 1e-10
        assert max(divergences(snap, med)) <= 1e-10
        assert snap.meta["eigen_residual"] <= 1e-12

    def test_wrong_frequency_leaves_residual(self):
        spec = PlaneWaveSpec([0.5, 0.0, 0.75], 1 / 16)
        snap = plane_wave_field(spec, square())
        assert maxwell_residual(snap, Medium.homogeneous(), 1.1 * snap.meta["omega"]) > 0.05

    def test_zero_amplitude(self):
        snap = plane_wave_field(PlaneWaveSpec([0.5, 0, 0.75], 1 / 16, 0.0), square())
        assert np.all(snap.values == 0)
        assert maxwell_residual(snap, Medium.homogeneous(), 1.0) == 0.0

    def test_commensurate_adjustment(self):
        eps = 1 / 16
        g = square(eps=eps)
        spec = PlaneWaveSpec([0.5, 0.0, np.sqrt(0.75)], eps)
        snap = plane_wave_field(spec, g)
        assert snap.meta["adjusted"]
        k = np.array(snap.meta["k"])
        lengths = np.array(g.extent)
        np.testing.assert_allclose(k[[0, 2]] * lengths / (2 * np.pi * eps), np.rint(k[[0, 2]] * lengths / (2 * np.pi * eps)), atol=1e-9)
        with pytest.raises(GridError):
            plane_wave_field(spec, g, strict=True)

    def test_exact_lattice_vector_is_kept(self):
        snap = plane_wave_field(PlaneWaveSpec([0.5, 0.0, 0.75], 1 / 16), square(), strict=True)
        assert not snap.meta["adjusted"]
        assert snap.meta["k"] == [0.5, 0.0, 0.75]

    def test_pinned_mismatch(self):
        g = Grid((32,), (0.1,), (0.0,), axes=(2,), pinned_k=(0.2, 0.0, 0.0))
        with pytest.raises(GridError):
            commensurate_k([0.3, 0.0, 0.5], g, 0.1)

    def test_off_shell_omega_rejected(self):
        with pytest.raises(ValueError):
            PlaneWaveSpec([0, 0, 1.0], 0.1, omega=1.2)
        with pytest.raises(DegenerateDirectionError):
            PlaneWaveSpec([0, 0, 0], 0.1)

    def test_wigner_sees_one_mode(self):
        eps = 1 / 16
        snap = plane_wave_field(PlaneWaveSpec([0.5, 0.0, 0.75], eps, mode="+2"), square(eps=eps))
        w = wigner_transform(snap, WindowSpec(32, taper_fraction=1.0), probe_indices=[[32, 32]])
        md = project_modes(w, Medium.homogeneous())
        share = np.abs(md.mode("-2")).sum() / np.abs(md.mu).sum()
        assert share >= 0.99

    @settings(max_examples=30, deadline=None)
    @given(st.floats(0.0, 2 * np.pi), st.floats(0.2, 3.0), st.floats(0.2, 3.0))
    def test_polarization_is_transverse(self, phi, e, h):
        k = np.array([np.cos(phi), 0.3, np.sin(phi)])
        spec = PlaneWaveSpec(k, 0.1, 1.0, "+1", e, h)
        b = spec.polarization()
        assert abs(np.dot(k, b[:3])) <= 1e-12 and abs(np.dot(k, b[3:])) <= 1e-12


class TestMirror:
    def grid(self, eps=1 / 32, n=(256, 256)):
        h = np.pi * eps / 8
        return Grid(n, (h, h), (0.0, 0.0), axes=(0, 2), periodic=(True, False))

    @pytest.mark.parametrize("mode", ["+1", "+2"])
    def test_tangential_field_vanishes(self, mode):
        eps = 1 / 32
        spec = MirrorFieldSpec(PlaneWaveSpec([0.5, 0.0, -np.sqrt(0.75)], eps, 1.0, mode))
        snap = conductor_mirror_field(spec, self.grid(eps))
        assert snap.meta["tangential_residual"] <= 1e-12
        assert np.max(np.abs(snap.values[:, 0, :2])) <= 1e-12
        assert snap.meta["reflected_energy"] == pytest.approx(1.0, abs=1e-12)

    def test_normal_incidence_flips_tangential_e(self):
        spec = MirrorFieldSpec(PlaneWaveSpec([0.0, 0.0, -1.0], 0.1))
        k = spec.incident.k0
        r = spec.coefficients()
        es = eigensystem(Medium.homogeneous(), np.zeros(3), spec.reflected_k())
        reflected = r[0] * es.vector("-1") + r[1] * es.vector("-2")
        incident = spec.incident.polarization(k)
        np.testing.assert_allclose(reflected[:2], -incident[:2], atol=1e-15)
        np.testing.assert_allclose(reflected[3:5], incident[3:5], atol=1e-15)

    def test_requires_downward_incidence(self):
        with pytest.raises(ValueError):
            MirrorFieldSpec(PlaneWaveSpec([0.5, 0.0, 0.75], 0.1))

    def test_grid_must_start_on_wall(self):
        spec = MirrorFieldSpec(PlaneWaveSpec([0.5, 0.0, -0.75], 1 / 32))
        g = Grid((64, 64), (0.1, 0.1), (0.0, 0.5), axes=(0, 2), periodic=(True, False))
        with pytest.raises(GridError):
            conductor_mirror_field(spec, g)
        with pytest.raises(GridError):
            conductor_mirror_field(spec, Grid((64,), (0.1,), (0.0,), axes=(0,)))

    def test_two_peaks_of_unit_weight(self):
        eps = 1 / 32
        spec = MirrorFieldSpec(PlaneWaveSpec([0.5, 0.0, -np.sqrt(0.75)], eps))
        g = self.grid(eps)
        snap = conductor_mirror_field(spec, g)
        w = wigner_transform(snap, WindowSpec(32, taper_fraction=1.0), probe_indices=[[128, 128], [64, 96]])
        md = project_modes(w, Medium.homogeneous())
        mu = md.mode("-1") + md.mode("-2")
        kv = w.k_vectors()
        for kc in (snap.meta["k_incident"], snap.meta["k_reflected"]):
            near = np.linalg.norm(kv - np.array(kc), axis=-1) <= 0.4
            weight = mu[:, near].sum(axis=1) * md.k_cell
            np.testing.assert_allclose(weight, 1.0, rtol=0.05)

    def test_boundary_trace_peak(self):
        eps = 1 / 32
        spec = MirrorFieldSpec(PlaneWaveSpec([0.5, 0.0, -np.sqrt(0.75)], eps))
        g = self.grid(eps)
        snap = conductor_mirror_field(spec, g)
        tg = Grid((256,), (g.spacing[0],), (0.0,), axes=(0,))
        trace = FieldSnapshot(tg, snap.values[:, 0, :], eps)
        w = wigner_transform(trace, WindowSpec(64, taper_fraction=1.0), probe_indices=[[40]])
        k1 = w.k_axes[0][np.argmax(w.trace()[0])]
        assert k1 == pytest.approx(0.5)


class TestWkb:
    def test_linear_phase_reproduces_plane_wave(self):
        eps = 1 / 16
        g = square(eps=eps)
        k0 = np.array([0.5, 0.0, 0.75])
        plane = plane_wave_field(PlaneWaveSpec(k0, eps), g)
        med = Medium.homogeneous()
        wkb = wkb_field(med, LinearPhase(k0), lambda x: np.ones(x.shape[:-1]), "+1", eps, g, np.linalg.norm(k0))
        np.testing.assert_array_equal(wkb.values, plane.values)

    def test_eikonal_matches_closed_form(self):
        kp = np.array([0.3, 0.0])
        ph = eikonal_phase(STRATIFIED, 1.0, kp, (-3.0, 3.0))
        z = np.linspace(-3, 3, 41)
        pts = np.column_stack([np.zeros(41), np.zeros(41), z])
        exact = np.sqrt(1 / (1 + 0.1 * z) ** 2 - 0.09)
        np.testing.assert_allclose(ph.grad(pts)[:, 2], exact, atol=1e-8)
        assert ph(np.zeros(3)) == pytest.approx(0.0, abs=1e-14)

    def test_eikonal_needs_stratified_medium(self):
        with pytest.raises(MediumError):
            eikonal_phase(Medium.linear_speed([0.1, 0.0, 0.1]), 1.0, [0.3, 0.0], (-1.0, 1.0))

    def test_eikonal_turning_point(self):
        # k3 vanishes where v = 1/0.9: x3 = 1.11, inside the requested span
        with pytest.raises(MediumError):
            eikonal_phase(STRATIFIED, 1.0, [0.9, 0.0], (-1.0, 3.0))

    def test_residual_decays_linearly(self):
        ph = eikonal_phase(STRATIFIED, 1.0, [0.3, 0.0], (-6.5, 6.5))
        amp = gaussian_profile((0.0, 0.0, 0.0), 0.5)
        eps_list = [1 / 16, 1 / 32, 1 / 64]
        res = []
        for eps in eps_list:
            snap = wkb_field(STRATIFIED, ph, amp, "+1", eps, line(eps), 1.0, center=np.zeros(3))
            res.append(maxwell_residual(snap, STRATIFIED, 1.0))
        assert fit_order(eps_list, res) >= 0.9

    def test_compact_support(self):
        eps = 1 / 16
        g = line(eps)
        ph = eikonal_phase(STRATIFIED, 1.0, [0.3, 0.0], (-6.5, 6.5))
        z = g.coords(0)

        def bump(x):
            r = np.abs(x[..., 2])
            return np.where(r < 1, np.exp(-1 / np.maximum(1 - r**2, 1e-300)), 0.0)

        snap = wkb_field(STRATIFIED, ph, bump, "+2", eps, g, 1.0, center=np.zeros(3))
        outside = np.abs(z) >= 1
        assert np.all(snap.values[outside] == 0)

    def test_off_shell_center_rejected(self):
        with pytest.raises(ValueError):
            wkb_field(Medium.homogeneous(), LinearPhase([0, 0, 1.0]), lambda x: np.ones(x.shape[:-1]), "+1", 0.1,
                      square(), 2.0)

    def test_vanishing_gradient_rejected(self):
        with pytest.raises(DegenerateDirectionError):
            wkb_field(Medium.homogeneous(), LinearPhase([0, 0, 1e-12]), lambda x: np.ones(x.shape[:-1]), "+1", 0.1,
                      square(), 1e-12)
