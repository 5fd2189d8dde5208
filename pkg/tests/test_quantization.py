import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from semimax.errors import EvanescentError, GridError, SymbolError
from semimax.grid import FieldSnapshot, Grid
from semimax.quantization import (
    SymbolFunction,
    apply_pdo,
    apply_weyl,
    commuting_residual,
    decompose_symbol,
    duality_pairing,
    energy_symbol,
    fit_order,
    operator_difference,
    product_remainder,
    sobolev_norm,
)
from semimax.spectral import Medium

POL = np.array([1.0, 0.5j, 0.0, 0.0, 0.0, 0.2])
EPS_LADDER = [2.0**-j for j in range(3, 8)]


def axis_vec(values, j, shape):
    out = np.zeros(shape)
    out[..., j] = values
    return out


def cos_x():
    return SymbolFunction.separable(
        lambda x: 1 + 0.3 * np.cos(x[..., 0]),
        lambda k: np.ones(k.shape[:-1]),
        lambda x: axis_vec(-0.3 * np.sin(x[..., 0]), 0, x.shape),
        lambda k: np.zeros(k.shape),
    )


def gauss_k(center=1.0):
    def fk(k):
        return np.exp(-((k[..., 0] - center) ** 2))

    return SymbolFunction.of_k(fk, lambda k: axis_vec(-2 * (k[..., 0] - center) * fk(k), 0, k.shape))


def sin_x_cos_k():
    return SymbolFunction.separable(
        lambda x: np.sin(x[..., 0]),
        lambda k: np.cos(k[..., 0]),
        lambda x: axis_vec(np.cos(x[..., 0]), 0, x.shape),
        lambda k: axis_vec(-np.sin(k[..., 0]), 0, k.shape),
    )


def ring(n=1024):
    return Grid.uniform(n, 2 * np.pi, axes=(0,), periodic=True)


def packet(grid, eps, k0=1.0, width=2.0):
    x = grid.coords(0)
    f = np.exp(-width * x**2) * np.exp(1j * k0 * x / eps)
    return FieldSnapshot(grid, f[:, None] * POL, eps)


class TestSymbol:
    def test_gradients_match_central_differences(self, rng):
        a = cos_x() * gauss_k() + sin_x_cos_k()
        x = rng.normal(size=(50, 3))
        k = rng.normal(size=(50, 3))
        errs = []
        for h in (1e-2, 5e-3):
            gx, gk = a.fd_gradients(x, k, h)
            errs.append(max(np.max(np.abs(gx - a.grad_x(x, k))), np.max(np.abs(gk - a.grad_k(x, k)))))
        assert errs[0] < 1e-4
        # halving h cuts the error by about 4
        assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.05)

    def test_general_gradients(self):
        a = SymbolFunction.general(lambda x, k: x[..., 0] * k[..., 1])
        assert not a.has_gradients
        with pytest.raises(SymbolError):
            a.grad_x(np.zeros(3), np.zeros(3))

    def test_algebra(self, rng):
        a, b = cos_x(), sin_x_cos_k()
        x, k = rng.normal(size=(10, 3)), rng.normal(size=(10, 3))
        np.testing.assert_allclose((a * b)(x, k), a(x, k) * b(x, k))
        np.testing.assert_allclose((a - b)(x, k), a(x, k) - b(x, k))
        np.testing.assert_allclose((a * b).grad_x(x, k), a.grad_x(x, k) * b(x, k)[:, None] + a(x, k)[:, None] * b.grad_x(x, k))
        assert (a * b).is_separable

    def test_needs_definition(self):
        with pytest.raises(SymbolError):
            SymbolFunction()

    def test_commuting_class(self, rng):
        medium = Medium.homogeneous(epsilon=2.0, eta=0.7)
        sym = energy_symbol(medium, cos_x())
        x, k = rng.normal(size=(30, 3)), rng.normal(size=(30, 3))
        assert sym.commuting
        assert commuting_residual(sym, medium, 1.3, x, k) <= 1e-10
        eye = SymbolFunction.general(lambda x, k: np.broadcast_to(np.eye(6), x.shape[:-1] + (6, 6)), matrix=True)
        assert commuting_residual(eye, medium, 1.3, x, k) > 1e-3


class TestPdo:
    def test_identity_exact(self, rng):
        g = ring(64)
        f = FieldSnapshot(g, rng.normal(size=(64, 6)) + 1j * rng.normal(size=(64, 6)), 0.1)
        np.testing.assert_allclose(apply_pdo(SymbolFunction.constant(), f).values, f.values, atol=1e-15)
        np.testing.assert_allclose(apply_weyl(SymbolFunction.constant(), f).values, f.values, atol=1e-15)

    def test_multiplier(self, rng):
        g = ring(64)
        f = FieldSnapshot(g, rng.normal(size=(64, 6)) + 0j, 0.1)
        a = cos_x()
        expect = (1 + 0.3 * np.cos(g.coords(0)))[:, None] * f.values
        np.testing.assert_allclose(apply_pdo(a, f).values, expect, atol=1e-12)
        np.testing.assert_allclose(apply_weyl(a, f).values, expect, atol=1e-12)

    def test_derivative_symbol(self):
        g = ring(256)
        x = g.coords(0)
        eps = 0.05
        f = np.exp(-4 * x**2)
        snap = FieldSnapshot(g, f[:, None] * POL, eps)
        out = apply_pdo(SymbolFunction.wave_component(0), snap).values
        expect = (eps / 1j) * (-8 * x * f)[:, None] * POL
        assert np.max(np.abs(out - expect)) <= 1e-6

    def test_pinned_component(self):
        g = Grid.uniform(32, 1.0, axes=(2,), pinned_k=(0.4, 0.0, 0.0))
        snap = FieldSnapshot(g, np.ones((32, 6)), 0.1)
        out = apply_pdo(SymbolFunction.wave_component(0), snap)
        np.testing.assert_allclose(out.values, 0.4, atol=1e-14)

    def test_two_dimensional_derivative(self):
        g = Grid.uniform((64, 48), (2 * np.pi, 2 * np.pi), axes=(0, 2))
        pts = g.points()
        eps = 0.1
        f = np.exp(-2 * (pts[..., 0] ** 2 + pts[..., 2] ** 2))
        snap = FieldSnapshot(g, f[..., None] * POL, eps)
        out = apply_pdo(SymbolFunction.wave_component(2), snap).values
        expect = (eps / 1j) * (-4 * pts[..., 2] * f)[..., None] * POL
        assert np.max(np.abs(out - expect)) <= 1e-6

    def test_general_path_matches_separable(self, rng):
        g = ring(48)
        snap = packet(g, 0.25)
        a = cos_x() * gauss_k() + sin_x_cos_k()
        general = SymbolFunction.general(lambda x, k: a(x, k))
        np.testing.assert_allclose(apply_pdo(general, snap).values, apply_pdo(a, snap).values, atol=1e-12)
        np.testing.assert_allclose(apply_weyl(general, snap).values, apply_weyl(a, snap).values, atol=1e-12)

    def test_matrix_symbol(self, rng):
        g = ring(32)
        snap = FieldSnapshot(g, rng.normal(size=(32, 6)) + 0j, 0.3)
        m = rng.normal(size=(6, 6))
        sym = SymbolFunction.general(lambda x, k: np.broadcast_to(m, np.broadcast_shapes(x.shape, k.shape)[:-1] + (6, 6)), matrix=True)
        np.testing.assert_allclose(apply_pdo(sym, snap).values, snap.values @ m.T, atol=1e-12)
        np.testing.assert_allclose(apply_weyl(sym, snap).values, snap.values @ m.T, atol=1e-12)

    def test_errors(self):
        g = Grid.uniform(16, 1.0, axes=(0,), periodic=False)
        snap = FieldSnapshot(g, np.ones((16, 6)), 0.1)
        with pytest.raises(GridError):
            apply_pdo(SymbolFunction.constant(), snap)
        gp = ring(16)
        bad = SymbolFunction.of_k(lambda k: np.full(k.shape[:-1], np.nan))
        with pytest.raises(SymbolError):
            apply_pdo(bad, FieldSnapshot(gp, np.ones((16, 6)), 0.1))
        with pytest.raises(SymbolError):
            apply_weyl(bad, FieldSnapshot(gp, np.ones((16, 6)), 0.1))

    def test_weyl_equals_standard_for_linear_multiplier(self, rng):
        g = ring(64)
        snap = FieldSnapshot(g, rng.normal(size=(64, 6)) + 0j, 0.1)
        lin = SymbolFunction.of_x(lambda x: 0.3 * x[..., 0], lambda x: axis_vec(0.3, 0, x.shape))
        assert operator_difference(lin, snap) <= 1e-12

    def test_quantizations_converge(self):
        a = cos_x() * gauss_k() + sin_x_cos_k()
        diffs = [operator_difference(a, packet(ring(), e)) for e in EPS_LADDER]
        assert fit_order(EPS_LADDER, diffs) >= 0.9

    def test_uniform_bound(self):
        a = cos_x() * gauss_k()
        bound = 1.3  # sup |a|
        for e in EPS_LADDER:
            snap = packet(ring(), e)
            assert apply_pdo(a, snap).norm() <= bound * snap.norm()

    def test_negative_sobolev_proxy(self):
        # boundary-layer fields exp(-|x|/eps): eps^s ||a f|| / ||f||_{H^-s} stays bounded
        a = cos_x() * gauss_k(0.0)
        s = 1.0
        ratios = []
        for e in EPS_LADDER:
            g = ring(2048)
            x = g.coords(0)
            snap = FieldSnapshot(g, (np.exp(-np.abs(x) / e) * np.exp(-x**2))[:, None] * POL, e)
            ratios.append(apply_pdo(a, snap).norm() / sobolev_norm(snap, -s))
        assert max(ratios) / min(ratios) <= 2.0

    def test_sobolev_zero_is_l2(self, rng):
        g = ring(64)
        snap = FieldSnapshot(g, rng.normal(size=(64, 6)) + 0j, 0.2)
        assert sobolev_norm(snap, 0.0) == pytest.approx(snap.norm(), rel=1e-12)
        assert sobolev_norm(snap, -1.0) < snap.norm() < sobolev_norm(snap, 1.0)


class TestProductRemainder:
    def test_multipliers_exact(self):
        a = cos_x()
        b = SymbolFunction.of_x(lambda x: np.sin(x[..., 0]), lambda x: axis_vec(np.cos(x[..., 0]), 0, x.shape))
        rep = product_remainder(a, b, lambda e: packet(ring(256), e, k0=0.0), [0.5, 0.25])
        assert rep.exact and np.all(rep.remainders <= 1e-13)

    def test_derivative_after_multiplier_exact(self):
        b = SymbolFunction.of_x(lambda x: np.sin(x[..., 0]), lambda x: axis_vec(np.cos(x[..., 0]), 0, x.shape))
        rep = product_remainder(SymbolFunction.wave_component(0), b, lambda e: packet(ring(), e), EPS_LADDER)
        assert rep.exact

    def test_second_order(self):
        rep = product_remainder(cos_x() * gauss_k(), sin_x_cos_k(), lambda e: packet(ring(), e), EPS_LADDER)
        assert not rep.exact
        assert rep.fitted_order >= 1.9
        # the first-order correction is genuinely present
        assert fit_order(rep.epsilons, rep.first_order) == pytest.approx(1.0, abs=0.1)

    def test_self_product(self):
        a = cos_x() * gauss_k()
        rep = product_remainder(a, a, lambda e: packet(ring(), e), EPS_LADDER)
        assert rep.fitted_order >= 1.9

    def test_fixed_field_rescaled(self):
        snap = packet(ring(1024), 1.0, k0=0.0)
        rep = product_remainder(cos_x() * gauss_k(0.0), sin_x_cos_k(), snap, [0.2, 0.1, 0.05])
        assert rep.fitted_order >= 1.9

    def test_missing_gradients(self):
        a = SymbolFunction.general(lambda x, k: x[..., 0] * k[..., 0])
        with pytest.raises(SymbolError):
            product_remainder(a, a, packet(ring(64), 0.5), [0.5, 0.25])

    def test_csv_rows(self):
        rep = product_remainder(cos_x() * gauss_k(), sin_x_cos_k(), lambda e: packet(ring(), e), EPS_LADDER[:2])
        rows = list(rep.rows())
        assert list(rows[0]) == ["epsilon", "lhs", "rhs", "abs_diff", "fitted_order"]


class TestDuality:
    grid = ring(256)

    def test_constant(self):
        snap = packet(self.grid, 1 / 16)
        d = duality_pairing(SymbolFunction.constant(), snap)
        assert d.phase_space == pytest.approx(snap.norm() ** 2, rel=1e-12)
        assert d.relative <= 1e-12

    def test_multiplier_quadrature(self):
        snap = packet(self.grid, 1 / 16)
        a = cos_x()
        x = self.grid.coords(0)
        oracle = self.grid.cell_volume * np.sum((1 + 0.3 * np.cos(x)) * np.sum(np.abs(snap.values) ** 2, axis=1))
        d = duality_pairing(a, snap)
        assert abs(d.phase_space - oracle) <= 1e-6 and abs(d.quadratic_form - oracle) <= 1e-6

    def test_k_bump_on_plane_wave(self):
        eps = 1 / 8
        x = self.grid.coords(0)
        k0 = eps * 6
        snap = FieldSnapshot(self.grid, np.exp(1j * k0 * x / eps)[:, None] * POL, eps)
        bump = gauss_k(k0 + 0.1)
        d = duality_pairing(bump, snap)
        oracle = np.exp(-0.01) * np.sum(np.abs(POL) ** 2) * 2 * np.pi
        assert abs(d.phase_space - oracle) <= 1e-6 * snap.norm() ** 2
        assert abs(d.quadratic_form - oracle) <= 1e-6 * snap.norm() ** 2

    @pytest.mark.parametrize("eps", [1 / 8, 1 / 16])
    def test_mixed_symbol(self, eps):
        snap = packet(self.grid, eps)
        d = duality_pairing(cos_x() * gauss_k() + sin_x_cos_k(), snap)
        assert d.relative <= 1e-6

    def test_odd_grid_rejected(self):
        with pytest.raises(GridError):
            duality_pairing(SymbolFunction.constant(), FieldSnapshot(ring(15), np.ones((15, 6)), 0.1))


class TestDecomposition:
    medium = Medium.homogeneous(epsilon=2.0, eta=1.0)
    omega = 1.5
    x = np.array([0.1, -0.2, 0.0])

    def random_k(self, rng, n=400):
        v = float(self.medium.speed(self.x))
        r = rng.uniform(0, 0.95 * self.omega / v, n)
        t = rng.uniform(0, 2 * np.pi, n)
        kp = np.stack([r * np.cos(t), r * np.sin(t)], -1)
        k3 = rng.uniform(-3, 3, n)
        return np.concatenate([kp, k3[:, None]], -1)

    def test_shell_symbol(self, rng):
        v = float(self.medium.speed(self.x))
        a = SymbolFunction.general(lambda x, k: v * np.linalg.norm(k, axis=-1) - self.omega)
        dec = decompose_symbol(a, self.medium, self.omega, self.x)
        k = self.random_k(rng)
        np.testing.assert_allclose(dec.a0(k[:, :2]), 0, atol=1e-12)
        np.testing.assert_allclose(dec.a1(k[:, :2]), 0, atol=1e-12)
        np.testing.assert_allclose(dec.a2(k), 1, atol=1e-9)

    def test_normal_component(self, rng):
        dec = decompose_symbol(SymbolFunction.wave_component(2), self.medium, self.omega, self.x)
        k = self.random_k(rng)
        np.testing.assert_allclose(dec.a0(k[:, :2]), 0, atol=1e-12)
        np.testing.assert_allclose(dec.a1(k[:, :2]), 1, atol=1e-12)
        np.testing.assert_allclose(dec.a2(k), 0, atol=1e-9)

    def test_normal_square(self, rng):
        v = float(self.medium.speed(self.x))
        a = SymbolFunction.general(lambda x, k: k[..., 2] ** 2)
        dec = decompose_symbol(a, self.medium, self.omega, self.x)
        k = self.random_k(rng)
        kp2 = np.sum(k[:, :2] ** 2, axis=1)
        np.testing.assert_allclose(dec.a0(k[:, :2]), self.omega**2 / v**2 - kp2, atol=1e-12)
        np.testing.assert_allclose(dec.a1(k[:, :2]), 0, atol=1e-12)
        expect = (v * np.linalg.norm(k, axis=1) + self.omega) / v**2
        np.testing.assert_allclose(dec.a2(k), expect, atol=1e-8)

    def test_reconstruction_generic(self, rng):
        a = cos_x() * gauss_k() + sin_x_cos_k() + SymbolFunction.general(lambda x, k: np.exp(0.3 * k[..., 2]) * k[..., 1])
        dec = decompose_symbol(a, self.medium, self.omega, self.x)
        k = self.random_k(rng, 2000)
        ok = dec.off_shell(k)
        assert ok.mean() > 0.99
        err = np.abs(dec.reconstruct(k[ok]) - a(self.x, k[ok]))
        assert err.max() <= 1e-9

    def test_guard_band_limits(self, rng):
        a = cos_x() * gauss_k() + SymbolFunction.general(lambda x, k: np.exp(0.3 * k[..., 2]) * k[..., 1])
        dec = decompose_symbol(a, self.medium, self.omega, self.x)
        kp = self.random_k(rng, 50)[:, :2]
        for sign in (1.0, -1.0):
            left, right, mid = dec.shell_limits(kp, sign)
            assert np.max(np.abs(left - right)) <= 1e-6
            assert np.max(np.abs(left - mid)) <= 1e-6
            on = np.concatenate([kp, sign * dec.k3_root(kp)[:, None]], -1)
            val = dec.a2(on)
            assert np.all(np.isfinite(val)) and np.max(np.abs(val - mid)) <= 1e-6

    def test_evanescent_refused(self):
        dec = decompose_symbol(SymbolFunction.wave_component(2), self.medium, self.omega, self.x)
        v = float(self.medium.speed(self.x))
        with pytest.raises(EvanescentError):
            dec.a0(np.array([[1.01 * self.omega / v, 0.0]]))

    @settings(max_examples=30, deadline=None)
    @given(
        c=st.lists(st.floats(-2, 2), min_size=3, max_size=3),
        kx=st.floats(-0.6, 0.6),
        k3=st.floats(-3, 3),
    )
    def test_polynomial_in_k3(self, c, kx, k3):
        a = SymbolFunction.general(lambda x, k: c[0] + c[1] * k[..., 2] + c[2] * k[..., 0] * k[..., 2])
        dec = decompose_symbol(a, self.medium, self.omega, self.x)
        k = np.array([[kx, 0.1, k3]])
        assert dec.a0(k[:, :2])[0] == pytest.approx(c[0], abs=1e-12)
        assert dec.a1(k[:, :2])[0] == pytest.approx(c[1] + c[2] * kx, abs=1e-12)
        if dec.off_shell(k)[0]:
            assert abs(dec.a2(k)[0]) <= 1e-9
