import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from diskqed import analysis, model, solver
from diskqed.analysis import find_extrema_xy
from diskqed.model import SystemParams
from diskqed.units import GHZ, PM, angular_detuning

WL = 1297.5e-9


def lorentz_dip(x, x0, hw, depth=0.8):
    return 1.0 - depth / (1.0 + ((x - x0) / hw) ** 2)


def as_spectrum(x, t, r=None):
    z = np.zeros_like(x)
    return solver.Spectrum(x, t, z if r is None else r, z, z, z, WL)


class TestExtrema:
    @given(st.floats(-3.0, 3.0))
    def test_lorentzian_center(self, x0):
        x = np.linspace(-20, 20, 401)
        p = find_extrema_xy(x, lorentz_dip(x, x0, 2.0), "dip")
        assert len(p) == 1
        assert abs(p.location_pm[0] - x0) <= 0.1 * (x[1] - x[0])

    @given(st.floats(0.5, 4.0))
    def test_lorentzian_fwhm(self, hw):
        x = np.linspace(-30, 30, 601)
        p = find_extrema_xy(x, lorentz_dip(x, 0.0, hw), "dip")
        assert abs(p.fwhm_pm[0] - 2 * hw) <= 2 * (x[1] - x[0])

    def test_monotone_is_empty(self):
        x = np.linspace(0, 1, 50)
        assert len(find_extrema_xy(x, x, "peak")) == 0
        assert len(find_extrema_xy(x, x**2, "dip")) == 0
        assert len(find_extrema_xy(x, np.ones_like(x))) == 0

    def test_mirror(self):
        x = np.linspace(-20, 20, 401)
        y = lorentz_dip(x, -6.3, 1.5) * lorentz_dip(x, 4.1, 2.5, 0.5)
        a = find_extrema_xy(x, y, "dip")
        b = find_extrema_xy(-x[::-1], y[::-1], "dip")
        assert np.sort(-a.location_pm) == pytest.approx(np.sort(b.location_pm), abs=1e-9)

    @given(st.floats(1e-3, 1e3))
    def test_scale_invariance(self, c):
        x = np.linspace(-40, 40, 321)
        y = lorentz_dip(x, -18.5, 3.0) + lorentz_dip(x, 18.5, 3.0) - 1.0
        a = analysis.splitting(find_extrema_xy(x, y, "dip"))
        b = analysis.splitting(find_extrema_xy(x, c * y, "dip"))
        assert a.delta_pm == pytest.approx(b.delta_pm, rel=1e-9)

    def test_smoothing_suppresses_noise(self):
        rng = np.random.default_rng(3)
        x = np.linspace(-20, 20, 401)
        y = lorentz_dip(x, 1.0, 3.0) + rng.normal(0, 0.02, x.size)
        noisy = find_extrema_xy(x, y, "dip", rel_prominence=0.0)
        smooth = find_extrema_xy(x, y, "dip", smooth=True, rel_prominence=0.0)
        assert len(smooth) < len(noisy)

    def test_bad_input(self):
        with pytest.raises(ValueError):
            find_extrema_xy([1, 2, 3], [1, 2, 3])
        with pytest.raises(ValueError):
            find_extrema_xy(np.arange(6.0), np.arange(6.0), kind="max")

    def test_channel_kind_defaults(self):
        x = np.linspace(-20, 20, 201)
        s = as_spectrum(x, lorentz_dip(x, 0, 2), 1 - lorentz_dip(x, 3, 2))
        assert analysis.find_extrema(s, "T").kind == "dip"
        assert analysis.find_extrema(s, "R").location_pm == pytest.approx([3.0], abs=0.02)


class TestSplitting:
    def test_synthetic_pair(self):
        x = np.linspace(-60, 60, 481)
        y = lorentz_dip(x, -18.5, 4.0) + lorentz_dip(x, 18.5, 4.0) - 1.0
        sp = analysis.splitting(find_extrema_xy(x, y, "dip"))
        assert sp.delta_pm == pytest.approx(37.0, abs=0.5)

    def test_bare_doublet(self):
        # |gamma_beta| = 10 kappa_T, where the two supermode dips barely pull on each other
        p = SystemParams.from_ghz(0.17, 1.27, 16.1, 0.0, 0.0, 0.55, 0.89)
        grid = np.linspace(-150, 150, 3001)
        sp = analysis.splitting(analysis.find_extrema(solver.weak_drive_spectrum(p, grid), "T"))
        assert sp.delta_omega == pytest.approx(2 * p.gamma_beta, abs=2 * abs(angular_detuning(0.1 * PM, WL)))

    def test_needs_two(self):
        x = np.linspace(-20, 20, 201)
        assert analysis.splitting(find_extrema_xy(x, lorentz_dip(x, 0, 2), "dip")) is None

    def test_tie_goes_to_shorter_wavelength(self):
        x = np.linspace(-30, 30, 601)
        y = lorentz_dip(x, -15, 2) + lorentz_dip(x, 0, 2) + lorentz_dip(x, 15, 2) - 2.0
        p = find_extrema_xy(x, y, "dip")
        assert len(p) == 3
        sp = analysis.splitting(p)
        # the centre dip is most prominent and the outer two tie for second place
        assert sp.positions_pm == pytest.approx((-15, 0), abs=0.05)


class TestContrast:
    X = np.linspace(-10, 10, 21)

    def test_grid_point(self):
        s = as_spectrum(self.X, lorentz_dip(self.X, 0.0, 3.0))
        assert analysis.contrast_at(s, 2.0) == pytest.approx(1 - s.transmission[12])

    def test_midway_linear(self):
        s = as_spectrum(self.X, 0.5 + 0.01 * self.X)
        assert analysis.contrast_at(s, 2.5) == pytest.approx(0.5 * ((1 - s.transmission[12]) + (1 - s.transmission[13])))

    def test_outside(self):
        with pytest.raises(ValueError):
            analysis.contrast_at(as_spectrum(self.X, np.ones(21)), 10.5)


class TestEnsemble:
    X = np.linspace(-10, 10, 41)

    def test_identical(self):
        s = as_spectrum(self.X, lorentz_dip(self.X, 0, 2))
        st_ = analysis.ensemble_stats([s, s, s])
        assert np.all(st_.rms == 0) and st_.count == 3

    def test_noise_converges(self):
        rng = np.random.default_rng(11)
        base = lorentz_dip(self.X, 0, 2)
        scans = []
        for _ in range(4000):
            y = base.copy()
            y[20] += rng.normal(0, 0.05)
            scans.append(y)
        st_ = analysis.ensemble_stats(scans)
        assert st_.rms[20] == pytest.approx(0.05, rel=0.05)
        assert st_.rms[0] == 0.0

    def test_normalize_commutes_for_unit_peak(self):
        a = 1 - lorentz_dip(self.X, 0, 2, 1.0)
        b = 1 - lorentz_dip(self.X, 1, 2, 1.0)
        st_ = analysis.ensemble_stats([a, b], normalize=True)
        mean = (a + b) / 2
        assert st_.mean == pytest.approx(mean)

    def test_grid_mismatch(self):
        a = as_spectrum(self.X, np.ones(41))
        b = as_spectrum(self.X + 0.1, np.ones(41))
        with pytest.raises(ValueError):
            analysis.ensemble_stats([a, b])
        with pytest.raises(ValueError):
            analysis.ensemble_stats([np.ones(3), np.ones(4)])


def test_lorentzian_fwhm_pm():
    kappa = 1.62 * GHZ
    assert abs(angular_detuning(analysis.lorentzian_fwhm_pm(kappa, WL) * PM, WL)) == pytest.approx(2 * kappa)


def test_weak_resonant_splitting_near_standing_wave_coupling():
    p = model.table_ii(0.0)
    spec = solver.weak_drive_spectrum(p, np.linspace(-60, 60, 2401))
    sp = analysis.splitting(analysis.find_extrema(spec, "T"))
    assert sp.delta_omega == pytest.approx(2 * p.g_sw[0], rel=0.1)
