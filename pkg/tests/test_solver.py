import math

import numpy as np
import pytest
import scipy.sparse as sp

from diskqed import model, solver
from diskqed.model import DriveSpec, SystemParams
from diskqed.operators import HilbertLayout, lindblad_superoperator
from diskqed.solver import QMESolver, SolverError, observables
from diskqed.units import GHZ, PM, angular_detuning

EMPTY = SystemParams.from_ghz(0.17, 1.27, 0.0, 0.0, 0.0, 0.55, 0.89)


def assert_hygiene(st):
    assert st.trace_error <= 1e-10
    assert st.min_eigenvalue >= -1e-8
    assert st.residual <= 1e-8
    assert np.abs(st.rho - st.rho.conj().T).max() <= 1e-10


def laser(params, dl_pm):
    return float(angular_detuning(dl_pm * PM, params.wavelength))


class TestDirect:
    def test_undriven_vacuum(self):
        lay = HilbertLayout(2)
        h = model.build_hamiltonian(EMPTY, None, lay)
        st = solver.steady_state(lindblad_superoperator(h, model.build_collapse_ops(EMPTY, lay)), lay, GHZ)
        assert_hygiene(st)
        assert st.rho[0, 0].real == pytest.approx(1.0, abs=1e-12)

    def test_singular_generator_fails_loudly(self):
        with pytest.raises(SolverError):
            solver.steady_state(sp.csr_matrix((16, 16), dtype=complex))

    def test_iterative_matches_direct(self):
        p = model.table_ii()
        drive = DriveSpec.from_photon_number(p, 0.5)
        lay = HilbertLayout(3)
        qs = QMESolver(p, drive, lay)
        w = laser(p, -4.0)
        it = qs.solve(w)
        direct = solver.steady_state(qs.superoperator(w), lay)
        assert_hygiene(it)
        assert np.abs(it.rho - direct.rho).max() < 1e-11


class TestEmptyCavity:
    @pytest.mark.parametrize("dl", [0.0, -3.0, 5.0])
    def test_coherent_state(self, dl):
        drive = DriveSpec.from_photon_number(EMPTY, 0.2)
        qs = QMESolver(EMPTY, drive, HilbertLayout(6))
        st = qs.solve(laser(EMPTY, dl))
        assert_hygiene(st)
        delta = EMPTY.cavity_exciton_detuning - laser(EMPTY, dl)
        alpha = 2 * math.sqrt(EMPTY.kappa_e * drive.flux) / (1j * delta + EMPTY.kappa_t)
        obs = observables(st, EMPTY, drive, qs.ops)
        assert obs.a_cw == pytest.approx(alpha, rel=1e-6)
        assert obs.n_cw == pytest.approx(abs(alpha) ** 2, rel=1e-6)
        assert obs.n_ccw == pytest.approx(0.0, abs=1e-15)
        # pure state
        assert np.trace(st.rho @ st.rho).real == pytest.approx(1.0, abs=1e-6)

    def test_contrast_identity(self):
        drive = DriveSpec.from_photon_number(EMPTY, 1e-3)
        qs = QMESolver(EMPTY, drive, HilbertLayout(3))
        obs = observables(qs.solve(laser(EMPTY, 0.0)), EMPTY, drive, qs.ops)
        t0 = ((EMPTY.kappa_i - 2 * EMPTY.kappa_e) / EMPTY.kappa_t) ** 2
        assert obs.transmission == pytest.approx(t0, abs=1e-9)
        assert obs.reflection == 0.0

    def test_critical_coupling(self):
        p = EMPTY.with_(kappa_i=2 * EMPTY.kappa_e)
        drive = DriveSpec.from_photon_number(p, 1e-3)
        qs = QMESolver(p, drive, HilbertLayout(6))
        assert observables(qs.solve(laser(p, 0.0)), p, drive, qs.ops).transmission == pytest.approx(0.0, abs=1e-8)

    @pytest.mark.parametrize("n", [1e-3, 0.5])
    def test_energy_balance(self, n):
        drive = DriveSpec.from_photon_number(EMPTY, n)
        qs = QMESolver(EMPTY, drive, HilbertLayout(7))
        obs = observables(qs.solve(laser(EMPTY, 1.0)), EMPTY, drive, qs.ops)
        lost = drive.flux * (1 - obs.transmission - obs.reflection)
        assert lost == pytest.approx(2 * EMPTY.kappa_i * obs.n_cav, rel=1e-9)


def test_energy_balance_with_emitter():
    p = model.table_ii()
    drive = DriveSpec.from_photon_number(p, 0.3)
    qs = QMESolver(p, drive, HilbertLayout(5))
    st = qs.solve(laser(p, -2.0))
    assert_hygiene(st)
    obs = observables(st, p, drive, qs.ops)
    lost = drive.flux * (1 - obs.transmission - obs.reflection)
    assert lost == pytest.approx(2 * p.kappa_i * obs.n_cav + p.gamma_par * obs.exciton, rel=1e-8)


def test_emitter_alone_weak_drive_population_vanishes():
    # emitter reached only through the cavity; scale the drive down
    p = SystemParams.from_ghz(0.17, 1.27, 0.0, 0.0, 3.0, 0.55, 0.0)
    pops = []
    for n in (1e-2, 1e-4, 1e-6):
        drive = DriveSpec.from_photon_number(p, n)
        qs = QMESolver(p, drive, HilbertLayout(2))
        pops.append(observables(qs.solve(0.0), p, drive, qs.ops).exciton)
    assert pops[0] > pops[1] > pops[2]
    assert pops[2] < 1e-5


def test_truncation_flag():
    drive = DriveSpec.from_photon_number(EMPTY, 2.0)
    st = QMESolver(EMPTY, drive, HilbertLayout(1)).solve(laser(EMPTY, 0.0))
    assert st.truncated
    assert st.top_fock_population > solver.TRUNCATION_LIMIT


def test_zero_drive_observables_undefined():
    qs = QMESolver(EMPTY, None, HilbertLayout(1))
    with pytest.raises(ValueError):
        observables(qs.solve(0.0), EMPTY, DriveSpec(0.0, EMPTY.wavelength), qs.ops)


class TestWeakDrive:
    def test_doublet_without_emitter(self):
        p = EMPTY.with_(gamma_beta=8.0 * GHZ)
        grid = np.linspace(-90, 90, 6001)
        spec = solver.weak_drive_spectrum(p, grid)
        w = spec.detuning_omega
        lo = w < 0
        dips = sorted([w[lo][np.argmin(spec.transmission[lo])], w[~lo][np.argmin(spec.transmission[~lo])]])
        assert dips == pytest.approx([-p.gamma_beta, p.gamma_beta], abs=0.02 * p.kappa_t)

    def test_no_reflection_without_scatterers(self):
        spec = solver.weak_drive_spectrum(EMPTY, np.linspace(-20, 20, 41))
        assert np.all(spec.reflection == 0.0)
        # the emitter alone scatters into the ccw mode
        spec = solver.weak_drive_spectrum(EMPTY.with_(g_tw=2 * GHZ), np.linspace(-20, 20, 41))
        assert spec.reflection.max() > 1e-3

    def test_resonant_splitting(self):
        p = model.table_ii(0.0)
        spec = solver.weak_drive_spectrum(p, np.linspace(-60, 60, 4001))
        from diskqed.analysis import find_extrema, splitting

        sp_ = splitting(find_extrema(spec, "T"))
        assert abs(sp_.delta_omega) == pytest.approx(2 * p.g_sw[0], rel=0.1)

    def test_lossless_is_singular(self):
        p = SystemParams(1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0).with_(kappa_e=0.0)
        with pytest.raises(ValueError):
            solver.weak_drive_spectrum(p, [0.0])
        with pytest.raises(ValueError):
            solver.weak_drive_spectrum(model.table_ii(), [])

    def test_coherent_part_without_dephasing(self):
        p = model.table_ii().with_(gamma_p=0.0)
        grid = np.linspace(-30, 10, 81)
        a = solver.weak_drive_spectrum(p, grid)
        b = solver.coherent_spectrum(p, grid)
        assert np.abs(a.transmission - b.transmission).max() < 1e-12
        assert np.abs(a.reflection - b.reflection).max() < 1e-12

    def test_incoherent_part_positive(self):
        p = model.table_ii()
        grid = np.linspace(-30, 10, 81)
        a = solver.weak_drive_spectrum(p, grid)
        b = solver.coherent_spectrum(p, grid)
        assert np.all(a.reflection >= b.reflection - 1e-15)

    def test_matches_full_at_low_drive(self):
        p = model.table_ii()
        grid = np.linspace(-30, 12, 15)
        drive = DriveSpec.from_photon_number(p, 1e-4)
        full = solver.spectrum(p, drive, grid, n_max=3)
        weak = solver.weak_drive_spectrum(p, grid, drive)
        assert np.abs(full.transmission - weak.transmission).max() < 1e-3
        assert np.abs(full.reflection - weak.reflection).max() < 1e-3
        assert full.n_cav == pytest.approx(weak.n_cav, rel=2e-2)


class TestSymmetry:
    GRID = np.linspace(-30, 30, 61)

    def test_phase_sign_transmission(self):
        # xi -> -xi transposes the coherent response matrix: T is unchanged
        # without pure dephasing, R is not, and dephasing breaks both
        p = model.table_ii().with_(gamma_p=0.0)
        a = solver.weak_drive_spectrum(p, self.GRID)
        b = solver.weak_drive_spectrum(p.with_(xi=-p.xi), self.GRID)
        assert np.abs(a.transmission - b.transmission).max() < 1e-12
        assert np.abs(a.reflection - b.reflection).max() > 1e-3
        p = model.table_ii()
        a = solver.weak_drive_spectrum(p, self.GRID)
        b = solver.weak_drive_spectrum(p.with_(xi=-p.xi), self.GRID)
        assert np.abs(a.transmission - b.transmission).max() > 1e-3

    @pytest.mark.parametrize("dca", [0.0, -12.0])
    def test_mirror(self, dca):
        # flipping every detuning maps xi to pi - xi under this backscatter sign
        p = model.table_ii(dca)
        q = p.with_(xi=math.pi - p.xi, detuning_ca=-p.detuning_ca)
        a = solver.weak_drive_spectrum(p, self.GRID)
        b = solver.weak_drive_spectrum(q, -self.GRID)
        assert np.abs(a.transmission - b.transmission).max() < 1e-12
        assert np.abs(a.reflection - b.reflection).max() < 1e-12

    def test_mirror_full(self):
        p = model.table_ii(-6.0)
        q = p.with_(xi=math.pi - p.xi, detuning_ca=-p.detuning_ca)
        grid = np.array([-9.0, -3.0, 1.0])
        drive = DriveSpec.from_photon_number(p, 0.3)
        a = solver.spectrum(p, drive, grid, n_max=3)
        b = solver.spectrum(q, drive, -grid, n_max=3)
        assert a.transmission == pytest.approx(b.transmission, abs=1e-9)
        assert a.reflection == pytest.approx(b.reflection, abs=1e-9)


class TestSpectrum:
    def test_threads_deterministic(self):
        p = model.table_ii()
        grid = np.linspace(-25, 10, 40)
        drive = DriveSpec.from_photon_number(p, 0.2)
        a = solver.spectrum(p, drive, grid, n_max=3, threads=1)
        b = solver.spectrum(p, drive, grid, n_max=3, threads=3)
        assert np.array_equal(a.transmission, b.transmission)
        assert np.array_equal(a.reflection, b.reflection)

    def test_states_and_meta(self):
        p = model.table_ii()
        grid = np.linspace(-20, 0, 5)
        states = []
        s = solver.spectrum(p, DriveSpec.from_photon_number(p, 0.1), grid, n_max=3, states=states)
        assert len(states) == 5
        for st in states:
            assert_hygiene(st)
        assert s.meta["max_residual"] <= 1e-8
        assert np.all(s.transmission >= -1e-9) and np.all(s.reflection >= 0)
        assert s.truncated.shape == (5,)

    def test_channels(self):
        p = model.table_ii()
        s = solver.weak_drive_spectrum(p, np.linspace(-5, 5, 11), DriveSpec.from_photon_number(p, 1e-3))
        assert s.channel("T") is s.transmission
        assert np.array_equal(s.channel("n_cav"), s.n_cw + s.n_ccw)
        assert np.max(s.normalized("R")) == pytest.approx(1.0)
        with pytest.raises(KeyError):
            s.channel("Q")
        with pytest.raises(ValueError):
            solver.Spectrum(np.zeros(3), np.zeros(2), np.zeros(3), np.zeros(3), np.zeros(3), np.zeros(3), 1e-6)

    def test_default_grid(self):
        p = model.table_ii()
        g = solver.default_grid(p)
        assert g.size == 401
        assert 0.5 * (g[0] + g[-1]) == pytest.approx(-6.0)
        half = (g[-1] - g[0]) / 2
        assert abs(angular_detuning(half * PM, p.wavelength)) == pytest.approx(6 * p.kappa_t)
