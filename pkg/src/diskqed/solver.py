"""Steady states of the Liouvillian, observables and transmission/reflection spectra.

Two routes are provided:

* the full master-equation steady state, solved as ``L rho = 0`` with one
  equation replaced by ``trace(rho) = 1``;
* a weak-drive linear route that solves for the three coherent amplitudes
  <a_cw>, <a_ccw>, <sigma> with the emitter held in its ground state.

For the structured model Liouvillian the full solve uses GMRES with an exact
inverse of the undriven, dephasing-jump-free generator as preconditioner.
That generator maps the (bra, ket) excitation sector (p, q) only onto itself
and onto (p - 1, q - 1), so it is inverted by back-substitution from the
highest sectors down, each block being a Sylvester equation in the sector's
non-Hermitian effective Hamiltonian.  A laser detuning only shifts each
sector's effective Hamiltonian by a multiple of the identity, so the
eigendecompositions are computed once per model.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .model import DriveSpec, SystemParams, build_collapse_ops, hamiltonian_parts
from .operators import HilbertLayout, dagger
from .units import GHZ, PM, angular_detuning, wavelength_detuning

log = logging.getLogger(__name__)

TRUNCATION_LIMIT = 1e-4
DIRECT_LIMIT = 6000  # largest d^2 solved by plain sparse LU in the generic path
CHUNK = 16  # grid points sharing a warm start; fixed so results do not depend on threading


class SolverError(RuntimeError):
    def __init__(self, message, residual=math.nan, point=None):
        super().__init__(message)
        self.residual = residual
        self.point = point


@dataclass
class SteadyState:
    rho: np.ndarray
    residual: float
    trace_error: float
    min_eigenvalue: float
    top_fock_population: float = 0.0
    iterations: int = 0
    layout: HilbertLayout | None = None
    vector: np.ndarray | None = field(default=None, repr=False)

    @property
    def truncated(self) -> bool:
        return self.top_fock_population > TRUNCATION_LIMIT

    def expect(self, op) -> complex:
        return complex((op @ self.rho).trace())


def _trace_row(d: int) -> np.ndarray:
    return np.arange(d) * (d + 1)


def _replace_first_row_with_trace(superop) -> sp.csr_matrix:
    d2 = superop.shape[0]
    d = math.isqrt(d2)
    coo = sp.coo_matrix(superop)
    keep = coo.row != 0
    rows = np.concatenate([coo.row[keep], np.zeros(d, dtype=int)])
    cols = np.concatenate([coo.col[keep], _trace_row(d)])
    vals = np.concatenate([coo.data[keep], np.ones(d, dtype=complex)])
    return sp.csr_matrix((vals, (rows, cols)), shape=superop.shape)


def _top_fock_population(rho: np.ndarray, layout: HilbertLayout | None) -> float:
    if layout is None:
        return 0.0
    qn = layout.quantum_numbers()
    top = (qn[:, 0] == layout.n_max) | (qn[:, 1] == layout.n_max)
    return float(np.real(np.diag(rho)[top].sum()))


def _finish(x: np.ndarray, superop, layout, iterations=0) -> SteadyState:
    d = math.isqrt(x.size)
    rho = x.reshape(d, d)
    trace_error = abs(np.trace(rho) - 1.0)
    rho = 0.5 * (rho + rho.conj().T)
    rho = rho / np.real(np.trace(rho))
    residual = float(np.linalg.norm(superop @ rho.ravel()))
    min_eig = float(np.linalg.eigvalsh(rho)[0])
    return SteadyState(
        rho=rho,
        residual=residual,
        trace_error=float(trace_error),
        min_eigenvalue=min_eig,
        top_fock_population=_top_fock_population(rho, layout),
        iterations=iterations,
        layout=layout,
        vector=x,
    )


def steady_state(superop, layout: HilbertLayout | None = None, rate_scale: float | None = None) -> SteadyState:
    """Steady state of a generic Liouvillian by sparse LU with one refinement step.

    ``rate_scale`` divides the generator before solving; by default its
    largest entry sets the scale.  The reported residual is that of the
    scaled generator.
    """
    superop = sp.csr_matrix(superop)
    if rate_scale is None:
        rate_scale = float(np.abs(superop.data).max()) if superop.nnz else 1.0
    scaled = superop / rate_scale
    d2 = scaled.shape[0]
    d = math.isqrt(d2)
    if d * d != d2:
        raise ValueError("superoperator dimension is not a perfect square")
    if d2 > DIRECT_LIMIT:
        log.warning("direct steady-state solve of dimension %d may be slow", d2)
    a = _replace_first_row_with_trace(scaled).tocsc()
    b = np.zeros(d2, dtype=complex)
    b[0] = 1.0
    try:
        lu = spla.splu(a)
    except RuntimeError as exc:
        raise SolverError(f"singular steady-state system: {exc}") from exc
    x = lu.solve(b)
    x = x + lu.solve(b - a @ x)
    state = _finish(x, scaled, layout)
    if not np.isfinite(state.residual) or state.residual > 1e-8:
        raise SolverError(f"steady-state residual {state.residual:.3e} too large", state.residual)
    return state


class _SectorPreconditioner:
    """Exact inverse of the undriven generator without same-sector jumps (see module docstring)."""

    def __init__(self, h_static, collapse, excitation: np.ndarray):
        d = h_static.shape[0]
        self.d = d
        self.perm = np.argsort(excitation, kind="stable")
        exc = excitation[self.perm]
        self.n_sectors = int(exc.max()) + 1
        bounds = np.searchsorted(exc, np.arange(self.n_sectors + 1))
        self.slices = [slice(bounds[m], bounds[m + 1]) for m in range(self.n_sectors)]

        h = sp.csr_matrix(h_static)[self.perm][:, self.perm].toarray()
        loss = np.zeros((d, d), dtype=complex)
        self.jumps = []
        for c in collapse:
            c = sp.csr_matrix(c)[self.perm][:, self.perm].toarray()
            loss += c.conj().T @ c
            rows, cols = np.nonzero(c)
            if rows.size and np.all(exc[rows] == exc[cols] - 1):
                self.jumps.append([c[self.slices[m], self.slices[m + 1]] for m in range(self.n_sectors - 1)])
        h_eff = h - 0.5j * loss

        self.eig = []
        self.h_blocks = []
        for m, s in enumerate(self.slices):
            block = h_eff[s, s]
            w, v = np.linalg.eig(block)
            cond = np.linalg.cond(v)
            if cond > 1e8:
                self.eig.append(None)
            else:
                self.eig.append((w, v, np.linalg.inv(v), v.conj().T))
            self.h_blocks.append(block)

        # (p, q) visiting order: every (p + 1, q + 1) before (p, q)
        self.order = sorted(
            ((p, q) for p in range(self.n_sectors) for q in range(self.n_sectors)),
            key=lambda pq: -(pq[0] + pq[1]),
        )
        self.inv_perm = np.argsort(self.perm)

    def operator(self, shift: float) -> spla.LinearOperator:
        """Preconditioner for a laser detuning that adds ``-shift * excitation`` to H."""
        ns = self.n_sectors
        eig = []
        for m in range(ns):
            e = self.eig[m]
            eig.append(None if e is None else (e[0] - shift * m,) + e[1:])
        h_shift = [self.h_blocks[m] - shift * m * np.eye(self.h_blocks[m].shape[0]) for m in range(ns)]
        perm, inv, sl, jumps = self.perm, self.inv_perm, self.slices, self.jumps
        d = self.d

        def apply(r):
            r = np.asarray(r).reshape(d, d)[perm][:, perm]
            x = np.zeros((d, d), dtype=complex)
            for p, q in self.order:
                if p == 0 and q == 0:
                    x[0, 0] = r[0, 0] - np.trace(x)
                    continue
                sp_, sq = sl[p], sl[q]
                rhs = r[sp_, sq].copy()
                if p + 1 < ns and q + 1 < ns:
                    upper = x[sl[p + 1], sl[q + 1]]
                    for blocks in jumps:
                        rhs -= blocks[p] @ upper @ blocks[q].conj().T
                ep, eq = eig[p], eig[q]
                if ep is not None and eq is not None:
                    wp, vp, vpi, _ = ep
                    wq, vq, vqi, vqh = eq
                    y = 1j * (vpi @ rhs @ vqi.conj().T) / (wp[:, None] - wq.conj()[None, :])
                    x[sp_, sq] = vp @ y @ vqh
                else:
                    x[sp_, sq] = la.solve_sylvester(-1j * h_shift[p], 1j * h_shift[q].conj().T, rhs)
            return x[inv][:, inv].ravel()

        return spla.LinearOperator((d * d, d * d), matvec=apply, dtype=complex)


class QMESolver:
    """Full master-equation steady states of one model at arbitrary laser detunings."""

    def __init__(
        self,
        params: SystemParams,
        drive: DriveSpec | None = None,
        layout: HilbertLayout | None = None,
        ccw_phase: float = 0.0,
        tol: float = 1e-12,
    ):
        self.params = params
        self.drive = drive
        self.layout = layout or HilbertLayout()
        self.tol = tol
        scale = GHZ
        self.scale = scale
        parts = hamiltonian_parts(params, self.layout, ccw_phase)
        self.ops = parts.ops
        c_ops = [c / math.sqrt(scale) for c in build_collapse_ops(params, self.layout, parts.ops)]
        h = parts.static / scale
        if drive is not None:
            h = h + (drive.amplitude(params) / scale) * parts.drive
        d = self.layout.dim
        eye = sp.identity(d, format="csr", dtype=complex)
        generator = -1j * (sp.kron(h, eye) - sp.kron(eye, h.T))
        for c in c_ops:
            cdc = c.conj().T @ c
            generator = generator + sp.kron(c, c.conj()) - 0.5 * sp.kron(cdc, eye) - 0.5 * sp.kron(eye, cdc.T)
        self.generator = sp.csr_matrix(generator)
        exc = self.layout.excitation_numbers()
        # -i[-shift * N, rho] = i shift (N_bra - N_ket)
        self.shift_diag = (1j * (exc[:, None] - exc[None, :])).ravel().astype(complex)
        self.system = _replace_first_row_with_trace(self.generator)
        self.shift_diag_sys = self.shift_diag.copy()
        self.shift_diag_sys[0] = 0.0
        self.precond = _SectorPreconditioner(parts.static / scale, c_ops, exc)
        self.b = np.zeros(d * d, dtype=complex)
        self.b[0] = 1.0

    def _shift(self, laser_detuning: float | None) -> float:
        if laser_detuning is None:
            laser_detuning = self.params.laser_exciton_detuning
        return laser_detuning / self.scale

    def superoperator(self, laser_detuning: float | None = None) -> sp.csr_matrix:
        """Scaled generator (units of 2 pi GHz) at laser-exciton detuning ``laser_detuning`` (rad/s)."""
        return self.generator + sp.diags(self._shift(laser_detuning) * self.shift_diag)

    def solve(self, laser_detuning: float | None = None, x0: np.ndarray | None = None) -> SteadyState:
        shift = self._shift(laser_detuning)
        system, diag = self.system, shift * self.shift_diag_sys
        a = spla.LinearOperator(system.shape, matvec=lambda v: system @ v + diag * v, dtype=complex)
        m = self.precond.operator(shift)
        counter = [0]

        def count(_):
            counter[0] += 1

        x = x0
        for _ in range(3):
            x, info = spla.gmres(
                a, self.b, x0=x, rtol=self.tol, atol=0.0, restart=100, maxiter=20, M=m,
                callback=count, callback_type="pr_norm",
            )
            if np.linalg.norm(a @ x - self.b) <= 10 * self.tol:
                break
        res = float(np.linalg.norm(a @ x - self.b))
        if not np.isfinite(res) or res > 1e-9:
            raise SolverError(f"GMRES did not converge (residual {res:.3e})", res)
        generator = self.generator + sp.diags(shift * self.shift_diag)
        return _finish(x, generator, self.layout, counter[0])


@dataclass(frozen=True)
class PointObservables:
    transmission: float
    reflection: float
    n_cw: float
    n_ccw: float
    exciton: float
    a_cw: complex

    @property
    def n_cav(self) -> float:
        return self.n_cw + self.n_ccw


def observables(state: SteadyState, params: SystemParams, drive: DriveSpec, ops=None) -> PointObservables:
    """Transmission and reflection normalized to input power, plus populations.

    T = <(s - 2 sqrt(ke) a_cw)^+ (s - 2 sqrt(ke) a_cw)> / |s|^2 and
    R = 4 ke <n_ccw> / |s|^2, so incoherent emission is included.
    """
    if ops is None:
        from .operators import ModeOperators

        ops = ModeOperators.for_layout(state.layout or HilbertLayout(math.isqrt(state.rho.shape[0] // 2) - 1))
    flux = drive.flux
    if flux <= 0:
        raise ValueError("normalized observables are undefined for zero drive")
    a_cw = state.expect(ops.a_cw)
    n_cw = state.expect(dagger(ops.a_cw) @ ops.a_cw).real
    n_ccw = state.expect(dagger(ops.a_ccw) @ ops.a_ccw).real
    pe = state.expect(dagger(ops.sigma) @ ops.sigma).real
    ke = params.kappa_e
    s = math.sqrt(flux)
    t = 1.0 - 4.0 * math.sqrt(ke) * s * a_cw.real / flux + 4.0 * ke * n_cw / flux
    r = 4.0 * ke * n_ccw / flux
    return PointObservables(float(t), float(r), float(n_cw), float(n_ccw), float(pe), a_cw)


@dataclass
class Spectrum:
    """Per-point observables on a grid of laser-exciton wavelength offsets (pm).

    ``transmission`` and ``reflection`` are normalized to the input power at
    the coupling region (absolute signals); :meth:`normalized` gives the
    unity-normalized view.
    """

    detuning_pm: np.ndarray
    transmission: np.ndarray
    reflection: np.ndarray
    n_cw: np.ndarray
    n_ccw: np.ndarray
    exciton: np.ndarray
    wavelength: float
    truncated: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        arrays = [np.asarray(getattr(self, k), dtype=float) for k in CHANNELS]
        n = arrays[0].size
        if any(a.shape != (n,) for a in arrays):
            raise ValueError("spectrum arrays must be one-dimensional and of equal length")
        for k, a in zip(CHANNELS, arrays):
            setattr(self, k, a)
        if self.truncated is None:
            self.truncated = np.zeros(n, dtype=bool)
        self.truncated = np.asarray(self.truncated, dtype=bool)

    def __len__(self) -> int:
        return self.detuning_pm.size

    @property
    def detuning_omega(self) -> np.ndarray:
        """omega_l - omega_a in rad/s for each grid point."""
        return angular_detuning(self.detuning_pm * PM, self.wavelength)

    @property
    def n_cav(self) -> np.ndarray:
        return self.n_cw + self.n_ccw

    def channel(self, name: str) -> np.ndarray:
        key = {"T": "transmission", "R": "reflection"}.get(name, name)
        if key == "n_cav":
            return self.n_cav
        if key not in CHANNELS:
            raise KeyError(f"unknown channel {name!r}")
        return getattr(self, key)

    def normalized(self, name: str) -> np.ndarray:
        y = self.channel(name)
        peak = np.max(np.abs(y))
        return y / peak if peak > 0 else y.copy()


CHANNELS = ("detuning_pm", "transmission", "reflection", "n_cw", "n_ccw", "exciton")


def default_grid(params: SystemParams, points: int = 401, span_kappa: float = 6.0) -> np.ndarray:
    """Laser offsets (pm) spanning +-span_kappa * kappa_T around the cavity/exciton midpoint."""
    half = abs(wavelength_detuning(span_kappa * params.kappa_t, params.wavelength)) / PM
    center = 0.5 * params.detuning_ca / PM
    return np.linspace(center - half, center + half, points)


def _weak_drive_matrix(params: SystemParams, grid_pm) -> tuple[np.ndarray, np.ndarray]:
    """Per-point one-excitation effective Hamiltonian K (shape (n, 3, 3)) and laser detunings."""
    grid = np.atleast_1d(np.asarray(grid_pm, dtype=float))
    if grid.size == 0:
        raise ValueError("grid must not be empty")
    if params.kappa_t == 0 and params.gamma_perp == 0:
        raise ValueError("weak-drive system is singular without any loss")
    laser = angular_detuning(grid * PM, params.wavelength)
    bs = -params.gamma_beta * np.exp(1j * params.xi)
    g = params.g_tw
    k = np.zeros((grid.size, 3, 3), dtype=complex)
    k[:, 0, 0] = k[:, 1, 1] = params.cavity_exciton_detuning - laser - 1j * params.kappa_t
    k[:, 2, 2] = -laser - 1j * params.gamma_perp
    k[:, 0, 1] = bs
    k[:, 1, 0] = np.conj(bs)
    k[:, 0, 2] = k[:, 1, 2] = k[:, 2, 0] = k[:, 2, 1] = g
    return k, laser


def weak_drive_amplitudes(params: SystemParams, grid_pm) -> np.ndarray:
    """Coherent amplitudes (a_cw, a_ccw, sigma) per unit input amplitude s, shape (n, 3).

    Solves (i K) x = 2 sqrt(ke) e_cw with the emitter unsaturated.
    """
    k, _ = _weak_drive_matrix(params, grid_pm)
    rhs = np.zeros((k.shape[0], 3, 1), dtype=complex)
    rhs[:, 0, 0] = 2.0 * math.sqrt(params.kappa_e)
    return np.linalg.solve(1j * k, rhs)[..., 0]


def weak_drive_populations(params: SystemParams, grid_pm, amplitudes: np.ndarray | None = None) -> np.ndarray:
    """One-excitation density block per unit flux |s|^2 = 1, shape (n, 3, 3).

    Lowest nonvanishing order in the drive of the master equation: the block
    P obeys 0 = -i(K P - P K^+) + 2 gp D P D + E (e c^+ + c e^+), with c the
    coherent amplitudes and D the emitter projector.  Pure dephasing makes P
    differ from c c^+; the difference is the incoherently scattered light.
    """
    k, _ = _weak_drive_matrix(params, grid_pm)
    c = weak_drive_amplitudes(params, grid_pm) if amplitudes is None else amplitudes
    n = k.shape[0]
    e_amp = 2.0 * math.sqrt(params.kappa_e)
    eye = np.eye(3)
    dproj = np.diag([0.0, 0.0, 1.0])
    # row-major vec: vec(K P) = (K x I) p, vec(P K^+) = (I x conj(K)) p
    m = -1j * (np.einsum("nij,kl->nikjl", k, eye) - np.einsum("ij,nkl->nikjl", eye, k.conj()))
    m = m.reshape(n, 9, 9) + 2.0 * params.gamma_p * np.kron(dproj, dproj)
    src = np.zeros((n, 3, 3), dtype=complex)
    src[:, 0, :] += e_amp * c.conj()
    src[:, :, 0] += e_amp * c
    p = np.linalg.solve(m, -src.reshape(n, 9, 1))
    p = p.reshape(n, 3, 3)
    return 0.5 * (p + p.conj().transpose(0, 2, 1))


def weak_drive_spectrum(params: SystemParams, grid_pm=None, drive: DriveSpec | None = None) -> Spectrum:
    """Lowest-order spectrum in the drive strength.

    Transmission and reflection include the incoherent part, so this is the
    exact small-drive limit of :func:`spectrum`.  Populations need ``drive``;
    without it they are NaN.
    """
    grid = default_grid(params) if grid_pm is None else np.asarray(grid_pm, dtype=float)
    amp = weak_drive_amplitudes(params, grid)
    pop = weak_drive_populations(params, grid, amp).real
    ke = params.kappa_e
    t = 1.0 - 4.0 * math.sqrt(ke) * amp[:, 0].real + 4.0 * ke * pop[:, 0, 0]
    r = 4.0 * ke * pop[:, 1, 1]
    flux = drive.flux if drive is not None else math.nan
    return Spectrum(
        detuning_pm=grid,
        transmission=t,
        reflection=r,
        n_cw=flux * pop[:, 0, 0],
        n_ccw=flux * pop[:, 1, 1],
        exciton=flux * pop[:, 2, 2],
        wavelength=params.wavelength,
        meta={"method": "weak-drive", "params": params.to_json_dict()},
    )


def coherent_spectrum(params: SystemParams, grid_pm=None) -> Spectrum:
    """Coherent (elastic) part only: |1 - 2 sqrt(ke) a_cw|^2 and 4 ke |a_ccw|^2 at unit flux."""
    grid = default_grid(params) if grid_pm is None else np.asarray(grid_pm, dtype=float)
    amp = weak_drive_amplitudes(params, grid)
    ke = params.kappa_e
    pops = np.abs(amp) ** 2
    return Spectrum(
        detuning_pm=grid,
        transmission=np.abs(1.0 - 2.0 * math.sqrt(ke) * amp[:, 0]) ** 2,
        reflection=4.0 * ke * pops[:, 1],
        n_cw=pops[:, 0],
        n_ccw=pops[:, 1],
        exciton=pops[:, 2],
        wavelength=params.wavelength,
        meta={"method": "coherent", "params": params.to_json_dict()},
    )


def spectrum(
    params: SystemParams,
    drive: DriveSpec,
    grid_pm=None,
    n_max: int = 8,
    threads: int = 1,
    states: list | None = None,
) -> Spectrum:
    """Full master-equation spectrum at fixed drive.

    Solver failures raise :class:`SolverError` with ``point`` set to the
    offending grid index.  Pass a list as ``states`` to collect the
    :class:`SteadyState` of every point.
    """
    grid = default_grid(params) if grid_pm is None else np.asarray(grid_pm, dtype=float)
    solver = QMESolver(params, drive, HilbertLayout(n_max))
    laser = angular_detuning(grid * PM, params.wavelength)

    def run(chunk):
        out, x0 = [], None
        for i in chunk:
            try:
                st = solver.solve(float(laser[i]), x0=x0)
            except SolverError as exc:
                exc.point = int(i)
                raise SolverError(f"grid point {i} ({grid[i]:.3f} pm): {exc}", exc.residual, int(i)) from exc
            x0 = st.vector
            out.append((i, st, observables(st, params, drive, solver.ops)))
        return out

    chunks = [range(k, min(k + CHUNK, grid.size)) for k in range(0, grid.size, CHUNK)]
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            results = [r for part in pool.map(run, chunks) for r in part]
    else:
        results = [r for c in chunks for r in run(c)]
    results.sort(key=lambda item: item[0])
    obs = [r[2] for r in results]
    if states is not None:
        states.extend(r[1] for r in results)
    return Spectrum(
        detuning_pm=grid,
        transmission=np.array([o.transmission for o in obs]),
        reflection=np.array([o.reflection for o in obs]),
        n_cw=np.array([o.n_cw for o in obs]),
        n_ccw=np.array([o.n_ccw for o in obs]),
        exciton=np.array([o.exciton for o in obs]),
        wavelength=params.wavelength,
        truncated=np.array([r[1].truncated for r in results]),
        meta={
            "method": "master-equation",
            "n_max": n_max,
            "params": params.to_json_dict(),
            "input_power_w": drive.input_power,
            "max_residual": max(r[1].residual for r in results),
            "max_top_fock": max(r[1].top_fock_population for r in results),
        },
    )
