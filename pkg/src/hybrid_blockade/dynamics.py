"""Master-equation numerics: Liouvillians, steady states and correlators.

Density matrices are vectorized row-major, ``vec(rho)[i*n + j] = rho[i, j]``,
so that ``vec(A rho B) = (A kron B^T) vec(rho)``.

When a Liouvillian carries a :class:`~hybrid_blockade.model.Frame` (a
diagonal generator K commuting with it), all work is done inside the
charge sectors ``{(i, j): q_i - q_j = d}``, which the Liouvillian maps to
themselves. The steady state lives in sector 0. Correlators of operators
that shift the charge pick up the explicit phases ``exp(-i omega d tau)``
of the frame, so the 2 G_m oscillations never have to be integrated.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.integrate import solve_ivp

from .fockspace import CompositeSpace, DensityMatrix, SparseOperator, SpaceMismatchError, number_distribution
from .model import DissipatorSpec, Frame, SystemParams

log = logging.getLogger(__name__)

OCCUPATION_FLOOR = 1e-12
PROBABILITY_FLOOR = 1e-14
DIRECT_SIZE_LIMIT = 5_000
GMRES_MAX_RESTARTS = 20
ROUNDOFF_EIGENVALUE = 1e-13


class SolverError(RuntimeError):
    pass


class OccupationUnderflow(ValueError):
    pass


@dataclass
class Liouvillian:
    space: CompositeSpace
    matrix: sp.csr_matrix = field(repr=False)
    frame: Optional[Frame] = None
    hamiltonian: Optional[SparseOperator] = field(default=None, repr=False)
    dissipators: tuple = field(default=(), repr=False)

    @property
    def n(self) -> int:
        return self.space.size

    def apply(self, rho: np.ndarray) -> np.ndarray:
        return (self.matrix @ rho.reshape(-1)).reshape(self.n, self.n)

    def sector(self, diff: int = 0) -> np.ndarray:
        """Flat indices of vec(rho) entries with charge difference ``diff``."""
        if self.frame is None:
            if diff != 0:
                raise ValueError("charge sectors need a frame")
            return np.arange(self.n * self.n)
        q = self.frame.charge
        i, j = np.nonzero(q[:, None] - q[None, :] == diff)
        return i * self.n + j

    def restricted(self, idx: np.ndarray) -> sp.csc_matrix:
        sub = self.matrix[idx]
        return sub[:, idx].tocsc()

    def trace_rows(self) -> np.ndarray:
        """Row vector tr∘L; vanishes for a trace-preserving generator."""
        diag = np.arange(self.n) * (self.n + 1)
        return np.asarray(self.matrix[diag].sum(axis=0)).ravel()


def build_liouvillian(H: SparseOperator, dissipators: Sequence[DissipatorSpec], frame: Optional[Frame] = None) -> Liouvillian:
    """-i[H, .] + sum rate * (2 c . c^dag - c^dag c . - . c^dag c)."""
    space = H.space
    n = space.size
    eye = sp.identity(n, dtype=complex, format="csr")
    h = H.matrix
    L = -1j * (sp.kron(h, eye) - sp.kron(eye, h.T))
    for d in dissipators:
        if d.operator.space != space:
            raise SpaceMismatchError(f"dissipator {d.label!r} lives on {d.operator.space}")
        if d.rate == 0:
            continue
        c = d.operator.matrix
        cdc = (c.conj().T @ c).tocsr()
        L = L + d.rate * (2 * sp.kron(c, c.conj()) - sp.kron(cdc, eye) - sp.kron(eye, cdc.T))
    L = sp.csr_matrix(L)
    L.eliminate_zeros()
    liou = Liouvillian(space, L, frame, H, tuple(dissipators))
    if frame is not None:
        _check_sector_closure(liou)
    return liou


def _check_sector_closure(L: Liouvillian):
    q = L.frame.charge
    coo = L.matrix.tocoo()
    n = L.n
    row_diff = q[coo.row // n] - q[coo.row % n]
    col_diff = q[coo.col // n] - q[coo.col % n]
    if np.any(row_diff != col_diff):
        raise SolverError("frame charge is not conserved by the Liouvillian")


def _finalize_density(space: CompositeSpace, rho: np.ndarray, check_positivity: bool = True) -> DensityMatrix:
    rho = 0.5 * (rho + rho.conj().T)
    tr = np.real(np.trace(rho))
    if not tr > 0:
        raise SolverError(f"steady state has non-positive trace {tr}")
    rho = rho / tr
    if check_positivity:
        w, v = np.linalg.eigh(rho)
        if w.min() < -1e-10:
            raise SolverError(f"steady state not positive: min eigenvalue {w.min():.3e}")
        # eigenvalues at round-off level are left alone: rebuilding rho from
        # its eigenbasis would smear ~1e-16 noise over the tiny multi-photon
        # elements that g2 depends on
        if w.min() < -ROUNDOFF_EIGENVALUE:
            w = np.clip(w, 0, None)
            rho = (v * w) @ v.conj().T
            rho = 0.5 * (rho + rho.conj().T)
            rho /= np.real(np.trace(rho))
    return DensityMatrix(space, rho)


@dataclass
class SteadyStateInfo:
    residual: float
    method: str
    unknowns: int
    iterations: int = 0


class SylvesterPreconditioner:
    """Exact inverse of the no-jump part of a Liouvillian on one charge sector.

    The no-jump part is X -> -i (K X - X K^dag) with the non-Hermitian
    K = H - i sum_k rate_k c_k^dag c_k. K is block diagonal in the frame
    charge, so it is diagonalized block by block and the Sylvester equation
    is solved in those eigenbases.
    """

    def __init__(self, L: "Liouvillian", diff: int = 0):
        if L.hamiltonian is None:
            raise SolverError("preconditioner needs the Hamiltonian and dissipators")
        n = L.n
        K = L.hamiltonian.matrix.astype(complex)
        for d in L.dissipators:
            c = d.operator.matrix
            K = K - 1j * d.rate * (c.conj().T @ c)
        K = K.toarray()
        q = np.zeros(n, dtype=int) if L.frame is None else L.frame.charge
        eig = {}
        for qv in np.unique(q):
            I = np.flatnonzero(q == qv)
            w, V = np.linalg.eig(K[np.ix_(I, I)])
            eig[int(qv)] = (I, w, V, np.linalg.inv(V))
        self.n = n
        self.idx = L.sector(diff)
        self.pairs = []
        for qv, (I, w, V, Vinv) in eig.items():
            if qv - diff not in eig:
                continue
            J, u, W, Winv = eig[qv - diff]
            den = -1j * (w[:, None] - u.conj()[None, :])
            self.pairs.append((I, J, V, Vinv, W.conj().T, Winv.conj().T, den))

    def __call__(self, y: np.ndarray) -> np.ndarray:
        Y = np.zeros((self.n, self.n), dtype=complex)
        Y.reshape(-1)[self.idx] = y
        X = np.zeros_like(Y)
        for I, J, V, Vinv, Wh, Winvh, den in self.pairs:
            Yt = Vinv @ Y[np.ix_(I, J)] @ Winvh
            X[np.ix_(I, J)] = V @ (Yt / den) @ Wh
        return X.reshape(-1)[self.idx]


def steady_state(L: Liouvillian, method: str = "auto", check_positivity: bool = True,
                 tol: float = 1e-13, return_info: bool = False):
    """Stationary density matrix of ``L`` with unit trace.

    The equation for the first diagonal entry of the sector is replaced by
    the trace functional. Small systems are factorized by sparse LU; larger
    ones go through GMRES preconditioned with :class:`SylvesterPreconditioner`.
    """
    n = L.n
    idx = L.sector(0)
    A = L.restricted(idx).tolil()
    is_diag = (idx // n) == (idx % n)
    k = int(np.flatnonzero(is_diag)[0])
    A[k, :] = is_diag.astype(complex)
    rhs = np.zeros(len(idx), dtype=complex)
    rhs[k] = 1.0
    if method == "auto":
        method = "direct" if len(idx) <= DIRECT_SIZE_LIMIT else "iterative"
    iterations = 0
    if method == "direct":
        try:
            x = spla.splu(A.tocsc(), permc_spec="COLAMD").solve(rhs)
        except RuntimeError as exc:
            raise SolverError(f"singular steady-state system: {exc}") from exc
    elif method == "iterative":
        A = A.tocsr()
        P = SylvesterPreconditioner(L, 0)
        M = spla.LinearOperator(A.shape, P, dtype=complex)
        counter = [0]

        def count(_):
            counter[0] += 1

        x, info = spla.gmres(A, rhs, M=M, rtol=tol, atol=0.0, restart=200,
                             maxiter=GMRES_MAX_RESTARTS, callback=count, callback_type="pr_norm")
        iterations = counter[0]
        if info != 0:
            raise SolverError(f"gmres did not converge after {iterations} iterations "
                              f"(residual {np.linalg.norm(A @ x - rhs):.3e})")
    else:
        raise ValueError(f"unknown method {method!r}")
    vec = np.zeros(n * n, dtype=complex)
    vec[idx] = x
    rho = vec.reshape(n, n)
    if not np.all(np.isfinite(rho)):
        raise SolverError("non-finite steady state (singular or non-unique stationary solution)")
    dm = _finalize_density(L.space, rho, check_positivity)
    res = float(np.linalg.norm(L.matrix @ dm.data.reshape(-1)))
    if res > 1e-8:
        raise SolverError(f"steady-state residual {res:.3e} too large (non-unique stationary state?)")
    log.debug("steady state: %s, %d unknowns, %d iterations, residual %.2e", method, len(idx), iterations, res)
    if return_info:
        return dm, SteadyStateInfo(res, method, len(idx), iterations)
    return dm


def propagate(L: Liouvillian, rho0: np.ndarray, t_grid: Sequence[float]) -> np.ndarray:
    """rho(t) = exp(L t) rho0 on an ascending grid starting at 0 or later."""
    t = np.asarray(t_grid, dtype=float)
    out = _expm_series(L.matrix.tocsr(), np.asarray(rho0, dtype=complex).reshape(-1), t)
    return out.reshape(len(t), L.n, L.n)


def _expm_series(A, v: np.ndarray, t: np.ndarray) -> np.ndarray:
    if t.ndim != 1 or len(t) == 0 or np.any(np.diff(t) < 0) or t[0] < 0:
        raise ValueError("time grid must be ascending and non-negative")
    out = np.empty((len(t), len(v)), dtype=complex)
    if len(t) > 2 and np.allclose(np.diff(t), t[1] - t[0], rtol=1e-9, atol=0):
        start = v if t[0] == 0 else spla.expm_multiply(A * t[0], v)
        out[:] = spla.expm_multiply(A, start, start=0.0, stop=t[-1] - t[0], num=len(t), endpoint=True)
        return out
    cur, prev = v, 0.0
    for k, tk in enumerate(t):
        if tk > prev:
            cur = spla.expm_multiply(A * (tk - prev), cur)
            prev = tk
        out[k] = cur
    return out


def expect(rho: DensityMatrix, op: SparseOperator) -> complex:
    return rho.expect(op)


def occupation(rho: DensityMatrix, c: SparseOperator) -> float:
    return float(np.real(rho.expect(c.dag() @ c)))


def g2_zero(rho: DensityMatrix, c: SparseOperator) -> float:
    """Equal-time <c^dag c^dag c c> / <c^dag c>^2."""
    n = occupation(rho, c)
    if n < OCCUPATION_FLOOR:
        raise OccupationUnderflow(f"<c^dag c> = {n:.3e} below floor {OCCUPATION_FLOOR}")
    cd = c.dag()
    num = float(np.real(rho.expect(cd @ cd @ c @ c)))
    return num / (n * n)


def _charge_components(c: SparseOperator, frame: Optional[Frame]) -> dict:
    if frame is None:
        return {0: c.matrix}
    coo = c.matrix.tocoo()
    q = frame.charge
    diffs = q[coo.row] - q[coo.col]
    parts = {}
    for d in np.unique(diffs):
        m = diffs == d
        parts[int(d)] = sp.csr_matrix((coo.data[m], (coo.row[m], coo.col[m])), shape=c.matrix.shape)
    return parts


def g2_tau(L: Liouvillian, rho_ss: DensityMatrix, c: SparseOperator, tau_grid: Sequence[float]) -> np.ndarray:
    """Delay correlator <c^dag(0) c^dag(tau) c(tau) c(0)> / <c^dag c>^2.

    Quantum regression: the conditional state c rho c^dag is propagated
    with ``L`` and read out with c^dag c. With a frame, ``L`` is the
    rotating-frame generator and each charge component is propagated in its
    own sector, then rotated back with its exact phase.
    """
    tau = np.asarray(tau_grid, dtype=float)
    n_occ = occupation(rho_ss, c)
    if n_occ < OCCUPATION_FLOOR:
        raise OccupationUnderflow(f"<c^dag c> = {n_occ:.3e} below floor {OCCUPATION_FLOOR}")
    n = L.n
    rho = rho_ss.data
    cdc = (c.matrix.conj().T @ c.matrix).tocsr()
    parts = _charge_components(c, L.frame)
    omega = 0.0 if L.frame is None else L.frame.omega
    total = np.zeros(len(tau), dtype=complex)
    for d1, c1 in parts.items():
        left = c1 @ rho
        for d2, c2 in parts.items():
            Y = np.asarray(c2.conj() @ left.T).T  # c1 rho c2^dag
            diff = d1 - d2
            idx = L.sector(diff)
            y = Y.reshape(-1)[idx]
            if not np.any(y):
                continue
            A = L.restricted(idx).tocsr()
            series = _expm_series(A, y, tau)
            # Tr(cdc Y) = sum_ij cdc[j, i] Y[i, j]
            w = np.asarray(cdc[idx % n, idx // n]).ravel()
            vals = series @ w
            total += np.exp(-1j * omega * diff * tau) * vals
    g = np.real(total) / n_occ**2
    return g


@dataclass
class YHistogram:
    N: np.ndarray
    P: np.ndarray
    poisson: np.ndarray
    y: np.ndarray
    valid: np.ndarray
    mean: float


def y_of_N(rho: DensityMatrix, subsystem: int, floor: float = PROBABILITY_FLOOR) -> YHistogram:
    """log10 of the Fock distribution relative to a Poisson law with the same mean."""
    P = number_distribution(rho, subsystem)
    N = np.arange(len(P))
    mean = float(np.dot(N, P))
    log_pp = -mean + N * math.log(mean) - np.array([math.lgamma(k + 1) for k in N]) if mean > 0 else np.where(N == 0, 0.0, -np.inf)
    Pp = np.exp(log_pp)
    valid = (P > floor) & (Pp > floor)
    y = np.full(len(P), np.nan)
    y[valid] = np.log10(P[valid]) - log_pp[valid] / math.log(10)
    return YHistogram(N, P, Pp, y, valid, mean)


def evolve_schrodinger(H: SparseOperator, psi0: np.ndarray, t_grid: Sequence[float],
                       observe: Optional[dict] = None, method: str = "auto",
                       rtol: float = 1e-9, atol: float = 1e-12) -> dict:
    """Unitary evolution; returns |<target|psi(t)>|^2 series for each named target ket.

    ``method="eigh"`` propagates exactly in the eigenbasis of H (small
    spaces), ``"rk"`` integrates with an adaptive Runge-Kutta (DOP853).
    A ``"norm"`` series is always included.
    """
    psi0 = np.asarray(psi0, dtype=complex)
    t = np.asarray(t_grid, dtype=float)
    if abs(np.linalg.norm(psi0) - 1) > 1e-10:
        raise ValueError("initial state must be normalized")
    if not H.is_hermitian(1e-12):
        raise ValueError("Hamiltonian is not Hermitian")
    if method == "auto":
        method = "eigh" if H.space.size <= 3000 else "rk"
    if method == "eigh":
        w, v = np.linalg.eigh(H.toarray())
        coeff = v.conj().T @ psi0
        states = (v @ (coeff[:, None] * np.exp(-1j * np.outer(w, t)))).T
    elif method == "rk":
        h = H.matrix
        sol = solve_ivp(lambda _, y: -1j * (h @ y), (t[0], t[-1]), psi0, method="DOP853",
                        t_eval=t, rtol=rtol, atol=atol)
        if not sol.success:
            raise SolverError(f"integrator failure: {sol.message}")
        states = sol.y.T
    else:
        raise ValueError(f"unknown method {method!r}")
    out = {"norm": np.linalg.norm(states, axis=1)}
    for name, ket in (observe or {}).items():
        out[name] = np.abs(states @ np.asarray(ket, dtype=complex).conj()) ** 2
    return out


def evolve_nonhermitian(params: SystemParams, psi0: Optional[np.ndarray], t_grid: Sequence[float],
                        rtol: float = 1e-9, atol: float = 1e-12) -> np.ndarray:
    """Integrate the weak-drive amplitude equations; rows are times, columns the nine amplitudes."""
    from .analytics import amplitude_matrix

    M = amplitude_matrix(params)
    y0 = np.zeros(9, dtype=complex)
    y0[0] = 1.0
    if psi0 is not None:
        y0 = np.asarray(psi0, dtype=complex)
        if y0.shape != (9,):
            raise ValueError("initial amplitudes must cover the nine-state basis")
    t = np.asarray(t_grid, dtype=float)
    sol = solve_ivp(lambda _, y: -1j * (M @ y), (t[0], t[-1]), y0, method="DOP853",
                    t_eval=t, rtol=rtol, atol=atol)
    if not sol.success:
        raise SolverError(f"integrator failure: {sol.message}")
    return sol.y.T
