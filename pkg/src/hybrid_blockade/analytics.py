"""Closed-form few-excitation results used as oracles for the numerics.

The nine-state basis, in order, is

    g000, g100, g011, e000, g200, g111, e100, g022, e011

(atom state, then n_+, n_-, n_b).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .model import SystemParams

BASIS_LABELS = ("g000", "g100", "g011", "e000", "g200", "g111", "e100", "g022", "e011")
BASIS_LEVELS = (
    (0, 0, 0, 0), (0, 1, 0, 0), (0, 0, 1, 1), (1, 0, 0, 0),
    (0, 2, 0, 0), (0, 1, 1, 1), (1, 1, 0, 0), (0, 0, 2, 2), (1, 0, 1, 1),
)
EIGEN_LABELS = ("0", "1_0", "1_-", "1_+", "2_0", "2_1-", "2_1+", "2_2-", "2_2+")

SQ2 = math.sqrt(2.0)


class DegenerateParameters(ValueError):
    pass


class SingularConfiguration(ValueError):
    pass


class UndefinedCorrelator(ValueError):
    pass


def betas(eta: float, eta_a: float) -> tuple[float, float, float, float]:
    e2, a2 = eta * eta, eta_a * eta_a
    D = math.sqrt(a2 * a2 + 26 * a2 * e2 + 25 * e2 * e2)
    b1 = math.sqrt(a2 + e2)
    b2 = math.sqrt(max((3 * a2 + 7 * e2 - D) / 2, 0.0))
    b3 = math.sqrt((3 * a2 + 7 * e2 + D) / 2)
    return b1, b2, b3, D


def block_hamiltonian(params: SystemParams, drive: bool = False) -> np.ndarray:
    """H_eff restricted to the nine-state basis, in the frame without the 2 G_m scale.

    Without drive this block is exact: it is closed under H_eff. With
    ``drive=True`` only the excitation-raising half of the drive is kept,
    which is the weak-drive truncation of the amplitude equations.
    """
    D, eta, ea = params.Delta, params.eta, params.eta_a
    H = np.zeros((9, 9))
    H[np.arange(1, 4), np.arange(1, 4)] = D
    H[np.arange(4, 9), np.arange(4, 9)] = 2 * D
    pairs = [
        (1, 2, -eta), (1, 3, ea),
        (4, 5, -SQ2 * eta), (4, 6, SQ2 * ea), (5, 7, -2 * eta),
        (5, 8, ea), (6, 8, -eta),
    ]
    for i, j, v in pairs:
        H[i, j] = H[j, i] = v
    if drive:
        H = H.astype(complex)
        Om = params.Omega_e
        H[3, 0] = Om  # g000 -> e000
        H[6, 1] = Om  # g100 -> e100
        H[8, 2] = Om  # g011 -> e011
    return H


@dataclass
class SpectrumResult:
    eigenvalues: dict
    betas: tuple
    dressed_states: dict

    def as_arrays(self):
        vals = np.array([self.eigenvalues[k] for k in EIGEN_LABELS])
        vecs = np.array([self.dressed_states[k] for k in EIGEN_LABELS]).T
        return vals, vecs


def _dense_two_excitation(params: SystemParams) -> dict:
    H = block_hamiltonian(params)[4:, 4:] - 2 * params.Delta * np.eye(5)
    w, v = np.linalg.eigh(H)
    b1, b2, b3, _ = betas(params.eta, params.eta_a)
    targets = {"2_0": 0.0, "2_1-": -b2, "2_1+": b2, "2_2-": -b3, "2_2+": b3}
    out = {}
    used = set()
    for label, t in targets.items():
        k = min((k for k in range(5) if k not in used), key=lambda k: abs(w[k] - t))
        used.add(k)
        vec = v[:, k]
        # fix the sign: last nonzero listed component positive
        nz = np.flatnonzero(np.abs(vec) > 1e-12)
        vec = vec * np.sign(vec[nz[-1]])
        full = np.zeros(9)
        full[4:] = vec
        out[label] = full
    return out


def spectrum(params: SystemParams) -> SpectrumResult:
    """Few-excitation eigenvalues and dressed states of H_eff (no drive).

    For eta == 0 or eta_a == 0 the printed coefficient tables divide by zero,
    so the two-excitation states then come from dense diagonalization.
    """
    eta, ea, Dl = params.eta, params.eta_a, params.Delta
    if eta == 0 and ea == 0:
        raise DegenerateParameters("eta and eta_a both zero: dressed states undefined")
    b1, b2, b3, D = betas(eta, ea)
    vals = {
        "0": 0.0, "1_0": Dl, "1_-": Dl - b1, "1_+": Dl + b1,
        "2_0": 2 * Dl, "2_1-": 2 * Dl - b2, "2_1+": 2 * Dl + b2,
        "2_2-": 2 * Dl - b3, "2_2+": 2 * Dl + b3,
    }

    def vec(**c):
        v = np.zeros(9)
        for k, x in c.items():
            v[BASIS_LABELS.index(k)] = x
        return v

    states = {
        "0": vec(g000=1.0),
        "1_0": vec(g011=ea / b1, e000=eta / b1),
        "1_-": vec(g100=1 / SQ2, g011=eta / b1 / SQ2, e000=-ea / b1 / SQ2),
        "1_+": vec(g100=1 / SQ2, g011=-eta / b1 / SQ2, e000=ea / b1 / SQ2),
    }
    b1s = b1 * b1
    M1, M2 = 3 * b1s - D, 3 * b1s + D
    tiny = 1e-13 * (b1s + D)
    if eta == 0 or ea == 0 or abs(M1) < tiny:
        states.update(_dense_two_excitation(params))
    else:
        e2, a2 = eta * eta, ea * ea
        A1 = math.sqrt(b1s * b1s + 2 * e2 * e2) / (SQ2 * e2)
        states["2_0"] = vec(g200=1, g022=(a2 - e2) / (SQ2 * e2), e011=SQ2 * ea / eta) / A1
        d11 = b1s * (D - 5 * e2 - a2) / (SQ2 * ea * eta * M1)
        d12 = b2 * (-5 * b1s + D) / (2 * ea * M1)
        d13 = b2 * (b1s - D) / (2 * eta * M1)
        d14 = eta * (D - 5 * b1s) / (ea * M1)
        d21 = -b1s * (D + 5 * e2 + a2) / (SQ2 * ea * eta * M2)
        d22 = -b3 * (5 * b1s + D) / (2 * ea * M2)
        d23 = b3 * (b1s + D) / (2 * eta * M2)
        d24 = -eta * (D + 5 * b1s) / (ea * M2)
        A2 = math.sqrt(d11**2 + d12**2 + d13**2 + d14**2 + 1)
        A3 = math.sqrt(d21**2 + d22**2 + d23**2 + d24**2 + 1)
        states["2_1-"] = vec(g200=d11, g111=d12, e100=d13, g022=d14, e011=1) / A2
        states["2_1+"] = vec(g200=d11, g111=-d12, e100=-d13, g022=d14, e011=1) / A2
        states["2_2-"] = vec(g200=d21, g111=d22, e100=d23, g022=d24, e011=1) / A3
        states["2_2+"] = vec(g200=d21, g111=-d22, e100=-d23, g022=d24, e011=1) / A3
    return SpectrumResult(vals, (b1, b2, b3, D), states)


@dataclass
class AmplitudeSet:
    C: dict
    Delta_t: complex
    B: complex

    def __getitem__(self, label: str) -> complex:
        return self.C[label]

    def vector(self) -> np.ndarray:
        return np.array([self.C[k] for k in BASIS_LABELS], dtype=complex)

    @property
    def one_excitation_population(self) -> float:
        return float(sum(abs(self.C[k]) ** 2 for k in ("g100", "g011", "e000")))


def _complex_delta(params: SystemParams) -> complex:
    return complex(params.Delta, -params.kappa)


def steady_amplitudes(params: SystemParams) -> AmplitudeSet:
    """Closed-form weak-drive steady-state amplitudes (C_g000 = 1)."""
    eta, ea, Om = params.eta, params.eta_a, params.Omega_e
    b1, b2, b3, _ = betas(eta, ea)
    Dt = _complex_delta(params)
    Dt2 = Dt * Dt
    e2, a2 = eta * eta, ea * ea
    B = 0.5 * (Dt2 - b1**2) * (4 * Dt2 - b2**2) * (4 * Dt2 - b3**2)
    if abs(B) < 1e-14:
        raise SingularConfiguration(f"|B| = {abs(B):.3e} at Delta={params.Delta}")
    den1 = Dt2 - a2 - e2
    Om2 = Om * Om
    C = {
        "g000": 1.0 + 0j,
        "g100": ea * Om / den1,
        "g011": eta * ea * Om / (Dt * den1),
        "e000": -(Dt2 - e2) * Om / (Dt * den1),
        "g111": a2 * eta * (5 * Dt2 - a2 + e2) * Om2 / (Dt * B),
        "g200": a2 * (4 * Dt2 * Dt2 + Dt2 * (e2 - a2) - 2 * e2 * e2) * Om2 / (SQ2 * Dt2 * B),
        "e100": -ea * (4 * Dt2 * Dt2 - Dt2 * (a2 + 4 * e2) + e2 * a2 - 3 * e2 * e2) * Om2 / (Dt * B),
        "g022": e2 * a2 * (5 * Dt2 - a2 + e2) * Om2 / (Dt2 * B),
        "e011": -ea * eta * (6 * Dt2 * Dt2 - Dt2 * (a2 + 9 * e2) + 2 * e2 * a2) * Om2 / (Dt2 * B),
    }
    return AmplitudeSet({k: complex(C[k]) for k in BASIS_LABELS}, Dt, B)


def amplitude_matrix(params: SystemParams) -> np.ndarray:
    """Generator M of the weak-drive amplitude equations i dC/dt = M C.

    Uses the non-Hermitian shift Delta -> Delta - i kappa on every excited
    state (n excitations pick up -i n kappa); C_g000 is held fixed.
    """
    M = block_hamiltonian(params, drive=True)
    k = params.kappa
    M[np.arange(1, 4), np.arange(1, 4)] -= 1j * k
    M[np.arange(4, 9), np.arange(4, 9)] -= 2j * k
    M[0, :] = 0
    return M


def ode_fixed_point(params: SystemParams) -> AmplitudeSet:
    """Solve dC/dt = 0 of the amplitude equations as an 8x8 linear system."""
    M = amplitude_matrix(params)
    A = M[1:, 1:]
    rhs = -M[1:, 0]
    try:
        x = np.linalg.solve(A, rhs)
    except np.linalg.LinAlgError as exc:
        raise SingularConfiguration(str(exc)) from exc
    if not np.all(np.isfinite(x)):
        raise SingularConfiguration("non-finite fixed point")
    C = dict(zip(BASIS_LABELS, [1.0 + 0j, *x]))
    b1, b2, b3, _ = betas(params.eta, params.eta_a)
    Dt = _complex_delta(params)
    B = 0.5 * (Dt**2 - b1**2) * (4 * Dt**2 - b2**2) * (4 * Dt**2 - b3**2)
    return AmplitudeSet(C, Dt, B)


@dataclass
class AnalyticG2:
    exact: dict
    approx: dict
    decomposition: dict


def analytic_g2(params: SystemParams, amplitudes: AmplitudeSet | None = None) -> AnalyticG2:
    """Supermode and bare-mode g2(0) from the nine-amplitude steady state.

    ``exact`` keeps the two-excitation corrections u_1, u_2 in the
    occupations; ``approx`` keeps only the one-excitation amplitudes.
    The phonon correlator has no closed form here.
    """
    C = steady_amplitudes(params) if amplitudes is None else amplitudes
    p = {k: abs(v) ** 2 for k, v in C.C.items()}
    u1 = 2 * p["g200"] + p["g111"] + p["e100"]
    u2 = 2 * p["g022"] + p["g111"] + p["e011"]
    n_plus_0, n_minus_0 = p["g100"], p["g011"]
    if n_plus_0 == 0 or n_minus_0 == 0:
        raise UndefinedCorrelator("vanishing one-excitation population")
    pair = 2 * (p["g200"] + p["g022"] + 2 * p["g111"])

    def bare(n_total):
        return pair / n_total**2

    exact = {
        "a_plus": 2 * p["g200"] / (n_plus_0 + u1) ** 2,
        "a_minus": 2 * p["g022"] / (n_minus_0 + u2) ** 2,
    }
    exact["a"] = bare(n_plus_0 + u1 + n_minus_0 + u2)
    exact["m"] = exact["a"]
    approx = {
        "a_plus": 2 * p["g200"] / n_plus_0**2,
        "a_minus": 2 * p["g022"] / n_minus_0**2,
    }
    approx["a"] = bare(n_plus_0 + n_minus_0)
    approx["m"] = approx["a"]

    Dt = C.Delta_t
    F1 = abs(Dt / params.eta) ** 2 + 1 if params.eta else math.inf
    F2 = abs(params.eta / Dt) ** 2 + 1
    rhs = approx["a_plus"] / F2**2 + (2 / F1 - 1 / F1**2) * approx["a_minus"]
    decomposition = dict(F1=F1, F2=F2, lhs=approx["a"], rhs=rhs, gap=abs(approx["a"] - rhs))
    return AnalyticG2(exact, approx, decomposition)


def pole_loci(params: SystemParams) -> np.ndarray:
    """Real detunings where the amplitude denominators nearly vanish."""
    b1, b2, b3, _ = betas(params.eta, params.eta_a)
    pts = [0.0, b1, -b1, b2 / 2, -b2 / 2, b3 / 2, -b3 / 2]
    return np.unique(np.array(pts))


def interference_points(params: SystemParams) -> tuple[float, float]:
    """Positive detunings of the two destructive-interference minima.

    ``Delta_B`` zeroes the real part of the C_g200 numerator (a_+ minimum),
    ``Delta_C`` zeroes C_g022 (a_- minimum). NaN where no real root exists.
    """
    e2, a2 = params.eta**2, params.eta_a**2
    # 4 x^2 + (e2 - a2) x - 2 e2^2 = 0 with x = Delta^2
    x_b = ((a2 - e2) + math.sqrt((a2 - e2) ** 2 + 32 * e2 * e2)) / 8
    x_c = (a2 - e2) / 5
    d_b = math.sqrt(x_b) if x_b > 0 else math.nan
    d_c = math.sqrt(x_c) if x_c > 0 else math.nan
    return d_b, d_c


def crossing_eta_a(eta: float, lo: float = 1e-3, hi: float | None = None) -> float:
    """eta_a at which the two-photon resonance 2 Delta = beta_3 meets Delta = beta_1."""
    if eta <= 0:
        raise DegenerateParameters("crossing needs eta > 0")
    hi = 10 * eta if hi is None else hi

    def f(ea):
        b1, _, b3, _ = betas(eta, ea)
        return 2 * b1 - b3

    if f(lo) * f(hi) > 0:
        raise DegenerateParameters(f"no crossing in eta_a range [{lo}, {hi}]")
    return brentq(f, lo, hi, xtol=1e-12)


def basis_change(n_max: int) -> tuple[np.ndarray, list, list]:
    """Unitary from supermode Fock states |n_+, n_->_d to bare states |n_a, n_m>.

    Returns ``(U, supermode_labels, bare_labels)`` where column ``j`` of U is
    the bare expansion of supermode state ``supermode_labels[j]``. Both label
    lists enumerate total excitation 0..n_max, sector by sector, with the
    first mode's occupation decreasing inside a sector. U is block diagonal.
    """
    if n_max < 0:
        raise ValueError("n_max must be >= 0")
    labels = [(n - k, k) for n in range(n_max + 1) for k in range(n + 1)]
    pos = {lab: i for i, lab in enumerate(labels)}
    dim = len(labels)
    U = np.zeros((dim, dim))
    for col, (p, q) in enumerate(labels):
        # (a^dag + m^dag)^p (a^dag - m^dag)^q / sqrt(2^(p+q) p! q!) |00>
        norm = 1.0 / math.sqrt(2.0 ** (p + q) * math.factorial(p) * math.factorial(q))
        for i in range(p + 1):
            for j in range(q + 1):
                na = i + j
                nm = p + q - na
                coef = math.comb(p, i) * math.comb(q, j) * (-1) ** (q - j)
                U[pos[(na, nm)], col] += norm * coef * math.sqrt(math.factorial(na) * math.factorial(nm))
    return U, labels, labels


def supermode_state_in_bare(space, levels) -> np.ndarray:
    """Ket of the supermode product state ``(atom, n_+, n_-, n_b)`` in a bare-layout space."""
    atom, n_p, n_m, n_b = (int(x) for x in levels)
    total = n_p + n_m
    U, sup, bare = basis_change(total)
    col = sup.index((n_p, n_m))
    ket = np.zeros(space.size, dtype=complex)
    for row, (n_a, n_mag) in enumerate(bare):
        amp = U[row, col]
        if amp != 0:
            ket[space.index((atom, n_a, n_mag, n_b))] = amp
    return ket
