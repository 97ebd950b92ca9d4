import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hybrid_blockade.analytics import basis_change
from hybrid_blockade.fockspace import SpaceMismatchError, bare_space, number, supermode_space
from hybrid_blockade.model import (
    ParameterError,
    SystemParams,
    bare_mode_operators,
    build_dissipators,
    build_effective_hamiltonian,
    build_full_hamiltonian,
    excitation_number,
    frame_of,
    mode_operators,
)

from conftest import fig3_params

FIG2 = dict(eta=5.0, eta_a=6 / math.sqrt(2), G_m=200.0, Omega_e=0.1)


def free_params(**kw):
    base = dict(omega_c=0.0, omega_m=0.0, omega_b=0.0, omega_a=0.0, omega_L=0.0,
                G_m=0.0, g=0.0, g_a=0.0, Omega_e=0.0)
    base.update(kw)
    return SystemParams(**base)


def test_paper_constraints_and_derived():
    p = SystemParams.paper(Delta=3.0, eta=15.0, eta_a=20.0, G_m=800.0, Omega_e=0.1, omega_L=1e4)
    assert p.satisfies_constraints
    assert p.Delta == pytest.approx(3.0)
    assert p.delta == pytest.approx(3.0 - 800.0)
    assert p.Delta_a == pytest.approx(3.0)
    assert p.eta == pytest.approx(15.0)
    assert p.eta_a == pytest.approx(20.0)
    assert p.omega_b == 1600.0
    d = p.derived()
    assert d["beta_1"] == pytest.approx(math.hypot(15, 20))


def test_replace_keeps_constraints():
    p = fig3_params().replace(Delta=-7.0)
    assert p.satisfies_constraints and p.Delta == pytest.approx(-7.0)
    q = p.replace(kappa_b=1.0)
    assert q.kappa_b == 1.0 and q.Delta == pytest.approx(-7.0)


@pytest.mark.parametrize("field,value", [("kappa", 0.0), ("kappa", -1.0), ("n_th", -0.1),
                                         ("kappa_b", -0.5), ("g", math.nan), ("G_m", math.inf)])
def test_invalid_parameters(field, value):
    with pytest.raises(ParameterError, match=field):
        free_params(**{field: value})


def test_full_hamiltonian_free_spectrum():
    p = free_params(omega_c=1.0, omega_m=1.0, omega_b=2.0)
    s = bare_space(3)
    H = build_full_hamiltonian(p, s)
    M = H.toarray()
    assert np.count_nonzero(M - np.diag(np.diag(M))) == 0
    expect = s.levels(1) + s.levels(2) + 2 * s.levels(3)
    np.testing.assert_allclose(np.diag(M).real, expect)


def test_full_hamiltonian_hermitian_and_hopping():
    p = SystemParams.paper(Delta=0.0, **FIG2)
    s = bare_space(4)
    H = build_full_hamiltonian(p, s)
    assert H.is_hermitian(0.0)
    M = H.matrix
    assert M[s.index((0, 1, 0, 0)), s.index((0, 0, 1, 0))] == pytest.approx(200.0)


def test_effective_hamiltonian_matrix_elements():
    p = fig3_params()
    s = supermode_space(4)
    H = build_effective_hamiltonian(p, s)
    assert H.is_hermitian(0.0)
    M = H.matrix
    g100, e000, g011 = s.index((0, 1, 0, 0)), s.index((1, 0, 0, 0)), s.index((0, 0, 1, 1))
    assert M[g100, e000] == pytest.approx(40 / math.sqrt(2))
    assert M[g100, g011] == pytest.approx(-15.0)


def test_effective_hamiltonian_decoupled_is_diagonal():
    p = SystemParams.paper(Delta=2.5, eta=0.0, eta_a=0.0, G_m=10.0, Omega_e=0.0)
    s = supermode_space(3)
    M = build_effective_hamiltonian(p, s).toarray()
    assert np.count_nonzero(M - np.diag(np.diag(M))) == 0
    assert M[s.index((0, 1, 0, 0)), s.index((0, 1, 0, 0))] == pytest.approx(2.5)


def test_layout_is_enforced():
    p = fig3_params()
    with pytest.raises(SpaceMismatchError):
        build_full_hamiltonian(p, supermode_space(3))
    with pytest.raises(SpaceMismatchError):
        build_effective_hamiltonian(p, bare_space(3))


def test_dissipator_counts_and_rates():
    s = supermode_space(3)
    assert len(build_dissipators(fig3_params(), s)) == 4
    assert len(build_dissipators(fig3_params(kappa_b=0.0), s)) == 3
    ds = build_dissipators(fig3_params(n_th=1.0), s)
    rates = {d.label: d.rate for d in ds}
    assert rates["b"] == pytest.approx(0.1)
    assert rates["b_dag"] == pytest.approx(0.05)
    assert rates["a_plus"] == rates["a_minus"] == rates["sigma"] == 1.0


def test_bare_modes_total_number_identity():
    s = supermode_space(5)
    a, m = bare_mode_operators(s)
    lhs = (a.dag() @ a + m.dag() @ m).toarray()
    rhs = (number(s, 1) + number(s, 2)).toarray()
    np.testing.assert_allclose(lhs, rhs, atol=1e-14)


def test_bare_modes_commute_on_safe_sector():
    N = 6
    s = supermode_space(N)
    a, m = bare_mode_operators(s)
    comm = (a @ m.dag() - m.dag() @ a).toarray()
    safe = (s.levels(1) + s.levels(2)) <= N - 2
    assert np.abs(comm[np.ix_(safe, safe)]).max() < 1e-14


def test_mode_operator_dictionary():
    ops = mode_operators(supermode_space(3))
    assert set(ops) == {"a_plus", "a_minus", "b", "a", "m"}


@settings(max_examples=20, deadline=None)
@given(st.floats(-50, 50), st.floats(0.1, 30), st.floats(0.1, 30), st.floats(1, 1000))
def test_excitation_number_conserved_without_drive(Delta, eta, eta_a, G_m):
    p = SystemParams.paper(Delta=Delta, eta=eta, eta_a=eta_a, G_m=G_m, Omega_e=0.0)
    s = supermode_space(4)
    H = build_effective_hamiltonian(p, s)
    X = excitation_number(s)
    comm = (H @ X - X @ H).matrix
    assert comm.nnz == 0 or np.abs(comm.data).max() < 1e-12


@settings(max_examples=20, deadline=None)
@given(st.floats(-50, 50), st.floats(0.1, 30), st.floats(0.1, 30), st.floats(1, 1000), st.floats(0, 2))
def test_frame_generator_commutes(Delta, eta, eta_a, G_m, Om):
    p = SystemParams.paper(Delta=Delta, eta=eta, eta_a=eta_a, G_m=G_m, Omega_e=Om)
    s = supermode_space(4)
    H = build_effective_hamiltonian(p, s).toarray()
    K = np.diag(frame_of(p, s).energies())
    assert np.abs(H @ K - K @ H).max() < 1e-9 * max(1.0, G_m)
    Hf = build_effective_hamiltonian(p, s, frame=True).toarray()
    np.testing.assert_allclose(Hf, H - K, atol=1e-9 * max(1.0, G_m))


def test_frame_hamiltonian_is_independent_of_G_m():
    s = supermode_space(3)
    a = build_effective_hamiltonian(fig3_params(G_m=800.0), s, frame=True).toarray()
    b = build_effective_hamiltonian(fig3_params(G_m=5.0), s, frame=True).toarray()
    np.testing.assert_allclose(a, b, atol=1e-12)


def test_beam_splitter_diagonalizes_quadratic_part():
    delta, G = 3.0, 7.0
    p = free_params(omega_c=delta, omega_m=delta, G_m=G)
    n_max = 4
    s = bare_space(n_max + 1)
    H = build_full_hamiltonian(p, s).toarray()
    U, sup, bare = basis_change(n_max)
    idx = [s.index((0, na, nm, 0)) for na, nm in bare]
    H0 = H[np.ix_(idx, idx)]
    D = U.T @ H0 @ U
    expect = np.diag([(delta + G) * n_p + (delta - G) * n_m for n_p, n_m in sup])
    np.testing.assert_allclose(D, expect, atol=1e-12)


def test_per_channel_rates():
    p = fig3_params(kappa_plus=2.0, kappa_minus=0.5)
    rates = {d.label: d.rate for d in build_dissipators(p, supermode_space(3))}
    assert rates["a_plus"] == 2.0 and rates["a_minus"] == 0.5 and rates["sigma"] == 1.0
