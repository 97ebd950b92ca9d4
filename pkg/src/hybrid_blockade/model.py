"""Hamiltonians and dissipators of the atom + photon/magnon + phonon system.

All frequencies are in units of the common decay rate kappa. The supermode
layout is ``[qubit, a_+, a_-, b]`` and the bare layout ``[qubit, a, m, b]``.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields
from typing import Optional

import numpy as np

from .fockspace import (
    BARE,
    SUPERMODE,
    CompositeSpace,
    SparseOperator,
    SpaceMismatchError,
    annihilator,
    number,
)

QUBIT, MODE1, MODE2, PHONON = 0, 1, 2, 3


class ParameterError(ValueError):
    pass


@dataclass(frozen=True)
class SystemParams:
    omega_c: float
    omega_m: float
    omega_b: float
    omega_a: float
    omega_L: float
    G_m: float
    g: float
    g_a: float
    Omega_e: float
    kappa: float = 1.0
    kappa_b: float = 0.0
    n_th: float = 0.0
    # per-channel overrides of kappa, numerics only
    kappa_plus: Optional[float] = None
    kappa_minus: Optional[float] = None
    kappa_atom: Optional[float] = None

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if v is None:
                continue
            if not math.isfinite(v):
                raise ParameterError(f"{f.name} must be finite, got {v}")
        if self.kappa <= 0:
            raise ParameterError(f"kappa must be > 0, got {self.kappa}")
        if self.n_th < 0:
            raise ParameterError(f"n_th must be >= 0, got {self.n_th}")
        for name in ("kappa_b", "kappa_plus", "kappa_minus", "kappa_atom"):
            v = getattr(self, name)
            if v is not None and v < 0:
                raise ParameterError(f"{name} must be >= 0, got {v}")

    @classmethod
    def paper(
        cls,
        Delta: float,
        eta: float,
        eta_a: float,
        G_m: float,
        Omega_e: float,
        kappa: float = 1.0,
        kappa_b: float = 0.0,
        n_th: float = 0.0,
        omega_L: float = 0.0,
        **overrides,
    ) -> "SystemParams":
        """Constrained parameter set: omega_m = omega_c, omega_b = 2 G_m, Delta_a = Delta.

        ``Delta`` is the a_+ detuning; the bare detuning is ``Delta - G_m``.
        """
        delta = Delta - G_m
        return cls(
            omega_c=omega_L + delta,
            omega_m=omega_L + delta,
            omega_b=2.0 * G_m,
            omega_a=omega_L + Delta,
            omega_L=omega_L,
            G_m=G_m,
            g=2.0 * eta,
            g_a=math.sqrt(2.0) * eta_a,
            Omega_e=Omega_e,
            kappa=kappa,
            kappa_b=kappa_b,
            n_th=n_th,
            **overrides,
        )

    def replace(self, **changes) -> "SystemParams":
        """Copy with changes; paper-level names (Delta, eta, eta_a) keep the constraints."""
        paper_keys = {"Delta", "eta", "eta_a"}
        if paper_keys & changes.keys():
            base = dict(
                Delta=self.Delta, eta=self.eta, eta_a=self.eta_a, G_m=self.G_m,
                Omega_e=self.Omega_e, kappa=self.kappa, kappa_b=self.kappa_b,
                n_th=self.n_th, omega_L=self.omega_L, kappa_plus=self.kappa_plus,
                kappa_minus=self.kappa_minus, kappa_atom=self.kappa_atom,
            )
            base.update(changes)
            return SystemParams.paper(**base)
        d = asdict(self)
        d.update(changes)
        return SystemParams(**d)

    @property
    def delta(self) -> float:
        return self.omega_c - self.omega_L

    @property
    def delta_m(self) -> float:
        return self.omega_m - self.omega_L

    @property
    def Delta(self) -> float:
        return self.delta + self.G_m

    @property
    def Delta_a(self) -> float:
        return self.omega_a - self.omega_L

    @property
    def eta(self) -> float:
        return self.g / 2.0

    @property
    def eta_a(self) -> float:
        return self.g_a / math.sqrt(2.0)

    @property
    def rate_plus(self) -> float:
        return self.kappa if self.kappa_plus is None else self.kappa_plus

    @property
    def rate_minus(self) -> float:
        return self.kappa if self.kappa_minus is None else self.kappa_minus

    @property
    def rate_atom(self) -> float:
        return self.kappa if self.kappa_atom is None else self.kappa_atom

    @property
    def satisfies_constraints(self) -> bool:
        return (
            math.isclose(self.omega_m, self.omega_c, rel_tol=0, abs_tol=1e-12)
            and math.isclose(self.omega_b, 2 * self.G_m, rel_tol=1e-15, abs_tol=1e-12)
            and math.isclose(self.Delta_a, self.Delta, rel_tol=1e-15, abs_tol=1e-12)
        )

    def derived(self) -> dict:
        from .analytics import betas

        b1, b2, b3, D = betas(self.eta, self.eta_a)
        return dict(delta=self.delta, Delta=self.Delta, Delta_a=self.Delta_a,
                    eta=self.eta, eta_a=self.eta_a, beta_1=b1, beta_2=b2, beta_3=b3, D=D)


@dataclass(frozen=True)
class DissipatorSpec:
    operator: SparseOperator
    rate: float
    label: str = ""

    def __post_init__(self):
        if not self.rate >= 0:
            raise ParameterError(f"dissipator rate must be >= 0, got {self.rate}")


def _require_layout(space: CompositeSpace, layout: str):
    if len(space) != 4 or space.dims[0] != 2:
        raise SpaceMismatchError(f"expected [2, N, N, N] space, got {space.dims}")
    if space.layout not in (None, layout):
        raise SpaceMismatchError(f"expected {layout} layout, got {space.layout}")


def _hc(op: SparseOperator) -> SparseOperator:
    return op + op.dag()


def build_full_hamiltonian(params: SystemParams, space: CompositeSpace) -> SparseOperator:
    """Rotating-frame Hamiltonian before the RWA, bare layout [qubit, a, m, b]."""
    _require_layout(space, BARE)
    s = annihilator(space, QUBIT)
    a = annihilator(space, MODE1)
    m = annihilator(space, MODE2)
    b = annihilator(space, PHONON)
    na = number(space, MODE1)
    H = (
        params.delta * na
        + params.delta_m * number(space, MODE2)
        + params.G_m * _hc(a.dag() @ m)
        + params.omega_b * number(space, PHONON)
        + params.g * (na @ (b + b.dag()))
        + params.Delta_a * number(space, QUBIT)
        + params.g_a * _hc(a.dag() @ s)
        + params.Omega_e * _hc(s)
    )
    return H


def build_effective_hamiltonian(params: SystemParams, space: CompositeSpace, frame: bool = False) -> SparseOperator:
    """Tripartite effective Hamiltonian in the supermode layout.

    With ``frame=True`` the commuting part ``omega_b (n_b - n_-)`` is removed
    (see :func:`frame_of`), which leaves a Hamiltonian free of the large
    2 G_m scale.
    """
    _require_layout(space, SUPERMODE)
    s = annihilator(space, QUBIT)
    ap = annihilator(space, MODE1)
    am = annihilator(space, MODE2)
    b = annihilator(space, PHONON)
    minus_energy = params.Delta - 2 * params.G_m
    phonon_energy = params.omega_b
    if frame:
        minus_energy += params.omega_b
        phonon_energy = 0.0
    H = (
        params.Delta * number(space, MODE1)
        + minus_energy * number(space, MODE2)
        + phonon_energy * number(space, PHONON)
        + params.Delta_a * number(space, QUBIT)
        - params.eta * _hc(ap.dag() @ am @ b)
        + params.eta_a * _hc(ap.dag() @ s)
        + params.Omega_e * _hc(s)
    )
    return H


@dataclass(frozen=True)
class Frame:
    """Diagonal generator K = omega * diag(charge) commuting with the frame Liouvillian."""

    charge: np.ndarray
    omega: float

    def energies(self) -> np.ndarray:
        return self.omega * self.charge


def frame_of(params: SystemParams, space: CompositeSpace) -> Frame:
    """K = omega_b (n_b - n_-), which commutes with every term of H_eff."""
    _require_layout(space, SUPERMODE)
    charge = space.levels(PHONON) - space.levels(MODE2)
    return Frame(charge.astype(int), params.omega_b)


def excitation_number(space: CompositeSpace) -> SparseOperator:
    """n_+ + sigma^dag sigma + (n_- + n_b)/2, conserved by H_eff without drive."""
    _require_layout(space, SUPERMODE)
    return (
        number(space, MODE1)
        + number(space, QUBIT)
        + 0.5 * (number(space, MODE2) + number(space, PHONON))
    )


def build_dissipators(params: SystemParams, space: CompositeSpace) -> list[DissipatorSpec]:
    """Decay channels of the master equation; zero-rate channels are omitted."""
    _require_layout(space, SUPERMODE)
    b = annihilator(space, PHONON)
    specs = [
        DissipatorSpec(annihilator(space, MODE1), params.rate_plus, "a_plus"),
        DissipatorSpec(annihilator(space, MODE2), params.rate_minus, "a_minus"),
        DissipatorSpec(annihilator(space, QUBIT), params.rate_atom, "sigma"),
        DissipatorSpec(b, (params.n_th + 1.0) * params.kappa_b, "b"),
        DissipatorSpec(b.dag(), params.n_th * params.kappa_b, "b_dag"),
    ]
    return [d for d in specs if d.rate > 0]


def bare_mode_operators(space: CompositeSpace) -> tuple[SparseOperator, SparseOperator]:
    """Photon and magnon annihilators a = (a_+ + a_-)/sqrt2, m = (a_+ - a_-)/sqrt2."""
    _require_layout(space, SUPERMODE)
    ap = annihilator(space, MODE1)
    am = annihilator(space, MODE2)
    r = 1 / math.sqrt(2)
    return r * (ap + am), r * (ap - am)


def mode_operators(space: CompositeSpace) -> dict[str, SparseOperator]:
    """Annihilators of the five modes whose statistics are reported."""
    a, m = bare_mode_operators(space)
    return {
        "a_plus": annihilator(space, MODE1),
        "a_minus": annihilator(space, MODE2),
        "b": annihilator(space, PHONON),
        "a": a,
        "m": m,
    }
