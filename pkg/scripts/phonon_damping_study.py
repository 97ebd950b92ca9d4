"""Supermode g2(0) from the master equation versus the weak-drive closed form as kappa_b -> 0.

The closed form neglects phonon damping; shrinking kappa_b shows which
deviations come from the slow phonon background.
"""
import argparse
import math

from hybrid_blockade.analytics import analytic_g2
from hybrid_blockade.dynamics import build_liouvillian, g2_zero, steady_state
from hybrid_blockade.fockspace import supermode_space
from hybrid_blockade.model import (
    SystemParams,
    build_dissipators,
    build_effective_hamiltonian,
    frame_of,
    mode_operators,
)


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--delta", type=float, nargs="+", default=[10.0, 36.0])
    parser.add_argument("--kappa-b", type=float, nargs="+", default=[0.05, 0.01, 0.002])
    parser.add_argument("--truncation", type=int, default=6)
    args = parser.parse_args()
    s = supermode_space(args.truncation)
    ops = mode_operators(s)
    for D in args.delta:
        for kb in args.kappa_b:
            p = SystemParams.paper(Delta=D, eta=15.0, eta_a=40 / math.sqrt(2), G_m=800.0, Omega_e=0.1, kappa_b=kb)
            L = build_liouvillian(build_effective_hamiltonian(p, s, frame=True), build_dissipators(p, s),
                                  frame_of(p, s))
            rho = steady_state(L)
            an = analytic_g2(p).exact
            print(f"Delta {D:6.2f} kappa_b {kb:6.3f}  a_plus {g2_zero(rho, ops['a_plus']):.4f} "
                  f"(analytic {an['a_plus']:.4f})  a_minus {g2_zero(rho, ops['a_minus']):.4f} "
                  f"(analytic {an['a_minus']:.4f})")


if __name__ == "__main__":
    main()
