"""g2_a(0) along the single-excitation resonance Delta = beta_1 as eta_a varies.

Prints the numeric correlator next to the analytic one and the eta_a where the
two-excitation level 2 Delta = beta_3 meets the resonance.
"""
import argparse

import numpy as np

from hybrid_blockade.analytics import analytic_g2, betas, crossing_eta_a
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
    parser.add_argument("--eta", type=float, default=15.0)
    parser.add_argument("--start", type=float, default=10.0)
    parser.add_argument("--stop", type=float, default=25.0)
    parser.add_argument("--points", type=int, default=31)
    parser.add_argument("--truncation", type=int, default=6)
    parser.add_argument("--kappa-b", type=float, default=0.05)
    args = parser.parse_args()
    s = supermode_space(args.truncation)
    a = mode_operators(s)["a"]
    print(f"crossing 2 beta_1 = beta_3 at eta_a = {crossing_eta_a(args.eta):.4f}")
    print(f"{'eta_a':>8} {'beta_1':>8} {'g2_a num':>10} {'g2_a an':>10}")
    for eta_a in np.linspace(args.start, args.stop, args.points):
        b1 = betas(args.eta, eta_a)[0]
        p = SystemParams.paper(Delta=b1, eta=args.eta, eta_a=eta_a, G_m=800.0, Omega_e=0.1,
                               kappa_b=args.kappa_b)
        L = build_liouvillian(build_effective_hamiltonian(p, s, frame=True), build_dissipators(p, s),
                              frame_of(p, s))
        g = g2_zero(steady_state(L), a)
        print(f"{eta_a:8.3f} {b1:8.3f} {g:10.4f} {analytic_g2(p).exact['a']:10.4f}")


if __name__ == "__main__":
    main()
