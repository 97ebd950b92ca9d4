"""Full versus effective Hamiltonian populations from |g100> as G_m grows.

Reports max_t |P_full - P_eff| / max_t P_full for P_g100 and P_g200 over t in [0, 20].
"""
import argparse
import math

import numpy as np

from hybrid_blockade.analytics import supermode_state_in_bare
from hybrid_blockade.dynamics import evolve_schrodinger
from hybrid_blockade.fockspace import bare_space, supermode_space
from hybrid_blockade.model import SystemParams, build_effective_hamiltonian, build_full_hamiltonian


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--G-m", type=float, nargs="+", default=[200.0, 800.0, 3200.0])
    parser.add_argument("--delta", type=float, default=0.0)
    parser.add_argument("--truncation", type=int, default=5)
    args = parser.parse_args()
    se, sb = supermode_space(args.truncation), bare_space(args.truncation)
    t = np.linspace(0, 20, 2001)
    for G in args.G_m:
        p = SystemParams.paper(Delta=args.delta, eta=5.0, eta_a=6 / math.sqrt(2), G_m=G, Omega_e=0.1)
        eff = evolve_schrodinger(build_effective_hamiltonian(p, se), se.basis((0, 1, 0, 0)), t,
                                 {"g100": se.basis((0, 1, 0, 0)), "g200": se.basis((0, 2, 0, 0))})
        kets = {k: supermode_state_in_bare(sb, lev) for k, lev in (("g100", (0, 1, 0, 0)), ("g200", (0, 2, 0, 0)))}
        full = evolve_schrodinger(build_full_hamiltonian(p, sb), kets["g100"], t, kets)
        ratios = {k: np.abs(full[k] - eff[k]).max() / full[k].max() for k in kets}
        print(f"G_m {G:7.0f}  g100 {ratios['g100']:.4f}  g200 {ratios['g200']:.4f}")


if __name__ == "__main__":
    main()
