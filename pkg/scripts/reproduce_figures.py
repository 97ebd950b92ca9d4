"""Run every bundled figure scenario and render the plots.

    python scripts/reproduce_figures.py --out results --threads 4
    python scripts/reproduce_figures.py --only fig3 fig5
"""
import argparse
import subprocess
import sys
import time

from hybrid_blockade.cli import BUNDLED, load_scenario, run_scenario


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out", default="results")
    parser.add_argument("--threads", type=int, default=1)
    parser.add_argument("--only", nargs="*", choices=BUNDLED)
    parser.add_argument("--no-plots", action="store_true", help="skip running the generated plot scripts")
    args = parser.parse_args()
    names = args.only or [n for n in BUNDLED if n != "smoke"]
    for name in names:
        t0 = time.perf_counter()
        target, outputs = run_scenario(load_scenario(name), args.out, args.threads)
        failed = sum(o.failed for o in outputs)
        print(f"{name}: {len(outputs)} panels, {failed} failed cells, {time.perf_counter() - t0:.0f} s -> {target}")
        if args.no_plots:
            continue
        for o in outputs:
            script = target / f"plot_{o.panel.name}.py"
            subprocess.run([sys.executable, str(script)], check=True)


if __name__ == "__main__":
    main()
