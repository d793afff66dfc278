"""Size and power of the embedded-chain test over several seeds.

    python3 scripts/chain_power.py --paths 100000 --events 8 --reps 10
"""
import argparse
import logging

from smpkit import catalog
from smpkit.verification import HistoryDependentSampler, rejection_rate


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--paths", type=int, default=100000)
    ap.add_argument("--events", type=int, default=8)
    ap.add_argument("--reps", type=int, default=10)
    ap.add_argument("--boost", type=float, default=1.5)
    ap.add_argument("--tilt", type=float, default=0.2)
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")
    seeds = range(args.reps)
    for name, src in (("markov3", catalog.markov3()), ("duration3", catalog.duration3()),
                      ("history-dependent", HistoryDependentSampler(tuple(map(tuple, catalog.MARKOV3_RATES)),
                                                                    args.boost, args.tilt))):
        logging.info("%-18s rejection rate %.2f", name, rejection_rate(src, args.paths, args.events, seeds))


if __name__ == "__main__":
    main()
