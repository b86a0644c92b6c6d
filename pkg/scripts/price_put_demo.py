"""Superhedging prices of an American put for widening volatility bands,
with the exercise boundary at a few times."""

import argparse
import math
import sys

import numpy as np

from gbsde.gcore import VolatilityBand
from gbsde.market import ClaimSpec, MarketModel, bs_closed_form, price_american


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--steps", type=int, default=500)
    ap.add_argument("--intervals", type=int, default=200)
    args = ap.parse_args(argv)

    put = ClaimSpec("put", 100.0)
    print(" sigma_low sigma_high     h_up   BS(low)  BS(high)   S*(0)  S*(T/2)")
    for lo, hi in [(0.2, 0.2), (0.15, 0.25), (0.1, 0.3), (0.05, 0.35)]:
        model = MarketModel(0.05, 100.0, VolatilityBand(lo, hi), 1.0)
        res = price_american(model, put, steps=args.steps, intervals=args.intervals)
        upper = res.policy.boundary[:, 1]
        half = len(upper) // 2
        s0, smid = (math.exp(v) if np.isfinite(v) else float("nan") for v in (upper[0], upper[half]))
        print(f"{lo:10.2f} {hi:10.2f} {res.h_up:8.4f} {bs_closed_form(lo, 0.05, 100, 1, put):9.4f} "
              f"{bs_closed_form(hi, 0.05, 100, 1, put):9.4f} {s0:7.2f} {smid:8.2f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
