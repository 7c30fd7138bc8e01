"""Sum-estimation MSE of 1-bit stochastic quantization with and without rotation.

Prints the median MSE ratio (no rotation / rotation) for several input
families. Rotation only helps when coordinates have uneven magnitudes.
"""

import argparse

import numpy as np

from autosecagg.hadamard import RotationConfig, inverse_rotate, rotate_many
from autosecagg.quantizer import stochastic_binary_quantize

FAMILIES = {
    "gaussian": lambda g, n, d: g.normal(size=(n, d)),
    "lognormal_scales": lambda g, n, d: g.normal(size=(n, d)) * np.exp(g.normal(0, 1.5, (n, d))),
    "student_t2": lambda g, n, d: g.standard_t(2, size=(n, d)),
    "uniform_01": lambda g, n, d: g.random((n, d)),
    "sparse_1pct": lambda g, n, d: g.normal(size=(n, d)) * (g.random((n, d)) < 0.01),
}


def mse_ratio(family, d, n, trial):
    g = np.random.default_rng(trial)
    xs = FAMILIES[family](g, n, d)
    true = xs.sum(axis=0)
    plain = sum(stochastic_binary_quantize(x, g) for x in xs)
    rot = RotationConfig(trial, d)
    rotated = inverse_rotate(sum(stochastic_binary_quantize(z, g) for z in rotate_many(xs, rot)), rot)
    return np.mean((plain - true) ** 2) / np.mean((rotated - true) ** 2)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--dims", default="64,256,1024,4096")
    ap.add_argument("--users", type=int, default=16)
    ap.add_argument("--trials", type=int, default=20)
    args = ap.parse_args()
    dims = [int(x) for x in args.dims.split(",")]
    print("family".ljust(18) + "".join(f"d={d}".rjust(12) for d in dims))
    for fam in FAMILIES:
        cells = [np.median([mse_ratio(fam, d, args.users, t) for t in range(args.trials)]) for d in dims]
        print(fam.ljust(18) + "".join(f"{c:12.2f}" for c in cells))


if __name__ == "__main__":
    main()
