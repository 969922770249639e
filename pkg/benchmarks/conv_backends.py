"""Compare the compiled and numpy conv kernels on denoiser-sized workloads.

Usage: python benchmarks/conv_backends.py [--repeats N]

Times conv3x3 forward and conv3x3_wgrad on (batch, channels, H, W) shapes
matching training (16x1x40x40 through the 16-channel trunk) and prints a
table with the speedup of the compiled kernel over the numpy fallback.
The two backends must agree to ~1e-10 elementwise; the script asserts this.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from tslab.denoiser import _conv_numpy
from tslab.denoiser.backend import compiled_available

if compiled_available():
    from tslab.denoiser import _convcore
else:  # pragma: no cover - benchmark still runs, with a warning
    _convcore = None

SHAPES = [
    # (batch, in_c, out_c, height, width)   label
    (16, 1, 16, 40, 40),
    (16, 16, 16, 40, 40),
    (16, 16, 1, 40, 40),
    (1, 16, 16, 96, 96),
]


def _time(fn, args, repeats: int) -> float:
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeats", type=int, default=7)
    args = parser.parse_args()

    if _convcore is None:
        print("compiled kernel unavailable; timing numpy fallback only")

    rng = np.random.default_rng(0)
    header = f"{'shape (B,Ci,Co,H,W)':>24} {'kernel':>8} {'numpy':>10} {'compiled':>10} {'speedup':>8}"
    print(header)
    print("-" * len(header))
    for batch, in_c, out_c, h, w in SHAPES:
        xpad = rng.standard_normal((batch, in_c, h + 2, w + 2))
        weight = rng.standard_normal((out_c, in_c, 3, 3))
        bias = rng.standard_normal(out_c)
        dy = rng.standard_normal((batch, out_c, h, w))

        for name, np_fn, np_args, c_fn in (
            ("fwd", _conv_numpy.conv3x3, (xpad, weight, bias), getattr(_convcore, "conv3x3", None)),
            ("wgrad", _conv_numpy.conv3x3_wgrad, (xpad, dy), getattr(_convcore, "conv3x3_wgrad", None)),
        ):
            t_np = _time(np_fn, np_args, args.repeats)
            if c_fn is None:
                print(f"{str((batch, in_c, out_c, h, w)):>24} {name:>8} {t_np * 1e3:9.2f}ms {'—':>10} {'—':>8}")
                continue
            t_c = _time(c_fn, np_args, args.repeats)
            ref, got = np_fn(*np_args), c_fn(*np_args)
            if name == "wgrad":
                for r, g in zip(ref, got):
                    assert np.allclose(r, g, atol=1e-10), "backend mismatch"
            else:
                assert np.allclose(ref, got, atol=1e-10), "backend mismatch"
            print(
                f"{str((batch, in_c, out_c, h, w)):>24} {name:>8} "
                f"{t_np * 1e3:9.2f}ms {t_c * 1e3:9.2f}ms {t_np / t_c:7.2f}x"
            )
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
