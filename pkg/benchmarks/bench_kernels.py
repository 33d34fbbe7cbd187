"""Time each hot kernel under the compiled and the numpy backend.

Usage: python benchmarks/bench_kernels.py [--repeat N]
Shapes match one training batch of the default model (32 subjects, 21 paths, 19 windows).
"""

import argparse
import timeit

import numpy as np

from neuropathnet import kernels


def cases(rng):
    s, t, d, heads = 32 * 21, 19, 32, 4
    q, k, v = (rng.standard_normal((s, t, d)) for _ in range(3))
    x = rng.standard_normal((s * t, d))
    gain, bias = rng.standard_normal(d), rng.standard_normal(d)
    logits = rng.standard_normal((s * heads * t, t))
    values = rng.standard_normal((42, 300))
    starts = np.arange(0, 271, 15)
    assignment = rng.permutation(np.repeat(np.arange(7), 6))
    scale = 1.0 / np.sqrt(d // heads)

    def prep(backend):
        y = backend.softmax_rows(logits)
        ln = backend.layer_norm_rows(x, gain, bias, 1e-5)
        out, attn = backend.attention_forward(q, k, v, heads, scale)
        return y, ln, attn

    return {
        "softmax_rows": lambda b, st: b.softmax_rows(logits),
        "softmax_rows_backward": lambda b, st: b.softmax_rows_backward(st[0], logits),
        "layer_norm_rows": lambda b, st: b.layer_norm_rows(x, gain, bias, 1e-5),
        "layer_norm_rows_backward": lambda b, st: b.layer_norm_rows_backward(x, st[1][1], st[1][2], gain),
        "window_connectivity": lambda b, st: b.window_connectivity(values, starts, 30, assignment, 7, 1e-10),
        "attention_forward": lambda b, st: b.attention_forward(q, k, v, heads, scale),
        "attention_backward": lambda b, st: b.attention_backward(q, k, v, st[2], q, heads, scale),
    }, prep


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=20)
    args = ap.parse_args()
    rng = np.random.default_rng(0)
    table, prep = cases(rng)
    names = kernels.available_backends()
    states = {n: prep(kernels.get_backend(n)) for n in names}
    print(f"{'kernel':<26}" + "".join(f"{n + ' ms':>14}" for n in names) + ("   speedup" if len(names) > 1 else ""))
    for kname, fn in table.items():
        times = {}
        for n in names:
            b = kernels.get_backend(n)
            fn(b, states[n])
            times[n] = min(timeit.repeat(lambda: fn(b, states[n]), number=1, repeat=args.repeat)) * 1e3
        line = f"{kname:<26}" + "".join(f"{times[n]:>14.3f}" for n in names)
        if "cython" in times:
            line += f"   {times['python'] / times['cython']:>6.2f}x"
        print(line)


if __name__ == "__main__":
    main()
