"""Time the compiled and pure-Python kernel backends side by side.

    python3 benchmarks/bench_kernels.py [--repeat N]

Prints one line per kernel with the best-of-N time for each backend and the
speedup. Also times one full controller sample + update, which is where the
fused LSTM gates actually matter.
"""

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from dsmnas import _kernels


def kernel_cases(rng):
    codes = rng.integers(0, 5, size=(15625, 6))
    ref = codes[17]
    other = codes[::-1].copy()
    unary = rng.normal(size=(6, 5))
    pairs = np.array([(i, (i + 1) % 6) for i in range(6)], dtype=np.int64)
    tables = rng.normal(size=(6, 5, 5))
    z, c = rng.normal(size=256), rng.normal(size=64)
    _, _, cache = _kernels.backends()["python"].lstm_gates_forward(z, c)
    gh, gc = rng.normal(size=64), rng.normal(size=64)
    return {
        "hamming_rows (15625x6)": ("hamming_rows", (codes, ref)),
        "hamming_pairs (15625x6)": ("hamming_pairs", (codes, other)),
        "additive_scores (15625x6)": ("additive_scores", (codes, unary, pairs, tables, 0.5)),
        "lstm_gates_forward (H=64)": ("lstm_gates_forward", (z, c)),
        "lstm_gates_backward (H=64)": ("lstm_gates_backward", (gh, gc, cache)),
    }


def time_call(fn, args, repeat):
    number = 1
    while timeit.timeit(lambda: fn(*args), number=number) < 0.05:
        number *= 2
    return min(timeit.repeat(lambda: fn(*args), number=number, repeat=repeat)) / number


def search_step_time(repeat):
    """Seconds per controller sample + REINFORCE update, measured in a child
    process so the backend choice happens at import."""
    code = (
        "import time, numpy as np\n"
        "from dsmnas.bench_oracle import default_synthetic_spec, generate_synthetic\n"
        "from dsmnas.trainer import SearchConfig, SearchState, train_step\n"
        "state = SearchState(generate_synthetic(default_synthetic_spec(0)), SearchConfig(budget=10**6))\n"
        f"best = min(__import__('timeit').repeat(lambda: train_step(state), number=50, repeat={repeat}))\n"
        "print(best / 50)\n"
    )
    out = {}
    for name, env in (("cython", {}), ("python", {"DSMNAS_PURE_PYTHON": "1"})):
        if name not in _kernels.backends():
            continue
        result = subprocess.run([sys.executable, "-c", code], env={**os.environ, **env},
                                capture_output=True, text=True, check=True)
        out[name] = float(result.stdout.strip())
    return out


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()
    backends = _kernels.backends()
    print(f"active backend: {_kernels.BACKEND}; available: {', '.join(sorted(backends))}")
    if "cython" not in backends:
        print("compiled extension not built; only the fallback can be timed")
    rng = np.random.default_rng(0)
    print(f"{'kernel':<28} {'python':>12} {'cython':>12} {'speedup':>8}")
    for label, (name, fn_args) in kernel_cases(rng).items():
        times = {b: time_call(getattr(mod, name), fn_args, args.repeat) for b, mod in backends.items()}
        cy = times.get("cython")
        print(f"{label:<28} {times['python'] * 1e6:>10.1f}us "
              + (f"{cy * 1e6:>10.1f}us {times['python'] / cy:>7.1f}x" if cy else f"{'-':>12} {'-':>8}"))
    step = search_step_time(args.repeat)
    py = step["python"]
    cy = step.get("cython")
    print(f"{'search iteration (end to end)':<28} {py * 1e3:>10.2f}ms "
          + (f"{cy * 1e3:>10.2f}ms {py / cy:>7.2f}x" if cy else ""))


if __name__ == "__main__":
    main()
