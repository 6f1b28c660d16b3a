"""Compare the compiled and pure-NumPy kernel backends.

Times each kernel on a stack of random SPD matrices, then a small end-to-end
run (feature extraction plus cross-validation of three pipelines), and checks
that both backends agree.

    python benchmarks/bench_kernels.py [--trials 500] [--channels 12] [--repeat 5]
"""
import argparse
import time

import numpy as np

from rigoletto import kernels
from rigoletto.connectivity import extract_features
from rigoletto.evaluation import EnsemblePipeline, FgMDMPipeline, cross_validate, make_splits
from rigoletto.synth import generate_subjects


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def kernel_cases(X):
    E = X[0]
    return {
        "eigvalsh_batch": lambda: kernels.eigvalsh_batch(X),
        "eigh_batch": lambda: kernels.eigh_batch(X),
        "spectral_apply(log)": lambda: kernels.spectral_apply(X, kernels.LOG),
        "spectral_apply(pow)": lambda: kernels.spectral_apply(X, kernels.POW, -0.5),
        "congruence": lambda: kernels.congruence(E, X),
        "pack_sym": lambda: kernels.pack_sym(X),
    }


def end_to_end(epochs, seed):
    b = extract_features(epochs)
    plan = make_splits(b.n_trials, b.labels, k=5, repeats=2, seed=seed)
    pipes = [FgMDMPipeline("Cov"), FgMDMPipeline("PLV"), EnsemblePipeline(seed=seed)]
    return [cross_validate(b, p, plan).kappa_mean for p in pipes]


def main():
    ap = argparse.ArgumentParser(description=__doc__.split("\n\n")[0])
    ap.add_argument("--trials", type=int, default=500)
    ap.add_argument("--channels", type=int, default=12)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--seed", type=int, default=42)
    args = ap.parse_args()

    backends = kernels.available_backends()
    print(f"backends: {backends} (default {kernels.BACKEND})")
    if "compiled" not in backends:
        print("compiled extension not built; only the NumPy timings are shown")

    rng = np.random.default_rng(args.seed)
    A = rng.standard_normal((args.trials, args.channels, 4 * args.channels))
    X = A @ A.transpose(0, 2, 1) / A.shape[-1]

    print(f"\nkernels on {args.trials} x {args.channels}x{args.channels} SPD matrices (best of {args.repeat}, ms)")
    print(f"{'kernel':<22}" + "".join(f"{b:>12}" for b in backends) + f"{'speedup':>10}")
    outputs = {}
    for name in kernel_cases(X):
        row = {}
        for b in backends:
            with kernels.backend(b):
                fn = kernel_cases(X)[name]
                row[b] = best_of(fn, args.repeat)
                outputs[name, b] = fn()
        speed = row["python"] / row["compiled"] if "compiled" in row else float("nan")
        print(f"{name:<22}" + "".join(f"{1e3 * row[b]:>12.3f}" for b in backends) + f"{speed:>9.2f}x")

    if "compiled" in backends:
        worst = 0.0
        for name in kernel_cases(X):
            a, b = outputs[name, "python"], outputs[name, "compiled"]
            a = a[0] if isinstance(a, tuple) else a
            b = b[0] if isinstance(b, tuple) else b
            if name == "eigh_batch":
                # eigenvectors are defined up to sign; compare the eigenvalues
                a, b = outputs[name, "python"][0], outputs[name, "compiled"][0]
            worst = max(worst, float(np.max(np.abs(a - b)) / np.max(np.abs(a))))
        print(f"max relative difference between backends: {worst:.2e}")

    epochs = generate_subjects(1, seed=args.seed)["S01"]
    print("\nend to end: features + 2x5-fold CV of FgMDM-Cov, FgMDM-PLV, Ensemble")
    results = {}
    for b in backends:
        with kernels.backend(b):
            t0 = time.perf_counter()
            results[b] = end_to_end(epochs, args.seed)
            dt = time.perf_counter() - t0
        print(f"  {b:<9} {dt:7.2f} s   kappa {np.round(results[b], 3).tolist()}")
    if len(results) == 2:
        same = np.allclose(results["python"], results["compiled"], atol=1e-12)
        print(f"  kappas identical across backends: {same}")


if __name__ == "__main__":
    main()
