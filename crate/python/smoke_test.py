"""Smoke test for the basisop_py extension.

Build and install it first:

    pip install maturin
    cd crates/python && maturin build --release -o dist
    pip install --no-build-isolation dist/basisop_py-*.whl

then run ``python python/smoke_test.py``.
"""

import math
import sys

import basisop_py as bp


def check(label, ok):
    print(f"{'ok' if ok else 'FAIL':<5}{label}")
    return ok


def main():
    results = []

    pts = [[0.1, 0.2], [0.7, 0.45], [0.33, 0.9]]
    back = bp.inverse("perturbed_cat", bp.forward("perturbed_cat", pts))
    err = max(
        min(abs(a - b), 1.0 - abs(a - b)) for p, q in zip(pts, back) for a, b in zip(p, q)
    )
    results.append(check(f"cat map round trip ({err:.1e})", err < 1e-10))

    theta = bp.forward("circle", [[0.5]])[0][0]
    results.append(check("circle rotation by -1", abs(theta - (0.5 - 1.0) % (2 * math.pi)) < 1e-12))

    p = bp.preset("perturbed_cat", "paper")
    results.append(check("paper torus preset has 324 basis functions", p["basis_size"] == [324]))

    row = bp.fourier_errors(
        "perturbed_cat", 4, quad_per_side=64, reference_modes=16, analysis_per_side=32
    )
    results.append(check(f"fourier errors finite {row}", all(math.isfinite(v) and v >= 0 for v in row)))

    out = bp.train_spectrum(
        "circle",
        epochs=20,
        hidden=[16, 16],
        basis_size=5,
        grid_per_side=32,
        data=(40, 20, 10),
    )
    results.append(check(f"tiny circle run (test error {out['test_error']:.3e})", math.isfinite(out["test_error"])))
    results.append(check("spectrum has one eigenvalue per basis function", len(out["eigenvalues"]) == 5))

    try:
        bp.forward("nonsense", [[0.0]])
        results.append(check("unknown experiment raises", False))
    except ValueError:
        results.append(check("unknown experiment raises", True))

    return 0 if all(results) else 1


if __name__ == "__main__":
    sys.exit(main())
