"""Smoke test for the pyflowmap extension.

Build and run from the repository root:

    cargo build --release -p flowmap-py
    python3 python/smoke_test.py

The script looks for the built library under target/ and imports it from a
temporary directory, so no install step is needed.
"""

import importlib
import math
import os
import shutil
import sys
import tempfile

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))


def load_module():
    for profile in ("release", "debug"):
        lib = os.path.join(ROOT, "target", profile, "libpyflowmap.so")
        if os.path.exists(lib):
            tmp = tempfile.mkdtemp(prefix="pyflowmap-")
            shutil.copy(lib, os.path.join(tmp, "pyflowmap.so"))
            sys.path.insert(0, tmp)
            return importlib.import_module("pyflowmap")
    sys.exit("libpyflowmap.so not found; run `cargo build --release -p flowmap-py` first")


def main():
    fm = load_module()

    sys_ = fm.System("linear-scalar")
    assert (sys_.d, sys_.l) == (1, 1)
    assert abs(sys_.rhs([0.5], [2.0])[0] + 1.0) < 1e-15
    x = sys_.flow([1.0], [0.7], 0.1)[0]
    assert abs(x - math.exp(-0.07)) < 1e-9

    data = fm.generate_pairs("linear-scalar", 600, seed=3)
    assert len(data) == 600
    delta, x_in, alpha, x_out = data.pair(0)
    assert 0.0 <= delta <= 0.1 and len(x_in) == len(alpha) == len(x_out) == 1

    net = fm.Network(1, 1, layers=2, width=16, seed=1)
    before = net.loss(data)
    net, losses = fm.train_network(net, data, epochs=5, seed=1)
    assert len(losses) == 5 and losses[-1] < before

    times, states = net.predict([1.0], [0.5], 0.1, 20)
    assert len(times) == len(states) == 21 and states[0] == [1.0]

    again = fm.Network.from_json(net.to_json())
    assert again.predict([1.0], [0.5], 0.1, 20) == (times, states)

    nodes, weights = fm.gauss_legendre(10, 0.0, 1.0)
    assert abs(sum(weights) - 1.0) < 1e-14
    mean5 = sum(w * math.exp(-a * 5.0) for a, w in zip(nodes, weights))
    assert abs(mean5 - fm.analytic_mean_var_ex1(5.0)[0]) < 1e-10

    t, mean, var = fm.uq_statistics(net, [1.0], 10, rule="gl:10", system="linear-scalar")
    assert len(t) == len(mean) == len(var) == 11

    assert fm.composition_factor(1, 1.0, 0.1) == 1.0
    mb, vb = fm.mean_var_bounds(10, 1.0, 0.1, 1e-3, 1.0)
    assert 0.0 < mb < vb

    try:
        net.step([1.0, 2.0], [0.5], 0.1)
    except ValueError as err:
        assert "expected 1" in str(err)
    else:
        raise AssertionError("dimension mismatch not reported")

    print("pyflowmap smoke test passed")


if __name__ == "__main__":
    main()
