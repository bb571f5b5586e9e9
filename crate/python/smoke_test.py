"""Smoke test for the attseg_py extension.

Build first:  cargo build --release -p attseg-python --features extension-module
Then run:     python3 python/smoke_test.py
"""

import importlib.util
import os
import shutil
import sys
import sysconfig
import tempfile
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent


def find_library():
    env = os.environ.get("ATTSEG_PY_LIB")
    if env:
        return Path(env)
    for profile in ("release", "debug"):
        for name in ("libattseg_py.so", "libattseg_py.dylib", "attseg_py.dll"):
            p = ROOT / "target" / profile / name
            if p.exists():
                return p
    sys.exit("attseg_py library not found; build it with cargo first")


def load():
    lib = find_library()
    suffix = sysconfig.get_config_var("EXT_SUFFIX") or ".so"
    tmp = Path(tempfile.mkdtemp())
    target = tmp / ("attseg_py" + suffix)
    shutil.copy(lib, target)
    spec = importlib.util.spec_from_file_location("attseg_py", target)
    mod = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(mod)
    return mod


def main():
    m = load()

    smoothed = m.smooth_matrix([[0.6, 0.3, 0.1]])[0]
    for got, want in zip(smoothed, [0.4576, 0.3390, 0.2034]):
        assert abs(got - want) < 1e-3, smoothed

    assert m.hard_align([[0.7, 0.3], [0.6, 0.4], [0.2, 0.8]]) == [0, 0, 1]
    assert m.alignment_boundaries([1, 0, 1]) == [1, 2]
    assert m.proportional_boundaries(list("pqrs"), ["ab", "cd"]) == [2]

    p, r, f = m.boundary_prf([(7, [2, 4])], [(7, [2, 5])])
    assert (p, r, f) == (0.5, 0.5, 0.5)

    ul, wrl, gold = m.synth_corpus(sentences=40, seed=3)
    assert len(ul) == len(wrl) == len(gold) == 40
    report = m.evaluate(ul, gold, gold)
    assert report["boundary_f"] == 1.0 and report["type_retrieval"] == 1.0

    segs = m.dpseg(ul, iterations=20, seed=2)
    assert segs == m.dpseg(ul, iterations=20, seed=2)
    assert all(b == sorted(set(b)) for b in segs)

    try:
        m.smooth_matrix([[0.5, 0.6]])
    except RuntimeError:
        pass
    else:
        raise AssertionError("non-stochastic row accepted")

    print("attseg_py smoke test passed")


if __name__ == "__main__":
    main()
