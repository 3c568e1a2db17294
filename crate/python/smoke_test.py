"""Smoke test for the pylfslab extension.

Builds the cdylib with cargo (unless PYLFSLAB_LIB points at a built one),
stages it as pylfslab.so in a temp dir, and exercises the bindings.
"""

import json
import math
import os
import shutil
import subprocess
import sys
import tempfile
from pathlib import Path

ROOT = Path(__file__).resolve().parents[1]


def locate_library():
    lib = os.environ.get("PYLFSLAB_LIB")
    if lib:
        return Path(lib)
    subprocess.run(["cargo", "build", "--release", "-p", "lfslab-python"], cwd=ROOT, check=True)
    for name in ("libpylfslab.so", "libpylfslab.dylib", "pylfslab.dll"):
        p = ROOT / "target" / "release" / name
        if p.exists():
            return p
    sys.exit("built library not found")


def main():
    stage = tempfile.mkdtemp()
    ext = ".pyd" if sys.platform == "win32" else ".so"
    shutil.copy(locate_library(), Path(stage) / f"pylfslab{ext}")
    sys.path.insert(0, stage)
    import pylfslab as lf

    names = [n for n, _ in lf.list_models()]
    assert "minkowski" in names and "flat-quartic" in names

    m = lf.Model("minkowski", 4)
    x, v = [0.0] * 4, [2.0, 0.3, 0.0, 0.1]
    assert abs(m.lagrangian(x, v) - 0.5 * (-4.0 + 0.09 + 0.01)) < 1e-14
    g = m.fundamental_tensor(x, v)
    assert g[0][0] == -1.0 and g[1][1] == 1.0
    assert m.classify(x, v) == "timelike future"
    assert max(abs(c) for a in m.christoffel(x, v) for b in a for c in b) == 0.0
    y = m.exp(x, v)
    assert abs(m.distance(x, y) - m.finsler(x, v)) < 1e-8
    omega = [-1.0, 0.2, 0.0, 0.0]
    w = m.legendre(x, omega)
    assert abs(w[0] - 1.0) < 1e-12 and abs(w[1] - 0.2) < 1e-12

    f = lf.Model("flrw", 3, {"H": "0.5"})
    gam = f.christoffel([0.0, 0.0, 0.0], [1.0, 0.1, 0.0])
    assert abs(gam[0][1][1] - 0.5) < 1e-10 and abs(gam[1][0][1] - 0.5) < 1e-10

    wm = m.with_weight("time-linear", -0.5)
    assert abs(wm.weighted_ricci(x, [1.0, 0, 0, 0], "6") + 0.25 / 3.0) < 1e-10
    assert wm.weighted_ricci(x, [1.0, 0, 0, 0], "inf") == 0.0

    assert lf.epsilon_range(math.inf, 1.0, 3)[0] is False
    ok, c = lf.epsilon_range(0.0, 0.0, 3)
    assert ok and abs(c - 1.0 / 3.0) < 1e-15

    passed, text, js = lf.run_experiment({"experiment": "raychaudhuri", "model.name": "minkowski", "N": "inf", "eps": "0"})
    assert passed and "verdict: PASS" in text and json.loads(js)["verdict"] == "pass"

    try:
        lf.Model("kerr")
    except ValueError as e:
        assert "kerr" in str(e)
    else:
        raise AssertionError("unknown model accepted")
    try:
        lf.run_experiment({"experiment": "raychaudhuri", "N": "2", "eps": "1.5"})
    except ValueError:
        pass
    else:
        raise AssertionError("N in (0, n) accepted")

    print("pylfslab smoke test: ok")


if __name__ == "__main__":
    main()
