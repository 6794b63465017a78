"""Smoke test for the Python bindings.

Uses an installed `kangle` module when there is one. Otherwise builds the
extension with cargo and loads it from a temporary directory.
"""

import importlib
import json
import math
import shutil
import subprocess
import sys
import sysconfig
import tempfile
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent


def load():
    try:
        return importlib.import_module("kangle")
    except ImportError:
        pass
    subprocess.run(
        ["cargo", "build", "--release", "-p", "kangle-py", "--features", "extension-module"],
        cwd=ROOT,
        check=True,
    )
    built = ROOT / "target" / "release" / "libkangle_py.so"
    dest = Path(tempfile.mkdtemp()) / ("kangle" + sysconfig.get_config_var("EXT_SUFFIX"))
    shutil.copy(built, dest)
    sys.path.insert(0, str(dest.parent))
    return importlib.import_module("kangle")


def main():
    kangle = load()

    names = [name for name, _ in kangle.catalog()]
    assert "minimal_graph" in names, names
    assert len(kangle.identity_ids()) > 40

    cal = kangle.calibrate()
    closing = [c for c in cal["candidates"] if c["closes"]]
    assert len(closing) == 1, cal
    assert (cal["conventions"]["laplacian_sign"], cal["conventions"]["delta_sign"]) == (1.0, 1.0)

    # a unitary-linear plane at constant angle
    plane = kangle.parse("n = 1;\nambient = flat;\nmap = [u1, 0.5*u2, 0, u2]", name="plane")
    snap = plane.eval([0.3, -0.2])
    cos = snap["angle_cosines"][0]
    assert abs(cos - 0.5 / math.sqrt(1.25)) < 1e-12, snap
    assert snap["mean_curvature_norm"] < 1e-12

    try:
        kangle.parse("n=1;\nambient=flat;\nmap=[u1, u2 +, u1, u2]")
    except ValueError as e:
        assert "line 3, column 14" in str(e), e
    else:
        raise AssertionError("parse error not raised")

    ds = kangle.entry("minimal_graph")
    ev = ds.evaluate([0.1, 0.2, 0.3, 0.4], suites=["gauss"])
    gauss = [r for r in ev["residuals"] if r["id"] == "gauss.equation"]
    assert gauss and gauss[0]["pass"], gauss

    rep = kangle.run_suite(entries=["minimal_graph", "lagrangian_torus_2"], points=8)
    assert rep["schema"] == 1
    assert rep["summary"]["pass"], json.dumps(rep["summary"])

    sphere = plane.with_ambient(1.0)
    assert "space_form" in sphere.ambient
    print(f"kangle {kangle.__version__}: smoke test passed "
          f"({rep['summary']['applicable']} applicable records)")


if __name__ == "__main__":
    main()
