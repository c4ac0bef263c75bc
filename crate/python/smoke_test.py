#!/usr/bin/env python3
"""Smoke test for the sgwres_py extension module.

Builds the cdylib with cargo, copies it next to this script under the
importable name, and exercises the cheap paths of every exported class
and function.
"""

import json
import math
import shutil
import subprocess
import sys
from pathlib import Path

HERE = Path(__file__).resolve().parent
ROOT = HERE.parent


def build_and_import():
    subprocess.run(
        ["cargo", "build", "-p", "sgwres-py"], cwd=ROOT, check=True
    )
    built = ROOT / "target" / "debug" / "libsgwres_py.so"
    if not built.exists():  # e.g. macOS
        built = ROOT / "target" / "debug" / "libsgwres_py.dylib"
    dest = HERE / "sgwres_py.so"
    shutil.copyfile(built, dest)
    sys.path.insert(0, str(HERE))
    import sgwres_py

    return sgwres_py


def approx(a, b, tol, what):
    gap = abs(a - b)
    status = "ok" if gap <= tol else "FAIL"
    print(f"  [{status}] {what}: {a:.12g} vs {b:.12g} (gap {gap:.3g})")
    return gap <= tol


def main():
    m = build_and_import()
    ok = True

    print("constants")
    ok &= approx(m.kkw_constant(), -1.0 / (24 * math.pi**2), 1e-15, "kkw constant")
    ok &= approx(
        m.residue_prefactor(4), 2.0 / (4 * math.pi) ** 2, 1e-15, "residue prefactor n=4"
    )
    for n in (4, 6, 8):
        ok &= approx(m.gamma_identity_gap(n), 0.0, 1e-14, f"gamma identity n={n}")

    cfg = m.QuadConfig(xi_sphere_level=2)
    flat = m.Metric.flat(4)
    g = m.Metric.conformal(4, 0.25, 2.0)

    print("metrics")
    ok &= approx(flat.scalar_curvature([0.3, -1.0, 0.2, 0.7]), 0.0, 1e-14, "flat s")
    ok &= approx(flat.sqrt_det([1.0, 0.0, 0.0, 0.0]), 1.0, 1e-15, "flat volume")
    x = [0.4, -0.2, 0.1, 0.3]
    cur = json.loads(g.curvature(x))
    ok &= approx(cur["s"], g.scalar_curvature(x), 1e-12, "curvature record s")
    sg = json.loads(g.check_sg_classical(2, 8))
    print(f"  [{'ok' if sg['pass'] else 'FAIL'}] decay check pass={sg['pass']}")
    ok &= sg["pass"]

    print("finite-part integrals")
    r = json.loads(m.fp_powlaw(4, -3.0, cfg))
    ok &= approx(r["value"], math.pi**2 / 2, 1e-6, "fp (1+|x|^2)^-3 on R^4")
    r = json.loads(m.fp_powlaw(4, -1.0, cfg))
    ok &= approx(r["value"], 0.0, 1e-6, "fp (1+|x|^2)^-1 on R^4")
    r = json.loads(m.fp_constant(4, 2.5, cfg))
    ok &= approx(r["value"], 0.0, 1e-10, "fp constant on R^4")

    print("heat route")
    lich = m.Laplacian.lichnerowicz(g)
    assert lich.rank == 4
    a1 = lich.heat_a1(x)
    s = g.scalar_curvature(x)
    # a1 = (1/6 - 1/4) s Id for the Lichnerowicz endomorphism
    ok &= approx(a1[0][0][0], -s / 12, 1e-12, "a1 diagonal")
    ok &= approx(a1[0][1][0], 0.0, 1e-12, "a1 off-diagonal")
    fs = json.loads(m.fp_scalar_curvature(g, cfg))["value"]
    hw = json.loads(lich.wres(cfg))
    ok &= approx(hw["value"], m.kkw_constant() * fs, 1e-6 * abs(fs), "lichnerowicz wres")
    free = m.Laplacian.free(flat, 2)
    ok &= approx(json.loads(free.wres(cfg))["value"], 0.0, 1e-10, "flat free wres")
    ck = m.Laplacian.constant_k(flat, 2, 1.5)
    ht = json.loads(ck.heat_trace(cfg))
    ok &= approx(ht["c1"], 0.0, 1e-10, "flat constant-K C1")

    print("epsilon shift")
    e0 = json.loads(m.epsilon_shift(g, 0.0, cfg))["value"]
    e1 = json.loads(m.epsilon_shift(g, 1.0, cfg))["value"]
    e2 = json.loads(m.epsilon_shift(g, 2.0, cfg))["value"]
    ok &= approx(e2 - e1, e1 - e0, 1e-10, "shift affine in epsilon")
    ok &= approx(e0, hw["value"], 1e-6 * abs(fs), "zero shift matches heat route")
    ok &= approx(
        json.loads(m.epsilon_shift(flat, 3.0, cfg))["value"], 0.0, 1e-12, "flat shift"
    )

    print("dirac route (single point)")
    d = m.Dirac(g)
    k = d.kastler_integral(x, sphere_level=3)
    ok &= approx(k, m.kkw_constant() * s, 1e-5 * max(abs(s), 1.0), "pointwise density")

    print("PASS" if ok else "FAIL")
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
