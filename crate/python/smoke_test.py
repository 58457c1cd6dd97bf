"""Builds the extension and exercises each binding once.

Run from the workspace root: python3 python/smoke_test.py
"""

import cmath
import math
import os
import shutil
import subprocess
import sys
import tempfile

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))


def build():
    subprocess.run(["cargo", "build", "--release", "-p", "calkit-py"], cwd=ROOT, check=True)
    target = os.environ.get("CARGO_TARGET_DIR", os.path.join(ROOT, "target"))
    lib = os.path.join(target, "release", "libpycalkit.so")
    dest = tempfile.mkdtemp()
    shutil.copy(lib, os.path.join(dest, "pycalkit.so"))
    sys.path.insert(0, dest)


def main():
    build()
    import pycalkit as pk

    g = pk.Grid(2.0, 1.0, 9, 32)
    assert g.m == 9 and abs(g.h - 0.25) < 1e-15
    n, nb = g.n_nodes, g.n_boundary
    assert n == 729 and nb == 729 - 343

    # e^{x1} solves -Δu + u = 0 and the discrete problem up to O(h²).
    q = [1.0 + 0j] * n
    bpos = g.boundary_positions()
    phi = [complex(math.exp(x[0])) for x in bpos]
    u = pk.solve_schrodinger(g, q, phi)
    err = max(abs(u[i] - math.exp(x[0])) for i, x in enumerate(g.positions()))
    assert err < 1e-2, err

    zero = [0j] * n
    lam0 = pk.dn_map_schrodinger(g, zero)
    bump = pk.gaussian_bump(g, 1.0, 0.3)
    lam1 = pk.dn_map_schrodinger(g, bump)
    assert lam0.n == nb and lam0.kind == "schrodinger"
    assert abs(lam0.get(3, 5) - lam0.get(5, 3)) < 1e-8
    assert lam1.max_abs_diff(lam0) > 0.0
    try:
        lam0.get(nb, 0)
    except ValueError:
        pass
    else:
        raise AssertionError("out of range index accepted")

    # Constants are in the kernel of the zero-potential map.
    assert max(abs(z) for z in lam0.apply([1 + 0j] * nb)) < 1e-8

    d = pk.liouville_defect(g, [2.5 + 0j] * n)
    assert d < 1e-10, d

    c = pk.build_cgo(g, bump, [0.0, 0.0, 0.0], 4.0)
    assert c.iterations <= 25 and c.fixed_point_residual < 1e-10 and c.in_unit_ball
    assert len(c.v) == n and len(c.dirichlet) == nb

    s = pk.fourier_sample(g, lam1, lam0, bump, zero, [0.0, 0.0, 0.0], 2.0)
    exact = pk.exact_fourier(g, bump, [0.0, 0.0, 0.0])
    assert abs(s - exact) < 0.3 * abs(exact), (s, exact)
    assert cmath.isfinite(s)

    lhs, rhs = pk.poincare_ratio(g, pk.sine_mode(g), [1.0, 0.0, 0.0])
    assert 0.0 < lhs <= rhs
    # rhs carries 4r² = 12 for the enclosing ball r = √3; the scaled ratio sits near (2/π)².
    assert 0.3 < lhs / (rhs / 12.0) < 0.6, (lhs, rhs)
    corpus = pk.zero_trace_corpus(g, 3, 7)
    assert len(corpus) == 3 and corpus == pk.zero_trace_corpus(g, 3, 7)
    lhs, rhs = pk.conjugated_inequality(g, corpus[0], 4.0, [1.0, 0.0, 0.0])
    assert lhs <= rhs * (1 + 1e-3)
    lhs, rhs, cu, rho2, holds = pk.carleman_estimate(g, corpus[1], bump, 8.0, [1.0, 0.0, 0.0], 10, 0)
    assert holds and rho2 <= 8.0 and lhs <= rhs

    path = os.path.join(tempfile.mkdtemp(), "bump.field")
    pk.dump_field(g, bump, path)
    m, l, vals = pk.load_field(path)
    assert (m, l) == (9, 1.0) and vals == bump

    try:
        pk.Grid(2.0, 1.0, 2, 32)
    except ValueError:
        pass
    else:
        raise AssertionError("degenerate grid accepted")
    print("smoke test ok")


if __name__ == "__main__":
    main()
