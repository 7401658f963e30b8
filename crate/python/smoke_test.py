#!/usr/bin/env python3
"""Build the netsync_py extension module and exercise it end to end.

Run from anywhere: `python3 python/smoke_test.py`. Builds the cdylib with
cargo, imports it from a scratch directory, and checks a few known answers.
"""

import math
import shutil
import subprocess
import sys
import tempfile
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent


def ok(label, detail=""):
    print(f"ok - {label}" + (f": {detail}" if detail else ""))


def build_module(scratch):
    subprocess.run(
        ["cargo", "build", "-p", "netsync-py"],
        cwd=ROOT,
        check=True,
        stdout=subprocess.DEVNULL,
    )
    built = None
    for suffix in (".so", ".dylib"):
        candidate = ROOT / "target" / "debug" / f"libnetsync_py{suffix}"
        if candidate.exists():
            built = candidate
            break
    if built is None:
        candidate = ROOT / "target" / "debug" / "netsync_py.dll"
        if candidate.exists():
            built = candidate
    if built is None:
        sys.exit("could not find the built netsync_py library under target/debug")
    shutil.copy(built, scratch / "netsync_py.so")
    ok("module built", built.name)


def main():
    with tempfile.TemporaryDirectory() as tmp:
        scratch = Path(tmp)
        build_module(scratch)
        sys.path.insert(0, str(scratch))
        import netsync_py as ns

        # Plant model basics.
        fem = ns.Fem(8, 0.05)
        assert fem.n == 8
        assert math.isclose(fem.h, 1.0 / 9.0)
        assert math.isclose(sum(fem.b_vec()), 1.0, rel_tol=1e-12)
        spectrum = fem.dirichlet_spectrum()
        assert abs(spectrum[0] - math.pi**2) / math.pi**2 < 0.02
        ok("plant model", f"n={fem.n}, lambda_1={spectrum[0]:.4f}")

        profiles = fem.benchmark_initial_states()
        assert len(profiles) == 5 and all(len(p) == 8 for p in profiles)
        assert fem.l2_norm(profiles[0]) > 0
        ok("benchmark profiles", f"|x1| = {fem.l2_norm(profiles[0]):.4f}")

        # Graphs and gains.
        topo = ns.Topology.benchmark()
        assert topo.n_agents == 5
        assert (1, 2) in topo.edges() and (4, 5) in topo.edges()
        path3 = ns.Topology(3, [(1, 2), (2, 3)])
        assert path3.ordered_pairs() == [(1, 2), (2, 1), (2, 3), (3, 2)]
        gains = ns.Gains.uniform(path3, 0.5)
        assert gains.get(1, 2) == 0.5
        asym = ns.Gains.from_values(path3, [1.0, 2.0, 3.0, 4.0])
        assert asym.get(2, 1) == 2.0
        try:
            gains.get(1, 3)
            sys.exit("expected a ValueError for a non-edge")
        except ValueError:
            pass
        ok("graphs and gains", f"{topo!r}")

        # Constant-gain simulation: deviation decays from the benchmark start.
        x0 = profiles[:3]
        trace = ns.simulate_constant(fem, path3, gains, x0, 1.0, 1e-3)
        assert len(trace) == 1001
        assert trace.z_norm[-1] < trace.z_norm[0]
        assert trace.cost_j2() >= trace.cost_j1() > 0
        ok("constant-gain run", f"|Z| {trace.z_norm[0]:.3f} -> {trace.z_norm[-1]:.3f}")

        # Adaptive simulation: one gain per directed pair, W nonincreasing.
        g0 = ns.Gains.uniform(path3, 1.0)
        atrace = ns.simulate_adaptive(fem, path3, x0, g0, 100.0, 1e-5, 1.0, 1e-3)
        hist = atrace.gain_history
        assert len(hist) == len(atrace.times)
        assert len(hist[0]) == len(path3.ordered_pairs())
        w = atrace.w_value
        assert all(b <= a + 1e-9 * w[0] for a, b in zip(w, w[1:]))
        ok("adaptive run", f"W {w[0]:.3f} -> {w[-1]:.3f}")

        # Uniform sweep returns one row per grid point.
        table = ns.sweep_uniform(fem, path3, x0, [0.0, 0.5, 1.0], 0.5, 1e-3)
        assert [row[0] for row in table] == [0.0, 0.5, 1.0]
        assert all(row[1] >= row[2] for row in table)
        ok("uniform sweep", f"j2(0) = {table[0][1]:.4f}")

        # Mismatch-proportional gains are symmetric and nonnegative.
        sg = ns.static_gains(fem, path3, x0)
        assert sg.get(1, 2) == sg.get(2, 1) >= 0
        ok("static gains", f"{sg.values()}")

        # Matrix-equation solvers against scalar closed forms.
        p, res = ns.solve_lyapunov([[-2.0]], [[4.0]])
        assert math.isclose(p[0][0], 1.0, rel_tol=1e-12) and res < 1e-12
        p, res = ns.solve_are([[1.0]], [[1.0]], [[1.0]], [[1.0]])
        assert math.isclose(p[0][0], 1.0 + math.sqrt(2.0), rel_tol=1e-12)
        ok("matrix equations", f"riccati p = {p[0][0]:.12f}")

        try:
            ns.solve_lyapunov([[1.0]], [[1.0]])
            sys.exit("expected a RuntimeError for an unstable Lyapunov solve")
        except RuntimeError:
            ok("unstable solve rejected")

    print("smoke test passed")


if __name__ == "__main__":
    main()
