#!/usr/bin/env python3
"""Smoke test for the rmpc_py extension module.

Builds nothing itself: it locates the cdylib produced by
`cargo build -p rmpc-py`, stages it under the importable name and
exercises the full surface: load/condense, a single QP solve, a
closed-loop run, a batch, and the projection-region cache.

Run from the repository root:

    cargo build -p rmpc-py
    python3 python/smoke_test.py
"""

import math
import shutil
import sys
import tempfile
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent


def stage_module() -> None:
    candidates = [
        ROOT / "target" / profile / "librmpc_py.so"
        for profile in ("release", "debug")
    ]
    built = next((p for p in candidates if p.exists()), None)
    if built is None:
        sys.exit("librmpc_py.so not found; run `cargo build -p rmpc-py` first")
    stage = Path(tempfile.mkdtemp(prefix="rmpc_py_"))
    shutil.copy2(built, stage / "rmpc_py.so")
    sys.path.insert(0, str(stage))


stage_module()
import rmpc_py  # noqa: E402


def check(cond: bool, what: str) -> None:
    if not cond:
        sys.exit(f"FAIL: {what}")
    print(f"ok: {what}")


# Load and condense the double-integrator-like benchmark problem.
problem = rmpc_py.Problem.load(str(ROOT / "problems" / "example1.json"))
check(problem.state_dim == 2, "problem has 2 states")
check(problem.input_dim == 1, "problem has 1 input")
check(problem.horizon == 4, "horizon is 4 steps")

synth = problem.condense()
check(synth.rows == 32 and synth.vars == 4, f"condensed QP is q={synth.rows} vars={synth.vars}")
check(synth.terminal_rows == 12, "terminal set has 12 rows")

# A single parametric solve away from the origin.
sol = synth.solve([0.5, 0.1])
check(math.isfinite(sol.value) and sol.value > 0.0, "objective is finite and positive")
check(len(sol.u) == 4 and len(sol.first_input) == 1, "input sequence has horizon length")
check(all(abs(u) <= 2.0 + 1e-9 for u in sol.u), "inputs respect the box bounds")

# Closed loop: the suboptimal modes must reuse laws, never solve more.
runs = {
    mode: synth.run([0.5, 0.1], mode=mode, lambda_=1.0)
    for mode in ("optimal", "suboptimal", "suboptimal-proj")
}
for mode, run in runs.items():
    check(run.converged, f"{mode} run converges")
    check(len(run.states) == run.steps + 1, f"{mode} run records steps+1 states")
    check(run.events[0] and run.qps >= 1, f"{mode} run starts with a QP event")
    check(run.messages == 2 * run.qps, f"{mode} exchanges two messages per QP event")
check(
    runs["suboptimal"].qps <= runs["optimal"].qps,
    "law reuse never solves more QPs than the baseline",
)

# Batches are seeded and deterministic.
a = synth.batch(mode="suboptimal", count=3, seed=5)
b = synth.batch(mode="suboptimal", count=3, seed=5)
check(a.count == 3 and len(a.records) == 3, "batch reduces 3 trajectories")
check(a.failures == 0, "all batch trajectories converge")
check(
    (a.qps, a.flops, a.costs, a.bytes) == (b.qps, b.flops, b.costs, b.bytes),
    "equal seeds give identical accounting",
)

# Projection regions: build, persist, reload, and drive a batch with them.
regions, discovered, skipped = synth.build_regions(count=30, seed=5)
check(len(regions) >= 1, f"projected {len(regions)} of {discovered} laws ({skipped} skipped)")
with tempfile.TemporaryDirectory() as d:
    path = str(Path(d) / "regions.json")
    regions.save(path)
    reloaded = rmpc_py.Regions.load(path)
    check(len(reloaded) == len(regions), "region cache round-trips through JSON")
    c = synth.batch(mode="suboptimal-proj", count=3, seed=5, regions=reloaded)
    check(c.qps <= a.qps, "projection regions never increase QP count")

# Malformed input surfaces as a Python exception, not a crash.
try:
    rmpc_py.Problem.from_json("{not json")
except ValueError:
    print("ok: malformed JSON raises ValueError")
else:
    sys.exit("FAIL: malformed JSON did not raise")

print("smoke test passed")
