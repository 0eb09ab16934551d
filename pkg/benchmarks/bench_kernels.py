#!/usr/bin/env python3
"""Time the implicit viscous solve: compiled core against the NumPy path.

The banded backward-Euler solve is the only hot kernel in a run (it
executes once per accepted step), so this is the whole performance
story.  Both backends are called directly on identical inputs; the
printed max|diff| documents that they agree to round-off.

Usage: python3 benchmarks/bench_kernels.py [--reps 200] [--sizes 256,1024,4096]
"""

import argparse
import timeit

import numpy as np

from star_sim import initial_data, kernels, solver
from star_sim.lane_emden import build_profile
from star_sim.params import ModelParams
from star_sim.state import geometry


def make_inputs(n):
    params = ModelParams(gamma=1.5, theta=0.5, nu1=0.02, nu2=0.02)
    profile = build_profile(gamma=1.5, total_mass=1.0, n_nodes=n)
    pert = initial_data.Perturbation("velocity_bump", 1e-2)
    init = initial_data.make_initial(profile, params, pert, delta_bar=None)
    res = solver.run(init, profile, params,
                     solver.SolverConfig(n=n, t_end=0.2))
    state = res.state
    dt = solver.cfl_dt(state, profile, params, solver.SolverConfig(n=n))
    _, rox, _ = geometry(state, profile)
    inert = profile.rho_bar * rox**-2.0
    v_star = state.v + dt * solver.acceleration(state, profile, params)
    v_star[0] = 0.0
    return (state.r, v_star, inert, profile.x_face_sq, profile.rho_face,
            profile.dx, dt, params.theta, params.nu, params.nu1)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--reps", type=int, default=200)
    ap.add_argument("--sizes", default="256,1024,4096")
    args = ap.parse_args()
    sizes = [int(tok) for tok in args.sizes.split(",")]

    if kernels._step_core is None:
        print("compiled core unavailable; timing the NumPy path alone")

    print(f"{'n':>6} {'numpy us':>10} {'compiled us':>12} {'speedup':>8} "
          f"{'max|diff|':>10}")
    for n in sizes:
        inputs = make_inputs(n)
        t_np = timeit.timeit(
            lambda: kernels.step_velocity_numpy(*inputs),
            number=args.reps) / args.reps
        line = f"{n:>6} {t_np * 1e6:>10.1f}"
        if kernels._step_core is not None:
            t_c = timeit.timeit(
                lambda: kernels._step_core.step_velocity(*inputs),
                number=args.reps) / args.reps
            diff = float(np.max(np.abs(
                kernels.step_velocity_numpy(*inputs)
                - kernels._step_core.step_velocity(*inputs))))
            line += f" {t_c * 1e6:>12.1f} {t_np / t_c:>8.2f} {diff:>10.2e}"
        print(line)


if __name__ == "__main__":
    main()
