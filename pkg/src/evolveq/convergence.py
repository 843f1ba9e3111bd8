"""Nested-refinement driver: Cauchy-difference tables and empirical rates.

Successive trajectories on a dyadic ladder of uniform subdivisions are
compared on the finest breakpoint grid; the L^2(0,T;V) differences are
integrated with per-interval Gauss quadrature on the exact within-slab
solutions of both trajectories.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .forms import Subdivision, gauss_panels
from .propagator import ProblemData, Trajectory, oracle_solve, solve

__all__ = ["RefinementStudy", "refine", "oracle_gap", "trajectory_l2v_diff",
           "trajectory_suph_diff"]


@dataclass
class RefinementStudy:
    """Ladder of nested uniform solves with successive-difference data."""

    slab_counts: list[int]
    meshes: np.ndarray
    diffs_l2V: np.ndarray       # length len(slab_counts) - 1
    diffs_supH: np.ndarray
    rate: float
    trajectories: list[Trajectory] = field(default_factory=list, repr=False)

    def __post_init__(self) -> None:
        if np.any(self.diffs_l2V < 0) or np.any(self.diffs_supH < 0):
            raise ValueError("refinement differences must be nonnegative")


def _check_nested(slab_counts) -> list[int]:
    counts = [int(n) for n in slab_counts]
    if len(counts) < 2:
        raise ValueError("need at least two ladder points")
    for a, b in zip(counts[:-1], counts[1:]):
        if b <= a or b % a != 0:
            raise ValueError(f"ladder counts must be nested: {a} does not divide {b}")
    return counts


def trajectory_l2v_diff(t1: Trajectory, t2: Trajectory, grid: np.ndarray) -> float:
    """L^2(0,T;V) norm of the difference, Gauss quadrature per grid interval."""
    space = t1.step_form.space
    total = 0.0
    for a, b in zip(grid[:-1], grid[1:]):
        nodes, weights = gauss_panels(a, b, points=4, panels=1)
        d = t1.evaluate_many(nodes) - t2.evaluate_many(nodes)
        total += float(weights @ space.v_norms(d) ** 2)
    return float(np.sqrt(max(total, 0.0)))


def trajectory_suph_diff(t1: Trajectory, t2: Trajectory, grid: np.ndarray) -> float:
    space = t1.step_form.space
    d = t1.evaluate_many(grid) - t2.evaluate_many(grid)
    return float(np.max(space.h_norms(d)))


def _fit_rate(meshes: np.ndarray, diffs: np.ndarray) -> float:
    """Least-squares slope of log(diff) vs log(mesh) on the last three points."""
    mask = diffs > 1e-300
    h = np.log(meshes[mask][-3:])
    d = np.log(diffs[mask][-3:])
    if h.size < 2:
        return float("nan")
    slope = np.polyfit(h, d, 1)[0]
    return float(slope)


def refine(problem: ProblemData, slab_counts, executor=None) -> RefinementStudy:
    """Solve on a nested dyadic ladder and tabulate successive differences.

    Ladder points are independent pure solves; an optional executor maps
    them concurrently, with reduction after collection so the tables do
    not depend on execution order.
    """
    counts = _check_nested(slab_counts)
    horizon = problem.horizon
    fine = Subdivision.uniform(horizon, counts[-1])
    common = fine.points

    def one(n: int) -> Trajectory:
        return solve(problem, Subdivision.uniform(horizon, n), output_grid=common)

    if executor is None:
        trajectories = [one(n) for n in counts]
    else:
        trajectories = list(executor.map(one, counts))

    diffs_l2v, diffs_suph = [], []
    for coarse, finer in zip(trajectories[:-1], trajectories[1:]):
        diffs_l2v.append(trajectory_l2v_diff(coarse, finer, common))
        diffs_suph.append(trajectory_suph_diff(coarse, finer, common))
    meshes = np.array([horizon / n for n in counts])
    rate = _fit_rate(meshes[:-1], np.array(diffs_l2v))
    return RefinementStudy(counts, meshes, np.array(diffs_l2v),
                           np.array(diffs_suph), rate, trajectories)


def oracle_gap(problem: ProblemData, subdivision: Subdivision, n_steps: int,
               relative: bool = False) -> float:
    """sup-H gap between the exponential scheme and the implicit-Euler oracle.

    The comparison grid is the oracle's own step times (subsampled to at
    most ~1000 points); the scheme is evaluated there exactly.
    """
    stride = max(1, n_steps // 1000)
    grid = np.arange(0, n_steps + 1, stride) * (problem.horizon / n_steps)
    oracle = oracle_solve(problem, n_steps, output_grid=grid)
    traj = solve(problem, subdivision)
    space = problem.family.space
    diff = traj.evaluate_many(oracle.grid) - oracle.states
    gap = float(np.max(space.h_norms(diff)))
    if relative:
        scale = float(np.max(space.h_norms(oracle.states)))
        return gap / scale if scale > 0 else gap
    return gap
