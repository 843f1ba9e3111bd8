"""Experiment CLI: configuration ingestion, pipelines, and CSV reports.

Exit codes: 0 success, 1 usage/config error, 2 tolerance or invariant failure.
"""
from __future__ import annotations

import argparse
import configparser
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import convergence as conv
from . import invariance as inv
from . import mr
from .forms import Subdivision, certify_shift, estimate_constants, rescale
from .presets import (PresetProblem, convex_set_for, get_preset,
                      preset_descriptions, resolved_constants)
from .propagator import ProblemData, oracle_solve, solve

__all__ = ["ExperimentConfig", "main", "run"]

CHAIN_TOL = 1e-8
PRODUCT_TOL = 1e-8
MARGIN_TOL = 1e-10
CRITERION_TOL = 1e-12
VIOLATION_TOL = 1e-10

_EXPERIMENT_KEYS = {"preset", "n_cells", "horizon", "slab_counts", "seed",
                    "omega", "oracle_steps", "threads"}
_LOAD_KEYS = {"name", "amplitude"}
_SET_KEYS = {"kind", "metric", "lower", "upper", "radius", "offset"}


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    preset: str
    n_cells: int | None = None
    horizon: float | None = None
    slab_counts: tuple[int, ...] | None = None
    seed: int = 0
    omega: float | None = None
    oracle_steps: int = 10_000
    threads: int = 1
    load_name: str | None = None
    load_amplitude: float = 1.0
    set_kind: str = "box"
    set_metric: str = "lumped"
    set_params: dict = field(default_factory=dict)
    out_dir: Path = Path(".")

    @classmethod
    def from_file(cls, path: Path) -> "ExperimentConfig":
        parser = configparser.ConfigParser()
        if not parser.read(path):
            raise ConfigError(f"cannot read config file {path}")
        for section, allowed in (("experiment", _EXPERIMENT_KEYS),
                                 ("load", _LOAD_KEYS), ("convex_set", _SET_KEYS)):
            if parser.has_section(section):
                unknown = set(parser[section]) - allowed
                if unknown:
                    raise ConfigError(f"unknown keys in [{section}]: {sorted(unknown)}")
        if not parser.has_section("experiment") or "preset" not in parser["experiment"]:
            raise ConfigError("config needs an [experiment] section with a preset")
        exp = parser["experiment"]
        cfg = cls(preset=exp["preset"])
        if "n_cells" in exp:
            cfg.n_cells = exp.getint("n_cells")
        if "horizon" in exp:
            cfg.horizon = exp.getfloat("horizon")
        if "slab_counts" in exp:
            cfg.slab_counts = tuple(
                int(tok) for tok in exp["slab_counts"].replace(",", " ").split())
        if "seed" in exp:
            cfg.seed = exp.getint("seed")
        if "omega" in exp:
            cfg.omega = exp.getfloat("omega")
        if "oracle_steps" in exp:
            cfg.oracle_steps = exp.getint("oracle_steps")
        if "threads" in exp:
            cfg.threads = exp.getint("threads")
        if parser.has_section("load"):
            cfg.load_name = parser["load"].get("name")
            cfg.load_amplitude = parser["load"].getfloat("amplitude", fallback=1.0)
        if parser.has_section("convex_set"):
            sec = parser["convex_set"]
            cfg.set_kind = sec.get("kind", "box")
            cfg.set_metric = sec.get("metric", "lumped")
            for key in ("lower", "upper", "radius", "offset"):
                if key in sec:
                    cfg.set_params[key] = sec.getfloat(key)
        cfg.validate()
        return cfg

    def validate(self) -> None:
        if self.slab_counts is not None:
            for a, b in zip(self.slab_counts[:-1], self.slab_counts[1:]):
                if b <= a or b % a != 0:
                    raise ConfigError(f"slab_counts must be nested dyadic, got {self.slab_counts}")
        if self.threads < 1:
            raise ConfigError("threads must be >= 1")


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, str):
        return x
    return f"{float(x):.16e}"


def write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(x) for x in row) + "\n")


@dataclass
class _Prepared:
    config: ExperimentConfig
    preset: PresetProblem
    problem: ProblemData
    constants: object
    slab_counts: tuple[int, ...]
    shift: float


def _prepare(config: ExperimentConfig) -> _Prepared:
    preset = get_preset(config.preset, n_cells=config.n_cells,
                        horizon=config.horizon, load=config.load_name,
                        amplitude=config.load_amplitude)
    constants = resolved_constants(preset)
    problem = preset.problem
    shift = 0.0
    if config.omega is not None and config.omega != 0.0:
        shift = config.omega
    elif constants.coercivity is not None and constants.coercivity <= 0:
        shift = certify_shift(problem.family)
    if shift != 0.0:
        problem = ProblemData(rescale(problem.family, shift), problem.u0,
                              load=problem.load, tag=problem.tag + f"+shift{shift:g}")
        constants = resolved_constants(
            PresetProblem(preset.name, preset.description, problem,
                          preset.constants, preset.default_slab_counts))
    counts = config.slab_counts or preset.default_slab_counts
    return _Prepared(config, preset, problem, constants, counts, shift)


def _run_constants(prep: _Prepared, lines: list[str]) -> int:
    declared = prep.preset.constants
    sampled = estimate_constants(prep.problem.family)
    if not declared.certified_on_samples:
        parts = [f"{k}={v:g}" for k, v in
                 (("M", declared.bound), ("alpha", declared.coercivity),
                  ("L", declared.lipschitz)) if v is not None]
        lines.append("declared: " + " ".join(parts))
    lines.append(f"sampled: M={sampled.bound:.6g} alpha={sampled.coercivity:.6g} "
                 f"L={sampled.lipschitz:.6g} (certified on samples)")
    if prep.shift:
        lines.append(f"rescaled by omega={prep.shift:g} before solving")
    if sampled.coercivity is not None and sampled.coercivity <= 0:
        lines.append("WARNING: family not coercive at the requested shift")
        return 2
    return 0


def _run_solve(prep: _Prepared, out: Path, lines: list[str]) -> int:
    problem, constants = prep.problem, prep.constants
    space = problem.family.space
    status = 0
    rows = []
    for n in prep.slab_counts:
        sub = Subdivision.uniform(problem.horizon, n)
        traj = solve(problem, sub)
        report = mr.mr_norms(traj)
        res_chain = mr.check_chain_rule(traj)
        res_prod = (mr.check_product_rule(traj)
                    if problem.family.symmetric else float("nan"))
        margin3 = mr.check_lemma3(traj, problem, constants.coercivity)
        margin_sup = (mr.check_lemma_indepmax(traj, constants=constants)
                      if problem.family.symmetric else float("nan"))
        ratio = mr.check_H_estimate(traj, problem, constants)
        rows.append([n, sub.mesh, report.l2V, report.h1H, report.h1Vp, report.supV,
                     report.mr_vvp, report.mr_vh, res_chain, res_prod,
                     margin3, margin_sup, ratio])
        if res_chain > CHAIN_TOL or (np.isfinite(res_prod) and res_prod > PRODUCT_TOL):
            lines.append(f"FAIL identity residual at n={n}: chain={res_chain:.3e} "
                         f"product={res_prod:.3e}")
            status = 2
        if margin3 < 0 or (np.isfinite(margin_sup) and margin_sup < -MARGIN_TOL):
            lines.append(f"FAIL estimate margin at n={n}: lem3={margin3:.3e} "
                         f"sup={margin_sup:.3e}")
            status = 2
        traj_rows = [[t] + list(traj.states[:, i]) for i, t in enumerate(traj.grid)]
        write_csv(out / f"traj_{n}.csv",
                  ["t"] + [f"node_{j}" for j in range(space.dim)], traj_rows)
    write_csv(out / "mr.csv",
              ["n_slabs", "mesh", "l2V", "h1H", "h1Vp", "supV", "mr_vvp", "mr_vh",
               "residual_chain", "residual_product", "margin_lem3",
               "margin_indepmax", "ratio_H"], rows)
    lines.append(f"mr: {len(rows)} ladder points written")
    return status


def _run_converge(prep: _Prepared, out: Path, lines: list[str]) -> int:
    problem = prep.problem
    executor = (ThreadPoolExecutor(prep.config.threads)
                if prep.config.threads > 1 else None)
    try:
        study = conv.refine(problem, prep.slab_counts, executor=executor)
    finally:
        if executor is not None:
            executor.shutdown()
    stride = max(1, prep.config.oracle_steps // 1000)
    ogrid = np.arange(0, prep.config.oracle_steps + 1, stride) \
        * (problem.horizon / prep.config.oracle_steps)
    oracle = oracle_solve(problem, prep.config.oracle_steps, output_grid=ogrid)
    space = problem.family.space
    rows = []
    for i, (n, mesh) in enumerate(zip(study.slab_counts, study.meshes)):
        diff_l2v = study.diffs_l2V[i - 1] if i > 0 else float("nan")
        diff_suph = study.diffs_supH[i - 1] if i > 0 else float("nan")
        gap = float(np.max(space.h_norms(
            study.trajectories[i].evaluate_many(oracle.grid) - oracle.states)))
        rows.append([n, mesh, diff_l2v, diff_suph, study.rate, gap])
    write_csv(out / "convergence.csv",
              ["n_slabs", "mesh", "diff_l2V", "diff_supH", "rate_estimate",
               "oracle_gap"], rows)
    lines.append("convergence ladder " + "->".join(str(n) for n in study.slab_counts))
    lines.append("diff_l2V: " + " ".join(f"{d:.3e}" for d in study.diffs_l2V))
    lines.append(f"fitted rate: {study.rate:.3f}")
    return 0


def _run_invariance(prep: _Prepared, out: Path, lines: list[str]) -> int:
    problem, config = prep.problem, prep.config
    family = problem.family
    cset = convex_set_for(prep.preset, kind=config.set_kind,
                          metric=config.set_metric, **config.set_params)
    crit = inv.check_criterion(family, cset, n_vectors=10_000, seed=config.seed,
                               load=problem.load)
    sym_margin = float("nan")
    if family.symmetric:
        try:
            sym = inv.check_criterion_symmetric(family, cset, n_vectors=10_000,
                                                seed=config.seed)
            sym_margin = sym.margin
        except ValueError:
            pass
    worst = 0.0
    witness_t = 0.0
    for n in prep.slab_counts:
        traj = solve(problem, Subdivision.uniform(problem.horizon, n))
        violation = inv.audit_trajectory(traj, cset)
        if violation > worst:
            worst = violation
            dists = [cset.distance(traj.states[:, i]) for i in range(traj.grid.size)]
            witness_t = float(traj.grid[int(np.argmax(dists))])
    write_csv(out / "invariance.csv",
              ["preset", "set_kind", "metric", "criterion_margin",
               "symmetric_margin", "worst_violation", "witness_t", "witness_norm"],
              [[prep.preset.name, config.set_kind, config.set_metric, crit.margin,
                sym_margin, worst, witness_t,
                float(np.linalg.norm(crit.witness))]])
    lines.append(f"criterion margin {crit.margin:.3e}, worst violation {worst:.3e}")
    if prep.preset.expect_invariant:
        if crit.margin < -CRITERION_TOL or worst > VIOLATION_TOL:
            lines.append("FAIL: invariant preset shows a violation")
            return 2
    else:
        if crit.margin >= -CRITERION_TOL or worst <= VIOLATION_TOL:
            lines.append("FAIL: counterexample preset was not detected")
            return 2
        lines.append("counterexample detected as expected")
    return 0


def run(command: str, config: ExperimentConfig) -> int:
    out = config.out_dir
    out.mkdir(parents=True, exist_ok=True)
    prep = _prepare(config)
    lines = [f"preset: {prep.preset.name}", f"seed: {config.seed}"]
    status = 0
    if command in ("constants", "all"):
        status = max(status, _run_constants(prep, lines))
    if command in ("solve", "all"):
        status = max(status, _run_solve(prep, out, lines))
    if command in ("converge", "all"):
        status = max(status, _run_converge(prep, out, lines))
    if command in ("invariance", "all"):
        status = max(status, _run_invariance(prep, out, lines))
    summary = "\n".join(lines) + "\n"
    sys.stdout.write(summary)
    (out / "summary.txt").write_text(summary)
    return status


def list_presets() -> str:
    width = max(len(name) for name, _ in preset_descriptions())
    return "\n".join(f"{name:<{width}}  {desc}" for name, desc in preset_descriptions())


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="evolveq",
                                     description="frozen-coefficient evolution "
                                     "solver and verification harness")
    parser.add_argument("command",
                        choices=["constants", "solve", "converge", "invariance",
                                 "all", "list-presets"])
    parser.add_argument("--config", type=Path, help="experiment config file")
    parser.add_argument("--out", type=Path, help="output directory")
    parser.add_argument("--seed", type=int, help="override the config seed")
    parser.add_argument("--threads", type=int, help="worker threads for ladder solves")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "list-presets":
        print(list_presets())
        return 0
    if args.config is None:
        print("error: this command requires --config", file=sys.stderr)
        return 1
    try:
        config = ExperimentConfig.from_file(args.config)
    except (ConfigError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    if args.seed is not None:
        config.seed = args.seed
    if args.threads is not None:
        config.threads = args.threads
    out = args.out or os.environ.get("EVOLVEQ_OUT")
    if out is not None:
        config.out_dir = Path(out)
    try:
        config.validate()
        return run(args.command, config)
    except (ConfigError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
