"""Benchmark grids: scripted-motion alignment tables, planner tables and the ablation."""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .engine import run
from .outputs import CASE_COLUMNS, METRIC_COLUMNS, metrics_row, write_rows
from .scenario import (AgentSpec, AlignmentSpec, CircleMotion, DriftSpec, ExchangeMotion,
                       LandmarkLayout, MappingSpec, PlannerMotion, PlannerSpec, Scenario,
                       TrefoilSpec)

BIAS = {"translation": (1.0, 1.0, 0.0), "yaw": (0.0, 0.0, 10.0), "both": (1.0, 1.0, 10.0)}
RATE = {"translation": (0.05, 0.05, 0.0), "yaw": (0.0, 0.0, 0.05), "both": (0.05, 0.05, 0.05)}
AXES = ("translation", "yaw", "both")


def drift_spec(kind, axes):
    if kind == "none":
        return DriftSpec()
    if kind == "constant":
        return DriftSpec(kind="constant", bias=BIAS[axes])
    return DriftSpec(kind="linear", rate=RATE[axes])


def landmark_setup(objects):
    """Layout and mapping settings for flat pads or raised random objects."""
    if objects == "pads":
        return LandmarkLayout(kind="pads"), MappingSpec()
    return (LandmarkLayout(kind="random", extent=12.0, count=160, size=0.5,
                           height_range=(0.02, 0.1)),
            MappingSpec(stretch=5.0))


def alignment_scenario(traj, drift, axes, objects="pads", seed=0, case=0, duration=40.0):
    """Two agents on a shared circle or swapping ends; agent 0 carries the drift."""
    if traj == "circle":
        motions = [CircleMotion(radius=5.0, speed=1.0, phase_deg=0.0, altitude=3.0),
                   CircleMotion(radius=5.0, speed=1.0, phase_deg=-30.0, altitude=3.6)]
    elif traj == "poc":
        motions = [ExchangeMotion(altitude=3.0), ExchangeMotion(reverse=True, altitude=3.6)]
    else:
        raise ValueError(f"unknown trajectory {traj!r}")
    layout, mapping = landmark_setup(objects)
    agents = [AgentSpec(id=0, motion=motions[0], drift=drift_spec(drift, axes)),
              AgentSpec(id=1, motion=motions[1], clock_offset=0.37)]
    return Scenario(name=f"{objects}-{traj}-{drift}-{axes}", seed=seed, duration=duration,
                    agents=agents, landmarks=layout, mapping=mapping,
                    tags={"case": case, "traj": traj, "drift": drift, "axes": axes})


def planner_scenario(drift, axes, objects="pads", seed=0, case=0, duration=24.0):
    """Two planning agents swapping ends of a 12 m corridor; agent 0 carries the drift."""
    layout, mapping = landmark_setup(objects)
    agents = [
        AgentSpec(id=0, motion=PlannerMotion(start=(-6.0, 0.0, 3.0), goal=(6.0, 0.0, 3.0)),
                  drift=drift_spec(drift, axes)),
        AgentSpec(id=1, motion=PlannerMotion(start=(6.0, 0.0, 3.0), goal=(-6.0, 0.0, 3.0),
                                             start_yaw_deg=180.0, goal_yaw_deg=180.0),
                  clock_offset=0.37),
    ]
    return Scenario(name=f"planner-{objects}-{drift}-{axes}", seed=seed, duration=duration,
                    agents=agents, landmarks=layout, mapping=mapping,
                    tags={"case": case, "traj": "planner", "drift": drift, "axes": axes})


def ablation_scenario(enabled, seed=0, case=0, duration=20.0):
    """One agent crossing past a trefoil obstacle while facing it at start and goal."""
    rng = np.random.default_rng([seed, 99])
    obstacle = TrefoilSpec(center=(0.0, 3.2, 2.5), scale=0.6, period=20.0,
                           phase=float(rng.uniform(0.0, 20.0)), half_extent=0.3)
    y0 = float(rng.uniform(-0.5, 0.5))
    agent = AgentSpec(id=0, motion=PlannerMotion(start=(-6.0, y0, 2.5), goal=(6.0, y0, 2.5),
                                                 start_yaw_deg=90.0, goal_yaw_deg=90.0))
    return Scenario(name=f"ablation-{'on' if enabled else 'off'}", seed=seed, duration=duration,
                    agents=[agent], obstacles=[obstacle], alignment=AlignmentSpec(enabled=False),
                    planner=PlannerSpec(use_motion_uncertainty=enabled, start_delay=0.5,
                                        replan_period=1.0),
                    tags={"case": case, "traj": "planner",
                          "drift": "none", "axes": "motion-uncertainty" if enabled else "off"})


def _table_cases(objects, first_case):
    cases = [("circle", "none", "none"), ("poc", "none", "none")]
    for drift in ("constant", "linear"):
        for traj in ("circle", "poc"):
            cases += [(traj, drift, ax) for ax in AXES]
    return [(first_case + k, traj, drift, ax, objects) for k, (traj, drift, ax) in
            enumerate(cases)]


def suite_cases(name):
    """``(case, builder(seed) -> Scenario)`` pairs for a named suite."""
    if name in ("pads-tableII", "random-tableIII"):
        objects, first = ("pads", 1) if name == "pads-tableII" else ("random", 15)
        return [(c, (lambda s, c=c, tr=tr, d=d, ax=ax, o=o:
                     alignment_scenario(tr, d, ax, o, seed=s, case=c)))
                for c, tr, d, ax, o in _table_cases(objects, first)]
    if name in ("multiagent-tableIV", "multiagent-tableV"):
        objects, first = ("pads", 29) if name == "multiagent-tableIV" else ("random", 36)
        grid = [("none", "none")] + [(d, ax) for d in ("constant", "linear") for ax in AXES]
        return [(first + k, (lambda s, c=first + k, d=d, ax=ax, o=objects:
                             planner_scenario(d, ax, o, seed=s, case=c)))
                for k, (d, ax) in enumerate(grid)]
    if name == "planner-ablation":
        return [(1, lambda s: ablation_scenario(True, seed=s, case=1)),
                (2, lambda s: ablation_scenario(False, seed=s, case=2))]
    raise KeyError(name)


SUITES = ("pads-tableII", "random-tableIII", "multiagent-tableIV", "multiagent-tableV",
          "planner-ablation")


def _run_row(scenario):
    return metrics_row(run(scenario))


def run_scenarios(scenarios, jobs=1):
    if jobs <= 1:
        return [_run_row(s) for s in scenarios]
    with ProcessPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(_run_row, scenarios))


def aggregate(rows):
    """One row per case: metric means over seeds, collisions summed."""
    by_case = {}
    for r in rows:
        by_case.setdefault(r["case"], []).append(r)
    out = []
    for case, rs in by_case.items():
        agg = {k: rs[0][k] for k in CASE_COLUMNS if k not in ("seed", "name")}
        agg["name"] = rs[0]["name"]
        agg["runs"] = len(rs)
        for k in METRIC_COLUMNS:
            vals = np.array([float(r[k]) for r in rs])
            if k in ("collisions", "n_commits", "n_aborts", "n_align_epochs"):
                agg[k] = int(vals.sum())
            else:
                agg[k] = float(np.mean(vals)) if np.all(np.isfinite(vals)) else math.nan
        out.append(agg)
    return out


SUITE_COLUMNS = ("case", "name", "runs", "traj", "drift", "axes", "objects") + METRIC_COLUMNS


def run_suite(name, seeds=(0,), jobs=1, out_dir=None):
    """Run every case of ``name`` for each seed; returns ``(per_run_rows, aggregated_rows)``."""
    cases = suite_cases(name)
    scenarios = [build(s) for _, build in cases for s in seeds]
    rows = run_scenarios(scenarios, jobs)
    table = aggregate(rows)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_rows(out / f"{name}.csv", table, SUITE_COLUMNS)
        write_rows(out / f"{name}-runs.csv", rows, CASE_COLUMNS + METRIC_COLUMNS)
    return rows, table
