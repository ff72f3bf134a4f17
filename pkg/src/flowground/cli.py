"""Command-line interface.

Verbs: calibrate-depth, ground-object, ground-hand, rank-grasps, plan,
run, synth. Each verb runs in-process by default; `--server` turns the
CLI into a thin client of the HTTP service for the heavier verbs.

Exit codes: 0 success, 2 input error, 3 pipeline failure, 4 planning failure.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click
import numpy as np

from .bundle import Bundle, BundleSpec, generate_synthetic_bundle
from .config import PipelineConfig
from .errors import (
    EmptyCandidateSet,
    FlowgroundError,
    MissingInput,
    NoValidGrasp,
    SpecInvalid,
)
from .fileio import read_grasps, write_trajectory
from .flow_select import hand_flow_to_ee, object_flow_to_ee, transform_plan
from .grasp import SceneCloud, rank_grasps
from .pipeline import (
    calibrate_bundle_depth,
    compare_to_ground_truth,
    ground_bundle,
    ground_hand_flow,
    metric_flow,
    run_pipeline,
    serialize_report,
    _bundle_camera,
)
from .planner import plan_strategic
from .scripted import Scenario, scenario_interfaces
from .se3 import flow_to_motion

EXIT_INPUT_ERROR = 2
EXIT_PIPELINE_FAILURE = 3
EXIT_PLANNING_FAILURE = 4


def _load_config(config_path, seed):
    config = PipelineConfig.load(config_path) if config_path else PipelineConfig()
    if seed is not None:
        config.seed = int(seed)
    return config


def _emit(report: dict, report_path, fmt: str):
    text = serialize_report(report, machine=(fmt == "machine"))
    if report_path:
        Path(report_path).write_text(text)
    else:
        click.echo(text, nl=False)


def _fail(exc: Exception, code: int):
    click.echo(f"error: {exc}", err=True)
    sys.exit(code)


@click.group()
def main():
    """Ground generated-video artifacts into metric robot trajectories."""


def _common_options(f):
    f = click.option("--config", "config_path", type=click.Path(exists=True),
                     default=None, help="pipeline config JSON")(f)
    f = click.option("--seed", type=int, default=None, help="override the config seed")(f)
    f = click.option("--report", "report_path", type=click.Path(), default=None)(f)
    f = click.option("--format", "fmt", type=click.Choice(["text", "machine"]),
                     default="machine")(f)
    return f


@main.command("synth")
@click.argument("spec_path", type=click.Path(exists=True))
@click.argument("output_dir", type=click.Path())
@click.option("--seed", type=int, default=None)
def synth(spec_path, output_dir, seed):
    """Generate a synthetic scene bundle from a spec file."""
    try:
        spec = BundleSpec.load(spec_path)
        out = generate_synthetic_bundle(spec, output_dir, seed=seed)
    except (SpecInvalid, json.JSONDecodeError, OSError) as e:
        _fail(e, EXIT_INPUT_ERROR)
    click.echo(str(out))


@main.command("calibrate-depth")
@click.argument("bundle_dir", type=click.Path(exists=True))
@_common_options
def calibrate_depth(bundle_dir, config_path, seed, report_path, fmt):
    """Fit the affine depth model of a bundle."""
    try:
        config = _load_config(config_path, seed)
        model, _ = calibrate_bundle_depth(Bundle.load(bundle_dir), config)
    except (MissingInput, ValueError) as e:
        _fail(e, EXIT_INPUT_ERROR)
    except FlowgroundError as e:
        _fail(e, EXIT_PIPELINE_FAILURE)
    report = {"scale": model.scale, "shift": model.shift,
              "inlier_count": model.inlier_count,
              "inlier_ratio": model.inlier_ratio}
    text = json.dumps(report, indent=2, sort_keys=True) + "\n" if fmt == "machine" else \
        f"scale {model.scale:.9g}\nshift {model.shift:.9g}\ninlier ratio {model.inlier_ratio:.4f}\n"
    if report_path:
        Path(report_path).write_text(text)
    else:
        click.echo(text, nl=False)


@main.command("ground-object")
@click.argument("bundle_dir", type=click.Path(exists=True))
@click.argument("trajectory_path", type=click.Path())
@_common_options
def ground_object(bundle_dir, trajectory_path, config_path, seed, report_path, fmt):
    """Ground the object flow of a bundle into an end-effector trajectory."""
    try:
        config = _load_config(config_path, seed)
        bundle = Bundle.load(bundle_dir)
        camera = _bundle_camera(bundle, config)
        model, _ = calibrate_bundle_depth(bundle, config)
        flow = metric_flow(bundle, model, camera)
        motions = flow_to_motion(flow)
        candidates = read_grasps(bundle.path("grasps"))
        contact_points = flow.positions[flow.validity[:, 0], 0]
        ranking = rank_grasps(candidates, flow.positions[:, 0], contact_points,
                              SceneCloud(np.zeros((0, 3)), np.zeros(0, dtype=int)),
                              max_dist=config.contact_max_dist,
                              clearance=config.collision_clearance,
                              band=config.support_band)
        plan = transform_plan(object_flow_to_ee(motions, ranking[0].candidate),
                              config.extrinsic(), config.tool_offset())
        write_trajectory(trajectory_path, plan.ee_trajectory)
    except (MissingInput, ValueError) as e:
        _fail(e, EXIT_INPUT_ERROR)
    except (NoValidGrasp, FlowgroundError) as e:
        _fail(e, EXIT_PIPELINE_FAILURE)
    _emit({"source": plan.source, "poses": len(plan.ee_trajectory),
           "grasp_index": ranking[0].index}, report_path, fmt)


@main.command("ground-hand")
@click.argument("bundle_dir", type=click.Path(exists=True))
@click.argument("trajectory_path", type=click.Path())
@click.option("--contact-finger", default=None,
              help="non-prehensile mode with this contact finger")
@_common_options
def ground_hand(bundle_dir, trajectory_path, contact_finger, config_path, seed,
                report_path, fmt):
    """Ground the hand flow of a bundle into an end-effector trajectory."""
    try:
        config = _load_config(config_path, seed)
        bundle = Bundle.load(bundle_dir)
        camera = _bundle_camera(bundle, config)
        _, calibrated = calibrate_bundle_depth(bundle, config)
        poses, interval, details = ground_hand_flow(
            bundle, config, camera, calibrated, contact_finger)
        plan = transform_plan(hand_flow_to_ee(poses), config.extrinsic(),
                              config.tool_offset())
        write_trajectory(trajectory_path, plan.ee_trajectory)
    except (MissingInput, ValueError) as e:
        _fail(e, EXIT_INPUT_ERROR)
    except FlowgroundError as e:
        _fail(e, EXIT_PIPELINE_FAILURE)
    _emit({"source": "hand-flow", "poses": len(plan.ee_trajectory), **details},
          report_path, fmt)


@main.command("rank-grasps")
@click.argument("bundle_dir", type=click.Path(exists=True))
@_common_options
def rank_grasps_cmd(bundle_dir, config_path, seed, report_path, fmt):
    """Rank a bundle's grasp candidates against its object flow."""
    try:
        config = _load_config(config_path, seed)
        bundle = Bundle.load(bundle_dir)
        camera = _bundle_camera(bundle, config)
        model, _ = calibrate_bundle_depth(bundle, config)
        flow = metric_flow(bundle, model, camera)
        candidates = read_grasps(bundle.path("grasps"))
        contact_points = flow.positions[flow.validity[:, 0], 0]
        ranking = rank_grasps(candidates, flow.positions[:, 0], contact_points,
                              SceneCloud(np.zeros((0, 3)), np.zeros(0, dtype=int)),
                              max_dist=config.contact_max_dist,
                              clearance=config.collision_clearance,
                              band=config.support_band)
    except (MissingInput, ValueError) as e:
        _fail(e, EXIT_INPUT_ERROR)
    except (NoValidGrasp, FlowgroundError) as e:
        _fail(e, EXIT_PIPELINE_FAILURE)
    _emit({"ranking": [{"index": s.index, "confidence": s.candidate.confidence,
                        "support": s.support, "total": s.total} for s in ranking]},
          report_path, fmt)


@main.command("plan")
@click.argument("scenario_path", type=click.Path(exists=True))
@click.option("--horizon", type=int, default=None,
              help="tree-search depth (defaults to the scenario's max_steps)")
@_common_options
def plan_cmd(scenario_path, horizon, config_path, seed, report_path, fmt):
    """Run the strategic tree search on a scripted scenario."""
    try:
        config = _load_config(config_path, seed)
        scenario = Scenario.load(scenario_path)
        interfaces = scenario_interfaces(scenario)
        best = plan_strategic(scenario.initial_observation, scenario.goal,
                              horizon or scenario.max_steps, config.n_c,
                              config.actions_per_beam, config.rollouts_strategic,
                              interfaces.proposer, interfaces.generator,
                              interfaces.ranker, s_min=config.s_min)
    except (MissingInput, ValueError, json.JSONDecodeError, KeyError) as e:
        _fail(e, EXIT_INPUT_ERROR)
    except EmptyCandidateSet as e:
        _fail(e, EXIT_PLANNING_FAILURE)
    _emit({"plan": list(best.history), "score": best.score,
           "final_observation": best.observation_ref}, report_path, fmt)


@main.command("run")
@click.argument("bundle_dir", type=click.Path(exists=True))
@click.option("--trajectory", "trajectory_path", type=click.Path(), default=None)
@click.option("--check-ground-truth", is_flag=True, default=False,
              help="compare the emitted trajectory against the bundle's ground truth")
@click.option("--server", default=None,
              help="route through a running service, e.g. http://localhost:8000")
@_common_options
def run_cmd(bundle_dir, trajectory_path, check_ground_truth, server, config_path,
            seed, report_path, fmt):
    """Full pipeline: calibrate, ground, rank, and close the planner loop."""
    if server is not None:
        _run_via_server(server, bundle_dir, trajectory_path, config_path, seed,
                        report_path, fmt)
        return
    try:
        config = _load_config(config_path, seed)
        report = run_pipeline(config, bundle_dir, trajectory_path)
        if check_ground_truth:
            bundle = Bundle.load(bundle_dir)
            plan, _ = ground_bundle(bundle, config)
            report["ground_truth"] = compare_to_ground_truth(bundle, plan)
    except (MissingInput, ValueError, json.JSONDecodeError) as e:
        _fail(e, EXIT_INPUT_ERROR)
    except FlowgroundError as e:
        _fail(e, EXIT_PIPELINE_FAILURE)
    _emit(report, report_path, fmt)
    if report["status"] != "success":
        sys.exit(EXIT_PLANNING_FAILURE)


def _run_via_server(server, bundle_dir, trajectory_path, config_path, seed,
                    report_path, fmt):
    import httpx

    payload = {"bundle_dir": str(Path(bundle_dir).resolve()),
               "trajectory_path": str(Path(trajectory_path).resolve()) if trajectory_path else None,
               "config_path": str(Path(config_path).resolve()) if config_path else None,
               "seed": seed}
    resp = httpx.post(f"{server.rstrip('/')}/run", json=payload, timeout=120.0)
    if resp.status_code == 400:
        _fail(RuntimeError(resp.json().get("detail", "input error")), EXIT_INPUT_ERROR)
    if resp.status_code != 200:
        _fail(RuntimeError(resp.text), EXIT_PIPELINE_FAILURE)
    report = resp.json()
    _emit(report, report_path, fmt)
    if report["status"] != "success":
        sys.exit(EXIT_PLANNING_FAILURE)


if __name__ == "__main__":
    main()
