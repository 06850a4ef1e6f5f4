import os
import functools
import logging

import click

from agents.evaluation_agent import EvaluationAgent, yt_slice
from agents.flow_agent import estimate_clip_flows
from agents.mask_agent import MaskAgent
from config import setup_logging
from pipeline.ablation import run_ablation
from pipeline.inpaint_run import run_inpaint
from report_generator import ReportGenerator, emit_report
from scene_generator import SceneGenerator, default_suite, generate_scene, load_scene_spec
from utils.errors import VipError
from utils.settings import load_config
from utils.video_io import load_frame_dir, save_frame_dir

logger = logging.getLogger(__name__)


def handle_errors(command):
    """Turn pipeline errors into a one-line message and exit status 1"""

    @functools.wraps(command)
    def wrapper(*args, **kwargs):
        try:
            return command(*args, **kwargs)
        except VipError as e:
            logger.error(f"❌ {e}")
            raise click.ClickException(str(e)) from e

    return wrapper


def build_config(ctx: click.Context, **overrides):
    obj = ctx.obj
    layered = {"seed": obj["seed"], "threads": obj["threads"], "debug_dir": obj["debug_dir"]}
    layered.update(overrides)
    return load_config(obj["config"], layered)


@click.group()
@click.option("--config", "config_path", type=click.Path(dir_okay=False), default=None,
              help="Dotted-key config file (e.g. fusion.window_len = 24)")
@click.option("--seed", type=int, default=None, help="Seed for the sampling noise")
@click.option("--debug-dir", type=click.Path(file_okay=False), default=None,
              help="Write every intermediate under this directory")
@click.option("--threads", type=int, default=None, help="Worker threads; 1 is fully deterministic")
@click.option("--verbose", is_flag=True, help="Debug logging")
@click.pass_context
def cli(ctx, config_path, seed, debug_dir, threads, verbose):
    """Video object removal with flow completion, reference frames and dual-fusion sampling"""
    setup_logging("DEBUG" if verbose else None)
    ctx.ensure_object(dict)
    ctx.obj.update(config=config_path, seed=seed, debug_dir=debug_dir, threads=threads)


@cli.command()
@click.option("--spec", "spec_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@click.option("--random-masks", type=int, default=0, show_default=True,
              help="Add this many seeded random holes to masks/")
@click.option("--moving", is_flag=True, help="Random holes move by an integer velocity")
@handle_errors
def synth(spec_path, out_dir, random_masks, moving):
    """Render a synthetic scene with its clean plate and masks"""
    if random_masks < 0:
        raise click.BadParameter("must be >= 0", param_hint="--random-masks")
    SceneGenerator(load_scene_spec(spec_path)).save(out_dir, random_masks, moving)
    click.echo(f"✅ Scene written to {out_dir}")


@cli.command()
@click.option("--input", "input_dir", required=True, type=click.Path(exists=True, file_okay=False),
              help="Scene directory with frames/ and sprite_masks/ (or masks/)")
@click.option("--anchors", required=True, help="Comma-separated anchor frame indices")
@click.option("--pair-shadows", is_flag=True, help="Merge paired shadows from shadow_masks/ into the humans")
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@click.pass_context
@handle_errors
def masks(ctx, input_dir, anchors, pair_shadows, out_dir):
    """Propagate anchor-frame masks to every frame"""
    cfg = build_config(ctx, **{"io.root": input_dir, "masks.pair_shadows": pair_shadows or None})
    indices = [int(a) for a in anchors.split(",") if a.strip()]
    clip = load_frame_dir(cfg.io.path("frames"), "clip", cfg.fps)
    human_dir = cfg.io.path("sprite_masks")
    if not os.path.isdir(human_dir):
        human_dir = cfg.io.path("masks")
    humans = load_frame_dir(human_dir, "mask")
    shadows = load_frame_dir(cfg.io.path("shadow_masks"), "mask") if pair_shadows else None
    agent = MaskAgent(cfg.pairing, cfg.masks.dilation_radius, cfg.flow.radius)
    instances = agent.anchor_instances(humans, indices, shadows)
    save_frame_dir(agent.propagate(clip, instances), out_dir)
    for warning in agent.warnings:
        click.echo(f"⚠️ {warning}")
    click.echo(f"✅ Masks written to {out_dir}")


@cli.command()
@click.option("--input", "input_dir", required=True, type=click.Path(exists=True, file_okay=False),
              help="Directory with frames/, masks/ and optionally plate/")
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@click.option("--anchors", default=None, help="Comma-separated anchor frames; masks are propagated from them")
@click.option("--report", "report_path", default=None, help="Report JSON path (default <out>/report.json)")
@click.pass_context
@handle_errors
def inpaint(ctx, input_dir, out_dir, anchors, report_path):
    """Remove the masked objects from a frame directory"""
    overrides = {"io.root": input_dir, "io.out": out_dir}
    if anchors:
        overrides["masks.anchors"] = [int(a) for a in anchors.split(",") if a.strip()]
    cfg = build_config(ctx, **overrides)
    result = run_inpaint(cfg)
    save_frame_dir(result.output, out_dir)
    emit_report(result.report, report_path or os.path.join(out_dir, "report.json"))
    for warning in result.warnings:
        click.echo(f"⚠️ {warning}")
    click.echo(f"✅ Output written to {out_dir}")


@cli.command(name="eval")
@click.option("--output", "output_dir", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--plate", "plate_dir", default=None, type=click.Path(exists=True, file_okay=False))
@click.option("--report", "report_path", required=True)
@click.pass_context
@handle_errors
def evaluate(ctx, output_dir, plate_dir, report_path):
    """Score an output clip against its clean plate"""
    cfg = build_config(ctx)
    output = load_frame_dir(output_dir, "clip", cfg.fps)
    plate = load_frame_dir(plate_dir, "clip", cfg.fps) if plate_dir else None
    flows = estimate_clip_flows(output, None, cfg.flow.block, cfg.flow.radius, cfg.threads)
    emit_report(EvaluationAgent().evaluate(output, flows, plate=plate), report_path)


@cli.command()
@click.option("--input", "input_dir", default=None, type=click.Path(exists=True, file_okay=False))
@click.option("--suite", type=int, default=None, help="Run on N seeded synthetic scenes instead")
@click.option("--out", "out_path", required=True, help="CSV table path")
@click.pass_context
@handle_errors
def ablate(ctx, input_dir, suite, out_path):
    """Run the four OP / R stage combinations and write a CSV table"""
    if input_dir is None and suite is None:
        raise click.UsageError("give --input or --suite")
    cfg = build_config(ctx, **({"io.root": input_dir} if input_dir else {}))
    inputs = None
    if suite:
        inputs = []
        for spec in default_suite(suite, cfg.seed):
            scene = generate_scene(spec)
            inputs.append((scene.clip, scene.sprite_masks.union(scene.shadow_masks), scene.plate))
    rows = run_ablation(cfg, inputs=inputs)
    emit_report(rows, out_path)
    click.echo(ReportGenerator().create_summary(rows))


@cli.command(name="slice")
@click.option("--input", "input_dir", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--column", type=int, required=True)
@click.option("--out", "out_path", required=True)
@handle_errors
def slice_command(input_dir, column, out_path):
    """Save the Y-T slice of one pixel column"""
    yt_slice(load_frame_dir(input_dir, "clip"), column, out_path)


def main():
    cli(obj={})


if __name__ == "__main__":
    main()
