"""Command-line entry point wiring the pipeline stages.

Exit codes: 0 success, 1 usage or configuration error, 2 warnings only,
3 validation errors, 4 engine or backend failure.
"""

from __future__ import annotations

import functools
import json
import sys
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:
    import tomli as tomllib

import click

from .assembly import (
    OverlappingCues,
    UnmergedScene,
    bless,
    load_artifacts,
    load_regression_scene,
    merge_project,
    regression_run,
    save_regression_inputs,
    write_artifact,
    write_bundle,
    write_manifest,
)
from .engines import EngineFailure, EngineUnavailable, ManimAdapter, StubEngine
from .generation import (
    CODE_TEMPLATE,
    NARRATION_TEMPLATE,
    PLAN_TEMPLATE,
    BackendFailure,
    MaxAttemptsExceeded,
    PlanRejected,
    RemoteBackend,
    TemplateBackend,
    build_plan,
    draft_tracks,
)
from .plan_model import ConceptBrief, plan_from_json, plan_to_json
from .sync import DEFAULT_TOLERANCE_S, extract_timeline, timeline_from_json, timeline_to_json
from .validation import report_to_json, route, validate_scene

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_WARNINGS = 2
EXIT_VALIDATION = 3
EXIT_ENGINE = 4

CONFIG_NAME = "scenesmith.toml"


def _load_config(root: Path) -> dict:
    for candidate in (root / CONFIG_NAME, Path.cwd() / CONFIG_NAME):
        if candidate.is_file():
            with candidate.open("rb") as fh:
                return tomllib.load(fh)
    return {}


def _setting(config: dict, key: str, flag_value, default):
    if flag_value is not None:
        return flag_value
    return config.get(key, default)


def _make_backend(name: str, config: dict):
    if name == "template":
        return TemplateBackend()
    if name == "remote":
        url = config.get("backend_url")
        if not url:
            raise click.UsageError("remote backend requires backend_url in scenesmith.toml")
        return RemoteBackend(url, model_id=config.get("model_id", "remote"))
    raise click.UsageError(f"unknown backend {name!r}")


def _make_engine(name: str):
    if name == "stub":
        return StubEngine()
    if name == "manim":
        return ManimAdapter()
    raise click.UsageError(f"unknown engine {name!r}")


def _mapped_exit(fn):
    """Translate pipeline exceptions into the documented exit codes."""
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            code = fn(*args, **kwargs)
        except click.UsageError:
            raise
        except PlanRejected as exc:
            click.echo(f"plan rejected: {exc}", err=True)
            sys.exit(EXIT_VALIDATION)
        except (UnmergedScene, OverlappingCues) as exc:
            click.echo(f"assembly blocked: {exc}", err=True)
            sys.exit(EXIT_VALIDATION)
        except (BackendFailure, MaxAttemptsExceeded, EngineFailure,
                EngineUnavailable) as exc:
            click.echo(f"engine/backend failure: {exc}", err=True)
            sys.exit(EXIT_ENGINE)
        except (OSError, ValueError, KeyError, json.JSONDecodeError) as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(EXIT_USAGE)
        sys.exit(code if code is not None else EXIT_OK)
    return wrapper


root_option = click.option("--root", type=click.Path(path_type=Path), default=None,
                           help="Project directory (default: ./project or config).")
seed_option = click.option("--seed", type=int, default=None, help="Generation seed.")
backend_option = click.option("--backend", type=str, default=None,
                              help="Generator backend: template or remote.")
engine_option = click.option("--engine", type=str, default=None,
                             help="Render engine: stub or manim.")


def _resolve(root: Path | None) -> tuple[Path, dict]:
    config = _load_config(root or Path.cwd())
    resolved = root or Path(config.get("root", "project"))
    return resolved, config


@click.group()
def main() -> None:
    """Concept briefs to validated, narration-synchronized animation projects."""


@main.command("plan")
@click.argument("brief_file", type=click.Path(exists=True, path_type=Path))
@root_option
@seed_option
@backend_option
@_mapped_exit
def cmd_plan(brief_file: Path, root: Path | None, seed: int | None, backend: str | None) -> int:
    """Create a project directory and a validated lesson plan from a brief."""
    root, config = _resolve(root)
    seed = _setting(config, "seed", seed, 0)
    gen = _make_backend(_setting(config, "backend", backend, "template"), config)

    raw = json.loads(brief_file.read_text())
    brief = ConceptBrief(
        topic_title=raw["topic_title"],
        audience_level=raw["audience_level"],
        learning_objective=raw["learning_objective"],
        target_duration_s=float(raw["target_duration_s"]),
        notes=raw.get("notes"),
    )
    plan = build_plan(brief, gen, seed=seed)
    root.mkdir(parents=True, exist_ok=True)
    (root / "brief.json").write_text(json.dumps(raw, indent=2, sort_keys=True))
    (root / "plan.json").write_text(json.dumps(plan_to_json(plan), indent=2, sort_keys=True))
    click.echo(f"plan written: {root / 'plan.json'} ({len(plan.scenes)} scenes)")
    return EXIT_OK


def _load_plan(root: Path):
    plan_path = root / "plan.json"
    if not plan_path.is_file():
        raise click.UsageError(f"no plan.json in {root}; run `scenesmith plan` first")
    return plan_from_json(json.loads(plan_path.read_text()))


@main.command("draft")
@root_option
@seed_option
@backend_option
@_mapped_exit
def cmd_draft(root: Path | None, seed: int | None, backend: str | None) -> int:
    """Draft narration and code for every planned scene."""
    root, config = _resolve(root)
    seed = _setting(config, "seed", seed, 0)
    gen = _make_backend(_setting(config, "backend", backend, "template"), config)
    plan = _load_plan(root)

    artifacts, failures = draft_tracks(plan, gen, seed=seed)
    for scene_tracks in artifacts.values():
        for artifact in scene_tracks.values():
            write_artifact(root, artifact)
    timelines_dir = root / "timelines"
    timelines_dir.mkdir(parents=True, exist_ok=True)
    for scene in plan.scenes:
        tracks = artifacts.get(scene.scene_id, {})
        if "narration" in tracks and "code" in tracks:
            t = extract_timeline(tracks["narration"], tracks["code"], scene)
            (timelines_dir / f"{scene.scene_id}.json").write_text(
                json.dumps(timeline_to_json(t), indent=2, sort_keys=True))
    if failures:
        for failure in failures:
            click.echo(f"draft failed: {failure}", err=True)
        return EXIT_ENGINE
    click.echo(f"drafted {len(artifacts)} scenes into {root / 'artifacts'}")
    return EXIT_OK


def _load_timelines(root: Path) -> dict:
    timelines = {}
    base = root / "timelines"
    if base.is_dir():
        for path in sorted(base.glob("*.json")):
            t = timeline_from_json(json.loads(path.read_text()))
            timelines[t.scene_id] = t
    return timelines


@main.command("validate")
@root_option
@seed_option
@engine_option
@click.option("--tolerance", type=float, default=None, help="Alignment tolerance in seconds.")
@_mapped_exit
def cmd_validate(root: Path | None, seed: int | None, engine: str | None,
                 tolerance: float | None) -> int:
    """Run the validation chain on every drafted scene."""
    root, config = _resolve(root)
    tolerance = _setting(config, "tolerance", tolerance, DEFAULT_TOLERANCE_S)
    eng = _make_engine(_setting(config, "engine", engine, "stub"))
    plan = _load_plan(root)
    artifacts = load_artifacts(root)

    out_dir = root / "validation"
    out_dir.mkdir(parents=True, exist_ok=True)
    timelines_dir = root / "timelines"
    timelines_dir.mkdir(parents=True, exist_ok=True)
    saw_error = saw_warning = False
    for scene in plan.scenes:
        tracks = artifacts.get(scene.scene_id)
        if not tracks or "narration" not in tracks or "code" not in tracks:
            raise click.UsageError(f"scene {scene.scene_id} has no drafts; run `scenesmith draft`")
        # rebuild the timeline from the latest artifacts so edits are seen
        t = extract_timeline(tracks["narration"], tracks["code"], scene)
        (timelines_dir / f"{scene.scene_id}.json").write_text(
            json.dumps(timeline_to_json(t), indent=2, sort_keys=True))
        report = validate_scene(scene, plan.ledger, tracks["narration"], tracks["code"],
                                t, eng, tolerance_s=tolerance)
        (out_dir / f"{scene.scene_id}.json").write_text(
            json.dumps(report_to_json(report), indent=2, sort_keys=True))
        decision = route(report)
        errors = [f for f in report.findings if f.severity == "error"]
        warnings = [f for f in report.findings if f.severity == "warning"]
        saw_error |= bool(errors)
        saw_warning |= bool(warnings)
        click.echo(f"scene {scene.scene_id}: {decision.action}"
                   f" ({len(errors)} errors, {len(warnings)} warnings)")
    if saw_error:
        return EXIT_VALIDATION
    if saw_warning:
        return EXIT_WARNINGS
    return EXIT_OK


@main.command("assemble")
@root_option
@seed_option
@engine_option
@_mapped_exit
def cmd_assemble(root: Path | None, seed: int | None, engine: str | None) -> int:
    """Merge validated scenes into scripts, narration, captions and a manifest."""
    root, config = _resolve(root)
    seed = _setting(config, "seed", seed, 0)
    eng = _make_engine(_setting(config, "engine", engine, "stub"))
    plan = _load_plan(root)
    artifacts = load_artifacts(root)
    timelines = _load_timelines(root)

    merged_ids = set()
    for scene in plan.scenes:
        report_path = root / "validation" / f"{scene.scene_id}.json"
        if report_path.is_file() and json.loads(report_path.read_text()).get("passed"):
            merged_ids.add(scene.scene_id)
    bundle = merge_project(plan, artifacts, timelines, merged_scene_ids=merged_ids)
    write_bundle(root, bundle)
    write_manifest(
        root,
        project_id=root.name,
        model_id=getattr(next(iter(artifacts.values()))["code"].provenance, "model_id", ""),
        prompt_versions={t.template_id: t.version
                         for t in (PLAN_TEMPLATE, NARRATION_TEMPLATE, CODE_TEMPLATE)},
        seeds=[seed],
        engine=eng,
    )
    click.echo(f"assembled {len(bundle.scene_order)} scenes into {root / 'out'}")
    return EXIT_OK


@main.command("regress")
@root_option
@seed_option
@backend_option
@engine_option
@click.option("--bless", "do_bless", is_flag=True, help="Freeze current outputs as baselines.")
@_mapped_exit
def cmd_regress(root: Path | None, seed: int | None, backend: str | None,
                engine: str | None, do_bless: bool) -> int:
    """Run (or bless) the curated regression scenes under regression/."""
    root, config = _resolve(root)
    seed = _setting(config, "seed", seed, 0)
    gen = _make_backend(_setting(config, "backend", backend, "template"), config)
    eng = _make_engine(_setting(config, "engine", engine, "stub"))

    suite_dir = root / "regression"
    scene_refs = sorted(p for p in suite_dir.glob("*") if p.is_dir()) if suite_dir.is_dir() else []
    if not scene_refs:
        plan = _load_plan(root)
        for scene in plan.scenes:
            ref = suite_dir / f"scene_{scene.scene_id}"
            save_regression_inputs(ref, plan, scene.scene_id, seed)
        scene_refs = sorted(p for p in suite_dir.glob("*") if p.is_dir())

    if do_bless:
        for ref in scene_refs:
            bless(ref, gen, eng)
        click.echo(f"blessed {len(scene_refs)} regression scenes")
        return EXIT_OK

    suite = [load_regression_scene(ref) for ref in scene_refs]
    report = regression_run(suite, gen, eng)
    for verdict in report.verdicts:
        click.echo(f"{verdict.scene_ref}: {verdict.verdict}")
    return EXIT_VALIDATION if report.deviations else EXIT_OK


@main.command("review-serve")
@root_option
@backend_option
@click.option("--port", type=int, default=None, help="Port for the review API.")
@_mapped_exit
def cmd_review_serve(root: Path | None, backend: str | None, port: int | None) -> int:
    """Serve the HTTP review API over the project directory."""
    from .service import serve_api

    root, config = _resolve(root)
    port = _setting(config, "port", port, 8008)
    gen = _make_backend(_setting(config, "backend", backend, "template"), config)
    click.echo(f"serving review API for {root} on port {port}")
    serve_api(root.parent if (root / "plan.json").is_file() else root, port=port, backend=gen)
    return EXIT_OK


@main.command("analyze")
@click.argument("csv_file", type=click.Path(path_type=Path), required=False)
@click.option("--synthetic", is_flag=True, help="Generate a calibrated synthetic dataset.")
@seed_option
@click.option("--out", type=click.Path(path_type=Path), default=Path("analysis"),
              help="Output directory for the report and plot data.")
@_mapped_exit
def cmd_analyze(csv_file: Path | None, synthetic: bool, seed: int | None, out: Path) -> int:
    """Analyze a study CSV, or a synthetic dataset with --synthetic."""
    from .analysis import analyze_study, emit_plot_data, generate_synthetic_study, load_csv, save_csv

    if synthetic == (csv_file is not None):
        raise click.UsageError("provide either a CSV file or --synthetic, not both")
    if synthetic:
        dataset = generate_synthetic_study(seed=seed if seed is not None else 42)
        out.mkdir(parents=True, exist_ok=True)
        save_csv(dataset, out / "dataset.csv")
    else:
        dataset = load_csv(csv_file)

    results = analyze_study(dataset)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(json.dumps(results, indent=2, sort_keys=True))
    emit_plot_data(dataset, results, out / "plots")

    for name, block in results["paired"].items():
        click.echo(f"{name}: t({block['df']:.0f}) = {block['statistic']:.2f}, "
                   f"d = {block['effect_size']:.2f}, p = {block['p_value']:.3g}")
    anc = results["ancova"]
    click.echo(f"ancova: F({anc['df'][0]}, {anc['df'][1]}) = {anc['f_statistic']:.2f}, "
               f"partial eta^2 = {anc['partial_eta_sq']:.3f}")
    sub = results["subgroup"]["test"]
    click.echo(f"subgroup: t({sub['df']:.0f}) = {sub['statistic']:.2f}, p = {sub['p_value']:.3g}")
    rel = results["reliability"]
    click.echo(f"imi alpha = {rel['imi']['alpha']:.2f} "
               f"[{rel['imi']['ci95'][0]:.2f}, {rel['imi']['ci95'][1]:.2f}]; "
               f"tlx alpha = {rel['tlx']['alpha']:.2f}")
    click.echo(f"report written: {out / 'report.json'}")
    return EXIT_OK


if __name__ == "__main__":
    main()
