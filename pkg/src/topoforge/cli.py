"""Command-line interface for batch workflows and the HTTP service."""

from __future__ import annotations

import functools
import json
import sys
from pathlib import Path

import click

from .core import (
    ParseError,
    ProblemSpec,
    field_from_pgm,
    field_to_pgm,
    load_json,
    save_json,
)
from .corpus import generate_corpus, load_corpus, pairs, save_corpus
from .diffusion import CheckpointError, load_checkpoint, make_schedule, save_checkpoint
from .diffusion.train import TrainConfig, train
from .engine import EditConfig, EditEngine, EditRequest, select_best
from .fem import FemError, optimize
from .morphology import LatticeSpec
from .sweeps import (
    LatticeSweepConfig,
    NodesignSweepConfig,
    WarpSweepConfig,
    save_report,
    sweep_lattice,
    sweep_nodesign,
    sweep_warp,
    write_points_csv,
    write_tables_csv,
)
from .warp import WarpSpec


def _fail(code: str, message: str) -> None:
    # single line on stderr, parseable as JSON
    click.echo(json.dumps({"code": code, "message": str(message)}), err=True)
    sys.exit(1)


def guarded(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except ParseError as e:
            _fail("invalid_input", e)
        except CheckpointError as e:
            _fail("bad_checkpoint", e)
        except FemError as e:
            _fail("fem_error", e)
        except FileNotFoundError as e:
            _fail("not_found", e)
        except (ValueError, RuntimeError) as e:
            _fail("invalid_input", e)

    return wrapper


def _parse_pair(text: str, name: str) -> tuple[float, float]:
    parts = text.split(",")
    if len(parts) != 2:
        raise ParseError(name, f"expected X,Y but got {text!r}")
    try:
        return float(parts[0]), float(parts[1])
    except ValueError as e:
        raise ParseError(name, f"expected numbers: {e}") from e


def _load_field(path: str):
    return field_from_pgm(Path(path).read_bytes(), path=path)


def _load_spec(path: str) -> ProblemSpec:
    return ProblemSpec.from_doc(load_json(path), path=path)


@click.group()
@click.version_option()
def main():
    """Structural topology optimization with latent-diffusion editing."""


@main.command("optimize")
@click.option("--spec", "spec_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--iters", default=60, show_default=True)
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
@click.option("--quiet", is_flag=True, help="suppress per-iteration lines")
@guarded
def optimize_cmd(spec_path, iters, out_path, quiet):
    """Run density optimization for a problem spec, write the field as PGM."""
    spec = _load_spec(spec_path)
    on_iter = None if quiet else (lambda s: click.echo(s.line()))
    result = optimize(spec, iters, on_iter=on_iter)
    Path(out_path).write_bytes(field_to_pgm(result.field))
    last = result.history[-1]
    click.echo(
        f"done compliance={last.compliance:.6e} volume={last.volume:.4f} out={out_path}"
    )


@main.command("gen-corpus")
@click.option("--n", required=True, type=int)
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@click.option("--resolution", default=64, show_default=True)
@click.option("--iterations", default=60, show_default=True)
@guarded
def gen_corpus_cmd(n, seed, out_dir, resolution, iterations):
    """Generate a corpus of optimized designs under randomized specs."""
    items = generate_corpus(
        n,
        seed,
        resolution=resolution,
        iterations=iterations,
        on_item=lambda it: click.echo(
            f"{it.name} attempt={it.attempt} compliance={it.compliance:.4e} "
            f"vf={it.spec.volume_fraction:.3f}"
        ),
    )
    save_corpus(items, out_dir, seed=seed, iterations=iterations)
    keys = {it.support_key for it in items}
    click.echo(f"wrote {len(items)} designs ({len(keys)} support configs) to {out_dir}")


@main.command("train")
@click.option("--corpus", "corpus_dir", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--steps", required=True, type=int)
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--batch-size", default=16, show_default=True)
@click.option("--lr", default=2e-4, show_default=True)
@click.option("--total-steps", default=100, show_default=True, help="diffusion schedule length")
@guarded
def train_cmd(corpus_dir, steps, out_path, seed, batch_size, lr, total_steps):
    """Train the denoiser on a generated corpus, write a checkpoint."""
    corpus = pairs(load_corpus(corpus_dir))
    schedule = make_schedule(total_steps)
    config = TrainConfig(steps=steps, batch_size=batch_size, lr=lr, seed=seed)
    model = train(
        corpus,
        schedule,
        config,
        log_fn=lambda step, loss, lr_now: click.echo(
            f"step={step} loss={loss:.6f} lr={lr_now:g}"
        ),
    )
    save_checkpoint(out_path, model, schedule)
    click.echo(f"wrote checkpoint {out_path} ({model.parameter_count()} parameters)")


def _edit_common(fn):
    decorators = [
        click.option("--field", "field_path", required=True,
                     type=click.Path(exists=True, dir_okay=False)),
        click.option("--spec", "spec_path", required=True,
                     type=click.Path(exists=True, dir_okay=False)),
        click.option("--model", "model_path", required=True,
                     type=click.Path(exists=True, dir_okay=False)),
        click.option("--samples", default=1, show_default=True),
        click.option("--seed", default=0, show_default=True, type=int),
        click.option("--refine", "refine_steps", default=None, type=int,
                     help="post-edit optimizer steps (default per edit kind)"),
        click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False)),
    ]
    for d in reversed(decorators):
        fn = d(fn)
    return fn


def _run_edit(kind: str, field_path, spec_path, model_path, out_dir, request: EditRequest):
    field = _load_field(field_path)
    spec = _load_spec(spec_path)
    model, _schedule = load_checkpoint(model_path)
    engine = EditEngine(model)
    cs = engine.run(field, spec, request)
    best = select_best(cs)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for i, cand in enumerate(cs.candidates):
        (out / f"candidate_{i:02d}.pgm").write_bytes(field_to_pgm(cand))
    (out / "reference.pgm").write_bytes(field_to_pgm(cs.reference))
    save_json(cs.updated_spec.to_doc(), out / "updated_spec.json")
    save_json(
        {
            "kind": kind,
            "request": request.to_doc(),
            "best_index": best,
            "records": [r.to_doc() for r in cs.records],
        },
        out / "records.json",
    )
    for rec in cs.records:
        stats = " ".join(f"{k}={v:.4f}" for k, v in sorted(rec.metrics.items()))
        flag = " FAILED" if rec.failed else ""
        click.echo(f"candidate {rec.candidate_index}: {stats}{flag}")
    click.echo(f"best candidate {best} -> {out / f'candidate_{best:02d}.pgm'}")


def _config_for(kind: str, samples: int, seed: int, refine_steps: int | None) -> EditConfig:
    factory = {
        "warp": EditConfig.for_warp,
        "lattice": EditConfig.for_lattice,
        "nodesign": EditConfig.for_nodesign,
    }[kind]
    kwargs = {"num_samples": samples, "seed": seed}
    if refine_steps is not None:
        kwargs["refine_steps"] = refine_steps
    return factory(**kwargs)


@main.group("edit")
def edit_group():
    """Latent-space edits of an optimized design."""


@edit_group.command("warp")
@_edit_common
@click.option("--handle", required=True, help="X,Y of the feature to drag")
@click.option("--delta", required=True, help="DX,DY drag vector")
@click.option("--sigma", required=True, type=float, help="Gaussian influence radius")
@guarded
def edit_warp_cmd(field_path, spec_path, model_path, samples, seed, refine_steps,
                  out_dir, handle, delta, sigma):
    """Drag a feature point; material follows the warp."""
    hx, hy = _parse_pair(handle, "--handle")
    dx, dy = _parse_pair(delta, "--delta")
    request = EditRequest(
        kind="warp",
        config=_config_for("warp", samples, seed, refine_steps),
        warp=WarpSpec.single(hx, hy, dx, dy, sigma),
    )
    _run_edit("warp", field_path, spec_path, model_path, out_dir, request)


@edit_group.command("lattice")
@_edit_common
@click.option("--lattice", "pattern", required=True, type=click.Choice(["grid", "cross"]))
@click.option("--pitch", required=True, type=int)
@click.option("--member", required=True, type=int)
@click.option("--shell", required=True, type=float)
@guarded
def edit_lattice_cmd(field_path, spec_path, model_path, samples, seed, refine_steps,
                     out_dir, pattern, pitch, member, shell):
    """Replace the interior with a lattice infill."""
    request = EditRequest(
        kind="lattice",
        config=_config_for("lattice", samples, seed, refine_steps),
        lattice=LatticeSpec(pattern, pitch, member),
        shell=shell,
    )
    _run_edit("lattice", field_path, spec_path, model_path, out_dir, request)


@edit_group.command("nodesign")
@_edit_common
@click.option("--center", required=True, help="X,Y of the keep-out region")
@click.option("--radius", required=True, type=float)
@guarded
def edit_nodesign_cmd(field_path, spec_path, model_path, samples, seed, refine_steps,
                      out_dir, center, radius):
    """Clear a circular keep-out region and let the prior reroute material."""
    cx, cy = _parse_pair(center, "--center")
    request = EditRequest(
        kind="nodesign",
        config=_config_for("nodesign", samples, seed, refine_steps),
        center=(cx, cy),
        radius=radius,
    )
    _run_edit("nodesign", field_path, spec_path, model_path, out_dir, request)


@main.command("sweep")
@click.argument("kind", type=click.Choice(["warp", "lattice", "nodesign"]))
@click.option("--corpus", "corpus_dir", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--model", "model_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--report", "report_path", required=True, type=click.Path(dir_okay=False))
@click.option("--samples", default=8, show_default=True)
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--limit", default=None, type=int, help="use only the first K designs")
@click.option("--min-thickness", default=None, type=float, help="lattice designs filter")
@click.option("--max-thickness", default=None, type=float, help="warp designs filter")
@click.option("--partial-steps", default=None, type=int, help="re-noising depth")
@click.option("--guidance-scale", default=None, type=float)
@click.option("--pattern", default=None, type=click.Choice(["grid", "cross"]),
              help="lattice infill pattern")
@click.option("--pitch", default=None, type=int, help="lattice cell pitch in pixels")
@click.option("--member", default=None, type=int, help="lattice member width in pixels")
@click.option("--shell", default=None, type=float, help="lattice shell thickness in pixels")
@click.option("--radius", default=None, type=float, help="nodesign hole radius")
@guarded
def sweep_cmd(kind, corpus_dir, model_path, report_path, samples, seed, limit,
              min_thickness, max_thickness, partial_steps, guidance_scale,
              pattern, pitch, member, shell, radius):
    """Batch direct-vs-latent comparison over a corpus; write report + CSVs."""
    items = load_corpus(corpus_dir)
    if limit is not None:
        items = items[:limit]
    model, _schedule = load_checkpoint(model_path)
    kwargs = {"num_samples": samples, "seed": seed}
    if partial_steps is not None:
        kwargs["partial_steps"] = partial_steps
    if guidance_scale is not None:
        kwargs["guidance_scale"] = guidance_scale
    if kind == "warp":
        if max_thickness is not None:
            kwargs["max_thickness"] = max_thickness
        report = sweep_warp(items, model, WarpSweepConfig(**kwargs))
    elif kind == "lattice":
        if min_thickness is not None:
            kwargs["min_thickness"] = min_thickness
        for key, value in (("pattern", pattern), ("pitch", pitch),
                           ("member", member), ("shell", shell)):
            if value is not None:
                kwargs[key] = value
        report = sweep_lattice(items, model, LatticeSweepConfig(**kwargs))
    else:
        if radius is not None:
            kwargs["radius"] = radius
        report = sweep_nodesign(items, model, NodesignSweepConfig(**kwargs))
    save_report(report, report_path)
    base = Path(report_path)
    tables_path = base.with_suffix(".tables.csv")
    write_tables_csv(report, tables_path)
    outputs = [str(base), str(tables_path)]
    if kind == "warp":
        points_path = base.with_suffix(".points.csv")
        write_points_csv(report, points_path)
        outputs.append(str(points_path))
    click.echo(
        f"swept {len(report.designs)} designs ({len(report.skipped)} skipped), "
        f"{len(report.edits)} edits -> {', '.join(outputs)}"
    )


@main.command("serve")
@click.option("--port", default=8000, show_default=True)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--model", "model_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--store", "store_dir", default="./topoforge_store", show_default=True,
              type=click.Path(file_okay=False))
@click.option("--corpus", "corpus_dir", default=None, type=click.Path(file_okay=False),
              help="corpus directory to allow session creation by design name")
@click.option("--ui", "ui_dir", default=None, type=click.Path(exists=True, file_okay=False),
              help="directory of built UI assets to serve at /")
@guarded
def serve_cmd(port, host, model_path, store_dir, corpus_dir, ui_dir):
    """Serve the HTTP editing API."""
    import uvicorn

    from .service import checkpoint_file_hash, create_app, mount_ui

    model, schedule = load_checkpoint(model_path)
    app = create_app(
        model,
        store_dir=store_dir,
        corpus_dir=corpus_dir,
        schedule=schedule,
        checkpoint_hash=checkpoint_file_hash(model_path),
    )
    if ui_dir is not None:
        mount_ui(app, ui_dir)
    click.echo(f"model {model.arch_hash()} on http://{host}:{port}")
    uvicorn.run(app, host=host, port=port, log_level="warning")


if __name__ == "__main__":
    main()
