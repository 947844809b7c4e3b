"""
Partial-KB entity linking bench - command-line entry point.

    python app.py run --config data/example_run.json
"""

import functools
import json
import sys
from pathlib import Path

import typer

from src import pipeline
from src.corpus import stats_table
from src.errors import PartialElError
from src.kb import complement, load_kb, write_partial
from src.logger import logger, set_verbose
from src.synth import generate, load_synth_config, write_benchmark

app = typer.Typer(add_completion=False, help="Entity linking with partial knowledge bases.")


def _fail(kind: str, message: str) -> None:
    typer.echo(f"error kind={kind} message={json.dumps(message, ensure_ascii=False)}", err=True)
    raise typer.Exit(code=1)


def guarded(fn):
    """Turn library errors into one machine-parsable stderr line and exit status 1."""
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        set_verbose(kwargs.get("verbose", False))
        try:
            return fn(*args, **kwargs)
        except PartialElError as e:
            logger.debug("Command failed", exc_info=True)
            _fail(e.kind, str(e))
        except FileNotFoundError as e:
            _fail("not_found", str(e))
        except (ValueError, OSError) as e:
            _fail("invalid_input", str(e))
        except typer.Exit:
            raise
        except Exception as e:
            logger.debug("Unexpected failure", exc_info=True)
            _fail("internal", f"{type(e).__name__}: {e}")
    return wrapper


CONFIG = typer.Option(..., "--config", help="Run configuration JSON.")
JOBS = typer.Option(1, "--jobs", min=1, help="Worker processes for document-level parallelism.")
VERBOSE = typer.Option(False, "--verbose", help="Debug logging and progress bars.")
SPLIT = typer.Option("test", "--split", help="Corpus split: dev or test.")


def _context(config: Path, splits=pipeline.SPLITS) -> pipeline.RunContext:
    return pipeline.load_context(pipeline.load_run_config(config), splits=splits)


# --- KB views ---

@app.command("kb-subset")
@guarded
def kb_subset(config: Path = CONFIG, out: Path = typer.Option(..., "--out", help="Partial KB file to write."),
              verbose: bool = VERBOSE):
    """Write the config's partial view as a selector file."""
    cfg = pipeline.load_run_config(config)
    if cfg.partial is None:
        raise PartialElError("config has no partial view")
    view = pipeline.build_view(load_kb(cfg.kb), cfg.partial)
    write_partial(view, out)
    typer.echo(f"{view.name}\t{len(view)}")


@app.command("kb-complement")
@guarded
def kb_complement(config: Path = CONFIG, out: Path = typer.Option(..., "--out", help="Partial KB file to write."),
                  verbose: bool = VERBOSE):
    """Write the complement of the config's partial view."""
    cfg = pipeline.load_run_config(config)
    if cfg.partial is None:
        raise PartialElError("config has no partial view")
    kb = load_kb(cfg.kb)
    view = complement(kb, pipeline.build_view(kb, cfg.partial))
    write_partial(view, out)
    typer.echo(f"{view.name}\t{len(view)}")


# --- Data ---

@app.command()
@guarded
def synth(config: Path = typer.Option(..., "--config", help="Synthetic benchmark configuration JSON."),
          out: Path = typer.Option(..., "--out", help="Output directory."), verbose: bool = VERBOSE):
    """Generate a seeded synthetic KB, partial views and corpora."""
    bench = generate(load_synth_config(config))
    write_benchmark(bench, out)
    typer.echo(str(out))


@app.command()
@guarded
def stats(config: Path = CONFIG, verbose: bool = VERBOSE):
    """Dataset statistics of every split against the partial view and its complement, as TSV."""
    ctx = _context(config)
    views = [ctx.view]
    if ctx.view is not ctx.kb:
        views.append(complement(ctx.kb, ctx.view))
    table = stats_table([ctx.corpora[s] for s in pipeline.SPLITS], views, train_corpus=ctx.corpora["train"])
    table.to_csv(sys.stdout, sep="\t", index=False)


# --- Pipeline steps ---

@app.command()
@guarded
def train(config: Path = CONFIG, verbose: bool = VERBOSE):
    """Fit the gazetteer or LM of the configured paradigm."""
    ctx = _context(config, splits=("train",))
    with pipeline.artifacts(ctx.out_dir) as written:
        pipeline.train(ctx, written)
    typer.echo("\n".join(map(str, written)))


@app.command()
@guarded
def link(config: Path = CONFIG, split: str = SPLIT, jobs: int = JOBS, verbose: bool = VERBOSE):
    """Link one split with the inference view of the configured mode."""
    ctx = _context(config, splits=(split,))
    with pipeline.artifacts(ctx.out_dir) as written:
        pipeline.link(ctx, split, written, jobs=jobs, progress=verbose)
    typer.echo("\n".join(map(str, written)))


@app.command()
@guarded
def prune(config: Path = CONFIG, split: str = SPLIT, verbose: bool = VERBOSE):
    """Post-prune training-KB predictions of one split to the partial view."""
    ctx = _context(config, splits=(split,))
    with pipeline.artifacts(ctx.out_dir) as written:
        pipeline.prune(ctx, split, written)
    typer.echo("\n".join(map(str, written)))


@app.command("tune-threshold")
@guarded
def tune_threshold(config: Path = CONFIG, verbose: bool = VERBOSE):
    """Tune theta on dev predictions to maximize EL F1."""
    ctx = _context(config, splits=("dev",))
    with pipeline.artifacts(ctx.out_dir) as written:
        threshold = pipeline.tune(ctx, written)
    typer.echo(threshold.model_dump_json())


@app.command()
@guarded
def evaluate(config: Path = CONFIG, split: str = SPLIT, verbose: bool = VERBOSE):
    """Score staged predictions against gold restricted to the partial view."""
    ctx = _context(config, splits=(split,))
    with pipeline.artifacts(ctx.out_dir) as written:
        report = pipeline.evaluate_split(ctx, written, split=split)
    typer.echo(report.model_dump_json())


@app.command()
@guarded
def run(config: Path = CONFIG, jobs: int = JOBS, verbose: bool = VERBOSE):
    """Train, link, redeem and evaluate in one go; writes a manifest."""
    report = pipeline.run(pipeline.load_run_config(config), jobs=jobs, progress=verbose)
    typer.echo(report.model_dump_json())


@app.command()
@guarded
def report(config: Path = typer.Option(..., "--config", help="Report configuration JSON."),
           plot: bool = typer.Option(False, "--plot", help="Also write an SVG scatter plot."),
           verbose: bool = VERBOSE):
    """Proportion report and setting comparison over finished run directories."""
    written = pipeline.report(pipeline.load_report_config(config), plot=plot)
    typer.echo("\n".join(map(str, written)))


if __name__ == "__main__":
    app()
