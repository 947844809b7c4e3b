"""
Pipeline module - run configuration and the resumable steps of one experiment.

Modes:
    direct       train on the full training gold, infer with the partial view
    threshold    as direct, then drop predictions under a dev-tuned theta
    post_prune   infer with the training KB, then drop concepts outside the partial view
    in_kb_train  retrain on gold restricted to the partial view, infer with the partial view

Every step reads and writes files in the run's output directory, so `run` is
just the steps in order.
"""

import json
import math
from contextlib import contextmanager
from dataclasses import dataclass
from pathlib import Path
from typing import Literal, Optional, Union

import xxhash
from pydantic import BaseModel, Field, ValidationError, field_validator, model_validator

from . import __version__
from .conf import CACHE_DIR, PARADIGM_DEFAULTS, RECALL_AT_K
from .corpus import Corpus, load_corpus, restrict_gold, stats
from .embed import build_index
from .errors import ConfigError, ViewMismatchError
from .evaluation import (
    MetricsReport,
    average_drop,
    comparison_table,
    evaluate,
    load_metrics,
    proportion_report,
    recall_at_k,
    save_metrics,
    write_proportion_report,
)
from .generative import BigramLm, train_lm
from .kb import KbView, KnowledgeBase, Selector, load_kb, load_partial, resolve_view, subset
from .logger import logger
from .paradigms import Linker, link_corpus, retrieve_corpus
from .predictions import PredictionsHeader, read_predictions, write_predictions
from .redemption import Threshold, apply_threshold, audit_closure, load_threshold, post_prune, save_threshold, tune_threshold
from .tagger import Gazetteer, build_gazetteer
from .trie import build_trie

MODES = ("direct", "threshold", "post_prune", "in_kb_train")
SPLITS = ("train", "dev", "test")


# --- Pydantic Schemas ---

class ParadigmConfig(BaseModel):
    paradigm: Literal["ner_ned", "ned_ner", "generative"]
    K: int = Field(default=PARADIGM_DEFAULTS["K"], ge=1)
    beam: int = Field(default=PARADIGM_DEFAULTS["beam"], ge=1)
    max_span_tokens: int = Field(default=PARADIGM_DEFAULTS["max_span_tokens"], ge=1)
    theta: Optional[float] = PARADIGM_DEFAULTS["theta"]
    canonical_only: bool = PARADIGM_DEFAULTS["canonical_only"]

    @field_validator("theta")
    @classmethod
    def validate_theta(cls, v):
        if v is not None and math.isnan(v):
            raise ValueError("theta must be a number or null")
        return v


class PartialSpec(BaseModel):
    """How to select the inference view: a selector file, one semantic type, or explicit ids."""
    path: Optional[str] = None
    semantic_type: Optional[str] = None
    ids: list[str] = Field(default_factory=list)
    name: Optional[str] = None

    @model_validator(mode="after")
    def exactly_one_source(self):
        given = sum([self.path is not None, self.semantic_type is not None, bool(self.ids)])
        if given != 1:
            raise ValueError("partial needs exactly one of path, semantic_type, ids")
        return self


class RunConfig(BaseModel):
    kb: str
    partial: Optional[PartialSpec] = None
    train: str
    dev: str
    test: str
    output_dir: str
    paradigm: ParadigmConfig
    mode: Literal["direct", "threshold", "post_prune", "in_kb_train"] = "direct"
    # nothing in training or linking draws random numbers; kept for provenance in the manifest and config hash
    seed: int = 0

    @property
    def needs_tuning(self) -> bool:
        # NED-NER thresholds during inference, so it is tuned whenever no theta is given
        if self.paradigm.theta is not None:
            return False
        return self.mode == "threshold" or self.paradigm.paradigm == "ned_ner"

    def digest(self) -> str:
        return xxhash.xxh64(json.dumps(self.model_dump(exclude={"output_dir"}), sort_keys=True).encode("utf-8")).hexdigest()


def load_run_config(path: Union[str, Path]) -> RunConfig:
    """Load a run config; relative paths are resolved against the config file's directory."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"File not found: {path}")
    with open(path, "r", encoding="utf-8") as f:
        try:
            data = json.load(f)
        except json.JSONDecodeError as e:
            raise ConfigError(f"{path}: invalid JSON ({e.msg})") from e
    try:
        config = RunConfig.model_validate(data)
    except ValidationError as e:
        err = e.errors()[0]
        where = ".".join(str(p) for p in err.get("loc", ()))
        raise ConfigError(f"{path}: {where}: {err.get('msg', str(e))}") from e

    base = path.parent
    resolve = lambda p: str(p) if Path(p).is_absolute() else str(base / p)
    updates = {key: resolve(getattr(config, key)) for key in ("kb", "train", "dev", "test", "output_dir")}
    if config.partial is not None and config.partial.path is not None:
        updates["partial"] = config.partial.model_copy(update={"path": resolve(config.partial.path)})
    return config.model_copy(update=updates)


# --- Artifacts ---

ARTIFACTS = {
    "gazetteer": "gazetteer.json",
    "lm": "lm.json",
    "threshold": "threshold.json",
    "metrics": "metrics.json",
    "manifest": "manifest.json",
}


def predictions_path(out_dir: Path, split: str, stage: str = "raw") -> Path:
    suffix = {"raw": "", "pruned": ".pruned", "final": ".final"}[stage]
    return Path(out_dir) / f"predictions.{split}{suffix}.jsonl"


def retrieved_path(out_dir: Path, split: str) -> Path:
    return Path(out_dir) / f"retrieved.{split}.jsonl"


@contextmanager
def artifacts(out_dir: Union[str, Path]):
    """Yields a list to record written paths; on failure those files are removed."""
    Path(out_dir).mkdir(parents=True, exist_ok=True)
    written = []
    try:
        yield written
    except BaseException:
        for path in written:
            Path(path).unlink(missing_ok=True)
        if written:
            logger.warning(f"Removed {len(written)} partial outputs from {out_dir}")
        raise


# --- Context ---

@dataclass
class RunContext:
    """Loaded inputs of a run: training KB, partial view and corpus splits."""
    config: RunConfig
    kb: KnowledgeBase
    view: KbView
    corpora: dict

    @property
    def out_dir(self) -> Path:
        return Path(self.config.output_dir)

    @property
    def inference_view(self) -> KbView:
        return self.kb if self.config.mode == "post_prune" else self.view

    @property
    def training_corpus(self) -> Corpus:
        train = self.corpora["train"]
        return restrict_gold(train, self.view) if self.config.mode == "in_kb_train" else train

    def gold(self, split: str) -> Corpus:
        return restrict_gold(self.corpora[split], self.view)


def build_view(kb: KnowledgeBase, spec: Optional[PartialSpec]) -> KbView:
    if spec is None:
        return resolve_view(kb, None)
    if spec.path is not None:
        partial = load_partial(kb, spec.path)
        return partial if spec.name is None else subset(kb, Selector.from_ids(partial.member_ids), name=spec.name)
    if spec.semantic_type is not None:
        return subset(kb, Selector.from_type(spec.semantic_type), name=spec.name)
    return subset(kb, Selector.from_ids(spec.ids), name=spec.name)


def load_context(config: RunConfig, splits=SPLITS) -> RunContext:
    kb = load_kb(config.kb)
    view = build_view(kb, config.partial)
    corpora = {split: load_corpus(getattr(config, split), split=split, kb=kb) for split in splits}
    return RunContext(config, kb, view, corpora)


# --- Steps ---

def train(ctx: RunContext, written: list) -> dict:
    """Fit the paradigm's trainable component on the training gold; returns the component paths."""
    paradigm = ctx.config.paradigm.paradigm
    corpus = ctx.training_corpus
    out = {}
    if paradigm == "ner_ned":
        path = ctx.out_dir / ARTIFACTS["gazetteer"]
        build_gazetteer(corpus, ctx.kb).save(path)
        out["gazetteer"] = path
    elif paradigm == "generative":
        path = ctx.out_dir / ARTIFACTS["lm"]
        train_lm(corpus, ctx.kb).save(path)
        out["lm"] = path
    else:
        logger.info("NED-NER has no trained component at desk scale; retrieval uses the inference index only")
    written.extend(out.values())
    return out


def build_linker(ctx: RunContext) -> Linker:
    cfg = ctx.config.paradigm
    view = ctx.inference_view
    linker = Linker(paradigm=cfg.paradigm, K=cfg.K, beam=cfg.beam, max_span_tokens=cfg.max_span_tokens, theta=cfg.theta)
    if cfg.paradigm in ("ner_ned", "ned_ner"):
        linker.index = build_index(view, cache_dir=CACHE_DIR)
    if cfg.paradigm == "ner_ned":
        linker.gazetteer = Gazetteer.load(ctx.out_dir / ARTIFACTS["gazetteer"])
    if cfg.paradigm == "generative":
        linker.lm = BigramLm.load(ctx.out_dir / ARTIFACTS["lm"])
        linker.trie = build_trie(view, canonical_only=cfg.canonical_only)
    return linker


def link(ctx: RunContext, split: str, written: list, jobs: int = 1, progress: bool = False,
         linker: Optional[Linker] = None) -> Path:
    """Link one split against the inference view and write its raw predictions."""
    linker = linker or build_linker(ctx)
    view = ctx.inference_view
    preds = link_corpus(linker, ctx.corpora[split], jobs=jobs, progress=progress)
    audit_closure(preds, view)

    path = predictions_path(ctx.out_dir, split)
    write_predictions(path, preds, PredictionsHeader(view=view.name, kb=ctx.kb.name, paradigm=linker.paradigm, split=split))
    written.append(path)

    if linker.paradigm == "ned_ner":
        retrieved = retrieve_corpus(linker.index, ctx.corpora[split], K=linker.K, jobs=jobs)
        rpath = retrieved_path(ctx.out_dir, split)
        with open(rpath, "w", encoding="utf-8") as f:
            for doc_id in sorted(retrieved):
                f.write(json.dumps({"doc_id": doc_id, "concepts": retrieved[doc_id]}) + "\n")
        written.append(rpath)
    return path


def prune(ctx: RunContext, split: str, written: list) -> Path:
    """Post-prune a split's training-KB predictions to the partial view."""
    header, preds = read_predictions(predictions_path(ctx.out_dir, split))
    if header.view != ctx.kb.name:
        raise ViewMismatchError(
            f"post-pruning needs predictions made with the training KB '{ctx.kb.name}', got view '{header.view}'"
        )
    pruned = post_prune(preds, ctx.view)
    audit_closure(pruned, ctx.view)
    path = predictions_path(ctx.out_dir, split, "pruned")
    write_predictions(path, pruned, header.model_copy(update={"view": ctx.view.name, "pruned_from": header.view}))
    written.append(path)
    return path


def _staged(ctx: RunContext, split: str) -> tuple:
    """Predictions ready for thresholding: pruned in post_prune mode, raw otherwise."""
    stage = "pruned" if ctx.config.mode == "post_prune" else "raw"
    return read_predictions(predictions_path(ctx.out_dir, split, stage))


def _check_view(header: PredictionsHeader, ctx: RunContext) -> None:
    if header.kb is not None and header.kb != ctx.kb.name:
        raise ViewMismatchError(f"predictions were made under training KB '{header.kb}' but this run uses '{ctx.kb.name}'")
    if header.view != ctx.view.name:
        raise ViewMismatchError(f"predictions were made with view '{header.view}' but gold is restricted to '{ctx.view.name}'")


def tune(ctx: RunContext, written: list, split: str = "dev") -> Threshold:
    """Tune theta on the dev split's staged predictions against the view-restricted gold."""
    header, preds = _staged(ctx, split)
    _check_view(header, ctx)
    threshold = tune_threshold(preds, ctx.gold(split).annotations, paradigm=header.paradigm, tuned_on=split)
    path = ctx.out_dir / ARTIFACTS["threshold"]
    save_threshold(threshold, path)
    written.append(path)
    return threshold


def evaluate_split(ctx: RunContext, written: list, split: str = "test") -> MetricsReport:
    """Apply the tuned threshold if any, write final predictions and metrics."""
    header, preds = _staged(ctx, split)
    _check_view(header, ctx)

    theta = ctx.config.paradigm.theta
    threshold_file = ctx.out_dir / ARTIFACTS["threshold"]
    if ctx.config.needs_tuning and threshold_file.exists():
        theta = load_threshold(threshold_file).theta
    if theta is not None:
        preds = apply_threshold(preds, theta)
        logger.info(f"Applied theta={theta}: {len(preds)} predictions kept")
    audit_closure(preds, ctx.view)

    final = predictions_path(ctx.out_dir, split, "final")
    write_predictions(final, preds, header)
    written.append(final)

    gold = ctx.gold(split).annotations
    report = evaluate(preds, gold)
    rpath = retrieved_path(ctx.out_dir, split)
    if rpath.exists():
        with open(rpath, "r", encoding="utf-8") as f:
            retrieved = {r["doc_id"]: r["concepts"] for r in map(json.loads, f)}
        # retrieval ran over the inference view; score it against the view's gold
        report = report.model_copy(update={"recall_at_k": recall_at_k(retrieved, gold, k=RECALL_AT_K)})

    path = ctx.out_dir / ARTIFACTS["metrics"]
    save_metrics(report, path)
    written.append(path)
    logger.info(f"{split}: EL F1={report.el.f1:.4f} NER F1={report.ner.f1:.4f} (view '{ctx.view.name}', mode {ctx.config.mode})")
    return report


def _file_digest(path: Path) -> str:
    return xxhash.xxh64(Path(path).read_bytes()).hexdigest()


def write_manifest(ctx: RunContext, written: list) -> Path:
    """Config hash, views, code version and a content hash of every artifact."""
    train_stats = stats(ctx.corpora["train"], ctx.view, ctx.corpora["train"])
    manifest = {
        "config_hash": ctx.config.digest(),
        "view": ctx.view.name,
        "training_kb": ctx.kb.name,
        "inference_view": ctx.inference_view.name,
        "mode": ctx.config.mode,
        "seed": ctx.config.seed,
        "paradigm": ctx.config.paradigm.paradigm,
        "annotation_proportion": train_stats.annotation_proportion,
        "version": __version__,
        "files": {Path(p).name: _file_digest(p) for p in sorted(set(map(str, written)))},
    }
    path = ctx.out_dir / ARTIFACTS["manifest"]
    with open(path, "w", encoding="utf-8") as f:
        json.dump(manifest, f, indent=2, sort_keys=True, ensure_ascii=False)
        f.write("\n")
    written.append(path)
    logger.info(f"Manifest written to {path}")
    return path


def run(config: RunConfig, jobs: int = 1, progress: bool = False) -> MetricsReport:
    """Every step of one experiment in order; outputs are removed if any step fails."""
    logger.info(f"Run {config.digest()}: {config.paradigm.paradigm} / {config.mode} -> {config.output_dir}")
    ctx = load_context(config)
    with artifacts(ctx.out_dir) as written:
        train(ctx, written)
        linker = build_linker(ctx)
        splits = ("dev", "test") if config.needs_tuning else ("test",)
        for split in splits:
            link(ctx, split, written, jobs=jobs, progress=progress, linker=linker)
            if config.mode == "post_prune":
                prune(ctx, split, written)
        if config.needs_tuning:
            tune(ctx, written)
        report = evaluate_split(ctx, written)
        write_manifest(ctx, written)
    return report


def load_run_metrics(run_dir: Union[str, Path]) -> tuple:
    """(manifest dict, MetricsReport) of a finished run directory."""
    run_dir = Path(run_dir)
    with open(run_dir / ARTIFACTS["manifest"], "r", encoding="utf-8") as f:
        manifest = json.load(f)
    return manifest, load_metrics(run_dir / ARTIFACTS["metrics"])


# --- Report over finished runs ---

class ReportRun(BaseModel):
    baseline: str
    partial: str


class ReportConfig(BaseModel):
    """Pairs of (full-KB run, partial-inference run) directories and optional named settings.

    The baseline of each pair is a run without a partial view, so its metrics are full evaluation.
    """
    runs: list[ReportRun] = Field(default_factory=list)
    comparisons: dict[str, str] = Field(default_factory=dict)
    output_dir: str


def load_report_config(path: Union[str, Path]) -> ReportConfig:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"File not found: {path}")
    with open(path, "r", encoding="utf-8") as f:
        try:
            config = ReportConfig.model_validate(json.load(f))
        except (json.JSONDecodeError, ValidationError) as e:
            raise ConfigError(f"{path}: invalid report config ({e})") from e
    base = path.parent
    resolve = lambda p: str(p) if Path(p).is_absolute() else str(base / p)
    return ReportConfig(
        runs=[ReportRun(baseline=resolve(r.baseline), partial=resolve(r.partial)) for r in config.runs],
        comparisons={name: resolve(d) for name, d in config.comparisons.items()},
        output_dir=resolve(config.output_dir),
    )


def report(config: ReportConfig, plot: bool = False) -> list:
    """Proportion report, average drop and comparison table; returns the written paths."""
    out_dir = Path(config.output_dir)
    with artifacts(out_dir) as written:
        if config.runs:
            triples, proportions, pairs = [], {}, []
            for r in config.runs:
                _, baseline = load_run_metrics(r.baseline)
                manifest, partial = load_run_metrics(r.partial)
                triples.append((manifest["view"], baseline, partial))
                proportions[manifest["view"]] = manifest["annotation_proportion"]
                pairs.append(average_drop(baseline, [partial]))

            table, correlations = proportion_report(triples, proportions)
            tsv = out_dir / "proportion.tsv"
            svg = out_dir / "proportion.svg" if plot else None
            write_proportion_report(table, correlations, tsv, plot_path=svg)
            written.extend(p for p in (tsv, svg) if p is not None)

            drop = {key: sum(p[key] for p in pairs) / len(pairs) for key in ("precision", "recall", "f1")}
            drop_path = out_dir / "average_drop.json"
            with open(drop_path, "w", encoding="utf-8") as f:
                json.dump(drop, f, indent=2, sort_keys=True)
                f.write("\n")
            written.append(drop_path)

        if config.comparisons:
            rows = {name: load_run_metrics(d)[1] for name, d in config.comparisons.items()}
            path = out_dir / "comparison.tsv"
            comparison_table(rows).to_csv(path, sep="\t", index=False, float_format="%.2f")
            written.append(path)
    return written
