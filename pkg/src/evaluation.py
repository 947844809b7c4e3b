"""
Evaluation module - EL / NER precision, recall and F1, NED accuracy, recall@K,
and the annotation-proportion report.

All counts are micro-averaged over the corpus and use exact character offsets.
"""

import math
from pathlib import Path
from typing import Iterable, Optional, Union

import pandas as pd
from pydantic import BaseModel

from .conf import RECALL_AT_K
from .errors import ReportError
from .logger import logger


class Prf(BaseModel):
    precision: float = 0.0
    recall: float = 0.0
    f1: float = 0.0


class Counts(BaseModel):
    tp_el: int = 0
    tp_ner: int = 0
    n_pred: int = 0
    n_gold: int = 0
    n_pred_spans: int = 0
    n_gold_spans: int = 0


class MetricsReport(BaseModel):
    el: Prf
    ner: Prf
    ned_accuracy: Optional[float] = None
    counts: Counts
    recall_at_k: Optional[float] = None


def prf(tp: int, n_pred: int, n_gold: int) -> Prf:
    p = tp / n_pred if n_pred > 0 else 0.0
    r = tp / n_gold if n_gold > 0 else 0.0
    f = 2 * p * r / (p + r) if p + r > 0 else 0.0
    return Prf(precision=p, recall=r, f1=f)


def _tuple(item) -> tuple:
    # ScoredPrediction and GoldAnnotation both carry doc_id / span / concept
    return (item.doc_id, item.span.start, item.span.end, item.concept)


def evaluate(predictions: Iterable, gold: Iterable) -> MetricsReport:
    """Exact-match EL and NER scores plus NED accuracy on correctly detected spans."""
    pred_tuples = {_tuple(p) for p in predictions}
    gold_tuples = {_tuple(g) for g in gold}
    pred_spans = {t[:3] for t in pred_tuples}
    gold_spans = {t[:3] for t in gold_tuples}

    tp_el = len(pred_tuples & gold_tuples)
    tp_ner = len(pred_spans & gold_spans)
    on_gold_spans = sum(1 for t in pred_tuples if t[:3] in gold_spans)

    report = MetricsReport(
        el=prf(tp_el, len(pred_tuples), len(gold_tuples)),
        ner=prf(tp_ner, len(pred_spans), len(gold_spans)),
        ned_accuracy=tp_el / on_gold_spans if on_gold_spans else None,
        counts=Counts(tp_el=tp_el, tp_ner=tp_ner, n_pred=len(pred_tuples), n_gold=len(gold_tuples),
                      n_pred_spans=len(pred_spans), n_gold_spans=len(gold_spans)),
    )
    logger.debug(f"Evaluated {len(pred_tuples)} predictions against {len(gold_tuples)} gold: EL F1={report.el.f1:.4f}")
    return report


def recall_at_k(retrieved: dict, gold: Iterable, k: int = RECALL_AT_K) -> float:
    """Fraction of gold (doc, concept) pairs found in that document's top-k retrieved concepts."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    pairs = {(g.doc_id, g.concept) for g in gold}
    if not pairs:
        return 0.0
    top = {}
    for doc_id, ranked in retrieved.items():
        seen = []
        for concept_id in ranked:
            if concept_id not in seen:
                seen.append(concept_id)
            if len(seen) == k:
                break
        top[doc_id] = set(seen)
    hits = sum(1 for doc_id, concept_id in pairs if concept_id in top.get(doc_id, ()))
    return hits / len(pairs)


def ned_accuracy_identity(el_precision: float, ner_precision: float) -> float:
    """NED accuracy implied by EL and NER precision when each span carries one concept."""
    return el_precision / ner_precision


def average_drop(baseline: MetricsReport, partials: list) -> dict:
    """Mean EL P / R / F1 lost across partial views; positive means performance lost."""
    if not partials:
        raise ReportError("average_drop needs at least one partial report")
    n = len(partials)
    return {
        "precision": sum(baseline.el.precision - r.el.precision for r in partials) / n,
        "recall": sum(baseline.el.recall - r.el.recall for r in partials) / n,
        "f1": sum(baseline.el.f1 - r.el.f1 for r in partials) / n,
    }


def comparison_table(rows: dict) -> pd.DataFrame:
    """Setting name -> MetricsReport, laid out as EL-P / EL-R / EL-F1 / NER-F1 / NED-Acc percentages."""
    records = []
    for setting, report in rows.items():
        records.append({
            "setting": setting,
            "el_precision": 100 * report.el.precision,
            "el_recall": 100 * report.el.recall,
            "el_f1": 100 * report.el.f1,
            "ner_f1": 100 * report.ner.f1,
            "ned_accuracy": math.nan if report.ned_accuracy is None else 100 * report.ned_accuracy,
        })
    return pd.DataFrame.from_records(records, columns=["setting", "el_precision", "el_recall", "el_f1", "ner_f1", "ned_accuracy"])


# --- Annotation-proportion report ---

PROPORTION_COLUMNS = ["view", "proportion", "el_f1_drop", "ner_f1_drop", "ned_acc_delta"]
DROP_COLUMNS = ["el_f1_drop", "ner_f1_drop", "ned_acc_delta"]


def _pearson(x: pd.Series, y: pd.Series) -> Optional[float]:
    r = x.corr(y)
    return None if r is None or math.isnan(r) else float(r)


def proportion_report(runs: list, proportions: dict) -> tuple:
    """
    Per partial view, how much performance drops against full evaluation (inference
    with the whole training KB, scored on the full gold),
    next to the view's training annotation proportion.

    Args:
        runs: (view name, full-evaluation MetricsReport, partial-inference MetricsReport) triples
        proportions: view name -> annotation proportion from corpus stats

    Returns:
        (table, correlations) where correlations maps each drop column to a Pearson r, or None
        when it is undefined (zero variance)
    """
    if len(runs) < 2:
        raise ReportError(f"proportion report needs at least 2 partial views, got {len(runs)}")
    records = []
    for view, baseline, partial in runs:
        if view not in proportions:
            raise ReportError(f"no annotation proportion for view '{view}'")
        if baseline.ned_accuracy is None or partial.ned_accuracy is None:
            ned_delta = math.nan
        else:
            ned_delta = partial.ned_accuracy - baseline.ned_accuracy
        records.append({
            "view": view,
            "proportion": proportions[view],
            "el_f1_drop": baseline.el.f1 - partial.el.f1,
            "ner_f1_drop": baseline.ner.f1 - partial.ner.f1,
            "ned_acc_delta": ned_delta,
        })
    table = pd.DataFrame.from_records(records, columns=PROPORTION_COLUMNS).sort_values("view", kind="stable").reset_index(drop=True)
    correlations = {col: _pearson(table["proportion"], table[col]) for col in DROP_COLUMNS}
    logger.info(f"Proportion report over {len(table)} views: {correlations}")
    return table, correlations


def write_proportion_report(table: pd.DataFrame, correlations: dict, path: Union[str, Path],
                            plot_path: Optional[Union[str, Path]] = None) -> None:
    """TSV of per-view rows followed by one 'pearson_r' row (n/a when undefined); optional SVG scatter."""
    pearson = {"view": "pearson_r", "proportion": ""}
    pearson.update({col: "n/a" if correlations[col] is None else f"{correlations[col]:.6f}" for col in DROP_COLUMNS})
    body = table.copy()
    for col in ["proportion"] + DROP_COLUMNS:
        body[col] = body[col].map(lambda v: "n/a" if pd.isna(v) else f"{v:.6f}")
    out = pd.concat([body, pd.DataFrame([pearson], columns=PROPORTION_COLUMNS)], ignore_index=True)
    out.to_csv(path, sep="\t", index=False)
    logger.info(f"Proportion report written to {path}")
    if plot_path is not None:
        plot_proportions(table, plot_path)


def plot_proportions(table: pd.DataFrame, path: Union[str, Path]) -> None:
    import matplotlib

    matplotlib.use("Agg")
    # Fixed hash salt keeps SVG output byte-stable across runs
    matplotlib.rcParams.update({"font.family": "DejaVu Sans", "svg.hashsalt": "partial-el", "axes.unicode_minus": False})
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(5, 3.6), constrained_layout=True)
    ax.scatter(table["proportion"], table["el_f1_drop"], marker="o", label="EL F1 drop")
    ax.scatter(table["proportion"], table["ner_f1_drop"], marker="s", label="NER F1 drop")
    for _, row in table.iterrows():
        ax.annotate(row["view"], (row["proportion"], row["el_f1_drop"]), fontsize=7)
    ax.set_xlabel("Proportion of mention-concept annotations")
    ax.set_ylabel("F1 drop")
    ax.grid(True, alpha=0.3)
    ax.legend(loc="best", fontsize=8)
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    logger.info(f"Proportion plot written to {path}")


def save_metrics(report: MetricsReport, path: Union[str, Path]) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write(report.model_dump_json(indent=2) + "\n")
    logger.info(f"Metrics written to {path}")


def load_metrics(path: Union[str, Path]) -> MetricsReport:
    with open(path, "r", encoding="utf-8") as f:
        return MetricsReport.model_validate_json(f.read())
