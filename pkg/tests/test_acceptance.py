"""Qualitative trends on the default seeded benchmark: the partial-KB precision drop, its redemption and the proportion correlation."""

import pytest

from src import pipeline
from src.evaluation import evaluate, proportion_report
from src.predictions import read_predictions
from src.redemption import apply_threshold, audit_closure, load_threshold
from src.synth import SynthConfig, generate, write_benchmark
from tests.conftest import write_run_config

pytestmark = pytest.mark.slow


@pytest.fixture(scope="module")
def bench_dir(tmp_path_factory):
    return write_benchmark(generate(SynthConfig()), tmp_path_factory.mktemp("bench"))


@pytest.fixture(scope="module")
def runs(tmp_path_factory, bench_dir):
    """Memoized runs keyed by (paradigm, mode, view); view None infers with the whole training KB."""
    root = tmp_path_factory.mktemp("runs")
    done = {}

    def get(paradigm, mode, view="sample", bench=bench_dir, **options):
        key = (paradigm, mode, view, str(bench), tuple(sorted(options.items())))
        if key not in done:
            name = f"{len(done):02d}-{paradigm}-{mode}"
            partial = None if view is None else {"path": str(bench / "views" / f"{view}.txt")}
            path = write_run_config(root / f"{name}.json", bench, root / name, paradigm, mode, partial, **options)
            config = pipeline.load_run_config(path)
            done[key] = (config, pipeline.run(config, jobs=4))
        return done[key]
    return get


def recovered(baseline, direct, redeemed) -> float:
    gap = baseline.el.f1 - direct.el.f1
    assert gap > 0
    return (redeemed.el.f1 - direct.el.f1) / gap


class TestPrecisionDrop:
    @pytest.mark.parametrize("paradigm", ["ner_ned", "generative"])
    def test_loses_precision_not_recall(self, runs, paradigm):
        _, baseline = runs(paradigm, "in_kb_train")
        _, direct = runs(paradigm, "direct")
        assert 100 * (baseline.ner.precision - direct.ner.precision) >= 15
        assert abs(100 * (baseline.ner.recall - direct.ner.recall)) <= 5

    def test_ned_ner_keeps_ner_f1(self, runs):
        _, baseline = runs("ned_ner", "in_kb_train")
        _, direct = runs("ned_ner", "direct")
        assert abs(100 * (baseline.ner.f1 - direct.ner.f1)) <= 5


class TestRedemption:
    @pytest.mark.parametrize("paradigm", ["ner_ned", "generative"])
    @pytest.mark.parametrize("mode", ["post_prune", "threshold"])
    def test_recovers_half_the_gap(self, runs, paradigm, mode):
        _, baseline = runs(paradigm, "in_kb_train")
        _, direct = runs(paradigm, "direct")
        _, redeemed = runs(paradigm, mode)
        assert recovered(baseline, direct, redeemed) >= 0.5

    @pytest.mark.parametrize("paradigm", ["ner_ned", "generative"])
    def test_tuned_theta_never_hurts_dev(self, runs, paradigm):
        config, _ = runs(paradigm, "threshold")
        ctx = pipeline.load_context(config, splits=("dev",))
        _, dev = read_predictions(pipeline.predictions_path(ctx.out_dir, "dev"))
        theta = load_threshold(ctx.out_dir / pipeline.ARTIFACTS["threshold"]).theta
        gold = ctx.gold("dev").annotations
        assert evaluate(apply_threshold(dev, theta), gold).el.f1 >= evaluate(dev, gold).el.f1


class TestClosure:
    @pytest.mark.parametrize("paradigm, mode", [
        ("ner_ned", "direct"), ("ner_ned", "post_prune"),
        ("ned_ner", "direct"), ("ned_ner", "threshold"),
        ("generative", "direct"), ("generative", "post_prune"),
    ])
    def test_every_prediction_is_in_view(self, runs, paradigm, mode):
        config, _ = runs(paradigm, mode)
        ctx = pipeline.load_context(config, splits=("test",))
        _, final = read_predictions(pipeline.predictions_path(ctx.out_dir, "test", "final"))
        assert audit_closure(final, ctx.view) == len(final)
        header, raw = read_predictions(pipeline.predictions_path(ctx.out_dir, "test"))
        assert audit_closure(raw, ctx.inference_view) == len(raw)
        assert header.view == ctx.inference_view.name


class TestProportion:
    VIEWS = ["sample20", "sample", "sample60", "sample80"]

    @pytest.fixture(scope="class")
    def sweep_dir(self, tmp_path_factory):
        config = SynthConfig(extra_fractions=[0.2, 0.6, 0.8])
        return write_benchmark(generate(config), tmp_path_factory.mktemp("sweep"))

    @pytest.mark.parametrize("paradigm", ["ner_ned", "generative"])
    def test_ner_f1_drop_falls_with_proportion(self, runs, sweep_dir, paradigm):
        # drops are measured against inference with the whole training KB on the full gold
        _, full = runs(paradigm, "direct", view=None, bench=sweep_dir)
        triples, proportions = [], {}
        for view in self.VIEWS:
            config, partial = runs(paradigm, "direct", view=view, bench=sweep_dir)
            manifest, _ = pipeline.load_run_metrics(config.output_dir)
            triples.append((view, full, partial))
            proportions[view] = manifest["annotation_proportion"]

        table, correlations = proportion_report(triples, proportions)
        assert len(table) == 4
        assert sorted(table["proportion"]) == sorted(proportions.values())
        assert correlations["ner_f1_drop"] is not None and correlations["ner_f1_drop"] < 0
