"""End-to-end demo: synthetic data, three prediction schemes, full evaluation.

One :func:`run_demo` call generates a two-moons dataset, trains an
MC-dropout network and a heterogeneous ensemble, produces prediction
tensors under all three schemes, and writes the declared artifact files
plus plots and a manifest into an output directory. Everything derives
from a single seed, so reruns are byte-identical (manifest timestamp
aside).

The model comparison mirrors the repeated-runs protocol at toy scale:
a warm-start head (fine-tuned from a pretrained backbone) against a
cold-start head (fresh random init), trained briefly on per-run bootstrap
resamples and scored on the shared test split.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .aggregate import ENSEMBLE, MCD, aggregate, save_summaries
from .calibration import calibration_as_dict, calibration_report
from .datasets import generate_dataset, save_dataset
from .models import (
    EnsembleSpec,
    Mlp,
    MlpSpec,
    TrainConfig,
    emcd_predict,
    ensemble_predict,
    fit_adam,
    mc_dropout_predict,
    train_ensemble,
    train_mlp,
)
from .stats import accuracy, auc_binary, compare_models, positive_class_scores
from .tensor import LabelSet, aligned_labels, save_labels, save_predictions
from .ucm import (
    build_ucm,
    separation_as_dict,
    separation_report,
    threshold_sweep,
    ucm_as_dict,
)

SCHEMES = ("mcd", "ensemble", "emcd")

DEMO_ARTIFACTS = (
    "dataset.csv",
    "predictions_mcd.csv",
    "predictions_ensemble.csv",
    "predictions_emcd.csv",
    "summaries_mcd.csv",
    "summaries_ensemble.csv",
    "summaries_emcd.csv",
    "sweep.csv",
    "report.json",
)

DEFAULT_THRESHOLD = 0.3
DEFAULT_GRID = tuple(round(0.1 * k, 12) for k in range(1, 10))


@dataclass(frozen=True)
class DemoPreset:
    kind: str = "two-moons"
    n_points: int = 600
    noise: float = 0.28
    mcd_hidden: tuple[int, ...] = (32, 16, 4)
    dropout_rate: float = 0.25
    epochs: int = 100
    batch_size: int = 32
    mcd_passes: int = 100
    ensemble_members: int = 10
    emcd_passes_per_member: int = 8
    compare_runs: int = 12
    compare_head_hidden: tuple[int, ...] = (16, 8)
    compare_pretrain_epochs: int = 60
    compare_head_epochs: int = 20
    bins: int = 10


QUICK_PRESET = DemoPreset(
    n_points=240,
    epochs=40,
    mcd_passes=40,
    ensemble_members=4,
    emcd_passes_per_member=4,
    compare_runs=6,
    compare_pretrain_epochs=25,
    compare_head_epochs=10,
)


@dataclass(frozen=True)
class DemoResult:
    dataset: object
    labels: LabelSet
    tensors: dict
    schemes: dict
    summaries: dict
    report: dict
    sweeps: dict


def _sub_seeds(seed: int) -> dict[str, int]:
    names = ("data", "mcd_train", "mcd_passes", "ensemble", "emcd_passes", "compare")
    children = np.random.SeedSequence(seed).spawn(len(names))
    return {
        name: int(child.generate_state(1, dtype=np.uint64)[0] % (2**63))
        for name, child in zip(names, children)
    }


def build_demo_models(seed: int, preset: DemoPreset = DemoPreset(), log_base: str = "2"):
    """Dataset, trained models, tensors, and summaries for all three schemes."""
    seeds = _sub_seeds(seed)
    dataset = generate_dataset(preset.kind, preset.n_points, preset.noise, seeds["data"])
    labels = LabelSet(dataset.test_ids, dataset.test_y)

    mcd_spec = MlpSpec(
        layer_widths=(2, *preset.mcd_hidden, 2),
        dropout_rate=preset.dropout_rate,
        seed=seeds["mcd_train"],
    )
    config = TrainConfig(epochs=preset.epochs, batch_size=preset.batch_size,
                         seed=seeds["mcd_train"])
    mcd_model = train_mlp(mcd_spec, config, dataset)

    ensemble_spec = EnsembleSpec(
        member_count=preset.ensemble_members,
        dropout_rate=preset.dropout_rate,
        master_seed=seeds["ensemble"],
    )
    members = train_ensemble(ensemble_spec, config, dataset)

    test_x, test_ids = dataset.test_x, dataset.test_ids
    mcd_tensor = mc_dropout_predict(mcd_model, test_x, preset.mcd_passes,
                                    seeds["mcd_passes"], test_ids)
    ens_tensor = ensemble_predict(members, test_x, test_ids)
    emcd_tensor, emcd_sch = emcd_predict(members, test_x, preset.emcd_passes_per_member,
                                         seeds["emcd_passes"], test_ids)

    tensors = {"mcd": mcd_tensor, "ensemble": ens_tensor, "emcd": emcd_tensor}
    schemes = {"mcd": MCD, "ensemble": ENSEMBLE, "emcd": emcd_sch}
    summaries = {
        name: aggregate(tensors[name], schemes[name], log_base) for name in SCHEMES
    }
    return dataset, labels, tensors, schemes, summaries, seeds, (mcd_model, members)


def _comparison_runs(dataset, seed: int, preset: DemoPreset):
    """Warm-start vs cold-start heads over bootstrap resamples of the train split."""
    train_x, train_y = dataset.train_x, dataset.train_y
    test_x, test_ids = dataset.test_x, dataset.test_ids
    labels = LabelSet(dataset.test_ids, dataset.test_y)

    head_widths = (2, *preset.compare_head_hidden, 2)
    seqs = np.random.SeedSequence(seed).spawn(preset.compare_runs + 1)

    def seq_int(seq):
        return int(seq.generate_state(1, dtype=np.uint64)[0] % (2**63))

    backbone_seed = seq_int(seqs[0])
    backbone = train_mlp(
        MlpSpec(head_widths, dropout_rate=0.0, seed=backbone_seed),
        TrainConfig(epochs=preset.compare_pretrain_epochs,
                    batch_size=preset.batch_size, seed=backbone_seed),
        (train_x, train_y),
    )

    def evaluate(model: Mlp, run_seed: int):
        tensor = ensemble_predict([model], test_x, test_ids)
        summaries = aggregate(tensor, MCD)
        return (run_seed, summaries, labels)

    runs_warm, runs_cold = [], []
    for seq in seqs[1:]:
        run_seed = seq_int(seq)
        rng = np.random.default_rng(seq)
        resample = rng.integers(0, len(train_y), size=int(0.8 * len(train_y)))
        # keep both classes present in the bootstrap sample
        resample = np.concatenate([
            resample,
            [int(np.flatnonzero(train_y == 0)[0]), int(np.flatnonzero(train_y == 1)[0])],
        ])
        x_run, y_run = train_x[resample], train_y[resample]
        head_config = TrainConfig(epochs=preset.compare_head_epochs,
                                  batch_size=preset.batch_size, seed=run_seed)

        warm = Mlp(MlpSpec(head_widths, dropout_rate=0.0, seed=run_seed))
        warm.weights = [w.copy() for w in backbone.weights]
        warm.biases = [b.copy() for b in backbone.biases]
        fit_adam(warm, head_config, x_run, y_run)
        runs_warm.append(evaluate(warm, run_seed))

        cold = train_mlp(MlpSpec(head_widths, dropout_rate=0.0, seed=run_seed),
                         head_config, (x_run, y_run))
        runs_cold.append(evaluate(cold, run_seed))
    return runs_warm, runs_cold


def evaluate_demo(seed: int, preset: DemoPreset = DemoPreset(), log_base: str = "2",
                  threshold: float = DEFAULT_THRESHOLD, grid=DEFAULT_GRID,
                  with_comparison: bool = True):
    """All analyses of one demo run, as plain data (no files)."""
    dataset, labels, tensors, schemes, summaries, seeds, _ = build_demo_models(
        seed, preset, log_base
    )
    per_scheme = {}
    sweeps = {}
    for name in SCHEMES:
        s = summaries[name]
        truth = aligned_labels([x.sample_id for x in s], labels)
        sweeps[name] = threshold_sweep(s, labels, grid)
        per_scheme[name] = {
            "ucm": ucm_as_dict(build_ucm(s, labels, threshold)),
            "calibration": calibration_as_dict(calibration_report(s, labels, preset.bins)),
            "separation": separation_as_dict(separation_report(s, labels)),
            "point": {
                "accuracy": accuracy(s, labels),
                "auc": auc_binary(positive_class_scores(s), truth),
            },
        }
    report = {
        "seed": seed,
        "derived_seeds": seeds,
        "threshold": threshold,
        "log_base": log_base,
        "schemes": per_scheme,
    }
    comparison_runs = None
    if with_comparison:
        runs_warm, runs_cold = _comparison_runs(dataset, seeds["compare"], preset)
        comparison = compare_models(runs_warm, runs_cold)
        report["comparison"] = {
            "variant_a": "warm_start",
            "variant_b": "cold_start",
            "accuracy": comparison["accuracy"].as_dict(),
            "auc": comparison["auc"].as_dict(),
        }
        comparison_runs = comparison
    return DemoResult(dataset, labels, tensors, schemes, summaries, report, sweeps), comparison_runs


def write_demo_artifacts(result: DemoResult, comparison, out_dir, digest: str) -> list[str]:
    """Write the declared artifact files plus labels and plots; returns paths."""
    from .manifest import canonical_json
    from .svg import reliability_svg, histogram_svg, sweep_svg, violin_svg
    from .ucm import render_sweep_rows, SWEEP_HEADER

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    stamp = f"manifest_digest={digest}"
    written = []

    def record(name):
        written.append(str(out / name))
        return out / name

    save_dataset(result.dataset, record("dataset.csv"), header_comment=stamp)
    save_labels(result.labels, record("labels.csv"), header_comment=stamp)
    for name in SCHEMES:
        save_predictions(result.tensors[name], record(f"predictions_{name}.csv"),
                         header_comment=stamp)
        save_summaries(result.summaries[name], record(f"summaries_{name}.csv"),
                       header_comment=stamp)

    with open(record("sweep.csv"), "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"# {stamp}\n")
        fh.write("scheme," + SWEEP_HEADER + "\n")
        for name in SCHEMES:
            fh.write(render_sweep_rows(result.sweeps[name], scheme=name))

    report = dict(result.report)
    report["manifest_digest"] = digest
    with open(record("report.json"), "w", encoding="utf-8", newline="\n") as fh:
        fh.write(canonical_json(report))

    for name in SCHEMES:
        (out / f"sweep_{name}.svg").write_text(
            sweep_svg(result.sweeps[name], digest), encoding="utf-8"
        )
        cal = result.report["schemes"][name]["calibration"]
        rows = [
            {"lo": b["lo"], "hi": b["hi"], "count": b["count"], "accuracy": b["accuracy"]}
            for b in cal["bins"]
        ]
        (out / f"reliability_{name}.svg").write_text(
            reliability_svg(rows, cal["ece"], digest), encoding="utf-8"
        )
        s = result.summaries[name]
        truth = aligned_labels([x.sample_id for x in s], result.labels)
        u = np.array([x.normalized_entropy for x in s])
        correct = np.array([x.predicted_class for x in s]) == truth
        (out / f"separation_{name}.svg").write_text(
            histogram_svg(
                {"correct": u[correct], "incorrect": u[~correct]},
                "normalized entropy", digest,
            ),
            encoding="utf-8",
        )

    if comparison is not None:
        from .stats import comparison_values_csv

        (out / "comparison_values.csv").write_text(
            f"# {stamp}\n" + comparison_values_csv(comparison), encoding="utf-8"
        )
        for metric in ("accuracy", "auc"):
            cmp = comparison[metric]
            (out / f"comparison_{metric}.svg").write_text(
                violin_svg(
                    {"warm_start": np.array(cmp.a.values),
                     "cold_start": np.array(cmp.b.values)},
                    metric, digest,
                ),
                encoding="utf-8",
            )
    return written


def run_demo(seed: int, out_dir, preset: DemoPreset = DemoPreset(), log_base: str = "2",
             digest: str = "none") -> DemoResult:
    """Full pipeline into ``out_dir``; the acceptance entry point."""
    result, comparison = evaluate_demo(seed, preset, log_base)
    write_demo_artifacts(result, comparison, out_dir, digest)
    return result
