"""Command-line entry points tying the modules into reproducible runs.

Exit code classes: 0 success, 2 validation (bad flags or config), 3
data (missing/corrupt inputs, locked or occupied output directories),
4 anything else at runtime.
"""

from __future__ import annotations

import dataclasses
import functools
from dataclasses import replace
from pathlib import Path

import click
import numpy as np

from . import __version__
from .ablation import aggregate_runs, run_ablation, trend_plot
from .config import load_ablation_plan, load_synthetic_spec, load_train_config
from .corpus import (
    discover,
    iter_synthetic_trials,
    load_corpus,
    load_meta,
    load_trial,
    save_corpus,
)
from .errors import DataError
from .matchmismatch import make_folds, run_fold
from .pipeline import PreprocConfig, preprocess_trial
from .runs import RESULTS_NAME, RunDirectory, load_manifest, load_results
from .stats import significance

EXIT_VALIDATION = 2
EXIT_DATA = 3
EXIT_RUNTIME = 4


def _fail(err, code):
    click.echo(f"error: {err}", err=True)
    raise SystemExit(code)


def _guarded(fn):
    """Map library exceptions onto the documented exit-code classes."""

    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except click.ClickException:
            raise
        except DataError as err:
            _fail(err, EXIT_DATA)
        except (ValueError, TypeError) as err:
            _fail(err, EXIT_VALIDATION)
        except Exception as err:
            _fail(f"{type(err).__name__}: {err}", EXIT_RUNTIME)

    return wrapper


def _render_table(header, rows) -> str:
    cells = [[str(c) for c in row] for row in [header, *rows]]
    widths = [max(len(row[i]) for row in cells) for i in range(len(header))]
    out = []
    for index, row in enumerate(cells):
        out.append("  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip())
        if index == 0:
            out.append("  ".join("-" * w for w in widths))
    return "\n".join(out)


def _fold_table(rows) -> str:
    """rows: (label, per-fold accuracies, average) triples."""
    n_folds = max(len(accs) for _, accs, _ in rows)
    header = ["run"] + [f"fold {i}" for i in range(1, n_folds + 1)] + ["average"]
    body = []
    for label, accs, mean in rows:
        cells = [f"{a:.2f}" for a in accs]
        cells += [""] * (n_folds - len(cells))
        body.append([label] + cells + [f"{mean:.2f}"])
    return _render_table(header, body)


@click.group(name="eegmatch")
@click.version_option(version=__version__)
def cli():
    """Speech/EEG match-mismatch experiments."""


main = cli


def _dataset_sources(root):
    subjects, trials = discover(root)
    for subject in subjects:
        for trial_id in trials:
            yield (f"{subject} trial {trial_id}",
                   lambda s=subject, t=trial_id: load_trial(root, s, t))


def _synthetic_sources(spec):
    for trial in iter_synthetic_trials(spec):
        yield f"{trial.subject_id} trial {trial.trial_id}", lambda t=trial: t


@cli.command()
@click.option("--dataset-root", type=click.Path(exists=True, file_okay=False),
              envvar="EEGMATCH_DATASET_ROOT",
              help="Raw dataset root (also via $EEGMATCH_DATASET_ROOT).")
@click.option("--synthetic", "synthetic_path",
              type=click.Path(exists=True, dir_okay=False),
              help="YAML spec for a synthetic corpus.")
@click.option("--out", "out_dir", required=True, type=click.Path(),
              help="Corpus output directory.")
@click.option("--force", is_flag=True,
              help="Replace a non-empty output directory.")
@_guarded
def preprocess(dataset_root, synthetic_path, out_dir, force):
    """Build a sentence-record corpus from raw trials.

    A trial that fails to load or preprocess is reported and skipped;
    the remaining records are still written.
    """
    if (dataset_root is None) == (synthetic_path is None):
        raise click.UsageError("pass exactly one of --dataset-root or --synthetic")
    if synthetic_path is not None:
        spec = load_synthetic_spec(synthetic_path)
        source = {"synthetic": dataclasses.asdict(spec)}
        trial_sources = _synthetic_sources(spec)
    else:
        source = {"dataset_root": str(Path(dataset_root).resolve())}
        trial_sources = _dataset_sources(dataset_root)

    config = PreprocConfig()
    entries = []
    failures = []

    def trial_results():
        for label, load in trial_sources:
            try:
                records, report = preprocess_trial(load(), config)
            except Exception as err:
                message = f"{type(err).__name__}: {err}"
                failures.append((label, message))
                entries.append({"type": "trial", "trial": label,
                                "status": "failed", "error": message})
                continue
            entries.append({"type": "trial", "trial": label, "status": "ok",
                            "n_records": len(records)})
            yield records, report

    with RunDirectory(out_dir, "preprocess",
                      {"source": source, "preprocessing": config.snapshot()},
                      force=force) as run:
        for name in ("records", "reports.jsonl", "meta.json"):
            run.add_output(name)
        meta = save_corpus(run.path, trial_results(), config.snapshot())
        if meta["n_records"] == 0:
            raise DataError("no trial could be preprocessed; "
                            + "; ".join(f"{l}: {m}" for l, m in failures))
        run.append_results(entries)
        run.set_fingerprint(meta["fingerprint"])

    n_ok = sum(1 for e in entries if e["status"] == "ok")
    click.echo(f"wrote {meta['n_records']} records from {n_ok} trials "
               f"to {run.path}")
    if failures:
        click.echo(f"failed trials ({len(failures)}):", err=True)
        for label, message in failures:
            click.echo(f"  {label}: {message}", err=True)


@cli.command()
@click.option("--config", "config_path", required=True,
              type=click.Path(exists=True, dir_okay=False),
              help="Training config YAML.")
@click.option("--corpus", "corpus_dir", required=True,
              type=click.Path(exists=True, file_okay=False),
              help="Preprocessed corpus directory.")
@click.option("--out", "out_dir", required=True, type=click.Path(),
              help="Run output directory.")
@click.option("--seed", type=int, default=None, help="Override the config seed.")
@click.option("--folds", type=int, default=3, show_default=True,
              help="Number of subject-independent folds.")
@click.option("--force", is_flag=True,
              help="Replace a non-empty output directory.")
@_guarded
def train(config_path, corpus_dir, out_dir, seed, folds, force):
    """Train and evaluate with subject-independent cross-validation."""
    config = load_train_config(config_path)
    if seed is not None:
        config = replace(config, seed=seed).validate()
    records = load_corpus(corpus_dir)
    meta = load_meta(corpus_dir)
    splits = make_folds([r.subject_id for r in records], folds)

    with RunDirectory(out_dir, "train", config.snapshot(),
                      corpus_fingerprint=meta["fingerprint"],
                      seeds=[config.seed], force=force) as run:
        checkpoints = run.add_output("checkpoints")
        accuracies = []
        for index, split in enumerate(splits, start=1):
            result = run_fold(records, split, config, fold_index=index,
                              checkpoint_dir=checkpoints, log=click.echo)
            run.append_results([{"type": "fold", **result.to_dict()}])
            accuracies.append(result.accuracy)
        run.append_results([{
            "type": "summary",
            "model": config.model,
            "similarity": config.similarity,
            "fold_accuracies": accuracies,
            "mean_accuracy": float(np.mean(accuracies)),
        }])

    click.echo(_fold_table([(Path(out_dir).name, accuracies,
                             float(np.mean(accuracies)))]))


@cli.command()
@click.option("--plan", "plan_path", required=True,
              type=click.Path(exists=True, dir_okay=False),
              help="Ablation plan YAML.")
@click.option("--corpus", "corpus_dir", required=True,
              type=click.Path(exists=True, file_okay=False),
              help="Preprocessed corpus directory.")
@click.option("--out", "out_dir", required=True, type=click.Path(),
              help="Run output directory.")
@click.option("--folds", type=int, default=3, show_default=True,
              help="Number of subject-independent folds.")
@click.option("--force", is_flag=True,
              help="Replace a non-empty output directory.")
@_guarded
def ablate(plan_path, corpus_dir, out_dir, folds, force):
    """Sweep word-boundary transforms over a parameter grid."""
    plan = load_ablation_plan(plan_path)
    records = load_corpus(corpus_dir)
    meta = load_meta(corpus_dir)

    with RunDirectory(out_dir, "ablate", plan.snapshot(),
                      corpus_fingerprint=meta["fingerprint"],
                      seeds=plan.seeds, force=force) as run:
        entries = run_ablation(plan, records, n_folds=folds, log=click.echo)
        run.append_results([{"type": "run", **entry} for entry in entries])
        rows = aggregate_runs(entries)
        run.append_results([{"type": "aggregate", **row} for row in rows])
        plots = run.add_output("plots")
        plots.mkdir(exist_ok=True)
        trend_plot(rows, plots / "trend.png", title=f"{plan.kind} sweep")

    click.echo(_aggregate_table(rows))
    n_failed = sum(entry["status"] == "failed" for entry in entries)
    if n_failed:
        click.echo(f"{n_failed} runs failed; details in {RESULTS_NAME}",
                   err=True)


def _fmt_acc(value) -> str:
    return "-" if value is None else f"{value:.2f}"


def _aggregate_table(rows) -> str:
    header = ["parameter", "runs", "failed", "mean", "min", "max"]
    body = [[row["parameter"], row["n_runs"], row["n_failed"],
             _fmt_acc(row["mean_accuracy"]), _fmt_acc(row["min_accuracy"]),
             _fmt_acc(row["max_accuracy"])] for row in rows]
    return _render_table(header, body)


def _labels(paths):
    names = [Path(p).name for p in paths]
    return [name if names.count(name) == 1 else str(p)
            for name, p in zip(names, paths)]


def _fold_structure(rows):
    return {row["fold_index"]: (tuple(row["test_subjects"]), row["seed"])
            for row in rows if row["type"] == "fold"}


def _per_subject(rows) -> dict:
    merged = {}
    for row in rows:
        if row["type"] == "fold":
            merged.update(row["per_subject"])
    return merged


def _significance_lines(train_runs):
    lines = []
    for i in range(len(train_runs)):
        for j in range(i + 1, len(train_runs)):
            label_a, rows_a = train_runs[i]
            label_b, rows_b = train_runs[j]
            if _fold_structure(rows_a) != _fold_structure(rows_b):
                continue
            a = _per_subject(rows_a)
            b = _per_subject(rows_b)
            subjects = sorted(a)
            if subjects != sorted(b):
                continue
            try:
                res = significance(np.array([a[s] for s in subjects]),
                                   np.array([b[s] for s in subjects]))
            except ValueError as err:
                lines.append(f"{label_a} vs {label_b}: not testable ({err})")
                continue
            lines.append(f"{label_a} vs {label_b}: W={res.statistic:.1f}, "
                         f"n={res.n_effective}, p={res.p_value:.4g}")
    return lines


@cli.command()
@click.option("--results", "results_dirs", required=True, multiple=True,
              type=click.Path(exists=True, file_okay=False),
              help="Finished run directory (repeatable).")
@click.option("--out", "out_dir", required=True, type=click.Path(),
              help="Report output directory.")
@click.option("--force", is_flag=True,
              help="Replace a non-empty output directory.")
@_guarded
def report(results_dirs, out_dir, force):
    """Render tables and plots from persisted run records.

    Training runs that share folds and seeds additionally get pairwise
    Wilcoxon signed-rank tests over per-subject accuracies.
    """
    labels = _labels(results_dirs)
    loaded = []
    for label, directory in zip(labels, results_dirs):
        manifest = load_manifest(directory, require_complete=True)
        if manifest["command"] not in ("train", "ablate"):
            raise DataError(f"{directory}: cannot report on a "
                            f"{manifest['command']!r} run")
        loaded.append((label, manifest, load_results(directory)))

    fingerprints = sorted({m["corpus_fingerprint"] for _, m, _ in loaded})
    if len(fingerprints) > 1:
        raise DataError("runs use different corpora: "
                        + " vs ".join(fingerprints))

    sections = []
    train_runs = [(label, rows) for label, manifest, rows in loaded
                  if manifest["command"] == "train"]
    if train_runs:
        table_rows = []
        for label, rows in train_runs:
            summary = next(r for r in rows if r["type"] == "summary")
            table_rows.append((label, summary["fold_accuracies"],
                               summary["mean_accuracy"]))
        sections.append("cross-validation accuracy [%]\n"
                        + _fold_table(table_rows))
        lines = _significance_lines(train_runs)
        if lines:
            sections.append(
                "pairwise Wilcoxon signed-rank over per-subject accuracies\n"
                + "\n".join(lines))

    ablate_runs = [(label, rows) for label, manifest, rows in loaded
                   if manifest["command"] == "ablate"]

    with RunDirectory(out_dir, "report",
                      {"results": [str(d) for d in results_dirs]},
                      corpus_fingerprint=fingerprints[0], force=force) as run:
        if ablate_runs:
            plots = run.add_output("plots")
            plots.mkdir(exist_ok=True)
        for label, rows in ablate_runs:
            aggregates = [r for r in rows if r["type"] == "aggregate"]
            kind = aggregates[0]["kind"] if aggregates else "ablation"
            plot_path = plots / f"{label}_trend.png"
            trend_plot(aggregates, plot_path, title=f"{kind} sweep")
            sections.append(f"{label}: {kind} sweep\n"
                            + _aggregate_table(aggregates)
                            + f"\n[plot: {plot_path.relative_to(run.path)}]")
        text = "\n\n".join(sections) + "\n"
        run.add_output("report.md").write_text(text)

    click.echo(text, nl=False)
