"""Command-line interface.

Exit codes: 0 success, 2 configuration error (bad flags, impossible requests),
3 data error (unreadable/invalid files).
"""

from __future__ import annotations

import functools
import json
import sys
from pathlib import Path

import click

from . import bench
from . import report as report_mod
from .detectors import DEFAULT_K, DEFAULT_TARGET_TPR, Detector, Threshold
from .errors import ConfigError, OodBenchError
from .store import (
    load_benchmark,
    read_embedding_file,
    read_logit_file,
    write_embedding_file,
    write_logit_file,
)

_DETECTORS = {
    "knn": (Detector.KNN,),
    "msp": (Detector.MSP,),
    "both": (Detector.KNN, Detector.MSP),
}


def _guarded(f):
    @functools.wraps(f)
    def wrapper(*args, **kwargs):
        try:
            return f(*args, **kwargs)
        except ConfigError as err:
            click.echo(f"error: {err}", err=True)
            sys.exit(2)
        except (OodBenchError, OSError) as err:
            click.echo(f"error: {err}", err=True)
            sys.exit(3)
    return wrapper


def _echo_or_write(text, out):
    if out is None:
        click.echo(text, nl=False)


detector_option = click.option(
    "--detector", type=click.Choice(sorted(_DETECTORS)), default="both",
    show_default=True, help="Which detector(s) to run.")
manifest_option = click.option(
    "--manifest", required=True,
    type=click.Path(exists=True, dir_okay=False, path_type=Path),
    help="Benchmark manifest (YAML).")
format_option = click.option(
    "--format", "fmt", type=click.Choice(["csv", "md", "json"]),
    default="md", show_default=True, help="Report format.")
out_option = click.option(
    "--out", type=click.Path(dir_okay=False, path_type=Path), default=None,
    help="Write the report here instead of stdout.")
tpr_option = click.option(
    "--target-tpr", type=float, default=DEFAULT_TARGET_TPR, show_default=True,
    help="ID true-positive rate the threshold must reach.")
threads_option = click.option(
    "--threads", type=int, default=None, help="Worker threads for the KNN scan.")


@click.group()
def main():
    """Out-of-distribution detection benchmark over precomputed embeddings."""


@main.command("eval")
@manifest_option
@detector_option
@click.option("--k", type=int, default=DEFAULT_K, show_default=True,
              help="Neighbors for the KNN detector.")
@tpr_option
@format_option
@out_option
@threads_option
@_guarded
def eval_cmd(manifest, detector, k, target_tpr, fmt, out, threads):
    """AUROC and FPR@target for each detector against each OOD set."""
    config = bench.RunConfig(
        manifest=manifest, detectors=_DETECTORS[detector], k=k,
        target_tpr=target_tpr, threads=threads, out_format=fmt)
    report = bench.run_benchmark(config)
    _echo_or_write(report_mod.emit_report(report, fmt, out), out)


def _parse_k_list(raw):
    try:
        ks = tuple(int(part) for part in raw.split(",") if part.strip())
    except ValueError as err:
        raise ConfigError(f"bad --k-list {raw!r}: {err}") from err
    if not ks:
        raise ConfigError(f"bad --k-list {raw!r}: no values")
    return ks


@main.command("sweep-k")
@manifest_option
@click.option("--k-list", default=",".join(map(str, bench.DEFAULT_K_SWEEP)),
              show_default=True, help="Comma-separated neighbor counts.")
@tpr_option
@format_option
@out_option
@threads_option
@_guarded
def sweep_cmd(manifest, k_list, target_tpr, fmt, out, threads):
    """KNN detector metrics across several k values (one scan per query)."""
    config = bench.RunConfig(
        manifest=manifest, detectors=(Detector.KNN,), k_sweep=_parse_k_list(k_list),
        target_tpr=target_tpr, threads=threads, out_format=fmt)
    report = bench.sweep_k(config)
    _echo_or_write(report_mod.emit_report(report, fmt, out), out)


@main.command("calibrate")
@manifest_option
@detector_option
@click.option("--k", type=int, default=DEFAULT_K, show_default=True)
@tpr_option
@out_option
@_guarded
def calibrate_cmd(manifest, detector, k, target_tpr, out):
    """Compute per-detector thresholds from the manifest's ID test scores."""
    _, data = load_benchmark(manifest)
    thresholds = bench.calibrate_thresholds(
        data, _DETECTORS[detector], k=k, target_tpr=target_tpr)
    doc = {
        "target_tpr": target_tpr,
        "k": k,
        "thresholds": {
            det.value: {"value": t.value, "calibration_size": t.calibration_size}
            for det, t in thresholds.items()
        },
    }
    text = json.dumps(doc, indent=2) + "\n"
    if out is not None:
        out.write_text(text)
    _echo_or_write(text, out)


def _load_calibration(path, detectors, k):
    try:
        doc = json.loads(Path(path).read_text())
        target = float(doc["target_tpr"])
        entries = doc["thresholds"]
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as err:
        raise ConfigError(f"bad calibration file {path}: {err}") from err
    out = {}
    for det in detectors:
        if det.value not in entries:
            raise ConfigError(f"calibration file {path} has no {det.value!r} threshold")
        entry = entries[det.value]
        out[det] = Threshold(
            value=float(entry["value"]), detector=det, target_tpr=target,
            calibration_size=int(entry.get("calibration_size", 0)))
    return out


@main.command("score")
@manifest_option
@click.option("--embedding", "embedding_path", required=True,
              type=click.Path(exists=True, dir_okay=False, path_type=Path),
              help="Embedding file of the sample(s) to score.")
@click.option("--logits", "logits_path", default=None,
              type=click.Path(exists=True, dir_okay=False, path_type=Path),
              help="Matching logit file (required for MSP).")
@detector_option
@click.option("--k", type=int, default=DEFAULT_K, show_default=True)
@tpr_option
@click.option("--calibration", default=None,
              type=click.Path(exists=True, dir_okay=False, path_type=Path),
              help="Threshold file from `calibrate`; default calibrates on ID test.")
@_guarded
def score_cmd(manifest, embedding_path, logits_path, detector, k, target_tpr,
              calibration):
    """Score samples and print score, threshold, and verdict per detector."""
    detectors = _DETECTORS[detector]
    _, data = load_benchmark(manifest)
    embeddings = read_embedding_file(embedding_path)
    logits = read_logit_file(logits_path) if logits_path is not None else None
    if calibration is not None:
        thresholds = _load_calibration(calibration, detectors, k)
    else:
        thresholds = bench.calibrate_thresholds(
            data, detectors, k=k, target_tpr=target_tpr)
    rows = bench.score_samples(data, embeddings, logits, detectors, thresholds, k=k)
    for row in rows:
        click.echo(
            f"{row['sample_id']}\t{row['detector']}\t"
            f"score={row['score']:.12g}\tthreshold={row['threshold']:.12g}\t"
            f"verdict={row['verdict'].upper()}")


@main.command("ingest-csv")
@click.argument("src", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.argument("dest", type=click.Path(dir_okay=False, path_type=Path))
@click.option("--kind", type=click.Choice(["embeddings", "logits"]),
              default="embeddings", show_default=True)
@_guarded
def ingest_cmd(src, dest, kind):
    """Convert a CSV file (id, value...) to the binary container."""
    if kind == "embeddings":
        data = read_embedding_file(src)
        write_embedding_file(data, dest)
        click.echo(f"wrote {data.count} embeddings of dim {data.dim} to {dest}")
    else:
        data = read_logit_file(src)
        write_logit_file(data, dest)
        click.echo(f"wrote {data.count} logit rows of {data.classes} classes to {dest}")


@main.command("make-synthetic")
@click.option("--out-dir", required=True,
              type=click.Path(file_okay=False, path_type=Path))
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--dim", type=int, default=64, show_default=True)
@click.option("--classes", type=int, default=27, show_default=True)
@click.option("--n-train", type=int, default=2000, show_default=True)
@click.option("--n-id", type=int, default=500, show_default=True)
@click.option("--n-ood", type=int, default=500, show_default=True)
@click.option("--sets", "n_sets", type=int, default=4, show_default=True)
@click.option("--logits/--no-logits", "with_logits", default=True,
              help="Also generate logit files for the MSP detector.")
@_guarded
def make_synthetic_cmd(out_dir, seed, dim, classes, n_train, n_id, n_ood,
                       n_sets, with_logits):
    """Generate a seeded Gaussian benchmark (ID vs mean-shifted OOD sets)."""
    manifest = bench.make_synthetic(
        out_dir, seed=seed, dim=dim, classes=classes, n_train=n_train,
        n_id=n_id, n_ood=n_ood, n_sets=n_sets, with_logits=with_logits)
    click.echo(str(manifest))


if __name__ == "__main__":
    main()
