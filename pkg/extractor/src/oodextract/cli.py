"""Command-line entry point.

Exit codes: 0 success, 2 bad configuration (missing/ill-fitting checkpoint,
bad flags), 3 data/output error.
"""

import logging
import sys
from pathlib import Path

import click

from oodbench import OodBenchError

from .errors import ExtractError
from .extract import ExtractionJob, run_extraction
from .model import DEFAULT_CLASSES


@click.command()
@click.option("--images", "images_dir", required=True,
              type=click.Path(exists=True, file_okay=False, path_type=Path),
              help="Directory scanned recursively for images.")
@click.option("--checkpoint", default=None,
              type=click.Path(exists=True, dir_okay=False, path_type=Path),
              help="ResNet50 state dict with the replaced head; omit to pull "
                   "pretrained backbone weights through torchvision.")
@click.option("--emb", "embedding_out", required=True,
              type=click.Path(dir_okay=False, path_type=Path),
              help="Output embedding file.")
@click.option("--logits", "logits_out", required=True,
              type=click.Path(dir_okay=False, path_type=Path),
              help="Output logit file.")
@click.option("--batch", "batch_size", type=int, default=16, show_default=True,
              help="Images per forward pass.")
@click.option("--classes", type=int, default=DEFAULT_CLASSES, show_default=True,
              help="Width of the classification head.")
def main(images_dir, checkpoint, embedding_out, logits_out, batch_size, classes):
    """Run a ResNet50 over an image folder and write one 2048-d embedding row
    and one logit row per image, ids aligned, in oodbench's binary format."""
    logging.basicConfig(stream=sys.stderr, level=logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    job = ExtractionJob(
        images_dir=images_dir, embedding_out=embedding_out,
        logits_out=logits_out, checkpoint=checkpoint,
        batch_size=batch_size, classes=classes)
    try:
        result = run_extraction(job)
    except ExtractError as err:
        click.echo(f"error: {err}", err=True)
        sys.exit(2)
    except (OodBenchError, OSError) as err:
        click.echo(f"error: {err}", err=True)
        sys.exit(3)
    for rel in result.skipped:
        click.echo(f"warning: skipped undecodable file {rel}", err=True)
    message = (f"wrote {result.count} rows to {embedding_out} "
               f"(dim {job.embedding_dim}) and {logits_out} ({classes} classes)")
    if result.skipped:
        message += f"; skipped {len(result.skipped)} undecodable file(s)"
    click.echo(message)


if __name__ == "__main__":
    main()
