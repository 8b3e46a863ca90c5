"""CLI: `model-runner train --config run.yaml`, `model-runner generate ...`."""

from __future__ import annotations

import logging
import sys

import click
from transformers.utils import logging as hf_logging

from .config import ConfigError, load_config
from .data import SchemaError
from . import runner


@click.group()
def main():
    """Finetune a seq2seq model on TrainExample JSONL files and generate predictions."""
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    # checkpoint-save progress bars would interleave with the emitted paths
    hf_logging.disable_progress_bar()


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
def train(config_path):
    """Run all configured finetuning stages; one checkpoint per stage."""
    try:
        cfg = load_config(config_path)
        checkpoints = runner.train(cfg)
    except (ConfigError, SchemaError, FileNotFoundError) as e:
        click.echo(f"error: {e}", err=True)
        sys.exit(3)
    for ckpt in checkpoints:
        click.echo(str(ckpt))


@main.command()
@click.option("--checkpoint", required=True, type=click.Path(exists=True))
@click.option("--eval-file", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--max-new-tokens", default=256, show_default=True)
@click.option("--num-beams", default=1, show_default=True)
@click.option("--batch-size", default=16, show_default=True)
def generate(checkpoint, eval_file, out_path, max_new_tokens, num_beams, batch_size):
    """Write PredictionRecord JSONL for every example in an eval file."""
    try:
        n = runner.generate(
            checkpoint, eval_file, out_path,
            max_new_tokens=max_new_tokens, num_beams=num_beams, batch_size=batch_size,
        )
    except (SchemaError, FileNotFoundError) as e:
        click.echo(f"error: {e}", err=True)
        sys.exit(3)
    click.echo(f"predictions={n}")


if __name__ == "__main__":
    main()
