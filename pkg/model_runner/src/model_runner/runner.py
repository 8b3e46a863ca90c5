"""Staged seq2seq finetuning and batch generation.

With no pretrained checkpoint available, "scratch" builds a small BART-style
model plus a word-level tokenizer trained on the stage files. The marker
strings (<mask>, <ANSWER>, decoration tokens) are registered as special
tokens so they survive encoding and decoding verbatim.
"""

from __future__ import annotations

import json
import logging
from pathlib import Path

import torch
from tokenizers import Tokenizer, models as tok_models, pre_tokenizers, trainers
from transformers import (
    BartConfig,
    BartForConditionalGeneration,
    PreTrainedTokenizerFast,
)

from .config import RunConfig, StageConfig
from .data import Example, load_examples

logger = logging.getLogger(__name__)

PAD, BOS, EOS, UNK = "<pad>", "<s>", "</s>", "<unk>"


def build_tokenizer(files: list[str | Path], special_tokens: list[str]) -> PreTrainedTokenizerFast:
    """Train a word-level tokenizer over the inputs and targets of the given files."""

    def texts():
        for path in files:
            for ex in load_examples(path):
                yield ex.input_text
                yield ex.target_text

    tok = Tokenizer(tok_models.WordLevel(unk_token=UNK))
    tok.pre_tokenizer = pre_tokenizers.Whitespace()
    trainer = trainers.WordLevelTrainer(
        special_tokens=[PAD, BOS, EOS, UNK, *special_tokens], min_frequency=1
    )
    tok.train_from_iterator(texts(), trainer)
    return PreTrainedTokenizerFast(
        tokenizer_object=tok,
        pad_token=PAD,
        bos_token=BOS,
        eos_token=EOS,
        unk_token=UNK,
        additional_special_tokens=list(special_tokens),
    )


def build_model(tokenizer: PreTrainedTokenizerFast, cfg: RunConfig) -> BartForConditionalGeneration:
    config = BartConfig(
        vocab_size=len(tokenizer),
        d_model=cfg.model.d_model,
        encoder_layers=cfg.model.layers,
        decoder_layers=cfg.model.layers,
        encoder_attention_heads=cfg.model.heads,
        decoder_attention_heads=cfg.model.heads,
        encoder_ffn_dim=cfg.model.ffn_dim,
        decoder_ffn_dim=cfg.model.ffn_dim,
        max_position_embeddings=max(cfg.max_source_len, cfg.max_target_len) + 2,
        pad_token_id=tokenizer.pad_token_id,
        bos_token_id=tokenizer.bos_token_id,
        eos_token_id=tokenizer.eos_token_id,
        decoder_start_token_id=tokenizer.bos_token_id,
        forced_eos_token_id=None,
    )
    return BartForConditionalGeneration(config)


def _encode_batch(tokenizer, texts, max_len, add_eos=False):
    encoded = [tokenizer.encode(t)[: max_len - 1] for t in texts]
    if add_eos:
        encoded = [ids + [tokenizer.eos_token_id] for ids in encoded]
    width = max(len(ids) for ids in encoded)
    pad = tokenizer.pad_token_id
    input_ids = torch.tensor([ids + [pad] * (width - len(ids)) for ids in encoded])
    attention = (input_ids != pad).long()
    return input_ids, attention


def _train_stage(
    model,
    tokenizer,
    examples: list[Example],
    stage: StageConfig,
    cfg: RunConfig,
    generator: torch.Generator,
) -> list[list[str]]:
    """Train one stage; returns the example-id order of every epoch."""
    optimizer = torch.optim.AdamW(model.parameters(), lr=stage.learning_rate)
    model.train()
    orders: list[list[str]] = []
    for epoch in range(stage.epochs):
        perm = torch.randperm(len(examples), generator=generator).tolist()
        orders.append([examples[i].id for i in perm])
        total_loss = 0.0
        for start in range(0, len(perm), stage.batch_size):
            batch = [examples[i] for i in perm[start : start + stage.batch_size]]
            input_ids, attention = _encode_batch(
                tokenizer, [b.input_text for b in batch], cfg.max_source_len
            )
            target_ids, target_mask = _encode_batch(
                tokenizer, [b.target_text for b in batch], cfg.max_target_len, add_eos=True
            )
            labels = target_ids.masked_fill(target_mask == 0, -100)
            out = model(input_ids=input_ids, attention_mask=attention, labels=labels)
            out.loss.backward()
            optimizer.step()
            optimizer.zero_grad()
            total_loss += out.loss.item() * len(batch)
        if epoch % 10 == 0 or epoch == stage.epochs - 1:
            logger.info(
                "stage %s epoch %d/%d loss %.4f",
                stage.name, epoch + 1, stage.epochs, total_loss / len(examples),
            )
    return orders


def train(cfg: RunConfig) -> list[Path]:
    """Run all stages in order; returns one checkpoint directory per stage."""
    for stage in cfg.stages:
        load_examples(stage.file)  # validate every file before any training

    torch.manual_seed(cfg.seed)
    generator = torch.Generator().manual_seed(cfg.seed)

    out_root = Path(cfg.output_dir)
    out_root.mkdir(parents=True, exist_ok=True)

    if cfg.base_model == "scratch":
        tokenizer = build_tokenizer([s.file for s in cfg.stages], list(cfg.special_tokens))
        model = build_model(tokenizer, cfg)
    else:
        tokenizer = PreTrainedTokenizerFast.from_pretrained(cfg.base_model)
        tokenizer.add_special_tokens({"additional_special_tokens": list(cfg.special_tokens)})
        model = BartForConditionalGeneration.from_pretrained(cfg.base_model)
        model.resize_token_embeddings(len(tokenizer))

    checkpoints: list[Path] = []
    lineage: list[str] = [cfg.base_model]
    for i, stage in enumerate(cfg.stages):
        examples = load_examples(stage.file)
        orders = _train_stage(model, tokenizer, examples, stage, cfg, generator)
        ckpt_dir = out_root / f"stage{i}_{stage.name}"
        lineage.append(stage.name)
        model.save_pretrained(ckpt_dir)
        tokenizer.save_pretrained(ckpt_dir)
        metadata = {
            "lineage": lineage.copy(),
            "stage": {
                "name": stage.name,
                "file": str(stage.file),
                "epochs": stage.epochs,
                "learning_rate": stage.learning_rate,
                "batch_size": stage.batch_size,
            },
            "seed": cfg.seed,
            "n_examples": len(examples),
            "example_order_first_epoch": orders[0] if orders else [],
        }
        with open(ckpt_dir / "run_metadata.json", "w", encoding="utf-8") as fp:
            json.dump(metadata, fp, indent=2, sort_keys=True)
        checkpoints.append(ckpt_dir)
        logger.info("saved checkpoint %s", ckpt_dir)
    return checkpoints


def _clean_decode(tokenizer, ids) -> str:
    """Decode, dropping pad/bos/eos but keeping the marker tokens verbatim."""
    skip = {tokenizer.pad_token_id, tokenizer.bos_token_id, tokenizer.eos_token_id}
    kept = [i for i in ids.tolist() if i not in skip]
    return tokenizer.decode(kept, skip_special_tokens=False).strip()


def generate(
    checkpoint: str | Path,
    eval_file: str | Path,
    out_file: str | Path,
    max_new_tokens: int = 256,
    num_beams: int = 1,
    batch_size: int = 16,
) -> int:
    """Generate one PredictionRecord per eval example; returns the record count."""
    checkpoint = Path(checkpoint)
    if not checkpoint.exists():
        raise FileNotFoundError(f"checkpoint {checkpoint} does not exist")
    tokenizer = PreTrainedTokenizerFast.from_pretrained(checkpoint)
    model = BartForConditionalGeneration.from_pretrained(checkpoint)
    return generate_with_model(
        model, tokenizer, eval_file, out_file,
        max_new_tokens=max_new_tokens, num_beams=num_beams, batch_size=batch_size,
    )


def generate_with_model(
    model,
    tokenizer,
    eval_file: str | Path,
    out_file: str | Path,
    max_new_tokens: int = 256,
    num_beams: int = 1,
    batch_size: int = 16,
) -> int:
    examples = load_examples(eval_file)
    model.eval()
    records: list[tuple[str, str]] = []
    with torch.no_grad():
        for start in range(0, len(examples), batch_size):
            batch = examples[start : start + batch_size]
            input_ids, attention = _encode_batch(
                tokenizer, [b.input_text for b in batch], 512
            )
            outputs = model.generate(
                input_ids=input_ids,
                attention_mask=attention,
                max_new_tokens=max_new_tokens,
                num_beams=num_beams,
                do_sample=False,
            )
            for ex, ids in zip(batch, outputs):
                records.append((ex.id, _clean_decode(tokenizer, ids)))
    from .data import write_predictions

    write_predictions(records, out_file)
    return len(records)
