"""Command-line surface: ingest, build, score, overlap, report.

Exit codes: 0 success, 2 usage error, 3 data error, 4 refusal to score a
partial prediction file.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from . import builders, corpus as corpus_mod, masking, overlap as overlap_mod, scoring
from .manifest import ExperimentManifest, ManifestError, dump_manifest, load_manifest
from .seeds import derive_seed

EXIT_DATA_ERROR = 3
EXIT_PARTIAL = 4

_MARKER_LITERALS = (
    builders.PASSAGE_PREFIX,
    builders.PASSAGE_SUFFIX,
    builders.QUESTION_PREFIX,
    builders.QUESTION_SUFFIX,
    builders.ANSWER_SUFFIX,
)


def _fail(message: str, code: int = EXIT_DATA_ERROR) -> None:
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def _read_corpus(path: str, split_label: str = "unsplit") -> corpus_mod.Corpus:
    try:
        with open(path, encoding="utf-8") as fp:
            return corpus_mod.read_corpus(fp, split_label=split_label)
    except (OSError, corpus_mod.CorpusError) as e:
        _fail(str(e))


def _write_corpus(c: corpus_mod.Corpus, path: Path) -> None:
    with open(path, "w", encoding="utf-8") as fp:
        corpus_mod.write_corpus(c, fp)


def strip_markers(text: str) -> str:
    """Remove decoration marker literals from a model output before scoring."""
    for marker in _MARKER_LITERALS:
        text = text.replace(marker, " ")
    return " ".join(text.split())


@click.group()
def main():
    """Dataset pipeline and metrics for closed-book QA knowledge probing."""


@main.command()
@click.option("--squad", "squad_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--split-dev-test", "do_split", is_flag=True, help="Also split into two halves.")
@click.option("--seed", default=0, show_default=True)
@click.option("--out-dev", type=click.Path(), default=None)
@click.option("--out-test", type=click.Path(), default=None)
def ingest(squad_path, out_path, do_split, seed, out_dev, out_test):
    """Parse a SQuAD JSON file into the canonical corpus JSONL."""
    rejects: list[corpus_mod.RejectedRecord] = []
    try:
        raw = Path(squad_path).read_bytes()
        c = corpus_mod.parse_squad(raw, rejects=rejects)
    except (OSError, corpus_mod.CorpusError) as e:
        _fail(str(e))
    _write_corpus(c, Path(out_path))
    click.echo(f"passages={len(c.passages)} qa={len(c.qa_pairs)} rejected={len(rejects)}")
    for rej in rejects:
        click.echo(f"rejected {rej.kind} {rej.id}: {rej.reason}", err=True)
    if do_split:
        if not (out_dev and out_test):
            raise click.UsageError("--split-dev-test requires --out-dev and --out-test")
        try:
            dev, test = corpus_mod.split_dev_test(c, seed=seed)
        except corpus_mod.CorpusError as e:
            _fail(str(e))
        _write_corpus(dev, Path(out_dev))
        _write_corpus(test, Path(out_test))
        click.echo(
            f"dev: passages={len(dev.passages)} qa={len(dev.qa_pairs)} | "
            f"test: passages={len(test.passages)} qa={len(test.qa_pairs)}"
        )


def _write_examples(examples, path: Path) -> None:
    with open(path, "w", encoding="utf-8") as fp:
        builders.write_examples(examples, fp)


def _write_golds(qa_pairs, path: Path) -> None:
    with open(path, "w", encoding="utf-8") as fp:
        for qa in qa_pairs:
            fp.write(
                json.dumps(
                    {
                        "id": qa.id,
                        "question": qa.question,
                        "answers": [a.text for a in qa.answers],
                        "passage_id": qa.passage_id,
                    },
                    ensure_ascii=False,
                    sort_keys=True,
                )
                + "\n"
            )


@main.command()
@click.option("--manifest", "manifest_path", required=True, type=click.Path(exists=True))
@click.option("--out-dir", "out_dir_override", type=click.Path(), default=None)
def build(manifest_path, out_dir_override):
    """Emit all dataset files described by a manifest."""
    try:
        m = load_manifest(manifest_path)
    except (ManifestError, OSError) as e:
        _fail(str(e))
    out_dir = Path(out_dir_override or m.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    full = _read_corpus(m.corpus_path)
    if m.subset is not None:
        try:
            subset = corpus_mod.extract_subset(
                full, m.subset.n_passages, seed=derive_seed(m.seed, "subset")
            )
        except corpus_mod.CorpusError as e:
            _fail(str(e))
        knowledge, train, dev, test = subset.full, subset.train, subset.dev, subset.test
    else:
        knowledge = train = full
        dev = test = None

    cfg = m.builders

    def maybe_decorate(examples):
        if not cfg.decorated:
            return examples
        return [builders.decorate_prefix_suffix(ex) for ex in examples]

    try:
        lm = builders.build_lm_finetune(
            knowledge,
            rate=cfg.rate,
            mean_span_len=cfg.mean_span_len,
            seed=derive_seed(m.seed, "mask"),
            epochs_variants=cfg.epochs_variants,
            mask_token=cfg.mask_token,
        )
        recite = builders.build_recite_eval(knowledge, mask_token=cfg.mask_token)
        qa_train = builders.build_qa_finetune(train, expand=True)
        bridge_train = builders.build_qa_bridge(
            train,
            answer_marker=cfg.answer_marker,
            max_target_tokens=cfg.max_target_tokens,
            expand=True,
        )
    except (builders.BuilderError, masking.MaskingError) as e:
        _fail(str(e))

    _write_examples(maybe_decorate(lm), out_dir / "lm_finetune.jsonl")
    _write_examples(maybe_decorate(list(recite.examples)), out_dir / "recite.jsonl")
    with open(out_dir / "recite_probes.jsonl", "w", encoding="utf-8") as fp:
        masking.write_masked_passages(recite.probes, fp)
    _write_examples(maybe_decorate(qa_train), out_dir / "qa_finetune.train.jsonl")
    _write_examples(maybe_decorate(bridge_train), out_dir / "qa_bridge.train.jsonl")
    _write_corpus(knowledge, out_dir / "corpus.subset.jsonl")
    _write_corpus(train, out_dir / "corpus.train.jsonl")

    counts = {
        "lm_finetune": len(lm),
        "recite": len(recite.examples),
        "recite_skipped": recite.skipped,
        "qa_finetune.train": len(qa_train),
        "qa_bridge.train": len(bridge_train),
    }
    for label, split in (("dev", dev), ("test", test)):
        if split is None:
            continue
        qa_eval = builders.build_qa_finetune(split, expand=False)
        _write_examples(maybe_decorate(qa_eval), out_dir / f"qa_eval.{label}.jsonl")
        _write_golds(split.qa_pairs, out_dir / f"golds.{label}.jsonl")
        _write_corpus(split, out_dir / f"corpus.{label}.jsonl")
        counts[f"qa_eval.{label}"] = len(qa_eval)

    with open(out_dir / "manifest.yaml", "w", encoding="utf-8") as fp:
        dump_manifest(m, fp)

    if m.subset is not None:
        click.echo(
            f"subset passages train/dev/test = "
            f"{len(train.passages)}/{len(dev.passages)}/{len(test.passages)}; "
            f"qa = {len(train.qa_pairs)}/{len(dev.qa_pairs)}/{len(test.qa_pairs)}"
        )
    click.echo(" ".join(f"{k}={v}" for k, v in sorted(counts.items())))


def _load_predictions(path: str) -> dict[str, str]:
    try:
        with open(path, encoding="utf-8") as fp:
            records = scoring.read_predictions(fp)
    except (OSError, scoring.ScoringError, json.JSONDecodeError) as e:
        _fail(str(e))
    return {r.example_id: r.output_text for r in records}


@main.command()
@click.option("--task", type=click.Choice(["recite", "qa"]), required=True)
@click.option("--predictions", "pred_path", required=True, type=click.Path(exists=True))
@click.option("--probes", "probes_path", type=click.Path(exists=True), default=None)
@click.option("--golds", "golds_path", type=click.Path(exists=True), default=None)
@click.option("--name", default="run", show_default=True, help="Row label used in reports.")
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--per-item", "per_item_path", type=click.Path(), default=None)
@click.option("--allow-partial", is_flag=True, help="Score only covered ids instead of failing.")
@click.option("--strip-markers", "do_strip", is_flag=True, help="Drop decoration markers from outputs first.")
def score(task, pred_path, probes_path, golds_path, name, out_path, per_item_path, allow_partial, do_strip):
    """Score predictions: reciting accuracy, or EM/F1 for QA outputs."""
    preds = _load_predictions(pred_path)
    if do_strip:
        preds = {k: strip_markers(v) for k, v in preds.items()}

    if task == "recite":
        if not probes_path:
            raise click.UsageError("--task recite requires --probes")
        with open(probes_path, encoding="utf-8") as fp:
            probes = masking.read_masked_passages(fp)
        missing = [mp.passage_id for mp in probes if f"{mp.passage_id}::recite" not in preds]
        if missing and not allow_partial:
            click.echo(f"missing predictions for: {missing}", err=True)
            sys.exit(EXIT_PARTIAL)
        per_probe = {}
        for mp in probes:
            output = preds.get(f"{mp.passage_id}::recite")
            if output is None:
                continue
            per_probe[mp.passage_id] = scoring.score_reciting(output, mp)
        try:
            agg = scoring.aggregate_reciting(per_probe)
        except scoring.ScoringError as e:
            _fail(str(e))
        report = {
            "name": name,
            "task": "recite",
            "reciting_accuracy": agg.accuracy,
            "correct_spans": agg.correct_spans,
            "total_spans": agg.total_spans,
            "probes": len(per_probe),
        }
        per_item_rows = [("passage_id", "span_index", "correct")] + [
            (pid, str(i), str(ok)) for pid, i, ok in agg.per_span
        ]
        click.echo(f"RA {100.0 * agg.accuracy:.1f} ({agg.correct_spans}/{agg.total_spans})")
    else:
        if not golds_path:
            raise click.UsageError("--task qa requires --golds")
        golds: dict[str, list[str]] = {}
        with open(golds_path, encoding="utf-8") as fp:
            for line in fp:
                if line.strip():
                    rec = json.loads(line)
                    golds[rec["id"]] = rec["answers"]
        missing = sorted(set(golds) - set(preds))
        if missing:
            if not allow_partial:
                click.echo(f"missing predictions for: {missing}", err=True)
                sys.exit(EXIT_PARTIAL)
            golds = {k: v for k, v in golds.items() if k in preds}
        try:
            qa_score = scoring.score_qa(preds, golds)
        except scoring.ScoringError as e:
            _fail(str(e))
        report = {
            "name": name,
            "task": "qa",
            "em": qa_score.em,
            "f1": qa_score.f1,
            "n": len(qa_score.per_item),
        }
        per_item_rows = [("qa_id", "em", "f1")] + [
            (qa_id, str(em), f"{f1:.6f}") for qa_id, em, f1 in qa_score.per_item
        ]
        click.echo(f"EM {100.0 * qa_score.em:.1f} F1 {100.0 * qa_score.f1:.1f}")

    with open(out_path, "w", encoding="utf-8") as fp:
        json.dump(report, fp, indent=2, sort_keys=True)
        fp.write("\n")
    if per_item_path:
        import csv

        with open(per_item_path, "w", encoding="utf-8", newline="") as fp:
            csv.writer(fp).writerows(per_item_rows)


@main.command("overlap")
@click.option("--test", "test_path", required=True, type=click.Path(exists=True))
@click.option("--train", "train_path", required=True, type=click.Path(exists=True))
@click.option("--predictions", "pred_path", type=click.Path(exists=True), default=None)
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--candidates-sheet", type=click.Path(), default=None)
@click.option("--sample-n", default=1000, show_default=True)
@click.option("--seed", default=0, show_default=True)
def overlap_cmd(test_path, train_path, pred_path, out_path, candidates_sheet, sample_n, seed):
    """Answer overlap, optional output contingency, and annotation sheets."""
    test_c = _read_corpus(test_path)
    train_c = _read_corpus(train_path)
    if not test_c.qa_pairs:
        _fail("test corpus has no QA pairs")
    train_answers = [a.text for qa in train_c.qa_pairs for a in qa.answers]
    test_golds = [[a.text for a in qa.answers] for qa in test_c.qa_pairs]
    try:
        frac, flags = overlap_mod.answer_overlap(test_golds, train_answers)
    except scoring.ScoringError as e:
        _fail(str(e))
    report: dict = {"answer_overlap": frac, "n_test": len(flags)}
    click.echo(f"answer overlap {100.0 * frac:.1f}%")

    if pred_path:
        preds = _load_predictions(pred_path)
        missing = [qa.id for qa in test_c.qa_pairs if qa.id not in preds]
        if missing:
            _fail(f"predictions missing for test qa ids: {missing[:10]}")
        outputs, golds_per_item, em_flags = [], [], []
        for qa in test_c.qa_pairs:
            candidate = scoring.extract_answer_candidate(preds[qa.id])
            golds = [a.text for a in qa.answers]
            outputs.append(candidate)
            golds_per_item.append(golds)
            em_flags.append(scoring.exact_match(candidate, golds))
        rep = overlap_mod.output_overlap_contingency(outputs, golds_per_item, train_answers, em_flags)
        report["contingency"] = rep.contingency
        report["o_test_overlap"] = rep.o_test_overlap
        report["g_test_overlap"] = rep.g_test_overlap
        click.echo(overlap_mod.render_contingency(rep))

    if candidates_sheet:
        try:
            with open(candidates_sheet, "w", encoding="utf-8", newline="") as fp:
                rows = overlap_mod.question_overlap_candidates(
                    list(test_c.qa_pairs),
                    list(train_c.qa_pairs),
                    fp,
                    sample_n=min(sample_n, len(test_c.qa_pairs)),
                    seed=derive_seed(seed, "question_overlap"),
                )
        except scoring.ScoringError as e:
            _fail(str(e))
        click.echo(f"candidate sheet rows={rows}")

    with open(out_path, "w", encoding="utf-8") as fp:
        json.dump(report, fp, indent=2, sort_keys=True)
        fp.write("\n")


@main.command()
@click.option("--scores", "score_paths", multiple=True, required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
def report(score_paths, out_path):
    """Render score reports into one markdown table with RA/EM/F1 columns."""
    rows: dict[str, dict] = {}
    for path in score_paths:
        with open(path, encoding="utf-8") as fp:
            rec = json.load(fp)
        row = rows.setdefault(rec.get("name", path), {})
        if rec.get("task") == "recite":
            row["ra"] = rec["reciting_accuracy"]
        else:
            row["em"] = rec.get("em")
            row["f1"] = rec.get("f1")

    def fmt(value) -> str:
        return "-" if value is None else f"{100.0 * value:.1f}"

    lines = ["| Model / Dataset | RA(%) | EM(%) | F1(%) |", "| --- | --- | --- | --- |"]
    for name in sorted(rows):
        row = rows[name]
        lines.append(
            f"| {name} | {fmt(row.get('ra'))} | {fmt(row.get('em'))} | {fmt(row.get('f1'))} |"
        )
    text = "\n".join(lines) + "\n"
    with open(out_path, "w", encoding="utf-8") as fp:
        fp.write(text)
    click.echo(text)


if __name__ == "__main__":
    main()
