import json
from pathlib import Path

import pytest
from click.testing import CliRunner

from model_runner.cli import main as cli_main
from model_runner.config import ModelConfig, RunConfig, StageConfig
from model_runner.data import SchemaError
from model_runner import runner

TINY = ModelConfig(d_model=32, layers=1, heads=2, ffn_dim=64)


def tiny_config(train_file, out_dir, seed=0, stage_names=("lm", "qa")):
    stages = tuple(
        StageConfig(name=n, file=str(train_file), epochs=1, batch_size=2)
        for n in stage_names
    )
    return RunConfig(
        base_model="scratch",
        stages=stages,
        output_dir=str(out_dir),
        seed=seed,
        model=TINY,
    )


def read_metadata(ckpt: Path) -> dict:
    return json.loads((ckpt / "run_metadata.json").read_text(encoding="utf-8"))


class TestTrain:
    def test_stage_checkpoints_and_lineage(self, tmp_path, train_file):
        cfg = tiny_config(train_file, tmp_path / "run")
        checkpoints = runner.train(cfg)
        assert [c.name for c in checkpoints] == ["stage0_lm", "stage1_qa"]
        meta0, meta1 = read_metadata(checkpoints[0]), read_metadata(checkpoints[1])
        assert meta0["lineage"] == ["scratch", "lm"]
        assert meta1["lineage"] == ["scratch", "lm", "qa"]
        assert meta0["stage"]["epochs"] == 1
        assert meta0["seed"] == 0
        # the logged epoch order is a permutation of the stage's example ids
        assert sorted(meta0["example_order_first_epoch"]) == ["p#0::lm0", "p#1::lm0", "q1"]
        # checkpoints are loadable for generation
        assert (checkpoints[0] / "tokenizer.json").exists()

    def test_same_seed_reproduces_example_order(self, tmp_path, train_file):
        orders = []
        for run in ("a", "b"):
            cfg = tiny_config(train_file, tmp_path / run, seed=7)
            ckpts = runner.train(cfg)
            orders.append([read_metadata(c)["example_order_first_epoch"] for c in ckpts])
        assert orders[0] == orders[1]

    def test_invalid_stage_file_aborts_before_any_training(self, tmp_path, train_file):
        bad = tmp_path / "bad.jsonl"
        bad.write_text('{"id": "x", "task": "nope", "input": "a", "target": "b"}\n')
        cfg = RunConfig(
            base_model="scratch",
            stages=(
                StageConfig(name="lm", file=str(train_file), epochs=1),
                StageConfig(name="broken", file=str(bad), epochs=1),
            ),
            output_dir=str(tmp_path / "run"),
            model=TINY,
        )
        with pytest.raises(SchemaError):
            runner.train(cfg)
        # no checkpoint was written: validation happens before stage 0 trains
        assert not (tmp_path / "run" / "stage0_lm").exists()

    def test_resume_from_checkpoint_extends_lineage(self, tmp_path, train_file):
        first = tiny_config(train_file, tmp_path / "first", stage_names=("lm",))
        ckpt = runner.train(first)[-1]
        second = RunConfig(
            base_model=str(ckpt),
            stages=(StageConfig(name="qa", file=str(train_file), epochs=1),),
            output_dir=str(tmp_path / "second"),
            model=TINY,
        )
        ckpt2 = runner.train(second)[-1]
        assert read_metadata(ckpt2)["lineage"] == [str(ckpt), "qa"]


class TestCli:
    def test_train_then_generate(self, tmp_path, train_file):
        import yaml

        cfg = tiny_config(train_file, tmp_path / "run", stage_names=("lm",))
        cfg_path = tmp_path / "run.yaml"
        cfg_path.write_text(yaml.safe_dump(cfg.to_dict()), encoding="utf-8")
        r = CliRunner()
        res = r.invoke(cli_main, ["train", "--config", str(cfg_path)])
        assert res.exit_code == 0, res.output
        ckpt = res.output.strip().splitlines()[-1]

        preds = tmp_path / "preds.jsonl"
        res = r.invoke(
            cli_main,
            ["generate", "--checkpoint", ckpt, "--eval-file", str(train_file),
             "--out", str(preds), "--max-new-tokens", "8"],
        )
        assert res.exit_code == 0, res.output
        assert "predictions=3" in res.output
        ids = [json.loads(l)["example_id"] for l in preds.read_text().splitlines()]
        assert ids == ["p#0::lm0", "p#1::lm0", "q1"]

    def test_train_bad_config_exits_3(self, tmp_path):
        cfg_path = tmp_path / "run.yaml"
        cfg_path.write_text("output_dir: x\n", encoding="utf-8")
        res = CliRunner().invoke(cli_main, ["train", "--config", str(cfg_path)])
        assert res.exit_code == 3
        assert "error:" in res.output
