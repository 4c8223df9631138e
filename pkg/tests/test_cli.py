import json
import os

import numpy as np
import pytest

from seqseg.cli import main
from seqseg.dataio import load_dataset, read_pgm


def run_cli(*argv) -> int:
    return main(list(argv))


class TestBasics:
    def test_help_exits_zero(self, capsys):
        assert run_cli("--help") == 0
        assert "seqseg" in capsys.readouterr().out

    def test_unknown_subcommand_exits_one(self, capsys):
        assert run_cli("frobnicate") == 1

    def test_unknown_flag_exits_one(self, capsys):
        assert run_cli("synth", "gen", "--bogus", "1") == 1
        assert "error" in capsys.readouterr().err

    def test_missing_required_seed_exits_one(self, tmp_path):
        assert run_cli("synth", "gen", "--per-category", "1", "--out", str(tmp_path)) == 1

    def test_dump_flags_is_machine_readable(self, capsys):
        assert run_cli("--dump-flags") == 0
        schema = json.loads(capsys.readouterr().out)
        commands = {row["command"] for row in schema}
        assert {"seqseg synth", "seqseg classifier", "seqseg crf", "seqseg combine",
                "seqseg metrics", "seqseg policy", "seqseg experiment"} <= {c.rsplit(" ", 1)[0] if c.count(" ") > 1 else c for c in commands} | commands
        flags = {row["flag"] for row in schema}
        assert "--seed" in flags

    def test_env_override_fills_required_flag(self, tmp_path, capsys):
        env_key = "SEQSEG_SEED"
        os.environ[env_key] = "7"
        try:
            code = run_cli(
                "synth", "gen", "--per-category", "1", "--res", "32x32",
                "--out", str(tmp_path / "d"), "--sigma", "0.35",
            )
        finally:
            del os.environ[env_key]
        assert code == 0
        ds = load_dataset(tmp_path / "d" / "manifest.json")
        assert len(ds.scenes) == 9


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    return tmp_path_factory.mktemp("cli")


class TestPipeline:
    def test_full_pipeline(self, workdir, capsys):
        corpus = workdir / "corpus"
        # 1. synthesize a tiny two-category corpus
        templates = workdir / "templates.json"
        assert run_cli("synth", "templates", "--out", str(templates)) == 0
        spec = json.loads(templates.read_text())
        spec = [t for t in spec if t["category"] in ("bedroom", "livingroom")]
        templates.write_text(json.dumps(spec))
        assert (
            run_cli(
                "synth", "gen", "--templates", str(templates), "--per-category", "12",
                "--res", "32x32", "--seed", "3", "--out", str(corpus), "--train-frac", "0.5",
            )
            == 0
        )
        manifest = corpus / "manifest.json"

        # 2. single-class classifier training
        model_path = workdir / "bed_unary.json"
        assert (
            run_cli(
                "classifier", "train", "--dataset", str(manifest), "--class", "bed",
                "--rounds", "12", "--seed", "0", "--out", str(model_path),
            )
            == 0
        )
        assert json.loads(model_path.read_text())["rounds"]

        # 3. full model bundle + MAP masks
        bundle = workdir / "models.json"
        assert (
            run_cli(
                "crf", "fit", "--dataset", str(manifest), "--all", "--rounds", "12",
                "--seed", "0", "--out", str(bundle),
            )
            == 0
        )
        masks_dir = workdir / "masks"
        assert (
            run_cli(
                "crf", "infer", "--dataset", str(manifest), "--models", str(bundle),
                "--split", "test", "--out", str(masks_dir),
            )
            == 0
        )
        ds = load_dataset(manifest)
        scene = ds.split_scenes("test")[0]
        sample_mask = masks_dir / f"{scene.scene_id}__bed.pgm"
        assert sample_mask.exists()
        assert set(np.unique(read_pgm(sample_mask))) <= {0, 65535}

        # 4. combine masks and score the canvas
        canvas_path = workdir / "canvas.pgm"
        assert (
            run_cli(
                "combine", "--dataset", str(manifest), "--masks-dir", str(masks_dir),
                "--scene", scene.scene_id, "--order", "bed,pillow", "--out", str(canvas_path),
            )
            == 0
        )
        gt_path = corpus / "maps" / f"{scene.scene_id}_labels.pgm"
        assert (
            run_cli(
                "metrics", "fwji", "--dataset", str(manifest), "--canvas", str(canvas_path),
                "--gt", str(gt_path), "--taken", "bed,pillow",
            )
            == 0
        )
        out = capsys.readouterr().out
        assert "total" in out

        # 5. LSPI policy training + weight dump
        policy_path = workdir / "policy.json"
        assert (
            run_cli(
                "policy", "train", "--dataset", str(manifest), "--models", str(bundle),
                "--category", "bedroom", "--actions", "3", "--iterations", "2",
                "--seed", "1", "--out", str(policy_path),
            )
            == 0
        )
        reshaped = workdir / "weights.csv"
        assert run_cli("policy", "dump", "--policy", str(policy_path), "--reshape", "--out", str(reshaped)) == 0
        grid = [line.split(",") for line in reshaped.read_text().strip().splitlines()]
        assert len(grid) == 3 and len(grid[0]) == 1 + 2 * 3

        # 6. the experiment run emits curves for every requested policy
        exp_dir = workdir / "exp"
        config = workdir / "exp.json"
        config.write_text(json.dumps({
            "seed": 4, "n_actions": 3, "optimal_k": 3, "policy_seeds": 2,
            "unary_rounds": 12, "presence_rounds": 8, "lspi": {"iterations": 2},
        }))
        assert (
            run_cli(
                "experiment", "run", "--dataset", str(manifest), "--config", str(config),
                "--out", str(exp_dir), "--deterministic",
            )
            == 0
        )
        curves = (exp_dir / "curves.csv").read_text().splitlines()
        assert curves[0] == "scene_id,category,policy,seed,k,reward"
        kinds = {line.split(",")[2] for line in curves[1:]}
        assert kinds == {"lspi", "fixed", "random", "oracle", "optimal"}
