"""CLI subcommands end to end, exit codes, and flag plumbing."""

import csv
import io

import numpy as np
import pytest

from hmgl.cli import main
from hmgl.storage import read_checkpoint
from hmgl.trainer import init_params


def run_cli(argv, capsys):
    code = main(argv)
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def synth_args(out_dir, groups=4, seed=3, extra=()):
    return [
        "synth", "--out", str(out_dir), "--groups", str(groups), "--views", "2",
        "--seed", str(seed), "--members-min", "3", "--members-max", "5",
        "--dim", "8", *extra,
    ]


@pytest.fixture()
def trained(tmp_path, capsys):
    data_dir = tmp_path / "data"
    ckpt = tmp_path / "model.hmgl"
    assert main(synth_args(data_dir)) == 0
    assert main([
        "train", "--data", str(data_dir), "--out", str(ckpt),
        "--epochs", "2", "--seed", "3",
    ]) == 0
    capsys.readouterr()
    return data_dir, ckpt


class TestSynth:
    def test_writes_manifest_and_embeddings(self, tmp_path, capsys):
        code, _, err = run_cli(synth_args(tmp_path / "d"), capsys)
        assert code == 0
        assert (tmp_path / "d" / "manifest.jsonl").exists()
        assert "wrote 8 samples" in err

    def test_deterministic_bytes(self, tmp_path, capsys):
        run_cli(synth_args(tmp_path / "a"), capsys)
        run_cli(synth_args(tmp_path / "b"), capsys)
        a = (tmp_path / "a" / "manifest.jsonl").read_bytes()
        b = (tmp_path / "b" / "manifest.jsonl").read_bytes()
        assert a == b


class TestTrain:
    def test_zero_epochs_checkpoint_equals_init(self, tmp_path, capsys):
        data_dir = tmp_path / "data"
        ckpt = tmp_path / "model.hmgl"
        run_cli(synth_args(data_dir), capsys)
        code, out, _ = run_cli(
            ["train", "--data", str(data_dir), "--out", str(ckpt),
             "--epochs", "0", "--seed", "3"],
            capsys,
        )
        assert code == 0
        params, config = read_checkpoint(ckpt)
        init = init_params(config, config.seed)
        for (_, a), (_, b) in zip(params.tensors(), init.tensors()):
            np.testing.assert_array_equal(a, b.astype(np.float32).astype(np.float64))
        header = out.splitlines()[0]
        assert header == "epoch,id_loss,triplet_loss,recon_loss,total_loss"

    def test_loss_csv_rows(self, trained, tmp_path, capsys):
        data_dir, _ = trained
        code, out, _ = run_cli(
            ["train", "--data", str(data_dir), "--out", str(tmp_path / "m2.hmgl"),
             "--epochs", "2", "--seed", "3"],
            capsys,
        )
        rows = list(csv.DictReader(io.StringIO(out)))
        assert code == 0 and len(rows) == 2
        assert rows[0]["epoch"] == "0"
        float(rows[0]["total_loss"])


class TestMatch:
    def test_ranked_csv_schema(self, trained, capsys):
        data_dir, ckpt = trained
        code, out, _ = run_cli(
            ["match", "--data", str(data_dir), "--ckpt", str(ckpt),
             "--query-view", "0", "--gallery-view", "1"],
            capsys,
        )
        assert code == 0
        rows = list(csv.DictReader(io.StringIO(out)))
        assert set(rows[0]) == {
            "query_id", "rank", "gallery_id", "p", "p_nod", "p_sub", "p_glo", "sub_skipped"
        }
        per_query = {}
        for r in rows:
            per_query.setdefault(r["query_id"], []).append(int(r["rank"]))
        for ranks in per_query.values():
            assert ranks == list(range(1, len(ranks) + 1))

    def test_alpha_only_scales_node_score(self, trained, capsys):
        data_dir, ckpt = trained
        code, out, _ = run_cli(
            ["match", "--data", str(data_dir), "--ckpt", str(ckpt),
             "--query-view", "0", "--gallery-view", "1",
             "--beta", "0", "--gamma", "0"],
            capsys,
        )
        assert code == 0
        for row in csv.DictReader(io.StringIO(out)):
            # both columns are rounded to 6 decimals independently
            assert float(row["p"]) == pytest.approx(0.6 * float(row["p_nod"]), abs=1e-6)

    def test_auto_clusters_accepted(self, trained, capsys):
        data_dir, ckpt = trained
        code, _, _ = run_cli(
            ["match", "--data", str(data_dir), "--ckpt", str(ckpt),
             "--query-view", "0", "--gallery-view", "1", "--clusters", "auto"],
            capsys,
        )
        assert code == 0

    def test_threads_do_not_change_output(self, trained, capsys):
        data_dir, ckpt = trained
        base_args = ["match", "--data", str(data_dir), "--ckpt", str(ckpt),
                     "--query-view", "0", "--gallery-view", "1"]
        _, single, _ = run_cli(base_args, capsys)
        _, multi, _ = run_cli(base_args + ["--threads", "4"], capsys)
        assert single == multi


class TestEval:
    def test_metrics_csv(self, trained, tmp_path, capsys):
        data_dir, ckpt = trained
        _, match_out, _ = run_cli(
            ["match", "--data", str(data_dir), "--ckpt", str(ckpt),
             "--query-view", "0", "--gallery-view", "1"],
            capsys,
        )
        rankings = tmp_path / "rankings.csv"
        rankings.write_text(match_out)
        code, out, _ = run_cli(
            ["eval", "--rankings", str(rankings), "--data", str(data_dir)], capsys
        )
        assert code == 0
        lines = out.splitlines()
        assert lines[0] == "config,rank1,rank5,rank10,rank20,map"
        row = lines[1].split(",")
        assert row[0] == "default"
        for value in row[1:]:
            assert 0.0 <= float(value) <= 1.0


class TestAblate:
    def test_scales_suite(self, trained, capsys):
        data_dir, ckpt = trained
        code, out, _ = run_cli(
            ["ablate", "--data", str(data_dir), "--ckpt", str(ckpt),
             "--suite", "scales"],
            capsys,
        )
        assert code == 0
        rows = list(csv.DictReader(io.StringIO(out)))
        names = [r["config"] for r in rows]
        assert "full" in names and "glo_only" in names

    def test_losses_suite_runs(self, trained, capsys):
        data_dir, ckpt = trained
        code, out, _ = run_cli(
            ["ablate", "--data", str(data_dir), "--ckpt", str(ckpt),
             "--suite", "losses"],
            capsys,
        )
        assert code == 0
        names = [r["config"] for r in csv.DictReader(io.StringIO(out))]
        assert names[0] == "all_on"
        assert {"no_id", "no_trip", "no_re"} <= set(names)


class TestGradcheck:
    def test_passes_at_defaults(self, capsys):
        code, out, _ = run_cli(["gradcheck", "--seed", "7", "--dim", "4"], capsys)
        assert code == 0
        assert "classifier_weight" in out


class TestErrors:
    def test_unknown_subcommand_exits_2(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["frobnicate"])
        assert exc.value.code == 2

    def test_unknown_flag_exits_2(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["synth", "--out", "x", "--groups", "2", "--frob"])
        assert exc.value.code == 2

    def test_runtime_failure_exits_1(self, tmp_path, capsys):
        code, _, err = run_cli(
            ["train", "--data", str(tmp_path / "missing"), "--out", str(tmp_path / "m.hmgl")],
            capsys,
        )
        assert code == 1
        assert "error:" in err
