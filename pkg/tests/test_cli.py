"""End-to-end command-line behavior, driven through main(argv)."""

import json
import os

import numpy as np
import pytest

from ttgad.cli import main
from ttgad.graphstore import load_graph


def read_json(path):
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def write_config(path, **data):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(data, fh)
    return str(path)


SMALL = dict(p=6, hidden_dim=6, attn_dim=6, num_layers=2, lr=0.01,
             dropout_rate=0.0, source_epochs=3, ttt_max_epochs=3,
             neg_samples_k=2)

GEN_ARGS = ["--nodes", "40", "--dim", "4", "--rate", "0.2",
            "--homophily", "0.8", "--mean-degree", "4"]


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """One generated source/target pair and a trained checkpoint."""
    root = tmp_path_factory.mktemp("cli")
    source = root / "source"
    target = root / "target"
    assert main(["gen", "--out", str(source), "--seed", "7", "--quiet",
                 *GEN_ARGS]) == 0
    assert main(["gen", "--out", str(target), "--seed", "8", "--quiet",
                 *GEN_ARGS]) == 0
    cfg = write_config(root / "train.json", **SMALL,
                       source_graph=str(source))
    run = root / "run"
    assert main(["train", "--config", cfg, "--out", str(run),
                 "--quiet"]) == 0
    return {"root": root, "source": source, "target": target,
            "config": cfg, "run": run,
            "checkpoint": run / "checkpoint.bin"}


class TestGen:
    def test_writes_bundle_and_prints_stats(self, tmp_path, capsys):
        out = tmp_path / "g"
        assert main(["gen", "--out", str(out), "--seed", "1", *GEN_ARGS]) == 0
        names = sorted(p.name for p in out.iterdir())
        assert names == ["edges.tsv", "features.bin", "labels.tsv", "meta.json"]
        stats = json.loads(capsys.readouterr().out)
        assert stats["num_nodes"] == 40
        graph = load_graph(out)
        assert graph.labels.sum() > 0

    def test_same_seed_same_bytes(self, tmp_path):
        dirs = [tmp_path / "a", tmp_path / "b", tmp_path / "c"]
        for d, seed in zip(dirs, ["5", "5", "6"]):
            assert main(["gen", "--out", str(d), "--seed", seed, "--quiet",
                         *GEN_ARGS]) == 0
        for name in ("meta.json", "edges.tsv", "features.bin", "labels.tsv"):
            a = (dirs[0] / name).read_bytes()
            b = (dirs[1] / name).read_bytes()
            assert a == b, name
        assert (dirs[0] / "edges.tsv").read_bytes() \
            != (dirs[2] / "edges.tsv").read_bytes()

    @pytest.mark.parametrize("extra", [
        ["--homophily", "1.5"],
        ["--rate", "-0.1"],
        ["--nodes", "0"],
        ["--mean-degree", "0"],
    ])
    def test_bad_values_exit_1(self, tmp_path, extra, capsys):
        args = ["gen", "--out", str(tmp_path / "x"), "--nodes", "20"]
        args += extra
        assert main(args) == 1
        assert "error" in capsys.readouterr().err

    def test_missing_out_exits_1(self, capsys):
        assert main(["gen", "--nodes", "20"]) == 1
        assert "requires --out" in capsys.readouterr().err


class TestTrain:
    def test_artifacts_written(self, workspace):
        assert workspace["checkpoint"].exists()
        log = read_json(workspace["run"] / "train_log.json")
        assert [e["epoch"] for e in log["epochs"]] == [1, 2, 3]
        assert all("auroc" in e and "loss" in e for e in log["epochs"])

    def test_repeat_run_identical_checkpoint(self, workspace, tmp_path):
        again = tmp_path / "again"
        assert main(["train", "--config", workspace["config"],
                     "--out", str(again), "--quiet"]) == 0
        assert (again / "checkpoint.bin").read_bytes() \
            == workspace["checkpoint"].read_bytes()

    def test_seed_flag_changes_result(self, workspace, tmp_path):
        other = tmp_path / "other"
        assert main(["train", "--config", workspace["config"],
                     "--out", str(other), "--seed", "99", "--quiet"]) == 0
        assert (other / "checkpoint.bin").read_bytes() \
            != workspace["checkpoint"].read_bytes()

    def test_missing_source_graph_key(self, tmp_path, capsys):
        cfg = write_config(tmp_path / "c.json", **SMALL)
        assert main(["train", "--config", cfg, "--out",
                     str(tmp_path / "o")]) == 1
        assert "source_graph" in capsys.readouterr().err

    def test_unknown_config_key_exits_1(self, workspace, tmp_path, capsys):
        cfg = write_config(tmp_path / "c.json", **SMALL, momentum=0.9,
                           source_graph=str(workspace["source"]))
        assert main(["train", "--config", cfg, "--out",
                     str(tmp_path / "o")]) == 1
        assert "unknown config key 'momentum'" in capsys.readouterr().err

    def test_invalid_json_config_exits_1(self, tmp_path, capsys):
        bad = tmp_path / "bad.json"
        bad.write_text("{not json")
        assert main(["train", "--config", str(bad), "--out",
                     str(tmp_path / "o")]) == 1
        assert "not valid JSON" in capsys.readouterr().err


class TestAdapt:
    def test_writes_trace_and_checkpoint(self, workspace, tmp_path):
        out = tmp_path / "adapted"
        assert main(["adapt", "--checkpoint", str(workspace["checkpoint"]),
                     "--graph", str(workspace["target"]),
                     "--out", str(out), "--quiet"]) == 0
        trace = read_json(out / "adapt_trace.json")
        assert len(trace["epochs"]) <= 3
        assert trace["stop_reason"] in ("max_epochs", "patience")
        assert (out / "adapted.bin").exists()
        # labels on disk are ignored unless explicitly requested
        assert trace["initial_margin"] is None

    def test_eval_labels_flag_records_margins(self, workspace, tmp_path):
        out = tmp_path / "adapted"
        assert main(["adapt", "--checkpoint", str(workspace["checkpoint"]),
                     "--graph", str(workspace["target"]),
                     "--out", str(out), "--eval-labels", "--quiet"]) == 0
        trace = read_json(out / "adapt_trace.json")
        assert trace["initial_margin"] is not None
        assert all("margin" in e for e in trace["epochs"])

    def test_zero_epochs_flag(self, workspace, tmp_path):
        out = tmp_path / "frozen"
        assert main(["adapt", "--checkpoint", str(workspace["checkpoint"]),
                     "--graph", str(workspace["target"]),
                     "--ttt-max-epochs", "0",
                     "--out", str(out), "--quiet"]) == 0
        trace = read_json(out / "adapt_trace.json")
        assert trace["epochs"] == [] and trace["stop_reason"] == "no_epochs"

    def test_structural_conflict_with_checkpoint(self, workspace, tmp_path,
                                                 capsys):
        cfg = write_config(tmp_path / "c.json", p=12)
        assert main(["adapt", "--checkpoint", str(workspace["checkpoint"]),
                     "--graph", str(workspace["target"]),
                     "--config", cfg, "--out", str(tmp_path / "o")]) == 1
        assert "conflicts with the checkpoint" in capsys.readouterr().err

    def test_ttt_init_flag_flows_through(self, workspace, tmp_path):
        out = tmp_path / "src-init"
        assert main(["adapt", "--checkpoint", str(workspace["checkpoint"]),
                     "--graph", str(workspace["target"]),
                     "--ttt-init", "source",
                     "--out", str(out), "--quiet"]) == 0
        assert read_json(out / "adapt_trace.json")["ttt_init"] == "source"

    def test_missing_graph_exits_1(self, workspace, tmp_path, capsys):
        assert main(["adapt", "--checkpoint", str(workspace["checkpoint"]),
                     "--out", str(tmp_path / "o")]) == 1
        assert "target graph is required" in capsys.readouterr().err

    def test_missing_checkpoint_exits_2(self, workspace, tmp_path):
        assert main(["adapt", "--checkpoint", str(tmp_path / "nope.bin"),
                     "--graph", str(workspace["target"]),
                     "--out", str(tmp_path / "o")]) == 2


class TestEval:
    def test_stdout_report(self, workspace, capsys):
        assert main(["eval", "--checkpoint", str(workspace["checkpoint"]),
                     "--graph", str(workspace["target"])]) == 0
        report = json.loads(capsys.readouterr().out)
        assert 0.0 <= report["auroc"] <= 1.0
        assert 0.0 <= report["auprc"] <= 1.0
        assert report["scoring_mode"] == "affinity"

    def test_predictor_mode(self, workspace, capsys):
        assert main(["eval", "--checkpoint", str(workspace["checkpoint"]),
                     "--graph", str(workspace["target"]),
                     "--mode", "predictor"]) == 0
        assert json.loads(capsys.readouterr().out)["scoring_mode"] == "predictor"

    def test_report_file_when_out_given(self, workspace, tmp_path):
        out = tmp_path / "report"
        assert main(["eval", "--checkpoint", str(workspace["checkpoint"]),
                     "--graph", str(workspace["target"]),
                     "--out", str(out), "--quiet"]) == 0
        assert "auroc" in read_json(out / "metrics.json")

    def test_dump_ranking_tsv(self, workspace, tmp_path):
        dump = tmp_path / "ranking.tsv"
        assert main(["eval", "--checkpoint", str(workspace["checkpoint"]),
                     "--graph", str(workspace["target"]),
                     "--dump-ranking", str(dump), "--quiet"]) == 0
        lines = dump.read_text().splitlines()
        graph = load_graph(workspace["target"])
        assert len(lines) == graph.num_nodes
        nodes, scores = [], []
        for line in lines:
            node, score = line.split("\t")
            nodes.append(int(node))
            scores.append(float(score))
        assert sorted(nodes) == list(range(graph.num_nodes))
        assert scores == sorted(scores, reverse=True)

    def test_attention_mode_guard_exits_2(self, workspace, capsys):
        assert main(["eval", "--checkpoint", str(workspace["checkpoint"]),
                     "--graph", str(workspace["target"]),
                     "--attention", "plain"]) == 2
        assert "plain was requested" in capsys.readouterr().err

    def test_unlabeled_graph_exits_2(self, workspace, tmp_path, capsys):
        from ttgad.graphstore import save_graph
        bare = tmp_path / "bare"
        save_graph(load_graph(workspace["target"]).without_labels(), bare)
        assert main(["eval", "--checkpoint", str(workspace["checkpoint"]),
                     "--graph", str(bare)]) == 2
        assert "labels required for eval" in capsys.readouterr().err


class TestExperimentCommands:
    def test_margin_report(self, tmp_path):
        out = tmp_path / "m"
        assert main(["exp-margin", "--seeds", "1", "--nodes", "60",
                     "--steps", "2", "--out", str(out), "--quiet"]) == 0
        report = read_json(out / "margin_report.json")
        assert report["seeds"] == 1 and report["steps"] == 2
        assert len(report["per_seed"]) == 1
        assert 0.0 <= report["median_fraction_increasing"] <= 1.0

    def test_homophily_needs_exactly_one_source(self, tmp_path, capsys):
        assert main(["exp-homophily", "--out", str(tmp_path / "h")]) == 1
        assert "exactly one of" in capsys.readouterr().err

    def test_homophily_sweep_with_checkpoint(self, workspace, tmp_path):
        out = tmp_path / "h"
        assert main(["exp-homophily", "--checkpoint",
                     str(workspace["checkpoint"]), "--levels", "0.5",
                     "--seeds", "1", "--out", str(out), "--quiet"]) == 0
        report = read_json(out / "homophily_report.json")
        assert len(report["levels"]) == 1
        row = report["levels"][0]
        assert row["requested_homophily"] == 0.5
        assert abs(row["realized_homophily"][0] - 0.5) <= 0.03

    def test_bad_levels_exit_1(self, workspace, capsys):
        assert main(["exp-homophily", "--checkpoint",
                     str(workspace["checkpoint"]), "--levels", "0.5,oops"]) == 1
        assert "invalid --levels" in capsys.readouterr().err


class TestGradcheckCommand:
    def test_passes_and_prints_errors(self, capsys):
        assert main(["gradcheck"]) == 0
        out = capsys.readouterr().out
        assert "train loss max relative error:" in out
        assert "ttt loss max relative error:" in out
        assert out.strip().endswith("PASS")


class TestExitCodes:
    def test_unknown_subcommand_exits_1(self, capsys):
        assert main(["frobnicate"]) == 1

    def test_missing_required_flag_exits_1(self, capsys):
        assert main(["adapt"]) == 1

    def test_missing_graph_dir_exits_2(self, workspace, tmp_path, capsys):
        assert main(["eval", "--checkpoint", str(workspace["checkpoint"]),
                     "--graph", str(tmp_path / "missing")]) == 2
        assert "meta.json" in capsys.readouterr().err

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_numerical_blowup_exits_3(self, workspace, tmp_path, capsys):
        cfg = write_config(tmp_path / "c.json", **{**SMALL, "lr": 1e200},
                           source_graph=str(workspace["source"]))
        assert main(["train", "--config", cfg, "--out",
                     str(tmp_path / "o"), "--quiet"]) == 3
        assert "non-finite" in capsys.readouterr().err
