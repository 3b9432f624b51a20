import json
import shlex
import subprocess
import sys

import pytest

from latrescore import parse_lattice_text, write_ark, write_lattice_text
from latrescore.cli import main

from conftest import MOCK_SCORER, make_l1, make_l2

UNIT = ["--lm-scale", "1", "--wip", "0"]


@pytest.fixture()
def l1_file(tmp_path, l1):
    path = tmp_path / "utt1.lat"
    path.write_text(write_lattice_text(l1))
    return str(path)


@pytest.fixture()
def l2_file(tmp_path, l2):
    path = tmp_path / "utt2.lat"
    path.write_text(write_lattice_text(l2))
    return str(path)


@pytest.fixture()
def both_ark(tmp_path):
    path = tmp_path / "both.ark"
    write_ark(path, [make_l1(), make_l2()])
    return str(path)


@pytest.fixture()
def refs_file(tmp_path):
    path = tmp_path / "refs.txt"
    path.write_text("utt1 a c\nutt2 hi\n")
    return str(path)


@pytest.fixture()
def corpus_file(tmp_path):
    path = tmp_path / "corpus.txt"
    path.write_text("a b\na c\n")
    return str(path)


class TestValidate:
    def test_valid_lattice(self, l1_file, capsys):
        assert main(["validate", l1_file]) == 0
        assert capsys.readouterr().out == "utt1 OK\n"

    def test_invalid_lattice(self, tmp_path, l1_file, capsys):
        bad = tmp_path / "bad.lat"
        bad.write_text("badutt\n0 1 a 0.0,0.0\n2 0.000000\n")
        assert main(["validate", l1_file, str(bad)]) == 1
        out = capsys.readouterr().out
        assert "utt1 OK" in out
        assert "badutt INVALID" in out
        assert "\n  " in out  # indented violation lines

    def test_missing_file(self, capsys):
        assert main(["validate", "/no/such/file.lat"]) == 1
        assert "no such file" in capsys.readouterr().err

    def test_empty_file(self, tmp_path, capsys):
        empty = tmp_path / "empty.lat"
        empty.write_text("  \n")
        assert main(["validate", str(empty)]) == 1
        assert "empty lattice" in capsys.readouterr().err


class TestDecode:
    def test_best_path(self, l1_file, capsys):
        assert main(["best-path", l1_file, *UNIT]) == 0
        assert capsys.readouterr().out == "utt1 a c\n"

    def test_best_path_with_score(self, l1_file, capsys):
        assert main(["best-path", l1_file, "--with-score", *UNIT]) == 0
        assert capsys.readouterr().out == "utt1\t-4.000000\ta c\n"

    def test_best_path_default_knobs(self, l1_file, capsys):
        assert main(["best-path", l1_file]) == 0
        assert capsys.readouterr().out == "utt1 b c\n"

    def test_best_path_over_ark(self, both_ark, capsys):
        assert main(["best-path", both_ark, *UNIT, "--wip", "1"]) == 0
        assert capsys.readouterr().out == "utt1 a c\nutt2 hi\n"

    def test_nbest_numbering(self, l1_file, capsys):
        assert main(["nbest", l1_file, "-k", "2", *UNIT]) == 0
        assert capsys.readouterr().out == "utt1-1 a c\nutt1-2 b c\n"

    def test_nbest_with_score(self, l1_file, capsys):
        assert main(["nbest", l1_file, "-k", "1", "--with-score", *UNIT]) == 0
        assert capsys.readouterr().out == "utt1-1\t-4.000000\ta c\n"

    def test_jobs_do_not_change_output(self, both_ark, capsys):
        assert main(["best-path", both_ark, *UNIT, "--jobs", "1"]) == 0
        serial = capsys.readouterr().out
        assert main(["best-path", both_ark, *UNIT, "--jobs", "4"]) == 0
        assert capsys.readouterr().out == serial


class TestTransforms:
    def test_expand_to_stdout(self, l1_file, capsys):
        assert main(["expand", l1_file, "--order", "3"]) == 0
        expanded = parse_lattice_text(capsys.readouterr().out)
        assert expanded.num_nodes == 5

    def test_expand_many_to_ark_with_scp(self, both_ark, tmp_path, capsys):
        out_ark = tmp_path / "expanded.ark"
        out_scp = tmp_path / "expanded.scp"
        rc = main(
            ["expand", both_ark, "--order", "2", "-o", str(out_ark), "--scp", str(out_scp)]
        )
        assert rc == 0
        listing = capsys.readouterr()
        assert listing.out == ""
        scp_lines = out_scp.read_text().splitlines()
        assert [line.split()[0] for line in scp_lines] == ["utt1", "utt2"]
        rc = main(["best-path", str(out_ark), *UNIT])
        assert rc == 0
        assert capsys.readouterr().out == "utt1 a c\nutt2 h i\n"

    def test_multiple_outputs_need_ark(self, both_ark, capsys):
        assert main(["expand", both_ark, "--order", "2"]) == 1
        assert "need -o" in capsys.readouterr().err

    def test_prune(self, l1_file, capsys):
        assert main(["prune", l1_file, "--beam", "0.1", *UNIT]) == 0
        pruned = parse_lattice_text(capsys.readouterr().out)
        assert sorted(a.word for a in pruned.arcs) == ["a", "c"]

    def test_prune_to_file(self, l1_file, tmp_path, capsys):
        out = tmp_path / "pruned.lat"
        assert main(["prune", l1_file, "--beam", "10", *UNIT, "-o", str(out)]) == 0
        assert parse_lattice_text(out.read_text()).num_nodes == 4

    def test_dot_stdout(self, l1_file, capsys):
        assert main(["dot", l1_file]) == 0
        out = capsys.readouterr().out
        assert out.startswith("digraph")
        assert "doublecircle" in out

    def test_dot_to_file(self, l1_file, tmp_path, capsys):
        out = tmp_path / "l1.dot"
        assert main(["dot", l1_file, "-o", str(out)]) == 0
        assert out.read_text().startswith("digraph")


class TestModels:
    def test_train_lm(self, corpus_file, tmp_path, capsys):
        model_path = tmp_path / "model.nglm"
        assert main(["train-lm", corpus_file, "--order", "2", "-o", str(model_path)]) == 0
        line = capsys.readouterr().out
        assert line.startswith("ng-")
        assert "order=2 vocab=6" in line
        assert line.rstrip().endswith(str(model_path))
        assert model_path.read_text().startswith("NGLM v1\n")

    def test_rescore_single(self, l1_file, corpus_file, tmp_path, capsys):
        model_path = tmp_path / "model.nglm"
        main(["train-lm", corpus_file, "--order", "2", "-o", str(model_path)])
        capsys.readouterr()
        rc = main(["rescore", l1_file, "--model", str(model_path), *UNIT, "--lm-interp", "0"])
        assert rc == 0
        rescored = parse_lattice_text(capsys.readouterr().out)
        assert len(rescored.finals) == 1

    def test_rescore_pipeline_to_ark(self, both_ark, tmp_path, capsys):
        corpus = tmp_path / "c.txt"
        corpus.write_text("a c\nhi\n")
        model_path = tmp_path / "model.nglm"
        main(["train-lm", str(corpus), "--order", "2", "-o", str(model_path)])
        capsys.readouterr()
        out_ark = tmp_path / "rescored.ark"
        out_scp = tmp_path / "rescored.scp"
        rc = main(
            [
                "rescore", both_ark, "--model", str(model_path),
                "-o", str(out_ark), "--scp", str(out_scp),
                "--lm-scale", "1", "--wip", "0", "--lm-interp", "1",
            ]
        )
        assert rc == 0
        rc = main(["best-path", str(out_scp), *UNIT])
        assert rc == 0
        assert capsys.readouterr().out == "utt1 a c\nutt2 hi\n"

    def test_rescore_missing_model(self, l1_file, capsys):
        assert main(["rescore", l1_file, "--model", "/no/model.nglm"]) == 1
        assert "no such model" in capsys.readouterr().err


class TestRescoreNBest:
    def test_with_model_shows_rank_moves(self, l1_file, tmp_path, capsys):
        corpus = tmp_path / "c.txt"
        corpus.write_text("b c\n" * 5)
        model_path = tmp_path / "model.nglm"
        main(["train-lm", str(corpus), "--order", "2", "-o", str(model_path)])
        capsys.readouterr()
        rc = main(
            [
                "rescore-nbest", l1_file, "--model", str(model_path), "-k", "2",
                "--lm-scale", "1", "--wip", "0", "--lm-interp", "1",
            ]
        )
        assert rc == 0
        lines = capsys.readouterr().out.splitlines()
        assert len(lines) == 2
        assert lines[0].startswith("utt1-1\t")
        assert lines[0].endswith("\tb c")
        assert "2->1" in lines[0]
        assert "1->2" in lines[1]

    def test_with_external_scorer(self, l1_file, tmp_path, capsys):
        table = {
            "|b": -0.03, "b|c": -0.03, "b c|</s>": -0.04,
            "|a": -2.0, "a|c": -1.5, "a c|</s>": -1.5,
        }
        table_path = tmp_path / "table.json"
        table_path.write_text(json.dumps(table))
        cmd = " ".join(
            shlex.quote(part) for part in [sys.executable, str(MOCK_SCORER), "--table", str(table_path)]
        )
        rc = main(["rescore-nbest", l1_file, "--scorer-cmd", cmd, "-k", "2", *UNIT])
        assert rc == 0
        lines = capsys.readouterr().out.splitlines()
        assert lines[0] == "utt1-1\t-3.600000\t2->1\tb c"
        assert lines[1] == "utt1-2\t-7.000000\t1->2\ta c"

    def test_requires_exactly_one_source(self, l1_file, tmp_path, capsys):
        assert main(["rescore-nbest", l1_file, "-k", "2"]) == 1
        assert "exactly one" in capsys.readouterr().err
        model_path = tmp_path / "m.nglm"
        model_path.write_text("NGLM v1\n")
        rc = main(
            ["rescore-nbest", l1_file, "--model", str(model_path), "--scorer-cmd", "x", "-k", "2"]
        )
        assert rc == 1
        assert "exactly one" in capsys.readouterr().err


class TestWerCommand:
    def test_perfect_match(self, tmp_path, refs_file, capsys):
        hyps = tmp_path / "hyps.txt"
        hyps.write_text("utt1 a c\nutt2 hi\n")
        assert main(["wer", str(hyps), "--refs", refs_file]) == 0
        assert capsys.readouterr().out == "WER 0.00\n"

    def test_errors_counted(self, tmp_path, refs_file, capsys):
        hyps = tmp_path / "hyps.txt"
        hyps.write_text("utt1 a x\nutt2 hi\n")
        assert main(["wer", str(hyps), "--refs", refs_file]) == 0
        assert capsys.readouterr().out == "WER 33.33\n"

    def test_json_breakdown(self, tmp_path, refs_file, capsys):
        hyps = tmp_path / "hyps.txt"
        hyps.write_text("utt1 a x\nutt2 hi\n")
        assert main(["wer", str(hyps), "--refs", refs_file, "--json"]) == 0
        body = json.loads(capsys.readouterr().out)
        assert body["substitutions"] == 1
        assert body["ref_words"] == 3

    def test_missing_reference_fails(self, tmp_path, capsys):
        refs = tmp_path / "refs.txt"
        refs.write_text("utt1 a c\n")
        hyps = tmp_path / "hyps.txt"
        hyps.write_text("uttX a c\n")
        assert main(["wer", str(hyps), "--refs", str(refs)]) == 1
        assert "no reference" in capsys.readouterr().err


class TestSweepCommand:
    def test_csv_to_stdout(self, l1_file, tmp_path, capsys):
        refs = tmp_path / "refs.txt"
        refs.write_text("utt1 a c\n")
        rc = main(["sweep", l1_file, "--refs", str(refs), "--scales", "1,2", "--wips", "0"])
        assert rc == 0
        lines = capsys.readouterr().out.splitlines()
        assert lines[0].startswith("test_set,lm_scale,wip,")
        assert len(lines) == 3
        assert lines[1].split(",")[3] == "0.00"
        assert lines[2].split(",")[3] == "50.00"

    def test_table_and_csv_file(self, l1_file, tmp_path, capsys):
        refs = tmp_path / "refs.txt"
        refs.write_text("utt1 a c\n")
        csv_path = tmp_path / "grid.csv"
        rc = main(
            [
                "sweep", l1_file, "--refs", str(refs),
                "--scales", "1", "--wips", "0,0.5",
                "--csv", str(csv_path), "--table",
            ]
        )
        assert rc == 0
        out = capsys.readouterr().out
        assert "lm_scale" in out
        assert "wip 0" in out
        assert csv_path.read_text().startswith("test_set,")

    def test_with_model(self, l1_file, tmp_path, capsys):
        corpus = tmp_path / "c.txt"
        corpus.write_text("a c\n" * 5)
        model_path = tmp_path / "model.nglm"
        main(["train-lm", str(corpus), "--order", "2", "-o", str(model_path)])
        capsys.readouterr()
        refs = tmp_path / "refs.txt"
        refs.write_text("utt1 a c\n")
        rc = main(
            [
                "sweep", l1_file, "--refs", str(refs), "--model", str(model_path),
                "--scales", "10", "--wips", "0",
            ]
        )
        assert rc == 0
        row = capsys.readouterr().out.splitlines()[1]
        assert row.split(",")[3] == "0.00"

    def test_bad_scales_value(self, l1_file, tmp_path, capsys):
        refs = tmp_path / "refs.txt"
        refs.write_text("utt1 a c\n")
        rc = main(["sweep", l1_file, "--refs", str(refs), "--scales", "x", "--wips", "0"])
        assert rc == 1
        assert "bad --scales" in capsys.readouterr().err


class TestUsageErrors:
    def test_unknown_flag(self, l1_file):
        with pytest.raises(SystemExit) as exc:
            main(["best-path", l1_file, "--no-such-flag"])
        assert exc.value.code == 2

    def test_jobs_must_be_positive(self, l1_file):
        with pytest.raises(SystemExit) as exc:
            main(["best-path", l1_file, "--jobs", "0"])
        assert exc.value.code == 2

    def test_missing_subcommand(self):
        with pytest.raises(SystemExit) as exc:
            main([])
        assert exc.value.code == 2


class TestConsoleScript:
    def test_installed_entry_point(self, l1_file):
        result = subprocess.run(
            ["latrescore", "best-path", l1_file, "--lm-scale", "1", "--wip", "0"],
            capture_output=True,
            text=True,
            timeout=120,
        )
        assert result.returncode == 0
        assert result.stdout == "utt1 a c\n"
