import csv
import io
import json
import subprocess
import sys

import pytest

from eqcompress import cli
from eqcompress.egraph import Unextractable
from eqcompress.sexpr import expand_libs, parse_corpus
from eqcompress.terms import TUPLE, Term, evaluate
from worked import COMM_TEXT, NESTED_TEXT

COMM_RULES_TEXT = "(=> (+ ?x ?y) (+ ?y ?x))\n"


@pytest.fixture
def files(tmp_path):
    def write(name, text):
        p = tmp_path / name
        p.write_text(text)
        return str(p)
    return write


def compress(*argv):
    return cli.main(["compress", *argv])


def program_list(text):
    return Term(TUPLE, [g[0] for g in parse_corpus(text).entries])


def test_nested_compress(files, tmp_path):
    corpus = files("nested.sexp", NESTED_TEXT)
    out, stats = tmp_path / "out.sexp", tmp_path / "stats.json"
    assert compress("--corpus", corpus, "--rounds", "1", "--beam-size", "inf",
                    "--out", str(out), "--stats", str(stats)) == 0
    st = json.loads(stats.read_text())
    assert st["schema_version"] == 1
    assert st["input_size"] == 29 and st["output_size"] == 25
    assert st["compression_ratio"] == pytest.approx(29 / 25)
    assert out.read_text().startswith("(lib f0 (lambda")
    assert evaluate(expand_libs(out.read_text())) == program_list(NESTED_TEXT)


def test_parse_error_exit_code(files, capsys):
    corpus = files("bad.sexp", "(+ 1 2\n")
    assert compress("--corpus", corpus) == 1
    assert "bad.sexp" in capsys.readouterr().err


def test_rules_parse_error_exit_code(files):
    corpus = files("c.sexp", COMM_TEXT)
    rules = files("r.rules", "(=> (+ ?x ?y))\n")
    assert compress("--corpus", corpus, "--rules", rules) == 1


def test_unextractable_exit_code(files, monkeypatch):
    def boom(*a, **k):
        raise Unextractable("no finite term")
    monkeypatch.setattr(cli, "run", boom)
    assert compress("--corpus", files("c.sexp", COMM_TEXT)) == 2


def test_output_is_deterministic(files, tmp_path):
    corpus = files("c.sexp", COMM_TEXT)
    rules = files("r.rules", COMM_RULES_TEXT)
    texts = []
    for i in range(2):
        out = tmp_path / f"o{i}.sexp"
        assert compress("--corpus", corpus, "--rules", rules, "--out", str(out)) == 0
        texts.append(out.read_bytes())
    assert texts[0] == texts[1]


def test_equations_enable_x_plus_one(files, tmp_path):
    corpus = files("c.sexp", COMM_TEXT)
    rules = files("r.rules", COMM_RULES_TEXT)
    with_eqs, without = tmp_path / "a.json", tmp_path / "b.json"
    assert compress("--corpus", corpus, "--rules", rules, "--stats", str(with_eqs),
                    "--out", str(tmp_path / "a.sexp")) == 0
    assert compress("--corpus", corpus, "--rules", rules, "--no-eqs", "--stats", str(without),
                    "--out", str(tmp_path / "b.sexp")) == 0
    a, b = json.loads(with_eqs.read_text()), json.loads(without.read_text())
    assert a["output_size"] < b["output_size"] == b["input_size"]
    assert b["saturation"] == []


def test_eqsat_only_learns_nothing(files, tmp_path):
    stats = tmp_path / "s.json"
    assert compress("--corpus", files("f.sexp", NESTED_TEXT), "--eqsat-only",
                    "--stats", str(stats), "--out", str(tmp_path / "o")) == 0
    st = json.loads(stats.read_text())
    assert st["num_abstractions"] == 0 and st["output_size"] == st["input_size"]


def test_groups_count_their_smallest_member(files, tmp_path):
    stats = tmp_path / "s.json"
    text = "(group (+ 1 (g 2)) (f 1))\n(f 1)\n"
    assert compress("--corpus", files("g.sexp", text), "--stats", str(stats),
                    "--out", str(tmp_path / "o")) == 0
    st = json.loads(stats.read_text())
    assert st["input_size"] == 4


def test_rounds_never_grow(files, tmp_path):
    stats = tmp_path / "s.json"
    progs = "\n".join(f"(+ (f (g {i})) (h (f (g {i})) {i % 3}))" for i in range(8))
    assert compress("--corpus", files("r.sexp", progs), "--rounds", "5",
                    "--stats", str(stats), "--out", str(tmp_path / "o")) == 0
    sizes = [r["output_size"] for r in json.loads(stats.read_text())["rounds"]]
    assert len(sizes) >= 2 and sizes == sorted(sizes, reverse=True)


def test_debug_dump(files, tmp_path):
    dbg = tmp_path / "dbg"
    assert compress("--corpus", files("f.sexp", NESTED_TEXT), "--rounds", "1",
                    "--seed-debug", str(dbg), "--out", str(tmp_path / "o")) == 0
    names = {p.name for p in dbg.iterdir()}
    assert {"round0_egraph.json", "round0_candidates.json", "round0_selection.json"} <= names


# -- bench -----------------------------------------------------------------------------------


def bench(directory, *extra, capsys):
    assert cli.main(["bench", "--dir", str(directory), "--rounds", "1", *extra]) == 0
    return capsys.readouterr().out


def test_bench_empty_dir(tmp_path, capsys):
    rows = list(csv.DictReader(io.StringIO(bench(tmp_path, capsys=capsys))))
    assert rows == []


def test_bench_two_corpora(tmp_path, capsys):
    (tmp_path / "a.sexp").write_text(NESTED_TEXT)
    (tmp_path / "b.sexp").write_text(COMM_TEXT)
    (tmp_path / "b.rules").write_text(COMM_RULES_TEXT)
    (tmp_path / "stats.json").write_text("{}")
    text = bench(tmp_path, capsys=capsys)
    reader = csv.DictReader(io.StringIO(text))
    rows = list(reader)
    assert reader.fieldnames == cli.REPORT_COLUMNS
    assert [r["file"] for r in rows] == ["a.sexp", "b.sexp"]
    assert all(r["error"] == "" for r in rows)
    # b picked up its own rules file and found X+1
    assert int(rows[1]["output_size"]) < int(rows[1]["input_size"])


def test_bench_records_failures(tmp_path, capsys):
    (tmp_path / "bad.sexp").write_text("(+ 1")
    (tmp_path / "good.sexp").write_text(NESTED_TEXT)
    rows = json.loads(bench(tmp_path, "--json", capsys=capsys))["rows"]
    assert [r["file"] for r in rows] == ["bad.sexp", "good.sexp"]
    assert rows[0]["error"].startswith("ParseError") and rows[1]["error"] == ""
    assert set(rows[1]) == set(cli.REPORT_COLUMNS)


def test_module_entry_point(tmp_path):
    corpus = tmp_path / "c.sexp"
    corpus.write_text(NESTED_TEXT)
    res = subprocess.run([sys.executable, "-m", "eqcompress", "compress", "--corpus", str(corpus),
                          "--rounds", "1"], capture_output=True, text=True)
    assert res.returncode == 0 and res.stdout.startswith("(lib ")
