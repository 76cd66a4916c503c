"""Command line front-end: ``compress`` one corpus or ``bench`` a directory."""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import time
from typing import List, Optional

from .egraph import Unextractable
from .pipeline import SCHEMA_VERSION, Config, run
from .selection import SelectionError
from .sexpr import ParseError, parse_corpus, parse_rules

EXIT_OK, EXIT_PARSE, EXIT_UNEXTRACTABLE = 0, 1, 2

CORPUS_SUFFIXES = (".sexp", ".sexpr", ".corpus", ".txt")

REPORT_COLUMNS = [
    "file", "input_size", "output_size", "compression_ratio", "num_abstractions",
    "saturated", "seconds", "error",
]


def _limit(text: str) -> Optional[int]:
    if text.lower() in ("inf", "none", "unbounded"):
        return None
    v = int(text)
    if v < 0:
        raise argparse.ArgumentTypeError("must be non-negative or 'inf'")
    return v


def _add_config_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--rules", help="rewrite rules file")
    p.add_argument("--rounds", type=int, default=20)
    p.add_argument("--beam-size", type=_limit, default=100, help="K, or 'inf'")
    p.add_argument("--lib-size", type=_limit, default=3, help="N, or 'inf'")
    p.add_argument("--max-arity", type=_limit, default=4)
    p.add_argument("--max-candidates", type=_limit, default=None)
    p.add_argument("--eqsat-iters", type=int, default=10)
    p.add_argument("--eqsat-nodes", type=int, default=100_000)
    p.add_argument("--eqsat-seconds", type=float, default=30.0)
    p.add_argument("--no-eqs", action="store_true", help="ignore the rules (purely syntactic)")
    p.add_argument("--eqsat-only", action="store_true", help="saturate and extract, no library")


def _config(args, debug_dir=None) -> Config:
    return Config(
        rounds=args.rounds,
        beam_size=args.beam_size,
        lib_size=args.lib_size,
        max_arity=args.max_arity,
        max_candidates=args.max_candidates,
        eqsat_iters=args.eqsat_iters,
        eqsat_nodes=args.eqsat_nodes,
        eqsat_seconds=args.eqsat_seconds,
        no_eqs=args.no_eqs,
        eqsat_only=args.eqsat_only,
        debug_dir=debug_dir,
    )


def _read(path: str) -> str:
    with open(path) as f:
        return f.read()


def _load_rules(path: Optional[str]):
    if not path:
        return []
    try:
        return parse_rules(_read(path))
    except ParseError as e:
        raise ParseError(f"{path}: {e}", e.line, e.col) from None


def cmd_compress(args) -> int:
    try:
        corpus = parse_corpus(_read(args.corpus))
    except ParseError as e:
        print(f"{args.corpus}:{e}", file=sys.stderr)
        return EXIT_PARSE
    try:
        rules = _load_rules(args.rules)
    except ParseError as e:
        print(str(e), file=sys.stderr)
        return EXIT_PARSE
    try:
        res = run(corpus, rules, _config(args, args.seed_debug))
    except (Unextractable, SelectionError) as e:
        print(f"unextractable input: {e}", file=sys.stderr)
        return EXIT_UNEXTRACTABLE
    if args.out:
        with open(args.out, "w") as f:
            f.write(res.text + "\n")
    else:
        print(res.text)
    if args.stats:
        with open(args.stats, "w") as f:
            f.write(res.stats.to_json() + "\n")
    return EXIT_OK


def bench_rows(directory: str, args) -> List[dict]:
    rows = []
    shared_rules = args.rules
    for name in sorted(os.listdir(directory)):
        path = os.path.join(directory, name)
        if not os.path.isfile(path) or not name.endswith(CORPUS_SUFFIXES) or name.startswith("."):
            continue
        row = {c: "" for c in REPORT_COLUMNS}
        row["file"] = name
        t0 = time.perf_counter()
        try:
            corpus = parse_corpus(_read(path))
            own = os.path.splitext(path)[0] + ".rules"
            rules = _load_rules(own if os.path.exists(own) else shared_rules)
            res = run(corpus, rules, _config(args))
            st = res.stats
            row.update(
                input_size=st.input_size,
                output_size=st.output_size,
                compression_ratio=round(st.compression_ratio, 4),
                num_abstractions=st.num_abstractions,
                saturated=all(s["saturated"] for s in st.saturation) if st.saturation else True,
            )
        except Exception as e:  # noqa: BLE001 - one bad corpus must not stop the run
            row["error"] = f"{type(e).__name__}: {e}"
        row["seconds"] = round(time.perf_counter() - t0, 3)
        rows.append(row)
    return rows


def cmd_bench(args) -> int:
    rows = bench_rows(args.dir, args)
    if args.json:
        text = json.dumps({"schema_version": SCHEMA_VERSION, "rows": rows}, indent=1)
    else:
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=REPORT_COLUMNS, lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
        text = buf.getvalue()
    if args.out:
        with open(args.out, "w") as f:
            f.write(text)
    else:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="eqcompress",
                                 description="Learn shared abstractions that compress a corpus.")
    sub = ap.add_subparsers(dest="command", required=True)

    c = sub.add_parser("compress", help="compress one corpus file")
    c.add_argument("--corpus", required=True)
    _add_config_args(c)
    c.add_argument("--out", help="write the compressed corpus here (default stdout)")
    c.add_argument("--stats", help="write run statistics as JSON")
    c.add_argument("--seed-debug", metavar="DIR", help="dump e-graphs, candidates and traces")
    c.set_defaults(func=cmd_compress)

    b = sub.add_parser("bench", help="compress every corpus in a directory")
    b.add_argument("--dir", required=True)
    _add_config_args(b)
    b.add_argument("--out", help="report file (default stdout)")
    b.add_argument("--json", action="store_true", help="JSON report instead of CSV")
    b.set_defaults(func=cmd_bench)
    return ap


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
