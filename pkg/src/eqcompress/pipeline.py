"""End-to-end driver: saturate, generate candidates, select, extract, repeat."""

from __future__ import annotations

import json
import os
import sys
import time
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Sequence

from .candidates import candidates_json, generate_candidates
from .egraph import EGraph, Limits
from .selection import (
    CostSetConfig, CostSets, apply_lib_rules, finalize, select_library,
)
from .sexpr import Corpus, Definition, expand_libs, to_lib_sexpr
from .terms import TUPLE, RewriteRule, Term, size

SCHEMA_VERSION = 1

sys.setrecursionlimit(max(sys.getrecursionlimit(), 100_000))


@dataclass
class Config:
    rounds: int = 20
    beam_size: Optional[int] = 100  # K; None is unbounded
    lib_size: Optional[int] = 3  # N; None is unbounded
    max_arity: Optional[int] = 4
    eqsat_iters: int = 10
    eqsat_nodes: int = 100_000
    eqsat_seconds: float = 30.0
    no_eqs: bool = False
    eqsat_only: bool = False
    use_reduce: bool = True
    max_candidates: Optional[int] = None
    debug_dir: Optional[str] = None

    @property
    def limits(self) -> Limits:
        return Limits(self.eqsat_iters, self.eqsat_nodes, self.eqsat_seconds)


@dataclass
class RunStats:
    input_size: int
    output_size: int
    compression_ratio: float
    num_abstractions: int
    saturation: List[dict] = field(default_factory=list)
    phase_ms: Dict[str, float] = field(default_factory=dict)
    rounds: List[dict] = field(default_factory=list)
    schema_version: int = SCHEMA_VERSION

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=1, sort_keys=True)


@dataclass
class RunResult:
    text: str
    defs: List[Definition]
    main: Term
    stats: RunStats

    def inline(self):
        return expand_libs(self.text)


def build_graph(entries: Sequence[Sequence[Term]]) -> EGraph:
    """Root tuple over entries; alternatives of one entry share an e-class."""
    g = EGraph()
    kids = []
    for group in entries:
        ids = [g.add_term(t) for t in group]
        for other in ids[1:]:
            g.merge(ids[0], other)
        kids.append(ids[0])
    g.rebuild()
    g.root = g.add_node(TUPLE, [g.find(k) for k in kids])
    g.rebuild()
    return g


def corpus_size(entries: Sequence[Sequence[Term]]) -> int:
    return sum(min(size(t) for t in group) for group in entries)


def symbols(entries) -> set:
    out = set()
    stack = [t for group in entries for t in group]
    while stack:
        t = stack.pop()
        if isinstance(t, Term):
            out.add(t.head)
            stack.extend(t.children)
    return out


class _Clock:
    def __init__(self):
        self.ms: Dict[str, float] = {}

    def time(self, name):
        clock = self

        class _T:
            def __enter__(self):
                self.t = time.perf_counter()

            def __exit__(self, *exc):
                clock.ms[name] = clock.ms.get(name, 0.0) + 1000 * (time.perf_counter() - self.t)

        return _T()


def _dump(cfg: Config, name: str, text: str) -> None:
    if cfg.debug_dir:
        os.makedirs(cfg.debug_dir, exist_ok=True)
        with open(os.path.join(cfg.debug_dir, name), "w") as f:
            f.write(text)


def run(corpus: Corpus, rules: Sequence[RewriteRule] = (), config: Optional[Config] = None) -> RunResult:
    cfg = config or Config()
    rules = [] if cfg.no_eqs else list(rules)
    clock = _Clock()
    entries = corpus.entries
    input_size = corpus_size(entries)
    reserved = symbols(entries)
    defs: List[Definition] = []
    saturation: List[dict] = []
    rounds: List[dict] = []
    current = entries
    main: Optional[Term] = None
    best_size = input_size

    for r in range(max(1, cfg.rounds)):
        with clock.time("eqsat"):
            g = build_graph(current)
            if rules:
                rep = g.eqsat(rules, cfg.limits)
                saturation.append({"round": r, "iterations": rep.iterations,
                                   "node_count": rep.node_count, "saturated": rep.saturated,
                                   "stop_reason": rep.stop_reason})
        _dump(cfg, f"round{r}_egraph.json", g.to_json())
        if cfg.eqsat_only:
            with clock.time("extract"):
                out = finalize(g, [], reserved)
            main = out.main
            rounds.append({"round": r, "candidates_considered": 0, "root_cost_set_size": 0,
                           "chosen_library": [], "library_size": 0,
                           "use_cost": out.main_size, "total": out.main_size})
            break
        with clock.time("candidates"):
            cands = generate_candidates(g, cfg.max_arity, max_candidates=cfg.max_candidates)
        _dump(cfg, f"round{r}_candidates.json", candidates_json(cands))
        with clock.time("lib_rules"):
            lg = apply_lib_rules(g, cands, Limits(50, max(cfg.eqsat_nodes, 10 * g.node_count),
                                                  max(cfg.eqsat_seconds, 60.0)))
        with clock.time("cost_sets"):
            cs = CostSets(lg, CostSetConfig(cfg.lib_size, cfg.beam_size, cfg.use_reduce)).run()
        with clock.time("select"):
            sel = select_library(cs, cfg.lib_size)
        chosen = [lg.fns[i].pattern for i in sel.library]
        with clock.time("finalize"):
            out = finalize(g, chosen, reserved)
        for d in out.defs:
            reserved.add(d.name)
        round_size = out.size + sum(_body_size(d) for d in defs)
        info = {
            "round": r,
            "candidates_considered": len(cands),
            "root_cost_set_size": sel.root_cost_set_size,
            "chosen_library": [d.name for d in out.defs],
            "library_size": sum(_body_size(d) for d in out.defs),
            "use_cost": out.main_size,
            "total": out.size,
            "output_size": round_size,
            "cost_set_passes": cs.passes,
            "cost_set_converged": cs.converged,
        }
        rounds.append(info)
        _dump(cfg, f"round{r}_selection.json", json.dumps(info, indent=1))
        if main is not None and round_size > best_size:
            break  # keep the previous round; cannot happen with an exact empty library
        defs.extend(out.defs)
        main = out.main
        best_size = round_size
        if not out.defs:
            break
        current = [[main_entry] for main_entry in _entries_of(main)]

    assert main is not None
    text = to_lib_sexpr(defs, main)
    output_size = _body_size_term(main) + sum(_body_size(d) for d in defs)
    stats = RunStats(
        input_size=input_size,
        output_size=output_size,
        compression_ratio=input_size / output_size if output_size else float("inf"),
        num_abstractions=len(defs),
        saturation=saturation,
        phase_ms={k: round(v, 3) for k, v in sorted(clock.ms.items())},
        rounds=rounds,
    )
    return RunResult(text, defs, main, stats)


def _entries_of(main: Term) -> List[Term]:
    if isinstance(main, Term) and main.head == TUPLE:
        return list(main.children)
    return [main]


def _body_size_term(t) -> int:
    if isinstance(t, Term):
        return (0 if t.head == TUPLE else 1) + sum(_body_size_term(c) for c in t.children)
    return 1


def _body_size(d: Definition) -> int:
    return _body_size_term(d.body)
