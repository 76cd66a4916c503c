"""Library learning over e-graphs: find shared abstractions that compress a
corpus of first-order programs, optionally modulo rewrite rules."""

from .egraph import EGraph, Limits
from .pipeline import Config, RunStats, run
from .sexpr import parse_corpus, parse_rules, parse_term
from .terms import App, RewriteRule, Term, Var

__all__ = [
    "App", "Config", "EGraph", "Limits", "RewriteRule", "RunStats", "Term", "Var",
    "parse_corpus", "parse_rules", "parse_term", "run",
]
