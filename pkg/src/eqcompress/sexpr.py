"""S-expression reading and writing for corpora, rule files and outputs."""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

from .terms import TUPLE, App, RewriteRule, Term, Var, to_sexpr, var_from_name

_TOKEN = re.compile(r"\s+|;[^\n]*|\(|\)|[^\s();]+")


class ParseError(Exception):
    def __init__(self, msg: str, line: int, col: int):
        super().__init__(f"{line}:{col}: {msg}")
        self.line = line
        self.col = col


@dataclass
class Node:
    """Raw s-expression: an atom (``items is None``) or a list."""

    atom: Optional[str]
    items: Optional[List["Node"]]
    line: int
    col: int

    @property
    def is_atom(self) -> bool:
        return self.items is None


def read_all(text: str) -> List[Node]:
    """Parse every top-level s-expression in ``text``."""
    out: List[Node] = []
    stack: List[Node] = []
    line, line_start = 1, 0
    pos = 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            raise ParseError(f"unexpected character {text[pos]!r}", line, pos - line_start + 1)
        tok = m.group()
        col = pos - line_start + 1
        if tok == "(":
            stack.append(Node(None, [], line, col))
        elif tok == ")":
            if not stack:
                raise ParseError("unbalanced ')'", line, col)
            node = stack.pop()
            (stack[-1].items if stack else out).append(node)
        elif not tok[0].isspace() and tok[0] != ";":
            node = Node(tok, None, line, col)
            (stack[-1].items if stack else out).append(node)
        nl = tok.count("\n")
        if nl:
            line += nl
            line_start = pos + tok.rindex("\n") + 1
        pos = m.end()
    if stack:
        n = stack[-1]
        raise ParseError("unclosed '('", n.line, n.col)
    return out


def _var(name: str) -> Var:
    return var_from_name(name)


def to_term(node: Node, allow_vars: bool = True):
    """Convert a raw node into a term or pattern.

    ``(apply (lambda (?a ...) body) args...)`` becomes an :class:`App`.
    """
    if node.is_atom:
        a = node.atom
        if a.startswith("?"):
            if not allow_vars:
                raise ParseError(f"pattern variable {a} not allowed here", node.line, node.col)
            if len(a) == 1:
                raise ParseError("empty variable name", node.line, node.col)
            return _var(a)
        if a.startswith("@"):
            raise ParseError(f"reserved symbol {a}", node.line, node.col)
        return Term(a)
    if not node.items:
        raise ParseError("empty list", node.line, node.col)
    head = node.items[0]
    if not head.is_atom:
        raise ParseError("head of an application must be a symbol", head.line, head.col)
    if head.atom == "apply":
        return _apply(node, allow_vars)
    if head.atom.startswith("?") or head.atom.startswith("@"):
        raise ParseError(f"bad head symbol {head.atom}", head.line, head.col)
    return Term(head.atom, [to_term(c, allow_vars) for c in node.items[1:]])


def _lambda(node: Node, allow_vars: bool) -> Tuple[Tuple[Var, ...], object]:
    items = node.items or []
    if len(items) != 3 or not items[0].is_atom or items[0].atom != "lambda" or items[1].is_atom:
        raise ParseError("expected (lambda (?x ...) body)", node.line, node.col)
    params = []
    for p in items[1].items:
        if not p.is_atom or not p.atom.startswith("?"):
            raise ParseError("lambda parameters must be variables", p.line, p.col)
        params.append(_var(p.atom))
    return tuple(params), to_term(items[2], True)


def _apply(node: Node, allow_vars: bool) -> App:
    items = node.items
    if len(items) < 2:
        raise ParseError("apply needs a lambda", node.line, node.col)
    params, body = _lambda(items[1], allow_vars)
    args = [to_term(a, allow_vars) for a in items[2:]]
    if len(args) != len(params):
        raise ParseError("application arity mismatch", node.line, node.col)
    return App(params, body, args)


def parse_term(text: str, allow_vars: bool = True):
    nodes = read_all(text)
    if len(nodes) != 1:
        raise ParseError(f"expected one expression, found {len(nodes)}", 1, 1)
    return to_term(nodes[0], allow_vars)


# -- corpus and rules files ------------------------------------------------------


@dataclass
class Corpus:
    """Entries of a corpus; each entry is a list of alternative programs."""

    entries: List[List[Term]] = field(default_factory=list)

    @property
    def programs(self) -> List[Term]:
        return [g[0] for g in self.entries]


def parse_corpus(text: str) -> Corpus:
    """Parse a corpus file: one program or ``(group p1 p2 ...)`` per entry.

    A single top-level ``(list ...)`` is also accepted as a whole corpus.
    """
    nodes = read_all(text)
    if len(nodes) == 1 and not nodes[0].is_atom and nodes[0].items and \
            nodes[0].items[0].is_atom and nodes[0].items[0].atom == TUPLE:
        nodes = nodes[0].items[1:]
    corpus = Corpus()
    for n in nodes:
        if not n.is_atom and n.items and n.items[0].is_atom and n.items[0].atom == "group":
            members = [to_term(m, allow_vars=False) for m in n.items[1:]]
            if not members:
                raise ParseError("empty group", n.line, n.col)
            corpus.entries.append(members)
        else:
            corpus.entries.append([to_term(n, allow_vars=False)])
    for group in corpus.entries:
        for t in group:
            if not isinstance(t, Term):
                raise ParseError("corpus programs must be first-order terms", 1, 1)
    check_arities([t for g in corpus.entries for t in g])
    return corpus


def check_arities(terms: Sequence) -> dict:
    """Infer a signature and reject inconsistent arities."""
    sig: dict = {}
    stack = list(terms)
    while stack:
        t = stack.pop()
        if isinstance(t, Term):
            if t.head != TUPLE:
                k = sig.setdefault(t.head, len(t.children))
                if k != len(t.children):
                    raise ParseError(
                        f"symbol {t.head} used with arities {k} and {len(t.children)}", 1, 1
                    )
            stack.extend(t.children)
        elif isinstance(t, App):
            stack.extend(t.args)
            stack.append(t.body)
    return sig


def parse_rules(text: str) -> List[RewriteRule]:
    rules = []
    for i, n in enumerate(read_all(text)):
        if n.is_atom or len(n.items) != 3 or not n.items[0].is_atom or \
                n.items[0].atom not in ("=>", "<=>"):
            raise ParseError("expected (=> lhs rhs) or (<=> lhs rhs)", n.line, n.col)
        lhs = to_term(n.items[1])
        rhs = to_term(n.items[2])
        try:
            rules.append(RewriteRule(lhs, rhs, n.items[0].atom == "<=>", name=f"r{i}"))
        except ValueError as e:
            raise ParseError(str(e), n.line, n.col) from None
    return rules


# -- let-floated output -----------------------------------------------------------


@dataclass
class Definition:
    name: str
    params: Tuple[Var, ...]
    body: Term


def to_lib_sexpr(defs: Sequence[Definition], main) -> str:
    """``(lib f0 (lambda (?x0) body) (lib f1 ... main))``; ``defs`` outermost first."""
    out = to_sexpr(main)
    for d in reversed(defs):
        params = " ".join(v.name for v in d.params)
        out = f"(lib {d.name} (lambda ({params}) {to_sexpr(d.body)}) {out})"
    return out


def expand_libs(node_or_text) -> object:
    """Read a let-floated output back into a term with inline applications."""
    node = read_all(node_or_text)[0] if isinstance(node_or_text, str) else node_or_text
    return _expand(node, {})


def _expand(node: Node, env: dict):
    if node.is_atom:
        if node.atom in env:
            params, body = env[node.atom]
            if params:
                raise ParseError(f"{node.atom} needs arguments", node.line, node.col)
            return App((), body, ())
        return to_term(node)
    items = node.items
    if items and items[0].is_atom and items[0].atom == "lib":
        if len(items) != 4 or not items[1].is_atom:
            raise ParseError("expected (lib name (lambda ...) body)", node.line, node.col)
        lam = items[2]
        if lam.is_atom or len(lam.items) != 3:
            raise ParseError("expected (lambda (?x ...) body)", lam.line, lam.col)
        params, _ = _lambda(Node(None, [lam.items[0], lam.items[1], Node("?_", None, 0, 0)],
                                 lam.line, lam.col), True)
        body = _expand(lam.items[2], env)
        inner = dict(env)
        inner[items[1].atom] = (params, body)
        return _expand(items[3], inner)
    if items and items[0].is_atom and items[0].atom in env:
        params, body = env[items[0].atom]
        args = [_expand(a, env) for a in items[1:]]
        if len(args) != len(params):
            raise ParseError(f"{items[0].atom} arity mismatch", node.line, node.col)
        return App(params, body, args)
    if not items or not items[0].is_atom:
        raise ParseError("bad expression", node.line, node.col)
    if items[0].atom == "apply":
        return _apply(node, True)
    return Term(items[0].atom, [_expand(c, env) for c in items[1:]])

