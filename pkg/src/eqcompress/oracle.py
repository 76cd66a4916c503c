"""Brute-force reference implementations for small instances.

Nothing here is used by the production pipeline; these functions exist to
check it.  Each one refuses inputs over its budget instead of truncating.
"""

from __future__ import annotations

import itertools
import time
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

from .egraph import APPLY, EGraph, Limits
from .terms import (
    TUPLE, App, Term, Var, canonicalize, compressed_size, kappa, match, size, skeleton,
    substitute, to_sexpr, variables,
)


class OracleRefusal(Exception):
    pass


@dataclass
class OracleBudget:
    max_candidates: int = 12
    max_denotation: int = 200
    max_subset: Optional[int] = None
    max_seconds: float = 10.0
    max_states: int = 200_000


def _rank(p) -> tuple:
    return (skeleton(p), -len(variables(p)), size(p), to_sexpr(p))


# -- library subsets --------------------------------------------------------------------


def _min_sizes(g: EGraph, usable) -> Dict[int, int]:
    """Smallest size per class; applications cost 1 plus their arguments and
    are only allowed when ``usable(body_class)`` holds."""
    best: Dict[int, int] = {}
    changed = True
    while changed:
        changed = False
        for cid, nodes in g.classes.items():
            for head, kids in nodes:
                if head == APPLY:
                    if not usable(g.find(kids[0])):
                        continue
                    kids = kids[1:]
                    own = 1
                else:
                    own = 0 if head == TUPLE else 1
                total = own
                for k in kids:
                    v = best.get(g.find(k))
                    if v is None:
                        break
                    total += v
                else:
                    if total < best.get(cid, total + 1):
                        best[cid] = total
                        changed = True
    return best


def _saturate(g: EGraph, patterns: Sequence) -> Tuple[EGraph, List[int]]:
    g2 = g.copy()
    if patterns:
        g2.eqsat([kappa(p) for p in patterns], Limits(max_iterations=100, max_nodes=10**6,
                                                      max_seconds=60))
    return g2, [g2.find(g2.lookup(p)) for p in patterns]


def _subset_cost(g2: EGraph, subset: Sequence, bodies: Sequence[int]) -> Optional[Tuple[int, int]]:
    allowed_all = set(bodies)
    root = _min_sizes(g2, lambda c: c in allowed_all).get(g2.find(g2.root))
    if root is None:
        return None
    lib = 0
    seen = set()
    for i, b in enumerate(bodies):
        if b in seen:
            continue
        seen.add(b)
        lower = set(bodies[:i]) - {b}
        d = _min_sizes(g2, lambda c: c in lower).get(b)
        if d is None:
            return None
        lib += d
    return root, lib


def library_cost(g: EGraph, patterns: Sequence, subset: Sequence) -> Optional[Tuple[int, int]]:
    """(use cost, library size) of ``subset`` after saturating ``g`` with it alone.

    A definition may only use functions of lower rank, which keeps the
    library free of cycles.
    """
    subset = sorted({canonicalize(p) for p in subset}, key=_rank)
    g2, bodies = _saturate(g, subset)
    return _subset_cost(g2, subset, bodies)


def optimal_library_bruteforce(g: EGraph, candidates: Sequence,
                               budget: Optional[OracleBudget] = None):
    """Exact best library over all subsets of ``candidates``.

    Compression rules only add application nodes and never merge existing
    classes, so the graph is saturated once with every candidate and each
    subset is priced by extraction that may apply only that subset.

    Returns ``(patterns, total)``; ties prefer fewer functions, then the
    lexicographically smallest printed patterns.
    """
    budget = budget or OracleBudget()
    pats = [getattr(c, "pattern", c) for c in candidates]
    pats = sorted({canonicalize(p) for p in pats}, key=_rank)
    if len(pats) > budget.max_candidates:
        raise OracleRefusal(f"{len(pats)} candidates exceed the budget of {budget.max_candidates}")
    start = time.monotonic()
    g2, bodies = _saturate(g, pats)
    best = None
    top = len(pats) if budget.max_subset is None else min(budget.max_subset, len(pats))
    for r in range(top + 1):
        for idx in itertools.combinations(range(len(pats)), r):
            if time.monotonic() - start > budget.max_seconds:
                raise OracleRefusal("time budget exceeded")
            subset = [pats[i] for i in idx]
            res = _subset_cost(g2, subset, [bodies[i] for i in idx])
            if res is None:
                continue
            total = res[0] + res[1]
            key = (total, r, [to_sexpr(p) for p in subset])
            if best is None or key < best[0]:
                best = (key, subset)
    if best is None:
        raise OracleRefusal("root is unextractable")
    return tuple(best[1]), best[0][0]


# -- exact term-level compression -----------------------------------------------------------


def _positions(t, in_body: Optional[object] = None):
    """Yield (path, subterm, enclosing body) for every rewritable position.

    Paths step through constructor children ``("c", i)``, application
    arguments ``("a", i)`` and lambda bodies ``("b",)``.
    """
    stack = [((), t, None)]
    while stack:
        path, s, body = stack.pop()
        if isinstance(s, Term):
            yield path, s, body
            for i, c in enumerate(s.children):
                stack.append((path + (("c", i),), c, body))
        elif isinstance(s, App):
            stack.append((path + (("b",),), s.body, s))
            for i, a in enumerate(s.args):
                stack.append((path + (("a", i),), a, body))


def _replace(t, path, new):
    if not path:
        return new
    step, rest = path[0], path[1:]
    if step[0] == "c":
        kids = list(t.children)
        kids[step[1]] = _replace(kids[step[1]], rest, new)
        return Term(t.head, kids)
    if step[0] == "a":
        args = list(t.args)
        args[step[1]] = _replace(args[step[1]], rest, new)
        return App(t.params, t.body, args)
    return App(t.params, _replace(t.body, rest, new), t.args)


def _has_app(t) -> bool:
    if isinstance(t, App):
        return True
    if isinstance(t, Term):
        return any(_has_app(c) for c in t.children)
    return False


def kappa_steps(t, patterns):
    """All single compression steps from ``t`` (redex must be lambda-free)."""
    for path, s, body in _positions(t):
        if s.head == TUPLE or _has_app(s):
            continue
        at_body_root = bool(path) and path[-1] == ("b",)
        for p in patterns:
            sigma = match(s, p)
            if sigma is None:
                continue
            xs = variables(p)
            if at_body_root and all(isinstance(sigma[x], Var) for x in xs) and \
                    len({sigma[x] for x in xs}) == len(xs):
                # only renames the body: loops forever, never helps
                continue
            params = tuple(Var(i) for i in range(len(xs)))
            lam_body = substitute(p, dict(zip(xs, params)))
            yield p, sigma, _replace(t, path, App(params, lam_body, [sigma[x] for x in xs]))


def optimal_compression_terms(t, patterns: Sequence, budget: Optional[OracleBudget] = None):
    """Smallest compressed term reachable from ``t`` by compression steps."""
    budget = budget or OracleBudget()
    pats = [canonicalize(getattr(p, "pattern", p)) for p in patterns]
    if len(pats) > budget.max_candidates:
        raise OracleRefusal("too many patterns")
    start = time.monotonic()
    best, best_size = t, size(t)
    seen = {t}
    todo = [t]
    while todo:
        cur = todo.pop()
        for _, _, nxt in kappa_steps(cur, pats):
            if nxt in seen:
                continue
            seen.add(nxt)
            if len(seen) > budget.max_states:
                raise OracleRefusal("state budget exceeded")
            if time.monotonic() - start > budget.max_seconds:
                raise OracleRefusal("time budget exceeded")
            s = compressed_size(nxt)
            if s < best_size or (s == best_size and to_sexpr(nxt) < to_sexpr(best)):
                best, best_size = nxt, s
            todo.append(nxt)
    return best


# -- equivalence modulo rules ---------------------------------------------------------------


def denotation_equal_modulo(t1, t2, rules, limits: Optional[Limits] = None,
                            g: Optional[EGraph] = None) -> Optional[bool]:
    """True/False when decided; None when saturation stopped at a limit."""
    g = EGraph() if g is None else g.copy()
    a = g.add_term(t1)
    b = g.add_term(t2)
    if g.find(a) == g.find(b):
        return True
    report = g.eqsat(rules, limits or Limits(max_iterations=30))
    if g.find(a) == g.find(b):
        return True
    return False if report.saturated else None
