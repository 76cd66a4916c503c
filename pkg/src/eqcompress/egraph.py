"""A small e-graph: hash-consing, union-find, deferred congruence repair,
e-matching, equality saturation, bounded denotation and greedy extraction.

E-nodes are ``(head, children)`` tuples of a symbol and canonical class ids.
Lambda applications are stored as nodes with head ``@apply`` whose first
child is the class of the lambda body and whose remaining children are the
arguments.  Bound variables inside bodies are nullary nodes named ``?x0``...
"""

from __future__ import annotations

import itertools
import json
import time
from dataclasses import dataclass
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Set, Tuple

from .terms import TUPLE, App, RewriteRule, Term, Var, substitute, var_from_name

APPLY = "@apply"

ENode = Tuple[str, Tuple[int, ...]]


class StaleId(KeyError):
    pass


class Unextractable(ValueError):
    pass


@dataclass
class Limits:
    max_iterations: int = 10
    max_nodes: int = 100_000
    max_seconds: float = 30.0


@dataclass
class SaturationReport:
    iterations: int
    node_count: int
    saturated: bool
    stop_reason: str
    seconds: float = 0.0


def is_var_head(head: str) -> bool:
    return head.startswith("?")


def ast_cost(head: str, child_costs: Sequence[float]) -> float:
    return (0 if head == TUPLE else 1) + sum(child_costs)


class EGraph:
    def __init__(self):
        self._uf: List[int] = []
        self.classes: Dict[int, Set[ENode]] = {}
        self.parents: Dict[int, List[Tuple[ENode, int]]] = {}
        self.memo: Dict[ENode, int] = {}
        self.pending: List[int] = []
        self.root: Optional[int] = None
        self.unions = 0

    # -- union-find --------------------------------------------------------------

    def find(self, a: int) -> int:
        uf = self._uf
        r = a
        while uf[r] != r:
            r = uf[r]
        while uf[a] != r:
            uf[a], a = r, uf[a]
        return r

    def canonical(self, node: ENode) -> ENode:
        head, kids = node
        return (head, tuple(self.find(c) for c in kids))

    def _live(self, a: int) -> int:
        if not isinstance(a, int) or a < 0 or a >= len(self._uf):
            raise StaleId(f"unknown e-class id {a!r}")
        return self.find(a)

    # -- construction ----------------------------------------------------------------

    def add_node(self, head: str, children: Sequence[int] = ()) -> int:
        node = (head, tuple(self.find(c) for c in children))
        hit = self.memo.get(node)
        if hit is not None:
            return self.find(hit)
        cid = len(self._uf)
        self._uf.append(cid)
        self.classes[cid] = {node}
        self.parents[cid] = []
        self.memo[node] = cid
        for c in set(node[1]):
            self.parents[c].append((node, cid))
        return cid

    def add_term(self, t) -> int:
        """Add a term, pattern or compressed term; int leaves are class ids."""
        if isinstance(t, int):
            return self._live(t)
        if isinstance(t, Var):
            return self.add_node(t.name)
        if isinstance(t, Term):
            return self.add_node(t.head, [self.add_term(c) for c in t.children])
        if isinstance(t, App):
            ren = {p: Var(i) for i, p in enumerate(t.params)}
            body = self.add_term(substitute(t.body, ren) if any(
                p != Var(i) for i, p in enumerate(t.params)) else t.body)
            return self.add_node(APPLY, [body] + [self.add_term(a) for a in t.args])
        raise TypeError(f"cannot add {t!r}")

    def merge(self, a: int, b: int) -> int:
        a, b = self.find(a), self.find(b)
        if a == b:
            return a
        if b < a:
            a, b = b, a
        self._uf[b] = a
        self.unions += 1
        self.classes[a] |= self.classes.pop(b)
        self.parents[a].extend(self.parents.pop(b))
        self.pending.append(a)
        return a

    def rebuild(self) -> None:
        while self.pending:
            todo = {self.find(c) for c in self.pending}
            self.pending = []
            for c in todo:
                self._repair(self.find(c))
        for cid, nodes in self.classes.items():
            self.classes[cid] = {self.canonical(n) for n in nodes}

    def _repair(self, c: int) -> None:
        fresh: Dict[ENode, int] = {}
        for node, pc in self.parents[c]:
            self.memo.pop(node, None)
            node = self.canonical(node)
            pc = self.find(pc)
            other = self.memo.get(node)
            if other is not None and self.find(other) != pc:
                pc = self.merge(other, pc)
            self.memo[node] = pc
            fresh[node] = pc
        c = self.find(c)
        self.parents[c] = [(n, self.find(p)) for n, p in fresh.items()]

    # -- queries -------------------------------------------------------------------------

    @property
    def node_count(self) -> int:
        return sum(len(n) for n in self.classes.values())

    def class_ids(self) -> List[int]:
        return sorted(self.classes)

    def nodes(self, a: int) -> List[ENode]:
        return sorted(self.classes[self.find(a)], key=_node_order)

    def lookup(self, t) -> Optional[int]:
        """Class of ``t`` if it is already represented, without adding it."""
        if isinstance(t, int):
            return self.find(t)
        if isinstance(t, Var):
            hit = self.memo.get((t.name, ()))
        elif isinstance(t, Term):
            kids = []
            for c in t.children:
                k = self.lookup(c)
                if k is None:
                    return None
                kids.append(k)
            hit = self.memo.get((t.head, tuple(kids)))
        else:
            return None
        return None if hit is None else self.find(hit)

    def copy(self) -> "EGraph":
        g = EGraph()
        g._uf = list(self._uf)
        g.classes = {k: set(v) for k, v in self.classes.items()}
        g.parents = {k: list(v) for k, v in self.parents.items()}
        g.memo = dict(self.memo)
        g.pending = list(self.pending)
        g.root = self.root
        g.unions = self.unions
        return g

    def check_congruence(self) -> bool:
        """No two distinct classes hold the same canonical node."""
        seen: Dict[ENode, int] = {}
        for cid, nodes in self.classes.items():
            for n in nodes:
                n = self.canonical(n)
                if seen.setdefault(n, cid) != cid:
                    return False
        return True

    def to_json(self) -> str:
        return json.dumps({
            "classes": [
                {"id": cid, "nodes": [{"op": h, "children": list(k)} for h, k in self.nodes(cid)]}
                for cid in self.class_ids()
            ],
            "root": None if self.root is None else self.find(self.root),
        }, indent=1)

    # -- e-matching --------------------------------------------------------------------

    def ematch(self, p, a: int) -> List[Dict[Var, int]]:
        """All class substitutions θ with θ(p) represented in class ``a``."""
        out = []
        seen = set()
        for s in self._match(p, self.find(a), {}):
            key = tuple(sorted((v.sort_key(), c) for v, c in s.items()))
            if key not in seen:
                seen.add(key)
                out.append(s)
        return out

    def _match(self, p, cid: int, subst: Dict[Var, int]):
        if isinstance(p, Var):
            bound = subst.get(p)
            if bound is None:
                s = dict(subst)
                s[p] = cid
                yield s
            elif self.find(bound) == cid:
                yield subst
            return
        if isinstance(p, int):
            if self.find(p) == cid:
                yield subst
            return
        if not isinstance(p, Term):
            return
        n = len(p.children)
        for head, kids in self.classes[cid]:
            if head == p.head and len(kids) == n:
                yield from self._match_children(p.children, kids, 0, subst)

    def _match_children(self, pats, kids, i, subst):
        if i == len(pats):
            yield subst
            return
        for s in self._match(pats[i], self.find(kids[i]), subst):
            yield from self._match_children(pats, kids, i + 1, s)

    def head_index(self) -> Dict[Tuple[str, int], List[int]]:
        index: Dict[Tuple[str, int], List[int]] = {}
        for c in self.class_ids():
            for key in {(h, len(k)) for h, k in self.classes[c]}:
                index.setdefault(key, []).append(c)
        return index

    def search(self, p, index=None) -> List[Tuple[int, Dict[Var, int]]]:
        """Matches of ``p`` in every class."""
        out = []
        if isinstance(p, Term):
            if index is None:
                n = len(p.children)
                cands = [c for c, nodes in self.classes.items()
                         if any(h == p.head and len(k) == n for h, k in nodes)]
            else:
                cands = index.get((p.head, len(p.children)), [])
        else:
            cands = list(self.classes)
        for c in sorted(cands):
            for s in self.ematch(p, c):
                out.append((c, s))
        return out

    # -- saturation -----------------------------------------------------------------------

    def eqsat(self, rules: Iterable[RewriteRule], limits: Optional[Limits] = None) -> SaturationReport:
        limits = limits or Limits()
        directed = [r for rule in rules for r in rule.directed()]
        start = time.monotonic()
        self.rebuild()
        it = 0
        while True:
            if it >= limits.max_iterations:
                return self._report(it, False, "iterations", start)
            if self.node_count > limits.max_nodes:
                return self._report(it, False, "nodes", start)
            if time.monotonic() - start > limits.max_seconds:
                return self._report(it, False, "time", start)
            it += 1
            before = (self.node_count, self.unions)
            index = self.head_index()
            matches = [(r, self.search(r.lhs, index)) for r in directed]
            for r, found in matches:
                for cid, subst in found:
                    new = self.add_term(substitute(r.rhs, subst))
                    self.merge(cid, new)
                if self.node_count > limits.max_nodes:
                    break
            self.rebuild()
            if (self.node_count, self.unions) == before:
                return self._report(it, True, "saturated", start)

    def _report(self, it, saturated, reason, start) -> SaturationReport:
        return SaturationReport(it, self.node_count, saturated, reason,
                                time.monotonic() - start)

    # -- denotation ------------------------------------------------------------------------

    def denote_bounded(self, a: int, max_count: int = 100, max_depth: int = 2) -> List[Term]:
        """Terms of class ``a``; a class may be revisited at most ``max_depth``
        times along one path and at most ``max_count`` terms are produced per class."""
        visits: Dict[int, int] = {}

        def go(c: int) -> List:
            c = self.find(c)
            k = visits.get(c, 0)
            if k > max_depth:
                return []
            visits[c] = k + 1
            out: List = []
            seen = set()
            for head, kids in self.nodes(c):
                if len(out) >= max_count:
                    break
                if head == APPLY:
                    continue
                opts = []
                for ch in kids:
                    ts = go(ch)
                    if not ts:
                        break
                    opts.append(ts)
                else:
                    for combo in itertools.product(*opts):
                        t = var_from_name(head) if is_var_head(head) and not kids else Term(head, combo)
                        if t not in seen:
                            seen.add(t)
                            out.append(t)
                            if len(out) >= max_count:
                                break
            visits[c] = k
            return out

        return go(a)

    # -- extraction ----------------------------------------------------------------------------

    def best_choices(self, cost: Callable = ast_cost,
                     allowed: Optional[Callable[[int, ENode], bool]] = None):
        """Least-fixpoint table class → (cost, node) under a local cost."""
        best: Dict[int, Tuple[float, ENode]] = {}
        changed = True
        while changed:
            changed = False
            for cid in self.class_ids():
                cur = best.get(cid)
                for node in self.classes[cid]:
                    if allowed is not None and not allowed(cid, node):
                        continue
                    head, kids = node
                    try:
                        kc = [best[self.find(k)][0] for k in kids]
                    except KeyError:
                        continue
                    c = cost(head, kc)
                    if cur is None or (c, _node_order(node)) < (cur[0], _node_order(cur[1])):
                        cur = (c, node)
                        best[cid] = cur
                        changed = True
        return best

    def extract_greedy(self, a: int, cost: Callable = ast_cost):
        best = self.best_choices(cost)
        return self.build(a, best)

    def build(self, a: int, best, building: Optional[Set[int]] = None):
        """Rebuild the term chosen by ``best`` starting at class ``a``."""
        a = self.find(a)
        if a not in best:
            raise Unextractable(f"e-class {a} has no finite term")
        building = set() if building is None else building
        if a in building:
            raise Unextractable(f"cyclic choice at e-class {a}")
        building.add(a)
        head, kids = best[a][1]
        if head == APPLY:
            body = self.build(kids[0], best, building)
            args = [self.build(k, best, building) for k in kids[1:]]
            out = App(tuple(Var(i) for i in range(len(args))), body, args)
        elif is_var_head(head) and not kids:
            out = var_from_name(head)
        else:
            out = Term(head, [self.build(k, best, building) for k in kids])
        building.discard(a)
        return out


def _node_order(node: ENode):
    head, kids = node
    return (len(kids), head, kids)


def from_term(t) -> EGraph:
    g = EGraph()
    g.root = g.add_term(t)
    return g
