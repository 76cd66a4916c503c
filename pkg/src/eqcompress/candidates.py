"""Candidate abstractions by anti-unifying pairs of e-classes."""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, List, Optional, Set, Tuple

from .egraph import APPLY, EGraph
from .terms import (
    TUPLE, RewriteRule, Term, Var, canonicalize, is_trivial, kappa, size, to_sexpr,
    variables,
)

Pair = Tuple[int, int]


def pair_var(a: int, b: int) -> Var:
    return Var((a, b))


def _vars_of(p) -> FrozenSet:
    return frozenset(variables(p))


def dominant(ps) -> list:
    """Drop every pattern dominated by another one from the same pair.

    ``p1`` dominates ``p2`` when vars(p1) ⊆ vars(p2) and size(p1) <= size(p2);
    among equals the first in a deterministic order survives.
    """
    ordered = sorted(set(ps), key=lambda p: (size(p), len(variables(p)), to_sexpr(p)))
    kept: list = []
    kept_vars: List[FrozenSet] = []
    for p in ordered:
        vs = _vars_of(p)
        if any(kv <= vs for kv in kept_vars):
            continue
        kept.append(p)
        kept_vars.append(vs)
    return kept


class AntiUnifier:
    """E-class anti-unification with cycle cutting and exact memoisation.

    A result computed without ever cutting a cycle is independent of the
    context and is shared freely.  Results that depended on the context are
    cached together with the slice of the context they observed.
    """

    def __init__(self, g: EGraph, max_arity: Optional[int] = 4,
                 prune_dominated: bool = True, memo: bool = True):
        self.g = g
        self.max_arity = max_arity
        self.prune = prune_dominated
        self.use_memo = memo
        self._free: Dict[Pair, list] = {}
        self._ctx: Dict[Pair, List[Tuple[FrozenSet, FrozenSet, list]]] = {}
        self._nodes = {c: sorted(ns, key=lambda n: (n[0], n[1])) for c, ns in g.classes.items()}
        self._heads = {c: {n[0] for n in ns} for c, ns in g.classes.items()}
        self.calls = 0

    def __call__(self, a: int, b: int) -> list:
        res, _, _ = self._au(self.g.find(a), self.g.find(b), [], set())
        return res

    def _au(self, a: int, b: int, stack: List[Pair], on_stack: Set[Pair]):
        """Returns (patterns, reached pairs, whether any cycle was cut)."""
        key = (a, b)
        if key in on_stack:
            return [], frozenset([key]), True
        if self.use_memo:
            hit = self._free.get(key)
            if hit is not None:
                return hit, frozenset(), False
            for reached, seen, res in self._ctx.get(key, ()):
                if frozenset(reached & on_stack) == seen:
                    return res, reached, True
        self.calls += 1
        stack.append(key)
        on_stack.add(key)
        reached: Set[Pair] = {key}
        cut = False
        out = []
        mismatch = False
        for na in self._nodes[a]:
            for nb in self._nodes[b]:
                ha, ka = na
                hb, kb = nb
                if ha != hb or len(ka) != len(kb) or ha == TUPLE or ha == APPLY:
                    mismatch = True
                    continue
                if not ka:
                    out.append(Term(ha))
                    continue
                kid_sets = []
                for x, y in zip(ka, kb):
                    ps, r, c = self._au(x, y, stack, on_stack)
                    reached |= r
                    cut = cut or c
                    if not ps:
                        break
                    kid_sets.append(ps)
                else:
                    for combo in itertools.product(*kid_sets):
                        t = Term(ha, combo)
                        if self.max_arity is not None and len(variables(t)) > self.max_arity:
                            continue
                        out.append(t)
        if mismatch:
            out.append(pair_var(a, b))
        out = dominant(out) if self.prune else sorted(set(out), key=to_sexpr)
        stack.pop()
        on_stack.discard(key)
        if self.use_memo:
            if not cut:
                self._free[key] = out
            else:
                self._ctx.setdefault(key, []).append(
                    (frozenset(reached), frozenset(reached & on_stack), out))
        return out, (frozenset(reached) if cut else frozenset()), cut


def au_classes(g: EGraph, a: int, b: int, max_arity: Optional[int] = None,
               prune_dominated: bool = True, memo: bool = True) -> list:
    return AntiUnifier(g, max_arity, prune_dominated, memo)(a, b)


# -- co-occurrence ---------------------------------------------------------------------


class CoOccurrence:
    """Pairs of classes that can appear together in one represented term."""

    def __init__(self, g: EGraph):
        ids = g.class_ids()
        self.index = {c: i for i, c in enumerate(ids)}
        self.ids = ids
        idx = self.index
        kids: Dict[int, Set[int]] = {c: set() for c in ids}
        sib = {c: 0 for c in ids}
        for c in ids:
            for _, ks in g.classes[c]:
                ks = [g.find(k) for k in ks]
                kids[c].update(ks)
                bits = 0
                for k in ks:
                    bits |= 1 << idx[k]
                for i, k in enumerate(ks):
                    others = bits
                    if ks.count(k) == 1:
                        others &= ~(1 << idx[k])
                    sib[k] |= others
        parents: Dict[int, Set[int]] = {c: set() for c in ids}
        for c, ks in kids.items():
            for k in ks:
                parents[k].add(c)
        self.anc = _closure(ids, parents, idx)
        self.desc = _closure(ids, kids, idx)
        below = {}
        for c in ids:
            bits, out = sib[c], 0
            while bits:
                low = bits & -bits
                out |= self.desc[ids[low.bit_length() - 1]]
                bits ^= low
            below[c] = out
        # D(a): descendants of siblings of any ancestor of a
        self.sib_desc = _propagate(ids, parents, below)

    def __contains__(self, pair: Pair) -> bool:
        a, b = pair
        ia, ib = self.index[a], self.index[b]
        if a == b:
            return True
        if (self.anc[b] >> ia) & 1 or (self.anc[a] >> ib) & 1:
            return True
        return bool((self.sib_desc[a] >> ib) & 1)

    def partners(self, a: int) -> int:
        """Bitset of classes co-occurring with ``a``."""
        return self.anc[a] | self.desc[a] | self.sib_desc[a]


def _closure(ids, edges, idx) -> Dict[int, int]:
    """Reflexive-transitive reachability along ``edges`` as bitsets."""
    reach = {c: 1 << idx[c] for c in ids}
    changed = True
    while changed:
        changed = False
        for c in ids:
            bits = reach[c]
            for e in edges[c]:
                bits |= reach[e]
            if bits != reach[c]:
                reach[c] = bits
                changed = True
    return reach


def _propagate(ids, parents, base) -> Dict[int, int]:
    out = dict(base)
    changed = True
    while changed:
        changed = False
        for c in ids:
            bits = out[c]
            for p in parents[c]:
                bits |= out[p]
            if bits != out[c]:
                out[c] = bits
                changed = True
    return out


def co_occurring(g: EGraph) -> CoOccurrence:
    return CoOccurrence(g)


# -- candidate generation -------------------------------------------------------------


@dataclass
class Candidate:
    pattern: object
    n_matches: int = 0
    n_classes: int = 0
    n_positions: int = 0
    origin_pairs: List[Pair] = field(default_factory=list)
    theta_l: Dict = field(default_factory=dict)
    theta_r: Dict = field(default_factory=dict)

    @property
    def arity(self) -> int:
        return len(variables(self.pattern))

    @property
    def size(self) -> int:
        return size(self.pattern)


def occurrence_counts(g: EGraph) -> Dict[int, int]:
    """Parent-slot references per class, plus one for the root."""
    occ = {c: 0 for c in g.classes}
    for c, nodes in g.classes.items():
        for _, ks in nodes:
            for k in ks:
                occ[g.find(k)] += 1
    if g.root is not None:
        occ[g.find(g.root)] += 1
    return occ


def position_counts(g: EGraph, cap: int = 2) -> Dict[int, int]:
    """Occurrences of each class as a subterm of the root, saturating at ``cap``.

    A class repeated inside a repeated subterm counts once per copy.
    References from a class to itself are ignored so that cycles such as
    ``c = scale(c, 1)`` do not inflate the count.
    """
    refs: Dict[int, List[Tuple[int, int]]] = {c: [] for c in g.classes}
    for c, nodes in g.classes.items():
        for _, ks in nodes:
            for k in set(ks):
                k = g.find(k)
                if k != c:
                    refs[k].append((c, ks.count(k)))
    root = None if g.root is None else g.find(g.root)
    pos = {c: int(c == root) for c in g.classes}
    changed = True
    while changed:
        changed = False
        for c in g.class_ids():
            n = int(c == root) + sum(pos[p] * m for p, m in refs[c])
            n = min(cap, n)
            if n != pos[c]:
                pos[c] = n
                changed = True
    return pos


def generate_candidates(g: EGraph, max_arity: Optional[int] = 4, min_matches: int = 2,
                        prune_dominated: bool = True, memo: bool = True,
                        max_candidates: Optional[int] = None) -> List[Candidate]:
    """Anti-unify every co-occurring pair of classes and keep useful patterns."""
    g.rebuild()
    co = co_occurring(g)
    occ = occurrence_counts(g)
    pos = position_counts(g, max(2, min_matches))
    au = AntiUnifier(g, max_arity, prune_dominated, memo)
    by_head: Dict[str, List[int]] = {}
    for c in g.class_ids():
        for h in {n[0] for n in g.classes[c]}:
            if h not in (TUPLE, APPLY):
                by_head.setdefault(h, []).append(c)
    pairs: Set[Pair] = set()
    for cs in by_head.values():
        for i, a in enumerate(cs):
            if pos[a] >= 2:
                pairs.add((a, a))
            for b in cs[i + 1:]:
                if (a, b) in co:
                    pairs.add((a, b))
    found: Dict[object, Candidate] = {}
    for a, b in sorted(pairs):
        for p in au(a, b):
            if is_trivial(p):
                continue
            vs = variables(p)
            if max_arity is not None and len(vs) > max_arity:
                continue
            ren = {v: Var(i) for i, v in enumerate(vs)}
            q = canonicalize(p)
            cand = found.get(q)
            if cand is None:
                cand = found[q] = Candidate(
                    q,
                    theta_l={ren[v]: v.key[0] for v in vs},
                    theta_r={ren[v]: v.key[1] for v in vs},
                )
            cand.origin_pairs.append((a, b))
    out = []
    for q in sorted(found, key=lambda p: (size(p), to_sexpr(p))):
        cand = found[q]
        hits = {c for c, _ in g.search(q)}
        cand.n_classes = len(hits)
        cand.n_matches = sum(occ[c] for c in hits)
        cand.n_positions = sum(pos[c] for c in hits)
        if cand.n_positions >= min_matches:
            out.append(cand)
    if max_candidates is not None and len(out) > max_candidates:
        out.sort(key=lambda c: (-estimated_saving(c), c.size, to_sexpr(c.pattern)))
        out = sorted(out[:max_candidates], key=lambda c: (c.size, to_sexpr(c.pattern)))
    return out


def estimated_saving(c: Candidate) -> int:
    """Rough benefit of a candidate: per-use skeleton savings minus the definition."""
    skel = c.size - c.arity
    return c.n_matches * (skel - 1) - c.size


def candidates_to_rules(cands) -> List[RewriteRule]:
    return [kappa(c.pattern if isinstance(c, Candidate) else c) for c in cands]


def candidates_json(cands: List[Candidate]) -> str:
    return json.dumps([
        {
            "pattern": to_sexpr(c.pattern),
            "arity": c.arity,
            "size": c.size,
            "n_matches": c.n_matches,
            "n_classes": c.n_classes,
            "origin_pairs": [list(p) for p in c.origin_pairs],
        }
        for c in cands
    ], indent=1)
