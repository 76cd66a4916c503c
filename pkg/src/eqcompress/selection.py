"""Library selection by cost-set propagation over the e-graph.

Every candidate pattern becomes a compression rule.  After those rules have
been applied, each e-class carries a cost set: pairs of a library (a bitmask
over candidate functions) and the smallest size of a term of that class using
only functions from the library, with lambda bodies not counted.  The library
that minimises use cost plus definition sizes at the root is selected and the
corresponding term is extracted with its definitions floated to the top.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple

from .candidates import Candidate
from .egraph import APPLY, EGraph, Limits, SaturationReport, Unextractable, is_var_head
from .sexpr import Definition, to_lib_sexpr
from .terms import (
    TUPLE, App, Term, Var, canonicalize, kappa, size, skeleton, to_sexpr, var_from_name, variables,
)

CostSet = Dict[int, int]  # library bitmask -> use cost


def bits(mask: int) -> Tuple[int, ...]:
    out = []
    while mask:
        low = mask & -mask
        out.append(low.bit_length() - 1)
        mask ^= low
    return tuple(out)


popcount = int.bit_count


def rank(pattern) -> tuple:
    """Order in which functions may be defined in terms of each other."""
    return (skeleton(pattern), -len(variables(pattern)), size(pattern), to_sexpr(pattern))


@dataclass
class LibFn:
    index: int
    pattern: object
    body: int  # e-class of the lambda body

    @property
    def arity(self) -> int:
        return len(variables(self.pattern))

    @property
    def below(self) -> int:
        """Functions this one may use in its own definition."""
        return (1 << self.index) - 1


@dataclass
class LibGraph:
    g: EGraph
    fns: List[LibFn]
    fn_of_class: Dict[int, int]
    report: Optional[SaturationReport] = None

    def fn_at(self, body_class: int) -> Optional[LibFn]:
        i = self.fn_of_class.get(self.g.find(body_class))
        return None if i is None else self.fns[i]


def apply_lib_rules(g: EGraph, cands: Sequence, limits: Optional[Limits] = None) -> LibGraph:
    """Copy ``g`` and saturate it with the compression rule of every candidate.

    Lambda bodies live in the graph, so rules also fire inside them.
    """
    patterns = [c.pattern if isinstance(c, Candidate) else c for c in cands]
    # bodies are stored with parameters renamed in order, so look them up that way
    patterns = sorted({canonicalize(p) for p in patterns}, key=rank)
    g2 = g.copy()
    limits = limits or Limits(max_iterations=50)
    report = g2.eqsat([kappa(p) for p in patterns], limits) if patterns else None
    fns: List[LibFn] = []
    fn_of_class: Dict[int, int] = {}
    for p in patterns:
        body = g2.lookup(p)
        if body is None:
            body = g2.add_term(p)
            g2.rebuild()
        body = g2.find(body)
        if body in fn_of_class:
            continue
        fn_of_class[body] = len(fns)
        fns.append(LibFn(len(fns), p, body))
    return LibGraph(g2, fns, fn_of_class, report)


# -- cost set operations --------------------------------------------------------------


def reduce(cs: CostSet) -> CostSet:
    """Drop (L2, u2) whenever another entry (L1, u1) has L1 ⊆ L2 and u1 <= u2."""
    if len(cs) <= 1:
        return dict(cs)
    kept: List[int] = []
    out: CostSet = {}
    for mask, u in sorted(cs.items(), key=lambda e: (e[1], popcount(e[0]), e[0])):
        for k in kept:
            if k & mask == k:
                break
        else:
            kept.append(mask)
            out[mask] = u
    return out


def prune(cs: CostSet, N: Optional[int], K: Optional[int],
          lib_size: Callable[[int], int] = lambda m: 0) -> CostSet:
    """Keep libraries of at most ``N`` functions, then the best ``K`` by total cost.

    The empty library is never evicted: when it falls outside the best ``K``
    it takes the place of the worst survivor, so every extractable class
    keeps a library-free entry.
    """
    if N is not None:
        cs = {m: u for m, u in cs.items() if popcount(m) <= N}
    if K is None or len(cs) <= K:
        return cs
    ranked = sorted(cs.items(), key=lambda e: (e[1] + lib_size(e[0]), popcount(e[0]), e[0]))
    return _keep_empty(dict(ranked[:K]), cs)


def _keep_empty(out: CostSet, full: CostSet) -> CostSet:
    if 0 in full and 0 not in out and out:
        out.pop(next(reversed(out)))
        out[0] = full[0]
    return out


def _union_min(dst: CostSet, src: Iterable[Tuple[int, int]]) -> None:
    for m, u in src:
        old = dst.get(m)
        if old is None or u < old:
            dst[m] = u


@dataclass
class CostSetConfig:
    N: Optional[int] = 3
    K: Optional[int] = 100
    use_reduce: bool = True
    max_passes: int = 100
    estimate_rounds: int = 3


class CostSets:
    """Least-fixpoint cost sets for the classes reachable from the root and bodies."""

    def __init__(self, lg: LibGraph, config: CostSetConfig):
        self.lg = lg
        self.g = lg.g
        self.cfg = config
        self.sets: Dict[int, CostSet] = {}
        self.est: List[int] = [size(f.pattern) for f in lg.fns]
        self.passes = 0
        self.converged = False
        self._lib_cache: Dict[int, int] = {}

    # helpers shared by nodes and classes
    def _norm(self, cs: CostSet, bounded: bool = False) -> CostSet:
        """reduce then prune; ``bounded`` says every library already fits N."""
        N, K = self.cfg.N, self.cfg.K
        if N is not None and not bounded:
            cs = {m: u for m, u in cs.items() if popcount(m) <= N}
        if not self.cfg.use_reduce:
            return prune(cs, None, K, self.lib_size)
        if len(cs) <= 1:
            return cs
        # Same result as prune(reduce(cs)): a dominating entry is a subset with
        # no larger use and so never has a larger total, which means it is
        # always met first in total order and the scan can stop after K.
        ls, cache = self.lib_size, self._lib_cache
        ranked = sorted([(u + (cache.get(m) or ls(m)), m.bit_count(), m, u) for m, u in cs.items()])
        kept: List[Tuple[int, int]] = []
        out: CostSet = {}
        for _, _, mask, u in ranked:
            for k, ku in kept:
                if ku <= u and k & mask == k:
                    break
            else:
                kept.append((mask, u))
                out[mask] = u
                if K is not None and len(out) >= K:
                    break
        return _keep_empty(out, cs)

    def lib_size(self, mask: int) -> int:
        hit = self._lib_cache.get(mask)
        if hit is None:
            hit = self._lib_cache[mask] = sum(self.est[i] for i in bits(mask))
        return hit

    def cross(self, z1: CostSet, z2: CostSet) -> CostSet:
        if len(z1) == 1 and 0 in z1:
            u0 = z1[0]
            return {m: u + u0 for m, u in z2.items()}
        if len(z2) == 1 and 0 in z2:
            u0 = z2[0]
            return {m: u + u0 for m, u in z1.items()}
        N = self.cfg.N
        out: CostSet = {}
        get = out.get
        if N is None:
            for m1, u1 in z1.items():
                for m2, u2 in z2.items():
                    m = m1 | m2
                    u = u1 + u2
                    old = get(m)
                    if old is None or u < old:
                        out[m] = u
            return self._norm(out)
        # only pairs whose union stays within N: either small enough that any
        # union fits, or sharing a function with the left mask
        by_count: Dict[int, List[Tuple[int, int]]] = {}
        by_bit: Dict[int, List[Tuple[int, int, int]]] = {}
        for m2, u2 in z2.items():
            p2 = popcount(m2)
            by_count.setdefault(p2, []).append((m2, u2))
            for b in bits(m2):
                by_bit.setdefault(b, []).append((m2, u2, p2))
        for m1, u1 in z1.items():
            p1 = popcount(m1)
            room = N - p1
            if room < 0:
                continue
            for p2, entries in by_count.items():
                if p2 > room:
                    continue
                for m2, u2 in entries:
                    m = m1 | m2
                    u = u1 + u2
                    old = get(m)
                    if old is None or u < old:
                        out[m] = u
            for b in bits(m1):
                for m2, u2, p2 in by_bit.get(b, ()):
                    if p2 <= room:
                        continue
                    m = m1 | m2
                    if popcount(m) > N:
                        continue
                    u = u1 + u2
                    old = get(m)
                    if old is None or u < old:
                        out[m] = u
        return self._norm(out, bounded=True)

    def node_set(self, node) -> CostSet:
        head, kids = node
        get = self.sets.get
        if head == APPLY:
            fn = self.lg.fn_at(kids[0])
            if fn is None:
                return {}
            body = get(self.g.find(kids[0]), {})
            bit = 1 << fn.index
            N = self.cfg.N
            # the application's use cost ignores the body; its libraries are
            # those the body may be written with, plus the function itself
            libs = {m | bit: 0 for m in body
                    if m & ~fn.below == 0 and (N is None or popcount(m | bit) <= N)}
            if not libs:
                return {}
            acc: CostSet = {0: 1}
            for k in kids[1:]:
                acc = self.cross(acc, get(self.g.find(k), {}))
                if not acc:
                    return {}
            return self.cross(libs, acc)
        if not kids:
            return {0: 1}
        acc = {0: 0 if head == TUPLE else 1}
        for k in kids:
            acc = self.cross(acc, get(self.g.find(k), {}))
            if not acc:
                return {}
        return acc

    def class_set(self, c: int) -> CostSet:
        out: CostSet = {}
        for node in self.g.nodes(c):
            _union_min(out, self.node_set(node).items())
        return self._norm(out, bounded=True)

    def order(self) -> List[int]:
        """Post-order over classes reachable from the root and all bodies."""
        g = self.g
        starts = [g.find(f.body) for f in self.lg.fns] + [g.find(g.root)]
        seen = set()
        out: List[int] = []
        for s in starts:
            if s in seen:
                continue
            seen.add(s)
            stack = [(s, iter(sorted({g.find(k) for _, ks in g.classes[s] for k in ks})))]
            while stack:
                c, it = stack[-1]
                nxt = next(it, None)
                if nxt is None:
                    stack.pop()
                    out.append(c)
                elif nxt not in seen:
                    seen.add(nxt)
                    stack.append((nxt, iter(sorted({g.find(k) for _, ks in g.classes[nxt]
                                                    for k in ks}))))
        return out

    def refresh_estimates(self) -> None:
        """Definition size of each function, helpers included, from its body set."""
        for f in self.lg.fns:  # index order: helpers are refreshed first
            body = self.sets.get(self.g.find(f.body), {})
            own = [u + sum(self.est[i] for i in bits(m)) for m, u in body.items()
                   if m & ~f.below == 0]
            self.est[f.index] = min(own) if own else size(f.pattern)

    def _propagate(self, order: List[int], users: Dict[int, set]) -> bool:
        """Worklist passes in post-order until nothing changes; False on the pass cap."""
        dirty = set(order)
        while dirty:
            if self.passes >= self.cfg.max_passes:
                return False
            self.passes += 1
            for c in order:
                if c not in dirty:
                    continue
                dirty.discard(c)
                new = self.class_set(c)
                if new != self.sets.get(c):
                    self.sets[c] = new
                    dirty.update(users.get(c, ()))
        return True

    def run(self) -> "CostSets":
        order = self.order()
        g = self.g
        users: Dict[int, set] = {c: set() for c in order}
        for c in order:
            for _, kids in g.classes[c]:
                for k in kids:
                    users.setdefault(g.find(k), set()).add(c)
        # Library-size estimates only steer pruning.  Re-run propagation with
        # refreshed estimates a bounded number of times.
        for _ in range(self.cfg.estimate_rounds):
            done = self._propagate(order, users)
            before = list(self.est)
            self.refresh_estimates()
            self._lib_cache.clear()
            if not done:
                break
            if self.est == before:
                self.converged = True
                break
        else:
            self.converged = True
        return self

    def at(self, c: int) -> CostSet:
        return self.sets.get(self.g.find(c), {})


def cost_sets(lg: LibGraph, N: Optional[int] = 3, K: Optional[int] = 100,
              use_reduce: bool = True) -> CostSets:
    return CostSets(lg, CostSetConfig(N, K, use_reduce)).run()


# -- exact restricted extraction --------------------------------------------------------


def local_cost(head: str, child_costs: Sequence[float]) -> float:
    if head == APPLY:
        return 1 + sum(child_costs[1:])
    return (0 if head == TUPLE else 1) + sum(child_costs)


def restricted_choices(lg: LibGraph, allowed: int):
    """Cheapest terms when only functions in ``allowed`` may be applied."""

    def ok(cid, node):
        if node[0] != APPLY:
            return True
        fn = lg.fn_at(node[1][0])
        return fn is not None and (allowed >> fn.index) & 1 == 1

    return _choices_ignoring_bodies(lg.g, ok)


def _choices_ignoring_bodies(g: EGraph, ok):
    # bodies of applications are priced separately, so a body child need not
    # be extractable for the application to be
    best: Dict[int, Tuple[float, tuple]] = {}
    order_key = lambda n: (len(n[1]), n[0], n[1])
    changed = True
    while changed:
        changed = False
        for cid in g.class_ids():
            cur = best.get(cid)
            for node in g.classes[cid]:
                if not ok(cid, node):
                    continue
                head, kids = node
                args = kids[1:] if head == APPLY else kids
                try:
                    kc = [best[g.find(k)][0] for k in args]
                except KeyError:
                    continue
                c = (0 if head == TUPLE else 1) + sum(kc)
                if cur is None or (c, order_key(node)) < (cur[0], order_key(cur[1])):
                    cur = (c, node)
                    best[cid] = cur
                    changed = True
    return best


def exact_use(lg: LibGraph, c: int, allowed: int, cache=None) -> Optional[int]:
    key = allowed
    if cache is not None and key in cache:
        best = cache[key]
    else:
        best = restricted_choices(lg, allowed)
        if cache is not None:
            cache[key] = best
    hit = best.get(lg.g.find(c))
    return None if hit is None else int(hit[0])


def exact_total(lg: LibGraph, mask: int, cache=None) -> Optional[Tuple[int, int]]:
    """(use cost at the root, library size) for exactly the library ``mask``."""
    cache = {} if cache is None else cache
    use = exact_use(lg, lg.g.root, mask, cache)
    if use is None:
        return None
    lib = 0
    for i in bits(mask):
        f = lg.fns[i]
        d = exact_use(lg, f.body, mask & f.below, cache)
        if d is None:
            return None
        lib += d
    return use, lib


# -- selection ----------------------------------------------------------------------------


@dataclass
class SelectionResult:
    library: Tuple[int, ...]
    use_cost: int
    library_size: int
    root_cost_set_size: int = 0
    candidates_considered: int = 0
    definitions: Dict[int, object] = field(default_factory=dict)

    @property
    def total(self) -> int:
        return self.use_cost + self.library_size


class SelectionError(Exception):
    pass


def _best_def(cs: CostSets, f: LibFn, mask: int) -> Optional[int]:
    allowed = mask & f.below
    body = cs.at(f.body)
    us = [u for m, u in body.items() if m & ~allowed == 0]
    return min(us) if us else None


def helpers(cs: CostSets, mask: int) -> int:
    """Functions that could help define the members of ``mask``, transitively."""
    seen = 0
    todo = list(bits(mask))
    while todo:
        i = todo.pop()
        f = cs.lg.fns[i]
        for m in cs.at(f.body):
            m &= f.below
            new = m & ~seen & ~mask
            if new:
                seen |= new
                todo.extend(bits(new))
    return seen


def select_library(cs: CostSets, N: Optional[int] = 3, max_extensions: int = 4096,
                   exact_fallback: bool = True) -> SelectionResult:
    lg = cs.lg
    root = cs.at(lg.g.root)
    cache: dict = {}
    if not root and not exact_fallback:
        raise SelectionError("root e-class has an empty cost set")
    plain = exact_use(lg, lg.g.root, 0, cache)
    if plain is None and not root:
        raise SelectionError("root e-class is unextractable")

    def evaluate(mask: int) -> Optional[Tuple[int, int]]:
        us = [u for m, u in root.items() if m & ~mask == 0]
        if mask == 0 and plain is not None:
            us.append(plain)
        if not us:
            return None
        lib = 0
        for i in bits(mask):
            d = _best_def(cs, lg.fns[i], mask)
            if d is None:
                d = exact_use(lg, lg.fns[i].body, mask & lg.fns[i].below, cache)
                if d is None:
                    return None
            lib += d
        return min(us), lib

    considered = set()
    best = None
    for m0 in sorted(root, key=lambda m: (root[m], popcount(m), bits(m))) + [0]:
        extra = bits(helpers(cs, m0))
        room = len(extra) if N is None else max(0, N - popcount(m0))
        n_ext = 0
        for r in range(0, min(room, len(extra)) + 1):
            for combo in itertools.combinations(extra, r):
                mask = m0
                for i in combo:
                    mask |= 1 << i
                n_ext += 1
                if mask in considered:
                    continue
                considered.add(mask)
                res = evaluate(mask)
                if res is None:
                    continue
                key = (res[0] + res[1], popcount(mask), bits(mask))
                if best is None or key < best[0]:
                    best = (key, mask, res)
                if n_ext >= max_extensions:
                    break
            if n_ext >= max_extensions:
                break
    if best is None:
        raise SelectionError("no library yields an extractable root")
    _, mask, (use, lib) = best
    return SelectionResult(bits(mask), use, lib, len(root), len(considered))


# -- finalisation -------------------------------------------------------------------------


@dataclass
class Compressed:
    """A compressed corpus: named definitions plus the main term."""

    defs: List[Definition]
    main: object  # Term over named function calls
    inline: object  # the same program with lambda applications in place

    @property
    def size(self) -> int:
        return self.main_size + sum(_local(d.body) for d in self.defs)

    @property
    def main_size(self) -> int:
        return _local(self.main)

    def to_sexpr(self) -> str:
        return to_lib_sexpr(self.defs, self.main)


def _local(t) -> int:
    if isinstance(t, Var):
        return 1
    return (0 if t.head == TUPLE else 1) + sum(_local(c) for c in t.children)


def finalize(g: EGraph, patterns: Sequence, reserved: Iterable[str] = (),
             limits: Optional[Limits] = None) -> Compressed:
    """Re-saturate ``g`` with the chosen rules and extract the smallest program."""
    lg = apply_lib_rules(g, patterns, limits)
    allowed_all = (1 << len(lg.fns)) - 1
    cache: dict = {}
    root_best = cache.setdefault(allowed_all, restricted_choices(lg, allowed_all))
    if lg.g.find(lg.g.root) not in root_best:
        raise Unextractable("root e-class has no finite term")

    used: Dict[int, None] = {}
    bodies: Dict[int, object] = {}

    def build(c: int, best, visiting: frozenset):
        c = lg.g.find(c)
        if c in visiting:
            raise Unextractable(f"cyclic choice at e-class {c}")
        visiting = visiting | {c}
        head, kids = best[c][1]
        if head == APPLY:
            fn = lg.fn_at(kids[0])
            define(fn)
            return ("call", fn.index, tuple(build(k, best, visiting) for k in kids[1:]))
        if is_var_head(head) and not kids:
            return var_from_name(head)
        return Term(head, [build(k, best, visiting) for k in kids])

    def define(fn: LibFn):
        if fn.index in bodies or fn.index in used:
            return
        used[fn.index] = None
        allowed = fn.below
        best = cache.get(allowed)
        if best is None:
            best = cache[allowed] = restricted_choices(lg, allowed)
        bodies[fn.index] = build(fn.body, best, frozenset())

    main_raw = build(lg.g.root, root_best, frozenset())
    order = sorted(bodies)  # lowest rank outermost
    taken = set(reserved)
    names: Dict[int, str] = {}
    k = 0
    for i in order:
        while f"f{k}" in taken:
            k += 1
        names[i] = f"f{k}"
        taken.add(names[i])
        k += 1

    def named(t):
        if isinstance(t, tuple):
            _, i, args = t
            args = [named(a) for a in args]
            return Term(names[i], args)
        if isinstance(t, Term):
            return Term(t.head, [named(c) for c in t.children])
        return t

    lambdas: Dict[int, Tuple[Tuple[Var, ...], object]] = {}

    def inline(t):
        if isinstance(t, tuple):
            _, i, args = t
            params, body = lambdas[i]
            return App(params, body, [inline(a) for a in args])
        if isinstance(t, Term):
            return Term(t.head, [inline(c) for c in t.children])
        return t

    defs = []
    for i in order:
        params = tuple(Var(j) for j in range(lg.fns[i].arity))
        lambdas[i] = (params, inline(bodies[i]))
        defs.append(Definition(names[i], params, named(bodies[i])))
    return Compressed(defs, named(main_raw), inline(main_raw))


# -- trace --------------------------------------------------------------------------------


def selection_trace(rounds: List[dict]) -> str:
    return json.dumps(rounds, indent=1)
