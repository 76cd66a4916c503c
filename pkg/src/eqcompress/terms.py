"""Terms, patterns, compressed terms and the pattern cost model.

A single ``Term`` class covers ground terms, patterns (terms whose leaves may
be ``Var``) and the constructor layer of compressed terms (whose children may
also be ``App`` nodes).  The variadic tuple constructor ``list`` is used to
hold a corpus and contributes nothing to sizes.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Dict, Iterator, List, Optional, Tuple, Union

TUPLE = "list"


class Var:
    """A pattern variable.

    ``key`` is an ``int`` for canonical variables (printed ``?x0``), a ``str``
    for user-named ones (``?foo``) or an ``(a, b)`` e-class pair produced by
    e-graph anti-unification.
    """

    __slots__ = ("key", "_hash")

    def __init__(self, key):
        self.key = key
        self._hash = hash(("?", key))

    def __eq__(self, other):
        return isinstance(other, Var) and self.key == other.key

    def __hash__(self):
        return self._hash

    def sort_key(self):
        k = self.key
        if isinstance(k, int):
            return (0, k, "")
        if isinstance(k, str):
            return (1, 0, k)
        return (2, 0, repr(k))

    def __lt__(self, other):
        return self.sort_key() < other.sort_key()

    @property
    def name(self) -> str:
        k = self.key
        if isinstance(k, int):
            return f"?x{k}"
        if isinstance(k, str):
            return f"?{k}"
        return "?x" + "_".join(str(i) for i in k)

    def __repr__(self):
        return self.name


class Term:
    """Constructor application ``head(children...)``; immutable, hash cached."""

    __slots__ = ("head", "children", "_hash", "_size", "_vars")

    def __init__(self, head: str, children=()):
        self.head = head
        self.children = tuple(children)
        self._hash = hash((head, self.children))
        self._size = None
        self._vars = None

    def __eq__(self, other):
        if self is other:
            return True
        if not isinstance(other, Term) or self._hash != other._hash:
            return False
        return self.head == other.head and self.children == other.children

    def __hash__(self):
        return self._hash

    def __repr__(self):
        return to_sexpr(self)

    @property
    def arity(self) -> int:
        return len(self.children)


class App:
    """Fully applied lambda ``(λ params → body) args``.

    ``body`` is closed over ``params``; only ``args`` are touched by
    substitution.
    """

    __slots__ = ("params", "body", "args", "_hash")

    def __init__(self, params, body, args):
        self.params = tuple(params)
        self.body = body
        self.args = tuple(args)
        if len(self.params) != len(self.args):
            raise ValueError("application must be fully applied")
        self._hash = hash(("λ", self.params, body, self.args))

    def __eq__(self, other):
        return (
            isinstance(other, App)
            and self._hash == other._hash
            and self.params == other.params
            and self.body == other.body
            and self.args == other.args
        )

    def __hash__(self):
        return self._hash

    def __repr__(self):
        return to_sexpr(self)


Pattern = Union[Term, Var]
Compressed = Union[Term, Var, App]
Substitution = Dict[Var, Compressed]


@dataclass(frozen=True)
class RewriteRule:
    lhs: Pattern
    rhs: Compressed
    bidirectional: bool = False
    name: str = ""

    def __post_init__(self):
        missing = set(variables(self.rhs)) - set(variables(self.lhs))
        if missing:
            raise ValueError(f"rhs variables {sorted(missing)} not bound by lhs")

    def directed(self) -> List["RewriteRule"]:
        """Split a bidirectional rule into its one-way halves."""
        if not self.bidirectional:
            return [self]
        rules = [RewriteRule(self.lhs, self.rhs, False, self.name)]
        if set(variables(self.lhs)) <= set(variables(self.rhs)):
            rules.append(RewriteRule(self.rhs, self.lhs, False, self.name + "-rev"))
        else:
            raise ValueError("reverse direction of rule binds unknown variables")
        return rules


_CANON_VAR = re.compile(r"\?x(\d+)$")


def var_from_name(name: str) -> Var:
    """Inverse of ``Var.name`` for canonical and user-named variables."""
    m = _CANON_VAR.match(name)
    return Var(int(m.group(1))) if m else Var(name[1:])


def T(head: str, *children) -> Term:
    return Term(head, children)


# -- traversal -----------------------------------------------------------------


def variables(p) -> Tuple[Var, ...]:
    """Distinct free variables in leftmost-outermost first-occurrence order."""
    if isinstance(p, Var):
        return (p,)
    if isinstance(p, Term):
        if p._vars is None:
            seen: Dict[Var, None] = {}
            for c in p.children:
                for v in variables(c):
                    seen.setdefault(v)
            p._vars = tuple(seen)
        return p._vars
    if isinstance(p, App):
        seen = {}
        for a in p.args:
            for v in variables(a):
                seen.setdefault(v)
        return tuple(seen)
    return ()


def occurrences(p, v: Var) -> int:
    if isinstance(p, Var):
        return int(p == v)
    if isinstance(p, Term):
        return sum(occurrences(c, v) for c in p.children)
    if isinstance(p, App):
        return sum(occurrences(a, v) for a in p.args)
    return 0


def is_linear(p) -> bool:
    return all(occurrences(p, v) == 1 for v in variables(p))


def subterms(t) -> Iterator:
    """Pre-order walk over subterm occurrences (bodies of ``App`` excluded)."""
    stack = [t]
    while stack:
        x = stack.pop()
        yield x
        if isinstance(x, Term):
            stack.extend(reversed(x.children))
        elif isinstance(x, App):
            stack.extend(reversed(x.args))


# -- sizes -------------------------------------------------------------------------


def size(t) -> int:
    """AST size; variables count 1, the tuple constructor 0.

    For compressed terms this is the sharing-aware size, see
    :func:`compressed_size`.
    """
    if isinstance(t, Var):
        return 1
    if isinstance(t, Term):
        n = _plain_size(t)
        return compressed_size(t) if n < 0 else n
    if isinstance(t, App):
        return compressed_size(t)
    if isinstance(t, int):
        # e-class leaf in a partial term
        return 1
    raise TypeError(f"not a term: {t!r}")


def _plain_size(t: Term) -> int:
    # cached size of a lambda-free term, -1 when an application occurs below
    if t._size is None:
        n = 0 if t.head == TUPLE else 1
        for c in t.children:
            if isinstance(c, Term):
                k = _plain_size(c)
            elif isinstance(c, App):
                k = -1
            else:
                k = 1
            if k < 0:
                n = -1
                break
            n += k
        t._size = n
    return t._size


def local_size(t) -> int:
    """Size with every application costing 1 plus its arguments, bodies excluded."""
    if isinstance(t, Var):
        return 1
    if isinstance(t, Term):
        own = 0 if t.head == TUPLE else 1
        return own + sum(local_size(c) for c in t.children)
    if isinstance(t, App):
        return 1 + sum(local_size(a) for a in t.args)
    return 1


def body_key(app: App):
    """Identity of a lambda up to renaming of its binders."""
    ren = {p: Var(i) for i, p in enumerate(app.params)}
    return (len(app.params), _rename_free(app.body, ren))


def _rename_free(t, ren):
    if isinstance(t, Var):
        return ren.get(t, t)
    if isinstance(t, Term):
        return Term(t.head, (_rename_free(c, ren) for c in t.children))
    if isinstance(t, App):
        return App(t.params, t.body, (_rename_free(a, ren) for a in t.args))
    return t


def lambdas(t) -> Dict[tuple, App]:
    """All distinct lambdas reachable from ``t``, including inside other bodies."""
    found: Dict[tuple, App] = {}
    stack = [t]
    while stack:
        x = stack.pop()
        if isinstance(x, Term):
            stack.extend(x.children)
        elif isinstance(x, App):
            stack.extend(x.args)
            k = body_key(x)
            if k not in found:
                found[k] = x
                stack.append(x.body)
    return found


def compressed_size(t) -> int:
    """Sharing-aware size: each distinct lambda body is charged once.

    An application costs 1 plus the size of its arguments.
    """
    return local_size(t) + sum(local_size(a.body) for a in lambdas(t).values())


# -- substitution, matching, anti-unification ---------------------------------------


def substitute(p, sigma: Substitution):
    if isinstance(p, Var):
        return sigma.get(p, p)
    if isinstance(p, Term):
        if not p.children:
            return p
        return Term(p.head, (substitute(c, sigma) for c in p.children))
    if isinstance(p, App):
        return App(p.params, p.body, (substitute(a, sigma) for a in p.args))
    return p


def match(target, p, sigma: Optional[Substitution] = None) -> Optional[Substitution]:
    """Return ``σ`` with ``σ(p) == target`` or ``None``.

    Variables of ``target`` are treated as constants.
    """
    sigma = {} if sigma is None else dict(sigma)
    stack = [(target, p)]
    while stack:
        t, q = stack.pop()
        if isinstance(q, Var):
            bound = sigma.get(q)
            if bound is None:
                sigma[q] = t
            elif bound != t:
                return None
        elif isinstance(q, Term):
            if (
                not isinstance(t, Term)
                or t.head != q.head
                or len(t.children) != len(q.children)
            ):
                return None
            stack.extend(zip(t.children, q.children))
        elif q != t:
            return None
    return sigma


def matches(target, p) -> bool:
    return match(target, p) is not None


def canonicalize(p):
    """Rename variables to ``?x0, ?x1, ...`` in first-occurrence order."""
    ren = {v: Var(i) for i, v in enumerate(variables(p))}
    if all(k == v for k, v in ren.items()):
        return p
    return substitute(p, ren)


def join(p1, p2):
    """Least general generalisation of two patterns, canonically named."""
    anti: Dict[tuple, Var] = {}

    def go(a, b):
        if a == b:
            return a
        if (
            isinstance(a, Term)
            and isinstance(b, Term)
            and a.head == b.head
            and a.head != TUPLE
            and len(a.children) == len(b.children)
        ):
            return Term(a.head, (go(x, y) for x, y in zip(a.children, b.children)))
        v = anti.get((a, b))
        if v is None:
            v = anti[(a, b)] = Var(("\0au", len(anti)))
        return v

    # variables shared with the inputs must not collide with fresh ones
    return canonicalize(go(p1, p2))


def equivalent(p1, p2) -> bool:
    """Equality up to variable renaming."""
    return canonicalize(p1) == canonicalize(p2)


def more_general(p, q) -> bool:
    """``q ⊑ p``: ``p`` matches ``q``."""
    return match(q, p) is not None


# -- compression rules and evaluation ------------------------------------------------


def kappa(p) -> RewriteRule:
    """Compression rule ``p => (λ vars(p) → p) vars(p)``."""
    xs = variables(p)
    return RewriteRule(p, App(xs, p, xs), name=f"kappa {to_sexpr(p)}")


def rewrite(rule: RewriteRule, t):
    """Apply ``rule`` at the root of ``t``; ``None`` when it does not match."""
    sigma = match(t, rule.lhs)
    if sigma is None:
        return None
    return substitute(rule.rhs, sigma)


def beta(app: App):
    return substitute(app.body, dict(zip(app.params, app.args)))


def evaluate(t, steps: Optional[List[int]] = None):
    """Applicative-order normal form (innermost redexes first).

    ``steps``, when given, is a one-element counter of β-steps taken.
    """
    if isinstance(t, Term):
        if not t.children:
            return t
        return Term(t.head, (evaluate(c, steps) for c in t.children))
    if isinstance(t, App):
        args = [evaluate(a, steps) for a in t.args]
        body = evaluate(t.body, steps)
        if steps is not None:
            steps[0] += 1
        return substitute(body, dict(zip(t.params, args)))
    return t


# -- cost model -------------------------------------------------------------------------


def _check_domain(p, sigma):
    missing = [v for v in variables(p) if v not in sigma]
    if missing:
        raise KeyError(f"substitution misses variables {missing}")


def use_cost(p, sigma: Substitution) -> int:
    _check_domain(p, sigma)
    return 1 + sum(local_size(sigma[v]) for v in variables(p))


def save_cost(p, sigma: Substitution) -> int:
    _check_domain(p, sigma)
    return local_size(substitute(p, sigma))


def pattern_cost(p, sigmas) -> int:
    return size(p) + sum(use_cost(p, s) - save_cost(p, s) for s in sigmas)


def skeleton(p) -> int:
    return size(p) - len(variables(p))


def is_trivial(p) -> bool:
    return is_linear(p) and skeleton(p) <= 1


def pairwise_joins(t) -> set:
    """Joins of every pair of distinct subterm positions, trivial ones dropped."""
    subs = [s for s in subterms(t) if not (isinstance(s, Term) and s.head == TUPLE)]
    by_head: Dict[tuple, List] = {}
    for s in subs:
        if isinstance(s, Term):
            by_head.setdefault((s.head, len(s.children)), []).append(s)
    out = set()
    for group in by_head.values():
        for i in range(len(group)):
            for j in range(i + 1, len(group)):
                p = join(group[i], group[j])
                if not is_trivial(p):
                    out.add(p)
    return out


# -- printing --------------------------------------------------------------------------


def to_sexpr(t) -> str:
    if isinstance(t, Var):
        return t.name
    if isinstance(t, int):
        return f"#{t}"
    if isinstance(t, Term):
        if not t.children and t.head != TUPLE:
            return t.head
        return "(" + " ".join([t.head] + [to_sexpr(c) for c in t.children]) + ")"
    if isinstance(t, App):
        params = "(" + " ".join(v.name for v in t.params) + ")"
        parts = [f"(lambda {params} {to_sexpr(t.body)})"] + [to_sexpr(a) for a in t.args]
        return "(apply " + " ".join(parts) + ")"
    raise TypeError(f"not a term: {t!r}")
