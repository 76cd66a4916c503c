import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from eqcompress.sexpr import parse_term
from eqcompress.terms import (
    TUPLE, App, RewriteRule, Term, Var, canonicalize, compressed_size, equivalent, evaluate,
    is_linear, is_trivial, join, kappa, match, more_general, pairwise_joins, pattern_cost,
    rewrite, save_cost, size, skeleton, substitute, subterms, to_sexpr, use_cost, variables,
)
from strategies import compressed_terms, ground_terms, pattern_and_instances, patterns

P = parse_term
X, Y, Z = Var(0), Var(1), Var(2)

NESTED = P("(list (+ (f (+ (g a) (g a))) (+ (g 1) (h 2)))"
         " (+ (f (+ (g b) (g b))) (+ (g 3) (h 4)))"
         " (+ (g 5) (h 6)))")


def nested_two_abstractions():
    """The published two-abstraction solution, second call with arguments 3 4."""
    f1 = (( X, Y), P("(+ (g ?x0) (h ?x1))"))
    f1_app = lambda a, b: App(f1[0], f1[1], [a, b])
    f2_body = Term("+", [P("(f (+ ?x0 ?x0))"), f1_app(Y, Z)])
    f2 = lambda a, b, c: App((X, Y, Z), f2_body, [a, b, c])
    return Term(TUPLE, [f2(P("(g a)"), P("1"), P("2")), f2(P("(g b)"), P("3"), P("4")),
                        f1_app(P("5"), P("6"))])


# -- sizes --------------------------------------------------------------------------


def test_nested_input_size():
    assert size(NESTED) == 29


def test_leaf_size():
    assert size(P("a")) == 1


def test_tuple_counts_zero():
    assert size(P("(list a b)")) == 2


def test_nested_solution_size_and_meaning():
    sol = nested_two_abstractions()
    assert compressed_size(sol) == 26
    assert evaluate(sol) == NESTED


def test_shared_body_counted_once():
    body = P("(+ (g ?x0) (h ?x1))")
    one = App((X, Y), body, [P("1"), P("2")])
    two = Term(TUPLE, [one, App((X, Y), body, [P("3"), P("4")])])
    assert compressed_size(one) == 3 + 5
    assert compressed_size(two) == 6 + 5


def test_alpha_equivalent_bodies_are_shared():
    a = App((X,), P("(f ?x0)"), [P("a")])
    b = App((Var("q"),), Term("f", [Var("q")]), [P("b")])
    assert compressed_size(Term(TUPLE, [a, b])) == 4 + 2


# -- matching and joins ---------------------------------------------------------------


def test_match_examples():
    assert match(P("(+ ?x 1)"), P("(+ ?x ?y)")) == {Var("x"): Var("x"), Var("y"): P("1")}
    t = P("(f (g a))")
    assert match(t, X) == {X: t}
    assert match(P("(+ ?x 1)"), P("(+ 1 ?x)")) is None


def test_nonlinear_match():
    assert match(P("(+ a a)"), P("(+ ?x ?x)")) == {Var("x"): P("a")}
    assert match(P("(+ a b)"), P("(+ ?x ?x)")) is None


def test_join_examples():
    assert equivalent(join(P("(+ 2 1)"), P("(+ 3 1)")), P("(+ ?x 1)"))
    t = P("(f (g a))")
    assert join(t, t) == t
    assert equivalent(join(P("(f (+ a b))"), P("(f (+ a c))")), P("(f (+ a ?x))"))


def test_join_reuses_variable_for_repeated_pair():
    j = join(P("(+ a a)"), P("(+ b b)"))
    assert j == P("(+ ?x0 ?x0)")


def test_join_never_descends_into_tuples():
    assert join(P("(list a b)"), P("(list a c)")) == X


def test_canonical_variable_order():
    assert canonicalize(P("(+ ?b (f ?a ?b))")) == Term("+", [X, Term("f", [Y, X])])


# -- kappa and evaluation -------------------------------------------------------------


def test_kappa_rewrites_third_program():
    p = P("(+ (g ?y) (h ?z))")
    out = rewrite(kappa(p), P("(+ (g 5) (h 6))"))
    assert isinstance(out, App)
    assert out.args == (P("5"), P("6"))
    assert evaluate(out) == P("(+ (g 5) (h 6))")


def test_kappa_nullary():
    c = P("(g a)")
    rule = kappa(c)
    assert rule.lhs == c and rule.rhs == App((), c, ())
    assert evaluate(rewrite(rule, c)) == c


def test_evaluate_plain_term_is_identity():
    t = P("(f (+ a b))")
    assert evaluate(t) is not None and evaluate(t) == t


def test_evaluate_example():
    app = App((X, Y), P("(+ (g ?x0) (h ?x1))"), [P("5"), P("6")])
    assert evaluate(app) == P("(+ (g 5) (h 6))")


def test_rule_rejects_unbound_rhs_variable():
    with pytest.raises(ValueError):
        RewriteRule(P("(f ?x)"), P("(g ?y)"))


def test_bidirectional_rule_splits():
    r = RewriteRule(P("(+ ?x ?y)"), P("(+ ?y ?x)"), bidirectional=True)
    assert len(r.directed()) == 2


# -- cost model -------------------------------------------------------------------------


def test_use_and_save_example():
    p = P("(+ ?x 1)")
    sigma = {Var("x"): P("(g 2)")}
    assert use_cost(p, sigma) == 3
    assert save_cost(p, sigma) == 4


def test_cost_of_four_uses():
    p = P("(+ ?x 1)")
    sigmas = [{Var("x"): P(str(k))} for k in (2, 3, 4, 5)]
    assert pattern_cost(p, sigmas) == 3 + 4 * (1 - 3 + 1) == -1


def test_linear_cost_depends_only_on_uses():
    p = P("(+ (g ?x) (h ?y))")
    for sigmas in ([{Var("x"): P("a"), Var("y"): P("b")}] * 2,
                   [{Var("x"): P("(f (f a))"), Var("y"): P("(g b)")}] * 2):
        n = len(sigmas)
        assert pattern_cost(p, sigmas) == size(p) + n * (1 - size(p) + len(variables(p)))


def test_missing_variable_is_an_error():
    with pytest.raises(KeyError):
        use_cost(P("(+ ?x ?y)"), {Var("x"): P("a")})


def test_trivial_examples():
    assert is_trivial(X)
    assert is_trivial(P("(+ ?x ?y)"))
    assert not is_trivial(P("(+ ?x 1)"))
    assert skeleton(P("(+ ?x 1)")) == 2
    assert not is_trivial(P("(+ ?x ?x)"))


def test_pairwise_joins_lattice_fragment():
    js = {canonicalize(p) for p in pairwise_joins(P("(list (f (+ a b)) (f (+ a c)) (f (+ b c)))"))}
    assert canonicalize(P("(f (+ a ?x))")) in js
    assert canonicalize(P("(f (+ ?x c))")) in js
    assert canonicalize(P("(f (+ ?x ?y))")) in js
    assert not any(is_trivial(p) for p in js)


def test_pairwise_joins_without_repeated_heads():
    assert pairwise_joins(P("(f (g a))")) == set()


def test_pairwise_joins_repeated_subterm_is_nullary():
    assert P("(g a)") in pairwise_joins(P("(+ (g a) (g a))"))


# -- properties -------------------------------------------------------------------------

MANY = settings(max_examples=1000, deadline=None)


@MANY
@given(patterns, patterns)
def test_join_commutative(a, b):
    assert equivalent(join(a, b), join(b, a))


@MANY
@given(patterns, patterns, patterns)
def test_join_associative(a, b, c):
    assert equivalent(join(join(a, b), c), join(a, join(b, c)))


@MANY
@given(patterns)
def test_join_idempotent(a):
    assert equivalent(join(a, a), a)


@MANY
@given(patterns, patterns)
def test_join_is_upper_bound(a, b):
    j = join(a, b)
    assert more_general(j, a) and more_general(j, b)


@MANY
@given(pattern_and_instances())
def test_join_is_least(case):
    q, (a, b) = case
    assert more_general(q, join(a, b))


@MANY
@given(patterns, ground_terms)
def test_kappa_beta_round_trip(p, t):
    # instantiate p so that it matches, then compress and evaluate back
    sigma = {v: t for v in variables(p)}
    target = substitute(p, sigma)
    out = rewrite(kappa(p), target)
    assert out is not None
    assert evaluate(out) == target


@MANY
@given(compressed_terms())
def test_evaluation_terminates(t):
    steps = [0]
    v = evaluate(t, steps)
    assert not any(isinstance(s, App) for s in subterms(v))
    assert steps[0] <= sum(1 for s in _all_nodes(t) if isinstance(s, App))


def _all_nodes(t):
    stack = [t]
    while stack:
        x = stack.pop()
        yield x
        if isinstance(x, Term):
            stack.extend(x.children)
        elif isinstance(x, App):
            stack.extend(x.args)
            stack.append(x.body)


@MANY
@given(patterns.filter(lambda p: is_linear(p) and skeleton(p) <= 1),
       st.lists(ground_terms, min_size=1, max_size=4))
def test_trivial_patterns_never_pay(p, args):
    sigmas = [{v: a for v in variables(p)} for a in args]
    assert pattern_cost(p, sigmas) > 0


# compression sequences ----------------------------------------------------------------


def _plain_positions(t, path=()):
    """Paths to lambda-free constructor subterms outside lambda bodies."""
    if isinstance(t, Term):
        if t.head != TUPLE and not any(isinstance(s, App) for s in _all_nodes(t)):
            yield path
        for i, c in enumerate(t.children):
            yield from _plain_positions(c, path + (("c", i),))
    elif isinstance(t, App):
        for i, a in enumerate(t.args):
            yield from _plain_positions(a, path + (("a", i),))


def _get(t, path):
    for kind, i in path:
        t = t.children[i] if kind == "c" else t.args[i]
    return t


def _put(t, path, new):
    if not path:
        return new
    (kind, i), rest = path[0], path[1:]
    if kind == "c":
        kids = list(t.children)
        kids[i] = _put(kids[i], rest, new)
        return Term(t.head, kids)
    args = list(t.args)
    args[i] = _put(args[i], rest, new)
    return App(t.params, t.body, args)


def _count_matches(t, q):
    return sum(1 for path in _plain_positions(t) if match(_get(t, path), q) is not None)


@st.composite
def compression_runs(draw):
    """A corpus, a pattern pool and a random sequence of compression steps."""
    t = Term(TUPLE, draw(st.lists(ground_terms, min_size=1, max_size=4)))
    pool = list(dict.fromkeys(canonicalize(p) for p in draw(st.lists(patterns, min_size=1, max_size=3))))
    # also offer generalisations of the corpus itself so steps are likely
    subs = [s for s in _plain_subterms(t)]
    if len(subs) >= 2:
        a, b = draw(st.sampled_from(subs)), draw(st.sampled_from(subs))
        pool.append(join(a, b))
    steps = []
    cur = t
    for _ in range(draw(st.integers(0, 4))):
        options = [(path, p) for path in _plain_positions(cur) for p in pool
                   if match(_get(cur, path), p) is not None]
        if not options:
            break
        path, p = draw(st.sampled_from(options))
        sigma = match(_get(cur, path), p)
        xs = variables(p)
        app = App(xs, p, [sigma[x] for x in xs])
        steps.append((p, sigma, cur, _put(cur, path, app)))
        cur = steps[-1][3]
    return t, pool, steps


def _plain_subterms(t):
    return [_get(t, path) for path in _plain_positions(t)]


@MANY
@given(compression_runs())
def test_compression_accounting_identity(run):
    t, _, steps = run
    final = steps[-1][3] if steps else t
    by_pattern = {}
    for p, sigma, _, _ in steps:
        by_pattern.setdefault(canonicalize(p), []).append(
            {Var(i): sigma[v] for i, v in enumerate(variables(p))})
    assert compressed_size(final) - size(t) == sum(
        pattern_cost(p, sigmas) for p, sigmas in by_pattern.items())
    assert evaluate(final) == t


@MANY
@given(compression_runs(), patterns)
def test_match_count_never_increases_along_steps(run, q):
    _, _, steps = run
    for _, _, before, after in steps:
        assert _count_matches(after, q) <= _count_matches(before, q)


def test_printing_round_trip():
    app = App((X, Y), P("(+ (g ?x0) (h ?x1))"), [P("5"), P("6")])
    assert parse_term(to_sexpr(app)) == app
