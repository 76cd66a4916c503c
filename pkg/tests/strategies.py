"""Hypothesis strategies for small terms, patterns and compressed terms."""

from hypothesis import strategies as st

from eqcompress.terms import App, Term, Var, variables

ARITY = {"a": 0, "b": 0, "c": 0, "1": 0, "2": 0, "f": 1, "g": 1, "+": 2, "h": 2}
LEAVES = [h for h, n in ARITY.items() if n == 0]
NODES = [h for h, n in ARITY.items() if n > 0]


def _extend(children):
    return st.one_of(
        [st.builds(lambda c, h=h: Term(h, [c]), children) for h in NODES if ARITY[h] == 1]
        + [st.builds(lambda x, y, h=h: Term(h, [x, y]), children, children)
           for h in NODES if ARITY[h] == 2]
    )


ground_terms = st.recursive(st.sampled_from([Term(h) for h in LEAVES]), _extend, max_leaves=8)

pattern_vars = st.sampled_from([Var(i) for i in range(3)])

patterns = st.recursive(
    st.one_of(st.sampled_from([Term(h) for h in LEAVES]), pattern_vars), _extend, max_leaves=8
)


@st.composite
def pattern_and_instances(draw, n=2):
    """A pattern ``q`` and ``n`` ground instances of it."""
    q = draw(patterns)
    out = []
    for _ in range(n):
        sigma = {v: draw(ground_terms) for v in variables(q)}
        from eqcompress.terms import substitute
        out.append(substitute(q, sigma))
    return q, out


@st.composite
def compressed_terms(draw, depth=3):
    """Closed compressed terms: constructors and applications of closed lambdas."""
    if depth == 0 or draw(st.booleans()):
        return draw(ground_terms)
    if draw(st.booleans()):
        k = draw(st.integers(0, 2))
        params = tuple(Var(i) for i in range(k))
        body = draw(patterns.filter(lambda p: set(variables(p)) <= set(params)))
        args = [draw(compressed_terms(depth - 1)) for _ in params]
        return App(params, body, args)
    h = draw(st.sampled_from(NODES))
    return Term(h, [draw(compressed_terms(depth - 1)) for _ in range(ARITY[h])])
