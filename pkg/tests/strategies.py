from hypothesis import strategies as st

from hdsbisim.expr import BINARY_OPS, FUNCTIONS, BinOp, Call, Neg, Num, Pow, Var

names = st.sampled_from(["x", "y", "T1", "T2", "u_0"])
literals = st.floats(min_value=0, max_value=1e6, allow_nan=False, allow_infinity=False).map(Num)
leaves = st.one_of(literals, names.map(Var))


def _extend(children):
    return st.one_of(
        children.map(Neg),
        st.builds(BinOp, st.sampled_from(BINARY_OPS), children, children),
        st.builds(Pow, children, st.integers(-3, 4)),
        st.builds(Call, st.sampled_from(sorted(FUNCTIONS)), children),
    )


expr_trees = st.recursive(leaves, _extend, max_leaves=12)
