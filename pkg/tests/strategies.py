"""Shared hypothesis strategies."""

from hypothesis import assume
from hypothesis import strategies as st

from markovgf.markov import SwitchKernel

probs = st.floats(min_value=0.02, max_value=0.98, allow_nan=False)


@st.composite
def kernels(draw, margin=0.05):
    p = draw(probs)
    q = draw(probs)
    assume(abs(p + q - 1.0) > margin)
    return SwitchKernel(p, q)


def coords(lo=-2.0, hi=2.0):
    return st.floats(min_value=lo, max_value=hi, allow_nan=False, allow_infinity=False)
