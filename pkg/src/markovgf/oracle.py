"""Independent reference implementations used to check the closed forms.

* :class:`FullModelSpec` / :func:`full_forward` run an explicit
  d-dimensional single-layer transformer (embedding, causal linear
  attention, ReLU feed-forward, tied linear head) with rank-one weights.
  Its logits must equal the scalar formulas exactly.
* :func:`fd_gradient` / :func:`fd_hessian` are central-difference oracles.
* :func:`mc_loss` estimates the cross-entropy by sampling (x, y) pairs.
"""

from dataclasses import dataclass, field
import math

import numpy as np

from ._numerics import sigmoid
from .markov import stationary
from .errors import DimensionMismatch, DomainError, NonFinite

FD_GRAD_STEP = 1e-5
FD_HESS_STEP = 1e-4
MC_MIN_SAMPLES = 10_000


# --------------------------------------------------------------------------
# explicit d-dimensional model
# --------------------------------------------------------------------------


def random_alpha(d, rng):
    """A direction with entries drawn uniformly from {+1, -1} / sqrt(d)."""
    return rng.choice([-1.0, 1.0], size=d) / math.sqrt(d)


@dataclass
class FullModelSpec:
    """Rank-one weights of the d-dimensional model.

    The feed-forward weights are built along ``alpha_s = sign(e) alpha``
    (with sign(0) := 1), so that the ReLU sees the same argument for either
    sign of the tied embedding scale ``e``. The attention weights use
    ``alpha`` itself (``alpha_s alpha_s^T = alpha alpha^T``). ``v`` is
    parallel to ``alpha`` with ``<v, alpha> q_attn^2 d^(5/2) / 4 = a``.
    """

    d: int
    alpha: np.ndarray
    e: float
    w: float
    b: float
    a: float = 0.0
    q_attn: float = 1.0
    attention: bool = True
    v: np.ndarray = field(default=None)

    def __post_init__(self):
        d = self.d
        if not isinstance(d, (int, np.integer)) or d <= 0 or d % 2:
            raise DimensionMismatch(f"d must be a positive even integer, got {d!r}")
        self.alpha = np.asarray(self.alpha, dtype=float)
        if self.alpha.shape != (d,):
            raise DimensionMismatch(f"alpha must have shape ({d},), got {self.alpha.shape}")
        if not np.allclose(np.abs(self.alpha), 1.0 / math.sqrt(d), rtol=0, atol=1e-15):
            raise DomainError("alpha entries must be +-1/sqrt(d)")
        if not self.attention and self.a != 0.0:
            raise DomainError("a must be 0 when the attention layer is disabled")
        if self.v is None:
            self.v = (4.0 * self.a / (self.q_attn ** 2 * d ** 2.5)) * self.alpha
        self.v = np.asarray(self.v, dtype=float)
        if self.v.shape != (d,):
            raise DimensionMismatch(f"v must have shape ({d},)")

    @classmethod
    def random(cls, d, rng, e, w, b, a=0.0, attention=True):
        return cls(d=d, alpha=random_alpha(d, rng), e=e, w=w, b=b, a=a, attention=attention)

    @property
    def alpha_s(self):
        return (1.0 if self.e >= 0 else -1.0) * self.alpha

    @property
    def width(self):
        """Hidden width r = 4d of the feed-forward block."""
        return 4 * self.d

    @property
    def implied_a(self):
        """<v, alpha> q_attn^2 d^(5/2) / 4 recovered from the weights."""
        return float(self.v @ self.alpha) * self.q_attn ** 2 * self.d ** 2.5 / 4.0

    # weights ---------------------------------------------------------------

    @property
    def token_embedding(self):
        return self.e * self.alpha

    @property
    def positional_embedding(self):
        return -0.5 * self.e * self.alpha

    @property
    def w_query(self):
        return self.q_attn * self.d ** 1.5 * np.outer(self.alpha, self.alpha)

    w_key = w_query

    @property
    def w_value(self):
        return np.outer(self.alpha, self.v)

    @property
    def w1(self):
        return (abs(self.w) / math.sqrt(self.d)) * np.outer(np.ones(self.width), self.alpha_s)

    @property
    def w2(self):
        return (self.w / math.sqrt(self.d)) * np.outer(self.alpha_s, np.ones(self.width))


def full_forward_all(spec, bits):
    """Logits at every position of ``bits`` (array of 0/1)."""
    bits = np.asarray(getattr(bits, "bits", bits), dtype=float).reshape(-1)
    if bits.size < 1:
        raise DimensionMismatch("need at least one bit")
    d = spec.d
    # embeddings: token x * e alpha plus positional -(e/2) alpha
    x = bits[:, None] * spec.token_embedding[None, :] + spec.positional_embedding[None, :]
    y = x
    if spec.attention:
        qv = x @ spec.w_query.T
        kv = x @ spec.w_key.T
        vv = x @ spec.w_value.T
        n = bits.size
        scores = (qv @ kv.T) / math.sqrt(d)
        causal = np.tril(np.ones((n, n)))
        att = scores * causal / np.arange(1, n + 1)[:, None]
        y = x + att @ vv
    hidden = np.maximum(y @ spec.w1.T, 0.0)
    z = y + hidden @ spec.w2.T
    return z @ spec.token_embedding + spec.b


def full_forward(spec, bits, n):
    """Logit for predicting bit n + 1 from the first ``n`` bits (1-based n)."""
    seq = np.asarray(getattr(bits, "bits", bits)).reshape(-1)
    if not 1 <= n <= seq.size:
        raise DimensionMismatch(f"position n={n} outside 1..{seq.size}")
    return float(full_forward_all(spec, seq[:n])[-1])


# --------------------------------------------------------------------------
# finite differences
# --------------------------------------------------------------------------


def _probe(f, x):
    v = float(f(x))
    if not math.isfinite(v):
        raise NonFinite(f"non-finite value {v!r} at {x!r}")
    return v


def fd_gradient(f, point, h=FD_GRAD_STEP):
    """Central-difference gradient; truncation error is O(h^2) per coordinate."""
    if not h > 0:
        raise DomainError("h must be positive")
    x = np.atleast_1d(np.asarray(point, dtype=float))
    g = np.empty_like(x)
    for i in range(x.size):
        xp, xm = x.copy(), x.copy()
        xp[i] += h
        xm[i] -= h
        g[i] = (_probe(f, xp) - _probe(f, xm)) / (2.0 * h)
    return g


def fd_hessian(f, point, h=FD_HESS_STEP):
    """Second-difference Hessian, symmetrized.

    Diagonal entries use the three-point stencil, off-diagonal entries the
    four-point cross stencil.
    """
    if not h > 0:
        raise DomainError("h must be positive")
    x = np.atleast_1d(np.asarray(point, dtype=float))
    n = x.size
    hm = np.empty((n, n))
    f0 = _probe(f, x)

    def at(i, si, j=None, sj=0.0):
        y = x.copy()
        y[i] += si * h
        if j is not None:
            y[j] += sj * h
        return _probe(f, y)

    for i in range(n):
        hm[i, i] = (at(i, 1) - 2.0 * f0 + at(i, -1)) / (h * h)
        for j in range(i + 1, n):
            val = (at(i, 1, j, 1) - at(i, 1, j, -1) - at(i, -1, j, 1) + at(i, -1, j, -1)) / (4.0 * h * h)
            hm[i, j] = hm[j, i] = val
    return 0.5 * (hm + hm.T)


def relative_error(approx, exact, floor=1e-12):
    """||approx - exact|| / max(||exact||, floor)."""
    approx = np.asarray(approx, dtype=float)
    exact = np.asarray(exact, dtype=float)
    return float(np.linalg.norm(approx - exact) / max(np.linalg.norm(exact), floor))


# --------------------------------------------------------------------------
# Monte Carlo
# --------------------------------------------------------------------------


def canonical_predictor(e, w, b):
    """P(y = 1 | x) of the canonical model with explicit bias."""
    e2 = e * e
    slope = e2 * (1.0 + 2.0 * w * abs(w))
    return lambda x: sigmoid(slope * np.asarray(x, dtype=float) + b - e2 / 2.0)


def attention_predictor(e, w, a, b):
    from .attention import attn_logit

    return lambda x: sigmoid(attn_logit(np.asarray(x, dtype=float), e, w, a, b))


def constant_predictor(prob):
    return lambda x: np.full(np.shape(x), float(prob))


def kernel_predictor(kernel):
    """The true transition probabilities P(y = 1 | x)."""
    p, q = kernel.p, kernel.q
    return lambda x: np.where(np.asarray(x) == 1, 1.0 - q, p)


def mc_loss(kernel, predictor, n_samples, seed):
    """Monte-Carlo cross-entropy and its standard error.

    Draws ``n_samples`` independent pairs with x from the stationary law and
    y from the kernel row of x.
    """
    n = int(n_samples)
    if n < MC_MIN_SAMPLES:
        raise DomainError(f"n_samples must be >= {MC_MIN_SAMPLES}")
    rng = np.random.Generator(np.random.PCG64(seed))
    x = (rng.random(n) < stationary(kernel).pi1).astype(np.int8)
    p_next = np.where(x == 1, 1.0 - kernel.q, kernel.p)
    y = rng.random(n) < p_next
    f = np.asarray(predictor(x), dtype=float)
    with np.errstate(divide="ignore"):
        terms = -np.where(y, np.log(f), np.log1p(-f))
    return float(terms.mean()), float(terms.std(ddof=1) / math.sqrt(n))
