"""Binary first-order Markov chains: kernel, stationary law, entropies, sampling.

Entropies are in nats throughout.
"""

from dataclasses import dataclass, field
import math

import numpy as np

from .errors import DegenerateKernel, DomainError

#: Default tolerance for rejecting kernels on the p + q = 1 line.
DEGENERACY_TOL = 1e-9

#: Identifier of the bit generator used by :func:`sample_sequence`.
RNG_ALGORITHM = "numpy.random.PCG64"


@dataclass(frozen=True)
class SwitchKernel:
    """Transition kernel ``P = [[1-p, p], [q, 1-q]]`` on {0, 1}.

    ``p`` is the 0 -> 1 switching probability and ``q`` the 1 -> 0 one.
    """

    p: float
    q: float

    def __post_init__(self):
        for name in ("p", "q"):
            v = getattr(self, name)
            if not (0.0 < v < 1.0) or not math.isfinite(v):
                raise DomainError(f"{name}={v!r} must lie strictly inside (0, 1)")
        object.__setattr__(self, "p", float(self.p))
        object.__setattr__(self, "q", float(self.q))

    @classmethod
    def nondegenerate(cls, p, q, tol=DEGENERACY_TOL):
        """Construct a kernel, rejecting ``|p + q - 1| < tol``."""
        k = cls(p, q)
        k.require_nondegenerate(tol)
        return k

    @property
    def switching(self):
        """The switching factor p + q."""
        return self.p + self.q

    @property
    def is_degenerate(self):
        return abs(self.p + self.q - 1.0) < DEGENERACY_TOL

    def require_nondegenerate(self, tol=DEGENERACY_TOL):
        if abs(self.p + self.q - 1.0) < tol:
            raise DegenerateKernel(
                f"p + q = {self.p + self.q!r} is within {tol:g} of 1; "
                "the landscape classification is undefined there"
            )

    @property
    def matrix(self):
        return np.array([[1.0 - self.p, self.p], [self.q, 1.0 - self.q]])

    @property
    def pi0(self):
        return self.q / (self.p + self.q)

    @property
    def pi1(self):
        return self.p / (self.p + self.q)

    @property
    def global_level(self):
        """log((1-p)(1-q)/(pq)), the value of the signal D on the global-minimum set."""
        p, q = self.p, self.q
        return math.log1p(-p) + math.log1p(-q) - math.log(p) - math.log(q)


@dataclass(frozen=True)
class StationaryLaw:
    pi0: float
    pi1: float

    def as_array(self):
        return np.array([self.pi0, self.pi1])


@dataclass(frozen=True)
class BitSequence:
    bits: np.ndarray
    seed: int
    rng_algorithm: str = RNG_ALGORITHM
    metadata: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.bits)

    def __str__(self):
        return "".join("1" if b else "0" for b in self.bits)


def stationary(kernel):
    """Stationary distribution ``(q, p) / (p + q)``."""
    s = kernel.p + kernel.q
    pi1 = kernel.p / s
    return StationaryLaw(pi0=1.0 - pi1, pi1=pi1)


def binary_entropy(x):
    """Binary entropy ``-x log x - (1-x) log(1-x)`` in nats, with h(0) = h(1) = 0.

    Accepts scalars or arrays.
    """
    x = np.asarray(x, dtype=float)
    if np.any((x < 0.0) | (x > 1.0) | ~np.isfinite(x)):
        raise DomainError("binary_entropy requires 0 <= x <= 1")
    with np.errstate(divide="ignore", invalid="ignore"):
        h = -np.where(x > 0, x * np.log(x), 0.0) - np.where(x < 1, (1.0 - x) * np.log1p(-x), 0.0)
    return float(h) if h.ndim == 0 else h


def entropy_rate(kernel):
    """Conditional entropy H(x_{n+1} | x_n) = (q h(p) + p h(q)) / (p + q)."""
    p, q = kernel.p, kernel.q
    return (q * binary_entropy(p) + p * binary_entropy(q)) / (p + q)


def marginal_entropy(kernel):
    """Entropy of the stationary marginal, h(pi1)."""
    return binary_entropy(stationary(kernel).pi1)


def sample_sequence(kernel, n, seed):
    """Draw ``n`` bits from the stationary chain ``(pi, P)``.

    The first bit is drawn from the stationary law; the chain is then built
    from alternating geometric run lengths (a run of 0s ends with probability
    ``p`` per step, a run of 1s with probability ``q``), which has exactly the
    law of step-by-step sampling.
    """
    n = int(n)
    if n < 1:
        raise DomainError("n must be >= 1")
    rng = np.random.Generator(np.random.PCG64(seed))
    first = int(rng.random() < stationary(kernel).pi1)
    # Expected run lengths are 1/p and 1/q; draw in chunks until n is covered.
    runs = []
    covered = 0
    state = first
    mean_pair = 1.0 / kernel.p + 1.0 / kernel.q
    while covered < n:
        m = int((n - covered) / mean_pair * 2.0) + 8
        r0 = rng.geometric(kernel.p if state == 0 else kernel.q, size=m)
        r1 = rng.geometric(kernel.q if state == 0 else kernel.p, size=m)
        chunk = np.empty(2 * m, dtype=np.int64)
        chunk[0::2] = r0
        chunk[1::2] = r1
        runs.append(chunk)
        covered += int(chunk.sum())
    lengths = np.concatenate(runs)
    values = (np.arange(lengths.size) + first) % 2
    bits = np.repeat(values.astype(np.uint8), lengths)[:n]
    return BitSequence(bits=bits, seed=int(seed), metadata={"p": kernel.p, "q": kernel.q, "n": n})
