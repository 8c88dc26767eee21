"""Affine universal hashing over GF(2^n), randomness extraction, and a keyed
truncated-digest hash.

The universal family is h_{a,b}(x) = first ell bits (most significant, in the
polynomial-basis encoding) of a*x + b, with arithmetic in GF(2^n). Field
elements are ints; bit i of the int is the coefficient of x^i.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from fractions import Fraction
from math import log2
from typing import Iterator

import numpy as np

from .quantum import trace_norm_hermitian

# Reduction polynomials, one per supported field degree: the lowest-integer
# irreducible polynomial of that degree over GF(2) (includes the x^n term).
# Generated offline, re-verified irreducible by the test suite. Degree 8 is the
# familiar 0x11B and degree 128 is x^128+x^7+x^2+x+1.
REDUCTION_POLY: dict[int, int] = {
    1: 0x3,
    2: 0x7,
    3: 0xB,
    4: 0x13,
    5: 0x25,
    6: 0x43,
    7: 0x83,
    8: 0x11B,
    9: 0x203,
    10: 0x409,
    11: 0x805,
    12: 0x1009,
    13: 0x201B,
    14: 0x4021,
    15: 0x8003,
    16: 0x1002B,
    17: 0x20009,
    18: 0x40009,
    19: 0x80027,
    20: 0x100009,
    21: 0x200005,
    22: 0x400003,
    23: 0x800021,
    24: 0x100001B,
    25: 0x2000009,
    26: 0x400001B,
    27: 0x8000027,
    28: 0x10000003,
    29: 0x20000005,
    30: 0x40000003,
    31: 0x80000009,
    32: 0x10000008D,
    48: 0x100000000002D,
    64: 0x1000000000000001B,
    128: 0x100000000000000000000000000000087,
}

# Exhaustive-enumeration guards.
MAX_COLLISION_BITS = 16
MAX_DISTANCE_BITS = 8


def _require_field(n: int) -> int:
    if n not in REDUCTION_POLY:
        raise ValueError(f"no reduction polynomial recorded for GF(2^{n})")
    return REDUCTION_POLY[n]


def _require_element(n: int, v: int, name: str) -> None:
    if not 0 <= v < (1 << n):
        raise ValueError(f"{name}={v} is not a GF(2^{n}) element")


def clmul(a: int, b: int) -> int:
    """Carry-less product of two nonnegative ints."""
    out = 0
    while b:
        if b & 1:
            out ^= a
        a <<= 1
        b >>= 1
    return out


def gf_mul(n: int, a: int, b: int) -> int:
    """Product in GF(2^n) under the recorded reduction polynomial."""
    poly = _require_field(n)
    _require_element(n, a, "a")
    _require_element(n, b, "b")
    p = clmul(a, b)
    for i in range(p.bit_length() - 1, n - 1, -1):
        if (p >> i) & 1:
            p ^= poly << (i - n)
    return p


def uh_eval(n: int, ell: int, seed: tuple[int, int], x: int) -> int:
    """h_{a,b}(x): the ell most significant bits of a*x + b in GF(2^n)."""
    if not 1 <= ell <= n:
        raise ValueError(f"output length {ell} not in [1, {n}]")
    a, b = seed
    _require_element(n, b, "b")
    _require_element(n, x, "x")
    return (gf_mul(n, a, x) ^ b) >> (n - ell)


def uh_sample_seed(n: int, rng: np.random.Generator) -> tuple[int, int]:
    """Uniform seed (a, b) for the GF(2^n) family."""
    _require_field(n)
    a = int(rng.integers(0, 1 << min(n, 62)))
    b = int(rng.integers(0, 1 << min(n, 62)))
    for _ in range(max(0, (n - 1) // 62)):
        a = (a << 62) | int(rng.integers(0, 1 << 62))
        b = (b << 62) | int(rng.integers(0, 1 << 62))
    return a & ((1 << n) - 1), b & ((1 << n) - 1)


def uh_seed_count(n: int) -> int:
    return 1 << (2 * n)


def uh_enumerate_seeds(n: int) -> Iterator[tuple[int, int]]:
    """All 2^(2n) seeds, for exact averages at small n."""
    _require_field(n)
    if 2 * n > 2 * MAX_COLLISION_BITS:
        raise ValueError("seed space too large to enumerate")
    for a in range(1 << n):
        for b in range(1 << n):
            yield (a, b)


def _products_with_all_a(n: int, z: int) -> np.ndarray:
    """Vector of a*z over all a in GF(2^n), exploiting linearity in a."""
    prods = np.zeros(1 << n, dtype=np.uint64)
    for i in range(n):
        basis = gf_mul(n, 1 << i, z)
        lo = 1 << i
        prods[lo : 2 * lo] = prods[:lo] ^ np.uint64(basis)
    return prods


def uh_collision_probability(n: int, ell: int, x: int, y: int) -> Fraction:
    """Exact Pr over seeds of h(x) = h(y), as a fraction of the seed count.

    h_{a,b}(x) = h_{a,b}(y) iff the top ell bits of a*(x^y) vanish; the offset
    b cancels from the event, so counting over a alone gives the exact
    probability over the full (a, b) seed space. (A brute-force cross-check
    over both components at small n lives in the tests.)
    """
    if not 1 <= ell <= n:
        raise ValueError(f"output length {ell} not in [1, {n}]")
    if n > MAX_COLLISION_BITS:
        raise ValueError(f"exhaustive count capped at n <= {MAX_COLLISION_BITS}")
    _require_element(n, x, "x")
    _require_element(n, y, "y")
    if x == y:
        raise ValueError("collision probability is defined for distinct inputs")
    prods = _products_with_all_a(n, x ^ y)
    count = int((prods >> np.uint64(n - ell) == 0).sum())
    return Fraction(count, 1 << n)


@dataclass(frozen=True)
class ExtractorSpec:
    """Seeded extractor parameters: n-bit source, ell-bit output, claimed
    min-entropy k, and target distance eps, with k >= ell + 2*log2(1/eps)."""

    source_bits: int
    output_bits: int
    min_entropy: float
    error: float

    def __post_init__(self) -> None:
        _require_field(self.source_bits)
        if not 1 <= self.output_bits <= self.source_bits:
            raise ValueError("output length must lie in [1, source_bits]")
        if not 0.0 < self.error < 1.0:
            raise ValueError("error must lie in (0, 1)")
        need = self.output_bits + 2.0 * log2(1.0 / self.error)
        if self.min_entropy < need - 1e-9:
            raise ValueError(
                f"claimed min-entropy {self.min_entropy} below {need} required "
                f"for {self.output_bits} bits at distance {self.error}"
            )


def extract(spec: ExtractorSpec, seed: tuple[int, int], x: int) -> int:
    """Apply the extractor: the universal family keyed by the seed."""
    return uh_eval(spec.source_bits, spec.output_bits, seed, x)


def extractor_distance(
    spec: ExtractorSpec,
    probs: np.ndarray,
    states: list[np.ndarray],
) -> float:
    """Exact trace distance between (Ext(S, X), S, E) and (uniform, S, E).

    The source is a cq ensemble: probs[i] is the weight of label i (the
    integer i itself is the source string) and states[i] the side-information
    operator, all sharing one small dimension. Since the XOR offset b only
    relabels outputs, the per-seed distance is independent of b and the
    average runs over a alone; this is exact, not an approximation.
    """
    n, ell = spec.source_bits, spec.output_bits
    if n > MAX_DISTANCE_BITS:
        raise ValueError(f"exact extractor distance capped at n <= {MAX_DISTANCE_BITS}")
    probs = np.asarray(probs, dtype=float)
    if probs.shape != (1 << n,):
        raise ValueError(f"need a weight for each of the 2^{n} source strings")
    if abs(probs.sum() - 1.0) > 1e-10 or probs.min() < -1e-15:
        raise ValueError("probs must form a distribution")
    dim = states[0].shape[0]
    weighted = [probs[x] * np.asarray(states[x], dtype=complex) for x in range(1 << n)]
    rho_avg = np.sum(weighted, axis=0)
    uniform_part = rho_avg / (1 << ell)
    total = 0.0
    for a in range(1 << n):
        blocks = [np.zeros((dim, dim), dtype=complex) for _ in range(1 << ell)]
        for x in range(1 << n):
            if probs[x] == 0.0:
                continue
            blocks[gf_mul(n, a, x) >> (n - ell)] += weighted[x]
        total += 0.5 * sum(trace_norm_hermitian(blk - uniform_part) for blk in blocks)
    return total / (1 << n)


def cr_hash(key: bytes, x: int, in_bits: int, out_bits: int) -> int:
    """Truncated standard digest of key || x, as an out_bits-wide int."""
    if not 0 <= x < (1 << in_bits):
        raise ValueError(f"x={x} does not fit in {in_bits} bits")
    if not 1 <= out_bits <= 128:
        raise ValueError("digest width out of range")
    payload = key + in_bits.to_bytes(4, "big") + x.to_bytes((in_bits + 7) // 8, "big")
    digest = hashlib.sha256(payload).digest()
    return int.from_bytes(digest[:16], "big") >> (128 - out_bits)


@dataclass(frozen=True)
class CrHash:
    """A sampled member of the truncated-digest hash family."""

    key: bytes
    input_bits: int
    output_bits: int

    def digest(self, x: int) -> int:
        return cr_hash(self.key, x, self.input_bits, self.output_bits)


class CrHashFamily:
    """Keyed compressing hash family backed by a standard digest. Not
    enumerable; collision resistance is an interface assumption here, not a
    proven property of the toy key sizes."""

    enumerable = False

    def __init__(self, input_bits: int, output_bits: int, key_bytes: int = 16):
        self.input_bits = int(input_bits)
        self.output_bits = int(output_bits)
        self.key_bytes = int(key_bytes)

    def sample(self, rng: np.random.Generator) -> CrHash:
        key = bytes(int(v) for v in rng.integers(0, 256, self.key_bytes))
        return CrHash(key, self.input_bits, self.output_bits)

    def evaluate(self, member: CrHash, x: int) -> int:
        return member.digest(x)


class UhHashFamily:
    """The GF(2^n) affine family packaged with the same interface, enumerable
    for exact experiments. Requires output <= input."""

    enumerable = True

    def __init__(self, input_bits: int, output_bits: int):
        _require_field(input_bits)
        if not 1 <= output_bits <= input_bits:
            raise ValueError("output length must lie in [1, input_bits]")
        self.input_bits = int(input_bits)
        self.output_bits = int(output_bits)

    def sample(self, rng: np.random.Generator) -> tuple[int, int]:
        return uh_sample_seed(self.input_bits, rng)

    def evaluate(self, member: tuple[int, int], x: int) -> int:
        return uh_eval(self.input_bits, self.output_bits, member, x)

    def enumerate_members(self) -> Iterator[tuple[int, int]]:
        return uh_enumerate_seeds(self.input_bits)

    @property
    def n_members(self) -> int:
        return uh_seed_count(self.input_bits)
