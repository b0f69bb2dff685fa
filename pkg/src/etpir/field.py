"""Arithmetic in the prime field GF(q).

Scalars are :class:`FieldElement` values. Bulk data (matrices, query
coefficients, message vectors) is carried as numpy arrays whose dtype is
chosen by the field: ``int64`` when ``q < 2**31`` so that a product of two
residues fits in a machine word, and ``object`` (Python ints) otherwise.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DEFAULT_Q = 2147483647  # 2**31 - 1

# Deterministic for every n < 3.3e24, which covers all 64-bit moduli.
_MR_BASES = (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37)

_WORD = np.dtype("<u8")


class FieldMismatchError(ValueError):
    """Raised when elements of different fields are combined."""


def is_prime(n: int) -> bool:
    """Deterministic Miller-Rabin test for 64-bit integers."""
    if n < 2:
        return False
    for p in _MR_BASES:
        if n % p == 0:
            return n == p
    d, s = n - 1, 0
    while d % 2 == 0:
        d //= 2
        s += 1
    for a in _MR_BASES:
        x = pow(a, d, n)
        if x in (1, n - 1):
            continue
        for _ in range(s - 1):
            x = x * x % n
            if x == n - 1:
                break
        else:
            return False
    return True


@dataclass(frozen=True)
class PrimeField:
    """The field of residues modulo a prime ``q``."""

    q: int

    def __post_init__(self):
        if not isinstance(self.q, (int, np.integer)) or isinstance(self.q, bool):
            raise TypeError(f"modulus must be an integer, got {self.q!r}")
        object.__setattr__(self, "q", int(self.q))
        if self.q >= 1 << 64:
            raise ValueError(f"modulus {self.q} does not fit in 64 bits")
        if not is_prime(self.q):
            raise ValueError(f"modulus {self.q} is not prime")

    @property
    def dtype(self):
        return np.dtype(np.int64) if self.q < (1 << 31) else np.dtype(object)

    def __call__(self, value: int) -> FieldElement:
        return FieldElement(int(value) % self.q, self)

    def zero(self) -> FieldElement:
        return FieldElement(0, self)

    def one(self) -> FieldElement:
        return FieldElement(1, self)

    def inv(self, value: int) -> int:
        value = int(value) % self.q
        if value == 0:
            raise ZeroDivisionError("zero has no inverse")
        return pow(value, self.q - 2, self.q)

    def array(self, values) -> np.ndarray:
        """Reduce an integer array-like into this field's dtype."""
        if self.dtype == object:
            arr = np.array(values, dtype=object)
            return np.vectorize(lambda v: int(v) % self.q, otypes=[object])(arr) if arr.size else arr
        arr = np.asarray(values)
        if arr.dtype == object:
            arr = np.array([int(v) % self.q for v in arr.ravel()], dtype=np.int64).reshape(arr.shape)
            return arr
        return np.mod(arr.astype(np.int64, copy=False), self.q)

    def random(self, rng: np.random.Generator, size=None):
        """Uniform residues; an int when ``size`` is None, else an array."""
        if self.dtype == object:
            raw = rng.integers(0, self.q, size=size, dtype=np.uint64)
            if size is None:
                return int(raw)
            return np.asarray(raw).astype(object)
        raw = rng.integers(0, self.q, size=size, dtype=np.int64)
        return int(raw) if size is None else raw

    def random_nonzero(self, rng: np.random.Generator, size=None):
        if self.dtype == object:
            raw = rng.integers(1, self.q, size=size, dtype=np.uint64)
            return int(raw) if size is None else np.asarray(raw).astype(object)
        raw = rng.integers(1, self.q, size=size, dtype=np.int64)
        return int(raw) if size is None else raw

    def elements(self):
        return [FieldElement(v, self) for v in range(self.q)]

    def __repr__(self) -> str:
        return f"GF({self.q})"


@dataclass(frozen=True)
class FieldElement:
    value: int
    field: PrimeField

    def __post_init__(self):
        if not 0 <= self.value < self.field.q:
            raise ValueError(f"{self.value} is not a residue modulo {self.field.q}")

    def _coerce(self, other) -> int:
        if isinstance(other, FieldElement):
            if other.field != self.field:
                raise FieldMismatchError(f"{self.field} vs {other.field}")
            return other.value
        if isinstance(other, (int, np.integer)) and not isinstance(other, bool):
            return int(other) % self.field.q
        return NotImplemented

    def __add__(self, other):
        v = self._coerce(other)
        if v is NotImplemented:
            return v
        return FieldElement((self.value + v) % self.field.q, self.field)

    __radd__ = __add__

    def __sub__(self, other):
        v = self._coerce(other)
        if v is NotImplemented:
            return v
        return FieldElement((self.value - v) % self.field.q, self.field)

    def __rsub__(self, other):
        v = self._coerce(other)
        if v is NotImplemented:
            return v
        return FieldElement((v - self.value) % self.field.q, self.field)

    def __mul__(self, other):
        v = self._coerce(other)
        if v is NotImplemented:
            return v
        return FieldElement(self.value * v % self.field.q, self.field)

    __rmul__ = __mul__

    def __neg__(self):
        return FieldElement(-self.value % self.field.q, self.field)

    def __truediv__(self, other):
        v = self._coerce(other)
        if v is NotImplemented:
            return v
        return self * self.field.inv(v)

    def __pow__(self, exponent: int):
        if exponent < 0:
            return self.inverse() ** (-exponent)
        return FieldElement(pow(self.value, exponent, self.field.q), self.field)

    def inverse(self) -> FieldElement:
        return FieldElement(self.field.inv(self.value), self.field)

    def __eq__(self, other):
        if isinstance(other, FieldElement):
            return self.field == other.field and self.value == other.value
        if isinstance(other, (int, np.integer)) and not isinstance(other, bool):
            return self.value == int(other) % self.field.q
        return NotImplemented

    def __hash__(self):
        return hash((self.value, self.field.q))

    def __int__(self):
        return self.value

    __index__ = __int__

    def __bool__(self):
        return self.value != 0

    def __repr__(self) -> str:
        return f"{self.value} (mod {self.field.q})"


def add(a: FieldElement, b: FieldElement) -> FieldElement:
    _same_field(a, b)
    return a + b


def mul(a: FieldElement, b: FieldElement) -> FieldElement:
    _same_field(a, b)
    return a * b


def inv(a: FieldElement) -> FieldElement:
    return a.inverse()


def uniform_sample(field: PrimeField, rng: np.random.Generator) -> FieldElement:
    """One uniform element; numpy's bounded integer draw is unbiased (rejection based)."""
    return FieldElement(field.random(rng), field)


def _same_field(a: FieldElement, b: FieldElement) -> None:
    if not isinstance(a, FieldElement) or not isinstance(b, FieldElement):
        raise TypeError("expected FieldElement operands")
    if a.field != b.field:
        raise FieldMismatchError(f"{a.field} vs {b.field}")


def encode_elements(values) -> bytes:
    """Serialize residues as consecutive 8-byte little-endian words."""
    arr = np.asarray(values)
    if arr.dtype == object:
        return b"".join(int(v).to_bytes(8, "little") for v in arr.ravel())
    return np.ascontiguousarray(arr, dtype=np.int64).astype(_WORD).tobytes()


def decode_elements(data: bytes, field: PrimeField) -> np.ndarray:
    """Inverse of :func:`encode_elements`; rejects words that are not residues."""
    if len(data) % 8:
        raise ValueError(f"payload of {len(data)} bytes is not a whole number of words")
    words = np.frombuffer(data, dtype=_WORD)
    if words.size and int(words.max()) >= field.q:
        raise ValueError(f"word {int(words.max())} is not a residue modulo {field.q}")
    if field.dtype == object:
        return np.array([int(w) for w in words], dtype=object)
    return words.astype(np.int64)


def encode_element(a: FieldElement) -> bytes:
    return a.value.to_bytes(8, "little")


def decode_element(data: bytes, field: PrimeField) -> FieldElement:
    if len(data) != 8:
        raise ValueError("a field element is exactly 8 bytes")
    word = int.from_bytes(data, "little")
    if word >= field.q:
        raise ValueError(f"word {word} is not a residue modulo {field.q}")
    return FieldElement(word, field)
