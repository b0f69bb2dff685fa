"""Dense matrices over GF(q).

A :class:`Matrix` wraps a read-only numpy array of residues together with
its field. Elimination is Gauss-Jordan: a compiled loop for int64 storage
and numpy row operations for object storage. Every intermediate product
stays below 2**63 because int64 storage is only used when q < 2**31.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from itertools import combinations

import numba
import numpy as np

from .field import FieldElement, FieldMismatchError, PrimeField


class ShapeError(ValueError):
    """Operand dimensions do not fit the operation."""


class SingularMatrixError(ArithmeticError):
    """A matrix that had to be invertible is not."""


def _reduce(arr: np.ndarray, field: PrimeField) -> np.ndarray:
    if field.dtype == object:
        out = np.empty(arr.shape, dtype=object)
        flat = arr.ravel()
        out.ravel()[:] = [int(v) % field.q for v in flat]
        return out
    if arr.dtype == object:
        return np.array([int(v) % field.q for v in arr.ravel()], dtype=np.int64).reshape(arr.shape)
    return np.mod(arr.astype(np.int64, copy=False), field.q)


@dataclass(frozen=True, eq=False)
class Matrix:
    """Immutable dense matrix over a prime field."""

    data: np.ndarray
    field: PrimeField

    def __post_init__(self):
        arr = np.asarray(self.data)
        if arr.ndim != 2:
            raise ShapeError(f"a matrix needs 2 dimensions, got {arr.ndim}")
        arr = _reduce(arr, self.field) if (arr.dtype != self.field.dtype or _needs_reduce(arr, self.field)) else arr.copy()
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @classmethod
    def _wrap(cls, arr: np.ndarray, field: PrimeField) -> Matrix:
        # Trusted constructor for arrays already reduced into field.dtype.
        m = object.__new__(cls)
        if arr.flags.writeable:
            arr = arr if arr.base is None else arr.copy()
            arr.setflags(write=False)
        object.__setattr__(m, "data", arr)
        object.__setattr__(m, "field", field)
        return m

    @property
    def rows(self) -> int:
        return self.data.shape[0]

    @property
    def cols(self) -> int:
        return self.data.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    @property
    def q(self) -> int:
        return self.field.q

    @property
    def T(self) -> Matrix:
        return Matrix._wrap(self.data.T.copy(), self.field)

    def __getitem__(self, key):
        out = self.data[key]
        if isinstance(out, np.ndarray):
            if out.ndim == 2:
                return Matrix._wrap(out.copy(), self.field)
            return out.copy()
        return int(out)

    def element(self, i: int, j: int) -> FieldElement:
        return FieldElement(int(self.data[i, j]), self.field)

    def __matmul__(self, other: Matrix) -> Matrix:
        return matmul(self, other)

    def __add__(self, other: Matrix) -> Matrix:
        _check_pair(self, other)
        if self.shape != other.shape:
            raise ShapeError(f"{self.shape} + {other.shape}")
        return Matrix._wrap((self.data + other.data) % self.q, self.field)

    def __sub__(self, other: Matrix) -> Matrix:
        _check_pair(self, other)
        if self.shape != other.shape:
            raise ShapeError(f"{self.shape} - {other.shape}")
        return Matrix._wrap((self.data - other.data) % self.q, self.field)

    def __neg__(self) -> Matrix:
        return Matrix._wrap((-self.data) % self.q, self.field)

    def scale(self, c: int) -> Matrix:
        return Matrix._wrap((self.data * (int(c) % self.q)) % self.q, self.field)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Matrix):
            return NotImplemented
        return self.field == other.field and self.shape == other.shape and bool(np.all(self.data == other.data))

    __hash__ = None

    def tolist(self) -> list[list[int]]:
        return [[int(v) for v in row] for row in self.data]

    def signed(self) -> list[list[int]]:
        """Entries mapped to the symmetric range, handy for comparing with printed fixtures."""
        half = self.q // 2
        return [[v - self.q if v > half else v for v in row] for row in self.tolist()]

    def fingerprint(self) -> str:
        h = hashlib.sha256(f"{self.rows} {self.cols} {self.q}".encode())
        h.update(np.ascontiguousarray(self.data.astype(np.uint64) if self.field.dtype != object else np.array([int(v) for v in self.data.ravel()], dtype=np.uint64)).tobytes())
        return h.hexdigest()[:16]

    def __repr__(self) -> str:
        return f"Matrix({self.rows}x{self.cols} over GF({self.q}), {self.tolist()})"


def _needs_reduce(arr: np.ndarray, field: PrimeField) -> bool:
    if arr.size == 0 or arr.dtype == object:
        return True
    return bool(arr.min() < 0 or arr.max() >= field.q)


def _check_pair(a: Matrix, b: Matrix) -> None:
    if a.field != b.field:
        raise FieldMismatchError(f"{a.field} vs {b.field}")


def matrix(rows, field: PrimeField) -> Matrix:
    """Build a matrix from nested integer lists (entries are reduced mod q)."""
    arr = np.array(rows, dtype=object)
    if arr.ndim == 1 and arr.size == 0:
        arr = arr.reshape(0, 0)
    return Matrix(arr, field)


def identity(n: int, field: PrimeField) -> Matrix:
    return Matrix._wrap(np.eye(n, dtype=np.int64).astype(field.dtype), field)


def zeros(rows: int, cols: int, field: PrimeField) -> Matrix:
    return Matrix._wrap(np.zeros((rows, cols), dtype=np.int64).astype(field.dtype), field)


def random_matrix(rows: int, cols: int, field: PrimeField, rng: np.random.Generator) -> Matrix:
    """Entries drawn independently and uniformly from the field."""
    return Matrix._wrap(field.random(rng, (rows, cols)), field)


# ---------------------------------------------------------------- products

def mat_mod(a: np.ndarray, b: np.ndarray, q: int) -> np.ndarray:
    """(a @ b) mod q for residue arrays, without int64 overflow."""
    if a.dtype == object or b.dtype == object:
        return (a.astype(object) @ b.astype(object)) % q
    inner = a.shape[-1]
    if inner == 0:
        return np.zeros(a.shape[:-1] + b.shape[-1:], dtype=np.int64)
    if inner < (1 << 21):
        # float64 BLAS is exact while every partial sum stays below 2**53.
        if (q - 1) * (q - 1) * inner < (1 << 53):
            return _fmat(a, b) % q
        a0, a1 = a & 0xFFFF, a >> 16
        b0, b1 = b & 0xFFFF, b >> 16
        hh = _fmat(a1, b1) % q
        mid = _fmat(a1, b0) + _fmat(a0, b1)
        r = (hh * 65536 + mid) % q
        return (r * 65536 + _fmat(a0, b0)) % q
    lo = b & 0xFFFF
    hi = b >> 16
    return ((((a @ hi) % q) << 16) + a @ lo) % q


def _fmat(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return (a.astype(np.float64) @ b.astype(np.float64)).astype(np.int64)


def matmul(A: Matrix, B: Matrix) -> Matrix:
    _check_pair(A, B)
    if A.cols != B.rows:
        raise ShapeError(f"cannot multiply {A.shape} by {B.shape}")
    return Matrix._wrap(mat_mod(A.data, B.data, A.q), A.field)


def kron(A: Matrix, B: Matrix) -> Matrix:
    _check_pair(A, B)
    return Matrix._wrap(np.kron(A.data, B.data) % A.q, A.field)


def hstack(blocks) -> Matrix:
    blocks = list(blocks)
    for b in blocks[1:]:
        _check_pair(blocks[0], b)
    return Matrix._wrap(np.hstack([b.data for b in blocks]), blocks[0].field)


def vstack(blocks) -> Matrix:
    blocks = list(blocks)
    for b in blocks[1:]:
        _check_pair(blocks[0], b)
    return Matrix._wrap(np.vstack([b.data for b in blocks]), blocks[0].field)


def block(grid) -> Matrix:
    """Assemble a matrix from a nested list of equally sized blocks."""
    return vstack(hstack(row) for row in grid)


# ------------------------------------------------------------- elimination

@numba.njit(cache=True)
def _eliminate_int64(a, q, ncols):  # pragma: no cover - compiled
    rows, cols = a.shape
    pivots = np.empty(min(rows, ncols), np.int64)
    npiv = 0
    det = 1
    r = 0
    for c in range(ncols):
        if r == rows:
            break
        p = -1
        for i in range(r, rows):
            if a[i, c] != 0:
                p = i
                break
        if p < 0:
            det = 0
            continue
        if p != r:
            for j in range(cols):
                t = a[r, j]
                a[r, j] = a[p, j]
                a[p, j] = t
            det = -det
        pv = a[r, c]
        det = det * pv % q
        e, base, inv = q - 2, pv, 1
        while e:
            if e & 1:
                inv = inv * base % q
            base = base * base % q
            e >>= 1
        for j in range(c, cols):
            a[r, j] = a[r, j] * inv % q
        for i in range(rows):
            f = a[i, c]
            if i != r and f != 0:
                for j in range(c, cols):
                    a[i, j] = (a[i, j] - f * a[r, j]) % q
        pivots[npiv] = c
        npiv += 1
        r += 1
    return pivots[:npiv], det % q


def _eliminate(arr: np.ndarray, q: int, ncols: int | None = None):
    """Gauss-Jordan on a private copy.

    Returns (reduced array, pivot columns, product of pivots with swap sign).
    Only the first ``ncols`` columns are searched for pivots.
    """
    ncols = arr.shape[1] if ncols is None else ncols
    if arr.dtype != object:
        a = np.array(arr, dtype=np.int64, order="C", copy=True)
        pivots, det = _eliminate_int64(a, q, ncols)
        return a, pivots.tolist(), int(det)
    a = arr.copy()
    rows, cols = a.shape
    pivots = []
    det = 1
    r = 0
    for c in range(ncols):
        if r == rows:
            break
        nz = np.flatnonzero(a[r:, c] != 0)
        if nz.size == 0:
            det = 0
            continue
        p = r + int(nz[0])
        if p != r:
            a[[r, p]] = a[[p, r]]
            det = -det
        pv = int(a[r, c])
        det = det * pv % q
        a[r] = (a[r] * pow(pv, q - 2, q)) % q
        col = a[:, c].copy()
        col[r] = 0
        if col.any():
            # Row r is zero left of column c, so only the trailing columns change.
            upd = np.outer(col, a[r, c:])
            upd %= q
            tail = a[:, c:]
            tail -= upd
            tail %= q
        pivots.append(c)
        r += 1
    return a, pivots, det % q


def rank(A: Matrix) -> int:
    if A.rows == 0 or A.cols == 0:
        return 0
    # Eliminate along the shorter side.
    data = A.data if A.rows <= A.cols else A.data.T
    return len(_eliminate(data, A.q)[1])


def array_rank(arr: np.ndarray, q: int) -> int:
    if arr.size == 0:
        return 0
    if arr.shape[0] > arr.shape[1]:
        arr = arr.T
    return len(_eliminate(arr, q)[1])


def det(A: Matrix) -> FieldElement:
    if A.rows != A.cols:
        raise ShapeError(f"determinant of non-square {A.shape}")
    if A.rows == 0:
        return A.field.one()
    _, pivots, d = _eliminate(A.data, A.q)
    return FieldElement(d if len(pivots) == A.rows else 0, A.field)


def is_invertible(A: Matrix) -> bool:
    return A.rows == A.cols and rank(A) == A.rows


BLOCK_INVERSE_MIN = 160


class _LeadingBlockSingular(ArithmeticError):
    pass


def _kernel_inverse(arr: np.ndarray, q: int) -> np.ndarray:
    n = arr.shape[0]
    eye = np.eye(n, dtype=np.int64).astype(arr.dtype)
    red, pivots, _ = _eliminate(np.hstack([arr, eye]), q, ncols=n)
    if len(pivots) < n:
        raise SingularMatrixError(f"matrix has rank {len(pivots)} < {n}")
    return red[:, n:]


def _block_inverse(M: np.ndarray, q: int) -> np.ndarray:
    """2 x 2 block inversion through the Schur complement, so the work is matrix products."""
    n = M.shape[0]
    if n < BLOCK_INVERSE_MIN:
        try:
            return _kernel_inverse(M, q)
        except SingularMatrixError as exc:
            raise _LeadingBlockSingular from exc
    h = n // 2
    A, B, C, D = M[:h, :h], M[:h, h:], M[h:, :h], M[h:, h:]
    Ai = _block_inverse(A, q)
    AiB = mat_mod(Ai, B, q)
    CAi = mat_mod(C, Ai, q)
    Si = _block_inverse((D - mat_mod(C, AiB, q)) % q, q)
    top_right = (-mat_mod(AiB, Si, q)) % q
    out = np.empty_like(M)
    out[:h, :h] = (Ai - mat_mod(top_right, CAi, q)) % q
    out[:h, h:] = top_right
    out[h:, :h] = (-mat_mod(Si, CAi, q)) % q
    out[h:, h:] = Si
    return out


def invert_array(arr: np.ndarray, q: int) -> np.ndarray:
    n = arr.shape[0]
    if arr.shape != (n, n):
        raise ShapeError(f"cannot invert non-square {arr.shape}")
    if arr.dtype != object and n >= BLOCK_INVERSE_MIN:
        try:
            return _block_inverse(np.asarray(arr, dtype=np.int64), q)
        except _LeadingBlockSingular:
            pass  # a leading block needs pivoting; the row-swapping kernel decides
    return _kernel_inverse(arr, q)


def invert(A: Matrix) -> Matrix:
    return Matrix._wrap(invert_array(A.data, A.q), A.field)


def solve(A: Matrix, B: Matrix) -> Matrix:
    """X with A·X = B for square invertible A."""
    _check_pair(A, B)
    if A.rows != A.cols:
        raise ShapeError(f"cannot solve with non-square {A.shape}")
    if B.rows != A.rows:
        raise ShapeError(f"right-hand side {B.shape} does not match {A.shape}")
    red, pivots, _ = _eliminate(np.hstack([A.data, B.data]), A.q, ncols=A.cols)
    if len(pivots) < A.rows:
        raise SingularMatrixError(f"matrix has rank {len(pivots)} < {A.rows}")
    return Matrix._wrap(red[:, A.cols:], A.field)


# ----------------------------------------------------------- constructions

def vandermonde(m: int, points, field: PrimeField) -> Matrix:
    """m x n matrix whose row i holds the points raised to the power i."""
    pts = [int(p) % field.q for p in points]
    if len(set(pts)) != len(pts):
        raise ValueError(f"Vandermonde points must be distinct, got {pts}")
    rows = [[pow(p, i, field.q) for p in pts] for i in range(m)]
    return Matrix(np.array(rows, dtype=object).reshape(m, len(pts)), field)


def nullspace_systematic(C: Matrix) -> Matrix:
    """Systematic parity check [-P | I] annihilating the columns of C.

    C is N x E with an invertible top E x E block; P = C_bot · C_top^{-1}.
    """
    n, e = C.shape
    if e == 0:
        return identity(n, C.field)
    if n < e:
        raise ShapeError(f"generator {C.shape} has more columns than rows")
    top = C.data[:e]
    try:
        top_inv = invert_array(top, C.q)
    except SingularMatrixError as exc:
        raise SingularMatrixError("top block of the generator is singular") from exc
    P = mat_mod(C.data[e:], top_inv, C.q)
    H = np.hstack([(-P) % C.q, np.eye(n - e, dtype=np.int64).astype(C.field.dtype)])
    return Matrix._wrap(H, C.field)


def mds_subset_count(m: int, k: int) -> int:
    return math.comb(m, k)


def is_mds(G: Matrix, limit: int | None = None) -> bool:
    """True iff every k x k row-submatrix of the m x k matrix G is invertible.

    The check is exhaustive over C(m, k) subsets. ``limit`` guards against
    accidentally launching an astronomically long check.
    """
    m, k = G.shape
    if m < k:
        raise ShapeError(f"is_mds needs rows >= cols, got {G.shape}")
    if limit is not None and math.comb(m, k) > limit:
        raise ValueError(f"C({m},{k}) = {math.comb(m, k)} subsets exceeds limit {limit}")
    return first_singular_rows(G) is None


def first_singular_rows(G: Matrix):
    """The first row subset (lexicographic) whose square submatrix is singular, or None."""
    m, k = G.shape
    if k == 0:
        return None
    for rows in combinations(range(m), k):
        if len(_eliminate(G.data[list(rows)], G.q)[1]) < k:
            return rows
    return None


def random_full_rank(n: int, field: PrimeField, rng: np.random.Generator) -> Matrix:
    """Uniform element of GL_n(GF(q)) by rejection from uniform n x n matrices."""
    while True:
        cand = field.random(rng, (n, n))
        if n == 0:
            return Matrix._wrap(cand, field)
        try:
            invert_array(cand, field.q)
        except SingularMatrixError:
            continue
        return Matrix._wrap(cand, field)


# ------------------------------------------------------------- text format

def to_text(A: Matrix) -> str:
    lines = [f"{A.rows} {A.cols} {A.q}"]
    lines += [" ".join(str(v) for v in row) for row in A.tolist()]
    return "\n".join(lines) + "\n"


def from_text(text: str) -> Matrix:
    tokens = text.split()
    if len(tokens) < 3:
        raise ValueError("matrix text needs a 'rows cols q' header")
    rows, cols, q = (int(t) for t in tokens[:3])
    body = tokens[3:]
    if len(body) != rows * cols:
        raise ShapeError(f"header says {rows}x{cols} but {len(body)} entries follow")
    arr = np.array([int(t) for t in body], dtype=object).reshape(rows, cols)
    return Matrix(arr, PrimeField(q))


def first_singular_block_rows(G: Matrix, block: int, count: int):
    """First set of ``count`` block rows (each ``block`` rows tall) lacking full row rank.

    Blocks are numbered from 1. Returns None when every such row set has
    rank ``count * block``.
    """
    if G.rows % block:
        raise ShapeError(f"{G.rows} rows do not split into blocks of {block}")
    nblocks = G.rows // block
    need = count * block
    if need > G.cols:
        return tuple(range(1, count + 1))
    if need == G.cols and need < G.rows < 2 * need and math.comb(nblocks, count) > 2:
        return _first_singular_block_rows_dual(G, block, count)
    for subset in combinations(range(nblocks), count):
        rows = np.concatenate([np.arange(s * block, (s + 1) * block) for s in subset])
        if array_rank(G.data[rows], G.q) < need:
            return tuple(s + 1 for s in subset)
    return None


def left_nullspace(arr: np.ndarray, q: int) -> np.ndarray:
    """Rows spanning {x : x·arr = 0}, one per free column of arr^T."""
    m = arr.shape[0]
    red, pivots, _ = _eliminate(arr.T, q)
    free = [c for c in range(m) if c not in set(pivots)]
    H = np.zeros((len(free), m), dtype=np.int64).astype(arr.dtype)
    for i, f in enumerate(free):
        H[i, f] = 1
        for r, pc in enumerate(pivots):
            H[i, pc] = (-red[r, f]) % q
    return H


def _first_singular_block_rows_dual(G: Matrix, block: int, count: int):
    # For G of full column rank k with left null space H, a k-row subset of G is
    # invertible iff the columns of H outside it are independent.
    nblocks = G.rows // block
    H = left_nullspace(G.data, G.q)
    if H.shape[0] != G.rows - G.cols:
        return tuple(range(1, count + 1))
    for subset in combinations(range(nblocks), count):
        rest = [s for s in range(nblocks) if s not in subset]
        cols = np.concatenate([np.arange(s * block, (s + 1) * block) for s in rest])
        if array_rank(H[:, cols], G.q) < H.shape[0]:
            return tuple(s + 1 for s in subset)
    return None
