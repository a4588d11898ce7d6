"""Exact linear algebra over the rationals for topology matrices.

Incidence data is integral, so ranks, determinants, nullspaces and the
splitting matrices are computed with :class:`fractions.Fraction` entries;
floating point is confined to the dynamics.  Matrices are lists of lists.
"""

from __future__ import annotations

from fractions import Fraction

import numpy as np

Matrix = list[list[Fraction]]


def mat(rows) -> Matrix:
    return [[Fraction(x) for x in row] for row in rows]


def zeros(r: int, c: int) -> Matrix:
    return [[Fraction(0)] * c for _ in range(r)]


def identity(n: int) -> Matrix:
    return [[Fraction(int(i == j)) for j in range(n)] for i in range(n)]


def shape(a: Matrix) -> tuple[int, int]:
    return (len(a), len(a[0]) if a else 0)


def transpose(a: Matrix) -> Matrix:
    r, c = shape(a)
    return [[a[i][j] for i in range(r)] for j in range(c)]


def matmul(a: Matrix, b: Matrix) -> Matrix:
    ra, ca = shape(a)
    rb, cb = shape(b)
    if ca != rb:
        raise ValueError(f"shape mismatch {ra}x{ca} @ {rb}x{cb}")
    return [[sum((a[i][k] * b[k][j] for k in range(ca)), Fraction(0))
             for j in range(cb)] for i in range(ra)]


def is_zero(a: Matrix) -> bool:
    return all(x == 0 for row in a for x in row)


def _echelon(a: Matrix) -> tuple[Matrix, list[int]]:
    """Row-reduce a copy to reduced echelon form; returns (rref, pivot cols)."""
    m = [row[:] for row in a]
    rows, cols = shape(m)
    pivots = []
    r = 0
    for c in range(cols):
        pivot = next((i for i in range(r, rows) if m[i][c] != 0), None)
        if pivot is None:
            continue
        m[r], m[pivot] = m[pivot], m[r]
        inv = 1 / m[r][c]
        m[r] = [x * inv for x in m[r]]
        for i in range(rows):
            if i != r and m[i][c] != 0:
                factor = m[i][c]
                m[i] = [x - factor * y for x, y in zip(m[i], m[r])]
        pivots.append(c)
        r += 1
        if r == rows:
            break
    return m, pivots


def rank(a: Matrix) -> int:
    if not a or not a[0]:
        return 0
    return len(_echelon(a)[1])


def det(a: Matrix) -> Fraction:
    n, c = shape(a)
    if n != c:
        raise ValueError("determinant of a non-square matrix")
    m = [row[:] for row in a]
    result = Fraction(1)
    for col in range(n):
        pivot = next((i for i in range(col, n) if m[i][col] != 0), None)
        if pivot is None:
            return Fraction(0)
        if pivot != col:
            m[col], m[pivot] = m[pivot], m[col]
            result = -result
        result *= m[col][col]
        inv = 1 / m[col][col]
        for i in range(col + 1, n):
            if m[i][col] != 0:
                factor = m[i][col] * inv
                m[i] = [x - factor * y for x, y in zip(m[i], m[col])]
    return result


def nullspace(a: Matrix) -> list[list[Fraction]]:
    """Basis of {x : a @ x = 0}, one vector per free column of the rref."""
    rows, cols = shape(a)
    if cols == 0:
        return []
    if rows == 0:
        return [[Fraction(int(i == j)) for i in range(cols)] for j in range(cols)]
    red, pivots = _echelon(a)
    free = [c for c in range(cols) if c not in pivots]
    basis = []
    for f in free:
        v = [Fraction(0)] * cols
        v[f] = Fraction(1)
        for r, p in enumerate(pivots):
            v[p] = -red[r][f]
        basis.append(v)
    return basis


def inverse(a: Matrix) -> Matrix:
    n, c = shape(a)
    if n != c:
        raise ValueError("inverse of a non-square matrix")
    aug = [row[:] + ident_row for row, ident_row in zip(a, identity(n))]
    red, pivots = _echelon(aug)
    if pivots[:n] != list(range(n)):
        raise ValueError("matrix is singular")
    return [row[n:] for row in red]


def to_float(a: Matrix) -> np.ndarray:
    r, c = shape(a)
    out = np.empty((r, c), dtype=float)
    for i in range(r):
        for j in range(c):
            out[i, j] = float(a[i][j])
    return out


def row_space_equal(a: Matrix, b: Matrix) -> bool:
    """True when the two matrices span the same row space."""
    if shape(a)[1] != shape(b)[1]:
        return False
    ra, rb = rank(a), rank(b)
    return ra == rb == rank(a + b)
