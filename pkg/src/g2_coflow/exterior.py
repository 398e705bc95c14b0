"""
Exterior algebra kernels on R^7.

A p-form is stored densely over the C(7, p) strictly increasing index tuples
(lexicographic order, 0-based indices). Every kernel accepts arbitrary leading
axes so that the same code serves a single point and a whole lattice.
"""
import functools
import itertools
import math
import typing

import numpy as np

DIM = 7


def combinations(degree: int) -> typing.Tuple[typing.Tuple[int, ...], ...]:
    """Strictly increasing index tuples of the given degree, in storage order."""
    return _COMBINATIONS[degree]


def n_components(degree: int) -> int:
    return math.comb(DIM, degree)


def component_index(indices: typing.Sequence[int]) -> typing.Tuple[int, int]:
    """
    Storage position and sign of an arbitrary index tuple

        Parameters:
            indices (Sequence[int]): 0-based indices, in any order

        Returns:
            (position, sign) with sign 0 when an index repeats
    """
    sign = permutation_sign(indices)
    if sign == 0:
        return 0, 0
    return _POSITIONS[len(indices)][tuple(sorted(indices))], sign


def permutation_sign(indices: typing.Sequence[int]) -> int:
    """Sign of the permutation sorting ``indices``; 0 if an index repeats."""
    items = list(indices)
    if len(set(items)) != len(items):
        return 0
    sign = 1
    for i in range(len(items)):
        for j in range(i + 1, len(items)):
            if items[i] > items[j]:
                sign = -sign
    return sign


_COMBINATIONS = tuple(tuple(itertools.combinations(range(DIM), p)) for p in range(DIM + 1))
_POSITIONS = tuple({c: n for n, c in enumerate(_COMBINATIONS[p])} for p in range(DIM + 1))


@functools.lru_cache(maxsize=None)
def wedge_table(p: int, q: int) -> np.ndarray:
    """
    Structure constants W[I, J, K] of the wedge product, so that
    (a ∧ b)_K = Σ W[I, J, K] a_I b_J.
    """
    table = np.zeros((n_components(p), n_components(q), n_components(p + q)))
    if p + q > DIM:
        return table
    for i, left in enumerate(combinations(p)):
        for j, right in enumerate(combinations(q)):
            position, sign = component_index(left + right)
            if sign:
                table[i, j, position] = sign
    table.setflags(write=False)
    return table


@functools.lru_cache(maxsize=None)
def interior_table(p: int) -> np.ndarray:
    """
    Table N[v, I, J] with (∂_v ⌟ a)_J = Σ_I N[v, I, J] a_I for a p-form a, p ≥ 1.
    """
    table = np.zeros((DIM, n_components(p), n_components(p - 1)))
    for i, indices in enumerate(combinations(p)):
        for slot, v in enumerate(indices):
            rest = indices[:slot] + indices[slot + 1:]
            table[v, i, _POSITIONS[p - 1][rest]] = (-1) ** slot
    table.setflags(write=False)
    return table


@functools.lru_cache(maxsize=None)
def expansion_table(p: int) -> np.ndarray:
    """Matrix E[I, flat] mapping components to the flattened full antisymmetric 7^p array."""
    table = np.zeros((n_components(p), DIM ** p))
    for flat, indices in enumerate(itertools.product(range(DIM), repeat=p)):
        position, sign = component_index(indices)
        if sign:
            table[position, flat] = sign
    table.setflags(write=False)
    return table


@functools.lru_cache(maxsize=None)
def _increasing_flat_positions(p: int) -> np.ndarray:
    if p == 0:
        return np.zeros(1, dtype=np.intp)
    return np.array([np.ravel_multi_index(c, (DIM,) * p) for c in combinations(p)], dtype=np.intp)


@functools.lru_cache(maxsize=None)
def complement_map(p: int) -> typing.Tuple[np.ndarray, np.ndarray]:
    """
    For each increasing p-tuple I, the storage position of its complement J in
    degree 7 - p and the sign of the permutation (I, J).
    """
    positions = np.zeros(n_components(p), dtype=np.intp)
    signs = np.zeros(n_components(p))
    for i, indices in enumerate(combinations(p)):
        rest = tuple(k for k in range(DIM) if k not in indices)
        positions[i] = _POSITIONS[DIM - p][rest]
        signs[i] = permutation_sign(indices + rest)
    return positions, signs


def to_tensor(components: np.ndarray, p: int) -> np.ndarray:
    """Expand trailing component storage of a p-form into a full antisymmetric (7,)*p array."""
    lead = components.shape[:-1]
    full = components @ expansion_table(p)
    return full.reshape(lead + (DIM,) * p)


def from_tensor(tensor: np.ndarray, p: int) -> np.ndarray:
    """Read the increasing-tuple components of a full antisymmetric array (no antisymmetrisation)."""
    lead = tensor.shape[: tensor.ndim - p]
    flat = tensor.reshape(lead + (DIM ** p,))
    return flat[..., _increasing_flat_positions(p)]


def antisymmetrize(tensor: np.ndarray, p: int) -> np.ndarray:
    """Components of the antisymmetric part of a (7,)*p array."""
    lead = tensor.shape[: tensor.ndim - p]
    flat = tensor.reshape(lead + (DIM ** p,))
    return flat @ expansion_table(p).T / math.factorial(p)


def wedge(a: np.ndarray, p: int, b: np.ndarray, q: int) -> np.ndarray:
    return np.einsum("IJK,...I,...J->...K", wedge_table(p, q), a, b, optimize=True)


def interior(vector: np.ndarray, a: np.ndarray, p: int) -> np.ndarray:
    """Interior product X ⌟ a of a vector X^v with a p-form."""
    return np.einsum("vIJ,...v,...I->...J", interior_table(p), vector, a, optimize=True)


def interior_all(a: np.ndarray, p: int) -> np.ndarray:
    """Stack of ∂_v ⌟ a over v, shape (..., 7, C(7, p-1))."""
    return np.einsum("vIJ,...I->...vJ", interior_table(p), a, optimize=True)


@functools.lru_cache(maxsize=None)
def _minor_indices(p: int) -> typing.Tuple[np.ndarray, np.ndarray]:
    rows = np.array(combinations(p), dtype=np.intp).reshape(n_components(p), p)
    return rows[:, None, :, None], rows[None, :, None, :]


def compound(matrix: np.ndarray, p: int) -> np.ndarray:
    """
    p-th compound matrix (all p×p minors) of a (..., 7, 7) matrix

    Acting with the compound of g⁻¹ raises every index of a p-form in storage form.
    """
    lead = matrix.shape[:-2]
    if p == 0:
        return np.ones(lead + (1, 1))
    if p == 1:
        return matrix.copy()
    rows, cols = _minor_indices(p)
    blocks = matrix[..., rows, cols]
    return np.linalg.det(blocks)


def raise_all(a: np.ndarray, p: int, g_inv: np.ndarray) -> np.ndarray:
    """Components of a with every index raised by g⁻¹."""
    if p == 0:
        return a.copy()
    return np.einsum("...IJ,...J->...I", compound(g_inv, p), a)


def hodge_star(a: np.ndarray, p: int, g_inv: np.ndarray, vol: np.ndarray) -> np.ndarray:
    """
    Hodge star of a p-form for the positively ordered coordinate orientation

        Parameters:
            a (np.ndarray): components, shape (..., C(7, p))
            p (int): degree
            g_inv (np.ndarray): inverse metric, shape (..., 7, 7)
            vol (np.ndarray): √det g, shape (...)

        Returns:
            components of ∗a, shape (..., C(7, 7 - p))
    """
    raised = raise_all(a, p, g_inv)
    positions, signs = complement_map(p)
    out = np.empty(a.shape[:-1] + (n_components(DIM - p),))
    out[..., positions] = np.asarray(vol)[..., None] * signs * raised
    return out


def inner_product(a: np.ndarray, b: np.ndarray, p: int, g_inv: np.ndarray) -> np.ndarray:
    """Form inner product ⟨a, b⟩_g (full-tensor contraction divided by p!)."""
    return np.einsum("...I,...I->...", a, raise_all(b, p, g_inv))


def tensor_norm_squared(a: np.ndarray, p: int, g_inv: np.ndarray) -> np.ndarray:
    """Full-index norm |a|² = p! ⟨a, a⟩, the convention giving |φ0|² = 42."""
    return math.factorial(p) * inner_product(a, a, p, g_inv)
