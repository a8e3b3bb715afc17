"""Index arithmetic over finite product spaces.

Every setting is handled as a tuple of domain indices. Flat codes use
mixed radix with the first variable most significant, so sorting codes is
the same as the lexicographic order induced by declaration order.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np


def strides(sizes: Sequence[int]) -> tuple[int, ...]:
    out = []
    acc = 1
    for s in reversed(sizes):
        out.append(acc)
        acc *= s
    return tuple(reversed(out))


def total(sizes: Sequence[int]) -> int:
    return int(np.prod(sizes, dtype=np.int64)) if sizes else 1


def encode(indices: Sequence[np.ndarray], sizes: Sequence[int]) -> np.ndarray:
    code = np.asarray(0, dtype=np.int64)
    for idx, st in zip(indices, strides(sizes)):
        code = code + np.asarray(idx, dtype=np.int64) * st
    return code


def decode(codes: np.ndarray, sizes: Sequence[int]) -> list[np.ndarray]:
    codes = np.asarray(codes, dtype=np.int64)
    return [(codes // st) % s for st, s in zip(strides(sizes), sizes)]


def enumerate_indices(sizes: Sequence[int]) -> list[np.ndarray]:
    """Flat index arrays of every point of the product, in canonical order."""
    return decode(np.arange(total(sizes), dtype=np.int64), sizes)


def embed(arr: np.ndarray, arr_axes: Sequence[str], axes: Sequence[str]) -> np.ndarray:
    """View ``arr`` (one axis per name in ``arr_axes``) as broadcastable over ``axes``."""
    arr = np.asarray(arr)
    pos = {name: n for n, name in enumerate(axes)}
    order = sorted(range(len(arr_axes)), key=lambda n: pos[arr_axes[n]])
    if arr.ndim:
        arr = np.transpose(arr, order)
    shape = [1] * len(axes)
    for k, n in enumerate(order):
        shape[pos[arr_axes[n]]] = arr.shape[k]
    return arr.reshape(shape)
