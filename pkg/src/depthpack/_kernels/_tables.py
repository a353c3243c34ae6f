"""Constants shared by the native and numpy block-codec kernels."""

import numpy as np

BLOCK = 8


def _dct_basis() -> np.ndarray:
    """Orthonormal 8x8 DCT-II basis; forward transform is C @ block @ C.T."""
    u = np.arange(BLOCK).reshape(-1, 1)
    x = np.arange(BLOCK).reshape(1, -1)
    c = 0.5 * np.cos((2 * x + 1) * u * np.pi / (2 * BLOCK))
    c[0, :] /= np.sqrt(2.0)
    return np.ascontiguousarray(c)


def _zigzag_order() -> np.ndarray:
    """Flat indices of the standard 8x8 zigzag scan."""
    cells = [(i, j) for i in range(BLOCK) for j in range(BLOCK)]
    cells.sort(key=lambda ij: (ij[0] + ij[1], ij[0] if (ij[0] + ij[1]) % 2 else -ij[0]))
    return np.array([i * BLOCK + j for i, j in cells], dtype=np.int64)


DCT_BASIS = _dct_basis()
ZIGZAG = _zigzag_order()
