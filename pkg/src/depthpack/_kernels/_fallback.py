"""Pure-numpy implementation of the hot block-codec kernel.

Used when the compiled extension is unavailable (or explicitly requested via
DEPTHPACK_KERNELS=numpy). Semantics match the native kernel; tiny float
differences from summation order are possible but harmless at the tested
tolerances.
"""

import numpy as np

from ._tables import BLOCK, DCT_BASIS, ZIGZAG

_COL_IDX = np.arange(64, dtype=np.int64)


def _ue_len(v: np.ndarray) -> np.ndarray:
    # unsigned exp-Golomb length: 2*floor(log2(v+1)) + 1
    _, e = np.frexp((v + 1).astype(np.float64))
    return 2 * (e.astype(np.int64) - 1) + 1


def _bit_cost(levels: np.ndarray) -> int:
    """Code-length accounting over zigzag-ordered levels, one row per block.

    Each block costs 1 flag bit; a non-empty block adds, per nonzero level,
    ue(run of zeros before it) + ue(|level|) + 1 sign bit, plus 1 EOB bit.
    """
    zz = levels[:, ZIGZAG]
    nz = zz != 0
    marked = np.where(nz, _COL_IDX[None, :], -1)
    prev = np.maximum.accumulate(marked, axis=1)
    prev_before = np.concatenate(
        [np.full((zz.shape[0], 1), -1, dtype=np.int64), prev[:, :-1]], axis=1
    )
    run = _COL_IDX[None, :] - prev_before - 1
    per_coef = _ue_len(run) + _ue_len(np.abs(zz)) + 1
    per_block = np.where(nz, per_coef, 0).sum(axis=1)
    any_nz = nz.any(axis=1)
    return int((1 + np.where(any_nz, per_block + 1, 0)).sum())


def encode_plane(residual: np.ndarray, step: float):
    """Transform-code one residual plane (dims must be multiples of 8).

    Returns (bit_count, reconstructed_residual): 8x8 DCT-II per block,
    uniform quantization by `step` with round-half-away, exp-Golomb bit
    accounting in zigzag order, then dequantized inverse transform.
    """
    h, w = residual.shape
    nb = (h // BLOCK) * (w // BLOCK)
    blocks = (
        residual.reshape(h // BLOCK, BLOCK, w // BLOCK, BLOCK)
        .swapaxes(1, 2)
        .reshape(nb, BLOCK, BLOCK)
    )
    coef = DCT_BASIS @ blocks @ DCT_BASIS.T
    levels = np.sign(coef) * np.floor(np.abs(coef) / step + 0.5)
    bits = _bit_cost(levels.reshape(nb, 64).astype(np.int64))
    recon = DCT_BASIS.T @ (levels * step) @ DCT_BASIS
    recon = (
        recon.reshape(h // BLOCK, w // BLOCK, BLOCK, BLOCK)
        .swapaxes(1, 2)
        .reshape(h, w)
    )
    return bits, recon
