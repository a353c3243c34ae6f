import numpy as np
import pytest

from depthpack.datasets import synth_sequence
from depthpack.types import DepthMap


def make_mixed_sequence(n_frames=48, width=64, height=64, seed=23, fps=30.0):
    """Alternating detailed/flat segments; drives per-frame optimum switches."""
    detailed, cams = synth_sequence("flythrough", n_frames, width, height, seed, fps=fps)
    maps = []
    for i in range(n_frames):
        if (i // 8) % 2 == 0:
            values = detailed[i].values
        else:
            flat = np.full((height, width), 0.4, np.float32)
            values = np.clip(flat + np.float32(0.02 * np.sin(i / 4.0)), 0.0, 1.0)
        maps.append(DepthMap(width, height, values, frame_index=i, timestamp=i / fps))
    return maps, cams


@pytest.fixture(scope="session")
def flythrough_60():
    maps, cams = synth_sequence("flythrough", 60, 64, 64, seed=7, fps=30.0)
    return maps, cams
