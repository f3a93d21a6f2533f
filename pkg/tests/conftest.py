import numpy as np
import pytest

from xsumx.types import Fragment, Fragmentation, FrameFeatures, VideoBundle


def equal_fragmentation(n_fragments: int, frames_per_fragment: int) -> Fragmentation:
    return Fragmentation(
        tuple(
            Fragment(k * frames_per_fragment, (k + 1) * frames_per_fragment - 1)
            for k in range(n_fragments)
        )
    )


def make_bundle(
    n_fragments=4,
    frames_per_fragment=3,
    dim=6,
    seed=0,
    video_id="test",
    frames=None,
    segmentation=None,
) -> VideoBundle:
    rng = np.random.default_rng(seed)
    n = n_fragments * frames_per_fragment
    return VideoBundle(
        video_id=video_id,
        features=FrameFeatures(rng.uniform(0.1, 1.0, size=(n, dim)).astype(np.float32)),
        fragmentation=equal_fragmentation(n_fragments, frames_per_fragment),
        frames=frames,
        segmentation=segmentation,
    )


@pytest.fixture
def bundle():
    return make_bundle()
