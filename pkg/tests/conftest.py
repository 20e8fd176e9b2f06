import numpy as np
from hypothesis import settings

from melbeam.scene import MIC_SPACING, CabinSpec

# property tests must replay identically between runs
settings.register_profile("repeatable", derandomize=True, deadline=None)
settings.load_profile("repeatable")


def mic_centered_cabin(rt60=0.0, mic_center=(1.4, 0.75, 0.65), axis=1, seed=0):
    """Cabin with the mic pair at an arbitrary interior point, along one axis."""
    center = np.asarray(mic_center, dtype=float)
    offset = np.zeros(3)
    offset[axis] = MIC_SPACING / 2
    return CabinSpec(
        dims=(2.8, 1.5, 1.3),
        rt60=rt60,
        mic_array=[center - offset, center + offset],
        zones=[[1.0, 0.35, 0.95], [1.0, 1.15, 0.95], [2.2, 0.35, 0.95], [2.2, 1.15, 0.95]],
        loudspeaker_pos=[0.15, 0.25, 0.6],
        noise_pos=[0.12, 0.75, 0.3],
        seed=seed,
    )
