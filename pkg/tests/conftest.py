import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from ualc.core import LanePointSet, PerceptionFrame, UncertaintyProfile, default_stations

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def make_frame(left=1.85, right=-1.85, path=0.0, conf=0.9, sigma_sq=0.01, model_sq=0.0, tick=0, pose=(0.0, 0.0, 0.0)):
    """Frame with constant offsets and variances."""
    s = default_stations()

    def pts(v):
        return LanePointSet(np.broadcast_to(np.asarray(v, dtype=float), s.shape).copy(), s)

    def unc():
        return UncertaintyProfile(np.full(s.size, sigma_sq), np.full(s.size, model_sq))

    lane = float(np.sqrt(conf))
    return PerceptionFrame(
        pts(left), pts(right), pts(path), unc(), unc(), unc(), lane, lane, conf, tick, tick * 0.05, pose
    )


@pytest.fixture
def frame_factory():
    return make_frame
