import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from gsv.gaussians import Gaussian, GaussianSet
from gsv.synth import SceneSpec, gen_synthetic_scene


def make_gaussian(position=(0.0, 0.0, 0.0), rotation=(1.0, 0.0, 0.0, 0.0),
                  scales=(0.01, 0.01, 0.01), opacity=0.5, sh_degree=1,
                  sh_value=0.2) -> Gaussian:
    from gsv.gaussians import sh_coeff_count

    return Gaussian(
        position=np.asarray(position, dtype=np.float64),
        rotation=np.asarray(rotation, dtype=np.float64),
        scales=np.asarray(scales, dtype=np.float64),
        opacity=float(opacity),
        sh=np.full(sh_coeff_count(sh_degree), sh_value, dtype=np.float64),
    )


def random_set(n=50, seed=0, sh_degree=1) -> GaussianSet:
    return gen_synthetic_scene(SceneSpec(count=n, frames=1, sh_degree=sh_degree), seed)[0]


@pytest.fixture
def small_set() -> GaussianSet:
    return random_set(n=40, seed=11)


@pytest.fixture
def moving_scene():
    spec = SceneSpec(count=90, frames=5, sh_degree=1, amplitude=0.002,
                     rotation_amplitude=0.02, scale_amplitude=0.0004,
                     opacity_amplitude=0.01, sh_amplitude=0.004)
    return gen_synthetic_scene(spec, seed=5)
