import numpy as np
import pytest

from dyadic_intent.intent import SUPPORTED_CELLS
from dyadic_intent.simulator import NoiseConfig, SceneConfig, policies_for_cell, simulate


def run_cell(cell, seed, scene=None, base=None, duration=16.0):
    """Simulate one session of ``cell``; policy draws and physics share ``seed``."""
    scene = scene or SceneConfig()
    policies, assignment, kcg = policies_for_cell(cell, np.random.default_rng([seed, 1]),
                                                  scene.layout.n_goals, base)
    raw, truth = simulate(scene, policies, seed, duration=duration, kcg=kcg, assignment=assignment)
    return raw, truth, policies


@pytest.fixture(scope="session")
def quiet_scene():
    return SceneConfig(noise=NoiseConfig.noiseless())


@pytest.fixture(scope="session")
def quiet_cells(quiet_scene):
    """One noiseless session per supported taxonomy cell."""
    return {cell: run_cell(cell, i, quiet_scene) for i, cell in enumerate(SUPPORTED_CELLS)}


@pytest.fixture(scope="session")
def noisy_cells():
    """One default-noise session per supported taxonomy cell."""
    return {cell: run_cell(cell, 100 + i) for i, cell in enumerate(SUPPORTED_CELLS)}
