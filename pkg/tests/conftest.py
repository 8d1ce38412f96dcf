import numpy as np
import pytest

from hsidj import GroundTruth, HSICube, SplitConfig, SynthConfig, disjoint_split, synth_dataset


@pytest.fixture
def tiny_pair():
    """5x4 scene with 2 bands and three classes; values encode position."""
    rows, cols, bands = 5, 4, 2
    values = np.arange(rows * cols * bands, dtype=np.float32).reshape(rows, cols, bands)
    labels = np.zeros((rows, cols), dtype=np.int32)
    labels[0, :] = 1
    labels[2, 1:3] = 2
    labels[4, :] = 3
    return HSICube(values), GroundTruth(labels)


@pytest.fixture(scope="session")
def noisy_scene():
    """Seeded 24x24x4 synthetic scene, noisy enough that models make mistakes."""
    cfg = SynthConfig(
        rows=24, cols=24, bands=4, num_classes=3, blob_count=6,
        class_separation=3.0, noise_sigma=2.0, seed=11,
    )
    return synth_dataset(cfg)


@pytest.fixture(scope="session")
def noisy_split(noisy_scene):
    _, gt = noisy_scene
    return disjoint_split(gt, SplitConfig(test_ratio=0.7, val_ratio=0.5, seed=11))
