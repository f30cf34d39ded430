import numpy as np
import pytest

from uar.features import FeatureDataset, FeatureRecord, Label, Scenario


def random_record(rng, idx, dim, scenario=Scenario.UNSPECIFIED, with_text=False):
    label = Label.RETRIEVE if rng.random() < 0.5 else Label.NO_RETRIEVE
    return FeatureRecord(
        id=f"rec-{idx:05d}",
        vector=rng.standard_normal(dim).astype(np.float32),
        scenario=scenario,
        label=label,
        text=f"instruction number {idx}" if with_text else None,
    )


def random_dataset(seed, n, dim, scenario=Scenario.UNSPECIFIED, with_text=False, provenance=""):
    rng = np.random.Generator(np.random.PCG64(seed))
    records = [random_record(rng, i, dim, scenario, with_text) for i in range(n)]
    return FeatureDataset(dim=dim, records=records, provenance=provenance)


@pytest.fixture
def tiny_dataset():
    return random_dataset(seed=7, n=12, dim=4, with_text=True, provenance="unit-test")


def separable_clusters(seed=1, per_class=500, mean_x=3.0, sigma=0.5, scenario=Scenario.UNSPECIFIED):
    """Two Gaussian clusters in the plane, retrieve at (+mean_x, 0)."""
    rng = np.random.Generator(np.random.PCG64(seed))
    records = []
    for i in range(per_class):
        vec = rng.normal(loc=(mean_x, 0.0), scale=sigma, size=2).astype(np.float32)
        records.append(FeatureRecord(id=f"pos-{i:04d}", vector=vec, scenario=scenario, label=Label.RETRIEVE))
        vec = rng.normal(loc=(-mean_x, 0.0), scale=sigma, size=2).astype(np.float32)
        records.append(FeatureRecord(id=f"neg-{i:04d}", vector=vec, scenario=scenario, label=Label.NO_RETRIEVE))
    return FeatureDataset(dim=2, records=records, provenance="separable fixture")


def brute_force_separator_exists(ds, angles=720):
    """Search directions on an angle grid for a margin between the classes."""
    X = ds.matrix().astype(np.float64)
    y = ds.labels_array()
    for theta in np.linspace(0.0, np.pi, angles, endpoint=False):
        proj = X @ np.array([np.cos(theta), np.sin(theta)])
        pos, neg = proj[y == 1], proj[y == 0]
        if pos.min() > neg.max() or neg.min() > pos.max():
            return True
    return False
