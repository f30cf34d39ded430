"""
Training one gate head
======================

Train a single binary retrieval head on a separable synthetic cloud and watch
the per-epoch trace. The trained head serializes to a single JSON file.
"""

import tempfile
from pathlib import Path

import numpy as np

from uar.classifier import TrainConfig, load_file, save_file, train
from uar.features import FeatureDataset, FeatureRecord, Label, Scenario, split_dataset

rng = np.random.Generator(np.random.PCG64(21))

# retrieve-cluster around +3 on axis 0, no-retrieve around -3
records = []
for i in range(600):
    positive = i % 2 == 0
    center = np.array([3.0 if positive else -3.0, 0.0, 0.0, 0.0])
    records.append(
        FeatureRecord(
            id=f"cloud-{i:04d}",
            vector=(center + rng.normal(scale=0.5, size=4)).astype(np.float32),
            scenario=Scenario.SELF,
            label=Label.RETRIEVE if positive else Label.NO_RETRIEVE,
        )
    )
dataset = FeatureDataset(dim=4, records=records)
train_ds, valid_ds = split_dataset(dataset, seed=0)
print(f"train {len(train_ds.records)} / valid {len(valid_ds.records)}")

config = TrainConfig(learning_rate=5e-5, batch_size=32, epochs=10, seed=0)
head = train(train_ds, valid_ds, config)

for epoch, (loss, acc) in enumerate(
    zip(head.training_meta["epoch_train_loss"], head.training_meta["epoch_validation_accuracy"]),
    start=1,
):
    print(f"epoch {epoch:2d}  loss {loss:.6f}  valid acc {acc:.4f}")
print(f"best epoch {head.training_meta['best_epoch']}, "
      f"validation accuracy {head.training_meta['validation_accuracy']:.4f}")

path = Path(tempfile.mkdtemp()) / "self_head.json"
save_file(head, path)
restored = load_file(path)
print(f"weights intact after reload: {np.array_equal(restored.weights, head.weights)}")
