"""
FID and IS on synthetic palettes
--------------------------------

The scores use a fixed random CNN as the feature extractor, so they rank sets
against each other but are not comparable with published numbers.

"""

import numpy as np

from tsit.data import make_synthetic_dataset
from tsit.evaluation import default_extractor, evaluate_images, palette_classifier

ds = make_synthetic_dataset(n=32, h=32, w=32, seed=0)
reference = ds.targets.astype(np.float64)
fx = default_extractor()
clf = palette_classifier(fx)
noise = np.random.default_rng(1).standard_normal(reference.shape)

for level in (0.0, 0.05, 0.1, 0.2, 0.4):
    report = evaluate_images(np.clip(reference + level * noise, -1, 1), reference, fx, clf)
    print(f"noise {level:4.2f}  FID {report.fid:8.4f}  IS {report.is_mean:.3f}")

# %% the report text round-trips through the parser used by the CLI tests
print(report.text())
