"""Build a phantom chest volume, segment the lungs and read off image features."""

import numpy as np

from ctoutcomes.features import (FEATURE_NAMES, assemble_features, dice, extract_image_features,
                                 rve)
from ctoutcomes.phantom import make_scan
from ctoutcomes.segment import baseline_lung_segment, connected_components_3d

rng = np.random.default_rng(0)

# A phantom scan: body, fat and muscle rings, two lungs and a lesion in the left lung.
# The generator also returns the analytic masks and the true feature values.
scan = make_scan(rng, dims=(48, 40, 20), spacing=(8.0, 8.0, 16.0))
hu = scan.grid.values
print("volume shape (z, y, x):", hu.shape, "dtype:", hu.dtype)
print("HU range:", hu.min(), "to", hu.max())

# Air-like voxels form several components: background air and the two lungs
air = (hu >= -1000) & (hu <= -400)
cc = connected_components_3d(air, connectivity=26)
print("air components:", cc.n_components, "sizes:", sorted(cc.component_sizes.values(), reverse=True)[:4])

# The threshold segmenter drops anything touching the border and keeps the lungs
lung = baseline_lung_segment(scan.grid)
print("Dice vs analytic lung mask: %.4f" % dice(lung, scan.lung))
print("RVE  vs analytic lung mask: %.4f" % rve(lung, scan.lung))

# Features from the analytic masks equal the generator's ground truth
img = extract_image_features(scan.grid, scan.lung, scan.muscle_fat, scan.lesion)
print("normal lung (litres): extracted %.6f, truth %.6f" % (img.nl_litres, scan.truth.nl_litres))
print("ground-glass fraction: extracted %.6f, truth %.6f" % (img.gg_frac, scan.truth.gg_frac))

# Add age and sex to get the 11-element vector the classifiers use
x = assemble_features(img, age=67, sex="female")
for name, value in zip(FEATURE_NAMES, x):
    print("  %-10s %12.5g" % (name, value))
