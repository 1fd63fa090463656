"""Classical mask construction and post-processing.

Arrays are indexed ``[z, y, x]``; "scan order" is C order over that layout,
i.e. x fastest, then y, then z.
"""

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import EmptyInputError, SegmentationFailedError
from .volume_io import LabelMask, VoxelGrid, check_same_dims

CONNECTIVITIES = (6, 26)
LUNG_BAND = (-1000, -400)

_IN_PLANE_4 = np.array([[[0, 1, 0], [1, 1, 1], [0, 1, 0]]], dtype=bool)


def _structure(connectivity: int) -> np.ndarray:
    if connectivity == 6:
        return ndimage.generate_binary_structure(3, 1)
    if connectivity == 26:
        return ndimage.generate_binary_structure(3, 3)
    raise ValueError(f"connectivity must be 6 or 26, got {connectivity}")


def _as_bool(mask) -> np.ndarray:
    if isinstance(mask, LabelMask):
        return mask.labels > 0
    return np.asarray(mask, dtype=bool)


@dataclass(frozen=True, eq=False)
class ComponentLabeling:
    labels: np.ndarray  # int32, 0 = background, components 1..K
    component_sizes: dict
    connectivity: int

    @property
    def n_components(self) -> int:
        return len(self.component_sizes)


def threshold_band(grid: VoxelGrid, lo: float, hi: float) -> LabelMask:
    """Binary mask of voxels with ``lo <= HU <= hi``."""
    if lo > hi:
        raise ValueError(f"empty HU band: lo={lo} > hi={hi}")
    v = grid.values
    return LabelMask.from_bool((v >= lo) & (v <= hi))


def connected_components_3d(mask, connectivity: int = 26) -> ComponentLabeling:
    """Label connected foreground regions.

    Ids are assigned in order of each component's first voxel in scan order.
    """
    fg = _as_bool(mask)
    raw, n = ndimage.label(fg, structure=_structure(connectivity))
    labels = np.zeros(fg.shape, dtype=np.int32)
    if n == 0:
        return ComponentLabeling(labels, {}, connectivity)
    flat = raw.ravel()
    ids, first = np.unique(flat, return_index=True)
    keep = ids > 0
    ids, first = ids[keep], first[keep]
    remap = np.zeros(n + 1, dtype=np.int32)
    remap[ids[np.argsort(first)]] = np.arange(1, len(ids) + 1, dtype=np.int32)
    labels = remap[raw]
    sizes = np.bincount(labels.ravel(), minlength=len(ids) + 1)[1:]
    return ComponentLabeling(labels, {i + 1: int(s) for i, s in enumerate(sizes)}, connectivity)


def largest_component(mask, connectivity: int = 26) -> LabelMask:
    cc = connected_components_3d(mask, connectivity)
    if not cc.component_sizes:
        raise EmptyInputError("largest_component needs at least one foreground voxel")
    # max() returns the first maximal key; keys are in scan order
    best = max(cc.component_sizes, key=cc.component_sizes.get)
    return LabelMask.from_bool(cc.labels == best)


def restrict_to_lung_slices(target_mask: LabelMask, lung_mask: LabelMask,
                            connectivity: int = 26) -> LabelMask:
    """Zero every axial slice of ``target_mask`` missed by the largest lung component."""
    check_same_dims(target_mask, lung_mask)
    lung = largest_component(lung_mask, connectivity).labels.astype(bool)
    keep = lung.any(axis=(1, 2))
    out = np.array(target_mask.labels)
    out[~keep] = 0
    return LabelMask(out, target_mask.semantics)


def fill_holes_2d(mask) -> LabelMask:
    """Per axial slice, fill background not 4-connected to the slice border."""
    fg = _as_bool(mask)
    return LabelMask.from_bool(ndimage.binary_fill_holes(fg, structure=_IN_PLANE_4))


def baseline_lung_segment(grid: VoxelGrid, band=LUNG_BAND, connectivity: int = 26,
                          max_components: int = 2) -> LabelMask:
    """Threshold-based lung mask: air band, drop body-exterior air, keep the two largest.

    Components touching the x/y border of the volume are treated as air outside
    the body. Raises SegmentationFailedError if nothing survives.
    """
    candidate = threshold_band(grid, *band)
    cc = connected_components_3d(candidate, connectivity)
    labels = cc.labels
    border = np.unique(np.concatenate([
        labels[:, 0, :].ravel(), labels[:, -1, :].ravel(),
        labels[:, :, 0].ravel(), labels[:, :, -1].ravel(),
    ]))
    inner = [(size, cid) for cid, size in cc.component_sizes.items() if cid not in border]
    if not inner:
        raise SegmentationFailedError("no enclosed air-density component found")
    inner.sort(key=lambda t: (-t[0], t[1]))
    keep = [cid for _, cid in inner[:max_components]]
    return fill_holes_2d(np.isin(labels, keep))
