"""Propagate keyframe pose corrections to the Gaussians anchored on them."""

import logging
from typing import Collection, Dict, Mapping, Optional, Tuple

import numpy as np

from splatfusion.errors import DanglingAnchorError
from splatfusion.geometry import Pose
from splatfusion.gsmap.gaussians import GaussianMap

logger = logging.getLogger(__name__)

PoseUpdates = Mapping[int, Tuple[Pose, Pose]]


def deform_map(
    gmap: GaussianMap,
    updates: PoseUpdates,
    known_keyframes: Optional[Collection[int]] = None,
) -> GaussianMap:
    """
    Rigidly move the Gaussians of each updated anchor keyframe.

    For anchor i with (old, new) poses, T_i = new @ old^-1 is applied to every
    mean and left-multiplies every rotation; scales are unchanged. Anchors
    whose old and new poses are identical, and anchors without an update, keep
    their Gaussians bit-identical.

    Args:
        gmap: Map to deform (not modified)
        updates: kf_id -> (old pose, new pose)
        known_keyframes: Valid keyframe ids; defaults to the map's anchors

    Returns:
        Deformed copy of the map

    Raises:
        DanglingAnchorError: an update names an unknown keyframe
    """
    known = set(int(k) for k in (gmap.anchor_index if known_keyframes is None else known_keyframes))
    unknown = sorted(int(k) for k in updates if int(k) not in known)
    if unknown:
        raise DanglingAnchorError(f"Pose update for unknown anchor keyframe(s) {unknown}")

    out = gmap.copy()
    index = gmap.anchor_index
    moved = 0
    for kf_id, (old, new) in updates.items():
        idx = index.get(int(kf_id))
        if idx is None or idx.size == 0:
            continue
        if np.array_equal(old.as_matrix(), new.as_matrix()):
            continue
        T = new @ old.inverse()
        out.means[idx] = T.transform(gmap.means[idx])
        out.rotations[idx] = T.rotation @ gmap.rotations[idx]
        moved += idx.size
    logger.debug(f"Deformed {moved} Gaussians across {len(updates)} pose updates")
    return out


def invert_updates(updates: PoseUpdates) -> Dict[int, Tuple[Pose, Pose]]:
    """Swap old and new poses so deform_map undoes a previous deformation."""
    return {k: (new, old) for k, (old, new) in updates.items()}
