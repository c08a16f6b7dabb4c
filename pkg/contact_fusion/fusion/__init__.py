from contact_fusion.fusion.pipeline import (
    FrameBundle,
    align_frames,
    estimate_contact_patch,
    intersect,
    proximity_mask,
)

__all__ = ["FrameBundle", "align_frames", "estimate_contact_patch", "intersect", "proximity_mask"]
