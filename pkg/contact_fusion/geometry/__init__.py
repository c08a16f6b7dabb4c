from contact_fusion.geometry.depth import (
    INVALID_DEPTH,
    DepthImage,
    Homography,
    PinholeIntrinsics,
    RgbImage,
    deproject,
    warp_depth,
)
from contact_fusion.geometry.point_cloud import (
    ContactPatch,
    PointCloud,
    rmse_between,
    statistical_outlier_filter,
)

__all__ = [
    "INVALID_DEPTH",
    "ContactPatch",
    "DepthImage",
    "Homography",
    "PinholeIntrinsics",
    "PointCloud",
    "RgbImage",
    "deproject",
    "rmse_between",
    "statistical_outlier_filter",
    "warp_depth",
]
