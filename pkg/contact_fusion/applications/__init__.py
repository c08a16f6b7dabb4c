from contact_fusion.applications.demos import DEMOS, DemoResult, run_demo
from contact_fusion.applications.pose_tracking import PoseFrame, PoseTrack, PoseTracker, icp_track
from contact_fusion.applications.tray_angle import TrayAngleEstimate, pca_angle

__all__ = [
    "DEMOS",
    "DemoResult",
    "PoseFrame",
    "PoseTrack",
    "PoseTracker",
    "TrayAngleEstimate",
    "icp_track",
    "pca_angle",
    "run_demo",
]
