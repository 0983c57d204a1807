"""Entropy-guided next-best-view selection for active reconstruction with a voxel radiance field."""

from .experiment import ExperimentConfig, load_config, run_active_loop
from .field import RadianceField, TrainConfig, density_grid_export, loss_and_gradients, render_image, render_ray, train
from .geometry import CameraIntrinsics, Pose, camera_rays, cluster_regions, generate_view_space, look_at
from .mesh import TriangleMesh, fscore, marching_cubes, nearest_distances, sample_mesh_points
from .policy import POLICIES, PolicyState, select_next_views
from .scenes import SdfScene, ground_truth_mesh, preset_scene, render_ground_truth, sample_surface_points
from .uncertainty import EntropyOptions, entropy_map, ray_entropy, view_mean_entropy

__all__ = [
    "ExperimentConfig", "load_config", "run_active_loop",
    "RadianceField", "TrainConfig", "density_grid_export", "loss_and_gradients", "render_image", "render_ray", "train",
    "CameraIntrinsics", "Pose", "camera_rays", "cluster_regions", "generate_view_space", "look_at",
    "TriangleMesh", "fscore", "marching_cubes", "nearest_distances", "sample_mesh_points",
    "POLICIES", "PolicyState", "select_next_views",
    "SdfScene", "ground_truth_mesh", "preset_scene", "render_ground_truth", "sample_surface_points",
    "EntropyOptions", "entropy_map", "ray_entropy", "view_mean_entropy",
]
__version__ = "0.1.0"
