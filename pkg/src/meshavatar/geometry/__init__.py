from .body import BodyModel, FramePose, build_rest_mesh, lbs_pose, model_keypoints, rodrigues
from .camera import Camera, ProjectedMesh, project
from .meshops import Mesh, adjacent_face_pairs, face_areas, face_normals
from .toybody import make_toy_body

__all__ = [
    "BodyModel",
    "FramePose",
    "Camera",
    "Mesh",
    "ProjectedMesh",
    "adjacent_face_pairs",
    "build_rest_mesh",
    "face_areas",
    "face_normals",
    "lbs_pose",
    "make_toy_body",
    "model_keypoints",
    "project",
    "rodrigues",
]
