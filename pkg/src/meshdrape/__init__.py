"""Mesh tessellation transfer by correspondence-guided initialization and
neural offset optimization with progressive positional encoding."""

from .geometry import (GeometryError, LocalAreaDistribution,
                       NormalizationTransform, PointSet, SurfaceMesh,
                       TargetShape, corner_angles, dirichlet_distortion,
                       face_qualities, face_quality, load_mesh, load_target,
                       local_area_distribution, nearest_point,
                       normalize_to_unit_cube, sample_surface, save_mesh)
from .deform import (CorrespondenceSet, DeformError, arap_deform,
                     biharmonic_deform, cotangent_laplacian,
                     estimate_global_affine, initial_deformation,
                     load_correspondences)
from .neural import EncoderState, Network, encode, schedule_mask
from .objective import LossConfig, chamfer, select_step_loss
from .metrics import (MetricConfig, TransferReport, alignment_measure,
                      evaluate_transfer, hausdorff, q_transfer)
from .pipeline import (DrapeConfig, DrapeSession, SessionError,
                       create_session, run)

__all__ = [n for n in dir() if not n.startswith("_")]
__version__ = "0.1.0"
