"""Latent-diffusion editing of optimized structural topologies."""

from .core import (
    DensityField,
    EditRecord,
    LoadPoint,
    Mask,
    ParseError,
    ProblemSpec,
    SupportPoint,
    decode_field,
    encode_field,
    resample_field,
)
from .corpus import CorpusItem, generate_corpus, load_corpus, save_corpus
from .diffusion import (
    CheckpointError,
    Denoiser,
    NoiseSchedule,
    load_checkpoint,
    make_schedule,
    save_checkpoint,
)
from .engine import (
    CandidateSet,
    EditConfig,
    EditEngine,
    EditRequest,
    select_best,
    select_index,
)
from .fem import FemError, FemModel, SolveResult, optimize, refine, solve
from .metrics import (
    compliance,
    compliance_error,
    distance_error,
    iou,
    joint_locations,
    violation_ratio,
    volume_fraction_error,
)
from .morphology import LatticeSpec, compose_lattice, detect_joints, medial_axis
from .service import create_app
from .warp import Handle, WarpSpec, warp_field, warp_problem

__version__ = "0.1.0"

__all__ = [
    "DensityField",
    "EditRecord",
    "LoadPoint",
    "Mask",
    "ParseError",
    "ProblemSpec",
    "SupportPoint",
    "decode_field",
    "encode_field",
    "resample_field",
    "CorpusItem",
    "generate_corpus",
    "load_corpus",
    "save_corpus",
    "CheckpointError",
    "Denoiser",
    "NoiseSchedule",
    "load_checkpoint",
    "make_schedule",
    "save_checkpoint",
    "CandidateSet",
    "EditConfig",
    "EditEngine",
    "EditRequest",
    "select_best",
    "select_index",
    "FemError",
    "FemModel",
    "SolveResult",
    "optimize",
    "refine",
    "solve",
    "compliance",
    "compliance_error",
    "distance_error",
    "iou",
    "joint_locations",
    "violation_ratio",
    "volume_fraction_error",
    "LatticeSpec",
    "compose_lattice",
    "detect_joints",
    "medial_axis",
    "create_app",
    "Handle",
    "WarpSpec",
    "warp_field",
    "warp_problem",
    "__version__",
]
