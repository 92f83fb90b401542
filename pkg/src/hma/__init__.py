"""Homeomorphic manifold analysis for joint object category, instance and
continuous pose estimation."""

__version__ = "0.1.0"

from .classify import EvalReport, LabeledStyleSet, evaluate, knn_classify
from .data import (
    DatasetManifest,
    ModelContainer,
    SyntheticSpec,
    generate_synthetic,
    load_manifest,
    load_model,
    save_manifest,
    save_model,
)
from .factor import (
    StyleSpace,
    closed_form_style,
    degeneracy_rank,
    factorize,
    reconstruct_coefficients,
    stack_coefficients,
)
from .features import FeatureConfig, extract, extract_depth
from .grbf import KernelConfig, MappingModel, evaluate_mapping, fit_mapping, kernel_map, synthesize_view
from .infer import InferenceConfig, grid_oracle, infer, infer_multimodal, viewpoint_given_style
from .manifold import PoseAngles, angular_error, embed, place_centers, recover_angles
