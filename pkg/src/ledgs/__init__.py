"""Language-embedded dynamic Gaussian splatting.

A CPU reference engine that reconstructs a dynamic Gaussian scene with
per-Gaussian semantic features from monocular-video-style supervision,
quantizes dense embedding stacks against a learned codebook, localizes
Gaussians matching a query embedding at point level (with recall- and
precision-oriented refinement), and applies reference-video-guided edits
restricted to the localized set.
"""

__version__ = "0.1.0"

from .localization import (LocalizationResult, QueryEmbedding, localize,
                           localize_refined, mask_2d, refine_precision,
                           refine_recall, relevance_map)
from .metrics import feature_dir_sim, miou, psnr
from .motion import PosedGaussians, blend_bases, motion_gradients, pose_at
from .quantizer import Codebook, FeatureStack, IndexStack, assign, learn_codebook, quant_loss
from .rasterizer import RenderOutput, RenderSettings, project, render, render_backward, render_subset
from .scene import Camera, GaussianScene, MotionBases, SyntheticSpec, new_synthetic_scene, validate
from .semantics import Decoder, decode_gaussians, decode_map, expected_embedding, lang_loss
from .training import SupervisionStack, TrainConfig, edit, edit_loss, rec_loss, train

__all__ = [
    "Camera", "Codebook", "Decoder", "FeatureStack", "GaussianScene", "IndexStack",
    "LocalizationResult", "MotionBases", "PosedGaussians", "QueryEmbedding",
    "RenderOutput", "RenderSettings", "SupervisionStack", "SyntheticSpec", "TrainConfig",
    "assign", "blend_bases", "decode_gaussians", "decode_map", "edit", "edit_loss",
    "expected_embedding", "feature_dir_sim", "lang_loss", "learn_codebook", "localize",
    "localize_refined", "mask_2d", "miou", "motion_gradients", "new_synthetic_scene",
    "pose_at", "project", "psnr", "quant_loss", "rec_loss", "refine_precision",
    "refine_recall", "relevance_map", "render", "render_backward", "render_subset",
    "train", "validate",
]
