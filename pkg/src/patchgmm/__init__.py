"""Patch-based image restoration with Gaussian mixtures.

Estimate each degraded patch under a small set of Gaussian models (edge
orientations, edge positions, oscillatory texture), keep the best model per
patch, re-learn the models from the winning clusters, repeat. Handles
inpainting, zooming, deblurring, and joint zoom-deblurring on PGM/PPM images.
"""

from .gmm_core import (
    EmConfig,
    GaussianModel,
    check_model_invariants,
    e_step,
    e_step_hierarchical,
    estimate_patch,
    estimate_patch_pca,
    hierarchical_select,
    load_models,
    m_step,
    map_em,
    map_em_hierarchical,
    save_models,
    select_model,
    wiener_matrix,
)
from .imageio import Image, isnr, psnr, read_image, write_image
from .initbases import (
    ModelSet,
    SyntheticEdgeSpec,
    dct_model,
    directional_basis,
    init_models,
    position_bases,
    synthetic_edge_image,
)
from .operators import (
    Convolution,
    DegradationOperator,
    Identity,
    Mask,
    MaskedConvolution,
    PatchOperatorMatrix,
    UniformSubsample,
    degrade,
    gaussian_kernel,
    random_mask,
    read_kernel,
    read_mask,
    write_kernel,
    write_mask,
)
from .patchwork import Patch, RegionPlan, aggregate_patches, extract_patches, plan_regions
from .pipelines import (
    RestorationReport,
    TaskConfig,
    bicubic_zoom,
    blur_downsample,
    deblur,
    inpaint,
    restore_color,
    spline_zoom,
    zoom,
    zoom_deblur,
)

__version__ = "0.1.0"
