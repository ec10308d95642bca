"""Multi-object fuzzy texture segmentation with adaptive affinity functions."""

from .affinity import (
    AffinityConfig,
    AffinityModel,
    GaussianAffinityParams,
    AdaptiveGaussianParams,
    SkewAffinityParams,
    ScaleSelection,
    adaptive_gaussian_affinity,
    fit_gaussian_params,
    fit_skew_params,
    gaussian_affinity,
    kl_divergence,
    rho,
    select_scale,
    skew_affinity,
    skew_divergence,
)
from .autoseed import (
    auto_segment,
    class_centroids,
    kmeans,
    mds_embed,
    patch_distance_matrix,
    propose_seeds,
    sample_seeds,
)
from .config import PipelineConfig
from .evalbench import (
    dice,
    match_labels,
    render_connectedness,
    run_benchmark,
    weighted_dice,
)
from .imagecore import (
    GrayImage,
    Histogram,
    LabelMap,
    PatchGrid,
    Placement,
    Spel,
    Window,
    compose_mosaic,
    load_image,
    make_patch_grid,
    save_image,
    window_histogram,
    window_stats,
)
from .mofs import (
    BucketQueue,
    SeedSpec,
    Semisegmentation,
    connectedness_map,
    crisp_labels,
    quantize,
    segment,
)

__version__ = "0.1.0"
