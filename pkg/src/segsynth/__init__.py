"""segsynth: deterministic engine turning per-image diffusion attention
bundles into Pascal-VOC-style segmentation masks."""

__version__ = "0.1.0"

from .bundle_io import (          # noqa: F401
    FORMAT_VERSION,
    read_bundle,
    read_image,
    read_mask_png,
    read_tensor,
    write_image,
    write_mask_png,
    write_tensor,
)
from .catalog import ClassCatalog, DEFAULT_CATALOG, voc_palette  # noqa: F401
from .classify import (           # noqa: F401
    CrossAttentionSet,
    VoteStack,
    aggregate_votes,
    binarize,
    build_attention_set,
    classify_clusters,
    iou_binary,
    normalize_attention,
)
from .cluster import (            # noqa: F401
    ClusterLabeling,
    kmeans_fit,
    kmeanspp_init,
    split_components,
)
from .condense import PcMap, PcaModel, condense_bundle, pca_fit, pca_transform  # noqa: F401
from .features import FeatureMatrix, assemble_features, upsample_bilinear  # noqa: F401
from .metrics import (            # noqa: F401
    ConfusionMatrix,
    accumulate,
    miou,
    per_class_accuracy,
    per_class_iou,
)
from .pipeline import PipelineConfig, run_pipeline, run_stage  # noqa: F401
from .refine import RefineConfig, refine_mask, upsample_mask_nearest  # noqa: F401
