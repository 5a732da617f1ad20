"""attn_extractor: generate images with a latent diffusion model and write
per-image attention bundles (self-attention head features, class-token
cross-attention maps, RGB image, manifest)."""

__version__ = "0.1.0"

from .config import ExtractorConfig           # noqa: F401
from .errors import ExtractorError, ModelLoadFailure, PromptFileMissing  # noqa: F401
from .extract import extract                  # noqa: F401
