from dataclasses import dataclass


@dataclass
class ExtractorConfig:
    prompts_file: str
    out_dir: str
    seed: int = 0
    steps: int = 30
    guidance: float = 7.5
    image_size: int = 512
    backend: str = "synthetic"       # or "sd21"
    average_last_steps: int = 1      # >1 averages attentions over final steps
    model_id: str = "stabilityai/stable-diffusion-2-1-base"

    def __post_init__(self):
        if self.steps < 1:
            raise ValueError(f"steps={self.steps} must be >= 1")
        if self.image_size % 64 != 0:
            raise ValueError(f"image_size={self.image_size} must be a multiple of 64")
