"""Stable Diffusion 2.1 backend: capture per-head self-attention features
and open-vocabulary cross-attention maps while generating.

Self-attention: every up-block attention layer gets a capturing processor;
during the final denoising step(s) it stores each head's attention output
(before the output projection), giving (heads, r*r, head_dim) per layer at
16/32/64. Cross-attention layers store their image-side queries instead;
class-token maps are then computed after generation by projecting each
catalog token's text embedding through the layer's key matrix and running
the same softmax attention. The extra tokens never enter generation, so
querying them cannot perturb the image.

Requires torch + diffusers + transformers and locally available weights;
anything missing raises ModelLoadFailure.
"""

import numpy as np

from .errors import ModelLoadFailure
from .synthetic import BackendResult

LATENT = 64
CAPTURE_RESOLUTIONS = (16, 32, 64)


def _import_stack():
    try:
        import torch
        from diffusers import StableDiffusionPipeline
    except ImportError as e:
        raise ModelLoadFailure(
            f"sd21 backend needs torch and diffusers installed: {e}") from e
    return torch, StableDiffusionPipeline


class _CaptureProcessor:
    """Drop-in attention processor that can record heads or queries."""

    def __init__(self, store, layer_name, is_cross):
        self.store = store
        self.layer_name = layer_name
        self.is_cross = is_cross

    def __call__(self, attn, hidden_states, encoder_hidden_states=None,
                 attention_mask=None, **kwargs):
        import torch

        residual = hidden_states
        input_ndim = hidden_states.ndim
        if input_ndim == 4:
            b, c, h, w = hidden_states.shape
            hidden_states = hidden_states.view(b, c, h * w).transpose(1, 2)

        context = hidden_states if encoder_hidden_states is None else encoder_hidden_states
        if attn.norm_cross and encoder_hidden_states is not None:
            context = attn.norm_encoder_hidden_states(context)

        query = attn.to_q(hidden_states)
        key = attn.to_k(context)
        value = attn.to_v(context)
        query = attn.head_to_batch_dim(query)
        key = attn.head_to_batch_dim(key)
        value = attn.head_to_batch_dim(value)

        probs = attn.get_attention_scores(query, key, attention_mask)
        out = torch.bmm(probs, value)

        if self.store.capturing:
            heads = attn.heads
            if self.is_cross:
                # conditional half of the CFG batch; queries for later
                # open-vocabulary map evaluation
                self.store.record_cross(self.layer_name, attn,
                                        query.detach()[-heads:])
            else:
                # (heads, tokens, head_dim) of the conditional half
                self.store.record_self(self.layer_name, out.detach()[-heads:])

        out = attn.batch_to_head_dim(out)
        out = attn.to_out[0](out)
        out = attn.to_out[1](out)
        if input_ndim == 4:
            out = out.transpose(-1, -2).reshape(b, c, h, w)
        if attn.residual_connection:
            out = out + residual
        return out / attn.rescale_output_factor


class _CaptureStore:
    def __init__(self, average_last_steps):
        self.average_last_steps = average_last_steps
        self.capturing = False
        self.self_acc = {}     # layer -> [tensor per captured step]
        self.cross_q = {}      # layer -> (attn module, [query per step])

    def record_self(self, layer, heads_tokens_dim):
        self.self_acc.setdefault(layer, []).append(heads_tokens_dim.float().cpu())

    def record_cross(self, layer, attn, query):
        self.cross_q.setdefault(layer, (attn, []))[1].append(query.float().cpu())


class StableDiffusionBackend:
    name = "sd21"

    def __init__(self, cfg):
        torch, StableDiffusionPipeline = _import_stack()
        self.cfg = cfg
        self.torch = torch
        self.device = "cuda" if torch.cuda.is_available() else "cpu"
        try:
            self.pipe = StableDiffusionPipeline.from_pretrained(
                cfg.model_id, local_files_only=True, safety_checker=None)
        except Exception as e:
            raise ModelLoadFailure(f"cannot load {cfg.model_id} locally: {e}") from e
        self.pipe.to(self.device)
        self.store = _CaptureStore(cfg.average_last_steps)
        self._install_processors()

    def _install_processors(self):
        procs = {}
        for name, proc in self.pipe.unet.attn_processors.items():
            if name.startswith("up_blocks"):
                is_cross = ".attn2." in name
                procs[name] = _CaptureProcessor(self.store, name, is_cross)
            else:
                procs[name] = proc
        self.pipe.unet.set_attn_processor(procs)

    def generate(self, prompt: str, index: int, class_ids) -> BackendResult:
        torch = self.torch
        cfg = self.cfg
        self.store.self_acc.clear()
        self.store.cross_q.clear()

        first_capture = cfg.steps - cfg.average_last_steps

        def on_step(pipe, step, timestep, kwargs):
            self.store.capturing = step >= first_capture
            return kwargs

        generator = torch.Generator(self.device).manual_seed(cfg.seed + index)
        self.store.capturing = cfg.steps <= cfg.average_last_steps
        result = self.pipe(
            prompt,
            num_inference_steps=cfg.steps,
            guidance_scale=cfg.guidance,
            height=cfg.image_size,
            width=cfg.image_size,
            generator=generator,
            callback_on_step_end=on_step,
        )
        image = np.asarray(result.images[0].convert("RGB"))

        layers = []
        for name, steps in sorted(self.store.self_acc.items()):
            feats = torch.stack(steps).mean(dim=0).numpy()  # (heads, r*r, dim)
            res = int(round(feats.shape[1] ** 0.5))
            if res in CAPTURE_RESOLUTIONS:
                layers.append((name, res, feats.astype(np.float32)))

        cross = self._open_vocab_maps(class_ids)
        return BackendResult(image=image, layers=layers, cross_maps=cross)

    def _token_embeddings(self, texts):
        tok = self.pipe.tokenizer(
            list(texts), padding="max_length",
            max_length=self.pipe.tokenizer.model_max_length,
            truncation=True, return_tensors="pt")
        with self.torch.no_grad():
            emb = self.pipe.text_encoder(tok.input_ids.to(self.device))[0]
        # position 0 is the start-of-text token; the class token itself sits
        # right after it
        return emb[:, 0, :].float(), emb[:, 1, :].float()

    def _open_vocab_maps(self, class_ids):
        """(1 + n_classes, 64, 64) maps: SoT first, then each class token."""
        from .catalog import OVAM_TOKENS, VOC_CLASSES

        torch = self.torch
        texts = [OVAM_TOKENS.get(VOC_CLASSES[c], VOC_CLASSES[c]) for c in class_ids]
        sot_emb, tok_emb = self._token_embeddings(texts or [""])
        keys = torch.cat([sot_emb[:1], tok_emb[:len(texts)]], dim=0)

        accum = np.zeros((1 + len(class_ids), LATENT, LATENT), dtype=np.float64)
        n_layers = 0
        for layer, (attn, queries) in sorted(self.store.cross_q.items()):
            with torch.no_grad():
                k = attn.head_to_batch_dim(
                    attn.to_k(keys.to(self.device)).unsqueeze(0)).cpu()
            for q in queries:
                scale = q.shape[-1] ** -0.5
                scores = torch.softmax(q @ k.transpose(1, 2) * scale, dim=1)
                res = int(round(q.shape[1] ** 0.5))
                maps = scores.mean(dim=0).T.reshape(-1, res, res).numpy()
                accum += _upsample_nearest(maps, LATENT)
                n_layers += 1
        if n_layers:
            accum /= n_layers
        return accum.astype(np.float32)


def _upsample_nearest(maps, target):
    n, r, _ = maps.shape
    idx = (np.arange(target) * r) // target
    return maps[:, idx][:, :, idx]
