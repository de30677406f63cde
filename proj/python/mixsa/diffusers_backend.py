"""Stable Diffusion backend on top of diffusers.

Only the wiring is tested here, against tiny randomly initialised models; the
adapter has not been validated against released Stable Diffusion weights.

Self-attention sites are the ``attn1`` modules of the UNet, numbered in
forward order (down blocks, middle block, up blocks). With classifier-free
guidance the batch holds the unconditional and conditional halves; the
controller sees the conditional half, and where it changes the attention
output the same output is used for both halves.
"""

from __future__ import annotations

import numpy as np
import torch

from ._mixsa import Backend


def _stage(name: str) -> str:
    if name.startswith("down_blocks"):
        return "encoder"
    if name.startswith("mid_block"):
        return "middle"
    return "decoder"


def _forward_order(name: str):
    stage = {"encoder": 0, "middle": 1, "decoder": 2}[_stage(name)]
    numbers = [int(part) for part in name.split(".") if part.isdigit()]
    return (stage, numbers)


def self_attention_sites(unet):
    """(index, stage, module name) for every self-attention layer, in forward order."""
    names = [n for n, _ in unet.named_modules() if n.endswith("attn1")]
    names.sort(key=_forward_order)
    return [(i, _stage(n), n) for i, n in enumerate(names)]


class _SiteProcessor:
    """AttnProcessor that hands per-head Q, K, V to the active hook."""

    def __init__(self, owner, site, stage):
        self.owner = owner
        self.site = site
        self.stage = stage

    def __call__(self, attn, hidden_states, encoder_hidden_states=None, attention_mask=None, temb=None, **kwargs):
        residual = hidden_states
        if attn.spatial_norm is not None:
            hidden_states = attn.spatial_norm(hidden_states, temb)
        input_ndim = hidden_states.ndim
        if input_ndim == 4:
            batch, channel, height, width = hidden_states.shape
            hidden_states = hidden_states.view(batch, channel, height * width).transpose(1, 2)
        batch, seq, _ = hidden_states.shape
        attention_mask = attn.prepare_attention_mask(attention_mask, seq, batch)
        if attn.group_norm is not None:
            hidden_states = attn.group_norm(hidden_states.transpose(1, 2)).transpose(1, 2)

        query = attn.head_to_batch_dim(attn.to_q(hidden_states))
        key = attn.head_to_batch_dim(attn.to_k(hidden_states))
        value = attn.head_to_batch_dim(attn.to_v(hidden_states))
        probs = attn.get_attention_scores(query, key, attention_mask)
        out = torch.bmm(probs, value)

        hook = self.owner._hook
        if hook is not None and hook.active:
            heads = attn.heads
            cond = slice((batch - 1) * heads, batch * heads)

            def split(t):
                return [h.double().cpu().numpy() for h in t[cond]]

            mixed = hook(self.site, self.stage, split(query), split(key), split(value))
            mixed = torch.from_numpy(np.stack(mixed)).to(out.dtype).to(out.device)
            if not torch.allclose(mixed, out[cond], atol=1e-5, rtol=1e-4):
                out = mixed.repeat(batch, 1, 1)

        hidden_states = attn.batch_to_head_dim(out)
        hidden_states = attn.to_out[1](attn.to_out[0](hidden_states))
        if input_ndim == 4:
            hidden_states = hidden_states.transpose(-1, -2).reshape(batch, channel, height, width)
        if attn.residual_connection:
            hidden_states = hidden_states + residual
        return hidden_states / attn.rescale_output_factor


class DiffusersBackend(Backend):
    """Backend over a diffusers UNet2DConditionModel and AutoencoderKL.

    ``cond`` and ``uncond`` are text-encoder hidden states (batch of one);
    ``uncond`` defaults to ``cond``.
    """

    def __init__(self, unet, vae, cond, uncond=None, backend_id="diffusers"):
        self.unet = unet.eval()
        self.vae = vae.eval()
        self.cond = cond
        self.uncond = cond if uncond is None else uncond
        self.scaling = float(getattr(vae.config, "scaling_factor", 0.18215))
        self.device = next(unet.parameters()).device
        self.dtype = next(unet.parameters()).dtype
        self._hook = None

        sites = self_attention_sites(unet)
        processors = dict(unet.attn_processors)
        for index, stage, name in sites:
            processors[name + ".processor"] = _SiteProcessor(self, index, stage)
        unet.set_attn_processor(processors)

        factor = 2 ** (len(vae.config.block_out_channels) - 1)
        native = int(getattr(getattr(unet, "config", None), "num_train_timesteps", 1000) or 1000)
        super().__init__(backend_id, factor, int(vae.config.latent_channels), native, True,
                         [(i, s) for i, s, _ in sites])

    @classmethod
    def from_pretrained(cls, model_id, prompt="", device="cpu", dtype=torch.float32):
        from diffusers import StableDiffusionPipeline

        pipe = StableDiffusionPipeline.from_pretrained(model_id, torch_dtype=dtype).to(device)
        cond = cls._embed(pipe, prompt)
        uncond = cls._embed(pipe, "")
        return cls(pipe.unet, pipe.vae, cond, uncond, backend_id=f"diffusers:{model_id}")

    @staticmethod
    @torch.no_grad()
    def _embed(pipe, prompt):
        tokens = pipe.tokenizer(prompt, padding="max_length", max_length=pipe.tokenizer.model_max_length,
                                truncation=True, return_tensors="pt")
        return pipe.text_encoder(tokens.input_ids.to(pipe.device))[0]

    @torch.no_grad()
    def encode(self, image):
        x = np.asarray(image, dtype=np.float32)
        if x.ndim == 2:
            x = np.repeat(x[..., None], 3, axis=-1)
        x = torch.from_numpy(x[..., :3] / 127.5 - 1.0).permute(2, 0, 1)[None]
        latent = self.vae.encode(x.to(self.device, self.dtype)).latent_dist.mean * self.scaling
        return latent[0].double().cpu().numpy()

    @torch.no_grad()
    def decode(self, latent):
        z = torch.from_numpy(np.asarray(latent))[None].to(self.device, self.dtype) / self.scaling
        x = self.vae.decode(z).sample[0].permute(1, 2, 0).float().cpu().numpy()
        return np.clip((x + 1.0) * 127.5 + 0.5, 0, 255).astype(np.uint8)

    @torch.no_grad()
    def predict_noise(self, latent, t, hook, guidance):
        z = torch.from_numpy(np.asarray(latent))[None].to(self.device, self.dtype)
        guided = guidance > 1.0
        if guided:
            z = torch.cat([z, z])
            context = torch.cat([self.uncond, self.cond])
        else:
            context = self.cond
        self._hook = hook
        try:
            eps = self.unet(z, t, encoder_hidden_states=context.to(self.device, self.dtype)).sample
        finally:
            self._hook = None
        if guided:
            uncond, cond = eps.chunk(2)
            eps = uncond + guidance * (cond - uncond)
        return eps[0].double().cpu().numpy()
