import numpy as np
import pytest

torch = pytest.importorskip("torch")
diffusers = pytest.importorskip("diffusers")

import mixsa
from mixsa.diffusers_backend import DiffusersBackend, self_attention_sites

from test_smoke import color_fixture, reference_fixture


def tiny_models():
    torch.manual_seed(0)
    unet = diffusers.UNet2DConditionModel(
        sample_size=16, in_channels=4, out_channels=4, layers_per_block=1,
        block_out_channels=(32, 64), down_block_types=("CrossAttnDownBlock2D", "DownBlock2D"),
        up_block_types=("UpBlock2D", "CrossAttnUpBlock2D"), cross_attention_dim=32, attention_head_dim=8,
        norm_num_groups=32)
    vae = diffusers.AutoencoderKL(
        in_channels=3, out_channels=3, latent_channels=4, block_out_channels=(32, 64),
        down_block_types=("DownEncoderBlock2D",) * 2, up_block_types=("UpDecoderBlock2D",) * 2,
        norm_num_groups=32)
    cond = torch.randn(1, 7, 32)
    return unet, vae, cond


def test_sites_in_forward_order():
    unet, _, _ = tiny_models()
    sites = self_attention_sites(unet)
    assert [s[1] for s in sites] == ["encoder", "middle", "decoder", "decoder"]
    assert [s[0] for s in sites] == [0, 1, 2, 3]


def test_processor_matches_stock_attention_without_control():
    unet, vae, cond = tiny_models()
    z = torch.randn(1, 4, 16, 16)
    with torch.no_grad():
        stock = unet(z, 500, encoder_hidden_states=cond).sample
    backend = DiffusersBackend(unet, vae, cond)
    with torch.no_grad():
        ours = unet(z, 500, encoder_hidden_states=cond).sample
    torch.testing.assert_close(ours, stock, atol=1e-5, rtol=1e-4)
    assert backend.capabilities["downsample_factor"] == 2


def test_pipeline_runs_and_mixing_changes_output():
    unet, vae, cond = tiny_models()
    pipe = mixsa.Pipeline(DiffusersBackend(unet, vae, cond))
    params = {"resolution": 32, "steps": 3, "target_sites": [2, 3], "guidance": 2.0}
    mixed = pipe.extract(color_fixture(), reference_fixture(), params)
    plain = pipe.extract(color_fixture(), reference_fixture(), dict(params, msa=False))
    assert mixed["sketch"].shape == (32, 32)
    assert mixed["hash"] != plain["hash"]
    assert not np.array_equal(mixed["pre_rcd"], plain["pre_rcd"])
