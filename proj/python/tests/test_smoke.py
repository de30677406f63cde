import numpy as np
import pytest

import mixsa


def color_fixture(side=64):
    y, x = np.mgrid[0:side, 0:side]
    img = np.stack([x * 255 // side, y * 255 // side, np.full_like(x, 128)], axis=-1).astype(np.uint8)
    img[(x - side // 2) ** 2 + (y - side // 2) ** 2 < (side // 4) ** 2] = (220, 30, 30)
    return img


def reference_fixture(side=64):
    img = np.full((side, side), 255, np.uint8)
    for i in range(0, side // 2, 3):
        img[:side // 2, i] = 0
    img[side // 2 + 5, side // 2:] = 40
    return img


def test_blend_matches_formula():
    rng = np.random.default_rng(1)
    qc, qs, qr = (rng.normal(size=(5, 4)) for _ in range(3))
    got = mixsa.blend_queries(qc, qs, qr, zeta=0.3, beta=0.8)
    want = 0.3 * (0.8 * qc + 0.2 * qs) + 0.7 * qr
    np.testing.assert_allclose(got, want, atol=1e-12)
    assert sum(mixsa.blend_weights(0.3, 0.8)) == pytest.approx(1.0)


def test_mixed_attention_matches_numpy():
    rng = np.random.default_rng(2)
    q, k, v = rng.normal(size=(6, 8)), rng.normal(size=(7, 8)), rng.normal(size=(7, 3))
    s = q @ k.T / np.sqrt(8)
    w = np.exp(s - s.max(axis=1, keepdims=True))
    w /= w.sum(axis=1, keepdims=True)
    np.testing.assert_allclose(mixsa.mixed_attention(q, k, v), w @ v, atol=1e-10)


def test_schedule_and_ddim_roundtrip():
    sched = mixsa.make_schedule()
    betas = np.linspace(0.00085 ** 0.5, 0.012 ** 0.5, 1000) ** 2
    np.testing.assert_allclose(sched["alpha_bars"][1:], np.cumprod(1 - betas), rtol=1e-12)
    ts = mixsa.timestep_subsequence(1000, 50)
    assert ts[0] == 0 and ts[-1] == 1000 and len(ts) == 51

    z = np.random.default_rng(3).normal(size=(2, 3, 3))
    eps = np.full_like(z, 0.25)
    a, b = sched["alpha_bars"][100], sched["alpha_bars"][200]
    there = mixsa.ddim_step(z, eps, a, b)
    np.testing.assert_allclose(mixsa.ddim_step(there, eps, b, a), z, atol=1e-12)


def test_image_stages():
    contour = mixsa.canny_contours(color_fixture(), 0.55)
    assert contour.ndim == 2 and contour.dtype == np.uint8
    assert (contour < 255).any() and (contour == 255).mean() > 0.5

    noisy = np.random.default_rng(4).integers(200, 256, size=(32, 32)).astype(np.uint8)
    out = mixsa.apply_rcd(noisy, binarize_threshold=230)
    assert not ((out > 230) & (out < 255)).any()

    png = mixsa.encode_png(contour)
    np.testing.assert_array_equal(mixsa.decode_image(png), contour)


def test_metrics():
    a = np.zeros((16, 16), np.uint8)
    b = a.copy()
    b[0, 0] = 255
    mse = 255.0 ** 2 / 256
    assert mixsa.psnr(a, b) == pytest.approx(10 * np.log10(255 ** 2 / mse))
    assert mixsa.ssim(a, a) == pytest.approx(1.0)
    feats = np.random.default_rng(5).normal(size=(40, 3))
    value, _ = mixsa.fid(feats, feats)
    assert value == pytest.approx(0.0, abs=1e-6)


def test_mock_pipeline_is_deterministic():
    params = {"resolution": 64, "steps": 10}
    pipe = mixsa.Pipeline("mock")
    first = pipe.extract(color_fixture(), reference_fixture(), params)
    second = pipe.extract(color_fixture(), reference_fixture(), params)
    assert first["sketch"].shape == (64, 64)
    assert first["hash"] == second["hash"]
    np.testing.assert_array_equal(first["sketch"], second["sketch"])
    assert pipe.inversion_count == 6


def test_grid_inverts_once():
    pipe = mixsa.Pipeline("mock")
    grid = pipe.grid(color_fixture(), reference_fixture(), [0.2, 0.6], [0.0, 1.0], {"resolution": 64, "steps": 5})
    assert len(grid["cells"]) == 4
    assert all(c["result"] is not None for c in grid["cells"])
    assert pipe.inversion_count == 3


def test_invalid_parameters_raise_value_error():
    with pytest.raises(ValueError):
        mixsa.Pipeline("mock").extract(color_fixture(), reference_fixture(), {"zeta": "lots"})
    with pytest.raises(mixsa.MixsaError):
        mixsa.Pipeline("sd-1.5")


class ToyBackend(mixsa.Backend):
    """2x average-pool autoencoder whose noise estimate reads the attention output."""

    def __init__(self, fail=False):
        super().__init__("toy", 2, 3, 1000, True, [(10, "decoder"), (11, "decoder")])
        self.fail = fail
        self.hook_calls = 0

    def encode(self, image):
        x = image.astype(np.float64) / 127.5 - 1.0
        if x.ndim == 2:
            x = np.repeat(x[..., None], 3, axis=-1)
        x = x[..., :3]
        h, w = x.shape[0] // 2, x.shape[1] // 2
        return x.reshape(h, 2, w, 2, 3).mean(axis=(1, 3)).transpose(2, 0, 1)

    def decode(self, latent):
        x = latent.transpose(1, 2, 0).repeat(2, axis=0).repeat(2, axis=1)
        return np.clip((x + 1.0) * 127.5 + 0.5, 0, 255).astype(np.uint8)

    def predict_noise(self, latent, t, hook, guidance):
        if self.fail:
            raise RuntimeError("weights missing")
        tokens = latent.reshape(3, -1).T
        out = np.zeros_like(tokens)
        for site in (10, 11):
            out += hook(site, "decoder", [tokens], [tokens], [tokens])[0]
        self.hook_calls += 1
        return 0.1 * latent + 0.01 * out.T.reshape(latent.shape)


def test_python_backend_drives_pipeline():
    backend = ToyBackend()
    pipe = mixsa.Pipeline(backend)
    assert pipe.capabilities["id"] == "toy"
    res = pipe.extract(color_fixture(), reference_fixture(), {"resolution": 32, "steps": 4})
    assert res["sketch"].shape == (32, 32)
    assert backend.hook_calls == 4 * 4
    again = pipe.extract(color_fixture(), reference_fixture(), {"resolution": 32, "steps": 4})
    assert res["hash"] == again["hash"]


def test_python_backend_errors_surface():
    pipe = mixsa.Pipeline(ToyBackend(fail=True))
    with pytest.raises(mixsa.MixsaError, match="weights missing"):
        pipe.extract(color_fixture(), reference_fixture(), {"resolution": 32, "steps": 2})


def test_cli_entry_point(tmp_path):
    code, _, err = mixsa.cli_main(["no-such-command"])
    assert code == 2 and err
    mixsa.write_png(color_fixture(), tmp_path / "c.png")
    mixsa.write_png(reference_fixture(), tmp_path / "r.png")
    code, out, err = mixsa.cli_main(["extract", "--color", str(tmp_path / "c.png"), "--reference",
                                     str(tmp_path / "r.png"), "--resolution", "64", "--steps", "5",
                                     "--out", str(tmp_path / "out")])
    assert code == 0, err
    assert "resolved parameters:" in out
    assert list((tmp_path / "out").glob("*/sketch.png"))
