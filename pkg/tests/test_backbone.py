import pytest
import torch
import torch.nn.functional as F
from pydantic import ValidationError

from src.codec import encode_frame
from src.errors import LabValidationError
from src.models import BackboneConfig, DenoiserModel, denoise_predict, init_model, inject_boundary, patchify, unpatchify


def _randn(*shape, seed=0):
    return torch.randn(shape, generator=torch.Generator().manual_seed(seed))


class TestPatchify:
    def test_unpatchify_inverts_patchify(self):
        latent = _randn(2, 3, 6, 8, 8)
        tokens = patchify(latent, 4)
        assert tokens.shape == (2, 3 * 4, 6 * 16)
        assert torch.equal(unpatchify(tokens, 3, 6, 8, 8, 4), latent)

    def test_token_order_is_frame_major(self):
        latent = _randn(3, 2, 8, 8)
        tokens = patchify(latent, 4)
        # cuadro 2, fila de parches 1, columna 0 -> token 2*4 + 1*2 + 0
        token = tokens[2 * 4 + 2]
        # valor (canal 1, fila 3, columna 2) dentro del parche
        assert token[1 * 16 + 3 * 4 + 2] == latent[2, 1, 4 + 3, 0 + 2]

    def test_geometry_must_be_divisible(self):
        with pytest.raises(LabValidationError):
            patchify(torch.zeros(1, 6, 6, 8), 4)

    def test_config_rejects_indivisible_patch(self):
        with pytest.raises(ValidationError):
            BackboneConfig(height=30)
        with pytest.raises(ValidationError):
            BackboneConfig(D=130, heads=4)


class TestInjectBoundary:
    def test_slots_only_on_boundary_frames(self):
        z_t = _randn(2, 3, 6, 8, 8)
        c_s, c_e = torch.rand(2, 3, 8, 8), torch.rand(2, 3, 8, 8)
        z_in = inject_boundary(z_t, c_s, c_e)

        assert z_in.shape == (2, 3, 18, 8, 8)
        assert torch.equal(z_in[:, :, :6], z_t)
        assert torch.equal(z_in[:, 0, 6:12], encode_frame(c_s))
        assert torch.equal(z_in[:, -1, 12:], encode_frame(c_e))
        assert z_in[:, 1:, 6:12].abs().sum() == 0
        assert z_in[:, :-1, 12:].abs().sum() == 0

    def test_missing_frames_leave_zero_slots(self):
        z_t = _randn(1, 3, 6, 8, 8)
        z_in = inject_boundary(z_t, torch.rand(1, 3, 8, 8), None)
        assert z_in[:, :, 12:].abs().sum() == 0

    def test_frame_geometry_mismatch(self):
        with pytest.raises(LabValidationError):
            inject_boundary(_randn(1, 3, 6, 8, 8), torch.rand(1, 3, 4, 4))


class TestDenoiser:
    def test_fresh_model_predicts_zero(self, ft_model, tiny_backbone):
        z_in = inject_boundary(_randn(2, 3, 6, 8, 8), torch.rand(2, 3, 8, 8), torch.rand(2, 3, 8, 8))
        eps_hat = ft_model(z_in, torch.tensor([3, 40]))
        assert eps_hat.shape == (2, 3, 6, 8, 8)
        assert eps_hat.abs().sum() == 0

    def test_input_shape_checked(self, ft_model):
        with pytest.raises(LabValidationError):
            ft_model(_randn(1, 3, 6, 8, 8), torch.tensor([1]))

    def test_zero_features_do_not_change_output(self, tiny_backbone):
        model = init_model(tiny_backbone, seed=2)
        torch.manual_seed(0)
        with torch.no_grad():
            for p in model.parameters():
                p.add_(0.1 * torch.randn_like(p))
        z_in = _randn(2, 3, 18, 8, 8, seed=1)
        t = torch.tensor([5, 9])
        features = [torch.zeros(2, tiny_backbone.sequence_length, tiny_backbone.D) for _ in range(2)]
        assert torch.equal(model(z_in, t, features), model(z_in, t))

    def test_features_are_added_after_blocks(self, tiny_backbone):
        model = init_model(tiny_backbone, seed=2)
        with torch.no_grad():
            for p in model.parameters():
                p.add_(0.1 * torch.randn(p.shape, generator=torch.Generator().manual_seed(p.numel())))
        z_in = _randn(1, 3, 18, 8, 8, seed=1)
        t = torch.tensor([5])
        bump = [_randn(1, tiny_backbone.sequence_length, tiny_backbone.D, seed=3)]
        assert not torch.equal(model(z_in, t, bump), model(z_in, t))

    def test_feature_shape_checked(self, ft_model, tiny_backbone):
        z_in = _randn(1, 3, 18, 8, 8)
        bad = [torch.zeros(1, tiny_backbone.sequence_length, tiny_backbone.D + 1)]
        with pytest.raises(LabValidationError):
            ft_model(z_in, torch.tensor([1]), bad)
        too_many = [torch.zeros(1, tiny_backbone.sequence_length, tiny_backbone.D)] * 3
        with pytest.raises(LabValidationError):
            ft_model(z_in, torch.tensor([1]), too_many)

    def test_identity_pass_oracle(self):
        """Con embedding identidad, bloques neutros y cabeza selectora, ε̂ es la normalización de los tokens crudos."""
        width = 6 * 16
        config = BackboneConfig(N=1, D=3 * width, heads=2, patch_size=4, frames=3, channels=6, height=8, width=8)
        model = DenoiserModel(config)
        with torch.no_grad():
            for p in model.parameters():
                p.zero_()
            model.x_embed.weight.copy_(torch.eye(config.D))
            model.final_layer.linear.weight[:, :width].copy_(torch.eye(width))

        z_in = _randn(2, 3, 18, 8, 8, seed=7)
        raw = patchify(z_in, 4)
        expected = unpatchify(F.layer_norm(raw, (config.D,), eps=1e-6)[..., :width], 3, 6, 8, 8, 4)
        got = denoise_predict(model, z_in, torch.tensor([10, 20]))
        torch.testing.assert_close(got, expected, rtol=1e-5, atol=1e-5)


class TestInitModel:
    def test_same_seed_same_weights(self, tiny_backbone):
        a, b = init_model(tiny_backbone, seed=4), init_model(tiny_backbone, seed=4)
        for (name, p), (_, q) in zip(a.named_parameters(), b.named_parameters()):
            assert torch.equal(p, q), name

    def test_different_seed_different_weights(self, tiny_backbone):
        a, b = init_model(tiny_backbone, seed=4), init_model(tiny_backbone, seed=5)
        assert not torch.equal(a.x_embed.weight, b.x_embed.weight)

    def test_ft_and_efvi_share_backbone(self, ft_model, efvi_model):
        efvi_params = dict(efvi_model.named_parameters())
        for name, p in ft_model.named_parameters():
            assert torch.equal(p, efvi_params[name]), name

    def test_global_rng_untouched(self, tiny_backbone):
        torch.manual_seed(123)
        expected = torch.rand(3)
        torch.manual_seed(123)
        init_model(tiny_backbone, seed=9)
        assert torch.equal(torch.rand(3), expected)
