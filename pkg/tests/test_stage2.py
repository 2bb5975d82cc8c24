import copy

import pytest
import torch

from a2f.disc import PatchDiscriminator, PatchDiscriminatorConfig, discriminate, patch_accuracy
from a2f.losses import Conv12FeatureExtractor, LossWeights, composite_loss, generator_adversarial_loss, l1_loss
from a2f.stage1 import Stage1Config, Stage1Model
from a2f.stage2 import AUDeNet, AUDeNetConfig, DenseBlock, generate_enhanced, make_enhancement_pairs, train_stage2
from a2f.training import TrainSpec

SMALL = AUDeNetConfig(width_scale=0.125, attr_embed_dim=16)


@pytest.fixture()
def small_g2():
    torch.manual_seed(0)
    g = AUDeNet(SMALL)
    g.eval()
    return g


class TestDenseBlock:
    def test_reference_shape_contract(self):
        torch.manual_seed(1)
        block = DenseBlock(128, 512, growth=32)
        block.eval()
        out = block(torch.randn(2, 128, 16, 16))
        assert out.shape == (2, 512, 16, 16)

    def test_deterministic(self):
        torch.manual_seed(2)
        block = DenseBlock(8, 16, growth=4)
        block.eval()
        x = torch.randn(1, 8, 8, 8)
        assert torch.equal(block(x), block(x))

    def test_channel_mismatch_rejected(self):
        block = DenseBlock(8, 16, growth=4)
        with pytest.raises(ValueError):
            block(torch.randn(1, 12, 8, 8))

    def test_internal_concatenation_is_live(self):
        """Severing one internal feature-to-layer connection changes the output."""
        torch.manual_seed(3)
        block = DenseBlock(8, 16, growth=4)
        block.eval()
        x = torch.randn(1, 8, 8, 8)
        baseline = block(x)

        severed = copy.deepcopy(block)
        g, cin = severed.growth, severed.in_channels
        # layer 3's 1x1 conv consumes [input | f1 | f2 | f3]; zero its view of f1
        with torch.no_grad():
            severed.layers[3].conv1.weight[:, cin : cin + g] = 0.0
        assert not torch.equal(severed(x), baseline)

    def test_every_layer_consumes_all_predecessors(self):
        block = DenseBlock(8, 16, growth=4, n_layers=6)
        for i, layer in enumerate(block.layers):
            assert layer.conv1.in_channels == 8 + i * 4
        assert block.project[0].in_channels == 8 + 6 * 4


class TestAUDeNet:
    def test_shape_and_range(self, small_g2):
        coarse = torch.rand(2, 3, 64, 64) * 2 - 1
        out = generate_enhanced(coarse, torch.randn(2, 16), small_g2)
        assert out.shape == (2, 3, 64, 64)
        assert out.min() >= -1.0 and out.max() <= 1.0

    def test_deterministic_given_weights(self, small_g2):
        coarse = torch.rand(1, 3, 64, 64) * 2 - 1
        e = torch.randn(1, 16)
        assert torch.equal(small_g2(coarse, e), small_g2(coarse, e))

    def test_conditioning_is_live(self, small_g2):
        # float64: on fresh random weights the embedding signal attenuates
        # through ~30 conv layers and underflows float32 at the output
        g = copy.deepcopy(small_g2).double()
        coarse = (torch.rand(1, 3, 64, 64) * 2 - 1).double()
        zero = g(coarse, torch.zeros(1, 16, dtype=torch.float64))
        onehot = torch.zeros(1, 16, dtype=torch.float64)
        onehot[0, 0] = 1.0
        assert not torch.equal(g(coarse, onehot), zero)

    def test_embedding_width_checked(self, small_g2):
        with pytest.raises(ValueError):
            small_g2(torch.zeros(1, 3, 64, 64), torch.zeros(1, 32))

    def test_every_skip_resolution_used_exactly_once(self, small_g2):
        counts = {r: 0 for r in small_g2.skip_resolutions}
        hooks = []
        for r in small_g2.skip_resolutions:
            def bump(mod, inp, out, r=r):
                counts[r] += 1
            hooks.append(small_g2.skip_taps[str(r)].register_forward_hook(bump))
        small_g2(torch.zeros(1, 3, 64, 64), torch.zeros(1, 16))
        for h in hooks:
            h.remove()
        assert counts == {64: 1, 32: 1, 16: 1, 8: 1}

    def test_each_skip_feeds_matching_decoder_resolution(self, small_g2):
        """Zeroing one skip tensor changes the output: the long connections carry signal."""
        coarse = torch.rand(1, 3, 64, 64) * 2 - 1
        e = torch.randn(1, 16)
        baseline = small_g2(coarse, e)
        for r in small_g2.skip_resolutions:
            hook = small_g2.skip_taps[str(r)].register_forward_hook(
                lambda mod, inp, out: torch.zeros_like(out)
            )
            changed = small_g2(coarse, e)
            hook.remove()
            assert not torch.equal(changed, baseline), f"skip at {r} is dead"

    def test_no_attribute_variant_ignores_embedding(self):
        torch.manual_seed(4)
        g = AUDeNet(AUDeNetConfig(width_scale=0.125, attr_embed_dim=16, use_attributes=False))
        g.eval()
        coarse = torch.rand(1, 3, 64, 64) * 2 - 1
        assert torch.equal(g(coarse, torch.zeros(1, 16)), g(coarse, torch.ones(1, 16)))


class TestPatchDiscriminator:
    def test_map_is_6x6(self):
        torch.manual_seed(5)
        d = PatchDiscriminator(PatchDiscriminatorConfig())
        d.eval()
        out = discriminate(torch.randn(3, 3, 64, 64), torch.randn(3, 3, 64, 64), d)
        assert out.shape == (3, 1, 6, 6)

    def test_outputs_in_unit_interval(self):
        torch.manual_seed(6)
        d = PatchDiscriminator(PatchDiscriminatorConfig(base_channels=8))
        d.eval()
        out = d(torch.randn(2, 3, 64, 64), torch.randn(2, 3, 64, 64))
        assert (out > 0).all() and (out < 1).all()

    def test_batch_dimension_preserved(self):
        d = PatchDiscriminator(PatchDiscriminatorConfig(base_channels=8))
        d.eval()
        for b in (1, 4, 7):
            assert d(torch.zeros(b, 3, 64, 64), torch.zeros(b, 3, 64, 64)).shape[0] == b

    def test_condition_required_when_conditional(self):
        d = PatchDiscriminator(PatchDiscriminatorConfig(base_channels=8))
        with pytest.raises(ValueError):
            d(None, torch.zeros(1, 3, 64, 64))

    def test_unconditional_variant(self):
        d = PatchDiscriminator(PatchDiscriminatorConfig(base_channels=8, conditional=False))
        d.eval()
        assert d(None, torch.zeros(1, 3, 64, 64)).shape == (1, 1, 6, 6)

    def test_patch_accuracy_helper(self):
        real = torch.tensor([0.9, 0.4])
        fake = torch.tensor([0.1, 0.6])
        assert patch_accuracy(real, fake) == 0.5


class TestEnhancementPairs:
    def test_pairs_match_training_split(self, sketch_tensor):
        torch.manual_seed(7)
        s1 = Stage1Model(Stage1Config(n_texture_attributes=4, z_dim=16,
                                      attr_embed_dim=16, noise_dim=6, base_channels=4))
        tex = torch.randint(0, 2, (8, 4)).float() * 2 - 1
        gen = torch.Generator().manual_seed(0)
        coarse, embeds = make_enhancement_pairs(s1, sketch_tensor, tex, gen)
        assert coarse.shape == sketch_tensor.shape
        assert embeds.shape == (8, 16)
        gen2 = torch.Generator().manual_seed(0)
        coarse2, _ = make_enhancement_pairs(s1, sketch_tensor, tex, gen2)
        assert torch.equal(coarse, coarse2)


class TestTrainStage2:
    def test_smoke_run_and_log(self, sketch_tensor, tiny_schema):
        coarse = sketch_tensor.clone()
        spec = TrainSpec(batch_size=8, epochs=2, warm_epochs=2, decay_epochs=10, seed=3)
        w = LossWeights(lambda_l1=100.0, lambda_perp=1.0)
        g, d, log = train_stage2(coarse, sketch_tensor, torch.zeros(8, 16),
                                 SMALL, PatchDiscriminatorConfig(base_channels=8),
                                 spec, w, Conv12FeatureExtractor(seed=0))
        assert len(log) == 2
        assert {"d_loss", "g_adv", "g_l1", "g_perp", "g_total", "epoch", "lr"} <= set(log[0])

    def test_zero_weights_gradient_equals_pure_adversarial(self, sketch_tensor):
        torch.manual_seed(8)
        g = AUDeNet(SMALL)
        d = PatchDiscriminator(PatchDiscriminatorConfig(base_channels=8))
        g.train(); d.eval()
        coarse, target = sketch_tensor[:2], sketch_tensor[2:4]
        embed = torch.zeros(2, 16)
        w0 = LossWeights(lambda_l1=0.0, lambda_perp=0.0)

        fake = g(coarse, embed)
        adv = generator_adversarial_loss(d(coarse, fake))
        l1 = l1_loss(fake, target)
        perp = l1_loss(fake * 0.5, target * 0.5)
        composite_loss(adv, l1, perp, w0).backward()
        grads_composite = [p.grad.clone() for p in g.parameters() if p.grad is not None]

        g.zero_grad()
        fake = g(coarse, embed)
        generator_adversarial_loss(d(coarse, fake)).backward()
        grads_pure = [p.grad.clone() for p in g.parameters() if p.grad is not None]

        for gc, gp in zip(grads_composite, grads_pure):
            assert torch.allclose(gc, gp, atol=1e-7)

    def test_perceptual_gradient_reaches_generator_not_extractor(self, sketch_tensor):
        torch.manual_seed(9)
        g = AUDeNet(SMALL)
        g.train()
        ext = Conv12FeatureExtractor(seed=1)
        from a2f.losses import perceptual_loss

        fake = g(sketch_tensor[:2], torch.zeros(2, 16))
        perceptual_loss(fake, sketch_tensor[2:4], ext).backward()
        assert any(p.grad is not None and p.grad.abs().sum() > 0 for p in g.parameters())
        assert all(p.grad is None for p in ext.parameters())
