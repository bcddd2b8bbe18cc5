import pytest
import torch

from dicyr import presets
from dicyr.losses import LatentPair
from dicyr.networks import BuildError, ModelBundle, build_layers, build_model


def tiny_specs(dim_tau=6, dim_sigma=5, num_classes=3):
    """Small single-domain family for fast structural tests."""
    return {
        "trunk": [
            {"type": "conv", "filters": 4, "kernel": 3, "stride": 1, "padding": 1,
             "activation": "relu"},
            {"type": "maxpool", "size": 2, "stride": 2},
            {"type": "dense", "units": 16, "activation": "relu"},
        ],
        "tau_head": [{"type": "dense", "units": dim_tau, "activation": "relu"}],
        "sigma_head": [{"type": "dense", "units": dim_sigma, "activation": "relu"}],
        "decoder": [
            {"type": "dense", "units": 16, "activation": "relu"},
            {"type": "conv", "filters": 4, "kernel": 3, "stride": 1, "padding": 1,
             "activation": "relu"},
            {"type": "upsample", "factor": 2},
            {"type": "conv", "filters": 3, "kernel": 3, "stride": 1, "padding": 1,
             "activation": "sigmoid"},
        ],
        "classifier": [{"type": "dropout", "p": 0.2},
                       {"type": "dense", "units": num_classes, "activation": "softmax"}],
        "r_tau": [{"type": "grl"},
                  {"type": "dense", "units": 8, "activation": "relu"},
                  {"type": "dense", "units": dim_tau, "activation": "linear"}],
        "r_sigma": [{"type": "grl"},
                    {"type": "dense", "units": 8, "activation": "relu"},
                    {"type": "dense", "units": dim_sigma, "activation": "linear"}],
    }


def make_tiny(mode="single", **kw):
    return build_model(tiny_specs(**kw), (3, 8, 8), kw.get("num_classes", 3), mode)


class TestBuilder:
    def test_shape_propagation_conv_pool_dense(self):
        net = build_layers(
            [{"type": "conv", "filters": 8, "kernel": 5, "padding": 2,
              "activation": "relu"},
             {"type": "maxpool", "size": 2, "stride": 2},
             {"type": "dense", "units": 12, "activation": "relu"}],
            (3, 16, 16),
        )
        assert net.output_shape == (12,)
        out = net.module(torch.zeros(2, 3, 16, 16))
        assert out.shape == (2, 12)

    def test_growing_padding_forced_to_same(self):
        # kernel 3 with padding 2 would grow the grid; the builder pins it
        net = build_layers(
            [{"type": "conv", "filters": 4, "kernel": 3, "padding": 2,
              "activation": "relu"}],
            (3, 8, 8),
        )
        assert net.output_shape == (4, 8, 8)

    def test_dense_resized_to_feed_upsample_chain(self):
        # 30 features cannot tile 2x2, so the dense is rebuilt to 4*2*2
        net = build_layers(
            [{"type": "dense", "units": 30, "activation": "relu"},
             {"type": "conv", "filters": 4, "kernel": 3, "padding": 1,
              "activation": "relu"},
             {"type": "upsample", "factor": 2},
             {"type": "conv", "filters": 3, "kernel": 3, "padding": 1,
              "activation": "sigmoid"}],
            (11,),
            output_hw=(4, 4),
        )
        assert net.output_shape == (3, 4, 4)
        assert net.module(torch.zeros(2, 11)).shape == (2, 3, 4, 4)

    def test_unknown_layer_names_offender(self):
        with pytest.raises(BuildError, match="layer 1"):
            build_layers(
                [{"type": "dense", "units": 4}, {"type": "wiggle"}], (8,),
            )

    def test_explicit_reshape_validates_element_count(self):
        with pytest.raises(BuildError, match="reshape"):
            build_layers([{"type": "reshape", "shape": [2, 3, 3]}], (17,))


class TestModelBundle:
    def test_parameter_groups_disjoint_and_cover(self):
        bundle = make_tiny()
        groups = bundle.parameter_groups()
        seen = set()
        for name, params in groups.items():
            for p in params:
                assert id(p) not in seen, f"parameter shared with {name}"
                seen.add(id(p))
        assert seen == {id(p) for p in bundle.parameters()}

    def test_uda_has_two_style_heads_and_decoders(self):
        bundle = make_tiny(mode="uda")
        assert set(bundle.sigma_heads.keys()) == {"source", "target"}
        assert set(bundle.decoders.keys()) == {"source", "target"}
        g = bundle.parameter_groups()
        assert "decoder_source" in g and "decoder_target" in g

    def test_forward_determinism_in_eval_mode(self):
        bundle = make_tiny().eval()
        x = torch.rand(4, 3, 8, 8)
        a = bundle.encode(x)
        b = bundle.encode(x)
        assert torch.equal(a.tau, b.tau) and torch.equal(a.sigma, b.sigma)

    def test_identical_inputs_identical_rows(self):
        bundle = make_tiny().eval()
        x = torch.rand(1, 3, 8, 8).repeat(3, 1, 1, 1)
        latent = bundle.encode(x)
        assert torch.equal(latent.tau[0], latent.tau[2])
        assert torch.equal(latent.sigma[0], latent.sigma[2])

    def test_decode_in_unit_range_and_swap_compatible(self):
        bundle = make_tiny().eval()
        latent = bundle.encode(torch.rand(4, 3, 8, 8))
        swapped = LatentPair(latent.tau, torch.roll(latent.sigma, 1, dims=0))
        img = bundle.decode(swapped)
        assert img.shape == (4, 3, 8, 8)
        assert img.min() >= 0.0 and img.max() <= 1.0

    def test_classify_rows_are_probabilities(self):
        bundle = make_tiny().eval()
        latent = bundle.encode(torch.rand(5, 3, 8, 8))
        probs = bundle.classify(latent.tau)
        assert probs.shape == (5, 3)
        assert torch.allclose(probs.sum(dim=1), torch.ones(5), atol=1e-6)

    def test_cross_predict_forward_independent_of_scale(self):
        bundle = make_tiny().eval()
        latent = bundle.encode(torch.rand(4, 3, 8, 8))
        a = bundle.cross_predict(latent, beta_c3=0.0)
        b = bundle.cross_predict(latent, beta_c3=1.0)
        assert torch.equal(a[0], b[0]) and torch.equal(a[1], b[1])
        assert a[0].shape == latent.tau.shape
        assert a[1].shape == latent.sigma.shape

    def test_reversal_flips_encoder_gradient(self):
        torch.manual_seed(0)
        bundle = make_tiny()
        bundle.eval()
        x = torch.rand(4, 3, 8, 8)

        def sigma_pred_grad(reversed_path):
            bundle.zero_grad()
            latent = bundle.encode(x)
            if reversed_path:
                _, sigma_hat = bundle.cross_predict(latent, beta_c3=1.0)
            else:
                bundle.set_reversal_scale(-1.0)  # cancel the flip
                _, sigma_hat = bundle.r_tau(latent.sigma), bundle.r_sigma(latent.tau)
            (sigma_hat - latent.sigma.detach()).pow(2).sum().backward()
            return bundle.tau_head[0].weight.grad.clone()

        g_reversed = sigma_pred_grad(True)
        g_plain = sigma_pred_grad(False)
        assert torch.allclose(g_reversed, -g_plain, atol=1e-6)

    def test_predictor_gradient_is_descent_direction(self):
        # the side network itself trains normally: one small step on its
        # own loss decreases that loss
        torch.manual_seed(1)
        bundle = make_tiny()
        bundle.eval()
        x = torch.rand(8, 3, 8, 8)
        latent = bundle.encode(x)
        latent = LatentPair(latent.tau.detach(), latent.sigma.detach())
        opt = torch.optim.SGD(bundle.r_sigma.parameters(), lr=1e-3)

        def loss():
            _, sigma_hat = bundle.cross_predict(latent, beta_c3=1.0)
            return (sigma_hat - latent.sigma).pow(2).mean()

        before = loss().item()
        opt.zero_grad()
        loss().backward()
        opt.step()
        assert loss().item() < before

    def test_unknown_domain_tag_raises(self):
        bundle = make_tiny(mode="uda")
        with pytest.raises(ValueError, match="domain"):
            bundle.encode(torch.rand(2, 3, 8, 8), "nowhere")
        with pytest.raises(ValueError, match="domain"):
            bundle.encode(torch.rand(2, 3, 8, 8))

    def test_latent_dim_mismatch_raises(self):
        bundle = make_tiny()
        with pytest.raises(ValueError, match="dims"):
            bundle.decode(LatentPair(torch.rand(2, 7), torch.rand(2, 5)))

    def test_inconsistent_spec_raises_with_subnet_name(self):
        specs = tiny_specs()
        specs["r_tau"][-1] = {"type": "dense", "units": 99, "activation": "linear"}
        with pytest.raises(BuildError, match="r_tau"):
            build_model(specs, (3, 8, 8), 3, "single")


class TestPresets:
    @pytest.mark.parametrize(
        "name,hw,classes,dim_tau",
        [
            ("supervised_svhn", (32, 32), 10, 150),
            ("supervised_shapes", (64, 64), 4, 150),
            ("uda_svhn_mnist", (32, 32), 10, 75),
            ("uda_mnist_usps", (28, 28), 10, 150),
            ("uda_synsigns_gtsrb", (40, 40), 43, 150),
        ],
    )
    def test_shape_audit(self, name, hw, classes, dim_tau):
        mode = "uda" if name.startswith("uda") else "single"
        specs = presets.resolve_preset(name)
        bundle = build_model(specs, (3, *hw), classes, mode)
        bundle.eval()
        x = torch.rand(1, 3, *hw)
        dom = "source" if mode == "uda" else None
        latent = bundle.encode(x, dom)
        assert latent.tau.shape == (1, dim_tau)
        out = bundle.decode(latent, dom)
        assert tuple(out.shape) == (1, 3, *hw)
        assert bundle.classify(latent.tau).shape == (1, classes)

    def test_mnist_usps_head_sizes(self):
        bundle = build_model(
            presets.resolve_preset("uda_mnist_usps"), (3, 28, 28), 10, "uda"
        )
        bundle.eval()
        latent = bundle.encode(torch.rand(8, 3, 28, 28), "source")
        assert latent.tau.shape == (8, 150)
        assert latent.sigma.shape == (8, 150)

    def test_classifier_dropout_present(self):
        specs = presets.resolve_preset("uda_mnist_usps")
        assert specs["classifier"][0] == {"type": "dropout", "p": 0.55}

    def test_unknown_preset(self):
        with pytest.raises(ValueError, match="preset"):
            presets.resolve_preset("uda_mars_venus")
