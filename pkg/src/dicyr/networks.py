"""Declarative construction of the model family.

A network is described by a list of layer records (plain dicts, so they
can live inside experiment config files):

    {"type": "conv", "filters": 32, "kernel": 5, "stride": 1,
     "padding": 2, "activation": "relu"}
    {"type": "maxpool", "size": 2, "stride": 2}
    {"type": "upsample", "factor": 2}
    {"type": "dense", "units": 1024, "activation": "relu"}
    {"type": "dropout", "p": 0.55}
    {"type": "normalization", "kind": "batch" | "instance" | "none"}
    {"type": "flatten"} / {"type": "reshape", "shape": [c, h, w]}
    {"type": "grl"}

The builder propagates shapes, inserts flatten/reshape glue where a
record list omits it, and adjusts sizes that cannot produce the target
resolution (stride-1 convolutions are forced to same padding, and the
dense layer feeding a decoder's conv stack is resized so the upsample
chain lands exactly on the image size).  Every such adjustment is
logged.

The assembled :class:`ModelBundle` owns five sub-networks: the shared
encoder trunk with its task head and per-domain style heads, one decoder
per domain, the label classifier, and the two cross-predictors that try
to reconstruct each embedding from the other through a gradient reversal
layer.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import torch
import torch.nn as nn

from .losses import GradientReversal, LatentPair

log = logging.getLogger(__name__)


class BuildError(ValueError):
    """A layer list is inconsistent with its input shape."""


_ACTIVATIONS = {
    "relu": nn.ReLU,
    "sigmoid": nn.Sigmoid,
    "tanh": nn.Tanh,
}


def _activation_module(name):
    if name in (None, "linear", "none"):
        return None
    if name == "softmax":
        # handled by the caller: the net produces logits and the bundle
        # applies softmax where probabilities are required
        return None
    try:
        return _ACTIVATIONS[name]()
    except KeyError:
        raise BuildError(f"unknown activation {name!r}") from None


@dataclass
class BuiltNet:
    module: nn.Sequential
    output_shape: tuple
    softmax_output: bool = False


def build_layers(records, input_shape, output_hw=None, name="net") -> BuiltNet:
    """Assemble a Sequential from layer records.

    ``input_shape`` is either ``(channels, h, w)`` or ``(features,)``.
    ``output_hw`` gives the target spatial size for decoder-style nets so
    reshape targets can be derived from the remaining upsample factors.
    """
    modules: list[nn.Module] = []
    shape = tuple(input_shape)
    softmax_output = False
    last_linear_idx = None

    def fail(i, rec, msg):
        raise BuildError(f"{name} layer {i} ({rec.get('type')}): {msg}")

    for i, rec in enumerate(records):
        kind = rec.get("type")
        if kind == "conv":
            k, s = int(rec.get("kernel", 3)), int(rec.get("stride", 1))
            pad = rec.get("padding", k // 2)
            filters = int(rec["filters"])
            if len(shape) == 1:
                # dense-to-conv transition: derive the reshape target from
                # the upsample factors still ahead of us
                if output_hw is None:
                    fail(i, rec, "conv on flat input and no target resolution")
                factor = 1
                for later in records[i:]:
                    if later.get("type") == "upsample":
                        factor *= int(later.get("factor", 2))
                h0, w0 = output_hw[0] // factor, output_hw[1] // factor
                if h0 * factor != output_hw[0] or w0 * factor != output_hw[1]:
                    fail(i, rec, f"upsample chain x{factor} cannot reach {output_hw}")
                feats = shape[0]
                if feats % (h0 * w0) == 0:
                    c0 = feats // (h0 * w0)
                else:
                    c0 = filters
                    new_feats = c0 * h0 * w0
                    if last_linear_idx is None:
                        fail(i, rec, f"{feats} features do not tile {h0}x{w0}")
                    old = modules[last_linear_idx]
                    modules[last_linear_idx] = nn.Linear(old.in_features, new_feats)
                    log.info(
                        "%s: resized dense %d -> %d so reshape (%d,%d,%d) feeds the "
                        "upsample chain to %dx%d", name, old.out_features, new_feats,
                        c0, h0, w0, *output_hw,
                    )
                    feats = new_feats
                modules.append(nn.Unflatten(1, (c0, h0, w0)))
                shape = (c0, h0, w0)
            if s == 1 and pad != k // 2:
                log.info(
                    "%s layer %d: padding %s -> %d (same) to preserve the %dx%d grid",
                    name, i, pad, k // 2, shape[1], shape[2],
                )
                pad = k // 2
            modules.append(nn.Conv2d(shape[0], filters, k, stride=s, padding=pad))
            h = (shape[1] + 2 * pad - k) // s + 1
            w = (shape[2] + 2 * pad - k) // s + 1
            if h <= 0 or w <= 0:
                fail(i, rec, f"collapses spatial dims to {h}x{w}")
            shape = (filters, h, w)
            act = _activation_module(rec.get("activation"))
            if act is not None:
                modules.append(act)
        elif kind == "maxpool":
            if len(shape) != 3:
                fail(i, rec, "pooling needs a conv-shaped input")
            size = int(rec.get("size", 2))
            stride = int(rec.get("stride", size))
            modules.append(nn.MaxPool2d(size, stride))
            shape = (shape[0], (shape[1] - size) // stride + 1,
                     (shape[2] - size) // stride + 1)
        elif kind == "upsample":
            if len(shape) != 3:
                fail(i, rec, "upsample needs a conv-shaped input")
            f = int(rec.get("factor", 2))
            modules.append(nn.Upsample(scale_factor=f, mode="nearest"))
            shape = (shape[0], shape[1] * f, shape[2] * f)
        elif kind == "dense":
            units = int(rec["units"])
            if len(shape) == 3:
                modules.append(nn.Flatten())
                shape = (shape[0] * shape[1] * shape[2],)
            modules.append(nn.Linear(shape[0], units))
            last_linear_idx = len(modules) - 1
            shape = (units,)
            if rec.get("activation") == "softmax":
                softmax_output = True
            else:
                act = _activation_module(rec.get("activation"))
                if act is not None:
                    modules.append(act)
        elif kind == "dropout":
            modules.append(nn.Dropout(float(rec["p"])))
        elif kind == "normalization":
            norm = rec.get("kind", "batch")
            if norm == "none":
                pass
            elif len(shape) == 3:
                modules.append(
                    nn.BatchNorm2d(shape[0]) if norm == "batch"
                    else nn.InstanceNorm2d(shape[0])
                )
            elif norm == "batch":
                modules.append(nn.BatchNorm1d(shape[0]))
            else:
                fail(i, rec, "instance normalization needs a conv-shaped input")
        elif kind == "flatten":
            if len(shape) == 3:
                modules.append(nn.Flatten())
                shape = (shape[0] * shape[1] * shape[2],)
        elif kind == "reshape":
            c, h, w = (int(v) for v in rec["shape"])
            if len(shape) != 1 or shape[0] != c * h * w:
                fail(i, rec, f"cannot reshape {shape} into {(c, h, w)}")
            modules.append(nn.Unflatten(1, (c, h, w)))
            shape = (c, h, w)
        elif kind == "grl":
            modules.append(GradientReversal())
        else:
            fail(i, rec, "unknown layer type")

    return BuiltNet(nn.Sequential(*modules), shape, softmax_output)


class ModelBundle(nn.Module):
    """The full model with named, disjoint parameter groups.

    Groups: ``encoder`` (trunk + task head + style heads), one
    ``decoder*`` group per domain, ``classifier``, ``r_tau``,
    ``r_sigma``.
    """

    def __init__(self, specs, input_shape, num_classes, mode):
        super().__init__()
        if mode not in ("single", "uda"):
            raise BuildError(f"unknown mode {mode!r}")
        self.mode = mode
        self.input_shape = tuple(input_shape)
        self.num_classes = int(num_classes)
        c, h, w = self.input_shape

        trunk = build_layers(specs["trunk"], self.input_shape, name="trunk")
        self.trunk = trunk.module
        if len(trunk.output_shape) != 1:
            raise BuildError("trunk must end in a flat feature vector")
        feat = trunk.output_shape[0]

        tau = build_layers(specs["tau_head"], (feat,), name="tau_head")
        self.tau_head = tau.module
        self.dim_tau = tau.output_shape[0]

        self.domains = ("single",) if mode == "single" else ("source", "target")
        heads, decoders = {}, {}
        for dom in self.domains:
            sig = build_layers(specs["sigma_head"], (feat,), name=f"sigma_head[{dom}]")
            heads[dom] = sig.module
            self.dim_sigma = sig.output_shape[0]
            dec = build_layers(
                specs["decoder"], (self.dim_tau + self.dim_sigma,),
                output_hw=(h, w), name=f"decoder[{dom}]",
            )
            if dec.output_shape != self.input_shape:
                raise BuildError(
                    f"decoder produces {dec.output_shape}, dataset needs "
                    f"{self.input_shape}"
                )
            decoders[dom] = dec.module
        self.sigma_heads = nn.ModuleDict(heads)
        self.decoders = nn.ModuleDict(decoders)

        clf = build_layers(specs["classifier"], (self.dim_tau,), name="classifier")
        if clf.output_shape != (self.num_classes,):
            raise BuildError(
                f"classifier produces {clf.output_shape[0]} outputs, "
                f"expected {self.num_classes}"
            )
        self.classifier = clf.module
        self._classifier_softmax = clf.softmax_output

        r_tau = build_layers(specs["r_tau"], (self.dim_sigma,), name="r_tau")
        r_sigma = build_layers(specs["r_sigma"], (self.dim_tau,), name="r_sigma")
        if r_tau.output_shape != (self.dim_tau,):
            raise BuildError("r_tau output width must match the task embedding")
        if r_sigma.output_shape != (self.dim_sigma,):
            raise BuildError("r_sigma output width must match the style embedding")
        self.r_tau = r_tau.module
        self.r_sigma = r_sigma.module
        self._grls = [m for m in self.modules() if isinstance(m, GradientReversal)]
        if not any(isinstance(m, GradientReversal) for m in self.r_tau.modules()):
            raise BuildError("r_tau must contain a gradient reversal layer")
        if not any(isinstance(m, GradientReversal) for m in self.r_sigma.modules()):
            raise BuildError("r_sigma must contain a gradient reversal layer")

    def _domain_key(self, domain):
        if domain is None:
            if self.mode == "uda":
                raise ValueError("two-domain model requires an explicit domain tag")
            return "single"
        if domain not in self.domains:
            raise ValueError(f"unknown domain {domain!r}, expected {self.domains}")
        return domain

    def encode(self, x, domain=None) -> LatentPair:
        key = self._domain_key(domain)
        if tuple(x.shape[1:]) != self.input_shape:
            raise ValueError(
                f"input shape {tuple(x.shape[1:])} does not match {self.input_shape}"
            )
        feats = self.trunk(x)
        return LatentPair(self.tau_head(feats), self.sigma_heads[key](feats))

    def decode(self, latent: LatentPair, domain=None) -> torch.Tensor:
        key = self._domain_key(domain)
        if latent.tau.shape[1] != self.dim_tau or latent.sigma.shape[1] != self.dim_sigma:
            raise ValueError(
                f"latent dims ({latent.tau.shape[1]}, {latent.sigma.shape[1]}) do not "
                f"match decoder input ({self.dim_tau}, {self.dim_sigma})"
            )
        return self.decoders[key](torch.cat([latent.tau, latent.sigma], dim=1))

    def classifier_logits(self, tau):
        if tau.shape[1] != self.dim_tau:
            raise ValueError(f"expected task embedding of dim {self.dim_tau}")
        return self.classifier(tau)

    def classify(self, tau):
        logits = self.classifier_logits(tau)
        return torch.softmax(logits, dim=1) if self._classifier_softmax else logits

    def set_reversal_scale(self, scale: float):
        for grl in self._grls:
            grl.scale = float(scale)

    def cross_predict(self, latent: LatentPair, beta_c3: float = 1.0):
        """Predict each embedding from the other.  ``beta_c3`` only sets
        the reversal scale seen by the encoder; forward values are
        unaffected."""
        self.set_reversal_scale(beta_c3)
        return self.r_tau(latent.sigma), self.r_sigma(latent.tau)

    def parameter_groups(self):
        groups = {
            "encoder": (
                list(self.trunk.parameters())
                + list(self.tau_head.parameters())
                + list(self.sigma_heads.parameters())
            ),
            "classifier": list(self.classifier.parameters()),
            "r_tau": list(self.r_tau.parameters()),
            "r_sigma": list(self.r_sigma.parameters()),
        }
        if self.mode == "single":
            groups["decoder"] = list(self.decoders["single"].parameters())
        else:
            groups["decoder_source"] = list(self.decoders["source"].parameters())
            groups["decoder_target"] = list(self.decoders["target"].parameters())
        return groups

    def decoder_group_name(self, domain):
        return "decoder" if self.mode == "single" else f"decoder_{domain}"


def build_model(specs, input_shape, num_classes, mode) -> ModelBundle:
    """Build and shape-audit a bundle from per-subnetwork layer records."""
    bundle = ModelBundle(specs, input_shape, num_classes, mode)
    bundle.eval()
    with torch.no_grad():
        probe = torch.zeros(1, *bundle.input_shape)
        for dom in bundle.domains:
            latent = bundle.encode(probe, dom)
            out = bundle.decode(latent, dom)
            if tuple(out.shape[1:]) != bundle.input_shape:
                raise BuildError(f"decoder[{dom}] round trip changed the image shape")
            bundle.cross_predict(latent)
            bundle.classify(latent.tau)
    bundle.train()
    return bundle
