"""Default network families, one preset per benchmark setup.

Each preset returns the per-subnetwork layer records that
:func:`dicyr.networks.build_model` consumes.  Embedding widths, class
counts, dropout and normalization are exposed so experiment configs can
override them without writing full layer lists.
"""

from __future__ import annotations


def _conv(filters, kernel, padding, activation, norm=None):
    rec = [{"type": "conv", "filters": filters, "kernel": kernel, "stride": 1,
            "padding": padding, "activation": activation}]
    if norm and norm != "none":
        rec.append({"type": "normalization", "kind": norm})
    return rec


def _dense(units, activation=None):
    return {"type": "dense", "units": units, "activation": activation}


_POOL = {"type": "maxpool", "size": 2, "stride": 2}
_UP = {"type": "upsample", "factor": 2}
_GRL = {"type": "grl"}


def supervised(num_classes=10, dim_tau=150, dim_sigma=150, dropout=0.55,
               mid_filters=64, normalization="none"):
    """Single-domain family: two 5x5 conv blocks with pooling, a 3x3
    conv, then a 1024-wide embedding trunk."""
    n = normalization
    return {
        "trunk": (
            _conv(32, 5, 2, "relu", n) + [_POOL]
            + _conv(32, 5, 2, "relu", n) + [_POOL]
            + _conv(mid_filters, 3, 1, "relu", n)
            + [_dense(1024, "relu")]
        ),
        "tau_head": [_dense(dim_tau, "relu")],
        "sigma_head": [_dense(dim_sigma, "relu")],
        "decoder": (
            [_dense(1024, "relu"), _dense(8192, "relu")]
            + _conv(64, 3, 1, "relu") + [_UP]
            + _conv(32, 5, 2, "relu") + [_UP]
            + _conv(3, 5, 2, "sigmoid")
        ),
        "classifier": [{"type": "dropout", "p": dropout},
                       _dense(num_classes, "softmax")],
        "r_tau": [_GRL, _dense(100, "relu"), _dense(100, "relu"),
                  _dense(dim_tau, "linear")],
        "r_sigma": [_GRL, _dense(100, "relu"), _dense(100, "relu"),
                    _dense(dim_sigma, "linear")],
    }


def uda_svhn_mnist(num_classes=10, dim_tau=75, dim_sigma=75, dropout=0.55,
                   normalization="instance", mid_filters=32, top_filters=32):
    """Two-domain digits family with instance-normalized linear convs."""
    n = normalization
    return {
        "trunk": (
            _conv(32, 5, 2, "linear", n) + [_POOL]
            + _conv(mid_filters, 5, 2, "linear", n) + [_POOL]
            + _conv(top_filters, 3, 2, "linear", n)
            + [_dense(1024, "relu")]
        ),
        "tau_head": [_dense(dim_tau, "relu")],
        "sigma_head": [_dense(dim_sigma, "relu")],
        "decoder": (
            [_dense(1024, "relu"), _dense(2048, "relu")]
            + _conv(32, 3, 1, "relu") + [_UP]
            + _conv(32, 5, 2, "relu") + [_UP]
            + _conv(3, 5, 2, "sigmoid")
        ),
        "classifier": [{"type": "dropout", "p": dropout},
                       _dense(num_classes, "softmax")],
        "r_tau": [_GRL, _dense(100, "relu"), _dense(dim_tau, "linear")],
        "r_sigma": [_GRL, _dense(100, "relu"), _dense(dim_sigma, "linear")],
    }


def uda_mnist_usps(num_classes=10, dim_tau=150, dim_sigma=150, dropout=0.55,
                   normalization="batch"):
    n = normalization
    return {
        "trunk": (
            _conv(50, 5, 2, "relu", n) + [_POOL]
            + _conv(75, 5, 2, "relu", n) + [_POOL]
            + _conv(100, 3, 2, "linear", n)
            + [_dense(1024, "relu")]
        ),
        "tau_head": [_dense(dim_tau, "relu")],
        "sigma_head": [_dense(dim_sigma, "relu")],
        "decoder": (
            [_dense(1024, "relu"), _dense(6400, "relu")]
            + _conv(100, 3, 1, "relu") + [_UP]
            + _conv(50, 5, 2, "relu") + [_UP]
            + _conv(3, 5, 2, "sigmoid")
        ),
        "classifier": [{"type": "dropout", "p": dropout},
                       _dense(num_classes, "softmax")],
        "r_tau": [_GRL, _dense(100, "relu"), _dense(dim_tau, "linear")],
        "r_sigma": [_GRL, _dense(100, "relu"), _dense(dim_sigma, "linear")],
    }


def uda_synsigns_gtsrb(num_classes=43, dim_tau=150, dim_sigma=150, dropout=0.55,
                       normalization="instance"):
    n = normalization
    return {
        "trunk": (
            _conv(32, 5, 2, "relu", n) + [_POOL]
            + _conv(32, 5, 2, "relu", n) + [_POOL]
            + _conv(32, 3, 2, "linear", n) + [_POOL]
            + _conv(32, 3, 2, "linear", n)
            + [_dense(1024, "relu")]
        ),
        "tau_head": [_dense(dim_tau, "relu")],
        "sigma_head": [_dense(dim_sigma, "relu")],
        "decoder": (
            [_dense(1024, "relu"), _dense(1024, "relu")]
            + _conv(32, 3, 1, "relu") + [_UP]
            + _conv(32, 3, 1, "relu") + [_UP]
            + _conv(32, 5, 2, "relu") + [_UP]
            + _conv(3, 5, 2, "sigmoid")
        ),
        "classifier": [{"type": "dropout", "p": dropout},
                       _dense(num_classes, "softmax")],
        "r_tau": [_GRL, _dense(100, "relu"), _dense(dim_tau, "linear")],
        "r_sigma": [_GRL, _dense(100, "relu"), _dense(dim_sigma, "linear")],
    }


PRESETS = {
    "supervised_svhn": supervised,
    "supervised_shapes": lambda **kw: supervised(
        **{"num_classes": 4, "dropout": 0.2, **kw}
    ),
    "uda_svhn_mnist": uda_svhn_mnist,
    "uda_mnist_svhn": lambda **kw: uda_svhn_mnist(
        **{"dim_tau": 200, "dim_sigma": 200, "mid_filters": 64,
           "top_filters": 128, **kw}
    ),
    "uda_mnist_usps": uda_mnist_usps,
    "uda_usps_mnist": uda_mnist_usps,
    "uda_synsigns_gtsrb": uda_synsigns_gtsrb,
}


def resolve_preset(name, **overrides):
    try:
        factory = PRESETS[name]
    except KeyError:
        raise ValueError(
            f"unknown network preset {name!r}; available: {sorted(PRESETS)}"
        ) from None
    return factory(**overrides)
