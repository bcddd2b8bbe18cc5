"""Loss terms, coefficient schedules, and the gradient reversal primitive.

The training objective decomposes into named scalar terms, logged under
these keys throughout the project:

* ``l_c1``   task loss (cross entropy) computed from the task embedding;
  in the two-domain mode it splits into ``l_c1s`` (labeled source) and
  ``l_c1t`` (the cross-domain cyclic term, see
  :func:`cross_domain_task_loss`).
* ``l_c2``   pixel reconstruction loss of the autoencoder path
  (``l_c2s`` / ``l_c2t`` per domain).
* ``l_c3``   sum of the two cross-prediction errors ``l_r_tau`` and
  ``l_r_sigma``.  The side networks minimize these; the encoder sits
  behind a :class:`GradientReversal` layer and therefore receives the
  sign-flipped, scaled gradient, i.e. it learns to make its two
  embeddings mutually unpredictable.
* ``l_c4``   cyclic reconstruction loss: decode with a swapped style,
  re-encode, and constrain where the recovered embeddings land (task
  part pinned by an L2 distance, style part by a triplet hinge).

All functions are pure and differentiable; they carry no state and are
safe to call from any thread.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import torch
import torch.nn.functional as F


class _ReverseGradient(torch.autograd.Function):
    @staticmethod
    def forward(ctx, x, scale):
        ctx.scale = scale
        return x.view_as(x)

    @staticmethod
    def backward(ctx, grad_output):
        return grad_output.neg().mul(ctx.scale), None


def gradient_reversal(x: torch.Tensor, scale: float = 1.0) -> torch.Tensor:
    """Identity on the forward pass; multiplies the gradient by ``-scale``
    on the backward pass."""
    return _ReverseGradient.apply(x, float(scale))


class GradientReversal(torch.nn.Module):
    """Module wrapper so the reversal can sit inside a Sequential.

    ``scale`` is mutable; the trainer sets it per step from the
    ``beta_c3`` schedule.
    """

    def __init__(self, scale: float = 1.0):
        super().__init__()
        self.scale = scale

    def forward(self, x):
        return gradient_reversal(x, self.scale)

    def extra_repr(self):
        return f"scale={self.scale}"


@dataclass
class LatentPair:
    """Batch of (task, style) embeddings produced by the encoder."""

    tau: torch.Tensor
    sigma: torch.Tensor

    def __post_init__(self):
        if self.tau.shape[0] != self.sigma.shape[0]:
            raise ValueError(
                f"tau and sigma batch sizes differ: {self.tau.shape[0]} vs "
                f"{self.sigma.shape[0]}"
            )


def _per_sample_l2(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    """Euclidean norm of (a - b) per batch element, any trailing shape."""
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {tuple(a.shape)} vs {tuple(b.shape)}")
    return torch.linalg.vector_norm((a - b).flatten(1), dim=1)


def reconstruction_loss(x_hat: torch.Tensor, x: torch.Tensor) -> torch.Tensor:
    """Mean squared error over all pixels and batch elements."""
    if x_hat.shape != x.shape:
        raise ValueError(
            f"reconstruction shape mismatch: {tuple(x_hat.shape)} vs {tuple(x.shape)}"
        )
    return F.mse_loss(x_hat, x)


def task_loss(logits: torch.Tensor, labels: torch.Tensor) -> torch.Tensor:
    """Mean cross entropy between softmax(logits) and integer labels."""
    num_classes = logits.shape[-1]
    if labels.numel() and (labels.min() < 0 or labels.max() >= num_classes):
        raise ValueError(
            f"labels must lie in [0, {num_classes}), got range "
            f"[{int(labels.min())}, {int(labels.max())}]"
        )
    return F.cross_entropy(logits, labels)


def orthogonality_losses(
    latent: LatentPair, r_tau_out: torch.Tensor, r_sigma_out: torch.Tensor
):
    """Prediction errors of the two side networks.

    Returns ``(l_r_tau, l_r_sigma, l_c3)`` where each ``l_r_*`` is the
    batch mean of the Euclidean distance between an embedding and its
    cross-prediction, and ``l_c3`` is their sum.
    """
    l_r_tau = _per_sample_l2(latent.tau, r_tau_out).mean()
    l_r_sigma = _per_sample_l2(latent.sigma, r_sigma_out).mean()
    return l_r_tau, l_r_sigma, l_r_tau + l_r_sigma


def cyclic_loss(
    tau: torch.Tensor,
    tau_tilde: torch.Tensor,
    sigma: torch.Tensor,
    sigma_prime: torch.Tensor,
    sigma_tilde: torch.Tensor,
    margin: float,
) -> torch.Tensor:
    """Swap-and-re-encode consistency loss.

    ``tau_tilde`` / ``sigma_tilde`` are the embeddings recovered from the
    image decoded with the original task embedding ``tau`` and the
    swapped style ``sigma_prime``.  Per sample:

        ||tau_tilde - tau||_2
        + max(||sigma_tilde - sigma_prime||_2
              - ||sigma_tilde - sigma||_2 + margin, 0)

    i.e. the recovered style is a triplet anchor that must land near the
    style it was decoded with and away from the style it replaced.
    """
    if margin < 0:
        raise ValueError(f"margin must be nonnegative, got {margin}")
    task_term = _per_sample_l2(tau_tilde, tau)
    pos = _per_sample_l2(sigma_tilde, sigma_prime)
    neg = _per_sample_l2(sigma_tilde, sigma)
    return (task_term + torch.relu(pos - neg + margin)).mean()


def cross_domain_feature_loss(tau_s, tau_st, tau_t, tau_ts) -> torch.Tensor:
    """Task embeddings must survive a round trip through the other
    domain's decoder: ``tau_st`` re-encodes the artificial sample built
    from source content, ``tau_ts`` the one built from target content."""
    return _per_sample_l2(tau_s, tau_st).mean() + _per_sample_l2(tau_t, tau_ts).mean()


def cross_domain_task_oriented_loss(
    probs_st: torch.Tensor,
    probs_ts: torch.Tensor,
    probs_t: torch.Tensor,
    labels_s: torch.Tensor,
) -> torch.Tensor:
    """Classifier-space variant of the cross-domain cyclic term.

    The artificial sample decoded from source content into the target
    style inherits the source label, so its class probabilities are
    pinned to the one-hot label; the unlabeled direction is constrained
    by prediction consistency instead.
    """
    num_classes = probs_st.shape[-1]
    if labels_s.numel() and (labels_s.min() < 0 or labels_s.max() >= num_classes):
        raise ValueError(
            f"labels must lie in [0, {num_classes}), got range "
            f"[{int(labels_s.min())}, {int(labels_s.max())}]"
        )
    one_hot = F.one_hot(labels_s, num_classes).to(probs_st.dtype)
    return (
        _per_sample_l2(probs_st, one_hot).mean()
        + _per_sample_l2(probs_ts, probs_t).mean()
    )


def cross_domain_task_loss(
    variant: str,
    *,
    tau_s=None,
    tau_st=None,
    tau_t=None,
    tau_ts=None,
    probs_st=None,
    probs_ts=None,
    probs_t=None,
    labels_s=None,
) -> torch.Tensor:
    """Dispatch between the two cross-domain cyclic loss variants."""
    if variant == "feature":
        missing = [
            n
            for n, v in [
                ("tau_s", tau_s),
                ("tau_st", tau_st),
                ("tau_t", tau_t),
                ("tau_ts", tau_ts),
            ]
            if v is None
        ]
        if missing:
            raise ValueError(f"feature variant requires {missing}")
        return cross_domain_feature_loss(tau_s, tau_st, tau_t, tau_ts)
    if variant == "task_oriented":
        missing = [
            n
            for n, v in [
                ("probs_st", probs_st),
                ("probs_ts", probs_ts),
                ("probs_t", probs_t),
                ("labels_s", labels_s),
            ]
            if v is None
        ]
        if missing:
            raise ValueError(f"task_oriented variant requires {missing}")
        return cross_domain_task_oriented_loss(probs_st, probs_ts, probs_t, labels_s)
    raise ValueError(f"unknown variant {variant!r}")


@dataclass(frozen=True)
class ScheduleSpec:
    """Linear ramp from ``start_value`` to ``end_value`` over
    ``ramp_epochs`` epochs, clamped at the plateau afterwards."""

    start_value: float
    end_value: float
    ramp_epochs: int

    def value(self, epoch: int) -> float:
        if self.ramp_epochs <= 0:
            raise ValueError(f"ramp_epochs must be positive, got {self.ramp_epochs}")
        frac = min(epoch / self.ramp_epochs, 1.0)
        return self.start_value + frac * (self.end_value - self.start_value)

    @staticmethod
    def constant(value: float) -> "ScheduleSpec":
        return ScheduleSpec(value, value, 1)


def schedule_value(spec: ScheduleSpec, epoch: int) -> float:
    return spec.value(epoch)


@dataclass
class LossWeights:
    """Term coefficients.  ``beta_c3`` enters as the gradient reversal
    scale so the side networks minimize their raw prediction losses
    while the encoder receives the beta-scaled reversed gradient;
    ``beta_c1t`` weighs the cross-domain term in two-domain training."""

    beta_c2: float = 5.0
    beta_c3: ScheduleSpec = field(default_factory=lambda: ScheduleSpec(1e-2, 10.0, 10))
    beta_c4: float = 0.1
    beta_c1t: ScheduleSpec = field(default_factory=lambda: ScheduleSpec(0.0, 10.0, 10))
    margin: float = 1.0

    def __post_init__(self):
        if self.beta_c2 < 0 or self.beta_c4 < 0 or self.margin < 0:
            raise ValueError("loss weights and margin must be nonnegative")
        for name in ("beta_c3", "beta_c1t"):
            sched = getattr(self, name)
            if sched.end_value < sched.start_value:
                raise ValueError(f"{name} schedule must be non-decreasing")


@dataclass
class LossBreakdown:
    """Named loss scalars for one training step (tensors while the graph
    is alive, floats once logged).  Unused fields stay ``None``."""

    l_c1: object = None
    l_c1s: object = None
    l_c1t: object = None
    l_c2: object = None
    l_c2s: object = None
    l_c2t: object = None
    l_c3: object = None
    l_r_tau: object = None
    l_r_sigma: object = None
    l_c4: object = None
    total: object = None

    def as_dict(self) -> dict:
        out = {}
        for name, value in self.__dict__.items():
            if value is None:
                continue
            out[name] = float(value.detach() if torch.is_tensor(value) else value)
        return out


def total_loss(breakdown: LossBreakdown, weights: LossWeights, epoch: int, mode: str):
    """Weighted sum of the active terms.

    ``l_c3`` enters unweighted and positively: its reversal and scaling
    happen inside the gradient reversal layer, never by negating the
    side networks' objectives.
    """

    def val(x):
        return 0.0 if x is None else x

    if mode == "single":
        return (
            val(breakdown.l_c1)
            + weights.beta_c2 * val(breakdown.l_c2)
            + val(breakdown.l_c3)
            + weights.beta_c4 * val(breakdown.l_c4)
        )
    if mode == "uda":
        return (
            val(breakdown.l_c1s)
            + schedule_value(weights.beta_c1t, epoch) * val(breakdown.l_c1t)
            + weights.beta_c2 * (val(breakdown.l_c2s) + val(breakdown.l_c2t))
            + val(breakdown.l_c3)
            + weights.beta_c4 * val(breakdown.l_c4)
        )
    raise ValueError(f"unknown mode {mode!r}")
