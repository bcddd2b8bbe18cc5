"""Disentanglement of task and style information by cyclic reconstruction
and gradient reversal, with a single-domain supervised mode and an
unsupervised domain adaptation mode."""

__version__ = "0.1.0"
