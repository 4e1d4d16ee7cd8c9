"""Adversarial training laboratory: dense networks, l-inf attacks, adversarial
weight perturbation, and instance-adaptive smoothness regularization."""

from ._core import (  # noqa: F401
    ConfigError,
    DataError,
    IoError,
    Model,
    NumericError,
    ShapeError,
    apply_perturbation,
    av,
    av_joint,
    av_stats,
    awp_direction,
    cross_entropy,
    fgsm,
    gen_synthetic,
    init_model,
    input_gradient,
    load_idx,
    load_model,
    loss_landscape,
    margin_search,
    penalty,
    pgd,
    project_layerwise,
    rank_weights,
    run_experiment,
    __version__,
)
