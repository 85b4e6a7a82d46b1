"""Python access to the eyeadapt data, loss and metric kernels."""

import torch  # noqa: F401  loads the libtorch shared libraries first

from ._eyeadapt import (
    ConfigError,
    DataError,
    DivergenceError,
    augment,
    class_stats,
    contrastive_loss,
    cycle_loss,
    distance_transform,
    domain_bce_loss,
    epoch_schedule,
    generate_dataset,
    git_blob_sha1,
    miou,
    mmiou,
    pca_project,
    render_eye,
    sobel_edges,
)

__all__ = [
    "ConfigError",
    "DataError",
    "DivergenceError",
    "augment",
    "class_stats",
    "contrastive_loss",
    "cycle_loss",
    "distance_transform",
    "domain_bce_loss",
    "epoch_schedule",
    "generate_dataset",
    "git_blob_sha1",
    "miou",
    "mmiou",
    "pca_project",
    "render_eye",
    "sobel_edges",
]
