"""Recover a short video from one motion-blurred image.

The heavy lifting lives in the compiled ``_blurvid`` extension; this package
re-exports it. Images are float32 arrays shaped (3, H, W) or (1, 3, H, W)
with values in [0, 1]; flows are (1, 2, H, W) in pixels.
"""

from ._blurvid import (
    BlurPair,
    CheckpointError,
    Error,
    ModelConfig,
    ShapeError,
    TrainConfig,
    TrainResult,
    TrainState,
    blur,
    deblur,
    gradcheck,
    infer,
    load_checkpoint,
    order_invariant_error,
    order_invariant_loss,
    parameter_counts,
    psnr,
    read_dataset,
    reconstruct,
    resume,
    synth_dataset,
    train_autoencoder,
    train_bie,
    train_dm,
    warp,
    write_dataset,
)

__all__ = [name for name in dir() if not name.startswith("_")]
