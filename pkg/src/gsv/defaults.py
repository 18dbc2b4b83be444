"""Default configuration constants shared across the toolkit."""

# Number of significance layers a keyframe is partitioned into.
LAYER_COUNT = 6

# Weight of the volume term in the significance metric.
VOLUME_WEIGHT = 1e5

# Fraction of lowest-opacity Gaussians dropped before layering.
PRUNE_FRACTION = 0.4

# Mean-translation threshold (scene units) above which a frame starts a
# new group.
MOTION_THRESHOLD = 0.0025

# Loss-assembly weights.
SSIM_WEIGHT = 0.2
KEY_RATE_WEIGHT = 1e-7
INTER_RATE_WEIGHT = 1e-4
TEMPORAL_REG_WEIGHT = 1e-3


def level_weights(layer_count: int = LAYER_COUNT) -> list:
    """Per-layer loss weights: 0.5/l for l < L, 1.0 for the final layer."""
    if layer_count < 1:
        raise ValueError("layer_count must be >= 1")
    ws = [0.5 / l for l in range(1, layer_count)]
    ws.append(1.0)
    return ws
