"""gsv: layered Gaussian-splat video codec, container, and streaming toolkit."""

from . import defaults
from .codec import CodecId, CodedPayload, decode_planes, encode_planes
from .container import (DecodedVideo, Manifest, emit_manifest,
                        read_container_info, read_layers)
from .errors import (CodecError, FormatError, GsvError, InvalidInputError,
                     StreamError)
from .gaussians import (Gaussian, GaussianSet, LayeredFrame, partition_layers,
                        prune_low_opacity, significance)
from .metrics import RdCurve, RdPoint, bd_psnr, bdbr, d_ssim, psnr, ssim
from .motion import (FrameDelta, GroupPlan, ResidualDelta, RigidDelta,
                     apply_residual, apply_rigid, frame_delta_between,
                     mean_translation, plan_groups, reconstruct_frame)
from .pipeline import EncodeConfig, EncodeResult, decode_video, encode_sequence
from .quantize import (ChannelId, Plane, QuantizedChannel, arrange_sequences,
                       dequantize_channel, flatten_to_plane, quantize_channel,
                       unflatten)
from .rate import (LossWeights, PmfTable, SymbolSamples, color_loss,
                   gaussian_pmf, inter_loss, kde_pmf, keyframe_loss, rate_inter,
                   rate_key, reg_loss, silverman_bandwidth,
                   simulate_quantization)
from .render import (Camera, Image, Splat2D, project_gaussian, render,
                     render_progressive, render_set, write_ppm)
from .splatio import load_splat_points, save_splat_points
from .streaming import (BandwidthEstimate, PlaybackPolicy, client_play,
                        select_layer, serve, update_bandwidth)
from .synth import SceneSpec, gen_synthetic_scene

__version__ = "0.1.0"
