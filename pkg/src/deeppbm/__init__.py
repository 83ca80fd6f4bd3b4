"""Background subtraction via a convolutional VAE background model, with an
RPCA (principal component pursuit) baseline and a mask evaluation harness."""

from .evaluation import ConfusionCounts, MetricReport, confusion, evaluate_sequence, precision_recall_f
from .pipeline import (MaskSequence, SubtractConfig, estimate_background, extract_mask,
                       generate_background, run_deeppbm, run_long_video, run_rpca_bs)
from .rpca import ObservationMatrix, RpcaResult, rpca_decompose, singular_value_threshold, soft_threshold
from .training import TrainConfig, TrainHistory, load_checkpoint, save_checkpoint, train
from .vae import (LatentGaussian, LossBreakdown, VaeModel, build_model, decode, encode,
                  kl_divergence, l1_reconstruction, reparameterize, total_loss, vae_architecture)
from .video_io import (FrameTensor, GroundTruthMasks, SyntheticSceneSpec,
                       generate_synthetic_scene, load_frame_sequence, write_mask_sequence)

__version__ = "0.1.0"
