"""Dual-supervised asymmetric co-training (DAC) for cross-domain
semi-supervised domain generalization in image segmentation."""

__version__ = "0.1.0"

from .augment import (CutMixMask, RotPatchSpec, StyleAugConfig, cutmix, fourier_style_transfer,
                      localization_target, rotate_random_patch, sample_cutmix_mask)
from .datagen import (DatasetManifest, DomainStyle, SceneSpec, apply_domain_style,
                      build_cdssdg_split, generate_scene, load_folder_dataset)
from .errors import (CheckpointVersionError, ConfigError, DACError, DataError, InputError,
                     NumericError)
from .evaluate import (MetricResult, RunAggregate, aggregate_runs, dsc, ensemble_predict,
                       evaluate_domain, iou)
from .losses import (LossReport, LossWeights, cfs_loss, cps_loss, dice_loss, loc_loss,
                     mixed_pseudo_label, prediction_variance, rot_loss, total_loss)
from .model import DACModel, ModelConfig, SubModel
from .trainer import (TrainConfig, preset, run_training, set_global_seed, supervised_baseline,
                      train_step)
