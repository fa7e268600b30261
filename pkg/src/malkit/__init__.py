"""malkit: desk-scale active learning with adversarial entropy training.

An encoder and a cosine-prototype classifier fight over the entropy of
unlabeled predictions while a discriminator learns to tell labeled from
unlabeled features; acquisition combines both signals by rank sum.  Includes
random, max-entropy, and k-center baselines, a deterministic experiment
harness, a CLI, and an HTTP labeling service for human annotation.
"""

from .errors import (ConfigError, ContractError, ParseError, SelectionError,
                     ShapeError, StateConflict)
from .tensorcore import DiffNode, GraphTape, backward
from .networks import (DiscriminatorParams, EncoderParams, ModelBundle,
                       PrototypeClassifier, TaskModelParams, classify,
                       copy_backbone, discriminate, encode, init_classifier,
                       init_discriminator, init_encoder, init_task_model,
                       load_bundle, save_bundle, task_forward)
from .objectives import (cross_entropy, discriminator_bce,
                         minimax_entropy_term, shannon_entropy)
from .pools import (HumanOracle, IdealOracle, PoolState, annotate, init_pools,
                    labeled_batch, replay_history, unlabeled_batch)
from .acquisition import (AcquisitionScore, dump_scores, rank_sums,
                          score_unlabeled, select_by_dprob, select_by_entropy,
                          select_kcenter, select_mal, select_mal_two_stage,
                          select_max_entropy, select_random)
from .datagen import (Dataset, apply_imbalance, generate_blobs, load_csv,
                      load_idx, save_csv, save_idx, split_train_test)
from .config import (TrainConfig, apply_overrides, config_snapshot,
                     parse_config_file, snapshot_to_config)
from .engine import (Adam, ExperimentRecord, SplitRow, SplitSummary,
                     TrainReport, adam_step, dataset_from_config, evaluate,
                     resolve_budget, run_experiment, run_seed, train_mal,
                     train_task)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
