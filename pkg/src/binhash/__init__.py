"""binhash: compact binary hash codes from feature vectors.

Pairwise binary-constrained training with alternating sign-projection and
SGD, automatic matching/non-matching pair mining over synthetic
co-observation worlds, bit-packed Hamming retrieval, and mAP evaluation.
"""

from .dataset import (
    DATABASE,
    DEFAULT_CO_OBS_THRESHOLD,
    TRAIN_QUERY,
    VALIDATION_QUERY,
    FeatureStore,
    ImageRecord,
    ModelRecord,
    ModelWorld,
    WorldGenParams,
    co_observed,
    generate_world,
    import_features_csv,
    load_features,
    load_world,
    save_features,
    save_world,
)
from .errors import (
    BinhashError,
    ConfigError,
    ContractError,
    DataGenerationError,
    DivergenceError,
    FormatError,
    InitError,
    MiningError,
    ProtocolError,
    ShapeError,
    UnknownIdError,
)
from .loss import LossParams, PairLossBreakdown, pair_grad, pair_loss, quantization_stats
from .mining import (
    MiningParams,
    PairSet,
    TrainingPair,
    assemble_batches,
    check_pair_contracts,
    dump_pairs,
    mine_matches,
    mine_negatives_offline,
    mine_negatives_online,
)
from .model import (
    EmbeddingBatch,
    HashHead,
    embed_store,
    forward,
    init_head,
    load_head,
    mac_pool,
    save_head,
)
from .numkit import PcaResult, Rng, matmul, pca
from .optimizer import (
    TrainReport,
    TrainSchedule,
    b_step,
    pair_set_loss,
    train,
    validate_map,
    w_step,
)
from .retrieval import (
    CodeDatabase,
    RankedList,
    average_precision,
    binarize,
    evaluate_map,
    hamming,
    hamming_to_all,
    load_codes,
    mean_ap,
    pack_bits,
    save_codes,
    search,
    sign_bits,
    unpack_bits,
)

__version__ = "0.1.0"

__all__ = [
    "BinhashError", "CodeDatabase", "ConfigError", "ContractError",
    "DATABASE", "DEFAULT_CO_OBS_THRESHOLD", "DataGenerationError",
    "DivergenceError", "EmbeddingBatch", "FeatureStore", "FormatError",
    "HashHead", "ImageRecord", "InitError", "LossParams", "MiningError",
    "MiningParams", "ModelRecord", "ModelWorld", "PairLossBreakdown",
    "PairSet", "PcaResult", "ProtocolError", "RankedList", "Rng",
    "ShapeError", "TRAIN_QUERY", "TrainReport", "TrainSchedule",
    "TrainingPair", "UnknownIdError", "VALIDATION_QUERY", "WorldGenParams",
    "assemble_batches", "average_precision", "b_step", "binarize",
    "check_pair_contracts", "co_observed", "dump_pairs", "embed_store",
    "evaluate_map", "forward", "generate_world", "hamming", "hamming_to_all",
    "import_features_csv", "init_head", "load_codes", "load_features",
    "load_head", "load_world", "mac_pool", "matmul", "mean_ap",
    "mine_matches", "mine_negatives_offline", "mine_negatives_online",
    "pack_bits", "pair_grad", "pair_loss", "pair_set_loss", "pca",
    "quantization_stats", "save_codes", "save_features", "save_head",
    "save_world", "search", "sign_bits", "train", "unpack_bits",
    "validate_map", "w_step",
]
