from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .config import RunConfig, TextConfig
from .data import ground_truth_features, load_examples, read_manifest
from .decode import (
    DecodeConfig,
    Synthesis,
    decode_first_codebook,
    decode_residual,
    nucleus_sample,
    speaker_embedding,
    synthesize,
    synthesize_ids,
)
from .evaluate import EvalReport, evaluate, levenshtein, utterance_rng
from .train import (
    Example,
    LossBreakdown,
    NonFiniteLoss,
    TrainConfig,
    choose_batch,
    compute_losses,
    new_optimizer,
    run_training,
    step_rng,
    train_step,
)

__all__ = [
    "Checkpoint", "DecodeConfig", "EvalReport", "Example", "LossBreakdown", "NonFiniteLoss", "RunConfig",
    "Synthesis", "TextConfig", "TrainConfig", "choose_batch", "compute_losses", "decode_first_codebook",
    "decode_residual", "evaluate", "ground_truth_features", "levenshtein", "load_checkpoint", "load_examples",
    "new_optimizer", "nucleus_sample", "read_manifest", "run_training", "save_checkpoint", "speaker_embedding",
    "step_rng", "synthesize", "synthesize_ids", "train_step", "utterance_rng",
]
