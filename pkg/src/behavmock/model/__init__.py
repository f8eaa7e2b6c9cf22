"""Sequence-to-sequence transformer: configuration, training, decoding and
checkpoints."""

from .checkpoint import FORMAT_VERSION, checkpoint_bytes, load_checkpoint, read_checkpoint, save_checkpoint
from .config import SCHEDULES, ModelConfig, TrainConfig
from .training import (
    LENGTH_MULTIPLIER,
    TranslationModel,
    batch_loss,
    bucketed_batches,
    decode_many,
    default_max_len,
    evaluate_loss,
    fine_tune,
    greedy_decode,
    greedy_decode_batch,
    init_model,
    make_batch,
    per_sample_losses,
    split_indices,
    train,
)
from .transformer import MultiHeadAttention, Seq2SeqTransformer, expected_param_count, param_count

__all__ = [
    "FORMAT_VERSION", "LENGTH_MULTIPLIER", "ModelConfig", "MultiHeadAttention", "SCHEDULES",
    "Seq2SeqTransformer", "TrainConfig", "TranslationModel", "batch_loss", "bucketed_batches",
    "checkpoint_bytes", "decode_many", "default_max_len", "evaluate_loss", "expected_param_count",
    "fine_tune", "greedy_decode", "greedy_decode_batch", "init_model", "load_checkpoint", "make_batch",
    "param_count", "per_sample_losses", "read_checkpoint", "save_checkpoint", "split_indices", "train",
]
