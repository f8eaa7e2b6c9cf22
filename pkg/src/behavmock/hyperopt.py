"""Two-phase hyperparameter search with median pruning.

Phase 1 samples architectures and trains each for a short budget at a
fixed learning rate.  Phase 2 keeps the winning architecture and samples
learning-rate regimes (rate, weight decay, schedule).  Configurations are
drawn uniformly at random without replacement from the finite space.
"""

from __future__ import annotations

import itertools
import json
import logging
import random
import statistics
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

from .errors import EmptySpace
from .model import ModelConfig, TrainConfig, init_model, train
from .tokenization.vocab import Vocabulary

log = logging.getLogger(__name__)

PHASE1_LEARNING_RATE = 1e-4
PHASE1_EPOCHS = 3
PHASE2_EPOCHS = 5
DEFAULT_MODEL_CONFIG = ModelConfig()     # 1/1 layers, d=64, ff=256, 4 heads


@dataclass(frozen=True)
class SearchSpace:
    encoder_layers: Tuple[int, ...] = (1, 2)
    decoder_layers: Tuple[int, ...] = (1, 2, 3, 4)
    embedding_size: Tuple[int, ...] = (128, 256)
    feedforward_size: Tuple[int, ...] = (1024, 2048, 4096)
    attention_heads: Tuple[int, ...] = (16, 32, 64)
    learning_rate: Tuple[float, ...] = (1e-4, 5e-4)
    weight_decay: Tuple[float, ...] = (1e-4, 5e-4, 1e-2)
    schedule: Tuple[str, ...] = ("cosine", "step", "multiplicative")

    def architectures(self, base: ModelConfig = DEFAULT_MODEL_CONFIG) -> List[ModelConfig]:
        """All valid architectures in enumeration order."""
        out = []
        for e, d, emb, ff, h in itertools.product(self.encoder_layers, self.decoder_layers, self.embedding_size,
                                                  self.feedforward_size, self.attention_heads):
            if emb % h == 0:
                out.append(replace(base, encoder_layers=e, decoder_layers=d, embedding_size=emb,
                                   feedforward_size=ff, attention_heads=h))
        return out

    def regimes(self) -> List[Tuple[float, float, str]]:
        return list(itertools.product(self.learning_rate, self.weight_decay, self.schedule))

    def to_dict(self):
        return asdict(self)


@dataclass
class TuningData:
    """Token-id pairs plus the vocabularies they were encoded with."""
    pairs: List[Tuple[List[int], List[int]]]
    src_vocab: Vocabulary
    tgt_vocab: Vocabulary


@dataclass
class TrialResult:
    number: int
    config: Dict
    val_loss: float
    pruned: bool
    epochs_completed: int
    losses: List[float] = field(default_factory=list)

    def to_dict(self):
        return asdict(self)


class MedianPruner:
    """Prune a trial at epoch >= ``start_epoch`` when its validation loss is
    strictly above the median of completed trials at that epoch."""

    def __init__(self, start_epoch: int = 2):
        self.start_epoch = start_epoch
        self.completed: List[List[float]] = []

    def median(self, epoch: int) -> Optional[float]:
        values = [c[epoch - 1] for c in self.completed if len(c) >= epoch]
        return statistics.median(values) if values else None

    def should_prune(self, epoch: int, loss: float) -> bool:
        if epoch < self.start_epoch:
            return False
        m = self.median(epoch)
        return m is not None and loss > m

    def complete(self, losses: List[float]):
        self.completed.append(list(losses))


def _sample(candidates: list, trials: int, seed: int, first=None) -> list:
    """``first`` (if given) followed by a seeded uniform sample without
    replacement of the remaining candidates; at most ``trials`` items."""
    rest = [c for c in candidates if c != first]
    order = random.Random(seed).sample(rest, len(rest))
    picked = ([first] if first is not None else []) + order
    return picked[:trials]


def _run_trial(number, model_cfg, tcfg, data: TuningData, pruner: MedianPruner, seed: int, describe: Dict):
    model = init_model(model_cfg, data.src_vocab, data.tgt_vocab, seed)
    losses: List[float] = []
    state = {"pruned": False}

    def on_epoch(entry):
        loss = entry["val_loss"]
        losses.append(loss)
        if pruner.should_prune(entry["epoch"], loss):
            state["pruned"] = True
            return False
        return True

    train(model, data.pairs, tcfg, callback=on_epoch)
    if not state["pruned"]:
        pruner.complete(losses)
    final = losses[-1] if losses else float("inf")
    result = TrialResult(number, describe, final, state["pruned"], len(losses), losses)
    log.info("trial %d %s -> %.4f%s", number, describe, final, " (pruned)" if state["pruned"] else "")
    return result


def _winner(results: Sequence[TrialResult]) -> TrialResult:
    finished = [r for r in results if not r.pruned]
    return min(finished, key=lambda r: (r.val_loss, r.number))


def search_model_params(space: SearchSpace, data: TuningData, trials: int = 25, seed: int = 0,
                        epochs: int = PHASE1_EPOCHS, batch_size: int = 32,
                        baseline: Optional[ModelConfig] = DEFAULT_MODEL_CONFIG,
                        base: ModelConfig = DEFAULT_MODEL_CONFIG):
    """Phase 1: architecture search at a fixed learning rate of 1e-4.

    ``baseline`` is evaluated as the first trial (pass None to sample only
    from the space).  Returns ``(best ModelConfig, [TrialResult])``.
    """
    candidates = space.architectures(base)
    if not candidates or trials < 1:
        raise EmptySpace("no architecture to try")
    plan = _sample(candidates, trials, seed, baseline)
    tcfg = TrainConfig(learning_rate=PHASE1_LEARNING_RATE, schedule="constant", epochs=epochs,
                       batch_size=batch_size, seed=seed)
    pruner = MedianPruner()
    results = [_run_trial(k, cfg, tcfg, data, pruner, seed, cfg.to_dict()) for k, cfg in enumerate(plan)]
    best = _winner(results)
    return plan[best.number], results


def search_learning_rate(best_cfg: ModelConfig, data: TuningData, trials: int = 10, seed: int = 0,
                         space: SearchSpace = SearchSpace(), epochs: int = PHASE2_EPOCHS, batch_size: int = 32,
                         include_baseline: bool = True):
    """Phase 2: learning-rate regime search for a fixed architecture.

    With ``include_baseline`` the phase-1 regime (1e-4, constant rate) is
    the first trial, so the result never loses to it under equal budget.
    Returns ``(best TrainConfig, [TrialResult])``.
    """
    candidates = [TrainConfig(learning_rate=lr, weight_decay=wd, schedule=s, epochs=epochs,
                              batch_size=batch_size, seed=seed) for lr, wd, s in space.regimes()]
    if not candidates or trials < 1:
        raise EmptySpace("no learning-rate regime to try")
    baseline = None
    if include_baseline:
        baseline = TrainConfig(learning_rate=PHASE1_LEARNING_RATE, schedule="constant", epochs=epochs,
                               batch_size=batch_size, seed=seed)
    plan = _sample(candidates, trials, seed, baseline)
    pruner = MedianPruner()
    results = [_run_trial(k, best_cfg, t, data, pruner, seed, t.to_dict()) for k, t in enumerate(plan)]
    best = _winner(results)
    return plan[best.number], results


@dataclass
class SearchReport:
    model_config: ModelConfig
    train_config: TrainConfig
    phase1: List[TrialResult]
    phase2: List[TrialResult]
    seed: int

    def to_dict(self):
        return {
            "seed": self.seed,
            "best_model_config": self.model_config.to_dict(),
            "best_train_config": self.train_config.to_dict(),
            "phase1_trials": [r.to_dict() for r in self.phase1],
            "phase2_trials": [r.to_dict() for r in self.phase2],
        }

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=2), encoding="utf-8")


def two_phase_search(data: TuningData, phase1_trials: int = 25, phase2_trials: int = 10, seed: int = 0,
                     space: SearchSpace = SearchSpace(), phase1_epochs: int = PHASE1_EPOCHS,
                     phase2_epochs: int = PHASE2_EPOCHS, batch_size: int = 32,
                     baseline: Optional[ModelConfig] = DEFAULT_MODEL_CONFIG) -> SearchReport:
    cfg, p1 = search_model_params(space, data, phase1_trials, seed, phase1_epochs, batch_size, baseline)
    tcfg, p2 = search_learning_rate(cfg, data, phase2_trials, seed, space, phase2_epochs, batch_size)
    return SearchReport(cfg, tcfg, p1, p2, seed)
