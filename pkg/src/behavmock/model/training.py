"""Training, evaluation and greedy decoding for :class:`TranslationModel`."""

from __future__ import annotations

import logging
import math
import random
from typing import List, Optional, Sequence, Tuple

import torch
from torch import nn

from ..errors import ConfigInvalid, NonFiniteLoss, SequenceTooLong
from ..tokenization.vocab import BOS_ID, EOS_ID, PAD_ID, Vocabulary
from .config import ModelConfig, TrainConfig
from .transformer import Seq2SeqTransformer, expected_param_count, init_weights, param_count

log = logging.getLogger(__name__)

Pair = Tuple[Sequence[int], Sequence[int]]
LENGTH_MULTIPLIER = 1.25
_POOL_BATCHES = 50   # length bucketing pools this many batches before sorting


class TranslationModel:
    """A transformer together with its vocabularies and training record."""

    def __init__(self, net: Seq2SeqTransformer, config: ModelConfig, src_vocab: Vocabulary,
                 tgt_vocab: Vocabulary, seed: int = 0):
        self.net = net
        self.config = config
        self.src_vocab = src_vocab
        self.tgt_vocab = tgt_vocab
        self.seed = seed
        self.loss_history: List[dict] = []

    def __repr__(self):
        return (f"TranslationModel({self.config}, src_vocab={len(self.src_vocab)}, "
                f"tgt_vocab={len(self.tgt_vocab)}, params={self.param_count()})")

    def param_count(self) -> int:
        return param_count(self.net)

    def expected_param_count(self) -> int:
        return expected_param_count(self.config, len(self.src_vocab), len(self.tgt_vocab))

    def state_dict(self):
        return self.net.state_dict()

    def to(self, dtype):
        self.net.to(dtype)
        return self


def init_model(cfg: ModelConfig, src_vocab: Vocabulary, tgt_vocab: Vocabulary, seed: int = 0) -> TranslationModel:
    """Build a model with weights drawn deterministically from ``seed``."""
    if not isinstance(cfg, ModelConfig):
        raise ConfigInvalid("cfg must be a ModelConfig")
    cfg.validate()
    net = Seq2SeqTransformer(cfg, len(src_vocab), len(tgt_vocab))
    init_weights(net, seed)
    model = TranslationModel(net, cfg, src_vocab, tgt_vocab, seed)
    assert model.param_count() == model.expected_param_count()
    return model


# ---------------------------------------------------------------------------
# batching

def _check_lengths(pairs: Sequence[Pair], limit: int):
    for i, (src, tgt) in enumerate(pairs):
        longest = max(len(src), len(tgt)) + 1   # EOS / BOS
        if longest > limit:
            raise SequenceTooLong(i, longest, limit)


def _pad(rows: List[List[int]]) -> torch.Tensor:
    width = max(len(r) for r in rows)
    return torch.tensor([r + [PAD_ID] * (width - len(r)) for r in rows], dtype=torch.long)


def make_batch(pairs: Sequence[Pair]):
    """(src, tgt_in, tgt_out) tensors: src gets EOS, target is shifted by BOS."""
    src = _pad([list(s) + [EOS_ID] for s, _ in pairs])
    tgt_in = _pad([[BOS_ID] + list(t) for _, t in pairs])
    tgt_out = _pad([list(t) + [EOS_ID] for _, t in pairs])
    return src, tgt_in, tgt_out


def bucketed_batches(pairs: Sequence[Pair], indices: Sequence[int], batch_size: int,
                     rng: Optional[random.Random] = None) -> List[List[int]]:
    """Group indices into batches of similar length.

    Indices are shuffled (when ``rng`` is given), cut into pools, sorted by
    length inside each pool and chunked; the batch order is shuffled again.
    """
    order = list(indices)
    if rng is not None:
        rng.shuffle(order)
    pool = batch_size * _POOL_BATCHES
    batches = []
    for start in range(0, len(order), pool):
        chunk = sorted(order[start:start + pool], key=lambda i: (len(pairs[i][0]), len(pairs[i][1])))
        batches.extend(chunk[k:k + batch_size] for k in range(0, len(chunk), batch_size))
    if rng is not None:
        rng.shuffle(batches)
    return batches


def _token_loss(net, batch, reduction="sum"):
    src, tgt_in, tgt_out = batch
    logits = net(src, tgt_in)
    return nn.functional.cross_entropy(logits.reshape(-1, logits.shape[-1]), tgt_out.reshape(-1),
                                       ignore_index=PAD_ID, reduction=reduction)


def batch_loss(model: TranslationModel, pairs: Sequence[Pair]) -> torch.Tensor:
    """Mean per-token cross-entropy of ``pairs`` as one differentiable batch."""
    return _token_loss(model.net, make_batch(pairs), reduction="mean")


def per_sample_losses(model: TranslationModel, pairs: Sequence[Pair]) -> List[float]:
    """Mean per-token loss of every pair, computed in one padded batch."""
    src, tgt_in, tgt_out = make_batch(pairs)
    model.net.eval()
    with torch.no_grad():
        logits = model.net(src, tgt_in)
        losses = nn.functional.cross_entropy(logits.transpose(1, 2), tgt_out, ignore_index=PAD_ID,
                                             reduction="none")
        mask = (tgt_out != PAD_ID)
        return ((losses * mask).sum(1) / mask.sum(1)).tolist()


def evaluate_loss(model: TranslationModel, pairs: Sequence[Pair], batch_size: int = 64) -> float:
    """Mean per-token cross-entropy over ``pairs`` (evaluation mode)."""
    if not pairs:
        return float("nan")
    model.net.eval()
    total = 0.0
    tokens = 0
    with torch.no_grad():
        for idx in bucketed_batches(pairs, range(len(pairs)), batch_size):
            batch = make_batch([pairs[i] for i in idx])
            total += _token_loss(model.net, batch).item()
            tokens += int((batch[2] != PAD_ID).sum())
    return total / tokens


# ---------------------------------------------------------------------------
# training

def _schedule(tcfg: TrainConfig):
    epochs = max(tcfg.epochs, 1)
    if tcfg.schedule == "cosine":
        return lambda e: 0.1 + 0.9 * 0.5 * (1.0 + math.cos(math.pi * min(e, epochs) / epochs))
    if tcfg.schedule == "constant":
        return lambda e: 1.0
    if tcfg.schedule == "step":
        return lambda e: 0.5 ** (e // 3)
    return lambda e: 0.95 ** e


def split_indices(n: int, fraction: float, seed: int) -> Tuple[List[int], List[int]]:
    """Seeded train/validation split; validation gets ``round(fraction*n)``
    items (at least one when n >= 2)."""
    order = list(range(n))
    random.Random(seed).shuffle(order)
    if n < 2:
        return order, []
    n_val = min(n - 1, max(1, round(fraction * n)))
    return sorted(order[n_val:]), sorted(order[:n_val])


def _run(model: TranslationModel, train_pairs: Sequence[Pair], val_pairs: Sequence[Pair], tcfg: TrainConfig,
         callback=None):
    net = model.net
    opt = torch.optim.AdamW(net.parameters(), lr=tcfg.learning_rate, weight_decay=tcfg.weight_decay)
    sched = torch.optim.lr_scheduler.LambdaLR(opt, _schedule(tcfg))
    rng = random.Random(tcfg.seed)
    history = [{
        "epoch": 0,
        "train_loss": evaluate_loss(model, train_pairs),
        "val_loss": evaluate_loss(model, val_pairs) if val_pairs else None,
        "lr": tcfg.learning_rate,
    }]
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(tcfg.seed)
        for epoch in range(1, tcfg.epochs + 1):
            net.train()
            lr = opt.param_groups[0]["lr"]
            total = 0.0
            tokens = 0
            for b, idx in enumerate(bucketed_batches(train_pairs, range(len(train_pairs)), tcfg.batch_size, rng)):
                batch = make_batch([train_pairs[i] for i in idx])
                n_tok = int((batch[2] != PAD_ID).sum())
                loss_sum = _token_loss(net, batch)
                if not torch.isfinite(loss_sum):
                    raise NonFiniteLoss(f"non-finite loss {loss_sum.item()} at epoch {epoch}, batch {b} "
                                        f"(lr={lr:g}, batch size {len(idx)})")
                opt.zero_grad(set_to_none=True)
                (loss_sum / n_tok).backward()
                if tcfg.clip_gradients:
                    nn.utils.clip_grad_norm_(net.parameters(), 1.0)
                opt.step()
                total += loss_sum.item()
                tokens += n_tok
            sched.step()
            entry = {
                "epoch": epoch,
                "train_loss": total / max(tokens, 1),
                "val_loss": evaluate_loss(model, val_pairs) if val_pairs else None,
                "lr": lr,
            }
            history.append(entry)
            log.info("epoch %d train %.4f val %s", epoch, entry["train_loss"], entry["val_loss"])
            if callback is not None and callback(entry) is False:
                break
    net.eval()
    return history


def _coerce_pairs(dataset) -> List[Pair]:
    return [(list(map(int, s)), list(map(int, t))) for s, t in dataset]


def train(model: TranslationModel, dataset: Sequence[Pair], tcfg: TrainConfig, callback=None):
    """Teacher-forced training with AdamW on an 80/20 (by default) split.

    ``callback(entry)`` is called after every epoch; returning False stops
    training early.  Returns ``(model, loss_history)``.
    """
    pairs = _coerce_pairs(dataset)
    if not pairs:
        raise ValueError("dataset is empty")
    _check_lengths(pairs, model.config.context_window)
    tr, va = split_indices(len(pairs), tcfg.validation_fraction, tcfg.seed)
    history = _run(model, [pairs[i] for i in tr], [pairs[i] for i in va], tcfg, callback)
    model.loss_history.extend(history)
    return model, history


def fine_tune(model: TranslationModel, small_dataset: Sequence[Pair], tcfg: TrainConfig):
    """Continue training on exactly the given pairs (no validation split)."""
    pairs = _coerce_pairs(small_dataset)
    if not pairs:
        raise ValueError("fine-tuning needs at least one pair")
    _check_lengths(pairs, model.config.context_window)
    history = _run(model, pairs, [], tcfg)
    model.loss_history.extend(history)
    return model


# ---------------------------------------------------------------------------
# decoding

def default_max_len(src_len: int) -> int:
    return math.ceil(LENGTH_MULTIPLIER * src_len)


def greedy_decode_batch(model: TranslationModel, sources: Sequence[Sequence[int]],
                        max_len: Optional[int] = None) -> List[Tuple[List[int], bool]]:
    """Greedy (beam 1) decoding of several sources at once.

    Returns ``(ids, truncated)`` per source; ``truncated`` is True when the
    length limit stopped decoding before EOS.  Argmax ties go to the lowest
    id; PAD and BOS are never emitted.
    """
    if not sources:
        return []
    for s in sources:
        if len(s) == 0:
            raise ValueError("cannot decode an empty source")
    limits = [max_len if max_len is not None else default_max_len(len(s)) for s in sources]
    net = model.net
    net.eval()
    n = len(sources)
    out: List[List[int]] = [[] for _ in range(n)]
    done = [lim <= 0 for lim in limits]
    hit_eos = [False] * n
    with torch.no_grad():
        src = _pad([list(s) + [EOS_ID] for s in sources])
        memory, src_mask = net.encode(src)
        ys = torch.full((n, 1), BOS_ID, dtype=torch.long)
        for step in range(max(limits)):
            if all(done):
                break
            logits = net.decode(ys, memory, src_mask)[:, -1, :]
            logits[:, PAD_ID] = float("-inf")
            logits[:, BOS_ID] = float("-inf")
            nxt = logits.argmax(dim=-1)
            for i in range(n):
                if done[i]:
                    continue
                tok = int(nxt[i])
                if tok == EOS_ID:
                    done[i] = hit_eos[i] = True
                else:
                    out[i].append(tok)
                    if len(out[i]) >= limits[i]:
                        done[i] = True
            ys = torch.cat([ys, torch.where(torch.tensor(done), PAD_ID, nxt).unsqueeze(1)], dim=1)
    return [(out[i], not hit_eos[i]) for i in range(n)]


def greedy_decode(model: TranslationModel, src: Sequence[int], max_len: Optional[int] = None) -> List[int]:
    """Decode one source; the output length never exceeds ``max_len``
    (default ``ceil(1.25 * len(src))``)."""
    return greedy_decode_batch(model, [src], max_len)[0][0]


def decode_many(model: TranslationModel, sources: Sequence[Sequence[int]], max_len: Optional[int] = None,
                batch_size: int = 64) -> List[List[int]]:
    """Greedy-decode a list of sources in length-sorted batches."""
    order = sorted(range(len(sources)), key=lambda i: len(sources[i]))
    result: List[List[int]] = [[] for _ in sources]
    for k in range(0, len(order), batch_size):
        idx = order[k:k + batch_size]
        for i, (ids, _) in zip(idx, greedy_decode_batch(model, [sources[i] for i in idx], max_len)):
            result[i] = ids
    return result
