import math
import random

import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from behavmock.errors import ChecksumMismatch, ConfigInvalid, SequenceTooLong, VersionMismatch
from behavmock.model import (
    ModelConfig,
    TrainConfig,
    checkpoint_bytes,
    decode_many,
    evaluate_loss,
    fine_tune,
    greedy_decode,
    greedy_decode_batch,
    init_model,
    load_checkpoint,
    per_sample_losses,
    save_checkpoint,
    train,
)
from behavmock.tokenization import UNK_ID, Vocabulary, build_vocabulary
from behavmock.tokenization.vocab import RESERVED


def vocab_of(size):
    return Vocabulary(list(RESERVED) + [f"t{i}" for i in range(size - 4)])


def random_pairs(n, vocab_size, seed=0, lo=2, hi=8):
    rng = random.Random(seed)
    return [([rng.randrange(4, vocab_size) for _ in range(rng.randint(lo, hi))],
             [rng.randrange(4, vocab_size) for _ in range(rng.randint(lo, hi))]) for _ in range(n)]


SMALL = ModelConfig(1, 1, 16, 32, 2, dropout=0.0, context_window=64)


# configuration and initialisation

def test_config_validation():
    with pytest.raises(ConfigInvalid):
        ModelConfig(embedding_size=4, attention_heads=5)
    with pytest.raises(ConfigInvalid):
        ModelConfig(encoder_layers=0)
    with pytest.raises(ConfigInvalid):
        ModelConfig(dropout=1.0)
    with pytest.raises(ConfigInvalid):
        TrainConfig(schedule="linear")
    with pytest.raises(ConfigInvalid):
        TrainConfig(validation_fraction=1.0)


def test_param_count_matches_formula():
    model = init_model(ModelConfig(), vocab_of(300), vocab_of(310))
    assert model.param_count() == oracles.param_count(1, 1, 64, 256, 300, 310) == 176182
    model = init_model(ModelConfig(2, 3, 32, 64, 4), vocab_of(20), vocab_of(30))
    assert model.param_count() == oracles.param_count(2, 3, 32, 64, 20, 30)


def test_init_is_deterministic():
    a = init_model(SMALL, vocab_of(20), vocab_of(20), seed=5)
    b = init_model(SMALL, vocab_of(20), vocab_of(20), seed=5)
    c = init_model(SMALL, vocab_of(20), vocab_of(20), seed=6)
    for (name, x), (_, y) in zip(a.state_dict().items(), b.state_dict().items()):
        assert torch.equal(x, y), name
    assert not torch.equal(a.state_dict()["src_embed.weight"], c.state_dict()["src_embed.weight"])


def test_initial_loss_is_near_uniform():
    v = vocab_of(300)
    model = init_model(ModelConfig(dropout=0.0), v, v)
    loss = evaluate_loss(model, random_pairs(200, 300, seed=1))
    assert abs(loss - math.log(300)) <= 0.05 * math.log(300)


# training

def test_copy_task(copy_model):
    model, history, held_out = copy_model
    initial = history[0]["val_loss"]
    assert history[-1]["val_loss"] < 0.1 * initial
    assert len(history) == 21 and [h["epoch"] for h in history] == list(range(21))
    decoded = decode_many(model, [s for s, _ in held_out])
    correct = sum(d == t for d, (_, t) in zip(decoded, held_out))
    assert len(held_out) == 100
    assert correct / len(held_out) >= 0.95


def test_copy_task_two_hundred_held_out(copy_model):
    from conftest import copy_pairs
    model, _, _ = copy_model
    seqs = copy_pairs(200, seed=77)
    decoded = decode_many(model, [model.src_vocab.encode(s) for s in seqs])
    correct = sum(model.tgt_vocab.decode(d) == s for d, s in zip(decoded, seqs))
    assert correct / 200 >= 0.95


def test_zero_learning_rate_keeps_loss_constant():
    v = vocab_of(20)
    model = init_model(ModelConfig(1, 1, 16, 32, 2), v, v)
    _, history = train(model, random_pairs(40, 20), TrainConfig(learning_rate=0.0, epochs=3, schedule="constant"))
    vals = [h["val_loss"] for h in history]
    assert max(vals) - min(vals) < 1e-6


def test_training_is_bitwise_reproducible():
    v = vocab_of(20)
    runs = []
    for _ in range(2):
        model = init_model(ModelConfig(1, 1, 16, 32, 2, dropout=0.1), v, v, seed=3)
        _, history = train(model, random_pairs(60, 20), TrainConfig(epochs=3, batch_size=8, seed=9))
        runs.append(history)
    assert runs[0] == runs[1]


def test_train_split_and_sequence_limits():
    v = vocab_of(20)
    model = init_model(SMALL, v, v)
    with pytest.raises(SequenceTooLong) as exc:
        train(model, [([5] * 10, [5])] + [([5] * 100, [5])], TrainConfig(epochs=1))
    assert exc.value.index == 1
    with pytest.raises(ValueError):
        train(model, [], TrainConfig(epochs=1))


def test_schedules_run():
    v = vocab_of(20)
    for schedule in ("cosine", "step", "multiplicative"):
        model = init_model(SMALL, v, v)
        _, history = train(model, random_pairs(20, 20), TrainConfig(epochs=4, schedule=schedule))
        lrs = [h["lr"] for h in history[1:]]
        assert lrs[0] == pytest.approx(1e-3)
        assert lrs == sorted(lrs, reverse=True)
    assert lrs[-1] == pytest.approx(1e-3 * 0.95 ** 3)


# decoding

def test_default_length_cap():
    v = vocab_of(20)
    model = init_model(SMALL, v, v)
    (ids, truncated), = greedy_decode_batch(model, [[5] * 8])
    assert len(ids) <= 10
    assert len(greedy_decode(model, [5] * 8, max_len=1)) <= 1
    with pytest.raises(ValueError):
        greedy_decode(model, [])


def test_decode_never_emits_pad_or_bos():
    v = vocab_of(20)
    model = init_model(SMALL, v, v, seed=1)
    for ids in decode_many(model, [p[0] for p in random_pairs(30, 20)]):
        assert 0 not in ids and 1 not in ids and 2 not in ids


def test_batched_and_single_decoding_agree(copy_model):
    model, _, held_out = copy_model
    sources = [s for s, _ in held_out[:20]]
    batched = decode_many(model, sources)
    assert batched == [greedy_decode(model, s) for s in sources]


# structural properties

@settings(max_examples=15, deadline=None)
@given(st.integers(0, 5), st.integers(4, 19))
def test_decoder_is_causal(t, replacement):
    v = vocab_of(20)
    model = init_model(SMALL, v, v, seed=2)
    src = torch.tensor([[5, 6, 7, 2]])
    tgt = torch.tensor([[1, 8, 9, 10, 11, 12, 13, 14]])
    changed = tgt.clone()
    changed[0, t + 1] = replacement
    with torch.no_grad():
        a = model.net(src, tgt)[0, : t + 1]
        b = model.net(src, changed)[0, : t + 1]
    assert torch.allclose(a, b, atol=1e-6)


def test_padding_neutrality():
    v = vocab_of(20)
    model = init_model(SMALL, v, v, seed=4)
    pairs = random_pairs(6, 20, seed=2, lo=1, hi=12)
    alone = [per_sample_losses(model, [p])[0] for p in pairs]
    together = per_sample_losses(model, pairs)
    assert together == pytest.approx(alone, abs=1e-5)


def test_attention_rows_sum_to_one():
    v = vocab_of(20)
    model = init_model(SMALL, v, v)
    x = torch.randn(3, 7, 16)
    mask = torch.ones(3, 1, 1, 7, dtype=torch.bool)
    mask[0, ..., 5:] = False
    with torch.no_grad():
        _, weights = model.net.encoder[0].self_attn(x, x, mask, return_weights=True)
    assert torch.allclose(weights.sum(-1), torch.ones(3, 2, 7), atol=1e-6)
    assert torch.all(weights[0, ..., 5:] == 0)


# checkpoints

def test_checkpoint_round_trip(tmp_path, copy_model):
    model, _, held_out = copy_model
    path = tmp_path / "m.ckpt"
    save_checkpoint(model, path, extra={"note": "x"})
    loaded, extra = load_checkpoint(path, with_extra=True)
    assert extra["note"] == "x"
    assert loaded.config == model.config
    assert loaded.src_vocab == model.src_vocab and loaded.tgt_vocab == model.tgt_vocab
    assert loaded.loss_history == model.loss_history
    for (k, a), (_, b) in zip(model.state_dict().items(), loaded.state_dict().items()):
        assert torch.equal(a, b), k
    probes = [s for s, _ in held_out[:50]]
    assert decode_many(loaded, probes) == decode_many(model, probes)


def test_checkpoint_corruption(tmp_path):
    v = vocab_of(20)
    model = init_model(SMALL, v, v)
    path = tmp_path / "m.ckpt"
    save_checkpoint(model, path)
    data = path.read_bytes()
    path.write_bytes(data[: len(data) // 2])
    with pytest.raises(ChecksumMismatch):
        load_checkpoint(path)
    flipped = bytearray(data)
    flipped[len(data) // 2] ^= 0xFF
    path.write_bytes(bytes(flipped))
    with pytest.raises(ChecksumMismatch):
        load_checkpoint(path)
    path.write_bytes(checkpoint_bytes(model, version=99))
    with pytest.raises(VersionMismatch):
        load_checkpoint(path)


# fine-tuning

def test_fine_tune_zero_epochs_is_identity():
    v = vocab_of(20)
    model = init_model(SMALL, v, v)
    before = {k: t.clone() for k, t in model.state_dict().items()}
    fine_tune(model, random_pairs(3, 20), TrainConfig(epochs=0))
    for k, t in model.state_dict().items():
        assert torch.equal(before[k], t)


def test_fine_tune_uses_every_pair_and_maps_unseen_tokens_to_unk():
    v = build_vocabulary([["a", "b", "c"]])
    model = init_model(SMALL, v, v)
    pairs = [(v.encode(["a", "zz"]), v.encode(["b", "qq"]))]
    assert pairs[0][0][1] == UNK_ID
    fine_tune(model, pairs, TrainConfig(epochs=2))
    history = model.loss_history
    assert [h["val_loss"] for h in history] == [None, None, None]
    assert history[-1]["train_loss"] < history[0]["train_loss"]
    with pytest.raises(ValueError):
        fine_tune(model, [], TrainConfig(epochs=1))
