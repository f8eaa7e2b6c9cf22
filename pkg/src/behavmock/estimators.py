"""scikit-learn style wrappers.

Shape convention: ``X`` and ``y`` are one-dimensional sequences of
documents (strings), one sample per entry, rather than 2-D feature
matrices.  Hyperparameters are constructor arguments so that
``get_params`` / ``set_params`` / ``clone`` work unchanged.
"""

from __future__ import annotations

from typing import List, Optional

from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.exceptions import NotFittedError
from sklearn.utils.validation import check_consistent_length, check_is_fitted

from .corpus import encode_pairs, tokenize_texts
from .deployment import DeploymentSession, content_tokens, predict_many
from .metrics import corpus_bleu
from .model import ModelConfig, TrainConfig, fine_tune, init_model, save_checkpoint, train
from .tokenization import MaskPolicy, build_vocabulary, get_tokenizer


def check_documents(X, name: str = "X") -> List[str]:
    """Validate a 1-D collection of non-empty strings."""
    if isinstance(X, (str, bytes)):
        raise ValueError(f"{name} must be a sequence of documents, not a single string")
    try:
        docs = list(X)
    except TypeError:
        raise ValueError(f"{name} must be an iterable of strings") from None
    for i, d in enumerate(docs):
        if not isinstance(d, str):
            raise ValueError(f"{name}[{i}] is {type(d).__name__}, expected str")
        if not d:
            raise ValueError(f"{name}[{i}] is empty")
    if not docs:
        raise ValueError(f"{name} contains no documents")
    return docs


class MaskedTokenEncoder(TransformerMixin, BaseEstimator):
    """Tokenize documents with placeholder masking and map tokens to ids.

    ``fit`` learns the vocabulary; ``transform`` returns one id list per
    document; ``inverse_transform`` maps id lists back to masked text.
    """

    def __init__(self, format: str = "markdown", policy: str = "optimizing"):
        self.format = format
        self.policy = policy

    def fit(self, X, y=None):
        docs = check_documents(X)
        self.vocabulary_ = build_vocabulary(tokenize_texts(docs, self.format, self.policy))
        return self

    def tokenize(self, X) -> List[List[str]]:
        return tokenize_texts(check_documents(X), self.format, self.policy)

    def transform(self, X):
        check_is_fitted(self, "vocabulary_")
        return [self.vocabulary_.encode(t) for t in self.tokenize(X)]

    def inverse_transform(self, ids):
        check_is_fitted(self, "vocabulary_")
        tok = get_tokenizer(self.format, self.policy)
        return [tok.reconstruct(self.vocabulary_.decode(row)) for row in ids]


class BehaviorModel(BaseEstimator):
    """Learn a program's input->output behavior from example pairs.

    ``fit(X, y)`` takes PUT inputs ``X`` and outputs ``y`` (swap them for an
    inverse model); ``predict`` maps new documents through the trained
    transformer; ``score`` is corpus BLEU over content tokens.
    """

    def __init__(self, source_format: str = "markdown", target_format: str = "html",
                 policy: str = "optimizing", encoder_layers: int = 1, decoder_layers: int = 1,
                 embedding_size: int = 64, feedforward_size: int = 256, attention_heads: int = 4,
                 dropout: float = 0.1, context_window: int = 5000, learning_rate: float = 1e-3,
                 weight_decay: float = 1e-2, schedule: str = "cosine", clip_gradients: bool = True,
                 epochs: int = 10, batch_size: int = 32, validation_fraction: float = 0.2,
                 max_len: Optional[int] = None, seed: int = 0):
        self.source_format = source_format
        self.target_format = target_format
        self.policy = policy
        self.encoder_layers = encoder_layers
        self.decoder_layers = decoder_layers
        self.embedding_size = embedding_size
        self.feedforward_size = feedforward_size
        self.attention_heads = attention_heads
        self.dropout = dropout
        self.context_window = context_window
        self.learning_rate = learning_rate
        self.weight_decay = weight_decay
        self.schedule = schedule
        self.clip_gradients = clip_gradients
        self.epochs = epochs
        self.batch_size = batch_size
        self.validation_fraction = validation_fraction
        self.max_len = max_len
        self.seed = seed

    def model_config(self) -> ModelConfig:
        return ModelConfig(self.encoder_layers, self.decoder_layers, self.embedding_size, self.feedforward_size,
                           self.attention_heads, self.dropout, self.context_window)

    def train_config(self, **overrides) -> TrainConfig:
        params = dict(learning_rate=self.learning_rate, weight_decay=self.weight_decay, schedule=self.schedule,
                      clip_gradients=self.clip_gradients, epochs=self.epochs, batch_size=self.batch_size,
                      seed=self.seed, validation_fraction=self.validation_fraction)
        params.update(overrides)
        return TrainConfig(**params)

    def _pairs(self, X, y):
        X = check_documents(X, "X")
        y = check_documents(y, "y")
        check_consistent_length(X, y)
        return (tokenize_texts(X, self.source_format, self.policy),
                tokenize_texts(y, self.target_format, self.policy))

    def fit(self, X, y):
        src, tgt = self._pairs(X, y)
        sv, tv = build_vocabulary(src), build_vocabulary(tgt)
        model = init_model(self.model_config(), sv, tv, self.seed)
        train(model, encode_pairs(src, tgt, sv, tv), self.train_config())
        self.model_ = model
        self.history_ = model.loss_history
        self.session_ = DeploymentSession(model, self.source_format, self.target_format, max_len=self.max_len,
                                          policy=self.policy, check_coverage=False)
        return self

    def partial_fit(self, X, y, epochs: Optional[int] = None):
        """Few-shot fine-tuning on exactly the given pairs."""
        check_is_fitted(self, "model_")
        src, tgt = self._pairs(X, y)
        pairs = encode_pairs(src, tgt, self.model_.src_vocab, self.model_.tgt_vocab)
        fine_tune(self.model_, pairs, self.train_config(epochs=self.epochs if epochs is None else epochs))
        return self

    def predict(self, X) -> List[str]:
        check_is_fitted(self, "model_")
        return [out for out, _ in predict_many(self.session_, check_documents(X))]

    def score(self, X, y) -> float:
        y = check_documents(y, "y")
        hyp = self.predict(X)
        tok = get_tokenizer(self.target_format, self.policy)
        return corpus_bleu([content_tokens(tok, t) for t in y], [content_tokens(tok, h) for h in hyp])

    def save(self, path):
        if not hasattr(self, "model_"):
            raise NotFittedError("fit the model before saving it")
        save_checkpoint(self.model_, path, extra={
            "source_format": self.source_format, "target_format": self.target_format,
            "policy": MaskPolicy.coerce(self.policy).value})

