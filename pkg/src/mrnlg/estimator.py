"""scikit-learn style wrappers around the data pipeline and the generator."""

from __future__ import annotations

from typing import Iterable, Optional

from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .data.delex import delexicalize, relexicalize_partial
from .data.pipeline import prepare_instance
from .data.types import Corpus, Instance
from .metrics import bleu
from .model import ModelConfig, NlgModel, build_vocabs, decode_beam, decode_greedy, make_examples
from .trainer import TrainConfig, train


def check_instances(X, name: str = "X", require_references: bool = False) -> list[Instance]:
    """Accept a Corpus or an iterable of Instances and return a nonempty list."""
    if isinstance(X, Corpus):
        items = list(X.instances)
    elif isinstance(X, Instance):
        raise TypeError(f"{name} must be a collection of instances, not a single Instance")
    else:
        try:
            items = list(X)
        except TypeError:
            raise TypeError(f"{name} must be a Corpus or an iterable of Instance, got {type(X).__name__}") from None
    if not items:
        raise ValueError(f"{name} is empty")
    bad = [type(i).__name__ for i in items if not isinstance(i, Instance)]
    if bad:
        raise TypeError(f"{name} contains non-Instance items such as {bad[0]}")
    if require_references and any(not i.references for i in items):
        raise ValueError(f"{name} contains instances without references")
    return items


def parse_decode(decode: str) -> int:
    """``"greedy"`` -> 0, ``"beam:k"`` -> k."""
    if decode == "greedy":
        return 0
    if decode.startswith("beam:"):
        try:
            k = int(decode[5:])
        except ValueError:
            k = 0
        if k >= 1:
            return k
    raise ValueError(f"decode must be 'greedy' or 'beam:k' with k >= 1, got {decode!r}")


class Delexicalizer(TransformerMixin, BaseEstimator):
    """Map instances to delexicalized main references (or contexts)."""

    def __init__(self, field: str = "reference"):
        self.field = field

    def fit(self, X, y=None):
        check_instances(X)
        if self.field not in ("reference", "context"):
            raise ValueError(f"field must be 'reference' or 'context', got {self.field!r}")
        self.n_features_in_ = 1
        return self

    def transform(self, X) -> list[str]:
        check_is_fitted(self, "n_features_in_")
        out = []
        for inst in check_instances(X):
            text = inst.main_reference if self.field == "reference" else (inst.mr.context or "")
            out.append(delexicalize(text, inst.mr.slots)[0])
        return out


class NlgGenerator(BaseEstimator):
    """Train a multi-encoder generator on instances and produce text for new MRs.

    ``fit`` uses ``X_dev`` for early stopping when given, else the training
    data itself.  ``predict`` returns relexicalized strings unless
    ``lexicalize`` is off.
    """

    def __init__(self, encoders=("slot_types", "slot_values"), utterance_mode="none", task="qa",
                 embedding_dim=50, hidden_dim=64, max_decode_len=40, batch_size=32, max_epochs=1000,
                 learning_rate=0.001, patience=20, clip_norm=5.0, seed=0, decode="greedy", lexicalize=True,
                 all_references=True):
        self.encoders = encoders
        self.utterance_mode = utterance_mode
        self.task = task
        self.embedding_dim = embedding_dim
        self.hidden_dim = hidden_dim
        self.max_decode_len = max_decode_len
        self.batch_size = batch_size
        self.max_epochs = max_epochs
        self.learning_rate = learning_rate
        self.patience = patience
        self.clip_norm = clip_norm
        self.seed = seed
        self.decode = decode
        self.lexicalize = lexicalize
        self.all_references = all_references

    def _model_config(self) -> ModelConfig:
        return ModelConfig(encoders=tuple(self.encoders), utterance_mode=self.utterance_mode, tasks=(self.task,),
                           embedding_dim=self.embedding_dim, hidden_dim=self.hidden_dim,
                           max_decode_len=self.max_decode_len, seed=self.seed)

    def _train_config(self) -> TrainConfig:
        return TrainConfig(batch_size=self.batch_size, max_epochs=self.max_epochs, learning_rate=self.learning_rate,
                           patience=self.patience, clip_norm=self.clip_norm, seed=self.seed)

    def fit(self, X, y=None, X_dev: Optional[Iterable[Instance]] = None):
        parse_decode(self.decode)
        train_set = [prepare_instance(i) for i in check_instances(X, require_references=True)]
        dev_set = [prepare_instance(i) for i in check_instances(X_dev, "X_dev", True)] if X_dev is not None else train_set
        config = self._model_config()
        vocabs = build_vocabs(config, {self.task: train_set})
        model = NlgModel(config, vocabs)
        train_ex = make_examples(train_set, config, vocabs, self.task, self.all_references)
        dev_ex = make_examples(dev_set, config, vocabs, self.task, all_references=False)
        self.model_, self.history_ = train(model, {self.task: (train_ex, dev_ex)}, self._train_config())
        self.n_features_in_ = len(config.encoders)
        return self

    def predict_tokens(self, X) -> list[list[str]]:
        check_is_fitted(self, "model_")
        beam = parse_decode(self.decode)
        out = []
        for inst in check_instances(X):
            if beam:
                out.append(decode_beam(self.model_, self.task, inst, beam)[0][0])
            else:
                out.append(decode_greedy(self.model_, self.task, inst))
        return out

    def predict(self, X) -> list[str]:
        instances = check_instances(X)
        texts = [" ".join(toks) for toks in self.predict_tokens(instances)]
        if not self.lexicalize:
            return texts
        return [relexicalize_partial(t, inst.mr.slots)[0] for t, inst in zip(texts, instances)]

    def score(self, X, y=None) -> float:
        """Corpus BLEU of lexicalized predictions against every reference."""
        instances = check_instances(X, require_references=True)
        texts = [" ".join(toks) for toks in self.predict_tokens(instances)]
        hyps = [relexicalize_partial(t, inst.mr.slots)[0] for t, inst in zip(texts, instances)]
        return bleu(hyps, [inst.references for inst in instances]).score
