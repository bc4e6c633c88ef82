"""Mini-batch Adam training of the tagging objective with early stopping."""

import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .autodiff import value_and_gradient
from .evaluation import score_micro
from .extraction import extract_corpus
from .model import SUPERVISION_MODES, loss_graph
from .optim import AdamState, adam_step

log = logging.getLogger(__name__)

# learning rate used with a pre-trained encoder; far too small for random init
PAPER_LR = 1e-5


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class TrainConfig:
    batch_size: int = 6
    lr: float = 1e-3
    threshold: float = 0.5
    patience: int = 7
    max_epochs: int = 100
    seed: int = 0
    mode: str = "all-subjects"

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch size must be >= 1")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")
        if not 0.0 < self.threshold < 1.0:
            raise ValueError("threshold must be in (0, 1)")
        if self.max_epochs < 1:
            raise ValueError("max_epochs must be >= 1")
        if self.mode not in SUPERVISION_MODES:
            raise ValueError(f"mode must be one of {SUPERVISION_MODES}")

    @classmethod
    def paper_preset(cls, **overrides):
        return cls(**{"lr": PAPER_LR, **overrides})


@dataclass
class EpochRecord:
    epoch: int
    loss: float
    val_f1: float
    seconds: float = field(default=0.0, compare=False)


@dataclass
class TrainHistory:
    epochs: list = field(default_factory=list)
    best_epoch: int = -1

    @property
    def best_f1(self):
        return self.epochs[self.best_epoch].val_f1 if self.epochs else float("nan")

    def to_dict(self):
        """Deterministic view (no wall-clock times)."""
        return {
            "best_epoch": self.best_epoch,
            "epochs": [{"epoch": e.epoch, "loss": e.loss, "val_f1": e.val_f1} for e in self.epochs],
        }


def sentence_loss(model, example, mode="all-subjects", rng=None):
    """Negative log-likelihood of one sentence (a batch of one)."""
    from .autodiff import evaluate

    g, loss = loss_graph(model, [example], mode, rng)
    return float(evaluate(g)[loss])


def batch_loss_and_grad(model, examples, mode="all-subjects", rng=None, dropout_rng=None):
    g, loss = loss_graph(model, examples, mode, rng, dropout_rng)
    return value_and_gradient(g, {}, loss)


def validation_f1(model, sentences, threshold=0.5, mode="partial"):
    """Micro F1 of extracted triples against each sentence's gold strings."""
    preds = extract_corpus([s.tokens for s in sentences], model, threshold)
    golds = [s.raw_triples for s in sentences]
    return score_micro(preds, golds, mode)[2]


def train(model, train_sentences, val_sentences, config, validate=None, on_best=None, log_path=None):
    """Train ``model`` and return ``(best_model, history)``.

    Each epoch shuffles with a generator seeded from ``config.seed``, takes one
    Adam step per mini-batch on the mean sentence loss, then scores the
    validation set (``validate(model) -> f1``; Partial-Match micro F1 by
    default). Training stops once ``patience`` consecutive epochs fail to beat
    the best validation F1, or at ``max_epochs``. ``on_best(model, epoch)`` runs
    whenever a new best is reached.
    """
    examples = [model.example(s) for s in train_sentences]
    if not examples:
        raise ValueError("training corpus is empty")
    if validate is None:
        validate = lambda m: validation_f1(m, val_sentences, config.threshold)  # noqa: E731
    shuffle_rng, sample_rng, dropout_rng = (np.random.default_rng([config.seed, k]) for k in range(3))
    state = AdamState.for_params(model.params, lr=config.lr)
    params = model.params
    history = TrainHistory()
    best_params, best_f1, stale = None, -math.inf, 0
    log_lines = []

    for epoch in range(config.max_epochs):
        t0 = time.perf_counter()
        order = shuffle_rng.permutation(len(examples))
        total = 0.0
        for lo in range(0, len(order), config.batch_size):
            batch = [examples[i] for i in order[lo: lo + config.batch_size]]
            loss, grads = batch_loss_and_grad(model.with_params(params), batch, config.mode, sample_rng, dropout_rng)
            if not math.isfinite(loss) or not all(np.all(np.isfinite(g)) for g in grads.values()):
                raise TrainingDiverged(f"non-finite loss/gradient at epoch {epoch}, batch starting {lo}: loss={loss}")
            params, state = adam_step(params, grads, state)
            total += loss * len(batch)
        current = model.with_params(params)
        f1 = float(validate(current))
        rec = EpochRecord(epoch, total / len(examples), f1, time.perf_counter() - t0)
        history.epochs.append(rec)
        log.info("epoch %d loss %.6f val_f1 %.4f (%.1fs)", epoch, rec.loss, f1, rec.seconds)
        if log_path is not None:
            log_lines.append(json.dumps(asdict(rec)))
            from .checkpoint import write_atomic

            write_atomic(log_path, "\n".join(log_lines) + "\n")
        if f1 > best_f1:
            best_f1, best_params, stale = f1, params, 0
            history.best_epoch = epoch
            if on_best is not None:
                on_best(current, epoch)
        else:
            stale += 1
            if stale >= config.patience:
                break
    return model.with_params(best_params), history
