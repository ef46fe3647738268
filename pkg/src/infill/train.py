"""Training loop: seeded batching, Adam + schedule, validation, checkpoints.

Every step appends a CSV row "step,loss,lr,val_ppl" (loss is the batch's
mean NLL per scored token; val_ppl is empty except on validation steps).
The checkpoint with the best validation perplexity is retained; with no
validation data the final state is saved instead.  Runs are fully seeded:
batch order, dropout, and initialization derive from the run seed.
"""

import math
import os
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .checkpoint import save_model
from .data import batchify
from .errors import ConfigError, NumericsError
from .models import batch_loss
from .optim import Adam, ScheduleConfig, lr_schedule


@dataclass
class TrainConfig:
    epochs: int = 150
    batch_size: int = 200
    seed: int = 0
    val_every: int = 50
    max_steps: int = 0          # 0 = no cap
    lr_const: float = 0.3
    warmup_steps: int = 10000
    dtype: str = "float32"

    def __post_init__(self):
        if self.epochs < 0:
            raise ConfigError(f"epochs must be >= 0, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.val_every < 1:
            raise ConfigError(f"val_every must be >= 1, got {self.val_every}")
        if self.dtype not in ("float32", "float64"):
            raise ConfigError(f"dtype must be float32|float64, got {self.dtype}")


@dataclass
class TrainResult:
    steps: int
    best_val_ppl: float
    final_train_loss: float
    checkpoint_path: str
    metrics_path: str


def eval_ppl(model, examples, batch_size=64):
    """Teacher-forced perplexity: exp(total NLL / total scored tokens)."""
    total = 0.0
    count = 0.0
    with T.no_grad():
        for batch in batchify(examples, batch_size):
            loss, n = batch_loss(model, batch)
            total += loss.item()
            count += n
    return math.exp(total / count)


def train(model, train_examples, val_examples, train_cfg, out_dir,
          schedule_d_model=None):
    """Run the training loop; returns a TrainResult.

    The schedule scales with the model width by default; pass
    schedule_d_model to pin it (the seq2seq baseline has no d_model, so
    its embedding size is used).
    """
    os.makedirs(out_dir, exist_ok=True)
    ckpt_path = os.path.join(out_dir, "best.ckpt")
    metrics_path = os.path.join(out_dir, "metrics.csv")
    if not train_examples:
        raise ConfigError("no training examples")

    with T.use_dtype(train_cfg.dtype):
        d_model = schedule_d_model or getattr(
            model.config, "d_model", getattr(model.config, "embedding_size", None))
        sched = ScheduleConfig(d_model=d_model, const=train_cfg.lr_const,
                               warmup_steps=train_cfg.warmup_steps)
        opt = Adam(model.params())
        shuffle_rng = np.random.default_rng([train_cfg.seed, 0])
        dropout_rng = np.random.default_rng([train_cfg.seed, 1])

        best_ppl = math.inf
        saved_any = False
        step = 0
        last_loss = math.nan
        last_lr = math.nan
        with open(metrics_path, "w", encoding="utf-8") as log:
            log.write("step,loss,lr,val_ppl\n")

            def validate_and_save():
                nonlocal best_ppl, saved_any
                if not val_examples:
                    return ""
                ppl = eval_ppl(model, val_examples)
                if ppl < best_ppl:
                    best_ppl = ppl
                    save_model(ckpt_path, model, step)
                    saved_any = True
                return repr(ppl)

            stop = False
            for _ in range(train_cfg.epochs):
                if stop:
                    break
                for batch in batchify(train_examples, train_cfg.batch_size,
                                      shuffle_rng):
                    step += 1
                    lr = lr_schedule(step, sched)
                    opt.zero_grad()
                    with T.Tape() as tape:
                        loss, count = batch_loss(model, batch, training=True,
                                                 rng=dropout_rng)
                        tape.backward(loss)
                    mean_loss = loss.item() / count
                    if not math.isfinite(mean_loss):
                        raise NumericsError(f"non-finite loss at step {step}")
                    opt.step(lr)
                    last_loss = mean_loss
                    last_lr = lr
                    val_cell = ""
                    if step % train_cfg.val_every == 0:
                        val_cell = validate_and_save()
                    log.write(f"{step},{mean_loss!r},{lr!r},{val_cell}\n")
                    if train_cfg.max_steps and step >= train_cfg.max_steps:
                        stop = True
                        break
            if val_examples and step and step % train_cfg.val_every != 0:
                final_cell = validate_and_save()
                if final_cell:
                    log.write(f"{step},{last_loss!r},{last_lr!r},{final_cell}\n")
        if not saved_any:
            # epochs=0, no validation data, or validation never improved:
            # retain the final (possibly initial) state
            save_model(ckpt_path, model, step)
        return TrainResult(
            steps=step,
            best_val_ppl=best_ppl if best_ppl < math.inf else math.nan,
            final_train_loss=last_loss,
            checkpoint_path=ckpt_path,
            metrics_path=metrics_path,
        )
