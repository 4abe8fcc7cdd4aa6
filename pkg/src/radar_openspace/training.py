"""Seeded training loop: batches -> forward -> weighted CE -> RMSProp."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import dataio, eval as evaluation, models
from .nn import WeightedCrossEntropy, load_checkpoint, rmsprop_step, save_checkpoint, zero_grads

LABEL_HW = {"polar": (128, 48), "cartesian": (128, 128)}
IN_CHANNELS = {"rad": 64, "ra": 1, "doa": 1}


def evaluate_model(model, x: np.ndarray, y: np.ndarray, batch_size: int = 8):
    """Dataset-level mean-IoU of argmax predictions over (x, y)."""
    cm = evaluation.ConfusionMatrix()
    for start in range(0, len(x), batch_size):
        logits = model.forward(x[start : start + batch_size], train=False)
        pred = logits.argmax(axis=-1).astype(np.uint8)
        cm = cm + evaluation.confusion(pred, y[start : start + batch_size])
    miou, ious = evaluation.mean_iou(cm)
    return miou, ious, cm


@dataclass
class TrainResult:
    model: object
    loss_head: WeightedCrossEntropy
    history: list[dict] = field(default_factory=list)
    best_miou: float = 0.0
    best_step: int = 0
    final_eval_miou: float = 0.0


def run_training(
    manifest: dataio.DatasetManifest,
    modality: str,
    label_domain: str,
    arch: str,
    steps: int,
    batch_size: int = 8,
    lr: float = 0.005,
    seed: int = 0,
    eval_every: int = 200,
    lr_decay: float = 0.1,
    checkpoint_path: str | Path | None = None,
    log=None,
    train_data=None,
    eval_data=None,
) -> TrainResult:
    if train_data is None:
        train_data = dataio.load_split(manifest, "train", modality, label_domain)
    if eval_data is None:
        eval_data = dataio.load_split(manifest, "eval", modality, label_domain)
    x_train, y_train = train_data
    x_eval, y_eval = eval_data

    model = models.build_model(arch, IN_CHANNELS[modality], LABEL_HW[label_domain], seed=seed)
    loss_head = WeightedCrossEntropy(n_classes=2)
    store = dict(model.params())
    store["loss.theta"] = loss_head.theta

    result = TrainResult(model=model, loss_head=loss_head)
    metadata = {
        "arch": arch,
        "modality": modality,
        "label_domain": label_domain,
        "in_channels": str(IN_CHANNELS[modality]),
        "seed": str(seed),
        "lr": str(lr),
    }
    step = 0
    epoch = 0
    done = False
    while not done:
        batches = dataio.batch_iter(
            manifest, "train", modality, label_domain, batch_size,
            shuffle_seed=seed * 100_003 + epoch, data=(x_train, y_train),
        )
        for xb, yb in batches:
            if len(xb) < 2:
                continue  # batchnorm needs batch >= 2
            step += 1
            zero_grads(store)
            logits = model.forward(xb, train=True)
            loss = loss_head.forward(logits, yb)
            if not np.isfinite(loss):
                raise FloatingPointError(
                    f"loss became non-finite at step {step} "
                    f"(arch={arch}, modality={modality}, lr={lr})"
                )
            model.backward(loss_head.backward())
            # Class weights are trained adversarially: ascending on theta
            # shifts weight onto the harder class. Descending would instead
            # collapse all weight onto the easier class and zero the loss.
            loss_head.theta.grad = -loss_head.theta.grad
            # lr is the initial rate; decay it exponentially to lr * lr_decay
            # over the run to damp the late-training oscillations.
            step_lr = lr * lr_decay ** (step / steps)
            rmsprop_step(store, lr=step_lr)
            entry = {"step": step, "loss": loss}
            if step % eval_every == 0 or step == steps:
                miou, _, _ = evaluate_model(model, x_eval, y_eval, batch_size)
                entry["eval_miou"] = miou
                result.final_eval_miou = miou
                if miou > result.best_miou:
                    result.best_miou = miou
                    result.best_step = step
                    if checkpoint_path is not None:
                        save_model(checkpoint_path, model, loss_head, manifest,
                                   dict(metadata, step=str(step), eval_miou=f"{miou:.6f}"))
            result.history.append(entry)
            if log is not None:
                log(entry)
            if step >= steps:
                done = True
                break
        epoch += 1
    if checkpoint_path is not None and result.best_step == 0:
        save_model(checkpoint_path, model, loss_head, manifest, metadata)
    return result


def model_tensors(model, loss_head: WeightedCrossEntropy) -> dict[str, np.ndarray]:
    tensors: dict[str, np.ndarray] = {}
    store = dict(model.params())
    store["loss.theta"] = loss_head.theta
    for name, p in store.items():
        tensors[f"param.{name}"] = p.value
        tensors[f"sq_acc.{name}"] = p.sq_acc
        tensors[f"mom.{name}"] = p.mom
    for name, b in model.buffers().items():
        tensors[f"buffer.{name}"] = b
    return tensors


def save_model(path, model, loss_head, manifest, metadata: dict[str, str]) -> None:
    meta = dict(metadata)
    for modality, (mean, std) in manifest.stats.items():
        meta[f"stats.{modality}.mean"] = repr(mean)
        meta[f"stats.{modality}.std"] = repr(std)
    save_checkpoint(path, model_tensors(model, loss_head), meta)


def load_model(path):
    """Rebuild the model (and loss head) stored in a checkpoint."""
    tensors, meta = load_checkpoint(path)
    arch = meta["arch"]
    label_hw = LABEL_HW[meta["label_domain"]]
    model = models.build_model(arch, int(meta["in_channels"]), label_hw, seed=int(meta["seed"]))
    loss_head = WeightedCrossEntropy(n_classes=2)
    store = dict(model.params())
    store["loss.theta"] = loss_head.theta
    for name, p in store.items():
        p.value[...] = tensors[f"param.{name}"]
        p.sq_acc[...] = tensors[f"sq_acc.{name}"]
        p.mom[...] = tensors[f"mom.{name}"]
    for name, b in model.buffers().items():
        b[...] = tensors[f"buffer.{name}"]
    return model, loss_head, meta
