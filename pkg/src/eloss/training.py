"""Deterministic training loop combining a task loss with the entropy loss.

Each batch minimizes ``task_loss + alpha * (lambda1 * L1 + lambda2 * L2)``
where L1/L2 come from per-sample entropy profiles over the covered block
taps, averaged across the batch.  The entropy term backpropagates in a
second pass with the stem gate closed (unless configured otherwise), so
its gradients stay inside the covered blocks; with ``alpha = 0`` the
entropy pass is skipped entirely and parameters match a build with the
entropy code absent, bit for bit.

Run logs are timestamp-free: wall-clock numbers live next to the records
in memory and in a separate timing sidecar, never in the replayable log,
so identical config + seed reproduces identical log bytes.
"""

from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .datasets import DatasetHandle
from .entropy import DEFAULT_EPSILON
from .network import RepeatedBlockNet, channel_entropy, load_checkpoint

DIVERGENCE_LIMIT = 1e6


class DivergenceError(RuntimeError):
    """Training hit a non-finite or runaway loss."""


@dataclass(frozen=True)
class TrainConfig:
    task: str = "blobs-mlp"
    epochs: int = 10
    batch_size: int = 32
    seed: int = 0
    optimizer: str = "adam"
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.01
    alpha: float = 0.01
    lambda1: float = 1.0
    lambda2: float = 0.1
    eloss_coverage: int = 0
    k: int = 1
    epsilon: float = DEFAULT_EPSILON
    eloss_into_stem: bool = False

    def __post_init__(self):
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"optimizer must be adam or sgd, got {self.optimizer!r}")
        if self.lr <= 0:
            raise ValueError(f"learning rate must be > 0, got {self.lr}")
        if self.alpha < 0 or self.lambda1 < 0 or self.lambda2 < 0:
            raise ValueError("alpha and lambda weights must be non-negative")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")
        if self.eloss_coverage < 0:
            raise ValueError(f"eloss_coverage must be >= 0, got {self.eloss_coverage}")


@dataclass
class RunLog:
    """Per-epoch and per-batch records for one training run."""

    config: dict
    epochs: list = field(default_factory=list)
    batches: list = field(default_factory=list)
    status: str = "completed"
    continued: bool = False
    epoch_seconds: list = field(default_factory=list)
    step_seconds_median: float = 0.0

    def validation_curve(self) -> list[tuple[int, float]]:
        return [(rec["epoch"], rec["validation_metric"]) for rec in self.epochs]

    def to_jsonl(self) -> str:
        lines = [json.dumps({"record": "config", **self.config,
                             "continued": self.continued}, sort_keys=True)]
        for rec in self.batches:
            lines.append(json.dumps({"record": "batch", **rec}, sort_keys=True))
        for rec in self.epochs:
            lines.append(json.dumps({"record": "epoch", **rec}, sort_keys=True))
        lines.append(json.dumps({"record": "summary", "status": self.status},
                                sort_keys=True))
        return "\n".join(lines) + "\n"

    def write_jsonl(self, path):
        with open(path, "w") as fh:
            fh.write(self.to_jsonl())

    def write_csv(self, path):
        """Epoch projection: one row per epoch, metric columns."""
        cols = ("epoch", "task_loss", "eloss_l1", "eloss_l2", "validation_metric")
        with open(path, "w") as fh:
            fh.write(",".join(cols) + "\n")
            for rec in self.epochs:
                fh.write(",".join("" if rec[c] is None else repr(rec[c])
                                  if isinstance(rec[c], float) else str(rec[c])
                                  for c in cols) + "\n")

    def write_curve_csv(self, path):
        """Validation-metric curve in the (step,value) analysis format."""
        with open(path, "w") as fh:
            fh.write("step,value\n")
            for step, value in self.validation_curve():
                fh.write(f"{step},{value!r}\n")

    def write_timing(self, path):
        with open(path, "w") as fh:
            json.dump({"epoch_seconds": self.epoch_seconds,
                       "step_seconds_median": self.step_seconds_median},
                      fh, sort_keys=True)
            fh.write("\n")


class Adam:
    """Adam with decoupled weight decay."""

    def __init__(self, params: dict[str, Tensor], lr: float, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8, weight_decay: float = 0.0):
        self.params = params
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.weight_decay = weight_decay
        self.t = 0
        self.m = {k: np.zeros_like(p.values) for k, p in params.items()}
        self.v = {k: np.zeros_like(p.values) for k, p in params.items()}

    def step(self):
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for name, p in self.params.items():
            g = p.grad if p.grad is not None else np.zeros_like(p.values)
            self.m[name] = self.beta1 * self.m[name] + (1.0 - self.beta1) * g
            self.v[name] = self.beta2 * self.v[name] + (1.0 - self.beta2) * (g * g)
            m_hat = self.m[name] / bc1
            v_hat = self.v[name] / bc2
            update = m_hat / (np.sqrt(v_hat) + self.eps)
            if self.weight_decay:
                update = update + self.weight_decay * p.values
            p.values = p.values - self.lr * update


class SGD:
    def __init__(self, params: dict[str, Tensor], lr: float, weight_decay: float = 0.0):
        self.params = params
        self.lr = lr
        self.weight_decay = weight_decay

    def step(self):
        for p in self.params.values():
            g = p.grad if p.grad is not None else np.zeros_like(p.values)
            if self.weight_decay:
                g = g + self.weight_decay * p.values
            p.values = p.values - self.lr * g


def make_optimizer(net: RepeatedBlockNet, config: TrainConfig):
    params = net.parameters()
    if config.optimizer == "adam":
        return Adam(params, lr=config.lr, beta1=config.beta1, beta2=config.beta2,
                    eps=config.eps, weight_decay=config.weight_decay)
    return SGD(params, lr=config.lr, weight_decay=config.weight_decay)


def build_net(config: TrainConfig, data: DatasetHandle, blocks: int = 3,
              width: int | None = None, layers_per_block: int = 2) -> RepeatedBlockNet:
    """Construct the standard repeated-block net for a dataset."""
    arch = "conv" if data.sample_shape and len(data.sample_shape) == 3 else "mlp"
    return RepeatedBlockNet(
        arch=arch, in_shape=data.sample_shape, n_classes=data.n_classes,
        blocks=blocks, width=width, layers_per_block=layers_per_block,
        eloss_coverage=config.eloss_coverage, seed=config.seed)


def _eloss_graph(taps, config: TrainConfig):
    """Differentiable batch-mean L1/L2 from per-sample entropy profiles."""
    ents = [channel_entropy(t.captured, k=config.k, epsilon=config.epsilon)
            for t in taps]
    deltas = [ad.sub(b, a) for a, b in zip(ents, ents[1:])]
    n = len(deltas)
    total = deltas[0]
    for term in deltas[1:]:
        total = ad.add(total, term)
    mean_delta = ad.scale(total, 1.0 / n)
    dev_sq_sum = None
    sq_sum = None
    for term in deltas:
        dev = ad.sub(term, mean_delta)
        dev_sq = ad.mul(dev, dev)
        dev_sq_sum = dev_sq if dev_sq_sum is None else ad.add(dev_sq_sum, dev_sq)
        term_sq = ad.mul(term, term)
        sq_sum = term_sq if sq_sum is None else ad.add(sq_sum, term_sq)
    l1_batch = ad.mean(ad.scale(dev_sq_sum, 1.0 / n))
    l2_batch = ad.mean(ad.scale(sq_sum, -1.0))
    combined = ad.add(ad.scale(l1_batch, config.lambda1),
                      ad.scale(l2_batch, config.lambda2))
    return combined, l1_batch, l2_batch


def _accuracy(net: RepeatedBlockNet, x: np.ndarray, y: np.ndarray,
              batch_size: int = 256) -> float:
    hits = 0
    for start in range(0, len(x), batch_size):
        stop = min(start + batch_size, len(x))
        logits, _ = net.forward(Tensor(x[start:stop]), coverage=0)
        hits += int(np.sum(logits.values.argmax(axis=1) == y[start:stop]))
    return hits / len(x)


def train(net: RepeatedBlockNet, data: DatasetHandle, config: TrainConfig,
          continued: bool = False) -> RunLog:
    """Train ``net`` on ``data``; returns the complete, replayable run log.

    Identical config + seed produce an identical log.  Aborts with status
    ``'diverged'`` (and a partial log) if any loss goes non-finite or
    beyond the divergence limit.
    """
    cov = config.eloss_coverage
    if cov > net.n_blocks:
        raise ValueError(f"eloss_coverage {cov} exceeds {net.n_blocks} blocks")
    log = RunLog(config=asdict(config), continued=continued)
    rng = np.random.default_rng(config.seed)
    optimizer = make_optimizer(net, config)
    x_train, y_train = data.train_x, data.train_y
    x_val, y_val = data.val_x, data.val_y
    use_eloss = config.alpha > 0.0 and cov >= 1
    step_seconds = []

    for epoch in range(config.epochs):
        t_epoch = time.perf_counter()
        order = rng.permutation(len(x_train))
        batch_losses, batch_l1, batch_l2 = [], [], []
        for bi, start in enumerate(range(0, len(order), config.batch_size)):
            t_step = time.perf_counter()
            idx = order[start:start + config.batch_size]
            xb, yb = Tensor(x_train[idx]), y_train[idx]
            logits, taps = net.forward(xb, coverage=cov)
            task_loss = ad.softmax_cross_entropy(logits, yb)

            l1_val = l2_val = None
            combined = None
            if cov >= 1:
                combined, l1_t, l2_t = _eloss_graph(taps, config)
                l1_val, l2_val = float(l1_t.values), float(l2_t.values)

            net.zero_grad()
            net.stem_gate.open = True
            ad.backward(task_loss)
            if use_eloss:
                net.stem_gate.open = config.eloss_into_stem
                ad.backward(ad.scale(combined, config.alpha))
                net.stem_gate.open = True
            optimizer.step()

            loss_val = float(task_loss.values)
            step_seconds.append(time.perf_counter() - t_step)
            batch_losses.append(loss_val)
            if l1_val is not None:
                batch_l1.append(l1_val)
                batch_l2.append(l2_val)
            log.batches.append({"epoch": epoch, "batch": bi, "task_loss": loss_val,
                                "eloss_l1": l1_val, "eloss_l2": l2_val})
            total_val = loss_val + (config.alpha * float(combined.values)
                                    if combined is not None else 0.0)
            if not np.isfinite(total_val) or abs(total_val) > DIVERGENCE_LIMIT:
                log.status = "diverged"
                log.epoch_seconds.append(time.perf_counter() - t_epoch)
                log.step_seconds_median = float(np.median(step_seconds))
                return log

        log.epochs.append({
            "epoch": epoch,
            "task_loss": float(np.mean(batch_losses)),
            "eloss_l1": float(np.mean(batch_l1)) if batch_l1 else None,
            "eloss_l2": float(np.mean(batch_l2)) if batch_l2 else None,
            "validation_metric": _accuracy(net, x_val, y_val),
        })
        log.epoch_seconds.append(time.perf_counter() - t_epoch)

    log.step_seconds_median = float(np.median(step_seconds))
    return log


def continue_train(checkpoint_path, data: DatasetHandle, extra_epochs: int,
                   config: TrainConfig, blocks: int = 3, width: int | None = None,
                   layers_per_block: int = 2) -> tuple[RepeatedBlockNet, RunLog]:
    """Resume from a checkpoint with a fresh optimizer state.

    The returned log covers only the continuation epochs and carries the
    continuation marker.  Optimizer moments are reset, so a continuation
    is reproducible from the checkpoint file alone.
    """
    net = build_net(config, data, blocks=blocks, width=width,
                    layers_per_block=layers_per_block)
    load_checkpoint(net, checkpoint_path)
    cfg = replace(config, epochs=int(extra_epochs))
    log = train(net, data, cfg, continued=True)
    return net, log
