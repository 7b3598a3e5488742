"""Pair sampling, the AdamW training loop, step-decay schedule and checkpoints."""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from p2ptrack.augment import AugmentConfig, augment_pair
from p2ptrack.errors import EmptyRegion, NonFiniteLoss
from p2ptrack.geometry import box_to_canonical, relative_motion
from p2ptrack.inputs import pair_input
from p2ptrack.loss import LossConfig, regression_loss
from p2ptrack.model import ModelConfig, build_model, desk_config
from p2ptrack.nn import AdamW, load_checkpoint, save_checkpoint
from p2ptrack.nn.tensor import backward
from p2ptrack.pointcloud import SEARCH_REGIONS, crop_search_region

log = logging.getLogger(__name__)

CSV_COLUMNS = ("epoch", "step", "loss", "lr")


@dataclass
class TrainConfig:
    epochs: int = 60
    batch_size: int = 16
    lr: float = 1e-4
    lr_decay_factor: float = 5.0
    lr_decay_every: int = 20
    weight_decay: float = 1e-2
    seed: int = 0
    category: str = "car"
    loss: LossConfig = field(default_factory=LossConfig)
    augment: AugmentConfig | None = field(default_factory=AugmentConfig)
    model: ModelConfig = field(default_factory=desk_config)
    grad_clip: float | None = None
    # False: crops, samples and augmentation are drawn once and reused every epoch
    resample_each_epoch: bool = True
    # stop after this many epochs without a better validation Success
    early_stop_patience: int | None = None

    def __post_init__(self):
        if self.lr <= 0:
            raise ValueError("lr must be > 0")
        if self.lr_decay_factor <= 1:
            raise ValueError("lr_decay_factor must be > 1")
        if self.lr_decay_every < 1 or self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs, batch_size and lr_decay_every must be >= 1")
        if self.early_stop_patience is not None and self.early_stop_patience < 1:
            raise ValueError("early_stop_patience must be >= 1")
        if self.category not in SEARCH_REGIONS:
            raise ValueError(f"unknown category {self.category!r}")
        if self.model.probabilistic != self.loss.probabilistic:
            self.model = replace(self.model, probabilistic=self.loss.probabilistic)

    @property
    def region(self):
        return SEARCH_REGIONS[self.category]

    def lr_at(self, epoch: int) -> float:
        """Learning rate for 1-based ``epoch``."""
        return self.lr / self.lr_decay_factor ** ((epoch - 1) // self.lr_decay_every)

    def to_dict(self):
        d = asdict(self)
        d["model"] = self.model.to_dict()
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d["loss"] = LossConfig(**d.get("loss", {}))
        aug = d.get("augment", {})
        d["augment"] = None if aug is None else AugmentConfig(**aug)
        d["model"] = ModelConfig.from_dict(d["model"]) if "model" in d else desk_config()
        return cls(**d)


def sample_seed(seed: int, epoch: int, index: int) -> int:
    return int(np.random.SeedSequence([seed, epoch, index]).generate_state(1)[0])


def sample_training_pair(tracklet, t: int, cfg: TrainConfig, seed: int = 0):
    """(prev_input, curr_input, target) for frames ``t-1`` -> ``t`` of ``tracklet``.

    Both frames are cropped about the frame ``t-1`` ground truth and expressed
    in its canonical frame; the target is the motion of box ``t`` relative to
    box ``t-1`` after augmentation.
    """
    if not 1 <= t < len(tracklet):
        raise IndexError(f"t={t} outside 1..{len(tracklet) - 1}")
    (p_pts, p_box), (c_pts, c_box) = tracklet.frames[t - 1], tracklet.frames[t]
    ref = p_box
    prev = (crop_search_region(np.asarray(p_pts)[:, :3], ref, cfg.region), box_to_canonical(p_box, ref))
    curr = (crop_search_region(np.asarray(c_pts)[:, :3], ref, cfg.region), box_to_canonical(c_box, ref))
    if len(prev[0]) == 0 or len(curr[0]) == 0:
        raise EmptyRegion(f"{tracklet.id} frame {t}: empty crop")
    rng = np.random.default_rng(seed)
    if cfg.augment is not None:
        pp, pb, cp, cb, _ = augment_pair(prev, curr, cfg.augment, rng)
    else:
        (pp, pb), (cp, cb) = prev, curr
    if cfg.model.motion_frame == "canonical":
        delta = relative_motion(pb, cb, "canonical")
    else:
        # translation along the crop axes rather than the perturbed box's axes
        delta = relative_motion(pb, cb, "world")
    prev_in, curr_in = pair_input(pp, cp, cfg.model, cfg.region, int(rng.integers(2**32)))
    return prev_in, curr_in, delta.as_array()


@dataclass
class TrainResult:
    model: object
    epoch_loss: list
    skipped: int
    out_dir: Path | None
    best_epoch: int
    val_success: list = field(default_factory=list)


def _grad_norm(params):
    return math.sqrt(sum(float(np.sum(p.grad.astype(np.float64) ** 2)) for p in params if p.grad is not None))


def _checkpoint_tensors(model):
    return {k: np.asarray(v) for k, v in model.state_dict().items()}


def save_model(path, model, cfg: TrainConfig, epoch: int, extra=None):
    meta = {"train_config": cfg.to_dict(), "epoch": epoch}
    meta.update(extra or {})
    save_checkpoint(path, _checkpoint_tensors(model), meta)


def load_model(path, dtype=np.float32):
    tensors, meta = load_checkpoint(path)
    cfg = TrainConfig.from_dict(meta["train_config"])
    model = build_model(cfg.model, seed=cfg.seed, dtype=dtype)
    model.load_state_dict(tensors)
    model.eval()
    return model, cfg, meta


def _pairs(tracklets):
    return [(i, t) for i, trk in enumerate(tracklets) for t in range(1, len(trk))]


def _draw(tracklets, pairs, cfg, epoch, order):
    """Materialize samples for ``order`` (indices into ``pairs``); empty crops are dropped."""
    out, skipped = [], 0
    for idx in order:
        i, t = pairs[idx]
        try:
            out.append(sample_training_pair(tracklets[i], t, cfg, sample_seed(cfg.seed, epoch, int(idx))))
        except EmptyRegion:
            skipped += 1
    return out, skipped


def _stack(samples, dtype):
    prev = np.stack([s[0] for s in samples]).astype(dtype)
    curr = np.stack([s[1] for s in samples]).astype(dtype)
    target = np.stack([s[2] for s in samples]).astype(dtype)
    return prev, curr, target


def _val_success(model, tracklets, category):
    from p2ptrack.evaluate import evaluate, track_sequence

    model.eval()
    try:
        return evaluate("val", lambda t: track_sequence(model, t, category=category), tracklets).overall.success
    finally:
        model.train()


def train(cfg: TrainConfig, tracklets, out_dir=None, dtype=np.float32, progress=None, val_tracklets=None) -> TrainResult:
    """Train a fresh model; writes ``metrics.csv``, ``epochs.csv``, ``best.ckpt``, ``last.ckpt``.

    The best checkpoint is the epoch with the highest Success on
    ``val_tracklets`` when given, else the lowest mean training loss. With
    ``cfg.early_stop_patience`` and a validation set, training stops once that
    many epochs pass without a better validation Success.
    """
    if not tracklets:
        raise ValueError("train needs at least one tracklet")
    out_dir = Path(out_dir) if out_dir is not None else None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
    model = build_model(cfg.model, seed=cfg.seed, dtype=dtype)
    model.train()
    params = model.parameters()
    opt = AdamW(params, lr=cfg.lr, weight_decay=cfg.weight_decay)
    pairs = _pairs(tracklets)
    if not pairs:
        raise ValueError("tracklets contain no frame pairs")
    fixed = None
    if not cfg.resample_each_epoch:
        fixed, skipped_fixed = _draw(tracklets, pairs, cfg, 0, range(len(pairs)))

    epoch_loss, val_scores = [], []
    skipped, step = 0, 0
    best, best_epoch = -math.inf, 0
    metrics_fh = open(out_dir / "metrics.csv", "w", newline="") if out_dir else None
    writer = csv.writer(metrics_fh) if metrics_fh else None
    if writer:
        writer.writerow(CSV_COLUMNS)
    try:
        for epoch in range(1, cfg.epochs + 1):
            opt.lr = cfg.lr_at(epoch)
            rng = np.random.default_rng([cfg.seed, epoch])
            if fixed is None:
                order = rng.permutation(len(pairs))
                samples, n_skip = _draw(tracklets, pairs, cfg, epoch, order)
            else:
                samples = [fixed[j] for j in rng.permutation(len(fixed))]
                n_skip = skipped_fixed if epoch == 1 else 0
            skipped += n_skip
            losses = []
            for lo in range(0, len(samples), cfg.batch_size):
                batch = samples[lo:lo + cfg.batch_size]
                if len(batch) < 2 and len(samples) >= 2:
                    # batch norm needs two samples; fold a singleton tail away
                    continue
                prev, curr, target = _stack(batch, dtype)
                opt.zero_grad()
                loss = regression_loss(model(prev, curr), target, cfg.loss)
                value = float(loss.item())
                if not math.isfinite(value):
                    if out_dir is not None:
                        save_model(out_dir / "nonfinite.ckpt", model, cfg, epoch, {"step": step})
                        np.savez(out_dir / "nonfinite_batch.npz", prev=prev, curr=curr, target=target)
                    raise NonFiniteLoss(f"loss became {value} at epoch {epoch}, step {step}")
                backward(loss)
                if cfg.grad_clip is not None:
                    norm = _grad_norm(params)
                    if norm > cfg.grad_clip:
                        scale = cfg.grad_clip / norm
                        for p in params:
                            p.grad = p.grad * scale
                opt.step()
                step += 1
                losses.append(value)
                if writer:
                    writer.writerow([epoch, step, repr(value), repr(opt.lr)])
            mean = float(np.mean(losses)) if losses else math.nan
            epoch_loss.append(mean)
            if progress:
                progress(epoch, mean)
            log.info("epoch %d loss %.6f lr %.3g skipped %d", epoch, mean, opt.lr, n_skip)
            if val_tracklets:
                val_scores.append(_val_success(model, val_tracklets, cfg.category))
                score = val_scores[-1]
                log.info("epoch %d validation success %.2f", epoch, score)
            else:
                score = -mean
            if score > best:
                best, best_epoch = score, epoch
                if out_dir is not None:
                    extra = {"loss": mean, "val_success": val_scores[-1]} if val_scores else {"loss": mean}
                    save_model(out_dir / "best.ckpt", model, cfg, epoch, extra)
            if val_scores and cfg.early_stop_patience and epoch - best_epoch >= cfg.early_stop_patience:
                log.info("early stop at epoch %d (best %d)", epoch, best_epoch)
                break
    finally:
        if metrics_fh:
            metrics_fh.close()
    if out_dir is not None:
        save_model(out_dir / "last.ckpt", model, cfg, len(epoch_loss), {"loss": epoch_loss[-1], "skipped": skipped})
        with open(out_dir / "epochs.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(("epoch", "mean_loss", "lr", "val_success"))
            for e, v in enumerate(epoch_loss, 1):
                w.writerow((e, repr(v), repr(cfg.lr_at(e)), repr(val_scores[e - 1]) if val_scores else ""))
    model.eval()
    return TrainResult(model, epoch_loss, skipped, out_dir, best_epoch, val_scores)
