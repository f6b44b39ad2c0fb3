"""End-to-end model assembly and training.

The network embeds each modality into a shared C-channel latent space,
initializes the fused feature to zeros, runs three fusion stages, global-
average-pools the final fused feature, and regresses a scalar with a linear
head. Labels are min-max normalized to [0, 1]; the head output is raw and is
clamped to [0, 1] only when scores are reported.
"""

from __future__ import annotations

import math

import numpy as np

from . import autodiff as ad
from .autodiff import Var, no_grad
from .config import TrainConfig
from .errors import NumericError, ShapeMismatch
from .group3m import Group3MBlock, MODALITIES
from .ops import global_avg_pool, layernorm, linear
from .optim import AdamW
from .params import ForwardCtx, ParamStore
from .rng import RngState

N_STAGES = 3


def _imw_kwargs(cfg: TrainConfig) -> dict:
    kw = dict(alpha=cfg.split_ratio, depth=cfg.bimamba_depth,
              levels=cfg.wavelet_levels, basis=cfg.wavelet_basis,
              drop_rate=cfg.dropout, fusion=cfg.fusion_strategy)
    if cfg.ablation == "no_split":
        kw["alpha"] = 0.0
    elif cfg.ablation == "identity_only":
        kw["enabled"] = False
    elif cfg.ablation == "split_bimamba":
        kw["forced_sigma"] = 1.0
    elif cfg.ablation == "split_wavelet":
        kw["forced_sigma"] = 0.0
    return kw


class PidnetModel:
    """Per-modality embeddings, three Group3M stages, and the regression head,
    all inside one ParamStore."""

    def __init__(self, cfg: TrainConfig, dims: tuple[int, int, int], init_seed: int | None = None):
        cfg.validate()
        self.cfg = cfg
        self.dims = dict(zip(MODALITIES, dims))
        self.store = ParamStore()
        rng = RngState(cfg.seed if init_seed is None else init_seed).derive(0xD1CE)
        c = cfg.channels
        self.embed_names = {}
        for m in MODALITIES:
            d = self.dims[m]
            self.embed_names[m] = {
                "w": self.store.add(f"embed.{m}.w", rng.normal((c, d)) / math.sqrt(d)),
                "b": self.store.add(f"embed.{m}.b", np.zeros((c, 1))),
                "ln_gain": self.store.add(f"embed.{m}.ln.gain", np.ones((c, 1))),
                "ln_shift": self.store.add(f"embed.{m}.ln.shift", np.zeros((c, 1))),
            }
        kw = _imw_kwargs(cfg)
        self.stages = [Group3MBlock(self.store, f"stage{l}", c, rng,
                                    mkconv_k=cfg.mkconv_k, heads=cfg.heads,
                                    imw_kwargs=kw)
                       for l in range(1, N_STAGES + 1)]
        self.head_w = self.store.add("head.w", rng.normal((1, c)) / math.sqrt(c))
        self.head_b = self.store.add("head.b", np.zeros((1, 1)))

    def ctx(self, mode: str = "eval", rng: RngState | None = None, gate_sink=None) -> ForwardCtx:
        return ForwardCtx(self.store, mode, rng, gate_sink)

    def embed(self, ctx: ForwardCtx, x, modality: str) -> Var:
        """(..., T, d_m) time-major input -> (..., C, T) latent, layer-normalized."""
        xv = x.value if isinstance(x, Var) else np.asarray(x, dtype=np.float64)
        d = self.dims[modality]
        if xv.shape[-1] != d:
            raise ShapeMismatch(
                f"embed: modality {modality} expects dim {d}, got input shape {xv.shape}")
        names = self.embed_names[modality]
        latent = linear(ad.swap_ct(ad.as_var(xv)), ctx.p(names["w"]), ctx.p(names["b"]))
        return layernorm(latent, ctx.p(names["ln_gain"]), ctx.p(names["ln_shift"]))

    def forward(self, ctx: ForwardCtx, batch: dict) -> Var:
        """batch maps modality -> (B, L, d_m) (or (L, d_m) for one sample);
        returns predictions of shape (B,) (or a scalar shape ())."""
        feats = {m: self.embed(ctx, batch[m], m) for m in MODALITIES}
        t_len = feats["rgb"].shape[-1]
        for m in MODALITIES:
            if feats[m].shape[-1] != t_len:
                raise ShapeMismatch(
                    f"forward: modality lengths differ: {m} has {feats[m].shape[-1]}, "
                    f"rgb has {t_len}")
        fused_shape = feats["rgb"].shape[:-2] + (self.cfg.channels, t_len)
        fused = Var(np.zeros(fused_shape))
        assert not fused.value.any(), "fused feature must start at exactly zero"
        for stage in self.stages:
            fused, feats = stage(ctx, fused, feats)
        pooled = global_avg_pool(fused)  # (..., C)
        pooled = ad.reshape(pooled, pooled.shape + (1,))
        score = ad.add(ad.matmul(ctx.p(self.head_w), pooled), ctx.p(self.head_b))
        return ad.reshape(score, score.shape[:-2])

    def predict(self, batch: dict) -> np.ndarray:
        """Eval-mode forward without tape; returns raw (unclamped) scores."""
        with no_grad():
            return self.forward(self.ctx("eval"), batch).value


def clamp_unit(y: np.ndarray) -> np.ndarray:
    """Reporting-time clamp of normalized predictions to [0, 1]."""
    return np.clip(y, 0.0, 1.0)


def mse_loss(pred, target):
    """Mean squared error over a batch of scalars."""
    pv = pred.value if isinstance(pred, Var) else np.asarray(pred, dtype=np.float64)
    tv = np.asarray(target.value if isinstance(target, Var) else target, dtype=np.float64)
    if pv.size == 0:
        raise ValueError("mse_loss: empty batch")
    if pv.shape != tv.shape:
        raise ShapeMismatch(f"mse_loss: prediction shape {pv.shape} != target shape {tv.shape}")
    diff = ad.sub(pred, tv)
    out = ad.mean_(ad.mul(diff, diff))
    return out.value if not isinstance(pred, Var) else out


def train_step(model: PidnetModel, batch: dict, targets: np.ndarray,
               opt: AdamW, clip_norm: float, rng: RngState) -> float:
    """One optimization step: forward (train mode), MSE, backward, global-norm
    clip, AdamW update, zero grads. Deterministic given the rng stream."""
    ctx = model.ctx("train", rng)
    pred = model.forward(ctx, batch)
    loss = mse_loss(pred, targets)
    loss_val = float(loss.value)
    if not np.isfinite(loss_val):
        _raise_nonfinite(model, loss_val)
    loss.backward()
    ctx.harvest()
    _check_finite_grads(model)
    model.store.clip_grads(clip_norm)
    opt.step(model.store)
    model.store.zero_grads()
    return loss_val


def _raise_nonfinite(model: PidnetModel, loss_val: float):
    worst_name, worst = "<none>", 0.0
    for name, p in model.store.trainable_items():
        peak = float(np.max(np.abs(p.value))) if p.value.size else 0.0
        if not np.isfinite(peak) or peak > worst:
            worst_name, worst = name, peak
    raise NumericError(
        f"non-finite loss {loss_val}; largest parameter {worst_name} (|max| = {worst:.3e})")


def _check_finite_grads(model: PidnetModel):
    for name, p in model.store.trainable_items():
        if p.grad.size and not np.all(np.isfinite(p.grad)):
            peak = float(np.max(np.abs(p.grad[np.isfinite(p.grad)]), initial=0.0))
            raise NumericError(
                f"non-finite gradient in {name} (max finite |grad| = {peak:.3e})")


def _batches(n: int, batch_size: int, perm: np.ndarray):
    for start in range(0, n, batch_size):
        yield perm[start:start + batch_size]


def fit(model: PidnetModel, train_data, val_data, cfg: TrainConfig, rng: RngState):
    """Epoch loop with seeded shuffling and early stopping on validation
    Spearman (ties broken by lower validation MSE). Returns (best parameter
    values, history) where history rows are (epoch, train_loss, val_rho,
    val_mse) with MSE on the normalized label scale.

    ``train_data`` / ``val_data`` provide ``materialize(mode, epoch_rng)``
    returning (batch dict, normalized targets); see dataio.AlignedDataset.
    """
    from .metrics import spearman  # local import: metrics must stay tape-free

    opt = AdamW(lr=cfg.lr, weight_decay=cfg.weight_decay)
    best_values = model.store.clone_values()
    best_rho, best_mse = -np.inf, np.inf
    history: list[tuple[int, float, float | None, float]] = []
    stale = 0

    for epoch in range(1, cfg.max_epochs + 1):
        epoch_rng = rng.derive(epoch)
        batch_all, targets_all = train_data.materialize("train", epoch_rng.derive(1))
        n = len(targets_all)
        perm = epoch_rng.derive(2).shuffle(n)
        drop_rng = epoch_rng.derive(3)
        losses = []
        for idx in _batches(n, cfg.batch_size, perm):
            batch = {m: batch_all[m][idx] for m in MODALITIES}
            losses.append(train_step(model, batch, targets_all[idx], opt,
                                     cfg.clip_norm, drop_rng))
        train_loss = float(np.mean(losses))

        val_batch, val_targets = val_data.materialize("eval")
        val_pred = model.predict(val_batch)
        val_rho = spearman(val_targets, val_pred) if len(val_targets) >= 2 else None
        val_mse = float(np.mean((val_pred - val_targets) ** 2))
        history.append((epoch, train_loss, val_rho, val_mse))

        rho_key = -np.inf if val_rho is None else val_rho
        improved = rho_key > best_rho or (rho_key == best_rho and val_mse < best_mse)
        if improved:
            best_rho, best_mse = rho_key, val_mse
            best_values = model.store.clone_values()
            stale = 0
        else:
            stale += 1
            if stale >= cfg.patience:
                break

    model.store.load_values(best_values)
    return best_values, history
