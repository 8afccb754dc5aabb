"""Training loops: autoencoder pre-training on the reconstruction loss,
then denoising score matching on the latent paths (optionally alternating
with further autoencoder steps)."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .autoencoder import Autoencoder, recon_loss
from .engine import tensor as T
from .engine.optim import AdamState, EmaState, adam_step, ema_update
from .engine.tensor import Tensor
from .scorenet import ScoreNet
from .sde import EPS_S, DiffusionSpec, loss_weight, marginal_params


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class TrainConfig:
    iter_pre: int = 50000
    iter_main: int = 40000
    use_alt: bool = True
    batch_size: int = 128
    lr_ae: float = 1e-3
    lr_score: float = 2e-4
    grad_clip: float = 1.0
    warmup: int = 5000
    ema_decay: float = 0.999
    eval_every: int = 5000
    select_samples: int = 256
    pair_subsample: int = 0  # 0 = use every (sample, step) pair per batch
    seed: int = 0

    def __post_init__(self):
        if self.iter_pre <= 0 or self.iter_main <= 0:
            raise ValueError("iteration counts must be positive")
        if self.batch_size < 1:
            raise ValueError("batch size must be >= 1")
        if self.pair_subsample < 0:
            raise ValueError("pair_subsample must be >= 0")


@dataclass
class LossRecord:
    iteration: int
    l_ed: float
    l_score: float
    wall_clock: float


@dataclass
class ModelBundle:
    ae: Autoencoder
    score: ScoreNet
    spec: DiffusionSpec
    config: TrainConfig
    ae_opt: AdamState = None
    score_opt: AdamState = None
    ema: EmaState = None
    pre_curve: list = field(default_factory=list)
    main_curve: list = field(default_factory=list)

    def __post_init__(self):
        self.score.spec = self.spec  # keep the output scaling consistent
        if self.ae_opt is None:
            self.ae_opt = AdamState(self.ae.params, lr=self.config.lr_ae)
        if self.score_opt is None:
            self.score_opt = AdamState(self.score.params, lr=self.config.lr_score)
        if self.ema is None:
            self.ema = EmaState(self.score.params, decay=self.config.ema_decay)


def dsm_latent_loss(score_model, spec, latents, rng=None, s_values=None,
                    noise=None, n_pairs=0):
    """Denoising score-matching loss on a batch of latent paths.

    latents: (B, T, d) array treated as constant (no gradient to the
    encoder).  Each (sample, step) pair gets its own diffusion time
    s ~ U[eps, 1] and noise draw; the target is the kernel score
    -z/sigma(s) and each term is weighted by lambda(s) = sigma(s)^2.
    `s_values`/`noise` override the draws (oracle tests).  `n_pairs` > 0
    subsamples that many (sample, step) pairs per call — an unbiased
    estimate of the full per-step mean for budgeted runs.
    """
    latents = np.asarray(latents, dtype=np.float64)
    B, Tlen, d = latents.shape
    h_t = latents.reshape(B * Tlen, d)
    h_prev = np.concatenate(
        [np.zeros((B, 1, d)), latents[:, :-1, :]], axis=1).reshape(B * Tlen, d)

    n = B * Tlen
    if n_pairs and n_pairs < n:
        keep = rng.choice(n, size=n_pairs, replace=False)
        h_t, h_prev = h_t[keep], h_prev[keep]
        n = n_pairs
    if s_values is None:
        s_values = rng.uniform(EPS_S, 1.0, size=n)
    if noise is None:
        noise = rng.standard_normal((n, d))
    alpha, sigma = marginal_params(spec, s_values)
    lam = loss_weight(spec, s_values)

    h_s = alpha[:, None] * h_t + sigma[:, None] * noise
    target = -noise / sigma[:, None]

    pred = score_model.forward(s_values, h_s, h_prev)
    err = T.add(pred, Tensor(-target))
    per_pair = T.sum_(T.mul(err, err), axis=1)
    return T.mean_(T.mul(per_pair, Tensor(lam)))


def _grads_by_name(loss, params):
    by_tensor = T.backward(loss)
    return {name: by_tensor[p] for name, p in params.items() if p in by_tensor}


def _ae_lr(bundle):
    """Linearly decayed autoencoder learning rate.

    The small recurrent models oscillate under a constant Adam step and
    plateau far above their attainable loss; a linear decay over the total
    autoencoder step budget (pre-training plus the alternating steps of the
    main phase, when enabled) removes the oscillation.
    """
    cfg = bundle.config
    total = cfg.iter_pre + (cfg.iter_main if cfg.use_alt else 0)
    frac = min(bundle.ae_opt.step, total - 1) / total
    return cfg.lr_ae * (1.0 - frac)


def _autoencoder_step(bundle, x_batch):
    params = bundle.ae.params
    loss = recon_loss(x_batch, bundle.ae.reconstruct(x_batch))
    val = float(loss.data)
    if not np.isfinite(val):
        raise TrainingDiverged(f"autoencoder loss became non-finite: {val}")
    adam_step(params, _grads_by_name(loss, params), bundle.ae_opt,
              lr=_ae_lr(bundle))
    return val


def pretrain_autoencoder(bundle, windows, rng, on_record=None):
    """Algorithm stage 1: iter_pre Adam steps on the reconstruction loss."""
    cfg = bundle.config
    t0 = time.monotonic()
    try:
        for it in range(1, cfg.iter_pre + 1):
            idx = rng.integers(0, windows.shape[0], size=cfg.batch_size)
            val = _autoencoder_step(bundle, Tensor(windows[idx]))
            rec = LossRecord(it, val, float("nan"), time.monotonic() - t0)
            bundle.pre_curve.append(rec)
            if on_record:
                on_record(rec)
    except T.EngineError as exc:
        raise TrainingDiverged(f"pre-training aborted: {exc}") from exc
    return bundle


def train_main(bundle, windows, rng, evaluator=None, on_record=None):
    """Algorithm stage 2: score-network training with optional alternation.

    evaluator(bundle, iteration) is called every eval_every iterations and
    must return a (disc, pred) tuple; the checkpoint minimizing disc (ties
    broken by pred) is kept as `bundle.best`, which evaluator may persist.
    """
    cfg = bundle.config
    sparams = bundle.score.params
    best_key = None
    t0 = time.monotonic()
    try:
        for it in range(1, cfg.iter_main + 1):
            idx = rng.integers(0, windows.shape[0], size=cfg.batch_size)
            x = windows[idx]
            with T.no_grad():
                latents = bundle.ae.encode(Tensor(x)).data
            loss = dsm_latent_loss(bundle.score, bundle.spec, latents, rng,
                                   n_pairs=cfg.pair_subsample)
            val = float(loss.data)
            if not np.isfinite(val):
                raise TrainingDiverged(f"score loss became non-finite: {val}")
            grads = _grads_by_name(loss, sparams)
            T.clip_grad_norm(grads, cfg.grad_clip)
            # warmup then linear decay (same oscillation fix as the
            # autoencoder; see _ae_lr)
            step = bundle.score_opt.step
            lr = cfg.lr_score * min(1.0, (step + 1) / max(cfg.warmup, 1)) \
                * (1.0 - min(step, cfg.iter_main - 1) / cfg.iter_main)
            adam_step(sparams, grads, bundle.score_opt, lr=lr)
            ema_update(bundle.ema, sparams)

            ae_val = float("nan")
            if cfg.use_alt:
                ae_val = _autoencoder_step(bundle, Tensor(x))
            rec = LossRecord(it, ae_val, val, time.monotonic() - t0)
            bundle.main_curve.append(rec)
            if on_record:
                on_record(rec)

            if evaluator is not None and it % cfg.eval_every == 0:
                key = evaluator(bundle, it)
                if best_key is None or key < best_key:
                    best_key = key
    except T.EngineError as exc:
        raise TrainingDiverged(f"main training aborted: {exc}") from exc
    return bundle
