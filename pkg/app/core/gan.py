"""
Class-conditional WGAN-GP with an auxiliary classifier head, trained with
structure-aware regularizers: an adaptive blur loss sized from the estimated
repetition count and a delayed unit-cell reconstruction loss.
"""
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from app.config import settings
from app.core import autodiff as ad
from app.core.autodiff import AdamState, ParameterSet, Tape
from app.core.fft_guidance import estimate_batch
from app.core.structure import blur_kernel_size, blur_operator, gaussian_blur, reconstruct
from app.errors import ConfigurationError, ContractError, LabelError, TrainingDivergenceError
from app.schemas import AdamHyper, BlurConfig, BoundaryMode, ConsensusMode, LossWeights, MlpSpec, PeakDetectConfig
from app.utils.checkpoint import load_checkpoint, save_checkpoint
from app.utils.images import image_grid, save_binary_pgm
from app.utils.storage import write_csv

logger = logging.getLogger(__name__)

METRICS_HEADER = ["epoch", "iter", "L_D", "L_W", "L_cls", "L_blur", "L_recon", "p_h", "p_w", "k"]

Variant = Literal["full", "no-fft", "no-blur", "no-recon", "vanilla"]

VARIANT_FLAGS: dict[str, dict[str, bool]] = {
    "full": {"disable_fft": False, "disable_blur": False, "disable_recon": False},
    "no-fft": {"disable_fft": True, "disable_blur": False, "disable_recon": False},
    "no-blur": {"disable_fft": False, "disable_blur": True, "disable_recon": False},
    "no-recon": {"disable_fft": False, "disable_blur": False, "disable_recon": True},
    "vanilla": {"disable_fft": True, "disable_blur": True, "disable_recon": True},
}


# =====================================================
# 1. CONFIGURATION
# =====================================================
class TrainConfig(BaseModel):
    """Schema for a generator/critic training run"""
    image_side: int = Field(64, ge=4)
    num_classes: int = Field(3, ge=2)
    latent_dim: int = Field(128, ge=1)
    generator_hidden: list[int] = Field(default_factory=lambda: [256, 512])
    critic_hidden: list[int] = Field(default_factory=lambda: [512, 256])
    batch_size: int = Field(64, ge=2, description="Interpolation needs at least a pair")
    epochs: int = Field(20, ge=0)
    max_generator_steps: Optional[int] = Field(None, ge=0, description="Stop early after this many generator steps")
    optimizer: AdamHyper = Field(default_factory=AdamHyper)
    weights: LossWeights = Field(default_factory=LossWeights)
    peaks: PeakDetectConfig = Field(default_factory=PeakDetectConfig)
    disable_fft: bool = False
    disable_blur: bool = False
    disable_recon: bool = False
    fft_refresh_interval: int = Field(1, ge=1, description="Generator steps between FFT re-estimations")
    ground_truth_period: Optional[tuple[int, int]] = Field(
        None, description="(p_h, p_w) used when FFT guidance is disabled; read from dataset.json when omitted")
    recon_mode: ConsensusMode = "median"
    recon_source: Literal["raw", "blurred"] = "raw"
    blur_boundary: BoundaryMode = "reflect"
    sample_every_epochs: int = Field(1, ge=0, description="0 disables sample grids")
    checkpoint_every_epochs: int = Field(0, ge=0, description="0 writes only the final checkpoint")
    checkpoint_optimizer: bool = True
    seed: int = 0

    model_config = ConfigDict(extra="forbid")

    @property
    def pixels(self) -> int:
        return self.image_side * self.image_side

    @property
    def needs_period(self) -> bool:
        """True when a blur or reconstruction term can use the repetition count"""
        w = self.weights
        return (not self.disable_blur and w.lambda_blur > 0) or (not self.disable_recon and w.lambda_recon > 0)

    def generator_spec(self) -> MlpSpec:
        return MlpSpec(widths=[self.latent_dim, *self.generator_hidden, self.pixels],
                       hidden_activation="relu", output_activation="tanh")

    def critic_spec(self) -> MlpSpec:
        return MlpSpec(widths=[self.pixels, *self.critic_hidden, 1 + self.num_classes],
                       hidden_activation="leaky_relu", output_activation="identity")

    def with_variant(self, variant: Variant) -> "TrainConfig":
        if variant not in VARIANT_FLAGS:
            raise ConfigurationError(f"unknown variant '{variant}'")
        return self.model_copy(update=VARIANT_FLAGS[variant])


class GanCheckpoint(BaseModel):
    """Everything needed to resume training or sample from the generator"""
    format_version: int = settings.CHECKPOINT_FORMAT_VERSION
    config: TrainConfig
    generator: dict[str, list[list[float]]]
    critic: dict[str, list[list[float]]]
    generator_opt: Optional[dict] = None
    critic_opt: Optional[dict] = None
    seed: int
    epoch: int
    iteration: int


# =====================================================
# 2. LOSS TERMS
# =====================================================
def condition_latent(z: np.ndarray, labels: np.ndarray, embedding: np.ndarray) -> np.ndarray:
    """Element-wise product z * E[y] for each row"""
    z, labels, embedding = np.atleast_2d(z), np.atleast_1d(labels), np.atleast_2d(embedding)
    _check_labels(labels, embedding.shape[0])
    if z.shape[1] != embedding.shape[1]:
        raise ContractError(f"latent width {z.shape[1]} != embedding width {embedding.shape[1]}")
    return z * embedding[labels]


def _check_labels(labels: np.ndarray, num_classes: int) -> None:
    bad = [int(y) for y in np.atleast_1d(labels) if not 0 <= y < num_classes]
    if bad:
        raise LabelError(f"labels {sorted(set(bad))} outside 0..{num_classes - 1}")


def _condition_node(z: np.ndarray, labels: np.ndarray, embedding: ad.Node) -> ad.Node:
    _check_labels(labels, embedding.shape[0])
    return ad.mul(ad.active_tape().constant(z), ad.take_rows(embedding, labels))


def gradient_penalty(spec: MlpSpec, critic: ParameterSet, real: np.ndarray, fake: np.ndarray,
                     lambda_gp: float, rng: np.random.Generator,
                     tape: Optional[Tape] = None) -> tuple[ad.Node, np.ndarray]:
    """
    lambda_gp * mean((||grad D(x_hat)|| - 1)^2) at random interpolates of real and fake rows

    Args:
        spec: Critic architecture; the score is output column 0
        critic: Critic parameters
        real, fake: (n, d) batches of equal shape
        lambda_gp: Penalty weight
        rng: Source of the per-sample interpolation weights

    Returns:
        tuple: (penalty node on the tape, per-sample (norm - 1)^2 terms)
    """
    real, fake = ad.as_tensor2(real), ad.as_tensor2(fake)
    if real.shape != fake.shape:
        raise ContractError(f"real batch {real.shape} and fake batch {fake.shape} differ")
    eps = rng.uniform(0.0, 1.0, size=(real.shape[0], 1))
    x_hat = eps * real + (1.0 - eps) * fake
    g, tape = ad.grad_input_differentiable(spec, critic, x_hat, output_index=0, tape=tape)
    if not np.all(np.isfinite(g.value)):
        raise TrainingDivergenceError("non-finite critic input gradient in gradient penalty")
    with tape:
        norms = ad.sqrt(ad.sum(ad.square(g), axis=1))
        terms = ad.square(ad.sub(norms, 1.0))
        penalty = ad.scale(ad.mean(terms), lambda_gp)
    return penalty, terms.value[:, 0].copy()


def _weighted_sum(terms: list[tuple[float, ad.Node]]) -> ad.Node:
    # zero-weight terms are left out entirely so they cannot leak NaNs
    total = None
    for weight, node in terms:
        if weight == 0:
            continue
        part = ad.scale(node, weight)
        total = part if total is None else ad.add(total, part)
    return total if total is not None else ad.active_tape().constant(0.0)


def _scalar(node: ad.Node) -> float:
    return float(node.value.reshape(-1)[0])


# =====================================================
# 3. TRAINING STATE
# =====================================================
@dataclass
class CriticLosses:
    l_d: float
    l_wd: float
    l_cls: float
    gp: float


@dataclass
class GeneratorLosses:
    l_g: float
    l_w: float
    l_cls: float
    l_blur: float
    l_recon: float
    p_h: int
    p_w: int
    k: int
    recon_applied: bool


@dataclass
class PeriodCache:
    p_h: int = 1
    p_w: int = 1
    valid: bool = False
    refreshed_at: Optional[int] = None


@dataclass
class GanState:
    generator: ParameterSet
    critic: ParameterSet
    generator_opt: AdamState
    critic_opt: AdamState
    epoch: int = 0
    iteration: int = 0
    critic_iteration: int = 0
    period: PeriodCache = field(default_factory=PeriodCache)

    def copy(self) -> "GanState":
        return GanState(self.generator.copy(), self.critic.copy(),
                        AdamState(self.generator_opt.m.copy(), self.generator_opt.v.copy(), self.generator_opt.step),
                        AdamState(self.critic_opt.m.copy(), self.critic_opt.v.copy(), self.critic_opt.step),
                        self.epoch, self.iteration, self.critic_iteration,
                        PeriodCache(**vars(self.period)))


def init_state(cfg: TrainConfig, rng: np.random.Generator) -> GanState:
    generator = ad.init_mlp(cfg.generator_spec(), rng)
    embedding = rng.standard_normal((cfg.num_classes, cfg.latent_dim))
    generator = ParameterSet({**dict(generator.items()), "embedding": embedding})
    critic = ad.init_mlp(cfg.critic_spec(), rng)
    return GanState(generator, critic, AdamState.zeros(generator), AdamState.zeros(critic))


def to_signed(images: np.ndarray) -> np.ndarray:
    """(n, H, W) {0,1} images -> (n, H*W) rows in {-1,+1}"""
    images = np.asarray(images, dtype=np.float64)
    return (2.0 * images - 1.0).reshape(images.shape[0], -1)


def binarize(values: np.ndarray) -> np.ndarray:
    return (np.asarray(values) > 0).astype(np.uint8)


class GanTrainer:
    """
    Alternates critic and generator updates over a labelled image set

    One critic step is taken per real batch; every n_critic critic steps are
    followed by one generator step, which also appends a metrics row.
    """

    def __init__(self, cfg: TrainConfig, state: Optional[GanState] = None):
        self.cfg = cfg
        self.g_spec = cfg.generator_spec()
        self.d_spec = cfg.critic_spec()
        self.rng = np.random.default_rng(cfg.seed)
        self.state = state if state is not None else init_state(cfg, self.rng)
        self.metrics: list[list] = []
        self._operators: dict[tuple[int, int], np.ndarray] = {}

    # -- sampling ---------------------------------------------------------
    def sample_fake(self, labels: np.ndarray) -> np.ndarray:
        z = self.rng.standard_normal((len(labels), self.cfg.latent_dim))
        return forward_generator(self.g_spec, self.state.generator, z, labels)

    # -- critic -----------------------------------------------------------
    def critic_step(self, real: np.ndarray, real_labels: np.ndarray, fake: np.ndarray) -> CriticLosses:
        """One critic update; the fake batch is a constant here"""
        cfg, w = self.cfg, self.cfg.weights
        c = cfg.num_classes
        tape = Tape()
        with tape:
            out_real, _ = ad.mlp_forward(self.d_spec, self.state.critic, real, tape=tape)
            out_fake, _ = ad.mlp_forward(self.d_spec, self.state.critic, fake, tape=tape)
            l_wd = ad.sub(ad.mean(ad.columns(out_fake, 0, 1)), ad.mean(ad.columns(out_real, 0, 1)))
            gp_value = 0.0
            if w.lambda_gp != 0:
                gp, _ = gradient_penalty(self.d_spec, self.state.critic, real, fake, w.lambda_gp, self.rng, tape)
                gp_value = _scalar(gp)
                l_wd = ad.add(l_wd, gp)
            l_cls = ad.cross_entropy(ad.columns(out_real, 1, 1 + c), real_labels)
            loss = _weighted_sum([(w.lambda_w, l_wd), (w.lambda_cls, l_cls)])
        losses = CriticLosses(_scalar(loss), _scalar(l_wd), _scalar(l_cls), gp_value)
        self._check_finite(losses.l_d, "critic loss")
        grads = ad.grad_params(tape, root=loss)
        self.state.critic, self.state.critic_opt = ad.adam_step(
            self.state.critic, grads, self.state.critic_opt, cfg.optimizer)
        self.state.critic_iteration += 1
        return losses

    # -- generator --------------------------------------------------------
    def _period(self, x_g: np.ndarray, needed: bool = True) -> PeriodCache:
        cfg, cache = self.cfg, self.state.period
        if cfg.disable_fft:
            if cfg.ground_truth_period is None:
                if not needed:
                    return cache
                raise ConfigurationError("disable_fft needs ground_truth_period")
            p_h, p_w = cfg.ground_truth_period
            return PeriodCache(p_h, p_w, True, self.state.iteration)
        if not needed:
            return cache
        stale = cache.refreshed_at is None or self.state.iteration - cache.refreshed_at >= cfg.fft_refresh_interval
        if stale:
            side = cfg.image_side
            estimate = estimate_batch(x_g.reshape(-1, side, side), cfg.peaks)
            cache = PeriodCache(estimate.p_h, estimate.p_w, estimate.valid, self.state.iteration)
            self.state.period = cache
        return cache

    def _blur_matrix(self, k: int) -> np.ndarray:
        key = (k, self.cfg.image_side)
        if key not in self._operators:
            self._operators[key] = blur_operator(self.cfg.image_side, BlurConfig.for_kernel(k), self.cfg.blur_boundary)
        return self._operators[key]

    def _recon_target(self, source: np.ndarray, p_h: int, p_w: int) -> np.ndarray:
        side = self.cfg.image_side
        targets = []
        for row in source.reshape(-1, side, side):
            if self.cfg.recon_mode == "majority":
                cell = reconstruct(binarize(row), p_h, p_w, "majority")
                targets.append(2.0 * cell - 1.0)
            else:
                targets.append(reconstruct(row, p_h, p_w, "median"))
        return np.stack(targets).reshape(source.shape[0], -1)

    def generator_step(self, labels: Optional[np.ndarray] = None) -> GeneratorLosses:
        """One generator + embedding update with the critic held fixed"""
        cfg, w = self.cfg, self.cfg.weights
        c, side = cfg.num_classes, cfg.image_side
        labels = self.rng.integers(c, size=cfg.batch_size) if labels is None else np.asarray(labels)
        z = self.rng.standard_normal((len(labels), cfg.latent_dim))
        recon_due = (self.state.epoch >= w.recon_start_epoch and not cfg.disable_recon and w.lambda_recon > 0)
        blur_on = not cfg.disable_blur and w.lambda_blur > 0

        tape = Tape()
        with tape:
            nodes = tape.watch(self.state.generator)
            cond = _condition_node(z, labels, nodes["embedding"])
            x_g, _ = ad.mlp_forward(self.g_spec, self.state.generator, cond, tape=tape)
            out, _ = ad.mlp_forward(self.d_spec, self.state.critic, x_g, tape=tape, trainable=False)
            l_w = ad.neg(ad.mean(ad.columns(out, 0, 1)))
            l_cls = ad.cross_entropy(ad.columns(out, 1, 1 + c), labels)

            # period only feeds the blur and reconstruction terms
            period = self._period(x_g.value, needed=blur_on or recon_due)
            k = blur_kernel_size(side, side, period.p_h, period.p_w)
            blurred = None
            l_blur = tape.constant(0.0)
            if blur_on:
                operator = self._blur_matrix(k)
                blurred = ad.bilinear(x_g, operator, operator)
                l_blur = ad.mean(ad.square(ad.sub(x_g, blurred)))

            l_recon = tape.constant(0.0)
            recon_applied = False
            if recon_due and period.valid:
                if cfg.recon_source == "blurred":
                    source = blurred.value if blurred is not None else np.stack(
                        [gaussian_blur(img, BlurConfig.for_kernel(k), cfg.blur_boundary).reshape(-1)
                         for img in x_g.value.reshape(-1, side, side)])
                else:
                    source = x_g.value
                target = ad.stop_gradient(self._recon_target(source, period.p_h, period.p_w))
                l_recon = ad.mean(ad.square(ad.sub(x_g, target)))
                recon_applied = True
            elif recon_due:
                logger.warning(f"[TRAIN] FFT estimate invalid at iteration {self.state.iteration}, "
                               f"reconstruction loss skipped")

            loss = _weighted_sum([(w.lambda_w, l_w), (w.lambda_cls, l_cls),
                                  (w.lambda_blur, l_blur), (w.lambda_recon, l_recon)])

        losses = GeneratorLosses(_scalar(loss), _scalar(l_w), _scalar(l_cls), _scalar(l_blur),
                                 _scalar(l_recon), period.p_h, period.p_w, k, recon_applied)
        self._check_finite(losses.l_g, "generator loss")
        grads = ad.grad_params(tape, root=loss)
        self.state.generator, self.state.generator_opt = ad.adam_step(
            self.state.generator, grads, self.state.generator_opt, cfg.optimizer)
        self.state.iteration += 1
        return losses

    def _check_finite(self, value: float, what: str) -> None:
        if not np.isfinite(value):
            raise TrainingDivergenceError(f"{what} is not finite", iteration=self.state.iteration)

    # -- loop -------------------------------------------------------------
    def _batches(self, n: int) -> list[np.ndarray]:
        order = self.rng.permutation(n)
        size = min(self.cfg.batch_size, n)
        batches = [order[i:i + size] for i in range(0, n, size)]
        return [b for b in batches if len(b) >= 2]

    def _budget_spent(self) -> bool:
        limit = self.cfg.max_generator_steps
        return limit is not None and self.state.iteration >= limit

    def fit(self, images: np.ndarray, labels: np.ndarray,
            out_dir: Optional[Union[str, Path]] = None) -> GanState:
        """
        Train for cfg.epochs epochs (or until max_generator_steps)

        Args:
            images: (n, H, W) binary training images
            labels: (n,) class labels
            out_dir: Receives checkpoints, metrics.csv and sample grids when given

        Returns:
            GanState: Final parameters and counters
        """
        cfg = self.cfg
        images = np.asarray(images)
        if images.ndim != 3 or images.shape[1:] != (cfg.image_side, cfg.image_side):
            raise ConfigurationError(f"training images have shape {images.shape[1:]}, "
                                     f"config expects {cfg.image_side}x{cfg.image_side}")
        if len(images) < 2:
            raise ConfigurationError("training needs at least two images")
        _check_labels(labels, cfg.num_classes)
        real_all = to_signed(images)
        labels = np.asarray(labels, dtype=np.int64)
        out_dir = Path(out_dir) if out_dir is not None else None
        logger.info(f"[TRAIN] {len(images)} images, {cfg.epochs} epochs, batch {cfg.batch_size}, "
                    f"flags fft={not cfg.disable_fft} blur={not cfg.disable_blur} recon={not cfg.disable_recon}")

        last_good = self.state.copy()
        try:
            while self.state.epoch < cfg.epochs and not self._budget_spent():
                epoch_rows = self._run_epoch(real_all, labels)
                self.state.epoch += 1
                last_good = self.state.copy()
                self._log_epoch(epoch_rows)
                if out_dir is not None:
                    self._epoch_artifacts(out_dir)
        except TrainingDivergenceError as e:
            iteration = self.state.iteration if e.iteration is None else e.iteration
            logger.error(f"[TRAIN] Divergence at iteration {iteration}: {e.detail}")
            self.state = last_good
            if out_dir is not None:
                self.save(out_dir / "checkpoint.json")
                self.write_metrics(out_dir / "metrics.csv")
            if e.iteration is None:
                raise TrainingDivergenceError(e.detail, iteration=iteration) from e
            raise

        if out_dir is not None:
            self.save(out_dir / "checkpoint.json")
            self.write_metrics(out_dir / "metrics.csv")
        return self.state

    def _run_epoch(self, real_all: np.ndarray, labels: np.ndarray) -> list[list]:
        cfg = self.cfg
        rows = []
        critic_losses = None
        for batch in self._batches(len(real_all)):
            fake_labels = self.rng.integers(cfg.num_classes, size=len(batch))
            fake = self.sample_fake(fake_labels)
            critic_losses = self.critic_step(real_all[batch], labels[batch], fake)
            if self.state.critic_iteration % cfg.weights.n_critic == 0:
                g = self.generator_step()
                row = [self.state.epoch, self.state.iteration, critic_losses.l_d, g.l_w, g.l_cls,
                       g.l_blur, g.l_recon, g.p_h, g.p_w, g.k]
                self.metrics.append(row)
                rows.append(row)
                if self._budget_spent():
                    break
        return rows

    def _log_epoch(self, rows: list[list]) -> None:
        if not rows:
            logger.info(f"[TRAIN] epoch {self.state.epoch}: no generator step")
            return
        last = rows[-1]
        logger.info(f"[TRAIN] epoch {self.state.epoch}: L_D={last[2]:.4f} L_W={last[3]:.4f} "
                    f"L_cls={last[4]:.4f} L_blur={last[5]:.4f} L_recon={last[6]:.4f} "
                    f"p=({last[7]},{last[8]}) k={last[9]} steps={self.state.iteration}")

    def _epoch_artifacts(self, out_dir: Path) -> None:
        cfg, epoch = self.cfg, self.state.epoch
        if cfg.sample_every_epochs and epoch % cfg.sample_every_epochs == 0:
            self.write_sample_grid(out_dir / "samples" / f"epoch_{epoch:04d}.pgm")
        if cfg.checkpoint_every_epochs and epoch % cfg.checkpoint_every_epochs == 0:
            self.save(out_dir / "checkpoints" / f"epoch_{epoch:04d}.json")

    def write_sample_grid(self, path: Path, per_class: int = 8) -> Path:
        """One row per class from a fixed latent draw so grids line up across epochs"""
        rng = np.random.default_rng([self.cfg.seed, 7])
        side = self.cfg.image_side
        images = []
        for label in range(self.cfg.num_classes):
            z = rng.standard_normal((per_class, self.cfg.latent_dim))
            x = forward_generator(self.g_spec, self.state.generator, z, np.full(per_class, label))
            images.extend(binarize(x).reshape(-1, side, side))
        return save_binary_pgm(path, image_grid(images, columns=per_class))

    def write_metrics(self, path: Union[str, Path]) -> Path:
        return write_csv(path, METRICS_HEADER, self.metrics)

    def checkpoint(self) -> GanCheckpoint:
        s = self.state
        return GanCheckpoint(
            config=self.cfg,
            generator=s.generator.to_dict(),
            critic=s.critic.to_dict(),
            generator_opt=s.generator_opt.to_dict() if self.cfg.checkpoint_optimizer else None,
            critic_opt=s.critic_opt.to_dict() if self.cfg.checkpoint_optimizer else None,
            seed=self.cfg.seed,
            epoch=s.epoch,
            iteration=s.iteration,
        )

    def save(self, path: Union[str, Path]) -> Path:
        return save_checkpoint(path, self.checkpoint())


# =====================================================
# 4. SAMPLING
# =====================================================
def forward_generator(spec: MlpSpec, generator: ParameterSet, z: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """Generator rows in [-1, 1] for conditioned latents"""
    cond = condition_latent(z, labels, generator["embedding"])
    out, _ = ad.mlp_forward(spec, generator, cond, trainable=False)
    return out.value


def load_gan(path: Union[str, Path]) -> tuple[TrainConfig, GanState]:
    checkpoint = load_checkpoint(path, GanCheckpoint)
    generator = ParameterSet.from_dict(checkpoint.generator)
    critic = ParameterSet.from_dict(checkpoint.critic)
    g_opt = AdamState.from_dict(checkpoint.generator_opt) if checkpoint.generator_opt else AdamState.zeros(generator)
    d_opt = AdamState.from_dict(checkpoint.critic_opt) if checkpoint.critic_opt else AdamState.zeros(critic)
    state = GanState(generator, critic, g_opt, d_opt, checkpoint.epoch, checkpoint.iteration)
    return checkpoint.config, state


def generate(cfg: TrainConfig, state: GanState, label: int, n: int, seed: int) -> np.ndarray:
    """
    n binary images of class `label`, deterministic per seed

    Returns:
        np.ndarray: (n, H, W) uint8 array of 0/1 pixels
    """
    _check_labels(np.array([label]), cfg.num_classes)
    side = cfg.image_side
    if n <= 0:
        return np.zeros((0, side, side), dtype=np.uint8)
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((n, cfg.latent_dim))
    x = forward_generator(cfg.generator_spec(), state.generator, z, np.full(n, label))
    return binarize(x).reshape(n, side, side)


def train(cfg: TrainConfig, images: np.ndarray, labels: np.ndarray,
          out_dir: Optional[Union[str, Path]] = None) -> GanTrainer:
    trainer = GanTrainer(cfg)
    trainer.fit(images, labels, out_dir)
    return trainer


def class_seed(seed: int, label: int) -> int:
    """Per-class sampling seed derived from a run seed"""
    return int(np.random.SeedSequence([seed, label]).generate_state(1)[0])


def generate_per_class(cfg: TrainConfig, state: GanState, n: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """n images of every class, seeded per class; returns (images, labels)"""
    images = [generate(cfg, state, label, n, class_seed(seed, label)) for label in range(cfg.num_classes)]
    labels = np.repeat(np.arange(cfg.num_classes), n)
    return np.concatenate(images), labels
