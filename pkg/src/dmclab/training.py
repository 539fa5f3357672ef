"""Two-phase (plus adversarial) training schedule over synthetic clips."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from . import checkpoint
from .adversarial import Discriminator, train_step_d, train_step_g
from .batch import Batch
from .codec import expand_mv
from .generator import RESIDUAL_SCALE, Generator, build_generator
from .nn import Module
from .optim import Adam, plateau_lr
from .recognition import Classifier, build_classifier, loss_cls
from .tensor import NumericError, Tensor

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainSchedule:
    phase1_epochs: int = 1
    phase2_epochs: int = 49
    phase3_epochs: int = 20
    stream_epochs: int = 20
    alpha: float = 10.0
    lam: float = 1.0
    lr: float = 0.01
    cls_body_lr_mult: float = 0.01
    batch_size: int = 16
    betas: tuple[float, float] = (0.9, 0.999)
    samples_per_clip: int = 2
    d_steps_per_g: int = 1
    plateau_patience: int = 3
    plateau_delta: float = 1e-4
    lr_floor: float = 1e-5
    seed: int = 0

    def validate(self) -> None:
        if self.alpha < 0 or self.lam < 0:
            raise ValueError("alpha and lambda must be non-negative")
        for name in ("phase1_epochs", "phase2_epochs", "phase3_epochs", "stream_epochs"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if self.lr <= 0:
            raise ValueError("learning rate must be positive")
        if self.batch_size < 1 or self.samples_per_clip < 1 or self.d_steps_per_g < 1:
            raise ValueError("batch_size, samples_per_clip and d_steps_per_g must be >= 1")


@dataclass(frozen=True)
class LossFlags:
    use_cls: bool = True
    use_mse: bool = True
    use_adv: bool = True

    def validate(self) -> None:
        if not (self.use_cls or self.use_mse or self.use_adv):
            raise ValueError("at least one loss must be enabled")

    @property
    def tag(self) -> str:
        names = [n for n, on in (("cls", self.use_cls), ("mse", self.use_mse), ("adv", self.use_adv)) if on]
        return "+".join(names)


@dataclass
class Models:
    generator: Generator
    classifiers: dict[str, Classifier] = field(default_factory=dict)
    discriminator: Discriminator | None = None

    def modules(self) -> list[Module]:
        out = [self.generator, *self.classifiers.values()]
        if self.discriminator is not None:
            out.append(self.discriminator)
        return out

    def state_dict(self) -> dict[str, np.ndarray]:
        state = {}
        for m in self.modules():
            state.update(m.state_dict())
        return state

    def save(self, path) -> None:
        checkpoint.save(path, self.state_dict())

    @classmethod
    def from_state(cls, state: dict[str, np.ndarray]) -> "Models":
        gen = build_generator()
        gen.load_state_dict(state)
        classifiers = {}
        for name, arr in state.items():
            if name.startswith("cls.") and name.endswith(".fc.weight"):
                stream = name.split(".")[1]
                c = build_classifier(stream, arr.shape[0])
                c.load_state_dict(state)
                classifiers[stream] = c
        disc = None
        if "disc.fc.weight" in state:
            disc = Discriminator()
            disc.load_state_dict(state)
        return cls(gen, classifiers, disc)

    @classmethod
    def load(cls, path) -> "Models":
        return cls.from_state(checkpoint.load(path))


@dataclass
class TrainResult:
    models: Models
    history: list[dict] = field(default_factory=list)
    step_log: list[str] = field(default_factory=list)
    snapshots: dict[str, dict[str, np.ndarray]] = field(default_factory=dict)


# --- batch assembly ----------------------------------------------------------

def iframe_input(frame: np.ndarray) -> np.ndarray:
    return frame.astype(np.float32) / np.float32(127.5) - np.float32(1.0)


def residual_input(residual: np.ndarray) -> np.ndarray:
    return residual.astype(np.float32) / np.float32(RESIDUAL_SCALE)


class FrameIndex:
    """Flat index over every P-frame of a list of clips."""

    def __init__(self, clips):
        self.clips = clips
        self.refs = []  # (clip, gop, p)
        for ci, clip in enumerate(clips):
            for gi, gop in enumerate(clip.video.gops):
                for pi in range(len(gop.pframes)):
                    self.refs.append((ci, gi, pi))
        self.by_clip = {}
        for j, (ci, _, _) in enumerate(self.refs):
            self.by_clip.setdefault(ci, []).append(j)

    def has_flow(self) -> bool:
        return all(c.flows for c in self.clips)

    def batch(self, idx) -> Batch:
        mv, res, flow, labels, iframes = [], [], [], [], []
        with_flow = self.has_flow()
        for j in idx:
            ci, gi, pi = self.refs[j]
            clip = self.clips[ci]
            gop = clip.video.gops[gi]
            m, r = gop.pframes[pi]
            mv.append(expand_mv(m))
            res.append(residual_input(r))
            iframes.append(iframe_input(gop.iframe))
            labels.append(-1 if clip.label is None else clip.label)
            if with_flow:
                flow.append(clip.flows[gi * clip.video.gop_p_count + pi])
        return Batch(mv=np.stack(mv), residual=np.stack(res),
                     flow=np.stack(flow) if with_flow else None,
                     labels=np.array(labels), iframe=np.stack(iframes))

    def epoch_batches(self, rng: np.random.Generator, samples_per_clip: int, batch_size: int):
        picks = []
        for ci in range(len(self.clips)):
            frames = self.by_clip.get(ci, [])
            if frames:
                picks.extend(rng.choice(frames, samples_per_clip, replace=len(frames) < samples_per_clip))
        picks = np.array(picks)[rng.permutation(len(picks))]
        return [picks[i:i + batch_size] for i in range(0, len(picks), batch_size)]


def stream_input(batch: Batch, stream: str) -> np.ndarray:
    if stream == "I":
        return batch.iframe
    if stream == "MV":
        return batch.mv
    if stream == "R":
        return batch.residual
    raise ValueError(f"stream {stream!r} has no direct input")


# --- training --------------------------------------------------------------

def _epoch_rng(seed: int, phase: str, epoch: int) -> np.random.Generator:
    tag = sum(ord(ch) * 131 ** i for i, ch in enumerate(phase)) % (2 ** 31)
    return np.random.default_rng([seed, tag, epoch])


def _lr_for(schedule: TrainSchedule, phase_history: list[float]) -> float:
    return plateau_lr(schedule.lr, phase_history, schedule.plateau_patience,
                      schedule.plateau_delta, 0.1, schedule.lr_floor)


def train_stream_classifier(index: FrameIndex, stream: str, num_classes: int,
                            schedule: TrainSchedule, history: list | None = None) -> Classifier:
    """Independent classifier on one raw modality (I, MV or R)."""
    cls = build_classifier(stream, num_classes, seed=schedule.seed)
    opt = Adam(cls.parameters(), schedule.lr, schedule.betas)
    phase = f"stream.{stream}"
    losses_by_epoch = []
    for epoch in range(schedule.stream_epochs):
        opt.lr = _lr_for(schedule, losses_by_epoch)
        rng = _epoch_rng(schedule.seed, phase, epoch)
        epoch_losses = []
        for idx in index.epoch_batches(rng, schedule.samples_per_clip, schedule.batch_size):
            b = index.batch(idx)
            loss = loss_cls(cls(Tensor(stream_input(b, stream))), b.labels)
            opt.zero_grad()
            loss.backward()
            opt.step()
            epoch_losses.append(loss.item())
        mean = float(np.mean(epoch_losses))
        if not np.isfinite(mean):
            raise NumericError(f"{phase} epoch {epoch}: non-finite loss")
        losses_by_epoch.append(mean)
        if history is not None:
            history.append({"phase": phase, "epoch": epoch, "lr": opt.lr, "cls": mean, "total": mean})
        log.info("%s epoch %d loss %.4f lr %g", phase, epoch, mean, opt.lr)
    return cls


def _dmc_optimizer(gen, cls, schedule: TrainSchedule, train_cls: bool) -> Adam:
    params = dict(gen.parameters())
    mult = {}
    if train_cls:
        params.update(cls.parameters())
        mult = {name: schedule.cls_body_lr_mult for name in cls.body_names()}
    return Adam(params, schedule.lr, schedule.betas, multipliers=mult)


def train(dataset, schedule: TrainSchedule | None = None, flags: LossFlags | None = None,
          streams=("I", "MV", "R"), init_dmc_from_mv: bool = True) -> TrainResult:
    """Train the generator (and DMC classifier, discriminator) plus the raw
    stream classifiers. Deterministic given ``schedule.seed``.

    Phase 1 (``use_mse`` only): reconstruction loss, classifier frozen.
    Phase 2: classification + reconstruction, jointly.
    Phase 3 (``use_adv``): alternating discriminator / generator steps on the
    full objective.
    """
    schedule = schedule or TrainSchedule()
    flags = flags or LossFlags()
    schedule.validate()
    flags.validate()
    clips = getattr(dataset, "clips", dataset)
    if not clips:
        raise ValueError("dataset is empty")
    index = FrameIndex(clips)
    if (flags.use_mse or flags.use_adv) and not index.has_flow():
        raise ValueError("reconstruction/adversarial losses need ground-truth flow for every clip")
    if flags.use_cls and any(c.label is None for c in clips):
        raise ValueError("classification loss needs labelled clips")
    labels = [c.label for c in clips if c.label is not None]
    num_classes = max(labels) + 1 if labels else 1

    result = TrainResult(Models(build_generator(seed=schedule.seed)))
    models = result.models
    for stream in streams:
        models.classifiers[stream] = train_stream_classifier(index, stream, num_classes, schedule,
                                                             result.history)
    dmc_cls = build_classifier("DMC", num_classes, seed=schedule.seed)
    if init_dmc_from_mv and "MV" in models.classifiers:
        mv_state = models.classifiers["MV"].state_dict()
        dmc_cls.load_state_dict({k.replace("cls.MV.", "cls.DMC.", 1): v for k, v in mv_state.items()})
    models.classifiers["DMC"] = dmc_cls
    gen = models.generator
    if flags.use_adv:
        models.discriminator = Discriminator(seed=schedule.seed)
    disc = models.discriminator

    def run_phase(name, epochs, use_cls, use_mse, use_adv, train_cls):
        opt_g = _dmc_optimizer(gen, dmc_cls, schedule, train_cls)
        opt_d = Adam(disc.parameters(), schedule.lr, schedule.betas) if use_adv else None
        totals = []
        for epoch in range(epochs):
            lr = _lr_for(schedule, totals)
            opt_g.lr = lr
            if opt_d is not None:
                opt_d.lr = lr
            rng = _epoch_rng(schedule.seed, name, epoch)
            sums: dict[str, list[float]] = {}
            for idx in index.epoch_batches(rng, schedule.samples_per_clip, schedule.batch_size):
                b = index.batch(idx)
                dmc = None
                if use_adv:
                    # D steps do not touch the generator, so one forward pass
                    # serves every D step and the following G step.
                    dmc = gen(Tensor(b.mv), Tensor(b.residual))
                    for _ in range(schedule.d_steps_per_g):
                        sums.setdefault("adv_d", []).append(train_step_d(disc, gen, b, opt_d, dmc))
                        result.step_log.append("D")
                out = train_step_g(gen, dmc_cls, disc, b, opt_g, schedule.alpha, schedule.lam,
                                   use_cls, use_mse, use_adv, dmc)
                result.step_log.append("G")
                for k, v in out.items():
                    sums.setdefault(k, []).append(v)
            rec = {"phase": name, "epoch": epoch, "lr": lr}
            rec.update({k: float(np.mean(v)) for k, v in sums.items()})
            if not np.isfinite(rec["total"]):
                raise NumericError(f"{name} epoch {epoch}: non-finite loss")
            totals.append(rec["total"])
            result.history.append(rec)
            log.info("%s epoch %d %s", name, epoch,
                     " ".join(f"{k}={v:.4f}" for k, v in rec.items() if isinstance(v, float)))

    if flags.use_mse and schedule.phase1_epochs:
        run_phase("phase1", schedule.phase1_epochs, False, True, False, train_cls=False)
        result.snapshots["phase1"] = {k: v.copy() for k, v in models.state_dict().items()}
    if flags.use_cls or flags.use_mse:
        run_phase("phase2", schedule.phase2_epochs, flags.use_cls, flags.use_mse, False,
                  train_cls=flags.use_cls)
        result.snapshots["phase2"] = {k: v.copy() for k, v in models.state_dict().items()}
    if flags.use_adv:
        run_phase("phase3", schedule.phase3_epochs, flags.use_cls, flags.use_mse, True,
                  train_cls=flags.use_cls)
    return result


def run_manifest(schedule: TrainSchedule, flags: LossFlags, extra: dict | None = None) -> dict:
    items = {f"schedule.{k}": v for k, v in asdict(schedule).items()}
    items.update({f"flags.{k}": v for k, v in asdict(flags).items()})
    items["seed"] = schedule.seed
    items["alpha"] = schedule.alpha
    items["lambda"] = schedule.lam
    if extra:
        items.update(extra)
    return items
