"""Pipeline commands behind the ``blindrestore`` entry point."""

from __future__ import annotations

import hashlib
import sys
from pathlib import Path

import numpy as np

from ..degradation.ops import resize_to
from ..degradation.plan import degrade_item, plan_to_text
from ..diffusion.codec import TinyAutoencoder, make_codec, train_codec
from ..diffusion.schedule import make_schedule, spaced_steps
from ..diffusion.train import LatentSource, train_denoiser
from ..diffusion.unet import ConditionedDenoiser, Conditioner, Denoiser, UNetConfig
from ..guidance.sampler import GuidanceSettings, guided_sample
from ..guidance.sweep import check_scales, sweep_scale, write_sweep
from ..imaging.io import load_image, read_manifest, save_image, write_manifest
from ..imaging.synth import DatasetSpec, synth_dataset
from ..numerics.checkpoint import append_loss, load_checkpoint, read_loss_csv, save_checkpoint, write_loss_csv
from ..numerics.optim import Adam
from ..restoration.swinir import RestorationNet
from ..restoration.train import PairSource, TrainState, cosine_lr, restore_image, to_batch, train_restoration
from .config import WORKING_SIZE, ConfigError, RunConfig

STAGES = ("restore", "diffuse-pretrain", "diffuse-finetune")
PREREQUISITES = {
    "restore": (),
    "diffuse-pretrain": (),
    "diffuse-finetune": ("restore", "diffuse-pretrain"),
}


class DependencyError(RuntimeError):
    """A required earlier stage has not produced its checkpoint yet."""


def log(msg: str) -> None:
    print(msg, file=sys.stderr, flush=True)


def ckpt_path(cfg: RunConfig, stage: str) -> Path:
    return cfg.paths.checkpoints / f"{stage}.ckpt"


def loss_path(cfg: RunConfig, stage: str) -> Path:
    return cfg.paths.checkpoints / f"{stage}_loss.csv"


def require_stage(cfg: RunConfig, stage: str, needed_by: str) -> Path:
    p = ckpt_path(cfg, stage)
    if not p.is_file():
        raise DependencyError(f"{needed_by} needs the '{stage}' checkpoint ({p}); run `train --stage {stage}` first")
    return p


def run_manifest(out_dir: Path, cfg: RunConfig, command: str, files, extra: dict | None = None) -> None:
    """``manifest.txt`` lists outputs; ``run.ini`` holds everything needed to redo the run."""
    header = {"command": command, **(extra or {})}
    lines = [f"# {k} = {v}" for k, v in header.items()]
    rel = [Path(f).relative_to(out_dir) if Path(f).is_relative_to(out_dir) else Path(f) for f in files]
    (out_dir / "manifest.txt").write_text("".join(f"{ln}\n" for ln in lines))
    with open(out_dir / "manifest.txt", "a") as fh:
        fh.write("".join(f"{p}\n" for p in rel))
    (out_dir / "run.ini").write_text(cfg.to_ini())


def load_dataset(cfg: RunConfig, directory: Path) -> list[np.ndarray]:
    manifest = directory / "manifest.txt"
    if manifest.is_file():
        paths = read_manifest(manifest)
    else:
        paths = sorted(directory.glob("*.png")) if directory.is_dir() else []
    if not paths:
        raise FileNotFoundError(f"no input images found in {directory}")
    return [load_image(p) for p in paths]


# -- synth / degrade ---------------------------------------------------------

def cmd_synth(cfg: RunConfig, out: Path | None = None) -> Path:
    spec = DatasetSpec(cfg.synth.count, cfg.synth.size, cfg.synth.generator, cfg.seed)
    out = out or cfg.paths.dataset
    images = synth_dataset(spec)
    out.mkdir(parents=True, exist_ok=True)
    names = []
    for i, img in enumerate(images):
        p = out / f"hq_{i:04d}.png"
        save_image(img, p)
        names.append(p.name)
    write_manifest(names, out / "manifest.txt")
    (out / "run.ini").write_text(cfg.to_ini())
    log(f"wrote {len(images)} images to {out}")
    return out


def cmd_degrade(cfg: RunConfig, src: Path | None = None, out: Path | None = None) -> Path:
    src = src or cfg.paths.dataset
    out = out or cfg.paths.lq
    images = load_dataset(cfg, src)
    out.mkdir(parents=True, exist_ok=True)
    names = []
    for i, img in enumerate(images):
        lq, plan = degrade_item(img, cfg.seed, i, cfg.wide_range)
        save_image(lq, out / f"lq_{i:04d}.png")
        (out / f"lq_{i:04d}.plan.txt").write_text(plan_to_text(plan))
        names.append(f"lq_{i:04d}.png")
    write_manifest(names, out / "manifest.txt")
    (out / "run.ini").write_text(cfg.to_ini())
    log(f"degraded {len(images)} images into {out}")
    return out


# -- training ----------------------------------------------------------------

def _signature(items: dict) -> dict[str, str]:
    return {k: str(v) for k, v in items.items()}


def _check_resume(meta: dict[str, str], expected: dict[str, str], path: Path) -> None:
    diff = sorted(k for k in expected if meta.get(k) != expected[k])
    if diff:
        raise ConfigError(f"{path} was trained with different settings ({', '.join(diff)}); delete it to start over")


def _run_chunks(cfg_every: int, target: int, state: TrainState, step_chunk, save) -> None:
    while state.iteration < target:
        step_chunk(min(target, (state.iteration // cfg_every + 1) * cfg_every))
        save()


def _prepare_loss_csv(path: Path, state: TrainState) -> None:
    write_loss_csv(path, state.losses)


def train_restore_stage(cfg: RunConfig, stop_after: int | None = None) -> Path:
    r = cfg.restoration
    images = load_dataset(cfg, cfg.paths.dataset)
    net = RestorationNet(r.net, seed=cfg.seed)
    sig = _signature({"stage": "restore", "seed": cfg.seed, "lr": repr(r.lr), "batch": r.batch,
                      "lr_schedule": r.lr_schedule, "wide_range": cfg.wide_range,
                      "dataset": net_fp_dataset(images), **{f"net.{k}": v for k, v in r.net.as_dict().items()}})
    opt = Adam(net.named_parameters(), lr=r.lr)
    state = TrainState()
    path = ckpt_path(cfg, "restore")
    if path.is_file():
        meta, tensors = load_checkpoint(path)
        _check_resume(meta, sig, path)
        net.load_state_dict({k[4:]: v for k, v in tensors.items() if k.startswith("net.")})
        opt.load_state_arrays(tensors)
        state = TrainState(int(meta["iteration"]), _read_losses(loss_path(cfg, "restore"), int(meta["iteration"])))
        log(f"resuming restore at iteration {state.iteration}")
    source = PairSource(images, seed=cfg.seed, batch=r.batch, wide_range=cfg.wide_range, jobs=cfg.jobs)
    lr_at = cosine_lr(r.lr, r.iterations) if r.lr_schedule == "cosine" else None
    lpath = loss_path(cfg, "restore")
    _prepare_loss_csv(lpath, state)
    target = r.iterations if stop_after is None else min(r.iterations, state.iteration + stop_after)

    def chunk(upto):
        train_restoration(net, source, upto, optimizer=opt, state=state, lr_at=lr_at,
                          on_step=lambda it, v: append_loss(lpath, it, v))

    def save():
        tensors = {f"net.{k}": v for k, v in net.state_dict().items()}
        tensors.update(opt.state_arrays())
        save_checkpoint(path, {**sig, "iteration": state.iteration}, tensors)

    _run_chunks(r.checkpoint_every, target, state, chunk, save)
    if not path.is_file():
        save()
    _finish_stage(cfg, "restore", state)
    return path


def net_fp_dataset(images) -> str:
    h = hashlib.sha256()
    for im in images:
        h.update(np.ascontiguousarray(im, dtype=np.float32).tobytes())
    return h.hexdigest()[:16]


def _read_losses(path: Path, n: int) -> list[float]:
    if not path.is_file():
        return []
    return read_loss_csv(path)[:n]


def _finish_stage(cfg: RunConfig, stage: str, state: TrainState) -> None:
    d = cfg.paths.checkpoints
    files = sorted(p for p in d.iterdir() if p.suffix in (".ckpt", ".csv"))
    run_manifest(d, cfg, f"train --stage {stage}", files, {"iterations": state.iteration})
    if state.losses:
        log(f"{stage}: iteration {state.iteration}, loss {state.losses[0]:.5f} -> {state.losses[-1]:.5f}")


def load_restorer(cfg: RunConfig) -> RestorationNet:
    meta, tensors = load_checkpoint(require_stage(cfg, "restore", "this command"))
    net = RestorationNet(cfg.restoration.net, seed=cfg.seed)
    net.load_state_dict({k[4:]: v for k, v in tensors.items() if k.startswith("net.")})
    return net


def _unet_config(codec) -> UNetConfig:
    return UNetConfig(latent_channels=codec.latent_channels)


def _diffusion_sig(cfg: RunConfig, stage: str, images) -> dict[str, str]:
    d = cfg.diffusion
    return _signature({"stage": stage, "seed": cfg.seed, "lr": repr(d.lr), "batch": d.batch, "T": d.T,
                       "beta_start": repr(d.beta_start), "beta_end": repr(d.beta_end), "codec": d.codec,
                       "codec_iterations": d.codec_iterations, "wide_range": cfg.wide_range,
                       "dataset": net_fp_dataset(images)})


def load_pretrained(cfg: RunConfig, needed_by: str):
    """Codec and base denoiser from the diffuse-pretrain checkpoint."""
    _, tensors = load_checkpoint(require_stage(cfg, "diffuse-pretrain", needed_by))
    codec = make_codec(cfg.diffusion.codec, seed=cfg.seed)
    if isinstance(codec, TinyAutoencoder):
        codec.load_state_dict({k[6:]: v for k, v in tensors.items() if k.startswith("codec.")})
    den = Denoiser(_unet_config(codec), seed=cfg.seed)
    den.load_state_dict({k[9:]: v for k, v in tensors.items() if k.startswith("denoiser.")})
    return codec, den


def train_diffusion_stage(cfg: RunConfig, stage: str, stop_after: int | None = None) -> Path:
    for pre in PREREQUISITES[stage]:
        require_stage(cfg, pre, stage)
    d = cfg.diffusion
    images = load_dataset(cfg, cfg.paths.dataset)
    batch = to_batch(images)
    schedule = make_schedule(d.T, d.beta_start, d.beta_end)
    sig = _diffusion_sig(cfg, stage, images)
    path = ckpt_path(cfg, stage)
    lpath = loss_path(cfg, stage)
    resume = load_checkpoint(path) if path.is_file() else None
    if resume is not None:
        _check_resume(resume[0], sig, path)

    if stage == "diffuse-pretrain":
        codec = make_codec(d.codec, seed=cfg.seed)
        if isinstance(codec, TinyAutoencoder):
            if resume is not None:
                codec.load_state_dict({k[6:]: v for k, v in resume[1].items() if k.startswith("codec.")})
            else:
                train_codec(codec, batch, d.codec_iterations, d.batch, cfg.seed)
        denoiser = Denoiser(_unet_config(codec), seed=cfg.seed)
        conditioner = None
        trainable, key = denoiser, "denoiser."
        iterations, restorer = d.pretrain_iterations, None
    else:
        codec, denoiser = load_pretrained(cfg, stage)
        conditioner = Conditioner(denoiser, codec.latent_channels, seed=cfg.seed)
        trainable, key = conditioner, "conditioner."
        iterations, restorer = d.finetune_iterations, load_restorer(cfg)

    opt = Adam(trainable.named_parameters(), lr=d.lr)
    state = TrainState()
    if resume is not None:
        meta, tensors = resume
        trainable.load_state_dict({k[len(key):]: v for k, v in tensors.items() if k.startswith(key)})
        opt.load_state_arrays(tensors)
        state = TrainState(int(meta["iteration"]), _read_losses(lpath, int(meta["iteration"])))
        log(f"resuming {stage} at iteration {state.iteration}")
    source = LatentSource(batch, cfg.seed, d.batch, schedule, codec, restorer, cfg.wide_range, cfg.jobs)
    mode = "pretrain" if stage == "diffuse-pretrain" else "finetune"
    _prepare_loss_csv(lpath, state)
    target = iterations if stop_after is None else min(iterations, state.iteration + stop_after)

    def chunk(upto):
        train_denoiser(denoiser, conditioner, source, upto, mode=mode, optimizer=opt, state=state,
                       on_step=lambda it, v: append_loss(lpath, it, v))

    def save():
        tensors = {key + k: v for k, v in trainable.state_dict().items()}
        if isinstance(codec, TinyAutoencoder) and stage == "diffuse-pretrain":
            tensors.update({"codec." + k: v for k, v in codec.state_dict().items()})
        tensors.update(opt.state_arrays())
        save_checkpoint(path, {**sig, "iteration": state.iteration}, tensors)

    _run_chunks(d.checkpoint_every, target, state, chunk, save)
    if not path.is_file():
        save()
    _finish_stage(cfg, stage, state)
    return path


def cmd_train(cfg: RunConfig, stage: str, stop_after: int | None = None) -> Path:
    if stage not in STAGES:
        raise ConfigError(f"unknown stage {stage!r}; expected one of {STAGES}")
    for pre in PREREQUISITES[stage]:
        require_stage(cfg, pre, stage)
    if stage == "restore":
        return train_restore_stage(cfg, stop_after)
    return train_diffusion_stage(cfg, stage, stop_after)


# -- inference ---------------------------------------------------------------

class Pipeline:
    """All trained stages, ready for inference."""

    def __init__(self, cfg: RunConfig, needed_by: str):
        for stage in STAGES:
            require_stage(cfg, stage, needed_by)
        self.cfg = cfg
        self.restorer = load_restorer(cfg)
        self.codec, denoiser = load_pretrained(cfg, needed_by)
        _, tensors = load_checkpoint(ckpt_path(cfg, "diffuse-finetune"))
        cond = Conditioner(denoiser, self.codec.latent_channels, seed=cfg.seed)
        cond.load_state_dict({k[12:]: v for k, v in tensors.items() if k.startswith("conditioner.")})
        self.model = ConditionedDenoiser(denoiser, cond)
        d = cfg.diffusion
        self.schedule = make_schedule(d.T, d.beta_start, d.beta_end)

    def working_frame(self, lq: np.ndarray):
        """Upscale so the short side reaches the working size and pad to the model multiple."""
        h, w = lq.shape[:2]
        if min(h, w) < WORKING_SIZE:
            k = WORKING_SIZE / min(h, w)
            size = (max(WORKING_SIZE, round(h * k)), max(WORKING_SIZE, round(w * k)))
            lq = resize_to(lq, size, "bicubic")
        return lq, (h, w)

    def padded(self, img: np.ndarray) -> np.ndarray:
        m = 4 * max(1, getattr(self.codec, "factor", 1))
        h, w = img.shape[:2]
        ph, pw = -h % m, -w % m
        return np.pad(img, ((0, ph), (0, pw), (0, 0)), mode="reflect") if ph or pw else img

    def restore(self, lq: np.ndarray, scale: float, seeds) -> tuple[np.ndarray, list[np.ndarray], object]:
        work, orig = self.working_frame(lq)
        i_reg = restore_image(self.restorer, work)
        res = guided_sample(self.model, self.codec, self.padded(i_reg),
                            GuidanceSettings(scale, self.cfg.diffusion.steps, self.cfg.guidance.chain_through_zt),
                            self.schedule, seeds)
        h, w = work.shape[:2]
        diffs = [self.back(im[:h, :w], orig) for im in res.images]
        return self.back(i_reg, orig), diffs, res

    @staticmethod
    def back(img: np.ndarray, size) -> np.ndarray:
        if img.shape[:2] == tuple(size):
            return img
        return resize_to(img, size, "bicubic")


def _sampler_info(cfg: RunConfig, seeds, scale=None) -> dict:
    d = cfg.diffusion
    info = {"seed": cfg.seed, "chain_seeds": ",".join(str(s) for s in seeds),
            "schedule": f"linear T={d.T} beta=[{d.beta_start!r},{d.beta_end!r}]",
            "steps": d.steps, "step_list": ",".join(map(str, spaced_steps(d.T, d.steps))),
            "codec": d.codec, "chain_through_zt": cfg.guidance.chain_through_zt}
    if scale is not None:
        info["scale"] = repr(float(scale))
    return info


def _check_input(lq: np.ndarray, path: Path) -> None:
    if lq.shape[2] != 3:
        raise ConfigError(f"{path}: expected an RGB image")


def cmd_restore(cfg: RunConfig, lq_path: Path, scale: float | None = None, out: Path | None = None) -> Path:
    scale = cfg.guidance.scale if scale is None else scale
    check_scales([scale])
    pipe = Pipeline(cfg, "restore")
    lq = load_image(lq_path)
    _check_input(lq, lq_path)
    out = out or cfg.paths.outputs / Path(lq_path).stem
    i_reg, diffs, _ = pipe.restore(lq, scale, [cfg.seed])
    out.mkdir(parents=True, exist_ok=True)
    save_image(i_reg, out / "i_reg.png")
    save_image(diffs[0], out / "i_diff.png")
    run_manifest(out, cfg, "restore", [out / "i_reg.png", out / "i_diff.png"],
                 {"input": Path(lq_path), **_sampler_info(cfg, [cfg.seed], scale)})
    log(f"wrote {out / 'i_reg.png'} and {out / 'i_diff.png'}")
    return out


def sweep_seeds(cfg: RunConfig, many: bool) -> list[int]:
    n = cfg.guidance.sweep_seeds if many else 1
    return [(cfg.seed + k) & ((1 << 64) - 1) for k in range(n)]


def cmd_sweep(cfg: RunConfig, lq_path: Path, scales=None, hq_path: Path | None = None,
              out: Path | None = None, many_seeds: bool = False) -> Path:
    scales = check_scales(cfg.guidance.scales if scales is None else scales)
    pipe = Pipeline(cfg, "sweep")
    lq = load_image(lq_path)
    _check_input(lq, lq_path)
    hq = load_image(hq_path) if hq_path is not None else None
    out = out or cfg.paths.outputs / f"{Path(lq_path).stem}_sweep"
    work, orig = pipe.working_frame(lq)
    i_reg = restore_image(pipe.restorer, work)
    seeds = sweep_seeds(cfg, many_seeds)
    ref = pipe.padded(i_reg)
    h, w = work.shape[:2]
    hq_work = None if hq is None else pipe.padded(pipe.working_frame(hq)[0])
    rows = sweep_scale(pipe.model, pipe.codec, ref, scales, pipe.schedule, seeds, cfg.diffusion.steps,
                       hq_work, cfg.guidance.chain_through_zt)
    for r in rows:
        r.image = pipe.back(r.image[:h, :w], orig)
    files = write_sweep(rows, out, extra=[pipe.back(i_reg, orig)])
    run_manifest(out, cfg, "sweep", files,
                 {"input": Path(lq_path), "scales": ",".join(repr(s) for s in scales),
                  **_sampler_info(cfg, seeds)})
    log(f"wrote {len(rows)} sweep rows to {out}")
    return out


__all__ = [
    "DependencyError",
    "Pipeline",
    "STAGES",
    "cmd_degrade",
    "cmd_restore",
    "cmd_sweep",
    "cmd_synth",
    "cmd_train",
]
