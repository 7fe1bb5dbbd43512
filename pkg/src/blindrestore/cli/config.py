"""INI run configuration.

Every key has a default, so an empty file (or no file) is a valid config.
Relative paths resolve against the config file's directory, or the current
directory when no file is given.

    [run]          seed, jobs
    [paths]        dataset, lq, checkpoints, outputs
    [synth]        count, size, generator
    [degradation]  mode = standard | wide
    [restoration]  iterations, batch, lr, lr_schedule, checkpoint_every,
                   plus the network shape keys of RestorationConfig
    [diffusion]    T, beta_start, beta_end, codec, codec_iterations, steps,
                   pretrain_iterations, finetune_iterations, batch, lr,
                   checkpoint_every
    [guidance]     scale, scales, sweep_seeds, chain_through_zt
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from ..diffusion.codec import CODEC_KINDS
from ..restoration.swinir import RestorationConfig

U64 = (1 << 64) - 1
WORKING_SIZE = 32


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class Paths:
    dataset: Path = Path("data/hq")
    lq: Path = Path("data/lq")
    checkpoints: Path = Path("checkpoints")
    outputs: Path = Path("outputs")


@dataclass(frozen=True)
class SynthSection:
    count: int = 64
    size: int = WORKING_SIZE
    generator: str = "mixed"


@dataclass(frozen=True)
class RestorationSection:
    iterations: int = 2000
    batch: int = 16
    lr: float = 2e-3
    lr_schedule: str = "cosine"
    checkpoint_every: int = 100
    net: RestorationConfig = field(default_factory=RestorationConfig)


@dataclass(frozen=True)
class DiffusionSection:
    T: int = 1000
    beta_start: float = 1e-4
    beta_end: float = 0.02
    codec: str = "identity"
    codec_iterations: int = 500
    steps: int = 50
    pretrain_iterations: int = 1000
    finetune_iterations: int = 1000
    batch: int = 8
    lr: float = 1e-3
    checkpoint_every: int = 100


@dataclass(frozen=True)
class GuidanceSection:
    scale: float = 0.0
    scales: tuple[float, ...] = (0.0, 50.0, 200.0, 1000.0)
    sweep_seeds: int = 10
    chain_through_zt: bool = False


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    jobs: int = 1
    wide_range: bool = False
    paths: Paths = field(default_factory=Paths)
    synth: SynthSection = field(default_factory=SynthSection)
    restoration: RestorationSection = field(default_factory=RestorationSection)
    diffusion: DiffusionSection = field(default_factory=DiffusionSection)
    guidance: GuidanceSection = field(default_factory=GuidanceSection)

    def validate(self) -> "RunConfig":
        if not 0 <= self.seed <= U64:
            raise ConfigError(f"seed must be an unsigned 64-bit integer, got {self.seed}")
        if self.jobs < 1:
            raise ConfigError("jobs must be >= 1")
        if self.synth.count < 1:
            raise ConfigError(f"synth count must be >= 1, got {self.synth.count}")
        if self.synth.size < 8 or self.synth.size % 8:
            raise ConfigError(f"synth size must be a positive multiple of 8, got {self.synth.size}")
        r, d = self.restoration, self.diffusion
        for name, v in (("restoration.iterations", r.iterations), ("diffusion.pretrain_iterations", d.pretrain_iterations),
                        ("diffusion.finetune_iterations", d.finetune_iterations), ("diffusion.codec_iterations", d.codec_iterations)):
            if v < 0:
                raise ConfigError(f"{name} must be >= 0")
        for name, v in (("restoration.batch", r.batch), ("diffusion.batch", d.batch),
                        ("restoration.checkpoint_every", r.checkpoint_every),
                        ("diffusion.checkpoint_every", d.checkpoint_every)):
            if v < 1:
                raise ConfigError(f"{name} must be >= 1")
        if r.lr_schedule not in ("constant", "cosine"):
            raise ConfigError(f"unknown lr_schedule {r.lr_schedule!r}")
        if d.codec not in CODEC_KINDS:
            raise ConfigError(f"unknown codec {d.codec!r}; expected one of {CODEC_KINDS}")
        if not 1 <= d.steps <= d.T:
            raise ConfigError(f"diffusion steps must lie in 1..{d.T}")
        if self.guidance.sweep_seeds < 1:
            raise ConfigError("sweep_seeds must be >= 1")
        return self

    def to_ini(self) -> str:
        """Fully resolved config in the same grammar the loader reads."""
        cp = configparser.ConfigParser()
        cp["run"] = {"seed": str(self.seed), "jobs": str(self.jobs)}
        cp["paths"] = {f.name: str(getattr(self.paths, f.name)) for f in fields(Paths)}
        cp["synth"] = _section_dict(self.synth)
        cp["degradation"] = {"mode": "wide" if self.wide_range else "standard"}
        rest = {k: v for k, v in _section_dict(self.restoration).items() if k != "net"}
        rest.update(_section_dict(self.restoration.net))
        cp["restoration"] = rest
        cp["diffusion"] = _section_dict(self.diffusion)
        g = _section_dict(self.guidance)
        g["scales"] = ",".join(repr(s) for s in self.guidance.scales)
        cp["guidance"] = g
        lines = []
        for sec in cp.sections():
            lines.append(f"[{sec}]")
            lines.extend(f"{k} = {v}" for k, v in cp[sec].items())
            lines.append("")
        return "\n".join(lines)


def _section_dict(obj) -> dict[str, str]:
    return {f.name: repr(getattr(obj, f.name)) if isinstance(getattr(obj, f.name), float)
            else str(getattr(obj, f.name)) for f in fields(obj)}


def parse_scales(text: str) -> tuple[float, ...]:
    parts = [p.strip() for p in str(text).split(",") if p.strip()]
    if not parts:
        raise ConfigError("scale list is empty")
    try:
        vals = tuple(float(p) for p in parts)
    except ValueError as exc:
        raise ConfigError(f"bad scale list {text!r}") from exc
    if any(v < 0 or v != v or v == float("inf") for v in vals):
        raise ConfigError(f"scales must be finite and >= 0, got {text!r}")
    return vals


def _coerce(section: str, key: str, raw: str, default):
    try:
        if isinstance(default, bool):
            low = raw.strip().lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(raw)
            return low in ("true", "1", "yes")
        if isinstance(default, int):
            return int(raw, 0)
        if isinstance(default, float):
            return float(raw)
        if isinstance(default, Path):
            return Path(raw)
        return raw.strip()
    except ValueError as exc:
        raise ConfigError(f"[{section}] {key}: cannot parse {raw!r}") from exc


def _apply(section: str, obj, items: dict[str, str], skip=()):
    known = {f.name for f in fields(obj)} - set(skip)
    updates = {}
    for k, raw in items.items():
        if k not in known:
            continue
        updates[k] = _coerce(section, k, raw, getattr(obj, k))
    return replace(obj, **updates), {k: v for k, v in items.items() if k not in known}


def load_config(path: str | Path | None) -> RunConfig:
    base = Path.cwd()
    cp = configparser.ConfigParser()
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        try:
            cp.read_string(path.read_text(), source=str(path))
        except configparser.Error as exc:
            raise ConfigError(f"{path}: {exc}") from exc
        base = path.resolve().parent
    allowed = {"run", "paths", "synth", "degradation", "restoration", "diffusion", "guidance"}
    unknown = set(cp.sections()) - allowed
    if unknown:
        raise ConfigError(f"unknown config sections: {sorted(unknown)}")

    def sec(name):
        return dict(cp[name]) if cp.has_section(name) else {}

    cfg = RunConfig()
    run = sec("run")
    seed = _coerce("run", "seed", run.pop("seed", "0"), 0)
    jobs = _coerce("run", "jobs", run.pop("jobs", "1"), 1)
    _reject("run", run)
    paths, rest = _apply("paths", cfg.paths, sec("paths"))
    _reject("paths", rest)
    paths = replace(paths, **{f.name: base / getattr(paths, f.name) for f in fields(Paths)})
    synth, rest = _apply("synth", cfg.synth, sec("synth"))
    _reject("synth", rest)
    deg = sec("degradation")
    mode = deg.pop("mode", "standard").strip()
    _reject("degradation", deg)
    if mode not in ("standard", "wide"):
        raise ConfigError(f"[degradation] mode must be standard or wide, got {mode!r}")
    restoration, rest = _apply("restoration", cfg.restoration, sec("restoration"), skip=("net",))
    try:
        net, rest = _apply("restoration", restoration.net, rest)
    except Exception as exc:
        raise ConfigError(f"[restoration] {exc}") from exc
    _reject("restoration", rest)
    restoration = replace(restoration, net=net)
    diffusion, rest = _apply("diffusion", cfg.diffusion, sec("diffusion"))
    _reject("diffusion", rest)
    g = sec("guidance")
    scales = parse_scales(g.pop("scales")) if "scales" in g else cfg.guidance.scales
    guidance, rest = _apply("guidance", cfg.guidance, g, skip=("scales",))
    _reject("guidance", rest)
    guidance = replace(guidance, scales=scales)
    return RunConfig(seed, jobs, mode == "wide", paths, synth, restoration, diffusion, guidance).validate()


def _reject(section: str, leftover: dict) -> None:
    if leftover:
        raise ConfigError(f"[{section}] unknown keys: {sorted(leftover)}")
