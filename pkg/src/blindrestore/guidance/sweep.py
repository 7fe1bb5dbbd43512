"""Gradient-scale sweeps: metrics table, per-scale images and a contact sheet."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from ..diffusion.schedule import NoiseSchedule
from ..imaging.io import save_image
from ..imaging.metrics import psnr
from ..numerics.tensor import ContractError
from .sampler import GuidanceSettings, guided_sample

CSV_FIELDS = ("scale", "d_latent", "psnr_vs_ireg", "psnr_vs_hq")


@dataclass
class SweepRow:
    scale: float
    image: np.ndarray  # first seed's I_diff
    d_latent: float  # averaged over seeds
    psnr_vs_ireg: float
    psnr_vs_hq: float | None = None


def check_scales(scales: Sequence[float]) -> list[float]:
    scales = [float(s) for s in scales]
    if not scales:
        raise ContractError("scale list is empty")
    bad = [s for s in scales if not np.isfinite(s) or s < 0]
    if bad:
        raise ContractError(f"scales must be finite and >= 0, got {bad}")
    return scales


def sweep_scale(model, codec, i_reg: np.ndarray, scales: Sequence[float], schedule: NoiseSchedule,
                seeds: Sequence[int], steps: int = 50, i_hq: np.ndarray | None = None,
                chain_through_zt: bool = False) -> list[SweepRow]:
    """One row per scale; every scale reuses the same seeds, all chains run as one batch."""
    scales = check_scales(scales)
    seeds = [int(s) for s in seeds]
    rows = []
    for s in scales:
        res = guided_sample(model, codec, i_reg, GuidanceSettings(s, steps, chain_through_zt), schedule, seeds)
        rows.append(SweepRow(
            scale=s,
            image=res.images[0],
            d_latent=float(np.mean(res.d_latent)),
            psnr_vs_ireg=float(np.mean([psnr(im, i_reg) for im in res.images])),
            psnr_vs_hq=None if i_hq is None else float(np.mean([psnr(im, i_hq) for im in res.images])),
        ))
    return rows


def contact_sheet(images: Sequence[np.ndarray], cols: int | None = None, pad: int = 2) -> np.ndarray:
    """Tile equally sized HxWxC images on a white background."""
    if not images:
        raise ContractError("no images to tile")
    h, w, c = images[0].shape
    cols = cols or len(images)
    rows = -(-len(images) // cols)
    sheet = np.ones((rows * h + (rows + 1) * pad, cols * w + (cols + 1) * pad, c), np.float32)
    for k, im in enumerate(images):
        r, q = divmod(k, cols)
        y, x = pad + r * (h + pad), pad + q * (w + pad)
        sheet[y:y + h, x:x + w] = im
    return sheet


def _fmt(v) -> str:
    return "" if v is None else repr(float(v))


def write_sweep(rows: Sequence[SweepRow], out_dir: str | Path, extra: Sequence[np.ndarray] = ()) -> list[Path]:
    """Per-scale PNGs, ``grid.png`` (optional ``extra`` tiles first) and ``sweep.csv``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for row in rows:
        p = out / f"scale_{row.scale:g}.png"
        save_image(row.image, p)
        written.append(p)
    grid = out / "grid.png"
    save_image(contact_sheet(list(extra) + [r.image for r in rows]), grid)
    written.append(grid)
    table = out / "sweep.csv"
    with open(table, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(CSV_FIELDS)
        for r in rows:
            wr.writerow([f"{r.scale:g}", _fmt(r.d_latent), _fmt(r.psnr_vs_ireg), _fmt(r.psnr_vs_hq)])
    written.append(table)
    return written
