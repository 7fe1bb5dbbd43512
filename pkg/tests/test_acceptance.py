"""Acceptance criteria 1-9.  Each test prints one ``criterion N: PASS|FAIL`` line.

Criteria 6-8 share one desk-scale pipeline run (default config, 64 images)
and take tens of minutes on one core; they carry the ``slow`` marker.
"""

import csv
import shutil
import time
from pathlib import Path

import numpy as np
import pytest

from conftest import fd_rel_error, weighted_sum
from blindrestore.cli import load_config, main
from blindrestore.cli.commands import load_restorer
from blindrestore.degradation import degrade_item, plan_for_item
from blindrestore.diffusion import (
    ConditionedDenoiser,
    Conditioner,
    Denoiser,
    IdentityCodec,
    forward_diffuse,
    make_schedule,
)
from blindrestore.guidance import GuidanceSettings, estimate_z0, guided_sample, latent_loss, unguided_sample
from blindrestore.imaging import DatasetSpec, psnr, save_image, ssim, synth_dataset, synth_image
from blindrestore.numerics import Adam, Parameter, SeededRng, Tensor, backward, conv2d
from blindrestore.numerics import functional as F
from blindrestore.numerics.checkpoint import read_loss_csv
from blindrestore.restoration import WindowAttention, restore_image, window_attention
from test_imaging import reference_ssim
from test_numerics import loop_conv

HELD_OUT_SEED = 999
HELD_OUT_DEGRADE_SEED = 12345
HELD_OUT_COUNT = 16
# gain measured on the first verified desk run (see the decisions ledger)
PINNED_GAIN_DB = 1.59


@pytest.fixture
def report(capsys):
    def emit(n, ok, detail, seconds):
        with capsys.disabled():
            print(f"\ncriterion {n}: {'PASS' if ok else 'FAIL'} - {detail} [{seconds:.1f}s]")
    return emit


# -- 1. degradation ranges -------------------------------------------------------------

# reference degradation intervals, written out here rather than imported
STANDARD = {
    1: dict(sigma=(0.2, 3.0), scale=(0.15, 1.5), gauss=(1.0, 30.0), poisson=(0.05, 3.0)),
    2: dict(sigma=(0.2, 1.5), scale=(0.3, 1.2), gauss=(1.0, 25.0), poisson=(0.05, 2.5)),
}


def _inside(v, lo, hi):
    return lo <= v <= hi


def plan_violations(plan, wide):
    bad = []
    for k, stage in ((1, plan.stage1), (2, plan.stage2)):
        r = STANDARD[k]
        b = stage.blur
        sig = (0.1, 12.0) if wide else r["sigma"]
        if b.kernel_size not in range(7, 22, 2):
            bad.append(f"stage{k} kernel {b.kernel_size}")
        for s in (b.sigma_x, b.sigma_y):
            if not _inside(s, *sig):
                bad.append(f"stage{k} sigma {s}")
        if not wide and not _inside(stage.resize.scale, *r["scale"]):
            bad.append(f"stage{k} scale {stage.resize.scale}")
        n = stage.noise
        if n.kind == "gaussian" and not _inside(n.gaussian_sigma, *r["gauss"]):
            bad.append(f"stage{k} gaussian {n.gaussian_sigma}")
        if n.kind == "poisson" and not _inside(n.poisson_scale, *r["poisson"]):
            bad.append(f"stage{k} poisson {n.poisson_scale}")
        if n.kind == "jpeg" and not _inside(n.jpeg_quality, 30, 95):
            bad.append(f"stage{k} jpeg {n.jpeg_quality}")
    if plan.final_jpeg is not None and not _inside(plan.final_jpeg.jpeg_quality, 30, 95):
        bad.append(f"jpeg {plan.final_jpeg.jpeg_quality}")
    if wide:
        net = plan.net_downsample
        if net is None or not _inside(net, 1.0, 12.0):
            bad.append(f"downsample {net}")
        elif abs(plan.stage1.resize.scale * plan.stage2.resize.scale * net - 1.0) > 1e-9:
            bad.append("stage scales do not compose to the net downsampling")
    return bad


def test_criterion_1_degradation_ranges(report):
    t0 = time.perf_counter()
    bad, max_sigma = [], 0.0
    for wide in (False, True):
        for i in range(10_000):
            p = plan_for_item(2024, i, wide)
            bad += plan_violations(p, wide)
            if wide:
                max_sigma = max(max_sigma, p.stage1.blur.sigma_x, p.stage1.blur.sigma_y,
                                p.stage2.blur.sigma_x, p.stage2.blur.sigma_y)
    dt = time.perf_counter() - t0
    ok = not bad and max_sigma > 3.0 and dt < 10
    report(1, ok, f"20000 plans, {len(bad)} out of range, wide max sigma {max_sigma:.2f}", dt)
    assert not bad, bad[:5]
    assert max_sigma > 3.0
    assert dt < 10


# -- 2. forward / clean-estimate inversion ------------------------------------------------

def test_criterion_2_oracle_inversion(report):
    t0 = time.perf_counter()
    sched = make_schedule()
    rng = np.random.default_rng(2)
    worst = 0.0
    for _ in range(100):
        t = int(rng.integers(1, 1001))
        z = rng.normal(size=(1, 3, 16, 16)).astype(np.float32)
        eps = rng.normal(size=z.shape).astype(np.float32)
        z_hat = estimate_z0(forward_diffuse(z, t, eps, sched), t, eps, sched)
        worst = max(worst, float(np.linalg.norm(z_hat - z) / np.linalg.norm(z)))
    dt = time.perf_counter() - t0
    report(2, worst <= 1e-3 and dt < 5, f"max relative error {worst:.2e} over 100 (z, t)", dt)
    assert worst <= 1e-3
    assert dt < 5


# -- 3. zero-initialized conditioner ------------------------------------------------------

def test_criterion_3_zero_init_noop(report):
    t0 = time.perf_counter()
    den = Denoiser(seed=3)
    model = ConditionedDenoiser(den, Conditioner(den, 3, seed=4))
    rng = np.random.default_rng(3)
    worst = 0.0
    for _ in range(10):
        z = rng.normal(size=(10, 3, 32, 32)).astype(np.float32)
        cond = rng.uniform(size=z.shape).astype(np.float32)
        ts = rng.integers(1, 1001, size=10)
        worst = max(worst, float(np.max(np.abs(model.predict_eps(z, ts, cond) - model.predict_eps(z, ts)))))
    dt = time.perf_counter() - t0
    report(3, worst == 0.0 and dt < 10, f"max |conditioned - base| = {worst} over 100 inputs", dt)
    assert worst == 0.0
    assert dt < 10


# -- 4. s = 0 degeneracy -------------------------------------------------------------------

def test_criterion_4_zero_scale_degeneracy(report):
    t0 = time.perf_counter()
    sched = make_schedule()
    den = Denoiser(seed=5)
    model = ConditionedDenoiser(den, Conditioner(den, 3, seed=6))
    i_reg = synth_image("mixed", 4, 0, 32)
    guided = guided_sample(model, IdentityCodec(), i_reg, GuidanceSettings(0.0, 50), sched, 99)
    plain = unguided_sample(model, IdentityCodec(), i_reg, 50, sched, 99)
    same = bool(np.array_equal(guided.z0, plain))
    dt = time.perf_counter() - t0
    report(4, same and dt < 30, f"50-step guided(s=0) == unguided bitwise: {same}", dt)
    assert same
    assert dt < 30


# -- 5. gradient suite ----------------------------------------------------------------------

def _layer_cases():
    """name -> builder(rng) returning (fn, arrays)."""

    def conv(rng):
        stride = int(rng.integers(1, 3))
        x, w, b = rng.normal(size=(2, 3, 6, 6)), rng.normal(size=(4, 3, 3, 3)) * 0.3, rng.normal(size=4)
        probe = rng.normal(size=conv2d(Tensor(x), Tensor(w), None, stride, 1).shape)
        return (lambda t: weighted_sum(conv2d(t[0], t[1], t[2], stride, 1), probe)), [x, w, b]

    def linear(rng):
        x, w, b = rng.normal(size=(3, 5)), rng.normal(size=(5, 4)), rng.normal(size=4)
        probe = rng.normal(size=(3, 4))
        return (lambda t: weighted_sum(F.linear(t[0], t[1], t[2]), probe)), [x, w, b]

    def layer_norm(rng):
        x, g, b = rng.normal(size=(4, 8)), rng.normal(size=8), rng.normal(size=8)
        probe = rng.normal(size=(4, 8))
        return (lambda t: weighted_sum(F.layer_norm(t[0], t[1], t[2]), probe)), [x, g, b]

    def group_norm(rng):
        x, g, b = rng.normal(size=(2, 4, 3, 3)), rng.normal(size=4), rng.normal(size=4)
        probe = rng.normal(size=x.shape)
        return (lambda t: weighted_sum(F.group_norm(t[0], 2, t[1], t[2]), probe)), [x, g, b]

    def softmax(rng):
        x, probe = rng.normal(size=(3, 6)), rng.normal(size=(3, 6))
        return (lambda t: weighted_sum(F.softmax(t[0], axis=-1), probe)), [x]

    def pointwise(fn):
        def build(rng):
            x, probe = rng.normal(size=(4, 5)) * 2, rng.normal(size=(4, 5))
            return (lambda t: weighted_sum(fn(t[0]), probe)), [x]
        return build

    def unshuffle(rng):
        x, probe = rng.normal(size=(1, 2, 4, 4)), rng.normal(size=(1, 8, 2, 2))
        return (lambda t: weighted_sum(F.pixel_unshuffle(t[0], 2), probe)), [x]

    def shuffle(rng):
        x, probe = rng.normal(size=(1, 8, 2, 2)), rng.normal(size=(1, 2, 4, 4))
        return (lambda t: weighted_sum(F.pixel_shuffle(t[0], 2), probe)), [x]

    def upsample(rng):
        x, probe = rng.normal(size=(1, 2, 3, 3)), rng.normal(size=(1, 2, 6, 6))
        return (lambda t: weighted_sum(F.upsample_nearest(t[0], 2), probe)), [x]

    def mse(rng):
        x, y = rng.normal(size=(2, 3, 4, 4)), rng.normal(size=(2, 3, 4, 4))
        return (lambda t: F.mse_loss(t[0], y)), [x]

    def attention(rng):
        attn = WindowAttention(8, 4, 2, SeededRng(int(rng.integers(0, 2**31))))
        x, probe = rng.normal(size=(1, 8, 8, 8)), rng.normal(size=(1, 8, 8, 8))
        shift = bool(rng.integers(0, 2))
        return (lambda t: weighted_sum(window_attention(t[0], attn, shift), probe)), [x]

    return {
        "conv2d": conv, "linear": linear, "layer_norm": layer_norm, "group_norm": group_norm,
        "softmax": softmax, "silu": pointwise(F.silu), "leaky_relu": pointwise(lambda x: F.leaky_relu(x, 0.2)),
        "gelu": pointwise(F.gelu), "pixel_unshuffle": unshuffle, "pixel_shuffle": shuffle,
        "upsample_nearest": upsample, "mse_loss": mse, "window_attention": attention,
    }


def _latent_loss_fd(rng):
    z0, ref = rng.normal(size=(1, 4, 4, 4)), rng.normal(size=(1, 4, 4, 4))
    _, grad = latent_loss(z0, ref)
    worst, h = 0.0, 1e-6
    flat = z0.reshape(-1)
    for j in rng.choice(flat.size, 8, replace=False):
        up, dn = flat.copy(), flat.copy()
        up[j] += h
        dn[j] -= h
        num = (latent_loss(up.reshape(z0.shape), ref)[0] - latent_loss(dn.reshape(z0.shape), ref)[0]) / (2 * h)
        ana = grad.reshape(-1)[j]
        worst = max(worst, abs(ana - num) / max(1.0, abs(ana), abs(num)))
    return worst


def test_criterion_5_gradient_suite(report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(5)
    worst = {}
    for name, build in _layer_cases().items():
        errs = []
        for _ in range(20):
            fn, arrays = build(rng)
            errs.append(fd_rel_error(fn, arrays, rng, coords=4))
        worst[name] = max(errs)
    eq6 = max(_latent_loss_fd(rng) for _ in range(20))
    dt = time.perf_counter() - t0
    layer_ok = all(v <= 1e-3 for v in worst.values())
    top = max(worst, key=worst.get)
    ok = layer_ok and eq6 <= 1e-4 and dt < 120
    report(5, ok, f"{len(worst)} layers x 20 trials, worst {top} {worst[top]:.1e}; latent loss {eq6:.1e}", dt)
    assert layer_ok, worst
    assert eq6 <= 1e-4
    assert dt < 120


# -- 6-8. desk-scale pipeline --------------------------------------------------------------

def _pipeline(root: Path) -> float:
    root.mkdir(parents=True, exist_ok=True)
    cfg = root / "run.ini"
    cfg.write_text("")
    t0 = time.perf_counter()
    assert main(["--config", str(cfg), "synth"]) == 0
    assert main(["--config", str(cfg), "degrade"]) == 0
    for stage in ("restore", "diffuse-pretrain", "diffuse-finetune"):
        assert main(["--config", str(cfg), "train", "--stage", stage]) == 0
    assert main(["--config", str(cfg), "restore", str(root / "data/lq/lq_0000.png"), "--scale", "200",
                 "--out", str(root / "outputs/lq_0000")]) == 0
    return time.perf_counter() - t0


def tree_bytes(root: Path) -> dict:
    return {p.relative_to(root): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


@pytest.fixture(scope="module")
def desk(tmp_path_factory):
    root = tmp_path_factory.mktemp("desk") / "run"
    seconds = _pipeline(root)
    # snapshot now: later criteria add files under root
    return root, seconds, tree_bytes(root)


def held_out_pairs(cfg):
    hq = synth_dataset(DatasetSpec(count=HELD_OUT_COUNT, seed=HELD_OUT_SEED))
    lq = [degrade_item(img, HELD_OUT_DEGRADE_SEED, i, cfg.wide_range)[0] for i, img in enumerate(hq)]
    return hq, lq


def decile_means(losses):
    k = max(1, len(losses) // 10)
    return float(np.mean(losses[:k])), float(np.mean(losses[-k:]))


@pytest.mark.slow
def test_criterion_6_desk_two_stage(desk, report):
    root, seconds, _ = desk
    cfg = load_config(root / "run.ini")
    net = load_restorer(cfg)
    hq, lq = held_out_pairs(cfg)
    base = float(np.mean([psnr(l, h) for l, h in zip(lq, hq)]))
    reg = float(np.mean([psnr(restore_image(net, l), h) for l, h in zip(lq, hq)]))
    gain = reg - base
    ft = read_loss_csv(root / "checkpoints/diffuse-finetune_loss.csv")
    first, last = decile_means(ft)
    ok = gain >= 3.0 and last < first and seconds < 1800 and len(ft) <= 2000
    report(6, ok, f"held-out PSNR LQ {base:.2f} -> I_reg {reg:.2f} dB (gain {gain:+.2f}, need +3.00); "
                  f"finetune loss decile {first:.4f} -> {last:.4f} over {len(ft)} its; pipeline {seconds / 60:.1f} min",
           seconds)
    assert last < first
    assert seconds < 1800
    assert gain >= 3.0


@pytest.mark.slow
def test_restoration_gain_matches_pinned_run(desk):
    root, _, _ = desk
    cfg = load_config(root / "run.ini")
    net = load_restorer(cfg)
    hq, lq = held_out_pairs(cfg)
    gain = np.mean([psnr(restore_image(net, l), h) - psnr(l, h) for l, h in zip(lq, hq)])
    assert abs(gain - PINNED_GAIN_DB) <= 0.5


@pytest.mark.slow
def test_criterion_7_fidelity_tradeoff(desk, report):
    root, _, _ = desk
    cfg_path = root / "run.ini"
    cfg = load_config(cfg_path)
    hq, lq = held_out_pairs(cfg)
    save_image(lq[0], root / "held_lq.png")
    save_image(hq[0], root / "held_hq.png")
    out = root / "sweep10"
    t0 = time.perf_counter()
    assert main(["--config", str(cfg_path), "sweep", str(root / "held_lq.png"), "--scales", "0,50,200,1000",
                 "--hq", str(root / "held_hq.png"), "--seeds", "--out", str(out)]) == 0
    dt = time.perf_counter() - t0
    with open(out / "sweep.csv") as fh:
        rows = list(csv.DictReader(fh))
    d = [float(r["d_latent"]) for r in rows]
    p = [float(r["psnr_vs_ireg"]) for r in rows]
    d_ok = all(a >= b for a, b in zip(d, d[1:]))
    p_ok = all(a <= b for a, b in zip(p, p[1:]))
    ok = d_ok and p_ok and dt < 1200
    report(7, ok, "10 seeds, s=0,50,200,1000: D_latent " + ", ".join(f"{v:.4g}" for v in d)
           + "; PSNR(I_diff, I_reg) " + ", ".join(f"{v:.2f}" for v in p), dt)
    assert d_ok, d
    assert p_ok, p
    assert dt < 1200


@pytest.mark.slow
def test_criterion_8_determinism(desk, report):
    root, seconds, first = desk
    shutil.move(root, root.with_name("run_first"))
    rerun = _pipeline(root)
    a, b = first, tree_bytes(root)
    diff = sorted(str(k) for k in set(a) | set(b) if a.get(k) != b.get(k))
    report(8, not diff, f"{len(a)} files compared after full rerun, {len(diff)} differ", seconds + rerun)
    assert not diff, diff[:10]


# -- 9. oracle equivalences ------------------------------------------------------------------

def reference_adam(x0, grad_fn, lr, steps, b1=0.9, b2=0.999, eps=1e-8):
    x, m, v = x0.astype(np.float64), 0.0, 0.0
    out = []
    for t in range(1, steps + 1):
        g = grad_fn(x)
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        x = x - lr * (m / (1 - b1**t)) / (np.sqrt(v / (1 - b2**t)) + eps)
        out.append(x.copy())
    return out


def test_criterion_9_oracle_equivalences(report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(9)
    x = rng.normal(size=(1, 2, 5, 5)).astype(np.float32)
    w = rng.normal(size=(3, 2, 3, 3)).astype(np.float32)
    conv_err = float(np.max(np.abs(conv2d(Tensor(x), Tensor(w), padding=1).data - loop_conv(x, w, np.zeros(3), 1, 1))))

    a = rng.uniform(size=(24, 20, 3))
    b = np.clip(a + rng.normal(0, 0.08, a.shape), 0, 1)
    ssim_err = abs(ssim(a, b) - reference_ssim(a, b))

    target = rng.normal(size=6)
    p = Parameter(rng.normal(size=6))
    start = p.data.copy()
    opt = Adam([("p", p)], lr=0.05)
    ours = []
    for _ in range(10):
        backward(((p - Tensor(target)) * (p - Tensor(target))).sum())
        opt.step()
        ours.append(p.data.astype(np.float64).copy())
    ref = reference_adam(start, lambda v: 2 * (v - target.astype(np.float32).astype(np.float64)), 0.05, 10)
    adam_err = max(float(np.max(np.abs(o - r))) for o, r in zip(ours, ref))
    dt = time.perf_counter() - t0
    ok = conv_err <= 1e-6 and ssim_err <= 1e-5 and adam_err <= 1e-6 and dt < 60
    report(9, ok, f"conv {conv_err:.1e} (<=1e-6), SSIM {ssim_err:.1e} (<=1e-5), Adam {adam_err:.1e} (<=1e-6)", dt)
    assert conv_err <= 1e-6
    assert ssim_err <= 1e-5
    assert adam_err <= 1e-6
    assert dt < 60
