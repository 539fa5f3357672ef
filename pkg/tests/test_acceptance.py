"""Acceptance checks, one test per criterion.

Each test records a one-line verdict that is printed in the terminal summary
(see conftest.py) and then asserts it. Expected values come from oracles
written here (brute-force search, hand MAC counts, closed-form logs, a
separate hashing routine) rather than from the code under test.
"""

import hashlib
import math
import time

import numpy as np
import pytest

from conftest import ACCEPTANCE
from test_codec import oracle_block_match

from dmclab import codec, flo
from dmclab.adversarial import (Discriminator, discriminator_forward, full_objective, loss_adv_d,
                                loss_adv_g, train_step_d, train_step_g)
from dmclab.batch import Batch
from dmclab.cli import main
from dmclab.generator import build_generator, count_macs
from dmclab.gradcheck import SUITE, run_suite
from dmclab.optim import Adam
from dmclab.recognition import build_classifier
from dmclab.tensor import Tensor, mse_loss


def verdict(n, ok, detail):
    ACCEPTANCE[n] = f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    assert ok, ACCEPTANCE[n]


def test_criterion_01_flops():
    expected = 0
    c = 5
    for co in (8, 8, 6, 4, 2, 2):
        expected += 224 * 224 * 3 * 3 * c * co
        c += co
    got = count_macs(height=224, width=224)
    verdict(1, got == expected == 228_501_504, f"generator MACs at 224x224 = {got:,} (expected 228,501,504)")


def test_criterion_02_architecture():
    gen = build_generator()
    ins = [l.in_channels for l in gen.layers]
    outs = [l.out_channels for l in gen.layers]
    geometry = {(l.kernel, l.stride, l.padding) for l in gen.layers}
    ok = ins == [5, 13, 21, 27, 31, 33] and outs == [8, 8, 6, 4, 2, 2] and geometry == {((3, 3), 1, 1)}
    verdict(2, ok, f"in {ins} out {outs} kernel/stride/pad {sorted(geometry)}")


def _random_video(rng, n, size):
    """Textured video with a random global drift and a few noisy rows."""
    base = rng.integers(0, 256, (3, size + 64, size + 64), dtype=np.uint8)
    vy, vx = rng.integers(-2, 3, 2)
    frames = []
    for t in range(n):
        f = np.roll(base, (t * vy, t * vx), axis=(1, 2))[:, 32:32 + size, 32:32 + size].copy()
        f[:, rng.integers(size), :] = rng.integers(0, 256, (3, 1))
        frames.append(f)
    return frames


def test_criterion_03_codec_round_trip():
    rng = np.random.default_rng(2024)
    t0 = time.perf_counter()
    videos = failures = 0
    for _ in range(100):
        size = int(rng.choice([32, 64]))
        length = int(rng.choice([12, 24]))
        frames = _random_video(rng, length, size)
        for mode in codec.RefMode:
            out = codec.decode(codec.encode(frames, ref_mode=mode))
            if len(out) != length or not all(np.array_equal(a, b) for a, b in zip(frames, out)):
                failures += 1
        videos += 1
    dt = time.perf_counter() - t0
    verdict(3, failures == 0 and dt < 60,
            f"{videos} videos x 2 ref modes, {failures} mismatches, {dt:.1f}s (limit 60s)")


def test_criterion_04_block_match_oracle():
    rng = np.random.default_rng(7)
    pairs = mismatches = 0
    for k in range(50):
        h, w = (16, 32) if k % 2 else (32, 32)
        levels = 3 if k % 3 == 0 else 256  # few grey levels force SAD ties
        ref = rng.integers(0, levels, (3, h, w), dtype=np.uint8)
        if k % 3 == 1:
            cur = np.roll(ref, tuple(rng.integers(-3, 4, 2)), axis=(1, 2))
        else:
            cur = rng.integers(0, levels, (3, h, w), dtype=np.uint8)
        r = int(rng.integers(1, 6))
        if not np.array_equal(codec.block_match(cur, ref, r), oracle_block_match(cur, ref, r)):
            mismatches += 1
        pairs += 1
    verdict(4, mismatches == 0, f"{pairs} frame pairs against exhaustive oracle, {mismatches} mismatches")


def test_criterion_05_gradient_suite():
    t0 = time.perf_counter()
    reports = run_suite(range(20), tolerance=1e-4, eps=1e-5)
    dt = time.perf_counter() - t0
    failed = [n for n, r in reports.items() if not r.passed]
    worst = max(r.max_rel_error for r in reports.values())
    composed = [n for n in SUITE if "+" in n]
    verdict(5, not failed and dt < 300 and len(composed) >= 3,
            f"{len(reports)} cases ({', '.join(composed)} composed) x 20 seeds, worst rel err {worst:.2e}, "
            f"failed {failed or 'none'}, {dt:.0f}s (limit 300s)")


def test_criterion_06_loss_identities():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(3, 2, 8, 8))
    mse_same = mse_loss(Tensor(x), Tensor(x.copy())).item()
    disc = Discriminator()
    disc.head_weight.data[:] = 0
    disc.head_bias.data[:] = 0
    _, p_dmc, _ = discriminator_forward(disc, Tensor(rng.normal(size=(4, 2, 32, 32))))
    _, p_flow, _ = discriminator_forward(disc, Tensor(rng.normal(size=(4, 2, 32, 32))))
    d = loss_adv_d(p_dmc, p_flow).item()
    g = loss_adv_g(p_dmc).item()
    total = full_objective(1.0, 0.5, 0.7, 10.0, 1.0)
    ok = (mse_same == 0.0 and abs(d - 2 * math.log(2)) <= 1e-6 and abs(g - math.log(2)) <= 1e-6
          and abs(total - 6.7) <= 1e-9)
    verdict(6, ok, f"mse(x,x)={mse_same} adv_D={d:.9f} (2ln2) adv_G={g:.9f} (ln2) total={total!r} (6.7)")


def test_criterion_07_shortcut_identity():
    gen = build_generator()
    rng = np.random.default_rng(11)
    exact = 0
    for _ in range(20):
        h, w = 16 * rng.integers(1, 5, 2)
        mv = rng.integers(-16, 17, (2, 2, h, w)).astype(np.float32)
        res = rng.uniform(-1, 1, (2, 3, h, w)).astype(np.float32)
        out = gen(Tensor(mv), Tensor(res)).data
        exact += int(out.dtype == mv.dtype and np.array_equal(out, mv))
    verdict(7, exact == 20, f"{exact}/20 random inputs give forward(mv, r) == mv exactly")


def _digest(module) -> str:
    h = hashlib.sha1()
    for name in sorted(module.parameters()):
        h.update(name.encode())
        h.update(np.ascontiguousarray(module.parameters()[name].data).tobytes())
    return h.hexdigest()


def test_criterion_08_alternation_isolation():
    rng = np.random.default_rng(5)
    gen, cls, disc = build_generator(seed=3), build_classifier("DMC", 4, seed=3), Discriminator(seed=3)
    gen.layers[-1].weight.data = rng.normal(0, 0.01, gen.layers[-1].weight.data.shape).astype(np.float32)
    opt_g = Adam({**gen.parameters(), **cls.parameters()}, 0.01)
    opt_d = Adam(disc.parameters(), 0.01)
    violations = []
    for step in range(10):
        b = Batch(mv=rng.integers(-3, 4, (4, 2, 32, 32)).astype(np.float32),
                  residual=rng.uniform(-1, 1, (4, 3, 32, 32)).astype(np.float32),
                  flow=rng.uniform(-3, 3, (4, 2, 32, 32)).astype(np.float32),
                  labels=rng.integers(0, 4, 4))
        before = [_digest(m) for m in (gen, cls, disc)]
        if step % 2 == 0:
            train_step_d(disc, gen, b, opt_d)
            after = [_digest(m) for m in (gen, cls, disc)]
            if after[:2] != before[:2] or after[2] == before[2]:
                violations.append(f"D step {step}")
        else:
            train_step_g(gen, cls, disc, b, opt_g)
            after = [_digest(m) for m in (gen, cls, disc)]
            if after[2] != before[2] or after[0] == before[0]:
                violations.append(f"G step {step}")
    verdict(8, not violations, f"10 alternating steps, violations: {violations or 'none'}")


@pytest.mark.slow
def test_criterion_09_desk_training():
    from dmclab.benchmark import run_benchmark

    res = run_benchmark(seeds=(0, 1, 2), ablation_seeds=(0, 1, 2))
    epe_dmc, epe_mv = res.epe()
    with_dmc, with_mv = res.fused("I+R+DMC"), res.fused("I+R+MV")
    abl = res.ablation()
    a = epe_dmc < epe_mv
    b = with_dmc - with_mv >= 0.05
    c_gate = abl["cls"] <= abl["cls+mse"] + 0.05
    c_report = abl["cls+mse"] <= abl["cls+mse+adv"] + 0.05
    fast = res.seconds < 1800
    detail = (f"(a) rot/zoom EPE dmc {epe_dmc:.3f} < mv {epe_mv:.3f}: {a}; "
              f"(b) fused I+R+DMC {with_dmc:.3f} vs I+R+MV {with_mv:.3f} (margin >= 0.05): {b}; "
              f"(c) DMC top-1 cls {abl['cls']:.3f} <= cls+mse {abl['cls+mse']:.3f}: {c_gate}, "
              f"<= cls+mse+adv {abl['cls+mse+adv']:.3f} (report only): {c_report}; "
              f"{res.seconds:.0f}s (limit 1800s)")
    verdict(9, a and b and c_gate and fast, detail)


def test_criterion_10_flo_round_trip(tmp_path):
    rng = np.random.default_rng(10)
    exact = 0
    for seed in range(20):
        h, w = (int(v) for v in rng.integers(1, 64, 2))
        field = rng.normal(0, 20, (2, h, w)).astype(np.float32)
        path = tmp_path / f"{seed}.flo"
        flo.write_flo(path, field)
        exact += int(flo.read_flo(path).tobytes() == field.tobytes())
    bad = tmp_path / "bad.flo"
    bad.write_bytes(b"XXXX" + path.read_bytes()[4:])
    try:
        flo.read_flo(bad)
        rejected = False
    except flo.FloError:
        rejected = True
    verdict(10, exact == 20 and rejected, f"{exact}/20 fields bit-exact, bad magic rejected: {rejected}")


def test_criterion_11_determinism(tmp_path):
    data = tmp_path / "data"
    assert main(["synth", "--classes", "3", "--clips", "2", "--size", "32", "--seed", "4", "--out", str(data)]) == 0
    outputs = []
    for run in ("a", "b"):
        out = tmp_path / run
        assert main(["train", "--data", str(data), "--out", str(out), "--seed", "9", "--phase1-epochs", "1",
                     "--phase2-epochs", "2", "--phase3-epochs", "1", "--stream-epochs", "1",
                     "--batch-size", "4"]) == 0
        assert main(["eval", "--checkpoint", str(out / "model.dmcw"), "--data", str(data),
                     "--out", str(out / "eval")]) == 0
        outputs.append({name: (out / name).read_bytes()
                        for name in ("model.dmcw", "history.txt", "eval/metrics.txt")})
    same = [k for k in outputs[0] if outputs[0][k] == outputs[1][k]]
    verdict(11, len(same) == 3, f"byte-identical across two seeded runs: {', '.join(same)}")
