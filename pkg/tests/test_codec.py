import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dmclab import codec, container
from dmclab.codec import CodecError, RefMode


def oracle_block_match(cur, ref, search_range):
    """Brute force: explicit clamped indexing, key (SAD, |dx|+|dy|, dy, dx)."""
    _, h, w = cur.shape
    cur = cur.astype(np.int64)
    ref = ref.astype(np.int64)
    out = np.zeros((2, h // 16, w // 16), dtype=np.int64)
    for by in range(h // 16):
        for bx in range(w // 16):
            block = cur[:, by * 16:(by + 1) * 16, bx * 16:(bx + 1) * 16]
            best = None
            for dy in range(-search_range, search_range + 1):
                rows = np.clip(np.arange(16) + by * 16 + dy, 0, h - 1)
                for dx in range(-search_range, search_range + 1):
                    cols = np.clip(np.arange(16) + bx * 16 + dx, 0, w - 1)
                    sad = int(np.abs(block - ref[:, rows][:, :, cols]).sum())
                    key = (sad, abs(dx) + abs(dy), dy, dx)
                    if best is None or key < best:
                        best = key
            out[:, by, bx] = best[3], best[2]
    return out


def random_frame(rng, h=64, w=64):
    return rng.integers(0, 256, (3, h, w), dtype=np.uint8)


def test_identical_frames_give_zero_field():
    rng = np.random.default_rng(1)
    f = random_frame(rng)
    assert not codec.block_match(f, f).any()


def test_uniform_frames_give_zero_field():
    f = np.full((3, 32, 48), 77, dtype=np.uint8)
    assert not codec.block_match(f, f.copy()).any()


def test_shifted_texture_recovers_translation():
    rng = np.random.default_rng(2)
    ref = random_frame(rng)
    cur = np.empty_like(ref)
    cur[:, :, 3:] = ref[:, :, :-3]  # content moves right by 3
    cur[:, :, :3] = ref[:, :, :1]
    mv = codec.block_match(cur, ref)
    expected = oracle_block_match(cur, ref, 16)
    np.testing.assert_array_equal(mv, expected)
    # interior macroblocks (not touching the left border)
    assert (mv[0][:, 1:] == -3).all() and (mv[1][:, 1:] == 0).all()


@pytest.mark.parametrize("seed", range(5))
def test_block_match_matches_oracle_on_low_entropy_frames(seed):
    # few grey levels -> many SAD ties, exercising the tie-break order
    rng = np.random.default_rng(seed)
    ref = rng.integers(0, 3, (3, 32, 32), dtype=np.uint8)
    cur = rng.integers(0, 3, (3, 32, 32), dtype=np.uint8)
    np.testing.assert_array_equal(codec.block_match(cur, ref, 4), oracle_block_match(cur, ref, 4))


def test_block_match_is_deterministic():
    rng = np.random.default_rng(3)
    a, b = random_frame(rng, 32, 32), random_frame(rng, 32, 32)
    np.testing.assert_array_equal(codec.block_match(a, b), codec.block_match(a, b))


def test_block_match_errors():
    a = np.zeros((3, 32, 32), np.uint8)
    with pytest.raises(CodecError):
        codec.block_match(a, np.zeros((3, 32, 48), np.uint8))
    with pytest.raises(CodecError):
        codec.block_match(np.zeros((3, 30, 32), np.uint8), np.zeros((3, 30, 32), np.uint8))
    with pytest.raises(CodecError):
        codec.block_match(a, a, -1)


def test_motion_compensate_identity_and_block_fetch():
    rng = np.random.default_rng(4)
    ref = random_frame(rng)
    zero = np.zeros((2, 4, 4), np.int32)
    np.testing.assert_array_equal(codec.motion_compensate(ref, zero), ref)
    mv = zero.copy()
    mv[0, 1, 1] = 16
    out = codec.motion_compensate(ref, mv)
    np.testing.assert_array_equal(out[:, 16:32, 16:32], ref[:, 16:32, 32:48])
    with pytest.raises(CodecError):
        codec.motion_compensate(ref, np.zeros((2, 3, 4), np.int32))


def test_motion_compensate_undoes_translation_in_interior():
    rng = np.random.default_rng(5)
    ref = random_frame(rng)
    cur = np.roll(ref, 3, axis=2)
    mv = np.zeros((2, 4, 4), np.int32)
    mv[0] = -3
    comp = codec.motion_compensate(ref, mv)
    np.testing.assert_array_equal(comp[:, :, 16:], cur[:, :, 16:])


def test_residual_examples():
    a = np.full((3, 16, 16), 255, np.uint8)
    b = np.zeros((3, 16, 16), np.uint8)
    assert not codec.compute_residual(a, a).any()
    assert (codec.compute_residual(a, b) == 255).all()
    rng = np.random.default_rng(6)
    cur, comp = random_frame(rng, 32, 32), random_frame(rng, 32, 32)
    r = codec.compute_residual(cur, comp)
    assert r.dtype == np.int16
    np.testing.assert_array_equal(comp.astype(np.int32) + r, cur)


def test_compensation_consistency():
    rng = np.random.default_rng(7)
    ref = random_frame(rng, 32, 32)
    cur = np.roll(ref, (2, -5), axis=(1, 2))
    cur[:, :4] = 9
    mv = codec.block_match(cur, ref)
    comp = codec.motion_compensate(ref, mv)
    np.testing.assert_array_equal(comp.astype(np.int16) + codec.compute_residual(cur, comp), cur)


def test_identical_frames_encode_to_zero_mv_and_residual():
    rng = np.random.default_rng(8)
    f = random_frame(rng, 32, 32)
    ev = codec.encode([f] * 12)
    assert len(ev.gops) == 1
    assert all(not mv.any() and not r.any() for mv, r in ev.gops[0].pframes)
    assert all(np.array_equal(x, f) for x in codec.decode(ev))


def test_gop_count():
    rng = np.random.default_rng(9)
    frames = [random_frame(rng, 16, 16) for _ in range(24)]
    ev = codec.encode(frames, search_range=2)
    assert len(ev.gops) == 2 and ev.num_frames == 24
    with pytest.raises(CodecError):
        codec.encode(frames[:13])


def _smooth_video(rng, n, h, w):
    base = rng.integers(0, 256, (3, h + 32, w + 32), dtype=np.uint8)
    frames = []
    for t in range(n):
        dy, dx = rng.integers(-3, 4, 2)
        f = np.roll(base, (t * dy, t * dx), axis=(1, 2))[:, 16:16 + h, 16:16 + w].copy()
        f[:, rng.integers(h), :] = rng.integers(0, 256)
        frames.append(f)
    return frames


@pytest.mark.parametrize("ref_mode", list(RefMode))
def test_round_trip_both_modes(ref_mode):
    rng = np.random.default_rng(10)
    frames = _smooth_video(rng, 12, 64, 64)
    ev = codec.encode(frames, ref_mode=ref_mode)
    out = codec.decode(ev)
    assert all(np.array_equal(a, b) for a, b in zip(frames, out))


def test_modes_decode_identically_but_differ_in_representation():
    rng = np.random.default_rng(11)
    frames = _smooth_video(rng, 12, 32, 32)
    a = codec.encode(frames, ref_mode=RefMode.IFRAME)
    b = codec.encode(frames, ref_mode=RefMode.PREVIOUS)
    for x, y in zip(codec.decode(a), codec.decode(b)):
        np.testing.assert_array_equal(x, y)
    assert any(not np.array_equal(ra, rb) for ra, rb in zip(a.residuals(), b.residuals()))


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1), mode=st.sampled_from(list(RefMode)),
       size=st.sampled_from([(16, 16), (16, 32), (32, 16)]))
def test_round_trip_property(seed, mode, size):
    rng = np.random.default_rng(seed)
    frames = [random_frame(rng, *size) for _ in range(4)]
    ev = codec.encode(frames, gop_p_count=3, search_range=3, ref_mode=mode)
    assert all(np.array_equal(a, b) for a, b in zip(frames, codec.decode(ev)))
    for r in ev.residuals():
        assert r.min() >= -255 and r.max() <= 255


def test_expand_mv():
    mv = np.array([[[2]], [[-1]]], dtype=np.int32)
    dense = codec.expand_mv(mv)
    assert dense.shape == (2, 16, 16)
    assert (dense[0] == -2).all() and (dense[1] == 1).all()
    assert not codec.expand_mv(np.zeros((2, 2, 3), np.int32)).any()


def test_expand_mv_is_blockwise_constant():
    rng = np.random.default_rng(12)
    mv = rng.integers(-16, 17, (2, 3, 5)).astype(np.int32)
    dense = codec.expand_mv(mv)
    for c in range(2):
        for y in range(48):
            for x in range(80):
                assert dense[c, y, x] == -mv[c, y // 16, x // 16]
    blocks = dense.reshape(2, 3, 16, 5, 16)
    assert np.all(blocks.std(axis=(2, 4)) == 0)


def test_container_round_trip(tmp_path):
    rng = np.random.default_rng(13)
    frames = _smooth_video(rng, 24, 32, 48)
    for mode in RefMode:
        ev = codec.encode(frames, ref_mode=mode, label=5)
        path = tmp_path / f"clip{int(mode)}.dmcv"
        container.save(path, ev)
        back = container.load(path)
        assert (back.width, back.height, back.label, back.ref_mode) == (48, 32, 5, mode)
        assert all(np.array_equal(a, b) for a, b in zip(frames, codec.decode(back)))
        assert container.dumps(back) == container.dumps(ev)


def test_container_header_layout():
    f = np.zeros((3, 16, 16), np.uint8)
    buf = container.dumps(codec.encode([f, f], gop_p_count=1))
    assert buf[:4] == b"DMCV"
    assert buf[4:6] == (1).to_bytes(2, "little")
    assert int.from_bytes(buf[6:8], "little") == 16
    assert buf[10] == 1 and buf[11] == 0
    assert int.from_bytes(buf[16:20], "little", signed=True) == -1
    assert len(buf) == 20 + 768 + 2 + 2 * 768


def test_container_rejects_garbage():
    f = np.zeros((3, 16, 16), np.uint8)
    buf = container.dumps(codec.encode([f, f], gop_p_count=1))
    with pytest.raises(CodecError):
        container.loads(b"XXXX" + buf[4:])
    with pytest.raises(CodecError):
        container.loads(buf[:-1])


def test_raw_clip_round_trip(tmp_path):
    rng = np.random.default_rng(14)
    frames = [random_frame(rng, 16, 32) for _ in range(3)]
    container.write_raw(tmp_path / "c.rgb", frames)
    back = container.read_raw(tmp_path / "c.rgb")
    assert all(np.array_equal(a, b) for a, b in zip(frames, back))
