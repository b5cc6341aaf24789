import logging

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import moving_track, naive_dft3
from movi.errors import ShapeError
from movi.latent import FrequencyFilter, RngStream, fft3, make_lowpass_filter
from movi.noise import (
    ShiftSequence,
    compose_scene_noise,
    frequency_reinit,
    inject_objects,
    latent_grid,
    latent_rects,
    local_noise_inject,
    local_patch_shape,
    noise_flow,
    overlap_cells,
    rasterize_masks,
    trajectory_shifts,
)
from movi.trajectory import BoxTrack, ScenePlan

LAT = (40, 64)


def test_latent_grid_default():
    assert latent_grid((512, 320)) == LAT


def test_reinit_all_pass_and_self_mix():
    z = RngStream(0, "z").normal((4, 2, 6, 6))
    eta = RngStream(0, "eta").normal((4, 2, 6, 6))
    ones = make_lowpass_filter((4, 6, 6), "ideal", 1.0, 1.0)
    assert np.allclose(frequency_reinit(z, eta, ones), z, atol=1e-12)
    h = make_lowpass_filter((4, 6, 6), "gaussian", 0.3, 0.5)
    assert np.allclose(frequency_reinit(z, z, h), z, atol=1e-12)


def test_reinit_dc_only_oracle():
    z = RngStream(1, "z").normal((2, 1, 2, 2))
    eta = RngStream(1, "eta").normal((2, 1, 2, 2))
    values = np.zeros((2, 2, 2))
    values[1, 1, 1] = 1.0  # centered DC
    out = frequency_reinit(z, eta, FrequencyFilter(values, "custom", 1.0, 1.0))

    # oracle: naive DFT, keep bin 0 of z and bins != 0 of eta, naive inverse
    zs, es = naive_dft3(z), naive_dft3(eta)
    mixed = es.copy()
    mixed[0, :, 0, 0] = zs[0, :, 0, 0]
    oracle = naive_dft3(mixed, inverse=True).real
    assert np.allclose(out, oracle, atol=1e-12)
    assert np.allclose(out, z.mean() + (eta - eta.mean()), atol=1e-12)


def test_reinit_shape_mismatch():
    h = make_lowpass_filter((2, 2, 2))
    with pytest.raises(ShapeError):
        frequency_reinit(np.zeros((2, 1, 2, 2)), np.zeros((2, 2, 2, 2)), h)


def test_reinit_ideal_idempotent():
    z = RngStream(2, "z").normal((8, 2, 8, 8))
    eta = RngStream(2, "eta").normal((8, 2, 8, 8))
    h = make_lowpass_filter((8, 8, 8), "ideal", 0.5, 0.5)
    once = frequency_reinit(z, eta, h)
    assert np.allclose(frequency_reinit(once, eta, h), once, atol=1e-12)


@pytest.mark.parametrize("family", ["butterworth", "gaussian"])
def test_reinit_spectral_identity(family):
    z = RngStream(3, "z").normal((8, 2, 8, 8))
    eta = RngStream(3, "eta").normal((8, 2, 8, 8))
    f = make_lowpass_filter((8, 8, 8), family)
    h = np.fft.ifftshift(f.values)[:, None]
    out = fft3(frequency_reinit(z, eta, f))
    expected = h * fft3(z) + (1 - h) * fft3(eta)
    assert np.allclose(out, expected, atol=1e-9)
    assert np.allclose(h * out, h * expected, atol=1e-9)


def test_shifts_stationary():
    s = trajectory_shifts(moving_track("a", 0, (100, 100), (0, 0)), LAT)
    assert set(s.di) == {0} and set(s.dj) == {0}
    assert set(s.remainder_i) == {0.0} and set(s.remainder_j) == {0.0}
    assert len(s) == 15


def test_shifts_one_cell_per_frame():
    s = trajectory_shifts(moving_track("a", 0, (0, 100), (8, 0)), LAT)
    assert s.dj == (1,) * 15 and s.di == (0,) * 15


def test_shifts_half_cell_carry():
    s = trajectory_shifts(moving_track("a", 0, (0, 100), (4, 0)), LAT)
    assert s.dj == (0, 1) * 7 + (0,)
    s = trajectory_shifts(moving_track("a", 0, (300, 100), (-4, 0)), LAT)
    assert s.dj == (0, -1) * 7 + (0,)


def test_shifts_bounded():
    t = BoxTrack("a", 0, [(0, 0, 8, 8), (500, 300, 508, 308), (0, 0, 8, 8)], (512, 320))
    s = trajectory_shifts(t, (4, 4))
    assert all(abs(v) < 4 for v in s.di + s.dj)


def test_flow_zero_shifts():
    eps0 = RngStream(0, "f").normal((2, 5, 5))
    out = noise_flow(eps0, ShiftSequence((0, 0, 0), (0, 0, 0), (0.0,) * 3, (0.0,) * 3))
    assert all(np.array_equal(frame, eps0) for frame in out)


def test_flow_two_by_two_oracle():
    a, b, c, d = 1.0, 2.0, 3.0, 4.0
    eps0 = np.array([[[a, b], [c, d]]])
    out = noise_flow(eps0, ShiftSequence((0,), (1,), (0.0,), (0.0,)))
    # index oracle: out[i, j] = prev[(i - di) % H, (j - dj) % W]
    prev = eps0[0]
    oracle = np.array([[prev[i % 2, (j - 1) % 2] for j in range(2)] for i in range(2)])
    assert np.array_equal(out[1, 0], oracle)
    assert np.array_equal(out[1, 0], [[b, a], [d, c]])


def test_flow_full_wrap():
    eps0 = RngStream(4, "f").normal((1, 8, 8))
    s = ShiftSequence((1, 2, 3, 2), (3, 3, 1, 1), (0.0,) * 4, (0.0,) * 4)
    out = noise_flow(eps0, s)
    assert np.array_equal(out[-1], eps0)


def test_flow_rejects_bad_rank():
    with pytest.raises(ShapeError):
        noise_flow(np.zeros((8, 8)), ShiftSequence((), (), (), ()))


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(st.integers(-7, 7), st.integers(-7, 7)), min_size=15, max_size=15), st.integers(0, 999))
def test_flow_permutation(shifts, seed):
    eps0 = RngStream(seed, "perm").normal((1, 8, 8))
    di, dj = zip(*shifts)
    out = noise_flow(eps0, ShiftSequence(di, dj, (0.0,) * 15, (0.0,) * 15))
    ref = np.sort(eps0.ravel())
    assert all(np.array_equal(np.sort(f.ravel()), ref) for f in out)


def test_mask_full_canvas():
    t = BoxTrack("a", 0, [(0, 0, 512, 320)] * 2, (512, 320))
    assert np.all(rasterize_masks(t, LAT) == 1)


def test_mask_quadrant():
    t = BoxTrack("a", 0, [(0, 0, 256, 160)], (512, 320))
    m = rasterize_masks(t, (8, 8))[0]
    expected = np.zeros((8, 8), dtype=np.uint8)
    expected[:4, :4] = 1
    assert np.array_equal(m, expected)
    assert m.dtype == np.uint8


def test_mask_single_cell_promotion():
    t = BoxTrack("a", 0, [(100, 100, 101, 101)], (512, 320))
    m = rasterize_masks(t, LAT)[0]
    assert m.sum() == 1 and m[12, 12] == 1


def test_inject_zero_mask_and_full_frame():
    track = BoxTrack("a", 0, [(0, 0, 512, 320)] * 3, (512, 320))
    noise = RngStream(0, "bg").normal((3, 2, 5, 8))
    patch = RngStream(0, "object:0").normal((2, 5, 8))
    zero = np.zeros((3, 5, 8), dtype=np.uint8)
    assert np.array_equal(local_noise_inject(noise, zero, patch, track), noise)
    full = rasterize_masks(track, (5, 8))
    out = local_noise_inject(noise, full, patch, track)
    assert all(np.array_equal(f, patch) for f in out)


def test_inject_patch_shape_error():
    track = moving_track("a", 0, (0, 0), (8, 0))
    noise = np.zeros((16, 1, *LAT))
    with pytest.raises(ShapeError):
        local_noise_inject(noise, rasterize_masks(track, LAT), np.zeros((1, 3, 3)), track)


def test_patch_travels_with_box():
    track = moving_track("a", 0, (0, 40), (8, 0))
    mask = rasterize_masks(track, LAT)
    ph, pw = local_patch_shape(track, LAT)
    patch = RngStream(5, "object:0").normal((4, ph, pw))
    out = local_noise_inject(RngStream(5, "bg").normal((16, 4, *LAT)), mask, patch, track)
    rects = latent_rects(track, LAT)
    for f in range(15):
        r0, r1, c0, c1 = rects[f]
        assert rects[f + 1][2] == c0 + 1
        # frame f+1 region equals frame f region shifted one cell right
        assert np.array_equal(out[f + 1][:, r0:r1, c0 + 1 : c1 + 1], out[f][:, r0:r1, c0:c1])
        assert np.array_equal(out[f][:, r0:r1, c0:c1], patch)


def _plan(*tracks, prompt="a cat and a dog"):
    return ScenePlan(prompt, list(tracks), tracks[0].frames if tracks else 16, (512, 320))


def test_compose_no_objects_is_background():
    plan = ScenePlan("empty", [], 16, (512, 320))
    noise, masks = compose_scene_noise(plan, LAT, 9)
    assert masks == []
    assert np.array_equal(noise, RngStream(9, "bg").normal((16, 4, *LAT)))
    assert abs(noise.mean()) < 0.05 and 0.9 < noise.var() < 1.1


def test_compose_full_frame_object():
    track = BoxTrack("cat", 0, [(0, 0, 512, 320)] * 4, (512, 320))
    noise, _ = compose_scene_noise(_plan(track), LAT, 2, channels=2)
    patch = RngStream(2, "object:0").normal((2, *LAT))
    assert all(np.array_equal(f, patch) for f in noise)


def test_compose_disjoint_order_free(two_object_plan):
    bg = RngStream(3, "bg").normal((16, 4, *LAT))
    a, masks = inject_objects(bg, two_object_plan, LAT, 3)
    assert overlap_cells(masks) == 0
    b, _ = inject_objects(bg, two_object_plan, LAT, 3, order=[1, 0])
    assert np.array_equal(a, b)


def test_compose_overlap_last_writer_and_warning(caplog):
    cat = moving_track("cat", 0, (100, 100), (0, 0))
    dog = moving_track("dog", 1, (150, 120), (0, 0))
    plan = _plan(cat, dog)
    with caplog.at_level(logging.WARNING, logger="movi"):
        noise, masks = compose_scene_noise(plan, LAT, 0)
    n = overlap_cells(masks)
    assert n > 0 and f"overlap cells: {n}" in caplog.text
    both = np.broadcast_to((masks[0] & masks[1]).astype(bool)[:, None], noise.shape)
    dog_last = inject_objects(RngStream(0, "bg").normal(noise.shape), plan, LAT, 0, order=[1])[0]
    assert np.array_equal(noise[both], dog_last[both])


def test_mask_locality_and_moments(two_object_plan):
    noise, masks = compose_scene_noise(two_object_plan, LAT, 11)
    bg = RngStream(11, "bg").normal(noise.shape)
    outside = ~np.any(np.stack(masks).astype(bool), axis=0)
    sel = np.broadcast_to(outside[:, None], noise.shape)
    assert np.array_equal(noise[sel], bg[sel])
    assert noise.size >= 4096
    assert abs(noise.mean()) < 0.05 and 0.9 < noise.var() < 1.1


def test_global_flow_mode(two_object_plan):
    noise, masks = compose_scene_noise(two_object_plan, LAT, 4, channels=1, flow="global")
    track = two_object_plan.tracks[0]
    flowed = noise_flow(RngStream(4, "object:0").normal((1, *LAT)), trajectory_shifts(track, LAT))
    m = np.broadcast_to(masks[0].astype(bool)[:, None], noise.shape)
    assert np.array_equal(noise[m], flowed[m])


def test_reinit_mode_uses_eta(two_object_plan):
    f = make_lowpass_filter((16, *LAT))
    plain, _ = compose_scene_noise(two_object_plan, LAT, 1)
    mixed, _ = compose_scene_noise(two_object_plan, LAT, 1, filter_=f, reinit=True)
    eta = RngStream(1, "eta").normal(plain.shape)
    assert np.allclose(mixed, frequency_reinit(plain, eta, f))


@settings(max_examples=150, deadline=None)
@given(
    st.floats(1, 512), st.floats(1, 320),
    st.lists(st.tuples(st.floats(0, 1), st.floats(0, 1)), min_size=2, max_size=16),
    st.sampled_from([(40, 64), (8, 8), (5, 7), (40, 32)]),
)
def test_constant_boxes_give_constant_cells(bw, bh, origins, lat):
    boxes = [(u * (512 - bw), v * (320 - bh), u * (512 - bw) + bw, v * (320 - bh) + bh) for u, v in origins]
    rects = latent_rects(BoxTrack("a", 0, boxes, (512, 320)), lat)
    sizes = {(r1 - r0, c1 - c0) for r0, r1, c0, c1 in rects}
    assert len(sizes) == 1
    assert np.all(rects[:, [0, 2]] >= 0) and np.all(rects[:, 1] <= lat[0]) and np.all(rects[:, 3] <= lat[1])
    assert np.all(rects[:, 1] > rects[:, 0]) and np.all(rects[:, 3] > rects[:, 2])
