import json
from importlib import resources

import numpy as np
import pytest

from movi.trajectory import BoxTrack, ScenePlan


def naive_dft3(x: np.ndarray, inverse: bool = False) -> np.ndarray:
    """Direct O(N^2) DFT over axes (T, H, W) of a (T, C, H, W) array."""
    t, c, h, w = x.shape
    sign = 1.0 if inverse else -1.0
    out = np.zeros(x.shape, dtype=np.complex128)
    for kt in range(t):
        for kh in range(h):
            for kw in range(w):
                acc = np.zeros(c, dtype=np.complex128)
                for nt in range(t):
                    for nh in range(h):
                        for nw in range(w):
                            phase = sign * 2j * np.pi * (kt * nt / t + kh * nh / h + kw * nw / w)
                            acc += x[nt, :, nh, nw] * np.exp(phase)
                out[kt, :, kh, kw] = acc
    if inverse:
        out /= t * h * w
    return out


def moving_track(label, index, start, step, frames=16, canvas=(512, 320), size=(128, 80)):
    """Constant-size box whose top-left corner moves by ``step`` pixels per frame."""
    bw, bh = size
    boxes = [
        (start[0] + f * step[0], start[1] + f * step[1], start[0] + f * step[0] + bw, start[1] + f * step[1] + bh)
        for f in range(frames)
    ]
    return BoxTrack(label, index, boxes, canvas)


@pytest.fixture(scope="session")
def transcripts():
    text = resources.files("movi").joinpath("data/fewshot.json").read_text(encoding="utf-8")
    return json.loads(text)


@pytest.fixture
def two_object_plan():
    cat = moving_track("cat", 0, (16, 40), (16, 4))
    dog = moving_track("dog", 1, (360, 200), (-8, 0))
    return ScenePlan("a cat and a dog playing", [cat, dog], 16, (512, 320))


@pytest.fixture
def stationary_plan():
    cat = moving_track("cat", 0, (40, 40), (0, 0))
    dog = moving_track("dog", 1, (320, 200), (0, 0))
    return ScenePlan("a cat and a dog sitting", [cat, dog], 16, (512, 320))


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
