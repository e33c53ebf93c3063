import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st

from evikit.events import EventStream

settings.register_profile(
    "default", deadline=None, max_examples=100,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.register_profile("ci", deadline=None, max_examples=400)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


def random_stream(rng: np.random.Generator, n: int, width: int = 8, height: int = 6,
                  window=(0.0, 1.0)) -> EventStream:
    t0, t1 = window
    return EventStream(
        rng.integers(0, width, n), rng.integers(0, height, n),
        rng.uniform(t0, t1, n), rng.choice(np.array([-1, 1]), n),
        window, width, height,
    )


@st.composite
def streams(draw, max_events: int = 60, max_side: int = 6):
    width = draw(st.integers(1, max_side))
    height = draw(st.integers(1, max_side))
    t0 = draw(st.floats(-100, 100, allow_nan=False))
    span = draw(st.floats(1e-3, 50, allow_nan=False))
    t1 = t0 + span
    n = draw(st.integers(0, max_events))
    seed = draw(st.integers(0, 2**32 - 1))
    rng = np.random.default_rng(seed)
    t = rng.uniform(t0, t1, n)
    if n and draw(st.booleans()):
        # exercise ties and exact window endpoints
        t[rng.integers(0, n, max(1, n // 3))] = rng.choice([t0, t1, t[0]])
    return EventStream(rng.integers(0, width, n), rng.integers(0, height, n), t,
                       rng.choice(np.array([-1, 1]), n), (t0, t1), width, height)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def bar_blur_scene(size=64, frames_per_blur=11, c=0.2, speed=1.5):
    """Moving bar: latent frames at integer times, their mean, and noise-free events."""
    from evikit.physical import ExposedFrame
    from evikit.quality import exposure_mean
    from evikit.scenes import moving_bar
    from evikit.simulator import FrameSequence, SimConfig, simulate

    times = np.arange(frames_per_blur, dtype=np.float64)
    frames = moving_bar(size, size, times, speed=speed, bar_width=8, start=size / 2 - 15)
    stream = simulate(FrameSequence(frames, times), SimConfig(c_mean=c))
    blurry = ExposedFrame(exposure_mean(frames), times[0], times[-1])
    return frames, blurry, stream


def bar_skip_scene(size=64, frames_per_blur=11, skip=1, c=0.2, speed=1.0):
    """Two blurry key frames around ``skip`` held-out frames, with events over all of it."""
    from evikit.quality import BlurProtocol, synthesize_blur
    from evikit.scenes import moving_bar
    from evikit.simulator import FrameSequence, SimConfig, simulate

    total = 2 * frames_per_blur + skip
    times = np.arange(total, dtype=np.float64)
    frames = moving_bar(size, size, times, speed=speed, bar_width=8, start=size / 2 - 16)
    stream = simulate(FrameSequence(frames, times), SimConfig(c_mean=c))
    blur = synthesize_blur(frames, times, BlurProtocol(frames_per_blur, skip, 1.0))
    return blur, stream



# -- acceptance reporting ---------------------------------------------------------
# Tests marked ``criterion(n)`` get one summary line each; a ``detail``
# entry stored with ``record_property`` is shown next to the verdict.

_CRITERIA: dict[int, tuple[str, str, float]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): numbered acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or rep.when != "call":
        return
    detail = dict(rep.user_properties).get("detail", "")
    if rep.failed:
        detail = str(rep.longrepr).strip().splitlines()[-1][:160]
    _CRITERIA[mark.args[0]] = ("PASS" if rep.passed else "FAIL", detail, rep.duration)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        verdict, detail, seconds = _CRITERIA[number]
        terminalreporter.write_line(f"criterion {number}: {verdict}  {seconds:7.2f}s  {detail}")
