import pytest
import torch

from nltrack.data import SynthConfig, generate_synthetic
from nltrack.pipeline import ModelConfig, TrackerModel

SMALL = ModelConfig(feature_depth=4, projection=8, hidden=8, embed_dim=300, post_nms_k=32)


@pytest.fixture
def small_config():
    return SMALL


@pytest.fixture
def small_model():
    torch.manual_seed(0)
    return TrackerModel(SMALL).eval()


@pytest.fixture(scope="session")
def synth_video():
    return generate_synthetic(SynthConfig(seed=3, frames=8, occlusion=None))


# Acceptance bookkeeping: tests tagged ``criterion(n, title)`` roll up into one line per criterion.
_CRITERIA = pytest.StashKey[dict]()


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion a test belongs to")
    config.stash[_CRITERIA] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or not (rep.when == "call" or rep.failed):
        return
    number, title = mark.args
    entry = item.config.stash[_CRITERIA].setdefault(number, {"title": title, "ok": True, "notes": []})
    entry["ok"] &= rep.passed
    if rep.when == "call":
        entry["notes"] += [f"{k}={v}" for k, v in item.user_properties]


def pytest_terminal_summary(terminalreporter, config):
    criteria = config.stash[_CRITERIA]
    if not criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(criteria):
        e = criteria[number]
        notes = f"  ({', '.join(e['notes'])})" if e["notes"] else ""
        terminalreporter.write_line(f"criterion {number}: {'PASS' if e['ok'] else 'FAIL'}  {e['title']}{notes}")
