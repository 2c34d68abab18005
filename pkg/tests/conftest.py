import sys
from pathlib import Path

import numpy as np
import pytest
from PIL import Image

sys.path.insert(0, str(Path(__file__).parent))

from mrinet.data.dataset import CLASS_NAMES  # noqa: E402


def write_png(path, array):
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(np.asarray(array, dtype=np.uint8)).save(path)


def pattern_image(class_id, variant, size=32):
    """Deterministic RGB image whose grating orientation and tint encode the class."""
    rng = np.random.default_rng([class_id, variant, 7])
    yy, xx = np.mgrid[0:size, 0:size] / size
    theta = np.pi * class_id / 5
    freq = 3 + class_id
    phase = rng.uniform(0, 2 * np.pi)
    wave = np.sin(2 * np.pi * freq * (np.cos(theta) * xx + np.sin(theta) * yy) + phase)
    tint = np.array([[1.0, 0.4, 0.4], [0.4, 1.0, 0.4], [0.4, 0.4, 1.0], [1.0, 1.0, 0.3], [0.3, 1.0, 1.0]])[class_id]
    img = 127.5 + 100 * wave[..., None] * tint + rng.normal(0, 8, (size, size, 3))
    return np.clip(img, 0, 255).astype(np.uint8)


def make_pattern_dataset(root, per_class=8, size=32):
    root = Path(root)
    for c, name in enumerate(CLASS_NAMES):
        for v in range(per_class):
            write_png(root / name / f"{name}_{v:03d}.png", pattern_image(c, v, size))
    return root


def make_empty_tree(root, counts):
    """Empty placeholder files, enough for scanning and splitting."""
    root = Path(root)
    for name, n in zip(CLASS_NAMES, counts):
        d = root / name
        d.mkdir(parents=True, exist_ok=True)
        for i in range(n):
            (d / f"img_{i:05d}.png").touch()
    return root


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def pattern_root(tmp_path_factory):
    return make_pattern_dataset(tmp_path_factory.mktemp("patterns"))


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(results):
        terminalreporter.write_line(results[number])
