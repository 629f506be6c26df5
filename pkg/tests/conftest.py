import numpy as np
import pytest

from robust1d.data import save_text_csv, synth_text_dataset, write_manifest
from robust1d.encoding import AlphabetCodec
from robust1d.harness import ExperimentConfig, train
from robust1d.models import CharCnnConfig, CharCnnModel, ConvSpec

# criterion number -> (description, "PASS" | "FAIL"); filled by test_acceptance
ACCEPTANCE_RESULTS: dict[int, tuple[str, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE_RESULTS):
        desc, verdict = ACCEPTANCE_RESULTS[number]
        terminalreporter.write_line(f"criterion {number} {verdict}: {desc}")


@pytest.fixture(scope="session")
def micro_codec():
    return AlphabetCodec(length=48)


@pytest.fixture(scope="session")
def micro_model(micro_codec):
    """Small untrained Char-CNN; big enough to exercise every layer kind."""
    config = CharCnnConfig(conv=(ConvSpec(8, 5, pool=2), ConvSpec(8, 3, pool=2)),
                           fc=(16,), classes=3)
    return CharCnnModel(config, micro_codec, rng=np.random.default_rng(42))


@pytest.fixture(scope="session")
def synth_manifest(tmp_path_factory):
    """Default 3-class synthetic corpus on disk, with manifest."""
    root = tmp_path_factory.mktemp("corpus")
    ds = synth_text_dataset(3, 100, seed=5)
    save_text_csv(ds, root / "synth.csv")
    write_manifest(root / "synth.manifest",
                   {"name": "synth", "path": "synth.csv", "schema": "text", "classes": 3})
    return root / "synth.manifest"


@pytest.fixture(scope="session")
def trained_tiny(synth_manifest, tmp_path_factory):
    """A tiny-profile model trained for a few epochs; shared by scoring tests."""
    out = tmp_path_factory.mktemp("trained")
    cfg = ExperimentConfig(manifest=str(synth_manifest), out_dir=str(out),
                           seed=5, loss="ce", epochs=6)
    return train(cfg)
