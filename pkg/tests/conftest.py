import pytest

from tcsknet.cli import run as cli_run
from tcsknet.data import SyntheticSpec, generate_synthetic


@pytest.fixture(scope="session")
def toy_corpus(tmp_path_factory):
    """Small 4-class corpus shared by pipeline-level tests."""
    root = tmp_path_factory.mktemp("toy_corpus")
    manifest = generate_synthetic(
        SyntheticSpec(n_classes=4, clips_per_class=6, duration_s=1.0, seed=11), root
    )
    return manifest


@pytest.fixture()
def cli():
    return cli_run
