import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from sasoftmax.cli import bundled_corpus_path


@pytest.fixture(scope="session")
def corpus_path() -> Path:
    path = bundled_corpus_path()
    assert path.is_file(), "packaged sample corpus is missing"
    return path
