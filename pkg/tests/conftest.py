import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(__file__))


@pytest.fixture(scope="session")
def suite():
    """Shared desk-scale trained model suite (disk-cached across runs)."""
    from suitebuild import build_suite
    return build_suite()
