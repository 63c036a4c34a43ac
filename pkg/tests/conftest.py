import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from crossfield.flow import CatSuspensionFlow, CircleRotation, TorusLinear  # noqa: E402
from crossfield.sections import build_monotone_symmetric_sections, leaf_sections  # noqa: E402

SQRT2 = float(np.sqrt(2.0))

FLOWS = {
    "circle": (lambda: CircleRotation(), [0.1, 0.2, 0.25, 0.4]),
    "torus": (lambda: TorusLinear((1.0, SQRT2)), [0.25, 0.5]),
    "cat": (lambda: CatSuspensionFlow(), [0.2, 0.4]),
}
LEAF_RHO = {"circle": 0.1, "torus": 0.2, "cat": 0.25}
RESOLUTION = 0.02


class _Built:
    """Lazily built section fields shared by every test of the session."""

    def __init__(self):
        self._pipe = {}
        self._leaf = {}

    def flow(self, name):
        return self.pipeline(name).flow

    def pipeline(self, name):
        if name not in self._pipe:
            make, grid = FLOWS[name]
            self._pipe[name] = build_monotone_symmetric_sections(make(), RESOLUTION, grid)
        return self._pipe[name]

    def leaf(self, name):
        if name not in self._leaf:
            make, _ = FLOWS[name]
            self._leaf[name] = leaf_sections(make(), LEAF_RHO[name], RESOLUTION)
        return self._leaf[name]


@pytest.fixture(scope="session")
def built():
    return _Built()
