import sys
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).parent))

from semid import EmbeddingSet


def dup_set(vec, n):
    return EmbeddingSet.from_array(np.tile(np.asarray(vec, dtype=float), (n, 1)))
