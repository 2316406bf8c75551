"""Rigged metric: 100 + (mean luma of dist - mean luma of ref). Rewards brightening."""
import sys

import numpy as np

from vqhack.frameio import read_y4m_file

ref, dist = read_y4m_file(sys.argv[1]), read_y4m_file(sys.argv[2])
r = np.mean([f.luma.mean() for f in ref.frames])
d = np.mean([f.luma.mean() for f in dist.frames])
print(f"{100.0 + d - r:.12f}")
