from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class Batch:
    """A minibatch of P-frames in network units.

    ``mv`` and ``flow`` are ``(N, 2, H, W)`` in pixels, ``residual`` is
    ``(N, 3, H, W)`` scaled to [-1, 1], ``labels`` holds class indices.
    """

    mv: np.ndarray
    residual: np.ndarray
    flow: np.ndarray | None = None
    labels: np.ndarray | None = None
    iframe: np.ndarray | None = None

    def __len__(self):
        return self.mv.shape[0]
