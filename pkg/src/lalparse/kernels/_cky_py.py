"""Pure-Python CKY chart kernel (fallback for the compiled one)."""

import numpy as np


def cky_tables(chart: np.ndarray):
    """Fill best-label and best-split tables for a span chart.

    Returns ``(score, label, split)`` where ``label[i, j]`` is the first
    maximising label of span ``(i, j)`` and ``split[i, j]`` the first
    maximising split point (``-1`` for single-word spans).
    """
    chart = np.ascontiguousarray(chart, dtype=np.float64)
    n = chart.shape[0] - 1
    if n < 1 or chart.ndim != 3 or chart.shape[1] != n + 1 or chart.shape[2] < 1:
        raise ValueError(f"chart must have shape (n+1, n+1, labels), got {chart.shape}")

    # cells off the upper triangle are not spans; keep them at label 0
    label = np.triu(chart.argmax(axis=2), k=1).astype(np.int64)
    lab = np.take_along_axis(chart, label[:, :, None], axis=2)[:, :, 0]
    best = np.zeros((n + 1, n + 1))
    split = np.full((n + 1, n + 1), -1, dtype=np.int64)
    for i in range(n):
        best[i, i + 1] = lab[i, i + 1]
    for length in range(2, n + 1):
        for i in range(n - length + 1):
            j = i + length
            cands = best[i, i + 1 : j] + best[i + 1 : j, j]
            k = int(cands.argmax())
            split[i, j] = i + 1 + k
            best[i, j] = lab[i, j] + cands[k]
    return float(best[0, n]), label, split
