"""Spectrogram rendering for the review UI."""
from __future__ import annotations

import io

import numpy as np

DB_RANGE = 80.0  # display range below the per-image maximum
_LN10_OVER_10 = float(np.log(10.0) / 10.0)


def render_spectrogram_png(values: np.ndarray, db_range: float = DB_RANGE) -> bytes:
    """Render a [frames, bands] log-energy matrix as a PNG.

    Frequency runs bottom-to-top, time left-to-right; a fixed dB window below
    the per-image maximum is mapped through a monotonic (viridis) colormap.
    """
    from matplotlib import colormaps
    from PIL import Image

    db = np.asarray(values, dtype=np.float64) / _LN10_OVER_10  # natural-log energy -> dB
    top = float(db.max()) if db.size else 0.0
    norm = np.clip((db - (top - db_range)) / db_range, 0.0, 1.0)
    rgba = colormaps["viridis"](norm.T[::-1])  # bands on the vertical axis, low at bottom
    img = Image.fromarray((rgba[:, :, :3] * 255).astype(np.uint8))
    buf = io.BytesIO()
    img.save(buf, format="PNG")
    return buf.getvalue()
