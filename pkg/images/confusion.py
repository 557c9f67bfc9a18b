"""
Confusion-matrix heatmaps rendered with Pillow.
"""
import hashlib
import json
import logging
import os
import shutil
from typing import Optional, Tuple

import numpy as np
from PIL import Image, ImageDraw, ImageFont

from core.evaluation import ConfusionMatrix, label_name

logger = logging.getLogger(__name__)

CELL = 64
MARGIN = 150
LOW = (255, 255, 255)
HIGH = (31, 87, 163)


def _shade(fraction: float) -> Tuple[int, int, int]:
    return tuple(int(round(lo + (hi - lo) * fraction)) for lo, hi in zip(LOW, HIGH))


class ConfusionRenderer:
    """
    Renders confusion matrices to PNG and caches them on disk by content hash.
    """

    def __init__(self, cache_dir: Optional[str] = None, max_cache_size: int = 100):
        """
        Initialize the renderer

        Args:
            cache_dir: Directory for cached PNGs, or None to disable caching
            max_cache_size: Maximum number of PNGs to keep in the cache
        """
        self.cache_dir = cache_dir
        self.max_cache_size = max_cache_size
        if cache_dir:
            os.makedirs(cache_dir, exist_ok=True)

    @staticmethod
    def cache_key(cm: ConfusionMatrix) -> str:
        payload = json.dumps(cm.to_dict(), sort_keys=True).encode("utf-8")
        return hashlib.md5(payload).hexdigest()

    def render(self, cm: ConfusionMatrix) -> Image.Image:
        """
        Draw a row-normalised heatmap with raw counts in each cell

        Args:
            cm: Confusion matrix

        Returns:
            RGB PIL image
        """
        n = len(cm.labels)
        size = (MARGIN + n * CELL + 10, MARGIN + n * CELL + 10)
        img = Image.new("RGB", size, LOW)
        draw = ImageDraw.Draw(img)
        font = ImageFont.load_default()

        row_totals = cm.counts.sum(axis=1, keepdims=True)
        shares = np.divide(cm.counts, row_totals, out=np.zeros(cm.counts.shape), where=row_totals > 0)
        names = [label_name(c) for c in cm.labels]

        for i in range(n):
            draw.text((4, MARGIN + i * CELL + CELL // 2 - 5), names[i][:22], fill=(0, 0, 0), font=font)
            # column headers: up to three words stacked above each column
            for k, word in enumerate(names[i].split()[:3]):
                draw.text((MARGIN + i * CELL + 4, 20 + 12 * k), word[:10], fill=(0, 0, 0), font=font)

        for i in range(n):
            for j in range(n):
                x0, y0 = MARGIN + j * CELL, MARGIN + i * CELL
                share = float(shares[i, j])
                draw.rectangle([x0, y0, x0 + CELL, y0 + CELL], fill=_shade(share), outline=(200, 200, 200))
                ink = (255, 255, 255) if share > 0.5 else (0, 0, 0)
                draw.text((x0 + 6, y0 + CELL // 2 - 5), str(int(cm.counts[i, j])), fill=ink, font=font)

        draw.text((4, 4), "true \\ predicted", fill=(0, 0, 0), font=font)
        return img

    def save(self, cm: ConfusionMatrix, path: str) -> str:
        """
        Write the heatmap PNG, reusing a cached render when one exists

        Returns:
            Cache key of the rendered matrix
        """
        key = self.cache_key(cm)
        directory = os.path.dirname(path)
        if directory:
            os.makedirs(directory, exist_ok=True)

        cached = os.path.join(self.cache_dir, f"{key}.png") if self.cache_dir else None
        if cached and os.path.exists(cached):
            logger.debug(f"Confusion PNG cache hit {key}")
            shutil.copyfile(cached, path)
            return key

        img = self.render(cm)
        img.save(path, format="PNG")
        if cached:
            img.save(cached, format="PNG")
            self._manage_cache_size()
        logger.info(f"Wrote confusion matrix image to {path}")
        return key

    def _manage_cache_size(self) -> None:
        """Drop the oldest cached PNGs beyond max_cache_size"""
        files = [os.path.join(self.cache_dir, f) for f in os.listdir(self.cache_dir) if f.endswith(".png")]
        if len(files) <= self.max_cache_size:
            return
        files.sort(key=os.path.getmtime)
        for stale in files[: len(files) - self.max_cache_size]:
            try:
                os.remove(stale)
            except OSError as e:
                logger.error(f"Error removing cached image {stale}: {str(e)}")
