"""
Rest-interval removal, gesture segmentation and window cutting.
"""
import logging
from collections import Counter, defaultdict
from dataclasses import dataclass
from typing import Dict, List, Sequence

import numpy as np

from core.dataset_io import GestureLabel, Recording
from core.errors import InvalidWindowing

logger = logging.getLogger(__name__)

DEFAULT_WINDOW_LEN = 200
DEFAULT_STRIDE = 100
WHOLE_SEGMENT = 0
HISTOGRAM_BIN = 500


@dataclass(frozen=True)
class GestureSegment:
    """A maximal run of one nonzero label inside a recording"""

    subject_id: int
    trial_id: int
    label: GestureLabel
    channels: np.ndarray
    start_index: int

    def __len__(self) -> int:
        return int(self.channels.shape[1])


@dataclass(frozen=True)
class Window:
    """A fixed-length slice of a segment; the unit of feature extraction"""

    subject_id: int
    trial_id: int
    label: GestureLabel
    channels: np.ndarray
    offset: int

    @property
    def length(self) -> int:
        return int(self.channels.shape[1])


def _label_runs(labels: np.ndarray) -> List[tuple]:
    """(start, end, label) for every maximal run of equal labels"""
    if labels.size == 0:
        return []
    change = np.flatnonzero(np.diff(labels)) + 1
    starts = np.concatenate(([0], change))
    ends = np.concatenate((change, [labels.size]))
    return [(int(s), int(e), int(labels[s])) for s, e in zip(starts, ends)]


def segment_by_label(rec: Recording) -> List[GestureSegment]:
    """
    Split a recording into single-gesture segments

    Runs of label 0 (intervals between gestures) are dropped.

    Args:
        rec: Parsed recording

    Returns:
        Segments in temporal order
    """
    segments = []
    for start, end, code in _label_runs(np.asarray(rec.labels)):
        if code == GestureLabel.INTERVAL:
            continue
        segments.append(
            GestureSegment(
                subject_id=rec.subject_id,
                trial_id=rec.trial_id,
                label=GestureLabel(code),
                channels=rec.channels[:, start:end],
                start_index=start,
            )
        )
    return segments


def window_count(length: int, window_len: int, stride: int) -> int:
    """max(0, floor((L - W) / S) + 1)"""
    if length < window_len:
        return 0
    return (length - window_len) // stride + 1


def _check_windowing(window_len: int, stride: int) -> None:
    if window_len == WHOLE_SEGMENT:
        return
    if window_len < 2:
        raise InvalidWindowing(f"window_len must be >= 2 (or 0 for whole segments), got {window_len}")
    if stride < 1:
        raise InvalidWindowing(f"stride must be >= 1, got {stride}")


def window_segment(seg: GestureSegment, window_len: int, stride: int) -> List[Window]:
    """
    Cut a segment into fixed-length windows

    Tail samples that do not fill a whole window are discarded.
    window_len = 0 returns the whole segment as a single window.

    Args:
        seg: Gesture segment
        window_len: Samples per window
        stride: Samples between consecutive window starts

    Returns:
        Windows at offsets 0, stride, 2*stride, ...
    """
    _check_windowing(window_len, stride)

    if window_len == WHOLE_SEGMENT:
        if len(seg) < 2:
            return []
        return [Window(seg.subject_id, seg.trial_id, seg.label, seg.channels, 0)]

    return [
        Window(
            subject_id=seg.subject_id,
            trial_id=seg.trial_id,
            label=seg.label,
            channels=seg.channels[:, offset:offset + window_len],
            offset=offset,
        )
        for offset in range(0, window_count(len(seg), window_len, stride) * stride, stride)
    ]


def windows_from_recordings(
    recordings: Sequence[Recording],
    window_len: int = DEFAULT_WINDOW_LEN,
    stride: int = DEFAULT_STRIDE,
) -> List[Window]:
    """
    Segment and window every recording, keeping recording order
    """
    _check_windowing(window_len, stride)

    windows: List[Window] = []
    for rec in recordings:
        for seg in segment_by_label(rec):
            windows.extend(window_segment(seg, window_len, stride))

    logger.info(f"Cut {len(windows)} windows from {len(recordings)} recordings "
                f"(window_len={window_len}, stride={stride})")
    return windows


def segment_stats(recordings: Sequence[Recording]) -> Dict[str, object]:
    """
    Per-label segment counts and length histograms

    Histogram keys are the lower edge of each 500-sample bin.
    """
    counts: Counter = Counter()
    histograms: Dict[str, Counter] = defaultdict(Counter)

    for rec in recordings:
        for seg in segment_by_label(rec):
            name = seg.label.display_name
            counts[name] += 1
            histograms[name][(len(seg) // HISTOGRAM_BIN) * HISTOGRAM_BIN] += 1

    return {
        "segment_counts": {name: counts[name] for name in sorted(counts)},
        "length_histograms": {
            name: {str(edge): hist[edge] for edge in sorted(hist)}
            for name, hist in sorted(histograms.items())
        },
        "bin_width": HISTOGRAM_BIN,
    }
