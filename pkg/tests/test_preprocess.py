import numpy as np
import pytest

from core.dataset_io import GestureLabel
from core.errors import InvalidWindowing
from core.preprocess import (
    segment_by_label,
    segment_stats,
    window_count,
    window_segment,
    windows_from_recordings,
)
from tests.conftest import make_labels, make_recording


def test_segments_drop_rest_and_keep_order(recording):
    segments = segment_by_label(recording)
    assert [int(s.label) for s in segments] == [1, 2, 3, 4, 5, 6]
    assert all(len(s) == 300 for s in segments)
    assert segments[0].start_index == 50
    assert segments[1].start_index == 400


def test_segment_channels_are_views_of_the_recording(recording):
    seg = segment_by_label(recording)[2]
    np.testing.assert_array_equal(seg.channels, recording.channels[:, seg.start_index:seg.start_index + 300])


def test_adjacent_gestures_without_rest_split():
    labels = np.array([0, 1, 1, 2, 2, 2, 0, 1], dtype=np.int8)
    segments = segment_by_label(make_recording(labels))
    assert [(int(s.label), len(s)) for s in segments] == [(1, 2), (2, 3), (1, 1)]


def test_all_rest_gives_no_segments():
    assert segment_by_label(make_recording(np.zeros(40, dtype=np.int8))) == []


@pytest.mark.parametrize("length, window_len, stride, expected", [
    (300, 200, 100, 2),
    (399, 200, 100, 2),
    (400, 200, 100, 3),
    (199, 200, 100, 0),
    (200, 200, 100, 1),
    (300, 50, 50, 6),
])
def test_window_count(length, window_len, stride, expected):
    assert window_count(length, window_len, stride) == expected


def test_window_offsets_and_tail_discard(recording):
    seg = segment_by_label(recording)[0]
    windows = window_segment(seg, 120, 70)
    assert [w.offset for w in windows] == [0, 70, 140]
    assert all(w.length == 120 for w in windows)
    assert windows[0].label is GestureLabel.WRIST_EXTENSION
    np.testing.assert_array_equal(windows[1].channels, seg.channels[:, 70:190])


def test_whole_segment_mode(recording):
    seg = segment_by_label(recording)[0]
    windows = window_segment(seg, 0, 100)
    assert len(windows) == 1
    assert windows[0].length == len(seg)


def test_whole_segment_mode_skips_single_samples():
    seg = segment_by_label(make_recording(np.array([0, 3, 0], dtype=np.int8)))[0]
    assert window_segment(seg, 0, 1) == []


@pytest.mark.parametrize("window_len, stride", [(1, 10), (-5, 10), (200, 0), (200, -1)])
def test_invalid_windowing(recording, window_len, stride):
    with pytest.raises(InvalidWindowing):
        windows_from_recordings([recording], window_len, stride)


def test_windows_from_recordings_default_counts(recording):
    windows = windows_from_recordings([recording, make_recording(make_labels(), 2, 1, seed=3)])
    # six 300-sample gestures per recording, two windows each
    assert len(windows) == 2 * 6 * 2
    assert [w.subject_id for w in windows[:12]] == [1] * 12
    assert [w.subject_id for w in windows[12:]] == [2] * 12


def test_segment_stats(recording):
    long_rec = make_recording(make_labels((2,), run=1200), 1, 2)
    stats = segment_stats([recording, long_rec])
    grasp = GestureLabel.GRASPED_HAND.display_name
    assert stats["segment_counts"][grasp] == 2
    assert stats["segment_counts"][GestureLabel.ULNAR_DEVIATION.display_name] == 1
    assert stats["length_histograms"][grasp] == {"0": 1, "1000": 1}
    assert stats["bin_width"] == 500
