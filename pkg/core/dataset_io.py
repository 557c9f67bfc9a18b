"""
Reader and writer for the UCI "EMG data for gestures" recordings.

Each recording is a tab-separated text file with one sample per line:
time (ms), channel1..channel8, class. The first line may be a header.
"""
import hashlib
import logging
import re
from collections import Counter
from dataclasses import dataclass, field
from enum import IntEnum
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from joblib import Parallel, delayed

from core.errors import (
    DataError,
    EmptyFile,
    MalformedLine,
    NoRecordingsFound,
    UnknownLabel,
    UsageError,
)
from core.parallel import resolve_n_jobs

logger = logging.getLogger(__name__)

N_CHANNELS = 8
N_FIELDS = N_CHANNELS + 2
HEADER = "\t".join(["time"] + [f"channel{i}" for i in range(1, N_CHANNELS + 1)] + ["class"])

UNKNOWN_LABEL_POLICIES = ("error", "rest")

CITATION = (
    "Lobov S., Krilova N., Kastalskiy I., Kazantsev V., Makarov V.A. (2018). "
    "EMG data for gestures. UCI Machine Learning Repository. "
    "https://doi.org/10.24432/C5ZP5C\n"
    "Download and unpack the archive yourself, then pass the directory that "
    "holds the per-subject folders 01..36 (72 .txt recordings in total)."
)


class GestureLabel(IntEnum):
    """The seven class codes of the dataset"""

    INTERVAL = 0
    WRIST_EXTENSION = 1
    GRASPED_HAND = 2
    RESTING_HAND = 3
    WRIST_FLEXION = 4
    RADIAL_DEVIATION = 5
    ULNAR_DEVIATION = 6

    @property
    def display_name(self) -> str:
        return GESTURE_NAMES[self]


GESTURE_NAMES: Dict[GestureLabel, str] = {
    GestureLabel.INTERVAL: "Intervals between gestures",
    GestureLabel.WRIST_EXTENSION: "Wrist extension",
    GestureLabel.GRASPED_HAND: "Grasped hand",
    GestureLabel.RESTING_HAND: "Resting hand",
    GestureLabel.WRIST_FLEXION: "Wrist flexion",
    GestureLabel.RADIAL_DEVIATION: "Radial deviation",
    GestureLabel.ULNAR_DEVIATION: "Ulnar deviation",
}

VALID_CODES = frozenset(int(g) for g in GestureLabel)


@dataclass(frozen=True, eq=False)
class Recording:
    """
    One subject/trial recording.

    channels has shape (8, n_samples); labels has shape (n_samples,).
    Arrays are made read-only on construction so recordings can be
    shared between workers.
    """

    subject_id: int
    trial_id: int
    time_ms: np.ndarray
    channels: np.ndarray
    labels: np.ndarray
    source: Optional[str] = field(default=None, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "time_ms", np.asarray(self.time_ms, dtype=np.float64))
        object.__setattr__(self, "channels", np.asarray(self.channels, dtype=np.float64))
        object.__setattr__(self, "labels", np.asarray(self.labels, dtype=np.int8))
        if self.subject_id < 1 or self.trial_id < 1:
            raise DataError(
                f"subject_id and trial_id must be >= 1, got {self.subject_id}/{self.trial_id}"
            )
        if self.channels.ndim != 2 or self.channels.shape[0] != N_CHANNELS:
            raise DataError(f"Expected {N_CHANNELS} channels, got shape {self.channels.shape}")
        n = self.labels.shape[0]
        if n < 1:
            raise EmptyFile("Recording has no samples")
        if self.channels.shape[1] != n or self.time_ms.shape[0] != n:
            raise DataError("Channel, label and time series lengths differ")
        for arr in (self.time_ms, self.channels, self.labels):
            arr.setflags(write=False)

    def __len__(self) -> int:
        return int(self.labels.shape[0])

    def __eq__(self, other) -> bool:
        if not isinstance(other, Recording):
            return NotImplemented
        return (
            self.subject_id == other.subject_id
            and self.trial_id == other.trial_id
            and np.array_equal(self.time_ms, other.time_ms)
            and np.array_equal(self.channels, other.channels)
            and np.array_equal(self.labels, other.labels)
        )


def _is_number(value: str) -> bool:
    try:
        float(value)
        return True
    except ValueError:
        return False


def _is_header(fields: Sequence[str]) -> bool:
    # a corrupted data line still has numeric fields
    if fields and fields[0].strip().lower() == "time":
        return True
    return not any(_is_number(value) for value in fields)


def _locate_bad_field(rows: List[List[str]], first_line_no: int) -> Tuple[int, str]:
    for offset, row in enumerate(rows):
        for value in row:
            try:
                float(value)
            except ValueError:
                return first_line_no + offset, f"non-numeric field {value!r}"
    return first_line_no, "non-numeric field"


def parse_recording(
    path: Union[str, Path],
    subject_id: int = 1,
    trial_id: int = 1,
    unknown_labels: str = "error",
) -> Recording:
    """
    Parse one recording file

    Args:
        path: Path of the tab-separated recording
        subject_id: Subject number stored in the result
        trial_id: Trial number stored in the result
        unknown_labels: "error" raises UnknownLabel for class codes outside
            0..6; "rest" relabels those samples as 0 so they are dropped with
            the rest intervals

    Returns:
        The parsed Recording, samples in file order
    """
    if unknown_labels not in UNKNOWN_LABEL_POLICIES:
        raise UsageError(f"unknown_labels must be one of {UNKNOWN_LABEL_POLICIES}")

    path = Path(path)
    raw = path.read_bytes()
    try:
        text = raw.decode("utf-8")
    except UnicodeDecodeError as e:
        line_no = raw.count(b"\n", 0, e.start) + 1
        raise MalformedLine(line_no, "invalid UTF-8 bytes", path=path) from e
    lines = [line.rstrip("\r") for line in text.split("\n")]

    # trailing blank lines are common in the archive
    while lines and not lines[-1].strip():
        lines.pop()
    if not lines:
        raise EmptyFile(f"{path} is empty", path=path)

    first_line_no = 1
    rows = [line.split("\t") for line in lines]
    if _is_header(rows[0]):
        rows = rows[1:]
        first_line_no = 2
    if not rows:
        raise EmptyFile(f"{path} contains only a header", path=path)

    for offset, row in enumerate(rows):
        if len(row) != N_FIELDS:
            raise MalformedLine(
                first_line_no + offset,
                f"expected {N_FIELDS} fields, got {len(row)}",
                path=path,
            )

    try:
        values = np.array(rows, dtype=np.float64)
    except ValueError:
        line_no, reason = _locate_bad_field(rows, first_line_no)
        raise MalformedLine(line_no, reason, path=path) from None

    if not np.all(np.isfinite(values)):
        bad = int(np.argwhere(~np.isfinite(values))[0][0])
        raise MalformedLine(first_line_no + bad, "non-finite value", path=path)

    raw_labels = values[:, -1]
    codes = raw_labels.astype(np.int64)
    unknown = (codes != raw_labels) | ~np.isin(codes, list(VALID_CODES))
    if unknown.any():
        if unknown_labels == "error":
            value = raw_labels[unknown][0]
            raise UnknownLabel(int(value) if float(value).is_integer() else value, path=path)
        logger.warning(f"{path}: relabelled {int(unknown.sum())} samples with unknown class codes as rest")
        codes = np.where(unknown, 0, codes)

    time_ms = values[:, 0]
    if np.any(np.diff(time_ms) < 0):
        logger.warning(f"{path}: timestamps are not monotone non-decreasing")

    return Recording(
        subject_id=subject_id,
        trial_id=trial_id,
        time_ms=time_ms.copy(),
        channels=np.ascontiguousarray(values[:, 1:1 + N_CHANNELS].T),
        labels=codes.astype(np.int8),
        source=str(path),
    )


def _format_number(value: float) -> str:
    if float(value).is_integer():
        return str(int(value))
    return repr(float(value))


def write_recording(rec: Recording, path: Union[str, Path]) -> None:
    """
    Write a recording in the external text format

    Amplitudes are written with repr() so parsing the file again gives back
    exactly the same float64 values.

    Args:
        rec: Recording to write
        path: Destination file
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(HEADER + "\n")
        for i in range(len(rec)):
            fields = [_format_number(rec.time_ms[i])]
            fields.extend(repr(float(v)) for v in rec.channels[:, i])
            fields.append(str(int(rec.labels[i])))
            f.write("\t".join(fields) + "\n")


_DIGITS = re.compile(r"\d+")


def infer_ids(path: Path, root: Path) -> Tuple[int, int]:
    """
    Work out (subject_id, trial_id) from a recording's location

    Per-subject layout ``root/03/2_raw_data.txt`` gives subject 3, trial 2.
    Flat layout ``root/s03_t2.txt`` takes the first two digit groups of the
    file name.

    Args:
        path: Recording path
        root: Dataset root the path was found under

    Returns:
        Tuple of (subject_id, trial_id)
    """
    rel = path.relative_to(root)
    name_digits = _DIGITS.findall(path.stem)
    parent_digits = [_DIGITS.findall(part) for part in rel.parts[:-1]]
    subject_dirs = [d for d in parent_digits if d]

    if subject_dirs and name_digits:
        return int(subject_dirs[-1][0]), int(name_digits[0])
    if len(name_digits) >= 2:
        return int(name_digits[0]), int(name_digits[1])
    raise DataError(f"Cannot infer subject/trial ids from {rel}", path=path)


def is_recording_file(path: Path, root: Path) -> bool:
    """
    True for files that look like recordings: "*raw_data*" names, numbered
    files inside a digit-named subject directory, or flat names carrying
    subject and trial digits. READMEs and other notes are not.
    """
    rel = path.relative_to(root)
    if "raw_data" in path.name:
        return True
    name_digits = _DIGITS.findall(path.stem)
    if any(part.isdigit() for part in rel.parts[:-1]) and name_digits:
        return True
    return len(name_digits) >= 2


def recording_files(root: Union[str, Path]) -> List[Path]:
    """Sorted recording paths under root; other .txt files are logged and skipped"""
    root = Path(root)
    files = []
    for path in sorted(p for p in root.glob("**/*.txt") if p.is_file()):
        if is_recording_file(path, root):
            files.append(path)
        else:
            logger.info(f"Ignoring {path.relative_to(root)}: not a recording file")
    return files


def _parse_one(path: Path, root: Path, unknown_labels: str) -> Recording:
    try:
        subject_id, trial_id = infer_ids(path, root)
        return parse_recording(path, subject_id, trial_id, unknown_labels=unknown_labels)
    except DataError as e:
        raise e.add_context(path=path)


def load_dataset(
    root: Union[str, Path],
    unknown_labels: str = "rest",
    strict: bool = True,
    n_jobs: Optional[int] = None,
) -> List[Recording]:
    """
    Load every recording under a dataset directory

    Args:
        root: Directory containing the recordings (flat or per-subject)
        unknown_labels: Policy passed to parse_recording
        strict: Propagate the first parse error; otherwise skip bad files
        n_jobs: Worker count (None means use every core)

    Returns:
        Recordings sorted by (subject_id, trial_id)
    """
    root = Path(root)
    if not root.is_dir():
        raise NoRecordingsFound(f"{root} is not a directory", path=root)

    files = recording_files(root)
    if not files:
        raise NoRecordingsFound(f"No recordings found under {root}", path=root)

    logger.info(f"Parsing {len(files)} recording files under {root}")

    def safe_parse(path: Path) -> Optional[Recording]:
        try:
            return _parse_one(path, root, unknown_labels)
        except DataError as e:
            if strict:
                raise
            logger.warning(f"Skipping {path}: {e}")
            return None

    results = Parallel(n_jobs=resolve_n_jobs(n_jobs), prefer="threads")(
        delayed(safe_parse)(path) for path in files
    )
    recordings = [r for r in results if r is not None]
    if not recordings:
        raise NoRecordingsFound(f"No parseable recordings under {root}", path=root)

    recordings.sort(key=lambda r: (r.subject_id, r.trial_id))
    subjects = {r.subject_id for r in recordings}
    logger.info(f"Loaded {len(recordings)} recordings from {len(subjects)} subjects")
    return recordings


def summarize(recordings: Sequence[Recording]) -> Dict[str, object]:
    """
    Summary used by ``emgkit inspect``

    Returns:
        {"recordings", "subjects", "samples_per_label"} with label keys as
        display names
    """
    counts: Counter = Counter()
    for rec in recordings:
        codes, n = np.unique(rec.labels, return_counts=True)
        counts.update(dict(zip(codes.tolist(), n.tolist())))

    return {
        "recordings": len(recordings),
        "subjects": len({r.subject_id for r in recordings}),
        "samples_per_label": {
            GestureLabel(code).display_name: int(counts.get(code, 0)) for code in sorted(VALID_CODES)
        },
    }


def directory_checksum(root: Union[str, Path]) -> str:
    """
    SHA-256 over the relative paths and bytes of every recording under root

    Lets users confirm that two machines hold the same corpus.
    """
    root = Path(root)
    digest = hashlib.sha256()
    for path in recording_files(root):
        digest.update(path.relative_to(root).as_posix().encode("utf-8"))
        digest.update(b"\0")
        with open(path, "rb") as f:
            for block in iter(lambda: f.read(1 << 20), b""):
                digest.update(block)
    return digest.hexdigest()
