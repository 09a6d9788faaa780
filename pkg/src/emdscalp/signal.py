"""EEG ingestion and preprocessing.

EDF/EDF+ parsing (numpy only), 8-30 Hz zero-phase bandpass, segmentation of
labeled trials into fixed-length epochs, and seeded stratified train/test
splitting.  Annotations are kept in sample units throughout.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.signal import butter, filtfilt

__all__ = [
    "Annotation",
    "Recording",
    "Epoch",
    "SplitSpec",
    "read_recording",
    "read_recording_csv",
    "bandpass",
    "epoch_trials",
    "split",
]

log = logging.getLogger(__name__)

#: default annotation code -> epoch label mapping (fist movement/imagery)
DEFAULT_LABEL_CODES = {"T1": "Left", "T2": "Right"}


@dataclass(frozen=True)
class Annotation:
    """Event marker: onset and duration in samples plus its code."""

    onset: int
    duration: int
    code: str


@dataclass(eq=False)
class Recording:
    """A multichannel recording in physical units."""

    channel_names: list[str]
    sample_rate: float
    data: np.ndarray
    annotations: list[Annotation] = field(default_factory=list)

    def __post_init__(self) -> None:
        self.data = np.asarray(self.data, dtype=float)
        if self.data.ndim != 2 or self.data.shape[0] != len(self.channel_names):
            raise ValueError(
                f"data shape {self.data.shape} does not match "
                f"{len(self.channel_names)} channel names"
            )
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")
        n = self.data.shape[1]
        for ann in self.annotations:
            if ann.onset < 0 or ann.onset > n:
                raise ValueError(f"annotation onset {ann.onset} outside data bounds")

    @property
    def n_samples(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True, eq=False)
class Epoch:
    """One fixed-length labeled segment of a trial."""

    data: np.ndarray
    label: str
    subject: int
    trial: int
    slice_index: int


@dataclass(frozen=True)
class SplitSpec:
    """Reproducible split: same seed and epochs give the same partition."""

    seed: int
    test_fraction: float = 0.2

    def __post_init__(self) -> None:
        if not 0.0 < self.test_fraction < 1.0:
            raise ValueError("test_fraction must be in (0, 1)")


def _edf_int(raw: bytes, what: str) -> int:
    try:
        return int(raw.decode("latin-1").strip())
    except ValueError:
        raise ValueError(f"malformed header: bad {what} field {raw!r}") from None


def _edf_float(raw: bytes, what: str) -> float:
    try:
        return float(raw.decode("latin-1").strip())
    except ValueError:
        raise ValueError(f"malformed header: bad {what} field {raw!r}") from None


def _parse_tals(buf: bytes, sample_rate: float) -> list[Annotation]:
    annotations = []
    for tal in buf.split(b"\x00"):
        if not tal:
            continue
        fields = tal.split(b"\x14")
        if len(fields) < 2:
            raise ValueError(f"unknown annotation encoding: {tal!r}")
        head = fields[0]
        if b"\x15" in head:
            onset_b, dur_b = head.split(b"\x15", 1)
        else:
            onset_b, dur_b = head, b"0"
        try:
            onset_s = float(onset_b.decode("latin-1"))
            dur_s = float(dur_b.decode("latin-1"))
        except ValueError:
            raise ValueError(f"unknown annotation encoding: {tal!r}") from None
        for text in fields[1:]:
            code = text.decode("latin-1").strip()
            if code:  # empty text = record-keeping timestamp, not an event
                annotations.append(
                    Annotation(
                        onset=int(round(onset_s * sample_rate)),
                        duration=int(round(dur_s * sample_rate)),
                        code=code,
                    )
                )
    return annotations


def read_recording(path: str | Path) -> Recording:
    """Read an EDF/EDF+ file into physical units.

    Digital values are mapped through each signal's physical/digital
    calibration; 'EDF Annotations' channels are decoded into sample-unit
    annotations and excluded from the data matrix.  All data channels must
    share one sampling rate.
    """
    raw = Path(path).read_bytes()
    if len(raw) < 256:
        raise ValueError("malformed header: file shorter than 256 bytes")
    n_records = _edf_int(raw[236:244], "record count")
    duration = _edf_float(raw[244:252], "record duration")
    ns = _edf_int(raw[252:256], "signal count")
    if ns < 1:
        raise ValueError(f"malformed header: claims {ns} signals")
    if duration <= 0:
        raise ValueError(f"malformed header: record duration {duration}")
    header_bytes = 256 + ns * 256
    if len(raw) < header_bytes:
        raise ValueError("malformed header: truncated signal header block")

    def sig_field(block_off: int, width: int, i: int) -> bytes:
        # block_off: byte offset of the field block within the per-signal
        # header region (each block holds ns fixed-width entries)
        start = 256 + block_off * ns + width * i
        return raw[start:start + width]

    labels = [sig_field(0, 16, i).decode("latin-1").strip() for i in range(ns)]
    pmin = [_edf_float(sig_field(104, 8, i), "physical min") for i in range(ns)]
    pmax = [_edf_float(sig_field(112, 8, i), "physical max") for i in range(ns)]
    dmin = [_edf_int(sig_field(120, 8, i), "digital min") for i in range(ns)]
    dmax = [_edf_int(sig_field(128, 8, i), "digital max") for i in range(ns)]
    nsamp = [_edf_int(sig_field(216, 8, i), "samples per record") for i in range(ns)]

    record_samples = sum(nsamp)
    record_bytes = 2 * record_samples
    if n_records < 0:  # unknown record count is legal; derive from file size
        n_records = (len(raw) - header_bytes) // record_bytes
    if len(raw) < header_bytes + n_records * record_bytes:
        raise ValueError("truncated data records")

    ann_idx = [i for i, lab in enumerate(labels) if lab == "EDF Annotations"]
    data_idx = [i for i in range(ns) if i not in ann_idx]
    if not data_idx:
        raise ValueError("recording has no data channels")
    rates = {nsamp[i] / duration for i in data_idx}
    if len(rates) != 1:
        raise ValueError(f"channels with differing sample rates unsupported: {sorted(rates)}")
    sample_rate = rates.pop()

    samples = np.frombuffer(
        raw, dtype="<i2", count=n_records * record_samples, offset=header_bytes
    ).reshape(n_records, record_samples)
    offsets = np.concatenate([[0], np.cumsum(nsamp)])

    data = np.empty((len(data_idx), n_records * nsamp[data_idx[0]]))
    names = []
    for out_row, i in enumerate(data_idx):
        dig = samples[:, offsets[i]:offsets[i + 1]].ravel().astype(float)
        if dmax[i] == dmin[i]:
            raise ValueError(f"malformed header: flat digital range on signal {i}")
        scale = (pmax[i] - pmin[i]) / (dmax[i] - dmin[i])
        data[out_row] = (dig - dmin[i]) * scale + pmin[i]
        names.append(labels[i].rstrip("."))

    annotations: list[Annotation] = []
    for i in ann_idx:
        byte_lo, byte_hi = 2 * offsets[i], 2 * offsets[i + 1]
        for r in range(n_records):
            rec_off = header_bytes + r * record_bytes
            annotations.extend(
                _parse_tals(raw[rec_off + byte_lo:rec_off + byte_hi], sample_rate)
            )
    annotations.sort(key=lambda a: (a.onset, a.code))
    return Recording(names, sample_rate, data, annotations)


def read_recording_csv(
    data_path: str | Path,
    annotation_path: str | Path | None = None,
    sample_rate: float = 160.0,
) -> Recording:
    """Read the CSV alternative format.

    `data_path`: header row of channel names, one column per channel.
    `annotation_path`: optional sidecar with ``onset,duration,code`` rows
    in sample units.
    """
    with open(data_path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        names = next(reader)
        columns = [[float(v) for v in row] for row in reader if row]
    data = np.array(columns, dtype=float).T if columns else np.zeros((len(names), 0))
    annotations = []
    if annotation_path is not None:
        with open(annotation_path, newline="", encoding="utf-8") as fh:
            for row in csv.reader(fh):
                if not row or row[0].startswith("#") or row[0] == "onset":
                    continue
                annotations.append(Annotation(int(row[0]), int(row[1]), row[2]))
    return Recording([n.strip() for n in names], sample_rate, data, annotations)


def bandpass(rec: Recording, lo: float = 8.0, hi: float = 30.0) -> Recording:
    """Zero-phase Butterworth bandpass, applied forward-backward per channel.

    4th-order design; shape and annotations are preserved.
    """
    nyq = rec.sample_rate / 2.0
    if not 0.0 < lo < hi < nyq:
        raise ValueError(f"invalid band edges ({lo}, {hi}) for Nyquist {nyq}")
    b, a = butter(4, [lo / nyq, hi / nyq], btype="bandpass")
    filtered = filtfilt(b, a, rec.data, axis=1)
    return Recording(list(rec.channel_names), rec.sample_rate, filtered, list(rec.annotations))


def epoch_trials(
    rec: Recording,
    slice_len_s: float = 1.0,
    trial_len_s: float = 4.0,
    label_codes: dict[str, str] | None = None,
    subject: int = 0,
    trial_offset: int = 0,
) -> list[Epoch]:
    """Cut labeled trials into consecutive non-overlapping epochs.

    Each annotated trial contributes ``trial_len_s / slice_len_s`` epochs
    drawn from the first `trial_len_s` seconds after onset, all inheriting
    the trial label.  Unlabeled codes (rest) are ignored.  Trials extending
    past the end of the data are skipped; the count is logged.
    """
    if label_codes is None:
        label_codes = DEFAULT_LABEL_CODES
    slice_len = int(round(slice_len_s * rec.sample_rate))
    n_slices = int(round(trial_len_s / slice_len_s))
    if slice_len < 1 or n_slices < 1:
        raise ValueError("slice length and trial length must be positive")
    epochs: list[Epoch] = []
    trial = trial_offset
    skipped = 0
    for ann in rec.annotations:
        label = label_codes.get(ann.code)
        if label is None:
            continue
        end = ann.onset + n_slices * slice_len
        if end > rec.n_samples:
            skipped += 1
            continue
        for s in range(n_slices):
            start = ann.onset + s * slice_len
            seg = np.array(rec.data[:, start:start + slice_len])
            epochs.append(Epoch(seg, label, subject=subject, trial=trial, slice_index=s))
        trial += 1
    if skipped:
        log.warning("skipped %d truncated trial(s) extending past end of data", skipped)
    return epochs


def split(epochs: list[Epoch], spec: SplitSpec) -> tuple[list[Epoch], list[Epoch]]:
    """Seeded stratified partition into (train, test).

    Total test size is ``round(test_fraction * n)``, allocated per class by
    largest remainder and clamped so both classes appear on both sides.
    Deterministic given the seed; train and test together are exactly the
    input epochs.
    """
    by_label: dict[str, list[int]] = {}
    for i, ep in enumerate(epochs):
        by_label.setdefault(ep.label, []).append(i)
    labels = sorted(by_label)
    if len(labels) < 2:
        raise ValueError("need at least 2 classes to split")
    for lab in labels:
        if len(by_label[lab]) < 2:
            raise ValueError(f"class {lab!r} has fewer than 2 epochs")

    n = len(epochs)
    total_test = int(round(spec.test_fraction * n))
    ideal = {lab: spec.test_fraction * len(by_label[lab]) for lab in labels}
    counts = {lab: int(np.floor(ideal[lab])) for lab in labels}
    remainder = total_test - sum(counts.values())
    by_frac = sorted(labels, key=lambda lab: (-(ideal[lab] - counts[lab]), lab))
    for lab in by_frac[:max(remainder, 0)]:
        counts[lab] += 1
    for lab in labels:  # both classes must appear on both sides
        counts[lab] = min(max(counts[lab], 1), len(by_label[lab]) - 1)

    rng = np.random.default_rng(spec.seed)
    test_idx: set[int] = set()
    for lab in labels:
        perm = rng.permutation(len(by_label[lab]))
        test_idx.update(by_label[lab][p] for p in perm[:counts[lab]])
    train = [epochs[i] for i in range(n) if i not in test_idx]
    test = [epochs[i] for i in range(n) if i in test_idx]
    return train, test
