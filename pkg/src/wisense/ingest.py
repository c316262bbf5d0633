"""Reading captured CSI from disk: binary capture logs, canonical CSV, manifests.

The binary format is the record-framed beamforming log produced by the
common commodity-NIC capture tool; byte offsets and the bit packing are
pinned in docs/FORMAT.md. A matching writer lives here too so tests and
fixtures never depend on real captures.

The canonical CSV format is a plain-text interchange format:

    # sample_rate=<f> center_freq=<f> mr=<n> mt=<n> s=<n> [spacing=<f>] [label=..] [subject=..] [trial=..]
    t,re_0,im_0,re_1,im_1,...

with one row per frame and re/im pairs in rx-major column order.
"""
from __future__ import annotations

import csv as _csv
import io
import struct
from collections import Counter
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    DataError,
    HeaderMissing,
    NonMonotoneTimestamps,
    PayloadSizeMismatch,
    RowArityMismatch,
    TooFewFrames,
    TruncatedRecord,
    UnsupportedDimensions,
    WindowOutOfRange,
)
from .model import ActivityLabel, CsiFrame, CsiStream, LabeledDataset

BEAMFORMING_CODE = 0xBB
TICK_HZ = 1e6  # timestamp counter resolution of the capture tool
_N_SUBCARRIERS = 30  # fixed by the capture format
_HEADER = struct.Struct("<IHHBBBBBbBBHH")  # 20 bytes, see docs/FORMAT.md


def csi_payload_length(n_rx: int, n_tx: int) -> int:
    """Declared CSI byte count for given antenna counts (docs/FORMAT.md)."""
    return (_N_SUBCARRIERS * (n_rx * n_tx * 8 * 2 + 3) + 7) // 8


def _decode_bfee(payload: bytes, offset: int) -> CsiFrame:
    """Decode one beamforming-measurement payload into a CsiFrame.

    ``offset`` is only used for error messages.
    """
    if len(payload) < _HEADER.size:
        raise TruncatedRecord(f"record at byte {offset}: header needs 20 bytes, got {len(payload)}")
    (
        timestamp_low,
        _bfee_count,
        _reserved,
        n_rx,
        n_tx,
        rssi_a,
        rssi_b,
        rssi_c,
        _noise,
        _agc,
        antenna_sel,
        declared_len,
        rate_code,
    ) = _HEADER.unpack_from(payload, 0)

    if not (1 <= n_rx <= 3 and 1 <= n_tx <= 3):
        raise UnsupportedDimensions(
            f"record at byte {offset}: n_rx={n_rx}, n_tx={n_tx} outside supported 3x3"
        )
    expected = csi_payload_length(n_rx, n_tx)
    if declared_len != expected:
        raise PayloadSizeMismatch(
            f"record at byte {offset}: declared CSI length {declared_len}, "
            f"format requires {expected} for {n_rx}x{n_tx}"
        )
    if len(payload) - _HEADER.size != declared_len:
        raise PayloadSizeMismatch(
            f"record at byte {offset}: payload carries {len(payload) - _HEADER.size} "
            f"CSI bytes, header declares {declared_len}"
        )

    # Bit-packed, LSB first: per subcarrier 3 skip bits, then per (rx, tx)
    # pair a signed 8-bit real followed by a signed 8-bit imaginary part.
    bits = int.from_bytes(payload[_HEADER.size :], "little")
    gains = np.empty((n_rx, n_tx, _N_SUBCARRIERS), dtype=np.complex128)
    pos = 0
    for sub in range(_N_SUBCARRIERS):
        pos += 3
        for rx in range(n_rx):
            for tx in range(n_tx):
                re = (bits >> pos) & 0xFF
                im = (bits >> (pos + 8)) & 0xFF
                pos += 16
                if re >= 128:
                    re -= 256
                if im >= 128:
                    im -= 256
                gains[rx, tx, sub] = complex(re, im)

    # The antenna-selection field maps stored rx stream j to physical
    # antenna perm[j]; apply it so downstream antenna indices are physical.
    perm = [(antenna_sel >> (2 * j)) & 0x3 for j in range(n_rx)]
    if sorted(perm) == list(range(n_rx)) and perm != list(range(n_rx)):
        reordered = np.empty_like(gains)
        for j, phys in enumerate(perm):
            reordered[phys] = gains[j]
        gains = reordered

    rssi = tuple(float(v) for v in (rssi_a, rssi_b, rssi_c)[:n_rx])
    return CsiFrame(
        timestamp=timestamp_low / TICK_HZ,
        gains=gains,
        rssi=rssi,
        rate_code=int(rate_code),
    )


def parse_capture_file(data: bytes) -> list[CsiFrame]:
    """Parse a record-framed capture log into frames (beamforming records only).

    Records are [2-byte big-endian length][1-byte code][payload]; codes other
    than 0xBB are skipped. The 32-bit microsecond timestamp counter is
    unwrapped across overflows and converted to seconds.
    """
    frames: list[CsiFrame] = []
    cur = 0
    total = len(data)
    wrap_offset = 0.0
    last_raw = None
    while cur < total:
        if total - cur < 3:
            raise TruncatedRecord(f"trailing {total - cur} bytes at offset {cur} are not a record")
        (field_len,) = struct.unpack_from(">H", data, cur)
        code = data[cur + 2]
        if field_len == 0:
            raise TruncatedRecord(f"record at byte {cur} declares zero length")
        if cur + 2 + field_len > total:
            raise TruncatedRecord(
                f"record at byte {cur} declares {field_len} bytes, only {total - cur - 2} remain"
            )
        payload = data[cur + 3 : cur + 2 + field_len]
        if code == BEAMFORMING_CODE:
            frame = _decode_bfee(payload, cur)
            raw_t = frame.timestamp
            if last_raw is not None and raw_t < last_raw:
                wrap_offset += 2**32 / TICK_HZ
            last_raw = raw_t
            if wrap_offset:
                frame = replace(frame, timestamp=raw_t + wrap_offset)
            frames.append(frame)
        cur += 2 + field_len
    return frames


def write_capture_file(frames: Iterable[CsiFrame]) -> bytes:
    """Serialize frames to the binary capture format (exact round-trip).

    Gains must be integer-valued with real/imag in [-128, 127]; the capture
    format stores signed bytes. Timestamps are rounded to the 1 us tick.
    """
    out = bytearray()
    for count, frame in enumerate(frames):
        n_rx, n_tx, n_sub = frame.dims
        if n_sub != _N_SUBCARRIERS:
            raise UnsupportedDimensions(f"capture format is fixed at 30 subcarriers, got {n_sub}")
        if not (1 <= n_rx <= 3 and 1 <= n_tx <= 3):
            raise UnsupportedDimensions(f"capture format supports up to 3x3, got {n_rx}x{n_tx}")
        re = frame.gains.real
        im = frame.gains.imag
        if (re != np.round(re)).any() or (im != np.round(im)).any():
            raise ValueError("capture format stores integer gains; got non-integer values")
        if re.min() < -128 or re.max() > 127 or im.min() < -128 or im.max() > 127:
            raise ValueError("gain components must fit signed 8-bit range [-128, 127]")

        bits = 0
        pos = 0
        for sub in range(n_sub):
            pos += 3  # skip bits, written as zeros
            for rx in range(n_rx):
                for tx in range(n_tx):
                    r = int(re[rx, tx, sub]) & 0xFF
                    i = int(im[rx, tx, sub]) & 0xFF
                    bits |= r << pos
                    bits |= i << (pos + 8)
                    pos += 16
        csi_len = csi_payload_length(n_rx, n_tx)
        csi_bytes = bits.to_bytes(csi_len, "little")

        rssi = frame.rssi or (0.0,) * n_rx
        rssi3 = [int(round(v)) for v in rssi] + [0] * (3 - len(rssi))
        antenna_sel = 0b100100 if n_rx == 3 else (0b0100 if n_rx == 2 else 0)  # identity perm
        header = _HEADER.pack(
            int(round(frame.timestamp * TICK_HZ)) & 0xFFFFFFFF,
            count & 0xFFFF,
            0,
            n_rx,
            n_tx,
            rssi3[0],
            rssi3[1],
            rssi3[2],
            -92,
            0,
            antenna_sel,
            csi_len,
            (frame.rate_code or 0) & 0xFFFF,
        )
        record = bytes([BEAMFORMING_CODE]) + header + csi_bytes
        out += struct.pack(">H", len(record)) + record
    return bytes(out)


# ---------------------------------------------------------------------------
# canonical CSV


def _format_float(x: float) -> str:
    return format(float(x), ".17g")


def write_canonical_csv(stream: CsiStream, dest=None) -> str | None:
    """Write a stream to canonical CSV. ``dest`` may be a path, a file object,
    or None (return the text)."""
    if isinstance(dest, (str, Path)):
        with open(dest, "w") as fh:
            return write_canonical_csv(stream, fh)
    buf = dest if dest is not None else io.StringIO()
    n_rx, n_tx, n_sub = stream.dims
    header = (
        f"# sample_rate={_format_float(stream.sample_rate)}"
        f" center_freq={_format_float(stream.center_frequency)}"
        f" mr={n_rx} mt={n_tx} s={n_sub}"
        f" spacing={_format_float(stream.subcarrier_spacing)}"
    )
    if stream.label is not None:
        header += f" label={stream.label.value}"
    if stream.subject_id is not None:
        header += f" subject={stream.subject_id}"
    if stream.trial_id is not None:
        header += f" trial={stream.trial_id}"
    buf.write(header + "\n")
    tensor = stream.gains_tensor.reshape(len(stream), -1)
    for k, frame in enumerate(stream.frames):
        row = [_format_float(frame.timestamp)]
        for g in tensor[k]:
            row.append(_format_float(g.real))
            row.append(_format_float(g.imag))
        buf.write(",".join(row) + "\n")
    if dest is None:
        return buf.getvalue()
    return None


def parse_canonical_csv(text: str) -> CsiStream:
    """Parse canonical CSV text into a CsiStream."""
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or not lines[0].lstrip().startswith("#"):
        raise HeaderMissing("canonical CSV must start with a '# key=value ...' header line")
    fields: dict[str, str] = {}
    for token in lines[0].lstrip("# ").split():
        if "=" in token:
            key, _, value = token.partition("=")
            fields[key] = value
    required = ("sample_rate", "center_freq", "mr", "mt", "s")
    missing = [k for k in required if k not in fields]
    if missing:
        raise HeaderMissing(f"canonical CSV header missing keys: {', '.join(missing)}")
    try:
        sample_rate = float(fields["sample_rate"])
        center_freq = float(fields["center_freq"])
        n_rx, n_tx, n_sub = int(fields["mr"]), int(fields["mt"]), int(fields["s"])
        spacing = float(fields.get("spacing", CsiStream.__dataclass_fields__["subcarrier_spacing"].default))
    except ValueError as exc:
        raise HeaderMissing(f"canonical CSV header has malformed values: {exc}") from exc
    label = ActivityLabel.from_string(fields["label"]) if "label" in fields else None

    arity = 1 + 2 * n_rx * n_tx * n_sub
    timestamps = []
    gains_rows = []
    for lineno, line in enumerate(lines[1:], start=2):
        parts = line.split(",")
        if len(parts) != arity:
            raise RowArityMismatch(f"line {lineno}: expected {arity} fields, got {len(parts)}")
        try:
            values = [float(p) for p in parts]
        except ValueError as exc:
            raise DataError(f"line {lineno}: unparsable numeric value ({exc})") from exc
        timestamps.append(values[0])
        pairs = np.asarray(values[1:]).reshape(-1, 2)
        gains_rows.append((pairs[:, 0] + 1j * pairs[:, 1]).reshape(n_rx, n_tx, n_sub))
    ts = np.asarray(timestamps)
    if len(ts) > 1 and not (np.diff(ts) > 0).all():
        bad = int(np.flatnonzero(np.diff(ts) <= 0)[0]) + 3  # header + 1-based + next row
        raise NonMonotoneTimestamps(f"timestamps not strictly increasing at line {bad - 1}")
    return CsiStream.from_tensor(
        ts,
        np.asarray(gains_rows).reshape(len(ts), n_rx, n_tx, n_sub) if gains_rows else np.zeros((0, n_rx, n_tx, n_sub)),
        sample_rate=sample_rate,
        center_frequency=center_freq,
        subcarrier_spacing=spacing,
        label=label,
        subject_id=fields.get("subject"),
        trial_id=fields.get("trial"),
    )


# ---------------------------------------------------------------------------
# filtering / regularization


def rate_filter(frames: Sequence[CsiFrame], keep_rate_codes: Iterable[int] = ()) -> list[CsiFrame]:
    """Drop frames whose rate_code is not in the keep set.

    With an empty keep set, the modal rate code is kept (ties broken toward
    the smallest code), which suppresses frames captured during rate
    adaptation transients.
    """
    keep = set(keep_rate_codes)
    frames = list(frames)
    if not frames:
        return []
    if not keep:
        counts = Counter(fr.rate_code for fr in frames)
        best = max(counts.items(), key=lambda kv: (kv[1], -(kv[0] if kv[0] is not None else -1)))
        keep = {best[0]}
    return [fr for fr in frames if fr.rate_code in keep]


GAP_FACTOR = 5  # gaps longer than this many frame periods are hold-filled


def regularize(
    frames: Sequence[CsiFrame] | CsiStream,
    target_rate: float,
    *,
    center_frequency: float | None = None,
    subcarrier_spacing: float | None = None,
    label: ActivityLabel | None = None,
    subject_id: str | None = None,
    trial_id: str | None = None,
) -> CsiStream:
    """Resample frames onto the uniform grid t_k = t_0 + k/target_rate.

    Nearest-neighbor selection in time (CSI phase is not meaningfully
    interpolable across multipath changes). Grid points inside a source gap
    longer than GAP_FACTOR frame periods hold the last frame before the gap
    and set ``gap_filled`` on the stream.
    """
    if isinstance(frames, CsiStream):
        stream = frames
        center_frequency = center_frequency if center_frequency is not None else stream.center_frequency
        subcarrier_spacing = subcarrier_spacing if subcarrier_spacing is not None else stream.subcarrier_spacing
        label = label if label is not None else stream.label
        subject_id = subject_id if subject_id is not None else stream.subject_id
        trial_id = trial_id if trial_id is not None else stream.trial_id
        frames = stream.frames
    frames = list(frames)
    if len(frames) < 2:
        raise TooFewFrames(f"regularize needs at least 2 frames, got {len(frames)}")
    if center_frequency is None:
        raise ValueError("center_frequency is required when regularizing bare frames")
    period = 1.0 / target_rate
    ts = np.array([fr.timestamp for fr in frames])
    t0 = ts[0]
    n_out = int(np.floor((ts[-1] - t0) * target_rate + 1e-9)) + 1
    grid = t0 + np.arange(n_out) / target_rate

    right = np.searchsorted(ts, grid)  # first source index with ts >= grid point
    left = np.clip(right - 1, 0, len(ts) - 1)
    right = np.clip(right, 0, len(ts) - 1)
    pick_right = np.abs(ts[right] - grid) < np.abs(grid - ts[left])
    nearest = np.where(pick_right, right, left)

    # Hold the last pre-gap frame across long source gaps.
    gap = (ts[right] - ts[left]) > GAP_FACTOR * period
    in_gap = gap & (grid > ts[left]) & (grid < ts[right])
    nearest = np.where(in_gap, left, nearest)

    out_frames = tuple(
        replace(frames[int(j)], timestamp=float(t0 + k / target_rate))
        for k, j in enumerate(nearest)
    )
    return CsiStream(
        frames=out_frames,
        sample_rate=target_rate,
        center_frequency=center_frequency,
        subcarrier_spacing=subcarrier_spacing
        if subcarrier_spacing is not None
        else CsiStream.__dataclass_fields__["subcarrier_spacing"].default,
        label=label,
        subject_id=subject_id,
        trial_id=trial_id,
        gap_filled=bool(in_gap.any()),
    )


# ---------------------------------------------------------------------------
# manifests


@dataclass(frozen=True)
class ManifestEntry:
    """One labeled trial window inside a capture file."""

    path: str
    label: ActivityLabel
    subject_id: str
    trial_id: str
    start_s: float
    stop_s: float

    def __post_init__(self) -> None:
        if not self.start_s < self.stop_s:
            raise DataError(f"manifest window must have start < stop, got [{self.start_s}, {self.stop_s})")


def load_manifest(text: str, *, base_dir: str | Path | None = None, check_paths: bool = True) -> list[ManifestEntry]:
    """Parse a manifest CSV (columns: file,label,subject,trial,start_s,stop_s)."""
    reader = _csv.DictReader(io.StringIO(text))
    required = {"file", "label", "subject", "trial", "start_s", "stop_s"}
    if reader.fieldnames is None or not required.issubset(set(reader.fieldnames)):
        raise HeaderMissing(f"manifest needs columns {sorted(required)}, got {reader.fieldnames}")
    entries = []
    for row in reader:
        path = row["file"]
        resolved = Path(base_dir, path) if base_dir is not None else Path(path)
        if check_paths and not resolved.exists():
            raise DataError(f"manifest references missing file: {resolved}")
        entries.append(
            ManifestEntry(
                path=str(resolved),
                label=ActivityLabel.from_string(row["label"]),
                subject_id=row["subject"],
                trial_id=row["trial"],
                start_s=float(row["start_s"]),
                stop_s=float(row["stop_s"]),
            )
        )
    return entries


def slice_by_manifest(stream: CsiStream, entries: Sequence[ManifestEntry]) -> LabeledDataset:
    """Cut one labeled trial stream per manifest entry; overlaps are permitted."""
    if not stream.frames:
        raise WindowOutOfRange("cannot slice an empty stream")
    ts = stream.timestamps()
    trials = []
    for entry in entries:
        if entry.start_s < ts[0] - 1e-9 or entry.stop_s > ts[-1] + 1.0 / stream.sample_rate + 1e-9:
            raise WindowOutOfRange(
                f"window [{entry.start_s}, {entry.stop_s}) outside stream range "
                f"[{ts[0]}, {ts[-1]}]"
            )
        mask = (ts >= entry.start_s) & (ts < entry.stop_s)
        idx = np.flatnonzero(mask)
        if len(idx) == 0:
            raise WindowOutOfRange(f"window [{entry.start_s}, {entry.stop_s}) contains no frames")
        trials.append(
            CsiStream(
                frames=tuple(stream.frames[int(i)] for i in idx),
                sample_rate=stream.sample_rate,
                center_frequency=stream.center_frequency,
                subcarrier_spacing=stream.subcarrier_spacing,
                label=entry.label,
                subject_id=entry.subject_id,
                trial_id=entry.trial_id,
            )
        )
    return LabeledDataset(trials=tuple(trials))
