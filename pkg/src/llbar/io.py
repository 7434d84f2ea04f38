"""Binary field snapshots, run checkpoints, and flat key=value files.

Snapshot layout: an ascii magic line, a short ascii header (key=value,
one per line, blank line terminator), then the raw little-endian array
bytes. No timestamps anywhere: a file's bytes are a pure function of the
data, so reruns with the same seed produce identical files.

Checkpoint layout: one snapshot of the state field, then a scheme-state
header (t, dt, step), then zero or two more raw arrays for the two-step
scheme's history. Loading reconstructs everything needed to continue the
run bit-exactly.
"""

from __future__ import annotations

import os

import numpy as np

from .errors import GridMismatchError, SnapshotFormatError, UsageError
from .grid import PHYSICAL, SPECTRAL, Field, Grid
from .integrator import SchemeState

SNAPSHOT_MAGIC = b"LLBAR1\n"
CHECKPOINT_MAGIC = b"LLBARCK1\n"

_DTYPES = {SPECTRAL: np.dtype("<c16"), PHYSICAL: np.dtype("<f8")}


def _write_header(fh, pairs):
    for key, value in pairs:
        fh.write(f"{key}={value}\n".encode("ascii"))
    fh.write(b"\n")


def _read_header(fh, path):
    pairs = {}
    while True:
        line = fh.readline()
        if line == b"\n":
            return pairs
        if not line.endswith(b"\n"):
            raise SnapshotFormatError(f"truncated header in {path}")
        key, sep, value = line[:-1].decode("ascii", "replace").partition("=")
        if not sep:
            raise SnapshotFormatError(f"malformed header line in {path}: {line!r}")
        pairs[key] = value


def _read_exact(fh, nbytes, path):
    buf = fh.read(nbytes)
    if len(buf) != nbytes:
        raise SnapshotFormatError(
            f"truncated data in {path}: wanted {nbytes} bytes, got {len(buf)}"
        )
    return buf


def _write_field_body(fh, field: Field):
    g = field.grid
    _write_header(
        fh,
        [
            ("version", "1"),
            ("representation", field.representation),
            ("dim", g.dim),
            ("n", g.n),
            ("box_length", repr(g.box_length)),
        ],
    )
    data = np.ascontiguousarray(field.data, dtype=_DTYPES[field.representation])
    fh.write(data.tobytes())


def _read_field_body(fh, path) -> Field:
    head = _read_header(fh, path)
    try:
        representation = head["representation"]
        dim = int(head["dim"])
        n = int(head["n"])
        box_length = float(head["box_length"])
        dtype = _DTYPES[representation]
    except (KeyError, ValueError) as exc:
        raise SnapshotFormatError(f"bad snapshot header in {path}: {exc}") from exc
    grid = Grid(dim, n, box_length)
    nbytes = 3 * grid.npoints * dtype.itemsize
    raw = _read_exact(fh, nbytes, path)
    data = np.frombuffer(raw, dtype=dtype).reshape((3,) + grid.shape).copy()
    return Field(grid, data, representation)


def save_snapshot(path, field: Field) -> None:
    with open(path, "wb") as fh:
        fh.write(SNAPSHOT_MAGIC)
        _write_field_body(fh, field)


def load_snapshot(path, expected_grid: Grid | None = None) -> Field:
    """Read a field snapshot; bit-exact inverse of save_snapshot.

    With expected_grid supplied, a shape/box mismatch is a
    GridMismatchError (the file is valid, just for another run).
    """
    with open(path, "rb") as fh:
        magic = fh.read(len(SNAPSHOT_MAGIC))
        if magic != SNAPSHOT_MAGIC:
            raise SnapshotFormatError(f"bad magic in {path}: {magic!r}")
        field = _read_field_body(fh, path)
        if fh.read(1):
            raise SnapshotFormatError(f"trailing bytes in {path}")
    _check_grid(field.grid, expected_grid, path)
    return field


def _check_grid(got: Grid, expected: Grid | None, path):
    if expected is not None and not got.compatible(expected):
        raise GridMismatchError(
            f"snapshot {path} holds a {got.dim}d n={got.n} box={got.box_length:g} "
            f"field, run expects {expected.dim}d n={expected.n} "
            f"box={expected.box_length:g}"
        )


def save_checkpoint(path, field: Field, state: SchemeState, dt: float) -> None:
    """Persist the integration state: field + (t, dt, step) + history."""
    has_history = state.prev_field is not None
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        _write_field_body(fh, field)
        _write_header(
            fh,
            [
                ("t", repr(state.t)),
                ("dt", repr(float(dt))),
                ("step", state.step),
                ("history", int(has_history)),
            ],
        )
        if has_history:
            _write_field_body(fh, state.prev_field)
            _write_field_body(fh, state.prev_nonlinear)


def load_checkpoint(path, expected_grid: Grid | None = None):
    """Returns (field, SchemeState, dt); inverse of save_checkpoint."""
    with open(path, "rb") as fh:
        magic = fh.read(len(CHECKPOINT_MAGIC))
        if magic != CHECKPOINT_MAGIC:
            raise SnapshotFormatError(f"bad magic in {path}: {magic!r}")
        field = _read_field_body(fh, path)
        head = _read_header(fh, path)
        try:
            t = float(head["t"])
            dt = float(head["dt"])
            step = int(head["step"])
            has_history = bool(int(head["history"]))
        except (KeyError, ValueError) as exc:
            raise SnapshotFormatError(f"bad checkpoint header in {path}: {exc}") from exc
        prev_field = prev_nonlinear = None
        if has_history:
            prev_field = _read_field_body(fh, path)
            prev_nonlinear = _read_field_body(fh, path)
        if fh.read(1):
            raise SnapshotFormatError(f"trailing bytes in {path}")
    _check_grid(field.grid, expected_grid, path)
    state = SchemeState(
        t=t, step=step, prev_field=prev_field, prev_nonlinear=prev_nonlinear
    )
    return field, state, dt


def read_config(path) -> dict:
    """Flat `key = value` text: one pair per line, # comments, blank lines.

    Values stay strings; interpretation belongs to the consumer. Duplicate
    keys are an error (silent override hides typos in run configs).
    """
    out = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.split("#", 1)[0].strip()
            if not text:
                continue
            key, sep, value = text.partition("=")
            if not sep:
                raise UsageError(
                    f"{path}:{lineno}: expected `key = value`, got {line.rstrip()!r}"
                )
            key = key.strip()
            if not key:
                raise UsageError(f"{path}:{lineno}: empty key")
            if key in out:
                raise UsageError(f"{path}:{lineno}: duplicate key {key!r}")
            out[key] = value.strip()
    return out


def write_config(path, mapping, header: str | None = None) -> None:
    """Inverse of read_config (keys sorted for diff-stable output)."""
    with open(path, "w") as fh:
        if header:
            for line in header.splitlines():
                fh.write(f"# {line}\n")
        for key in sorted(mapping):
            fh.write(f"{key} = {mapping[key]}\n")


def ensure_outdir(path) -> str:
    path = os.fspath(path)
    try:
        os.makedirs(path, exist_ok=True)
        probe = os.path.join(path, ".write-probe")
        with open(probe, "w") as fh:
            fh.write("")
        os.remove(probe)
    except OSError as exc:
        raise UsageError(f"output directory {path!r} not writable: {exc}") from exc
    return path
