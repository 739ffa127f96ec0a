"""Matvec oracle layer: dense backing, phase-tagged call ledger, file format."""
from __future__ import annotations

import numpy as np

from . import geometry

PHASES = (
    "outer",
    "bisection",
    "supg_progress",
    "supg_guilty",
    "map_and_center",
    "verification",
)

_MAGIC = "MGAME v1"
_NORM_TOL = 1e-9


class MatvecLedger:
    """Per-phase matvec counter. One increment per counted oracle call."""

    def __init__(self):
        self.counts = {p: 0 for p in PHASES}

    def tick(self, phase, k=1):
        self.counts[phase] += k

    @property
    def total(self):
        return sum(self.counts.values())

    @property
    def algorithm_total(self):
        """Total excluding the verification phase (certification is free)."""
        return self.total - self.counts["verification"]

    def as_dict(self):
        return dict(self.counts)

    def __repr__(self):
        inner = ", ".join(f"{p}={c}" for p, c in self.counts.items() if c)
        return f"MatvecLedger({inner})"


class DenseBacking:
    """Dense matrix oracle; validates the setup's normalization on construction.

    l1-l1 requires max |A_ij| <= 1, l2-l1 requires every row 2-norm <= 1.
    The matrix is frozen; instances are safe to share across threads (each
    run keeps its own ledger).
    """

    def __init__(self, kind, matrix):
        a = np.array(matrix, dtype=np.float64, copy=True)
        if a.ndim != 2:
            raise ValueError("matrix must be 2-d")
        if kind not in geometry.KINDS:
            raise ValueError(f"unknown kind `{kind}`")
        if kind == geometry.L1L1:
            worst = float(np.max(np.abs(a))) if a.size else 0.0
        else:
            worst = float(np.max(np.linalg.norm(a, axis=1))) if a.size else 0.0
        if worst > 1.0 + _NORM_TOL:
            raise ValueError(f"matrix violates {kind} normalization (witness {worst:.6g})")
        a.setflags(write=False)
        self.kind = kind
        self.matrix = a
        self.m, self.n = a.shape

    def apply(self, v):
        return self.matrix @ v

    def apply_t(self, w):
        return self.matrix.T @ w

    @property
    def shape(self):
        return (self.m, self.n)


def save(path, backing):
    """Write an MGAME v1 file: ASCII header line, then row-major float64 LE payload."""
    header = f"{_MAGIC} {backing.kind} {backing.m} {backing.n}\n"
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        fh.write(np.ascontiguousarray(backing.matrix, dtype="<f8").tobytes())


def load(path):
    """Read an MGAME v1 file back into a DenseBacking (normalization re-validated)."""
    with open(path, "rb") as fh:
        header = fh.readline().decode("ascii", errors="replace").rstrip("\n")
        parts = header.split(" ")
        if len(parts) != 5 or " ".join(parts[:2]) != _MAGIC:
            raise ValueError(f"not an MGAME v1 file: header {header!r}")
        kind = parts[2]
        try:
            m, n = int(parts[3]), int(parts[4])
        except ValueError as exc:
            raise ValueError(f"bad MGAME header dimensions: {header!r}") from exc
        payload = fh.read()
    expected = m * n * 8
    if len(payload) != expected:
        raise ValueError(f"MGAME payload size {len(payload)}, expected {expected}")
    a = np.frombuffer(payload, dtype="<f8").reshape(m, n)
    return DenseBacking(kind, a)


def counted_matvec(orc, ledger, phase, v):
    """A v with exactly one ledger increment."""
    v = np.asarray(v)
    if v.shape != (orc.shape[1],):
        raise ValueError(f"matvec input shape {v.shape}, oracle is {orc.shape}")
    ledger.tick(phase)
    return orc.apply(v)


def counted_matvec_t(orc, ledger, phase, w):
    """A^T w with exactly one ledger increment."""
    w = np.asarray(w)
    if w.shape != (orc.shape[0],):
        raise ValueError(f"matvec-T input shape {w.shape}, oracle is {orc.shape}")
    ledger.tick(phase)
    return orc.apply_t(w)


def grounded_apply(setup, orc, ledger, phase, basis, v):
    """(A)_basis v, wrapping scalings around exactly one counted matvec."""
    row, col = geometry.matrix_scalings(setup, basis)
    return row * counted_matvec(orc, ledger, phase, col * v)


def grounded_apply_t(setup, orc, ledger, phase, basis, w):
    """(A)_basis^T w, wrapping scalings around exactly one counted matvec."""
    row, col = geometry.matrix_scalings(setup, basis)
    return col * counted_matvec_t(orc, ledger, phase, row * w)


def segment_delta_apply(setup, orc, ledger, phase, tail, head, v):
    """((A)_head - (A)_tail) v; a null tail contributes zero and costs nothing."""
    out = grounded_apply(setup, orc, ledger, phase, head, v)
    if tail is not None:
        out = out - grounded_apply(setup, orc, ledger, phase, tail, v)
    return out


def segment_delta_apply_t(setup, orc, ledger, phase, tail, head, w):
    out = grounded_apply_t(setup, orc, ledger, phase, head, w)
    if tail is not None:
        out = out - grounded_apply_t(setup, orc, ledger, phase, tail, w)
    return out


def certified_gap(setup, orc, ledger, z):
    """Certified saddle-point gap of z: exactly two verification-phase matvecs."""
    ax = counted_matvec(orc, ledger, "verification", z.x)
    aty = counted_matvec_t(orc, ledger, "verification", z.y)
    return geometry.gap_from_actions(setup, ax, aty)
