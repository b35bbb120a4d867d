"""Chirp-replica measurement matrices on a super-resolved delay grid.

A column of the dictionary is the sampled return of a linear chirp delayed by
a (possibly fractional) number of samples.  Fractional delays are realised by
evaluating the analytic chirp at shifted sample times, never by interpolation.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence, Union

import numpy as np

__all__ = [
    "ChirpSpec",
    "Dictionary",
    "DictionaryFormatError",
    "build_chirp_dictionary",
    "linf_matrix_norm",
    "column_subset",
    "gram",
    "save_dictionary",
    "load_dictionary",
    "as_matrix",
]

FILE_MAGIC = "sparsedet-dict v1"


class DictionaryFormatError(ValueError):
    """Raised when a dictionary file cannot be parsed."""


@dataclass(frozen=True)
class ChirpSpec:
    """Linear chirp waveform.

    Parameters
    ----------
    length_L : float
        Pulse duration in sample periods.
    bandwidth_B : float
        Swept bandwidth as a fraction of the sampling frequency.
    complex_valued : bool
        Keep the analytic (complex) chirp; otherwise use its real part.
    """

    length_L: float = 25.0
    bandwidth_B: float = 1.0
    complex_valued: bool = True

    def __post_init__(self):
        if not self.length_L > 0:
            raise ValueError(f"chirp length must be positive, got {self.length_L}")
        if not self.bandwidth_B > 0:
            raise ValueError(f"chirp bandwidth must be positive, got {self.bandwidth_B}")

    def waveform(self, t):
        """Evaluate a(t) = exp(j*pi*B*t^2/L) on [0, L), zero elsewhere."""
        t = np.asarray(t, dtype=float)
        inside = (t >= 0) & (t < self.length_L)
        phase = np.pi * self.bandwidth_B * t * t / self.length_L
        a = np.where(inside, np.exp(1j * phase), 0.0)
        return a if self.complex_valued else a.real


@dataclass(frozen=True)
class Dictionary:
    """An M x N measurement matrix with its provenance.

    ``entries`` is stored read-only so a dictionary can be shared freely.
    """

    entries: np.ndarray
    delay_step: float = 1.0
    origin: str = "synthesized-chirp"
    chirp: Optional[ChirpSpec] = None
    column_norms: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        a = np.array(self.entries, copy=True)
        if a.ndim != 2:
            raise ValueError(f"dictionary entries must be 2-D, got shape {a.shape}")
        if not np.iscomplexobj(a):
            a = a.astype(float)
        a.setflags(write=False)
        if not self.delay_step > 0:
            raise ValueError("delay_step must be positive")
        if self.origin not in ("synthesized-chirp", "loaded-from-file", "user-matrix"):
            raise ValueError(f"unknown origin {self.origin!r}")
        norms = np.linalg.norm(a, axis=0)
        norms.setflags(write=False)
        object.__setattr__(self, "entries", a)
        object.__setattr__(self, "column_norms", norms)

    @classmethod
    def from_matrix(cls, A, delay_step: float = 1.0) -> "Dictionary":
        return cls(np.asarray(A), delay_step=delay_step, origin="user-matrix")

    @property
    def num_rows_M(self) -> int:
        return self.entries.shape[0]

    @property
    def num_cols_N(self) -> int:
        return self.entries.shape[1]

    @property
    def shape(self):
        return self.entries.shape

    @property
    def is_complex(self) -> bool:
        return np.iscomplexobj(self.entries)

    @property
    def field_name(self) -> str:
        return "complex" if self.is_complex else "real"

    def __array__(self, dtype=None, copy=None):
        if dtype is None:
            return self.entries
        return self.entries.astype(dtype)


MatrixLike = Union[np.ndarray, Dictionary, Sequence]


def as_matrix(A: MatrixLike) -> np.ndarray:
    """Return the underlying 2-D array of a Dictionary or array-like."""
    if isinstance(A, Dictionary):
        return A.entries
    a = np.asarray(A)
    if a.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got shape {a.shape}")
    return a


def build_chirp_dictionary(spec: ChirpSpec, M: int, N: int) -> Dictionary:
    """Build the normalized matrix of delayed chirp replicas.

    Column ``i`` samples ``a(t - i*step)`` at ``t = 0..M-1`` where
    ``step = (M - L) / (N - 1)``, so the N delays tile ``[0, M - L]``
    uniformly.  With M=108, N=250, L=25 the step is exactly 1/3 sample.

    Raises
    ------
    ValueError
        If ``M <= L`` (no room for a full replica) or ``N < 1``.
    """
    L = spec.length_L
    if N < 1:
        raise ValueError("N must be at least 1")
    if not M > L:
        raise ValueError(f"M={M} must exceed the chirp length L={L}")
    step = (M - L) / (N - 1) if N > 1 else 1.0
    t = np.arange(M, dtype=float)[:, None]
    delays = np.arange(N, dtype=float)[None, :] * step
    cols = spec.waveform(t - delays)
    norms = np.linalg.norm(cols, axis=0)
    if np.any(norms == 0):
        # Only reachable for degenerate real chirps whose samples all vanish.
        raise ValueError("chirp replica with zero energy; check L and B")
    return Dictionary(cols / norms, delay_step=step, origin="synthesized-chirp", chirp=spec)


def linf_matrix_norm(A: MatrixLike) -> float:
    """Maximum absolute row sum, ``max_p sum_q |A_pq|``.

    >>> linf_matrix_norm([[1, -2], [3, 4]])
    7.0
    """
    a = as_matrix(A)
    if a.size == 0:
        raise ValueError("linf_matrix_norm of an empty matrix is undefined")
    return float(np.abs(a).sum(axis=1).max())


def column_subset(A: MatrixLike, S: Iterable[int]) -> np.ndarray:
    """Columns of ``A`` listed in ``S`` (0-based), in the order given."""
    a = as_matrix(A)
    idx = np.asarray(list(S), dtype=int)
    if idx.size == 0:
        return a[:, :0].copy()
    if len(set(idx.tolist())) != idx.size:
        raise ValueError("support indices must be distinct")
    n = a.shape[1]
    if idx.min() < 0 or idx.max() >= n:
        raise IndexError(f"support index out of range [0, {n})")
    return a[:, idx]


def gram(A: MatrixLike, B: MatrixLike) -> np.ndarray:
    """Conjugate-transpose product ``A^H B``."""
    a, b = as_matrix(A), as_matrix(B)
    if a.shape[0] != b.shape[0]:
        raise ValueError(f"row mismatch: {a.shape[0]} vs {b.shape[0]}")
    return a.conj().T @ b


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def _fmt_entry(v, is_complex: bool) -> str:
    if not is_complex:
        return _fmt(v)
    re, im = _fmt(v.real), _fmt(v.imag)
    if not im.startswith("-"):
        im = "+" + im
    return f"{re}{im}j"


def save_dictionary(A: Dictionary, path) -> None:
    """Write ``A`` in the versioned plain-text format (LF, UTF-8)."""
    if not isinstance(A, Dictionary):
        A = Dictionary.from_matrix(A)
    L = A.chirp.length_L if A.chirp else float("nan")
    B = A.chirp.bandwidth_B if A.chirp else float("nan")
    is_cplx = A.is_complex
    lines = [
        FILE_MAGIC,
        f"M={A.num_rows_M} N={A.num_cols_N} field={A.field_name} "
        f"delay_step={_fmt(A.delay_step)} L={_fmt(L)} B={_fmt(B)}",
    ]
    for row in A.entries:
        lines.append(",".join(_fmt_entry(v, is_cplx) for v in row))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")


def _parse_header(line: str) -> dict:
    fields = {}
    for tok in line.split():
        if "=" not in tok:
            raise DictionaryFormatError(f"malformed header token {tok!r}")
        k, v = tok.split("=", 1)
        fields[k] = v
    missing = {"M", "N", "field", "delay_step", "L", "B"} - fields.keys()
    if missing:
        raise DictionaryFormatError(f"header missing {sorted(missing)}")
    if fields["field"] not in ("real", "complex"):
        raise DictionaryFormatError(f"unknown field {fields['field']!r}")
    try:
        fields["M"] = int(fields["M"])
        fields["N"] = int(fields["N"])
        for k in ("delay_step", "L", "B"):
            fields[k] = float(fields[k])
    except ValueError as exc:
        raise DictionaryFormatError(f"malformed header: {exc}") from None
    return fields


def load_dictionary(path) -> Dictionary:
    """Read a dictionary written by :func:`save_dictionary`.

    Raises
    ------
    DictionaryFormatError
        On a bad header, a row/column count that disagrees with the header,
        or any non-finite entry.
    """
    text = Path(path).read_text(encoding="utf-8")
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if len(lines) < 2 or lines[0].strip() != FILE_MAGIC:
        raise DictionaryFormatError(f"missing {FILE_MAGIC!r} header line")
    hdr = _parse_header(lines[1])
    M, N, is_cplx = hdr["M"], hdr["N"], hdr["field"] == "complex"
    body = lines[2:]
    if len(body) != M:
        raise DictionaryFormatError(f"dimension mismatch: header M={M}, found {len(body)} rows")
    parse = complex if is_cplx else float
    data = np.empty((M, N), dtype=complex if is_cplx else float)
    for p, line in enumerate(body):
        toks = line.split(",")
        if len(toks) != N:
            raise DictionaryFormatError(
                f"dimension mismatch: row {p + 1} has {len(toks)} entries, header N={N}"
            )
        try:
            data[p] = [parse(tok.strip()) for tok in toks]
        except ValueError:
            raise DictionaryFormatError(f"unparseable entry in row {p + 1}") from None
    if not np.all(np.isfinite(data)):
        raise DictionaryFormatError("non-finite entry in dictionary file")
    chirp = None
    if math.isfinite(hdr["L"]) and math.isfinite(hdr["B"]):
        chirp = ChirpSpec(hdr["L"], hdr["B"], is_cplx)
    return Dictionary(data, delay_step=hdr["delay_step"], origin="loaded-from-file", chirp=chirp)
