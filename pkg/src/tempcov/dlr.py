"""Diagonal plus/minus low-rank matrices.

A :class:`DiagLowRank` stands for the symmetric p x p matrix

    diag(d) + sign * u.T @ u

with ``u`` of shape (m, p) and ``sign`` either +1 or -1. Every operation here
costs O(m^3 + m^2 p) or less and never allocates a p x p array, except
:func:`to_dense`, which exists for tests and small exports.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .exceptions import CorruptModel, DimensionError, NotPositiveDefinite

__all__ = [
    "DiagLowRank",
    "matmul",
    "log_det",
    "invert",
    "frobenius_diff_sq",
    "per_variable_change",
    "to_dense",
]

_MAGIC = b"DLR1"
_HEADER = struct.Struct("<4sIIb")


@dataclass(frozen=True, eq=False)
class DiagLowRank:
    """Symmetric matrix ``diag(d) + sign * u.T @ u``.

    Parameters
    ----------
    d : array, shape (p,)
        Diagonal part.
    u : array, shape (m, p)
        Low-rank factor. ``m = 0`` is a plain diagonal matrix.
    sign : {+1, -1}
        Whether the low-rank part is added or subtracted.
    """

    d: np.ndarray
    u: np.ndarray
    sign: int = 1

    def __post_init__(self):
        d = np.asarray(self.d, dtype=np.float64)
        u = np.asarray(self.u, dtype=np.float64)
        if d.ndim != 1:
            raise DimensionError(f"d must be 1-d, got shape {d.shape}")
        if u.ndim == 1 and u.size == 0:
            u = u.reshape(0, d.shape[0])
        if u.ndim != 2 or u.shape[1] != d.shape[0]:
            raise DimensionError(
                f"u must have shape (m, {d.shape[0]}), got {u.shape}")
        if self.sign not in (1, -1):
            raise ValueError(f"sign must be +1 or -1, got {self.sign!r}")
        d.setflags(write=False)
        u.setflags(write=False)
        object.__setattr__(self, "d", d)
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "sign", int(self.sign))

    @property
    def p(self) -> int:
        return self.d.shape[0]

    @property
    def m(self) -> int:
        return self.u.shape[0]

    @classmethod
    def identity(cls, p: int) -> "DiagLowRank":
        return cls(np.ones(p), np.zeros((0, p)), 1)

    def diagonal(self) -> np.ndarray:
        """Diagonal entries of the full matrix, in O(mp)."""
        return self.d + self.sign * np.einsum("ji,ji->i", self.u, self.u)

    def scale(self, s) -> "DiagLowRank":
        """Return ``diag(s) @ A @ diag(s)``, which keeps the same form."""
        s = np.asarray(s, dtype=np.float64)
        if s.shape != (self.p,):
            raise DimensionError(f"scale vector must have shape ({self.p},)")
        return DiagLowRank(self.d * s * s, self.u * s, self.sign)

    def __matmul__(self, x):
        return matmul(self, x)

    # -- serialization -------------------------------------------------

    def to_json(self) -> dict:
        return {
            "p": self.p,
            "m": self.m,
            "sign": self.sign,
            "d": self.d.tolist(),
            "u": self.u.tolist(),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "DiagLowRank":
        try:
            p, m = int(obj["p"]), int(obj["m"])
            d = np.asarray(obj["d"], dtype=np.float64)
            u = np.asarray(obj["u"], dtype=np.float64).reshape(m, p)
            sign = int(obj["sign"])
        except (KeyError, TypeError, ValueError) as exc:
            raise CorruptModel(f"malformed DiagLowRank record: {exc}") from exc
        if d.shape != (p,):
            raise CorruptModel(f"d has {d.size} entries, header says p={p}")
        return cls(d, u, sign)

    def to_bytes(self) -> bytes:
        header = _HEADER.pack(_MAGIC, self.p, self.m, self.sign)
        return (header + self.d.astype("<f8").tobytes()
                + self.u.astype("<f8").tobytes(order="C"))

    @classmethod
    def from_bytes(cls, buf: bytes) -> "DiagLowRank":
        if len(buf) < _HEADER.size:
            raise CorruptModel("truncated DiagLowRank header")
        magic, p, m, sign = _HEADER.unpack_from(buf, 0)
        if magic != _MAGIC:
            raise CorruptModel(f"bad magic {magic!r}")
        expected = _HEADER.size + 8 * (p + m * p)
        if len(buf) != expected:
            raise CorruptModel(
                f"DiagLowRank record is {len(buf)} bytes, expected {expected}")
        off = _HEADER.size
        d = np.frombuffer(buf, dtype="<f8", count=p, offset=off)
        u = np.frombuffer(buf, dtype="<f8", count=m * p, offset=off + 8 * p)
        return cls(d.astype(np.float64), u.reshape(m, p).astype(np.float64), sign)

    @staticmethod
    def record_size(buf: bytes, offset: int = 0) -> int:
        """Byte length of the binary record starting at ``offset``."""
        _, p, m, _ = _HEADER.unpack_from(buf, offset)
        return _HEADER.size + 8 * (p + m * p)


def to_dense(a: DiagLowRank) -> np.ndarray:
    """Materialize the p x p matrix. O(m p^2); meant for tests and small p."""
    out = a.sign * (a.u.T @ a.u)
    out[np.diag_indices(a.p)] += a.d
    # u.T @ u is symmetric up to rounding in the BLAS kernel
    return 0.5 * (out + out.T)


def matmul(a: DiagLowRank, x) -> np.ndarray:
    """Compute ``A @ x`` for x of shape (p,) or (p, k) in O(mkp)."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[0] != a.p:
        raise DimensionError(f"cannot multiply {a.p}x{a.p} matrix by {x.shape}")
    dx = a.d * x if x.ndim == 1 else a.d[:, None] * x
    return dx + a.sign * (a.u.T @ (a.u @ x))


def _inner_cholesky(a: DiagLowRank) -> np.ndarray:
    """Lower Cholesky factor of ``I_m + sign * U D^-1 U^T``."""
    if not np.all(np.isfinite(a.d)) or np.any(a.d <= 0):
        bad = int(np.argmin(np.where(np.isfinite(a.d), a.d, -np.inf)))
        raise NotPositiveDefinite(
            f"diagonal entry {bad} is {a.d[bad]!r}; all entries must be > 0")
    if a.m == 0:
        return np.zeros((0, 0))
    ud = a.u / a.d
    inner = np.eye(a.m) + a.sign * (ud @ a.u.T)
    try:
        return linalg.cholesky(inner, lower=True)
    except linalg.LinAlgError as exc:
        raise NotPositiveDefinite(
            "inner m x m matrix I + sign * U D^-1 U^T is not positive definite"
        ) from exc


def log_det(a: DiagLowRank) -> float:
    """Log-determinant via the matrix determinant lemma.

    ``log det(D + s U^T U) = log det(I + s U D^-1 U^T) + sum(log d)``.

    Raises
    ------
    NotPositiveDefinite
        If some ``d_i <= 0`` or the inner m x m matrix fails Cholesky.
    """
    chol = _inner_cholesky(a)
    return float(2.0 * np.sum(np.log(np.diag(chol))) + np.sum(np.log(a.d)))


def invert(a: DiagLowRank) -> DiagLowRank:
    """Inverse via the Woodbury identity, returned with the opposite sign.

    For ``A = D + U^T U`` the result is ``D^-1 - V^T V`` with
    ``V = L^-1 U D^-1`` where ``L L^T = I + U D^-1 U^T``; then
    ``(L^-1)^T L^-1`` is the inverse of the inner matrix. The same algebra
    with flipped signs handles ``D - U^T U``.
    """
    chol = _inner_cholesky(a)
    d_inv = 1.0 / a.d
    if a.m == 0:
        return DiagLowRank(d_inv, np.zeros((0, a.p)), -a.sign)
    v = linalg.solve_triangular(chol, a.u * d_inv, lower=True)
    return DiagLowRank(d_inv, v, -a.sign)


def _check_pair(a: DiagLowRank, b: DiagLowRank):
    if a.p != b.p:
        raise DimensionError(f"dimension mismatch: p={a.p} vs p={b.p}")


def frobenius_diff_sq(a: DiagLowRank, b: DiagLowRank) -> float:
    """Squared Frobenius norm of ``A - B`` in O(m^2 p).

    Splits ``A - B = dD + L`` with ``dD = D_a - D_b`` diagonal and
    ``L = s_a U^T U - s_b V^T V`` and sums
    ``||dD||^2 + 2 tr(dD L) + ||L||^2`` where
    ``||L||^2 = ||U U^T||^2 - 2 s_a s_b ||V U^T||^2 + ||V V^T||^2``.
    """
    _check_pair(a, b)
    u, v = a.u, b.u
    dd = a.d - b.d
    low_diag = (a.sign * np.einsum("ji,ji->i", u, u)
                - b.sign * np.einsum("ji,ji->i", v, v))
    uu = u @ u.T
    vv = v @ v.T
    vu = v @ u.T
    low = (np.sum(uu * uu) - 2.0 * a.sign * b.sign * np.sum(vu * vu)
           + np.sum(vv * vv))
    return float(np.dot(dd, dd) + 2.0 * np.dot(dd, low_diag) + low)


def per_variable_change(a: DiagLowRank, b: DiagLowRank) -> np.ndarray:
    """Row-wise squared norms of ``A - B``; entry i is ``sum_k (A - B)_{ik}^2``.

    The vector sums to :func:`frobenius_diff_sq`. Cost O(m^2 p).
    """
    _check_pair(a, b)
    u, v = a.u, b.u
    dd = a.d - b.d
    low_diag = (a.sign * np.einsum("ji,ji->i", u, u)
                - b.sign * np.einsum("ji,ji->i", v, v))
    uu = u @ u.T
    vv = v @ v.T
    uv = u @ v.T
    # u_i^T (U U^T) u_i - 2 s_a s_b u_i^T (U V^T) v_i + v_i^T (V V^T) v_i
    low = (np.einsum("ji,ji->i", u, uu @ u)
           - 2.0 * a.sign * b.sign * np.einsum("ji,ji->i", u, uv @ v)
           + np.einsum("ji,ji->i", v, vv @ v))
    return dd * dd + 2.0 * dd * low_diag + low
