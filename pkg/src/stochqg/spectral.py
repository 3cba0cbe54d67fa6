"""Doubly periodic spectral fields on a square box, with the operators the
two-layer solver needs.

Conventions (everything downstream relies on these):

* The box is (0, L)^2 sampled on an n x n uniform grid, ``values[ix, iy] =
  u(ix*L/n, iy*L/n)``.
* A field is expanded in the orthonormal basis ``e_j = L^{-1} exp(i 2 pi
  (j1 x + j2 y)/L)`` over integer wavevectors j != 0.  ``coeffs[j1, j2]``
  (numpy FFT index ordering) stores the coefficient of ``e_j``, so Parseval
  reads ``||u||_0^2 = sum |coeffs|^2`` with no grid factors.
* Real fields satisfy ``coeffs[-j] == conj(coeffs[j])`` (indices mod n).
* The mean mode j = 0 is pinned to zero: all fields live in the mean-free
  subspace.
* ``-Laplacian`` acts diagonally with eigenvalue ``lambda1 * |j|^2`` where
  ``lambda1 = (2 pi / L)^2`` is the smallest positive eigenvalue.

Dealiasing uses the 2/3 rule: products of two fields supported on ``|j_i| <=
cut`` with ``3*cut < n`` are alias-free on the retained band, which is what
makes the discrete Jacobian identities hold to roundoff.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, GridMismatchError

SNAPSHOT_MAGIC = b"QG2S"
SNAPSHOT_VERSION = 1


class Grid:
    """Square periodic grid and its wavenumber bookkeeping."""

    def __init__(self, n: int, length: float, dealias_fraction: float = 2.0 / 3.0):
        if n < 8 or n % 2 != 0:
            raise ConfigurationError(f"grid size must be even and >= 8, got {n}")
        if length <= 0:
            raise ConfigurationError(f"box length must be positive, got {length}")
        if not 0 < dealias_fraction <= 1:
            raise ConfigurationError(
                f"dealias fraction must lie in (0, 1], got {dealias_fraction}"
            )
        self.n = int(n)
        self.length = float(length)
        self.dealias_fraction = float(dealias_fraction)
        self.dx = self.length / self.n
        self.lambda1 = (2.0 * np.pi / self.length) ** 2

        j = np.fft.fftfreq(self.n, d=1.0 / self.n).astype(np.int64)
        self.j1 = j[:, None] * np.ones((1, self.n), dtype=np.int64)
        self.j2 = np.ones((self.n, 1), dtype=np.int64) * j[None, :]
        self.jsq = self.j1**2 + self.j2**2
        # mu_j = lambda1 |j|^2, the eigenvalue of -Laplacian; zero at the origin.
        self.lap_eig = self.lambda1 * self.jsq.astype(float)

        # 2/3-rule band: |j_i| <= cut with 3*cut < n so that cubic grid sums
        # (the Jacobian inner products) pick up no aliased triples.
        self.dealias_cut = int(np.floor(dealias_fraction * (self.n / 2.0)))
        if 3 * self.dealias_cut >= self.n:
            self.dealias_cut = (self.n - 1) // 3
        self.dealias_mask = (np.abs(self.j1) <= self.dealias_cut) & (
            np.abs(self.j2) <= self.dealias_cut
        )

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, Grid)
            and self.n == other.n
            and self.length == other.length
            and self.dealias_cut == other.dealias_cut
        )

    def __hash__(self):
        return hash((self.n, self.length, self.dealias_cut))

    def __repr__(self) -> str:
        return f"Grid(n={self.n}, length={self.length!r}, cut={self.dealias_cut})"


@dataclass(frozen=True)
class SpectralField:
    """Mean-free real field stored by its orthonormal-basis coefficients."""

    grid: Grid
    coeffs: np.ndarray

    def __post_init__(self):
        c = self.coeffs
        if c.shape != (self.grid.n, self.grid.n) or c.dtype != np.complex128:
            raise ConfigurationError(
                f"coefficients must be complex128 of shape {(self.grid.n,) * 2}"
            )

    def values(self) -> np.ndarray:
        """Physical samples on the grid (real part; imaginary is roundoff)."""
        n = self.grid.n
        return np.fft.ifft2(self.coeffs).real * (n * n / self.grid.length)

    def norm(self, s: float = 0.0) -> float:
        return sobolev_norm(self, s)


def _check_same_grid(*fields: SpectralField) -> Grid:
    grid = fields[0].grid
    for f in fields[1:]:
        if f.grid != grid:
            raise GridMismatchError(f"fields on {f.grid} vs {grid}")
    return grid


def field_from_coeffs(grid: Grid, coeffs: np.ndarray) -> SpectralField:
    c = np.asarray(coeffs, dtype=np.complex128).copy()
    c[0, 0] = 0.0
    c.setflags(write=False)
    return SpectralField(grid, c)


def field_from_values(grid: Grid, values: np.ndarray) -> SpectralField:
    """Forward transform; the mean is projected out."""
    v = np.asarray(values, dtype=float)
    if v.shape != (grid.n, grid.n):
        raise GridMismatchError(f"expected {(grid.n,) * 2} samples, got {v.shape}")
    coeffs = np.fft.fft2(v) * (grid.length / grid.n**2)
    return field_from_coeffs(grid, coeffs)


def zero_field(grid: Grid) -> SpectralField:
    return field_from_coeffs(grid, np.zeros((grid.n, grid.n), dtype=np.complex128))


def grid_coordinates(grid: Grid) -> tuple[np.ndarray, np.ndarray]:
    """(x, y) sample coordinates, each of shape (n, n), indexed [ix, iy]."""
    t = np.arange(grid.n) * grid.dx
    return np.meshgrid(t, t, indexing="ij")


def is_conjugate_symmetric(field: SpectralField, tol: float = 1e-12) -> bool:
    """Reality check: coefficient at -j equals the conjugate at +j."""
    c = field.coeffs
    n = field.grid.n
    idx = (-np.arange(n)) % n
    mirrored = np.conj(c[np.ix_(idx, idx)])
    scale = np.max(np.abs(c)) or 1.0
    return bool(np.max(np.abs(c - mirrored)) <= tol * scale)


def symmetrize(grid: Grid, coeffs: np.ndarray) -> np.ndarray:
    """Project arbitrary complex coefficients onto the real-field subspace."""
    n = grid.n
    idx = (-np.arange(n)) % n
    sym = 0.5 * (coeffs + np.conj(coeffs[np.ix_(idx, idx)]))
    sym[0, 0] = 0.0
    return sym


def dealias(field: SpectralField) -> SpectralField:
    return field_from_coeffs(field.grid, field.coeffs * field.grid.dealias_mask)


def laplacian_power(field: SpectralField, s: float) -> SpectralField:
    """Apply (-Laplacian)^s diagonally; the zero mode stays pinned at zero."""
    g = field.grid
    if float(s) == 1.0:
        mult = g.lap_eig
    else:
        mult = np.zeros_like(g.lap_eig)
        nz = g.lap_eig > 0
        mult[nz] = g.lap_eig[nz] ** s
    return field_from_coeffs(g, field.coeffs * mult)


def laplacian(field: SpectralField) -> SpectralField:
    return field_from_coeffs(field.grid, field.coeffs * (-field.grid.lap_eig))


def derivative_x(field: SpectralField) -> SpectralField:
    g = field.grid
    k = 2.0j * np.pi / g.length
    return field_from_coeffs(g, field.coeffs * (k * g.j1))


def derivative_y(field: SpectralField) -> SpectralField:
    g = field.grid
    k = 2.0j * np.pi / g.length
    return field_from_coeffs(g, field.coeffs * (k * g.j2))


def sobolev_norm(field: SpectralField, s: float = 0.0) -> float:
    """``||u||_s = (sum (lambda1 |j|^2)^s |u_j|^2)^(1/2)`` over j != 0.

    s = 0 is the L2 norm, s = 1 equals ``||grad u||_0``, negative s is the
    dual scale (well defined because the mean mode is excluded).
    """
    g = field.grid
    mag = np.abs(field.coeffs) ** 2
    if s == 0.0:
        return float(np.sqrt(np.sum(mag)))
    nz = g.lap_eig > 0
    return float(np.sqrt(np.sum(g.lap_eig[nz] ** s * mag[nz])))


def inner_product(u: SpectralField, v: SpectralField) -> float:
    """L2 pairing (u, v)_0; real for real fields."""
    _check_same_grid(u, v)
    return float(np.real(np.sum(u.coeffs * np.conj(v.coeffs))))


def jacobian_coeffs(grid: Grid, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Array-level dealiased Jacobian kernel (see :func:`jacobian`)."""
    mask = grid.dealias_mask
    k = 2.0j * np.pi / grid.length
    scale = grid.n**2 / grid.length

    a = a * mask
    b = b * mask
    ax = np.fft.ifft2(a * (k * grid.j1)).real * scale
    ay = np.fft.ifft2(a * (k * grid.j2)).real * scale
    bx = np.fft.ifft2(b * (k * grid.j1)).real * scale
    by = np.fft.ifft2(b * (k * grid.j2)).real * scale
    jac = np.fft.fft2(ax * by - ay * bx) * (grid.length / grid.n**2)
    jac *= mask
    jac[0, 0] = 0.0
    return jac


def jacobian(u: SpectralField, v: SpectralField) -> SpectralField:
    """Dealiased pseudospectral Jacobian J(u, v) = u_x v_y - u_y v_x.

    Inputs are truncated to the 2/3 band before the physical-space products,
    and the result is truncated again, so for band-limited inputs the skew
    symmetry and cyclic inner-product identities hold to roundoff.
    """
    g = _check_same_grid(u, v)
    return field_from_coeffs(g, jacobian_coeffs(g, u.coeffs, v.coeffs))


def random_band_limited(
    grid: Grid,
    seed: int,
    amplitude: float = 1.0,
    jmin: int = 1,
    jmax: int | None = None,
) -> SpectralField:
    """Random real field with unit-free coefficients on jmin <= |j| <= jmax,
    rescaled so ``||u||_0 = amplitude``.  Deterministic in the seed."""
    if jmax is None:
        jmax = max(grid.dealias_cut // 2, jmin)
    if jmax > grid.dealias_cut:
        raise ConfigurationError(
            f"band edge {jmax} outside the dealiased band (cut={grid.dealias_cut})"
        )
    rng = np.random.default_rng(seed)
    raw = rng.standard_normal((grid.n, grid.n)) + 1j * rng.standard_normal(
        (grid.n, grid.n)
    )
    band = (grid.jsq >= jmin**2) & (grid.jsq <= jmax**2)
    sym = symmetrize(grid, raw * band)
    nrm = np.sqrt(np.sum(np.abs(sym) ** 2))
    if nrm == 0:
        raise ConfigurationError("empty wavenumber band")
    return field_from_coeffs(grid, sym * (amplitude / nrm))


# ---------------------------------------------------------------------------
# Snapshot format: magic "QG2S", three little-endian u32 (version, n, field
# count), then field-count blocks of n*n float64 little-endian physical
# values in row-major order.
# ---------------------------------------------------------------------------


def write_snapshot(path: str | Path, fields: list[np.ndarray]) -> None:
    if not fields:
        raise ConfigurationError("snapshot needs at least one field")
    n = fields[0].shape[0]
    for f in fields:
        if f.shape != (n, n):
            raise ConfigurationError("all snapshot fields must share one n x n shape")
    with open(path, "wb") as fh:
        fh.write(SNAPSHOT_MAGIC)
        fh.write(struct.pack("<III", SNAPSHOT_VERSION, n, len(fields)))
        for f in fields:
            fh.write(np.ascontiguousarray(f, dtype="<f8").tobytes())


def read_snapshot(path: str | Path) -> list[np.ndarray]:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != SNAPSHOT_MAGIC:
            raise ConfigurationError(f"not a QG2S snapshot: bad magic {magic!r}")
        version, n, count = struct.unpack("<III", fh.read(12))
        if version != SNAPSHOT_VERSION:
            raise ConfigurationError(f"unsupported snapshot version {version}")
        out = []
        for _ in range(count):
            buf = fh.read(8 * n * n)
            if len(buf) != 8 * n * n:
                raise ConfigurationError("truncated snapshot payload")
            out.append(np.frombuffer(buf, dtype="<f8").reshape(n, n).copy())
        return out
