"""Discrete Radon transform, back-projection and filtered back-projection.

Geometry
--------
Pixel ``(row, col)`` of an ``M x M`` image sits at ``x = col - M // 2``,
``y = row - M // 2``.  The sinogram bin ``(r, theta)`` collects the line
``x cos(theta) + y sin(theta) = r``.  Offsets run over the odd count
``R = 2 * ceil(M * sqrt(2) / 2) + 1`` of integer bins centred on zero, so
every pixel projects inside the offset range at every angle.

Projection is pixel driven: each pixel's value is split between the two
nearest offset bins with linear weights.  The projector and its transpose
compute the weights with the same arithmetic, so :func:`back_project` is the
exact transpose of :func:`radon`.  Both kernels accept a leading batch axis.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numba
import numpy as np

__all__ = [
    "AngleGrid",
    "Sinogram",
    "RadonOperator",
    "n_offsets",
    "image_coords",
    "crop_square",
    "radon",
    "back_project",
    "inverse_radon",
    "ramp_filter_response",
]

DEFAULT_N_ANGLES = 180
MASK_RESCALE_CAP = 2.0


def n_offsets(size: int) -> int:
    """Number of signed offset bins used for an image of side ``size``."""
    return 2 * math.ceil(size * math.sqrt(2) / 2) + 1


def image_coords(size: int) -> tuple[np.ndarray, np.ndarray]:
    """Centred ``(x, y)`` coordinate grids, each of shape ``(size, size)``."""
    c = size // 2
    idx = np.arange(size, dtype=float) - c
    y, x = np.meshgrid(idx, idx, indexing="ij")
    return x, y


def crop_square(pixels: np.ndarray) -> np.ndarray:
    """Centre-crop a 2-D array to its largest inscribed square."""
    pixels = np.asarray(pixels)
    if pixels.ndim != 2:
        raise ValueError(f"expected a 2-D image, got shape {pixels.shape}")
    h, w = pixels.shape
    m = min(h, w)
    top = (h - m) // 2
    left = (w - m) // 2
    return pixels[top:top + m, left:left + m]


@dataclass(frozen=True)
class AngleGrid:
    """Uniform grid of ``count`` angles covering [0, 180) degrees."""

    count: int = DEFAULT_N_ANGLES

    def __post_init__(self):
        if int(self.count) != self.count or self.count < 1:
            raise ValueError(f"angle count must be a positive integer, got {self.count}")

    @property
    def spacing(self) -> float:
        return 180.0 / self.count

    @property
    def degrees(self) -> np.ndarray:
        return np.arange(self.count) * self.spacing

    @property
    def radians(self) -> np.ndarray:
        return np.deg2rad(self.degrees)


@dataclass(frozen=True)
class Sinogram:
    """Radon-domain grid ``values[r_index, theta_index]``.

    ``size`` is the side of the image the sinogram belongs to; the offset of
    row ``k`` is ``k - (R - 1) // 2`` pixels.
    """

    values: np.ndarray
    size: int
    grid: AngleGrid = field(default_factory=AngleGrid)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        expected = (n_offsets(self.size), self.grid.count)
        if values.shape != expected:
            raise ValueError(f"sinogram shape {values.shape} does not match {expected}")
        if not np.all(np.isfinite(values)):
            raise ValueError("sinogram contains non-finite values")
        object.__setattr__(self, "values", values)

    @property
    def offsets(self) -> np.ndarray:
        n = self.values.shape[0]
        return np.arange(n) - (n - 1) // 2

    @property
    def angles(self) -> np.ndarray:
        return self.grid.degrees


# Kernels work angle-major, ``(batch, T, R)``, and step the offset
# incrementally along each image row.  ``r + half`` is never negative, so
# truncation is the floor.  Every kernel uses the same arithmetic for the bin
# and weight of a (pixel, angle) pair, so projector and back-projector are
# exact transposes and a batched call gives bit-identical results to
# separate calls.  The pair kernels share the index arithmetic between two
# inputs, which is most of the cost.


@numba.njit(cache=True)
def _project1(img, cos_t, sin_t, size, n_r):
    n_t = cos_t.shape[0]
    c = size // 2
    half = (n_r - 1) // 2
    out = np.zeros((n_t, n_r))
    for j in range(n_t):
        ct = cos_t[j]
        st = sin_t[j]
        o = out[j]
        for row in range(size):
            r = -c * ct + (row - c) * st + half
            base = row * size
            for col in range(size):
                k = int(r)
                f = r - k
                v = img[base + col]
                fv = f * v
                o[k] += v - fv
                o[k + 1] += fv
                r += ct
    return out


@numba.njit(cache=True)
def _project2(img0, img1, cos_t, sin_t, size, n_r):
    n_t = cos_t.shape[0]
    c = size // 2
    half = (n_r - 1) // 2
    out = np.zeros((2, n_t, n_r))
    for j in range(n_t):
        ct = cos_t[j]
        st = sin_t[j]
        o0 = out[0, j]
        o1 = out[1, j]
        for row in range(size):
            r = -c * ct + (row - c) * st + half
            base = row * size
            for col in range(size):
                k = int(r)
                f = r - k
                v0 = img0[base + col]
                v1 = img1[base + col]
                f0 = f * v0
                f1 = f * v1
                o0[k] += v0 - f0
                o0[k + 1] += f0
                o1[k] += v1 - f1
                o1[k + 1] += f1
                r += ct
    return out


@numba.njit(cache=True)
def _backproject1(sino, cos_t, sin_t, size):
    n_t = sino.shape[0]
    n_r = sino.shape[1]
    c = size // 2
    half = (n_r - 1) // 2
    out = np.zeros(size * size)
    for j in range(n_t):
        ct = cos_t[j]
        st = sin_t[j]
        s = sino[j]
        for row in range(size):
            r = -c * ct + (row - c) * st + half
            base = row * size
            for col in range(size):
                k = int(r)
                f = r - k
                a = s[k]
                out[base + col] += a + f * (s[k + 1] - a)
                r += ct
    return out


@numba.njit(cache=True)
def _backproject2(sino0, sino1, cos_t, sin_t, size):
    n_t = sino0.shape[0]
    n_r = sino0.shape[1]
    c = size // 2
    half = (n_r - 1) // 2
    out = np.zeros((2, size * size))
    q0 = out[0]
    q1 = out[1]
    for j in range(n_t):
        ct = cos_t[j]
        st = sin_t[j]
        s0 = sino0[j]
        s1 = sino1[j]
        for row in range(size):
            r = -c * ct + (row - c) * st + half
            base = row * size
            for col in range(size):
                k = int(r)
                f = r - k
                a = s0[k]
                b = s1[k]
                q0[base + col] += a + f * (s0[k + 1] - a)
                q1[base + col] += b + f * (s1[k + 1] - b)
                r += ct
    return out


def _project(images, cos_t, sin_t, size, n_r):
    """Project a ``(batch, M*M)`` stack to ``(batch, T, R)``."""
    n_b = images.shape[0]
    out = np.empty((n_b, cos_t.shape[0], n_r))
    for b in range(0, n_b - 1, 2):
        out[b:b + 2] = _project2(images[b], images[b + 1], cos_t, sin_t, size, n_r)
    if n_b % 2:
        out[-1] = _project1(images[-1], cos_t, sin_t, size, n_r)
    return out


def _backproject(sinos, cos_t, sin_t, size):
    """Back-project a ``(batch, T, R)`` stack to ``(batch, M*M)``."""
    n_b = sinos.shape[0]
    out = np.empty((n_b, size * size))
    for b in range(0, n_b - 1, 2):
        out[b:b + 2] = _backproject2(sinos[b], sinos[b + 1], cos_t, sin_t, size)
    if n_b % 2:
        out[-1] = _backproject1(sinos[-1], cos_t, sin_t, size)
    return out


def ramp_filter_response(n_r: int, cutoff: float = 1.0) -> np.ndarray:
    """Frequency response ``|v|`` on the zero-padded FFT axis for ``n_r`` offsets.

    The padded length is the next power of two not smaller than ``2 * n_r``.
    Frequencies above ``cutoff`` times Nyquist are zeroed.
    """
    if not 0 < cutoff <= 1:
        raise ValueError(f"filter cutoff must lie in (0, 1], got {cutoff}")
    n_pad = 1 << max(1, (2 * n_r - 1).bit_length())
    v = np.abs(np.fft.rfftfreq(n_pad))
    if cutoff < 1:
        v[v > 0.5 * cutoff] = 0.0
    return v


class RadonOperator:
    """The operator pair used by the solvers for one image size and mask.

    Parameters
    ----------
    size : int
        Image side ``M``.
    n_angles : int
        Number of projection angles ``T``.
    mask : ndarray of bool, optional
        ``True`` where a pixel takes part in projections.  Masked-out pixels
        contribute nothing; each line integral is rescaled by its full length
        over its unmasked length, capped at ``MASK_RESCALE_CAP``.
    cutoff : float
        Ramp filter cutoff as a fraction of Nyquist.

    Every method accepts either a single array or a stack with a leading
    batch axis.
    """

    def __init__(self, size: int, n_angles: int = DEFAULT_N_ANGLES, mask=None, cutoff: float = 1.0):
        if size < 1:
            raise ValueError("image size must be positive")
        self.size = int(size)
        self.grid = AngleGrid(n_angles)
        self.n_r = n_offsets(self.size)
        self.shape = (self.n_r, self.grid.count)
        theta = self.grid.radians
        self._cos = np.cos(theta)
        self._sin = np.sin(theta)
        self._ramp = ramp_filter_response(self.n_r, cutoff)
        self._n_pad = 2 * (len(self._ramp) - 1)
        self.scale = math.pi / self.grid.count

        if mask is None:
            self.mask = None
            self._pix = None
            self._row_weight = None
        else:
            mask = np.asarray(mask, dtype=bool)
            if mask.shape != (self.size, self.size):
                raise ValueError(f"mask shape {mask.shape} does not match image size {self.size}")
            if not mask.any():
                raise ValueError("mask excludes every pixel")
            self.mask = mask
            self._pix = mask.ravel().astype(float)
            both = self._raw_project(np.stack([np.ones(self.size ** 2), self._pix]))
            full, kept = both[0], both[1]
            with np.errstate(divide="ignore", invalid="ignore"):
                w = np.where(kept > 0, full / kept, 1.0)
            self._row_weight = np.minimum(w, MASK_RESCALE_CAP)

    def _raw_project(self, flat):
        out = _project(np.ascontiguousarray(flat), self._cos, self._sin, self.size, self.n_r)
        return np.ascontiguousarray(out.transpose(0, 2, 1))

    def _raw_backproject(self, sinos):
        s = np.ascontiguousarray(np.swapaxes(sinos, -1, -2))
        return _backproject(s, self._cos, self._sin, self.size)

    def _batch(self, arr, shape, what):
        arr = np.asarray(arr, dtype=float)
        single = arr.shape == shape
        if single:
            arr = arr[None]
        if arr.ndim != len(shape) + 1 or arr.shape[1:] != shape:
            raise ValueError(f"{what} shape {arr.shape} does not match {shape}")
        return arr, single

    # Radon transform and its exact transpose

    def radon(self, image: np.ndarray) -> np.ndarray:
        img, single = self._batch(image, (self.size, self.size), "image")
        flat = img.reshape(len(img), -1)
        if self._pix is not None:
            flat = flat * self._pix
        out = self._raw_project(flat)
        if self._row_weight is not None:
            out *= self._row_weight
        return out[0] if single else out

    def back_project(self, sinogram: np.ndarray) -> np.ndarray:
        s, single = self._batch(sinogram, self.shape, "sinogram")
        if self._row_weight is not None:
            s = s * self._row_weight
        out = self._raw_backproject(s)
        if self._pix is not None:
            out *= self._pix
        out = out.reshape(len(s), self.size, self.size)
        return out[0] if single else out

    # Filtered back-projection and its exact transpose

    def ramp(self, sinogram: np.ndarray) -> np.ndarray:
        """Apply the ramp filter along the offset axis of every angle column."""
        s = np.asarray(sinogram, dtype=float)
        spec = np.fft.rfft(s, n=self._n_pad, axis=-2)
        spec *= self._ramp[:, None]
        out = np.fft.irfft(spec, n=self._n_pad, axis=-2)
        return out[..., : self.n_r, :]

    def inverse_radon(self, sinogram: np.ndarray) -> np.ndarray:
        s, single = self._batch(sinogram, self.shape, "sinogram")
        out = self._raw_backproject(self.ramp(s))
        if self._pix is not None:
            out *= self._pix
        out *= self.scale
        out = out.reshape(len(s), self.size, self.size)
        return out[0] if single else out

    def inverse_radon_adjoint(self, image: np.ndarray) -> np.ndarray:
        img, single = self._batch(image, (self.size, self.size), "image")
        flat = img.reshape(len(img), -1)
        if self._pix is not None:
            flat = flat * self._pix
        out = self.scale * self.ramp(self._raw_project(flat))
        return out[0] if single else out

    def radon_of_inverse(self, sinogram: np.ndarray) -> np.ndarray:
        """``R(C(X))``, the composite the solvers apply every iteration."""
        return self.radon(self.inverse_radon(sinogram))


def _check_image(pixels, mask):
    img = np.asarray(pixels, dtype=float)
    if img.ndim != 2 or img.shape[0] != img.shape[1]:
        raise ValueError(f"image must be square, got shape {img.shape}")
    if not np.all(np.isfinite(img)):
        raise ValueError("image contains non-finite pixels")
    if mask is not None and not np.asarray(mask).any():
        raise ValueError("mask excludes every pixel")
    return img


def radon(image, n_angles: int = DEFAULT_N_ANGLES, mask=None) -> Sinogram:
    """Radon transform of a square image, returned as a :class:`Sinogram`."""
    img = _check_image(image, mask)
    op = RadonOperator(img.shape[0], n_angles, mask)
    return Sinogram(op.radon(img), img.shape[0], op.grid)


def back_project(sinogram: Sinogram, mask=None) -> np.ndarray:
    """Unfiltered back-projection, the exact transpose of :func:`radon`."""
    op = RadonOperator(sinogram.size, sinogram.grid.count, mask)
    return op.back_project(sinogram.values)


def inverse_radon(sinogram: Sinogram, cutoff: float = 1.0, mask=None) -> np.ndarray:
    """Filtered back-projection with a Ram-Lak ramp filter."""
    op = RadonOperator(sinogram.size, sinogram.grid.count, mask, cutoff=cutoff)
    return op.inverse_radon(sinogram.values)
