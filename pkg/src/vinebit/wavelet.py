"""Separable 2-D orthonormal wavelet transforms with periodic extension.

The transform operates on images whose sides are divisible by ``2**levels``
and produces a pyramid of subbands: one low-pass residual ``LL`` at the
coarsest scale plus three detail orientations ``LH``/``HL``/``HH`` per scale.
Scale 1 is the finest. Filters are orthonormal, so analysis/synthesis is a
bijection and coefficient energy equals image energy.

Pyramids flatten to vectors in a fixed documented order (coarse LL first,
then detail subbands coarse-to-fine, each row-major), which is what the
measurement and recovery code operates on.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

_SQRT2 = np.sqrt(2.0)
_S3 = np.sqrt(3.0)

# Analysis low-pass filters; high-pass follows from the quadrature mirror rule.
FILTERS = {
    "haar": np.array([1.0, 1.0]) / _SQRT2,
    "db4": np.array([1.0 + _S3, 3.0 + _S3, 3.0 - _S3, 1.0 - _S3]) / (4.0 * _SQRT2),
}

ORIENTATIONS = ("LL", "LH", "HL", "HH")
DIRECTIONS = ("row", "column", "diagonal")


def _filter_pair(name: str) -> tuple[np.ndarray, np.ndarray]:
    if name not in FILTERS:
        raise ValueError(f"unknown wavelet filter {name!r}; choose from {sorted(FILTERS)}")
    h = FILTERS[name]
    g = ((-1.0) ** np.arange(h.size)) * h[::-1]
    return h, g


def _dwt_axis(x: np.ndarray, h: np.ndarray, g: np.ndarray, axis: int):
    # Periodized decimated convolution: lo[k] = sum_j h[j] x[(2k+j) mod N].
    lo = sum(h[j] * np.roll(x, -j, axis=axis) for j in range(h.size))
    hi = sum(g[j] * np.roll(x, -j, axis=axis) for j in range(g.size))
    sl = [slice(None)] * x.ndim
    sl[axis] = slice(0, None, 2)
    return lo[tuple(sl)], hi[tuple(sl)]


def _idwt_axis(lo: np.ndarray, hi: np.ndarray, h: np.ndarray, g: np.ndarray, axis: int):
    shape = list(lo.shape)
    shape[axis] *= 2
    ua = np.zeros(shape)
    ud = np.zeros(shape)
    sl = [slice(None)] * lo.ndim
    sl[axis] = slice(0, None, 2)
    ua[tuple(sl)] = lo
    ud[tuple(sl)] = hi
    x = sum(h[j] * np.roll(ua, j, axis=axis) for j in range(h.size))
    x += sum(g[j] * np.roll(ud, j, axis=axis) for j in range(g.size))
    return x


@dataclass(frozen=True)
class PyramidLayout:
    """Static geometry of a pyramid: subband shapes and flatten offsets.

    The flatten order is ``(levels, "LL")`` first, then for each scale from
    coarsest to finest the orientations ``LH``, ``HL``, ``HH``; every subband
    is stored row-major.
    """

    shape: tuple[int, int]
    levels: int
    filter_name: str = "haar"

    def __post_init__(self):
        rows, cols = self.shape
        if self.levels < 1:
            raise ValueError("levels must be >= 1")
        div = 2 ** self.levels
        if rows % div or cols % div or rows < div or cols < div:
            raise ValueError(
                f"image shape {self.shape} not divisible by 2**levels={div}"
            )
        _filter_pair(self.filter_name)

    @property
    def size(self) -> int:
        return self.shape[0] * self.shape[1]

    def keys(self) -> list[tuple[int, str]]:
        out = [(self.levels, "LL")]
        for s in range(self.levels, 0, -1):
            out.extend((s, o) for o in ("LH", "HL", "HH"))
        return out

    def subband_shape(self, scale: int) -> tuple[int, int]:
        return (self.shape[0] >> scale, self.shape[1] >> scale)

    def entries(self) -> list[tuple[int, str, int, tuple[int, int]]]:
        """Return (scale, orientation, offset, subband_shape) in flatten order."""
        out = []
        offset = 0
        for scale, orient in self.keys():
            shp = self.subband_shape(scale)
            out.append((scale, orient, offset, shp))
            offset += shp[0] * shp[1]
        return out

    def offset_of(self, scale: int, orientation: str) -> int:
        for s, o, off, _ in self.entries():
            if (s, o) == (scale, orientation):
                return off
        raise ValueError(f"no subband ({scale}, {orientation}) in this layout")

    def unflatten(self, vec: np.ndarray) -> "WaveletPyramid":
        vec = np.asarray(vec, dtype=float)
        if vec.shape != (self.size,):
            raise ValueError(f"expected a flat vector of length {self.size}, got {vec.shape}")
        subbands = {}
        for scale, orient, off, shp in self.entries():
            n = shp[0] * shp[1]
            subbands[(scale, orient)] = vec[off:off + n].reshape(shp).copy()
        return WaveletPyramid(self.levels, self.filter_name, self.shape, subbands)


@dataclass
class WaveletPyramid:
    """Multiscale coefficient container produced by :func:`analyze`."""

    levels: int
    filter_name: str
    shape: tuple[int, int]
    subbands: dict[tuple[int, str], np.ndarray] = field(repr=False)

    @property
    def layout(self) -> PyramidLayout:
        return PyramidLayout(self.shape, self.levels, self.filter_name)

    def flatten(self) -> np.ndarray:
        parts = [self.subbands[(s, o)].ravel() for s, o, _, _ in self.layout.entries()]
        return np.concatenate(parts)


def analyze(image: np.ndarray, levels: int = 2, filter_name: str = "haar") -> WaveletPyramid:
    """Decompose ``image`` into an orthonormal wavelet pyramid.

    Args:
        image: 2-D float array; both sides must be divisible by ``2**levels``.
        levels: number of dyadic decomposition levels (>= 1).
        filter_name: key into :data:`FILTERS` (``haar`` or ``db4``).

    Returns:
        WaveletPyramid with detail subbands at scales ``1..levels`` and the
        low-pass residual at ``(levels, "LL")``.
    """
    image = np.asarray(image, dtype=float)
    if image.ndim != 2:
        raise ValueError(f"expected a 2-D image, got ndim={image.ndim}")
    if not np.all(np.isfinite(image)):
        raise ValueError("image contains non-finite values")
    layout = PyramidLayout(image.shape, levels, filter_name)
    h, g = _filter_pair(filter_name)

    subbands = {}
    ll = image
    for s in range(1, levels + 1):
        lo, hi = _dwt_axis(ll, h, g, axis=0)
        ll_, lh = _dwt_axis(lo, h, g, axis=1)
        hl, hh = _dwt_axis(hi, h, g, axis=1)
        subbands[(s, "LH")] = lh
        subbands[(s, "HL")] = hl
        subbands[(s, "HH")] = hh
        ll = ll_
    subbands[(levels, "LL")] = ll
    assert ll.shape == layout.subband_shape(levels)
    return WaveletPyramid(levels, filter_name, image.shape, subbands)


def synthesize(pyramid: WaveletPyramid) -> np.ndarray:
    """Invert :func:`analyze`; exact up to floating-point roundoff."""
    h, g = _filter_pair(pyramid.filter_name)
    ll = pyramid.subbands[(pyramid.levels, "LL")]
    for s in range(pyramid.levels, 0, -1):
        lh = pyramid.subbands[(s, "LH")]
        hl = pyramid.subbands[(s, "HL")]
        hh = pyramid.subbands[(s, "HH")]
        if not (ll.shape == lh.shape == hl.shape == hh.shape):
            raise ValueError(f"inconsistent subband shapes at scale {s}")
        lo = _idwt_axis(ll, lh, h, g, axis=1)
        hi = _idwt_axis(hl, hh, h, g, axis=1)
        ll = _idwt_axis(lo, hi, h, g, axis=0)
    return ll


@dataclass(frozen=True)
class NeighborhoodSet:
    """Sliding-window index sets over one subband.

    ``windows`` holds row-major flat indices into the subband, one window per
    row; windows never cross subband boundaries.
    """

    scale: int
    orientation: str
    direction: str
    length: int
    subband_shape: tuple[int, int]
    windows: np.ndarray = field(repr=False)

    @property
    def count(self) -> int:
        return self.windows.shape[0]


def neighborhood_windows(shape: tuple[int, int], direction: str, length: int) -> np.ndarray:
    """Build stride-1 window index arrays for one subband shape.

    Row windows run left-to-right within a row, column windows top-to-bottom
    within a column, diagonal windows step down-right only.
    """
    rows, cols = shape
    L = length
    if L < 2:
        raise ValueError("window length must be >= 2")
    if direction not in DIRECTIONS:
        raise ValueError(f"unknown direction {direction!r}; choose from {DIRECTIONS}")
    flat = np.arange(rows * cols).reshape(rows, cols)
    if direction == "row":
        if cols < L:
            raise ValueError(f"window length {L} exceeds subband width {cols}")
        starts = flat[:, : cols - L + 1].ravel()
        step = 1
    elif direction == "column":
        if rows < L:
            raise ValueError(f"window length {L} exceeds subband height {rows}")
        starts = flat[: rows - L + 1, :].ravel()
        step = cols
    else:
        if rows < L or cols < L:
            raise ValueError(f"window length {L} exceeds subband sides {shape}")
        starts = flat[: rows - L + 1, : cols - L + 1].ravel()
        step = cols + 1
    return starts[:, None] + step * np.arange(L)[None, :]


def extract_neighborhoods(
    pyramid: WaveletPyramid, scale: int, orientation: str, direction: str, length: int
) -> NeighborhoodSet:
    """Enumerate directional sliding windows over one pyramid subband."""
    key = (scale, orientation)
    if key not in pyramid.subbands:
        raise ValueError(f"pyramid has no subband {key}")
    shape = pyramid.subbands[key].shape
    windows = neighborhood_windows(shape, direction, length)
    return NeighborhoodSet(scale, orientation, direction, length, shape, windows)
