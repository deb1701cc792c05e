"""Feature-row to multi-channel image encoding.

Rows are normalized to the 0-255 scale per feature, laid out channel-block
first (each channel filled row-major), then upscaled with corner-aligned
bilinear interpolation.
"""

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.exceptions import NotFittedError

from .errors import LengthMismatchError, NegativeInputError
from .validation import check_matrix, check_tensor3, check_vector


@dataclass(frozen=True)
class ImageLayout:
    rows: int
    cols: int
    channels: int

    def __post_init__(self):
        if min(self.rows, self.cols, self.channels) < 1:
            raise ValueError("layout dims must be positive")

    @property
    def size(self):
        return self.rows * self.cols * self.channels


@dataclass
class ChurnImage:
    pixels: np.ndarray  # height x width x channels, values in [0, 255]
    row_id: int = -1

    def __post_init__(self):
        self.pixels = check_tensor3(self.pixels, "pixels")
        lo, hi = self.pixels.min(), self.pixels.max()
        if lo < 0.0 or hi > 255.0:
            raise ValueError(f"pixel values outside [0, 255]: [{lo}, {hi}]")


def infer_layout(n_features, channels=3):
    """Pick rows x cols x channels with rows*cols*channels == n_features.

    Falls back to a single channel when the count is not divisible, and
    takes the most square rows/cols factorization (rows >= cols).
    """
    if n_features < 1:
        raise ValueError("need at least one feature")
    if n_features % channels != 0:
        channels = 1
    m = n_features // channels
    q = int(np.sqrt(m))
    while m % q != 0:
        q -= 1
    return ImageLayout(m // q, q, channels)


def normalize_255(X):
    """Scale each nonnegative feature column so its maximum maps to 255."""
    X = check_matrix(X, "X")
    if X.size and X.min() < 0:
        raise NegativeInputError("normalize_255 requires nonnegative input")
    return scale_255(X, X.max(axis=0))


def scale_255(X, col_max):
    """(f / m) * 255 per column with fixed maxima; zero-max columns map to 0."""
    safe = np.where(col_max == 0.0, 1.0, col_max)
    return X / safe * 255.0


def to_image(row, layout, row_id=-1):
    """Reshape a feature row into an image: the first rows*cols features fill
    channel 0 row-major, the next block channel 1, and so on (invertible)."""
    r = check_vector(row, "row")
    if r.shape[0] != layout.size:
        raise LengthMismatchError(
            f"row length {r.shape[0]} != layout size {layout.size}"
        )
    pixels = r.reshape(layout.channels, layout.rows, layout.cols).transpose(1, 2, 0)
    return ChurnImage(pixels.copy(), row_id)


def image_to_row(img):
    """Inverse of to_image."""
    pixels = img.pixels if isinstance(img, ChurnImage) else check_tensor3(img)
    return pixels.transpose(2, 0, 1).reshape(-1).copy()


def rows_to_tensor(X, layout):
    """Vectorized to_image over a matrix -> (n, rows, cols, channels)."""
    X = check_matrix(X, "X")
    if X.shape[1] != layout.size:
        raise LengthMismatchError(
            f"row length {X.shape[1]} != layout size {layout.size}"
        )
    return (
        X.reshape(-1, layout.channels, layout.rows, layout.cols)
        .transpose(0, 2, 3, 1)
        .copy()
    )


def _interp_matrix(n_in, n_out):
    """Corner-aligned linear interpolation weights, shape (n_out, n_in)."""
    W = np.zeros((n_out, n_in))
    if n_in == 1:
        W[:, 0] = 1.0
        return W
    for j in range(n_out):
        pos = j * (n_in - 1) / (n_out - 1) if n_out > 1 else 0.0
        i0 = min(int(np.floor(pos)), n_in - 2)
        frac = pos - i0
        W[j, i0] = 1.0 - frac
        W[j, i0 + 1] = frac
    return W


def resize_bilinear(img, out_h, out_w):
    """Bilinear resize with a corner-aligned grid (no overshoot)."""
    if out_h < 1 or out_w < 1:
        raise ValueError("output dims must be >= 1")
    was_churn = isinstance(img, ChurnImage)
    pixels = img.pixels if was_churn else check_tensor3(img)
    out = batch_resize(pixels[None], out_h, out_w)[0]
    if was_churn:
        return ChurnImage(out, img.row_id)
    return out


def batch_resize(images, out_h, out_w):
    """resize_bilinear over a stack (n, h, w, c)."""
    h, w = images.shape[1], images.shape[2]
    R = _interp_matrix(h, out_h)
    C = _interp_matrix(w, out_w)
    return np.einsum("oh,nhwc,pw->nopc", R, images, C, optimize=True)


class ImageEncoder(TransformerMixin, BaseEstimator):
    """Turn feature rows into fixed-size images using training-fold statistics.

    fit() learns per-column minima (for the negative-to-positive shift that
    reduced features need) and post-shift maxima (for 0-255 normalization).
    transform() replays shift + scale with those statistics, clamps held-out
    values into [0, 255], lays rows out per the layout, and upscales.
    """

    def __init__(self, layout=None, out_h=32, out_w=32, channels=3):
        self.layout = layout
        self.out_h = out_h
        self.out_w = out_w
        self.channels = channels

    def _shift(self, X):
        out = X.copy()
        neg = out < 0
        out[neg] = out[neg] + self.col_min_[np.nonzero(neg)[1]] * (-1.0)
        return out

    def fit(self, X, y=None):
        X = check_matrix(X, "X")
        self.layout_ = (
            self.layout
            if self.layout is not None
            else infer_layout(X.shape[1], self.channels)
        )
        if self.layout_.size != X.shape[1]:
            raise LengthMismatchError(
                f"layout size {self.layout_.size} != {X.shape[1]} features"
            )
        self.col_min_ = X.min(axis=0)
        self.col_max_ = self._shift(X).max(axis=0)
        return self

    def normalize(self, X):
        """Shift + scale into [0, 255] using the fitted statistics."""
        if not hasattr(self, "col_max_"):
            raise NotFittedError("ImageEncoder is not fitted")
        X = check_matrix(X, "X")
        if X.shape[1] != self.col_min_.shape[0]:
            raise LengthMismatchError(
                f"expected {self.col_min_.shape[0]} features, got {X.shape[1]}"
            )
        return np.clip(scale_255(self._shift(X), self.col_max_), 0.0, 255.0)

    def images_from_normalized(self, F):
        """Lay out rows already on the 0-255 scale and upscale them."""
        F = np.clip(check_matrix(F, "F"), 0.0, 255.0)
        small = rows_to_tensor(F, self.layout_)
        return batch_resize(small, self.out_h, self.out_w)

    def transform(self, X):
        return self.images_from_normalized(self.normalize(X))


def write_pnm(pixels, path):
    """Dump an image as portable pixmap/graymap text for eyeballing.

    3-channel images become one P3 file; single channels a P2 file; any
    other channel count writes one P2 per channel with a suffix.
    """
    pixels = pixels.pixels if isinstance(pixels, ChurnImage) else pixels
    h, w, c = pixels.shape
    vals = np.clip(np.rint(pixels), 0, 255).astype(int)
    if c == 3:
        lines = [f"P3 {w} {h} 255"]
        for i in range(h):
            lines.append(" ".join(str(v) for v in vals[i].reshape(-1)))
        path = str(path)
        with open(path, "w", encoding="ascii") as fh:
            fh.write("\n".join(lines) + "\n")
        return [path]
    written = []
    for ch in range(c):
        target = str(path) if c == 1 else f"{path}.ch{ch}"
        lines = [f"P2 {w} {h} 255"]
        for i in range(h):
            lines.append(" ".join(str(v) for v in vals[i, :, ch]))
        with open(target, "w", encoding="ascii") as fh:
            fh.write("\n".join(lines) + "\n")
        written.append(target)
    return written
