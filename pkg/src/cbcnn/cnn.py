"""Inception-style convolutional classifier with exact analytic gradients.

All tensors are float64, batched as (n, height, width, channels).  Layers
are compiled from declarative specs into runtime objects that slice one
flat parameter vector, so optimizer masks (freeze backbone / train head)
are plain boolean vectors over that flat layout.

Convolutions use TensorFlow-style "same" zero padding: output spatial dims
are ceil(in / stride), with any odd padding going to the bottom/right.
Backward passes are vectorized: weight gradients reuse the forward im2col
buffer, input gradients come from a full correlation of the stride-dilated
output gradient with the flipped kernel.
"""

import json
from dataclasses import dataclass

import numpy as np

from .errors import ShapeMismatchError
from .validation import check_tensor3


# ---------------------------------------------------------------------------
# layer specs


@dataclass(frozen=True)
class Conv:
    kh: int
    kw: int
    out_channels: int
    stride: int = 1
    relu: bool = True


@dataclass(frozen=True)
class MaxPool:
    k: int
    stride: int


@dataclass(frozen=True)
class Inception:
    """Four parallel paths concatenated along channels.

    p1: 1x1 conv; p2: 1x1 reduce then 3x3 conv; p3: 1x1 reduce then 5x5
    conv; p4: 3x3 max pool then 1x1 conv.  Reduce widths default to half
    the path output width.
    """

    p1: int
    p2: int
    p3: int
    p4: int
    p2_reduce: int = 0  # 0 -> ceil(p2 / 2)
    p3_reduce: int = 0  # 0 -> ceil(p3 / 2)

    @property
    def out_channels(self):
        return self.p1 + self.p2 + self.p3 + self.p4


@dataclass(frozen=True)
class GlobalAvgPool:
    pass


@dataclass(frozen=True)
class Dense:
    units: int
    relu: bool = True


@dataclass(frozen=True)
class Softmax:
    pass


def mini_inception_arch(n_classes=2, inception_repeats=1):
    """Desk-scale default topology; `inception_repeats` widens the deep stage."""
    layers = [Conv(3, 3, 16), Inception(8, 16, 4, 8), MaxPool(3, 2)]
    layers += [Inception(16, 32, 8, 16)] * max(1, inception_repeats)
    layers += [GlobalAvgPool(), Dense(32), Dense(n_classes, relu=False), Softmax()]
    return tuple(layers)


def arch_to_json(arch):
    return json.dumps([[type(s).__name__, vars(s)] for s in arch])


def arch_from_json(text):
    kinds = {c.__name__: c for c in (Conv, MaxPool, Inception, GlobalAvgPool, Dense, Softmax)}
    return tuple(kinds[name](**kw) for name, kw in json.loads(text))


# ---------------------------------------------------------------------------
# padding / windowing helpers


def _same_geometry(h, w, kh, kw, stride):
    oh = -(-h // stride)
    ow = -(-w // stride)
    pad_h = max((oh - 1) * stride + kh - h, 0)
    pad_w = max((ow - 1) * stride + kw - w, 0)
    return oh, ow, (pad_h // 2, pad_h - pad_h // 2, pad_w // 2, pad_w - pad_w // 2)


def _window_view(xp, kh, kw, stride):
    n, h, w, c = xp.shape
    oh = (h - kh) // stride + 1
    ow = (w - kw) // stride + 1
    s0, s1, s2, s3 = xp.strides
    return np.lib.stride_tricks.as_strided(
        xp,
        (n, oh, ow, kh, kw, c),
        (s0, s1 * stride, s2 * stride, s1, s2, s3),
        writeable=False,
    )


def _conv_forward(x, w, b, stride):
    n, h, ww, c = x.shape
    kh, kw, ci, co = w.shape
    if ci != c:
        raise ShapeMismatchError(f"kernel expects {ci} channels, input has {c}")
    oh, ow, (pt, pb, pl, pr) = _same_geometry(h, ww, kh, kw, stride)
    xp = np.pad(x, ((0, 0), (pt, pb), (pl, pr), (0, 0)))
    cols = np.ascontiguousarray(_window_view(xp, kh, kw, stride)).reshape(
        n * oh * ow, kh * kw * c
    )
    y = cols @ w.reshape(kh * kw * c, co) + b
    return y.reshape(n, oh, ow, co), cols, (pt, pb, pl, pr)


def _conv_input_grad(dy, w, stride, pads, in_hw):
    n, oh, ow, co = dy.shape
    kh, kw, ci, _ = w.shape
    pt, pb, pl, pr = pads
    h, ww = in_hw
    hp, wp = h + pt + pb, ww + pl + pr
    dh, dw = (oh - 1) * stride + 1, (ow - 1) * stride + 1
    buf = np.zeros((n, hp + kh - 1, wp + kw - 1, co))
    buf[:, kh - 1 : kh - 1 + dh : stride, kw - 1 : kw - 1 + dw : stride] = dy
    cols = np.ascontiguousarray(_window_view(buf, kh, kw, 1)).reshape(
        n * hp * wp, kh * kw * co
    )
    wf = np.ascontiguousarray(w[::-1, ::-1].transpose(0, 1, 3, 2)).reshape(
        kh * kw * co, ci
    )
    dxp = (cols @ wf).reshape(n, hp, wp, ci)
    return dxp[:, pt : pt + h, pl : pl + ww]


def conv2d(x, kernels, bias, stride=1, relu=False):
    """Single-image cross-correlation with same zero padding."""
    x = check_tensor3(x, "input")
    w = np.asarray(kernels, dtype=np.float64)
    b = np.asarray(bias, dtype=np.float64)
    if w.ndim != 4:
        raise ShapeMismatchError("kernels must be (kh, kw, in_ch, out_ch)")
    y, _, _ = _conv_forward(x[None], w, b, stride)
    if relu:
        y = np.maximum(y, 0.0)
    return y[0]


def maxpool(x, kernel, stride):
    """Single-image max pooling with same padding (-inf fill)."""
    x = check_tensor3(x, "input")
    y, _ = _pool_forward(x[None], kernel, stride)
    return y[0]


def _pool_windows_channel_first(xp, k, stride):
    # (n, oh, ow, c, kh, kw): window dims last so max/argmax reduce the
    # contiguous tail after one copy
    n, h, w, c = xp.shape
    oh = (h - k) // stride + 1
    ow = (w - k) // stride + 1
    s0, s1, s2, s3 = xp.strides
    view = np.lib.stride_tricks.as_strided(
        xp,
        (n, oh, ow, c, k, k),
        (s0, s1 * stride, s2 * stride, s3, s1, s2),
        writeable=False,
    )
    return np.ascontiguousarray(view).reshape(n, oh, ow, c, k * k)


def _pool_forward(x, k, stride):
    n, h, w, c = x.shape
    oh, ow, (pt, pb, pl, pr) = _same_geometry(h, w, k, k, stride)
    xp = np.pad(x, ((0, 0), (pt, pb), (pl, pr), (0, 0)), constant_values=-np.inf)
    win = _pool_windows_channel_first(xp, k, stride)
    am = win.argmax(axis=4)
    y = np.take_along_axis(win, am[:, :, :, :, None], axis=4)[:, :, :, :, 0]
    cache = (am, (pt, pl), (h, w), xp.shape, stride, k)
    return y, cache


def _pool_backward(dy, cache):
    am, (pt, pl), (h, w), xp_shape, stride, k = cache
    n, hp, wp, c = xp_shape
    oh, ow = dy.shape[1], dy.shape[2]
    a, b = am // k, am % k
    i_idx = (np.arange(oh) * stride)[None, :, None, None]
    j_idx = (np.arange(ow) * stride)[None, None, :, None]
    n_idx = np.arange(n)[:, None, None, None]
    c_idx = np.arange(c)[None, None, None, :]
    flat = ((n_idx * hp + i_idx + a) * wp + (j_idx + b)) * c + c_idx
    dxp = np.bincount(
        flat.ravel(), weights=dy.ravel(), minlength=n * hp * wp * c
    ).reshape(n, hp, wp, c)
    return dxp[:, pt : pt + h, pl : pl + w]


# ---------------------------------------------------------------------------
# runtime layers


def _top2_gap(win_flat):
    # smallest (max - runner-up) over pooling windows; inf when width is 1
    if win_flat.shape[4] < 2:
        return np.inf
    part = np.partition(win_flat, -2, axis=4)
    top, second = part[:, :, :, :, -1], part[:, :, :, :, -2]
    gaps = top - second
    return float(gaps[np.isfinite(gaps)].min()) if np.isfinite(gaps).any() else np.inf


class _ConvRt:
    def __init__(self, in_shape, kh, kw, out_ch, stride, relu):
        h, w, c = in_shape
        self.kh, self.kw, self.cin, self.cout = kh, kw, c, out_ch
        self.stride = stride
        self.relu = relu
        oh, ow, _ = _same_geometry(h, w, kh, kw, stride)
        self.in_shape = in_shape
        self.out_shape = (oh, ow, out_ch)
        self.n_params = kh * kw * c * out_ch + out_ch

    def _split(self, params):
        k = self.kh * self.kw * self.cin * self.cout
        return (
            params[:k].reshape(self.kh, self.kw, self.cin, self.cout),
            params[k:],
        )

    def init(self, rng):
        w, b = np.empty(0), np.empty(0)
        fan_in = self.kh * self.kw * self.cin
        lim = np.sqrt(6.0 / fan_in)
        w = rng.uniform_array(-lim, lim, self.kh * self.kw * self.cin * self.cout)
        b = np.zeros(self.cout)
        return np.concatenate([w, b])

    def forward(self, x, params):
        w, b = self._split(params)
        y, cols, pads = _conv_forward(x, w, b, self.stride)
        mask = None
        if self.relu:
            mask = y > 0.0
            y = np.where(mask, y, 0.0)
        return y, (cols, pads, mask)

    def backward(self, dy, cache, params):
        w, _ = self._split(params)
        cols, pads, mask = cache
        if mask is not None:
            dy = np.where(mask, dy, 0.0)
        n, oh, ow, co = dy.shape
        dy2 = dy.reshape(n * oh * ow, co)
        dw = (cols.T @ dy2).reshape(w.shape)
        db = dy2.sum(axis=0)
        dx = _conv_input_grad(dy, w, self.stride, pads, self.in_shape[:2])
        return dx, np.concatenate([dw.reshape(-1), db])

    def margin(self, x, params):
        w, b = self._split(params)
        y, _, _ = _conv_forward(x, w, b, self.stride)
        m = float(np.abs(y).min()) if self.relu else np.inf
        return m, (np.maximum(y, 0.0) if self.relu else y)


class _MaxPoolRt:
    n_params = 0

    def __init__(self, in_shape, k, stride):
        h, w, c = in_shape
        oh, ow, _ = _same_geometry(h, w, k, k, stride)
        self.in_shape = in_shape
        self.out_shape = (oh, ow, c)
        self.k, self.stride = k, stride

    def init(self, rng):
        return np.empty(0)

    def forward(self, x, params):
        return _pool_forward(x, self.k, self.stride)

    def backward(self, dy, cache, params):
        return _pool_backward(dy, cache), np.empty(0)

    def margin(self, x, params):
        n, h, w, c = x.shape
        oh, ow, (pt, pb, pl, pr) = _same_geometry(h, w, self.k, self.k, self.stride)
        xp = np.pad(
            x, ((0, 0), (pt, pb), (pl, pr), (0, 0)), constant_values=-np.inf
        )
        win = _window_view(xp, self.k, self.k, self.stride).reshape(
            n, oh, ow, self.k * self.k, c
        )
        y, _ = _pool_forward(x, self.k, self.stride)
        return _top2_gap(win), y


class _InceptionRt:
    def __init__(self, in_shape, spec):
        self.in_shape = in_shape
        h, w, _ = in_shape
        p2r = spec.p2_reduce or -(-spec.p2 // 2)
        p3r = spec.p3_reduce or -(-spec.p3 // 2)
        self.paths = [
            [_ConvRt(in_shape, 1, 1, spec.p1, 1, True)],
            [
                _ConvRt(in_shape, 1, 1, p2r, 1, True),
                _ConvRt((h, w, p2r), 3, 3, spec.p2, 1, True),
            ],
            [
                _ConvRt(in_shape, 1, 1, p3r, 1, True),
                _ConvRt((h, w, p3r), 5, 5, spec.p3, 1, True),
            ],
            [
                _MaxPoolRt(in_shape, 3, 1),
                _ConvRt(in_shape, 1, 1, spec.p4, 1, True),
            ],
        ]
        self.out_shape = (h, w, spec.out_channels)
        self.n_params = sum(l.n_params for p in self.paths for l in p)
        self.widths = (spec.p1, spec.p2, spec.p3, spec.p4)

    def _segments(self):
        off = 0
        for path in self.paths:
            for layer in path:
                yield layer, slice(off, off + layer.n_params)
                off += layer.n_params

    def init(self, rng):
        out = np.empty(self.n_params)
        for i, (layer, seg) in enumerate(self._segments()):
            out[seg] = layer.init(rng.child(f"p{i}"))
        return out

    def forward(self, x, params):
        slices = list(self._segments())
        si = 0
        outs, caches = [], []
        for path in self.paths:
            h = x
            path_caches = []
            for layer in path:
                _, seg = slices[si]
                si += 1
                h, cache = layer.forward(h, params[seg])
                path_caches.append(cache)
            outs.append(h)
            caches.append(path_caches)
        return np.concatenate(outs, axis=3), caches

    def backward(self, dy, caches, params):
        slices = list(self._segments())
        grads = np.empty(self.n_params)
        dx = np.zeros((dy.shape[0],) + self.in_shape)
        start = 0
        si = 0
        for p_idx, path in enumerate(self.paths):
            width = path[-1].out_shape[2]
            d_path = dy[:, :, :, start : start + width]
            start += width
            path_slices = []
            for layer in path:
                path_slices.append(slices[si])
                si += 1
            for layer, (_, seg), cache in zip(
                reversed(path), reversed(path_slices), reversed(caches[p_idx])
            ):
                d_path, dp = layer.backward(d_path, cache, params[seg])
                grads[seg] = dp
            dx += d_path
        return dx, grads

    def margin(self, x, params):
        slices = list(self._segments())
        si = 0
        outs = []
        worst = np.inf
        for path in self.paths:
            h = x
            for layer in path:
                _, seg = slices[si]
                si += 1
                m, h = layer.margin(h, params[seg])
                worst = min(worst, m)
            outs.append(h)
        return worst, np.concatenate(outs, axis=3)


class _GlobalAvgPoolRt:
    n_params = 0

    def __init__(self, in_shape):
        self.in_shape = in_shape
        self.out_shape = (in_shape[2],)

    def init(self, rng):
        return np.empty(0)

    def forward(self, x, params):
        return x.mean(axis=(1, 2)), x.shape

    def backward(self, dy, cache, params):
        n, h, w, c = cache
        dx = np.broadcast_to(dy[:, None, None, :] / (h * w), (n, h, w, c))
        return np.ascontiguousarray(dx), np.empty(0)

    def margin(self, x, params):
        return np.inf, x.mean(axis=(1, 2))


class _DenseRt:
    def __init__(self, in_shape, units, relu):
        (d,) = in_shape
        self.din, self.dout = d, units
        self.relu = relu
        self.in_shape = in_shape
        self.out_shape = (units,)
        self.n_params = d * units + units

    def _split(self, params):
        k = self.din * self.dout
        return params[:k].reshape(self.din, self.dout), params[k:]

    def init(self, rng):
        lim = np.sqrt(6.0 / self.din)
        w = rng.uniform_array(-lim, lim, self.din * self.dout)
        return np.concatenate([w, np.zeros(self.dout)])

    def forward(self, x, params):
        w, b = self._split(params)
        y = x @ w + b
        mask = None
        if self.relu:
            mask = y > 0.0
            y = np.where(mask, y, 0.0)
        return y, (x, mask)

    def backward(self, dy, cache, params):
        w, _ = self._split(params)
        x, mask = cache
        if mask is not None:
            dy = np.where(mask, dy, 0.0)
        dw = x.T @ dy
        db = dy.sum(axis=0)
        return dy @ w.T, np.concatenate([dw.reshape(-1), db])

    def margin(self, x, params):
        w, b = self._split(params)
        y = x @ w + b
        m = float(np.abs(y).min()) if self.relu else np.inf
        return m, (np.maximum(y, 0.0) if self.relu else y)


class _SoftmaxRt:
    n_params = 0

    def __init__(self, in_shape):
        self.in_shape = in_shape
        self.out_shape = in_shape

    def init(self, rng):
        return np.empty(0)

    def forward(self, x, params):
        z = x - x.max(axis=1, keepdims=True)
        e = np.exp(z)
        return e / e.sum(axis=1, keepdims=True), None

    def margin(self, x, params):
        return np.inf, self.forward(x, params)[0]


# ---------------------------------------------------------------------------
# network


class Network:
    """Compiled layer stack over one flat float64 parameter vector.

    The head starts at the first Dense layer; everything before it is the
    backbone.  Instances are treated as values: training and head re-init
    return new Networks, never mutate in place.
    """

    def __init__(self, arch, input_shape, params=None):
        self.arch = tuple(arch)
        self.input_shape = tuple(int(v) for v in input_shape)
        self._layers = []
        self._slices = []
        self.head_layer = None
        shape = self.input_shape
        offset = 0
        for i, spec in enumerate(self.arch):
            if isinstance(spec, Softmax) and i != len(self.arch) - 1:
                raise ValueError("Softmax must be the terminal layer")
            if isinstance(spec, Conv):
                layer = _ConvRt(shape, spec.kh, spec.kw, spec.out_channels,
                                spec.stride, spec.relu)
            elif isinstance(spec, MaxPool):
                layer = _MaxPoolRt(shape, spec.k, spec.stride)
            elif isinstance(spec, Inception):
                layer = _InceptionRt(shape, spec)
            elif isinstance(spec, GlobalAvgPool):
                layer = _GlobalAvgPoolRt(shape)
            elif isinstance(spec, Dense):
                if len(shape) != 1:
                    raise ShapeMismatchError(
                        "Dense needs flat input; add GlobalAvgPool first"
                    )
                layer = _DenseRt(shape, spec.units, spec.relu)
                if self.head_layer is None:
                    self.head_layer = i
            elif isinstance(spec, Softmax):
                layer = _SoftmaxRt(shape)
            else:
                raise ValueError(f"unknown layer spec {spec!r}")
            self._layers.append(layer)
            self._slices.append(slice(offset, offset + layer.n_params))
            offset += layer.n_params
            shape = layer.out_shape
        if not isinstance(self.arch[-1], Softmax):
            raise ValueError("network must end with Softmax")
        self.out_shape = shape
        self.n_params = offset
        if self.head_layer is None:
            raise ValueError("network needs at least one Dense layer")
        self.head_start = self._slices[self.head_layer].start
        self.params = (
            np.zeros(self.n_params) if params is None
            else np.asarray(params, dtype=np.float64).copy()
        )
        if self.params.shape != (self.n_params,):
            raise ShapeMismatchError(
                f"expected {self.n_params} params, got {self.params.shape}"
            )

    # -- construction -----------------------------------------------------

    def init_params(self, rng):
        out = np.empty(self.n_params)
        for i, (layer, seg) in enumerate(zip(self._layers, self._slices)):
            out[seg] = layer.init(rng.child(f"init/{i}"))
        return out

    def initialized(self, rng):
        return self.with_params(self.init_params(rng))

    def with_params(self, params):
        params = np.asarray(params, dtype=np.float64).copy()
        if params.shape != (self.n_params,):
            raise ShapeMismatchError(
                f"expected {self.n_params} params, got {params.shape}"
            )
        # layers are stateless, so clones share the compiled stack
        clone = object.__new__(Network)
        clone.__dict__.update(self.__dict__)
        clone.params = params
        return clone

    def reinit_head(self, rng):
        p = self.params.copy()
        for i in range(self.head_layer, len(self._layers)):
            p[self._slices[i]] = self._layers[i].init(rng.child(f"init/{i}"))
        return self.with_params(p)

    def head_mask(self):
        mask = np.zeros(self.n_params, dtype=bool)
        mask[self.head_start :] = True
        return mask

    # -- execution ---------------------------------------------------------

    def _check_batch(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.shape[1:] != self.input_shape:
            raise ShapeMismatchError(
                f"expected input {self.input_shape}, got {x.shape[1:]}"
            )
        return x

    def forward(self, x):
        """Batched class probabilities, shape (n, n_classes)."""
        h = self._check_batch(x)
        for layer, seg in zip(self._layers, self._slices):
            h, _ = layer.forward(h, self.params[seg])
        return h

    def forward_one(self, image):
        return self.forward(np.asarray(image, dtype=np.float64)[None])[0]

    def features(self, x, upto=None):
        """Activations entering the head (or layer `upto`)."""
        stop = self.head_layer if upto is None else upto
        h = self._check_batch(x)
        for layer, seg in zip(self._layers[:stop], self._slices[:stop]):
            h, _ = layer.forward(h, self.params[seg])
        return h

    def loss_grad(self, x, labels):
        """Mean cross-entropy over the batch and its exact parameter gradient."""
        x = self._check_batch(x)
        labels = np.asarray(labels, dtype=np.int64)
        n = x.shape[0]
        h = x
        caches = []
        for layer, seg in zip(self._layers[:-1], self._slices[:-1]):
            h, cache = layer.forward(h, self.params[seg])
            caches.append(cache)
        probs, _ = self._layers[-1].forward(h, np.empty(0))
        picked = np.maximum(probs[np.arange(n), labels], 1e-300)
        loss = float(-np.log(picked).mean())
        # fused softmax + cross-entropy gradient w.r.t. the logits
        d = probs.copy()
        d[np.arange(n), labels] -= 1.0
        d /= n
        grads = np.zeros(self.n_params)
        for layer, seg, cache in zip(
            reversed(self._layers[:-1]), reversed(self._slices[:-1]), reversed(caches)
        ):
            d, dp = layer.backward(d, cache, self.params[seg])
            grads[seg] = dp
        return loss, grads

    def loss_grad_one(self, image, label):
        return self.loss_grad(np.asarray(image, dtype=np.float64)[None], [label])

    def kink_margin(self, x):
        """Distance to the nearest non-differentiable point along this input:
        the smallest |ReLU pre-activation| and max-pool top-two gap.  Useful
        for placing finite-difference gradient checks away from kinks."""
        h = self._check_batch(x)
        worst = np.inf
        for layer, seg in zip(self._layers, self._slices):
            m, h = layer.margin(h, self.params[seg])
            worst = min(worst, m)
        return worst

    # -- head extraction (frozen-backbone training) -------------------------

    def head_network(self):
        """The Dense..Softmax tail as a standalone Network over feature vectors."""
        feat_shape = self._layers[self.head_layer].in_shape
        return Network(
            self.arch[self.head_layer :], feat_shape, self.params[self.head_start :]
        )

    def with_head_params(self, head_params):
        p = self.params.copy()
        p[self.head_start :] = head_params
        return self.with_params(p)

    def to_json_meta(self):
        return arch_to_json(self.arch), self.input_shape
