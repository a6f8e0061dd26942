"""Parametric image deformations: displacement flow fields and bilinear warping.

Pixel ``(row r, col c)`` of an ``N x M`` image sits at normalized coordinates

    n = (2c - (M - 1)) / (M - 1),   m = (2r - (N - 1)) / (N - 1)

so the image spans ``[-1, 1]`` on both axes with the origin at its center.
A flow field holds the displacement ``(u, v)`` of every pixel in those
units; output pixel ``p`` is read from the source image at ``p + flow(p)``
by bilinear interpolation, with zeros outside the image.

All flow constructors broadcast over leading parameter dimensions: an array
of ``B`` angles gives a ``(B, N, M, 2)`` stack of fields.
"""
from __future__ import annotations

from dataclasses import astuple, dataclass

import numpy as np


@dataclass(frozen=True)
class Rotation:
    beta: float = 0.0  # radians

    n_params = 1


@dataclass(frozen=True)
class Translation:
    t_u: float = 0.0
    t_v: float = 0.0

    n_params = 2


@dataclass(frozen=True)
class Affine:
    """Displacement ``A @ p + b``; all zeros is the identity."""

    a11: float = 0.0
    a12: float = 0.0
    a21: float = 0.0
    a22: float = 0.0
    b1: float = 0.0
    b2: float = 0.0

    n_params = 6


DeformationSpec = (Rotation, Translation, Affine)


def params_of(spec) -> np.ndarray:
    return np.array(astuple(spec), dtype=np.float64)


def _grid(N, M):
    if N < 1 or M < 1:
        raise ValueError(f"image dimensions must be positive, got {N}x{M}")
    r, c = np.meshgrid(np.arange(N, dtype=np.float64), np.arange(M, dtype=np.float64), indexing="ij")
    n = (2 * c - (M - 1)) / (M - 1) if M > 1 else np.zeros_like(c)
    m = (2 * r - (N - 1)) / (N - 1) if N > 1 else np.zeros_like(r)
    return n, m


def _param(x):
    return np.asarray(x, dtype=np.float64)[..., None, None]


def flow_rotation(beta, N: int, M: int) -> np.ndarray:
    n, m = _grid(N, M)
    b = _param(beta)
    cb, sb = np.cos(b), np.sin(b)
    u = n * (cb - 1) - m * sb
    v = n * sb + m * (cb - 1)
    return np.stack(np.broadcast_arrays(u, v), axis=-1)


def flow_translation(t_u, t_v, N: int, M: int) -> np.ndarray:
    n, _ = _grid(N, M)
    u = np.broadcast_to(_param(t_u), np.broadcast_shapes(np.shape(t_u), np.shape(t_v)) + n.shape)
    v = np.broadcast_to(_param(t_v), u.shape)
    return np.stack([u, v], axis=-1)


def flow_affine(a11, a12, a21, a22, b1, b2, N: int, M: int) -> np.ndarray:
    n, m = _grid(N, M)
    u = _param(a11) * n + _param(a12) * m + _param(b1)
    v = _param(a21) * n + _param(a22) * m + _param(b2)
    return np.stack(np.broadcast_arrays(u, v), axis=-1)


def flow_from_params(family, params, N: int, M: int) -> np.ndarray:
    """Flow for ``family`` (a spec instance or class) at parameters ``params[..., k]``."""
    cls = family if isinstance(family, type) else type(family)
    params = np.asarray(params, dtype=np.float64)
    if params.shape[-1:] != (cls.n_params,):
        raise ValueError(f"{cls.__name__} takes {cls.n_params} parameters, got shape {params.shape}")
    cols = [params[..., i] for i in range(cls.n_params)]
    if cls is Rotation:
        return flow_rotation(cols[0], N, M)
    if cls is Translation:
        return flow_translation(cols[0], cols[1], N, M)
    if cls is Affine:
        return flow_affine(*cols, N, M)
    raise TypeError(f"unknown deformation family {cls!r}")


def flow(spec, N: int, M: int) -> np.ndarray:
    return flow_from_params(spec, params_of(spec), N, M)


def _as_image(img):
    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 2:
        img = img[..., None]
    if img.ndim not in (3, 4):
        raise ValueError(f"expected an (N, M, C) image or a batch of them, got shape {img.shape}")
    return img


def _bilinear(images, rows, cols):
    """Sample ``images`` (B or 1, N, M, C) at pixel coordinates ``rows``/``cols`` (B, ...)."""
    _, N, M, C = images.shape
    padded = np.pad(images, ((0, 0), (1, 1), (1, 1), (0, 0)))
    flat = padded.reshape(padded.shape[0], -1, C)
    # anything past the one-pixel zero border reads the border
    y = np.clip(rows, -2.0, N + 1.0)
    x = np.clip(cols, -2.0, M + 1.0)
    y0f, x0f = np.floor(y), np.floor(x)
    fy, fx = (y - y0f)[..., None], (x - x0f)[..., None]
    y0 = np.clip(y0f.astype(np.intp), -1, N) + 1
    x0 = np.clip(x0f.astype(np.intp), -1, M) + 1
    y1 = np.clip(y0f.astype(np.intp) + 1, -1, N) + 1
    x1 = np.clip(x0f.astype(np.intp) + 1, -1, M) + 1
    W2 = M + 2

    if flat.shape[0] == 1:
        bidx = 0
    else:
        bidx = np.arange(flat.shape[0]).reshape((-1,) + (1,) * (y.ndim - 1))

    def at(yy, xx):
        return flat[bidx, yy * W2 + xx]

    top = (1 - fx) * at(y0, x0) + fx * at(y0, x1)
    bottom = (1 - fx) * at(y1, x0) + fx * at(y1, x1)
    return (1 - fy) * top + fy * bottom


def bilinear_sample(img, x: float, y: float, channel: int = 0) -> float:
    """Interpolate ``img`` at column ``x`` and row ``y`` (pixel-index units)."""
    img = _as_image(img)
    if img.ndim != 3:
        raise ValueError("bilinear_sample takes a single image")
    out = _bilinear(img[None], np.array([[float(y)]]), np.array([[float(x)]]))
    return float(out[0, 0, channel])


def warp(img, flow_field) -> np.ndarray:
    """Resample ``img`` along ``flow_field``.

    ``img`` is ``(N, M, C)`` or ``(B, N, M, C)``; ``flow_field`` is
    ``(N, M, 2)`` or ``(B, N, M, 2)``. One image with a stack of flows gives
    a stack of warped copies. Two-dimensional images gain a channel axis.
    """
    img = _as_image(img)
    flow_field = np.asarray(flow_field, dtype=np.float64)
    single = img.ndim == 3 and flow_field.ndim == 3
    images = img[None] if img.ndim == 3 else img
    flows = flow_field[None] if flow_field.ndim == 3 else flow_field
    N, M = images.shape[1:3]
    if flows.shape[1:] != (N, M, 2):
        raise ValueError(f"flow shape {flow_field.shape} does not match image {N}x{M}")
    if images.shape[0] > 1 and flows.shape[0] not in (1, images.shape[0]):
        raise ValueError(f"{images.shape[0]} images but {flows.shape[0]} flow fields")
    if flows.shape[0] == 1 and images.shape[0] > 1:
        flows = np.broadcast_to(flows, (images.shape[0],) + flows.shape[1:])

    r = np.arange(N, dtype=np.float64)[:, None]
    c = np.arange(M, dtype=np.float64)[None, :]
    cols = c + flows[..., 0] * ((M - 1) / 2)
    rows = r + flows[..., 1] * ((N - 1) / 2)
    out = _bilinear(images, rows, cols)
    # keep rounding from leaving the hull of the pixel values and the zero padding
    lo, hi = min(0.0, float(images.min())), max(0.0, float(images.max()))
    np.clip(out, lo, hi, out=out)
    return out[0] if single else out


def deform_image(img, spec, eps=None) -> np.ndarray:
    """Warp ``img`` with ``spec`` whose parameters are shifted by ``eps``.

    ``eps`` of shape ``(k,)`` gives one image; shape ``(B, k)`` gives a stack.
    """
    img = _as_image(img)
    phi = params_of(spec)
    if eps is None:
        eps = np.zeros_like(phi)
    eps = np.asarray(eps, dtype=np.float64)
    if eps.shape[-1:] != phi.shape:
        raise ValueError(f"{type(spec).__name__} takes {phi.size} parameters, eps has shape {eps.shape}")
    N, M = img.shape[-3:-1]
    return warp(img, flow_from_params(spec, phi + eps, N, M))
