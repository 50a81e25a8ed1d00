"""Dense displacement fields: identity, B-spline synthesis, warping, composition.

A displacement field is an (H, W, 2) float array whose last axis holds
(dx, dy) in pixels. The convention is pull-based: the output value at
(r, c) is sampled from the input at (r + dy, c + dx). Sampling is bilinear
with out-of-bounds coordinates clamped to the border.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Paper-scale displacement bound; used as the default MSE normalizer.
DEFAULT_MAX_DISP = 20.0


@dataclass
class BSplineGrid:
    """Uniform cubic B-spline control grid over an image extent.

    ``control_points`` has shape (cells_y + 3, cells_x + 3, 2) where
    cells = ceil(extent / spacing); the extra rows/cols are the boundary
    controls at index -1 and beyond the last cell.
    """

    spacing: float
    control_points: np.ndarray
    height: int
    width: int


def _check_dims(height: int, width: int) -> None:
    if height < 1 or width < 1:
        raise ValueError(f"image dimensions must be >= 1, got {height}x{width}")


def make_identity_field(height: int, width: int) -> np.ndarray:
    """All-zero displacement field of shape (height, width, 2)."""
    _check_dims(height, width)
    return np.zeros((height, width, 2), dtype=np.float64)


def _check_field(field: np.ndarray, name: str = "field") -> np.ndarray:
    field = np.asarray(field, dtype=np.float64)
    if field.ndim != 3 or field.shape[2] != 2:
        raise ValueError(f"{name} must have shape (H, W, 2), got {field.shape}")
    return field


def _check_same_shape(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")


def cubic_bspline_weights(u: np.ndarray) -> np.ndarray:
    """The four cubic B-spline basis values B0..B3 at fractional offset u.

    Returns shape u.shape + (4,). The weights are non-negative and sum to 1
    (partition of unity), so any interpolated value is a convex combination
    of control values.
    """
    u = np.asarray(u, dtype=np.float64)
    u2 = u * u
    u3 = u2 * u
    b0 = (1.0 - u) ** 3 / 6.0
    b1 = (3.0 * u3 - 6.0 * u2 + 4.0) / 6.0
    b2 = (-3.0 * u3 + 3.0 * u2 + 3.0 * u + 1.0) / 6.0
    b3 = u3 / 6.0
    return np.stack([b0, b1, b2, b3], axis=-1)


def bspline_basis_matrix(extent: int, spacing: float, n_ctrl: int) -> np.ndarray:
    """Dense basis matrix B of shape (extent, n_ctrl).

    B[p, j] is the weight of control point j (grid index j-1 relative to
    cell origins) at pixel p, so dense = B_rows @ CP @ B_cols.T per component.
    """
    t = np.arange(extent, dtype=np.float64) / spacing
    cell = np.floor(t).astype(np.int64)
    cell = np.minimum(cell, n_ctrl - 4)  # defensive; floor((extent-1)/s) <= n_ctrl-4 always
    u = t - cell
    w = cubic_bspline_weights(u)  # (extent, 4)
    mat = np.zeros((extent, n_ctrl), dtype=np.float64)
    rows = np.arange(extent)
    for m in range(4):
        mat[rows, cell + m] += w[:, m]
    return mat


def n_control(extent: int, spacing: float) -> int:
    """Control-point count covering ``extent`` pixels at ``spacing``."""
    return int(np.ceil(extent / spacing)) + 3


def bspline_to_dense(grid: BSplineGrid, height: int, width: int) -> np.ndarray:
    """Evaluate the control grid as a dense (H, W, 2) displacement field.

    Tensor-product cubic interpolation; C2 smooth away from boundaries.
    """
    _check_dims(height, width)
    if grid.height != height or grid.width != width:
        raise ValueError(
            f"grid covers {grid.height}x{grid.width}, asked for {height}x{width}"
        )
    cp = np.asarray(grid.control_points, dtype=np.float64)
    ny, nx = n_control(height, grid.spacing), n_control(width, grid.spacing)
    if cp.shape != (ny, nx, 2):
        raise ValueError(f"control grid shape {cp.shape}, expected {(ny, nx, 2)}")
    br = bspline_basis_matrix(height, grid.spacing, ny)
    bc = bspline_basis_matrix(width, grid.spacing, nx)
    dense = np.empty((height, width, 2), dtype=np.float64)
    for k in range(2):
        dense[:, :, k] = br @ cp[:, :, k] @ bc.T
    return dense


def sample_bspline_field(
    height: int,
    width: int,
    spacing: float,
    max_disp: float,
    seed: int,
) -> tuple[BSplineGrid, np.ndarray]:
    """Draw a random smooth field: controls uniform on [-max_disp, +max_disp].

    The dense field obeys |dx|, |dy| <= max_disp everywhere because every
    interpolated value is a convex combination of control displacements.
    """
    _check_dims(height, width)
    if spacing < 2:
        raise ValueError(f"spacing must be >= 2 px, got {spacing}")
    if spacing > min(height, width):
        raise ValueError(f"spacing {spacing} exceeds image extent {height}x{width}")
    if max_disp < 0:
        raise ValueError(f"max_disp must be >= 0, got {max_disp}")
    rng = np.random.default_rng(seed)
    ny, nx = n_control(height, spacing), n_control(width, spacing)
    cp = rng.uniform(-max_disp, max_disp, size=(ny, nx, 2))
    # float32 quantization up front so in-memory and PFG-round-tripped fields agree
    cp = cp.astype(np.float32).astype(np.float64)
    grid = BSplineGrid(spacing=float(spacing), control_points=cp, height=height, width=width)
    return grid, bspline_to_dense(grid, height, width)


def bilinear_sample(plane: np.ndarray, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
    """Bilinearly sample a 2D plane at float coordinates, clamped to border."""
    h, w = plane.shape
    rr = np.clip(rows, 0.0, h - 1.0)
    cc = np.clip(cols, 0.0, w - 1.0)
    r0 = np.floor(rr).astype(np.int64)
    c0 = np.floor(cc).astype(np.int64)
    r1 = np.minimum(r0 + 1, h - 1)
    c1 = np.minimum(c0 + 1, w - 1)
    fr = rr - r0
    fc = cc - c0
    top = plane[r0, c0] * (1.0 - fc) + plane[r0, c1] * fc
    bot = plane[r1, c0] * (1.0 - fc) + plane[r1, c1] * fc
    return top * (1.0 - fr) + bot * fr


def warp(image: np.ndarray, field: np.ndarray) -> np.ndarray:
    """Backward-warp an image: out(r, c) = image(r + dy, c + dx)."""
    image = np.asarray(image, dtype=np.float64)
    field = _check_field(field)
    if image.shape != field.shape[:2]:
        raise ValueError(f"image {image.shape} vs field {field.shape[:2]}")
    h, w = image.shape
    rg, cg = np.meshgrid(np.arange(h, dtype=np.float64), np.arange(w, dtype=np.float64), indexing="ij")
    return bilinear_sample(image, rg + field[:, :, 1], cg + field[:, :, 0])


def compose_fields(outer: np.ndarray, inner: np.ndarray) -> np.ndarray:
    """Field of the two-step warp: composed(p) = inner(p) + outer(p + inner(p)).

    Satisfies warp(warp(img, outer), inner) == warp(img, compose(outer, inner))
    up to bilinear resampling error.
    """
    outer = _check_field(outer, "outer")
    inner = _check_field(inner, "inner")
    _check_same_shape(outer, inner)
    h, w = outer.shape[:2]
    rg, cg = np.meshgrid(np.arange(h, dtype=np.float64), np.arange(w, dtype=np.float64), indexing="ij")
    rr = rg + inner[:, :, 1]
    cc = cg + inner[:, :, 0]
    composed = np.empty_like(inner)
    for k in range(2):
        composed[:, :, k] = inner[:, :, k] + bilinear_sample(outer[:, :, k], rr, cc)
    return composed


def field_mse_norm(a: np.ndarray, b: np.ndarray, max_disp: float = DEFAULT_MAX_DISP) -> float:
    """Mean squared component difference normalized to [0, 1].

    The normalizer (2*max_disp)^2 is the largest possible squared component
    difference under the configured displacement bound; the result is clipped
    to [0, 1].
    """
    a = _check_field(a, "a")
    b = _check_field(b, "b")
    _check_same_shape(a, b)
    if max_disp <= 0:
        raise ValueError(f"max_disp must be > 0, got {max_disp}")
    mse = float(np.mean((a - b) ** 2))
    return float(np.clip(mse / (2.0 * max_disp) ** 2, 0.0, 1.0))
