"""Similarity, overlap, and boundary-distance measures.

Grayscale inputs are assumed to live in [0, 1]; values outside are clipped
before histogramming. Masks are anything truthy per pixel. The torch variants
(soft_nmi_torch, ssim_torch) are differentiable and accept an optional batch
dimension; the plain functions wrap them for numpy callers.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
import torch
import torch.nn.functional as F
from scipy.ndimage import binary_erosion
from scipy.spatial import cKDTree
from scipy.stats import rankdata

DEFAULT_BINS = 32
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5


def _check_pair(a, b):
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")


def nmi(a: np.ndarray, b: np.ndarray, bins: int = DEFAULT_BINS) -> float:
    """Normalized mutual information 2*I(A;B)/(H(A)+H(B)) over a joint histogram.

    Uses `bins` equal-width bins on [0,1] for each image. Returns 0 when both
    marginal entropies vanish (both images constant).
    """
    _check_pair(a, b)
    if bins < 2:
        raise ValueError("bins must be >= 2")
    av = np.clip(np.asarray(a, dtype=np.float64).ravel(), 0.0, 1.0)
    bv = np.clip(np.asarray(b, dtype=np.float64).ravel(), 0.0, 1.0)
    joint, _, _ = np.histogram2d(av, bv, bins=bins, range=[[0.0, 1.0], [0.0, 1.0]])
    joint /= joint.sum()
    pa = joint.sum(axis=1)
    pb = joint.sum(axis=0)

    def entropy(p):
        p = p[p > 0]
        return float(-(p * np.log(p)).sum())

    ha, hb, hab = entropy(pa), entropy(pb), entropy(joint.ravel())
    if ha + hb == 0.0:
        return 0.0
    return 2.0 * (ha + hb - hab) / (ha + hb)


def _soft_assignments(values: torch.Tensor, bins: int, sigma: float) -> torch.Tensor:
    """Per-sample Gaussian bin weights, normalized over bins. (B,N) -> (B,N,bins)."""
    centers = torch.linspace(
        0.5 / bins, 1.0 - 0.5 / bins, bins, dtype=values.dtype, device=values.device
    )
    logits = -0.5 * ((values.unsqueeze(-1) - centers) / sigma) ** 2
    return torch.softmax(logits, dim=-1)


def soft_nmi_torch(
    a: torch.Tensor,
    b: torch.Tensor,
    bins: int = DEFAULT_BINS,
    kernel_sigma: float | None = None,
) -> torch.Tensor:
    """Differentiable NMI from a Parzen (Gaussian soft-binned) joint density.

    Accepts (H,W) or a leading batch dimension; returns a scalar or (B,) tensor.
    kernel_sigma defaults to one bin width; smaller sigma approaches hard nmi.
    """
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {tuple(a.shape)} vs {tuple(b.shape)}")
    if bins < 2:
        raise ValueError("bins must be >= 2")
    sigma = 1.0 / bins if kernel_sigma is None else float(kernel_sigma)
    if sigma <= 0:
        raise ValueError("kernel_sigma must be positive")
    batched = a.dim() > 2
    h, w = a.shape[-2], a.shape[-1]
    fa = a.reshape(-1, h * w).clamp(0.0, 1.0)
    fb = b.reshape(-1, h * w).clamp(0.0, 1.0)
    wa = _soft_assignments(fa, bins, sigma)
    wb = _soft_assignments(fb, bins, sigma)
    joint = wa.transpose(1, 2) @ wb / fa.shape[1]
    pa = joint.sum(dim=2)
    pb = joint.sum(dim=1)
    eps = 1e-12
    ha = -(pa * torch.log(pa + eps)).sum(dim=1)
    hb = -(pb * torch.log(pb + eps)).sum(dim=1)
    hab = -(joint * torch.log(joint + eps)).sum(dim=(1, 2))
    out = 2.0 * (ha + hb - hab) / torch.clamp(ha + hb, min=eps)
    return out if batched else out[0]


def soft_nmi(
    a: np.ndarray,
    b: np.ndarray,
    bins: int = DEFAULT_BINS,
    kernel_sigma: float | None = None,
) -> float:
    ta = torch.as_tensor(np.asarray(a, dtype=np.float64))
    tb = torch.as_tensor(np.asarray(b, dtype=np.float64))
    return float(soft_nmi_torch(ta, tb, bins=bins, kernel_sigma=kernel_sigma))


def _gaussian_kernel(size: int, sigma: float, dtype, device) -> torch.Tensor:
    half = size // 2
    coords = torch.arange(-half, half + 1, dtype=dtype, device=device)
    g = torch.exp(-(coords**2) / (2.0 * sigma**2))
    g = g / g.sum()
    k = torch.outer(g, g)
    return (k / k.sum()).reshape(1, 1, size, size)


def ssim_torch(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    """Mean local SSIM, 11x11 Gaussian window sigma=1.5, valid windows only.

    K1=0.01, K2=0.03, dynamic range 1. Result clamped to [0,1]. Accepts (H,W)
    or a leading batch dimension.
    """
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {tuple(a.shape)} vs {tuple(b.shape)}")
    h, w = a.shape[-2], a.shape[-1]
    if min(h, w) < SSIM_WINDOW:
        raise ValueError(f"image smaller than {SSIM_WINDOW}x{SSIM_WINDOW} window")
    batched = a.dim() > 2
    xa = a.reshape(-1, 1, h, w)
    xb = b.reshape(-1, 1, h, w)
    kern = _gaussian_kernel(SSIM_WINDOW, SSIM_SIGMA, xa.dtype, xa.device)
    c1 = 0.01**2
    c2 = 0.03**2
    mu_a = F.conv2d(xa, kern)
    mu_b = F.conv2d(xb, kern)
    var_a = F.conv2d(xa * xa, kern) - mu_a**2
    var_b = F.conv2d(xb * xb, kern) - mu_b**2
    cov = F.conv2d(xa * xb, kern) - mu_a * mu_b
    num = (2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2)
    den = (mu_a**2 + mu_b**2 + c1) * (var_a + var_b + c2)
    per_image = (num / den).mean(dim=(1, 2, 3)).clamp(0.0, 1.0)
    return per_image if batched else per_image[0]


def ssim(a: np.ndarray, b: np.ndarray) -> float:
    ta = torch.as_tensor(np.asarray(a, dtype=np.float64))
    tb = torch.as_tensor(np.asarray(b, dtype=np.float64))
    return float(ssim_torch(ta, tb))


def dice(a: np.ndarray, b: np.ndarray) -> float:
    """Dice overlap in percent; two empty masks count as perfect (100)."""
    _check_pair(a, b)
    ma = np.asarray(a).astype(bool)
    mb = np.asarray(b).astype(bool)
    total = int(ma.sum()) + int(mb.sum())
    if total == 0:
        return 100.0
    return 100.0 * 2.0 * int((ma & mb).sum()) / total


_CROSS = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)


def boundary_points(mask: np.ndarray) -> np.ndarray:
    """(N,2) row/col coordinates of mask pixels with a 4-neighbor outside.

    Off-image counts as outside, so a mask touching the border contributes its
    border pixels.
    """
    m = np.asarray(mask).astype(bool)
    if not m.any():
        raise ValueError("mask is empty")
    interior = binary_erosion(m, structure=_CROSS, border_value=0)
    return np.argwhere(m & ~interior).astype(np.float64)


def _directed_distances(a: np.ndarray, b: np.ndarray):
    pa = boundary_points(a)
    pb = boundary_points(b)
    d_ab, _ = cKDTree(pb).query(pa)
    d_ba, _ = cKDTree(pa).query(pb)
    return d_ab, d_ba


def hd95(a: np.ndarray, b: np.ndarray) -> float:
    """95th-percentile symmetric Hausdorff distance between mask boundaries."""
    _check_pair(a, b)
    d_ab, d_ba = _directed_distances(a, b)
    return float(max(np.percentile(d_ab, 95.0), np.percentile(d_ba, 95.0)))


def mad_edge_distance(a: np.ndarray, b: np.ndarray) -> float:
    """Symmetric mean nearest-neighbor distance between mask boundaries."""
    _check_pair(a, b)
    d_ab, d_ba = _directed_distances(a, b)
    return float(0.5 * (d_ab.mean() + d_ba.mean()))


def mse(a: np.ndarray, b: np.ndarray) -> float:
    _check_pair(a, b)
    diff = np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64)
    return float(np.mean(diff * diff))


def auc(scored) -> float:
    """Rank-based AUC: probability a positive outranks a negative, ties half."""
    scores = np.array([s for s, _ in scored], dtype=np.float64)
    labels = np.array([int(lbl) for _, lbl in scored])
    n_pos = int((labels == 1).sum())
    n_neg = int((labels == 0).sum())
    if n_pos == 0 or n_neg == 0:
        raise ValueError("auc needs both labels present")
    ranks = rankdata(scores)
    pos_rank_sum = float(ranks[labels == 1].sum())
    return (pos_rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


@dataclass
class MetricReport:
    """One evaluation row: overlap, boundary distances, intensity similarity."""

    dice: float
    hd95: float
    mad: float
    nmi: float
    ssim: float
    mse: float
    wall_time: float = 0.0

    CSV_HEADER = ("DM", "HD95", "MAD", "Time")

    def csv_row(self):
        return (
            f"{self.dice:.4f}",
            f"{self.hd95:.4f}",
            f"{self.mad:.4f}",
            f"{self.wall_time:.4f}",
        )

    def as_dict(self):
        return asdict(self)
