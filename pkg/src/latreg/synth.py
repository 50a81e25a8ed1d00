"""Procedural multi-domain corpora with masks, deformation pairs, and splits.

Three toy anatomies stand in for real modalities: lunglike (two dark lobes
with rib stripes), brainlike (concentric shells plus a central ventricle),
and vessellike (a branching bright tree). Shape parameters are sampled once
per patient and shared across that patient's images; a designated shape
parameter binned into 14 classes provides the class label.

Images are quantized to 8 bits at render time and floating images are always
recomputed as warp(ref, def_app), so datasets round-trip through disk without
any drift.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image
from scipy.ndimage import distance_transform_edt, gaussian_filter

from .fields import sample_bspline_field, warp
from .pfg import read_pfg, write_pfg

DOMAINS = ("lunglike", "brainlike", "vessellike")
N_CLASSES = 14


@dataclass
class CorpusImage:
    image: np.ndarray
    mask: np.ndarray
    patient_id: str
    domain: str
    class_label: int


@dataclass
class Corpus:
    domain: str
    size: int
    images: list[CorpusImage]

    def patient_ids(self):
        seen = []
        for im in self.images:
            if im.patient_id not in seen:
                seen.append(im.patient_id)
        return seen


@dataclass
class ImagePair:
    ref: np.ndarray
    flt: np.ndarray
    def_app: np.ndarray
    ref_mask: np.ndarray
    flt_mask: np.ndarray
    patient_id: str
    domain: str
    class_label: int


@dataclass
class CorpusSplit:
    train: list[str]
    val: list[str]
    test: list[str]

    def fold_of(self, patient_id: str) -> str:
        for name in ("train", "val", "test"):
            if patient_id in getattr(self, name):
                return name
        raise KeyError(f"patient {patient_id} not in any fold")


@dataclass
class Dataset:
    domain: str
    size: int
    split: CorpusSplit
    pairs: list[ImagePair]
    meta: dict = field(default_factory=dict)

    def pairs_in_fold(self, fold: str) -> list[ImagePair]:
        wanted = set(getattr(self.split, fold))
        return [p for p in self.pairs if p.patient_id in wanted]


def _quantize(img: np.ndarray) -> np.ndarray:
    return np.round(np.clip(img, 0.0, 1.0) * 255.0) / 255.0


def _smooth_noise(rng, size, sigma, amp=1.0):
    n = gaussian_filter(rng.standard_normal((size, size)), sigma)
    peak = np.abs(n).max()
    if peak > 0:
        n = n / peak
    return amp * n


def _class_from_param(norm: float) -> int:
    return min(int(norm * N_CLASSES), N_CLASSES - 1)


def _sample_patient(domain: str, rng) -> dict:
    if domain == "lunglike":
        lobe_h = rng.uniform(0.20, 0.34)
        return {
            "lobe_h": lobe_h,
            "lobe_w": rng.uniform(0.10, 0.15),
            "sep": rng.uniform(0.15, 0.20),
            "cy": rng.uniform(0.48, 0.56),
            "rib_period": rng.uniform(0.09, 0.15),
            "rib_phase": rng.uniform(0, 2 * np.pi),
            "perturb": rng.integers(0, 2**31),
            "label": _class_from_param((lobe_h - 0.20) / 0.14),
        }
    if domain == "brainlike":
        aspect = rng.uniform(0.70, 0.98)
        return {
            "a": rng.uniform(0.30, 0.38),
            "aspect": aspect,
            "shells": rng.uniform(2.5, 4.5),
            "vent_r": rng.uniform(0.05, 0.09),
            "vent_sep": rng.uniform(0.05, 0.09),
            "tilt": rng.uniform(-0.3, 0.3),
            "label": _class_from_param((aspect - 0.70) / 0.28),
        }
    if domain == "vessellike":
        spread = rng.uniform(0.35, 0.75)
        segs = _grow_tree(rng, spread)
        return {
            "segs": segs,
            "spread": spread,
            "label": _class_from_param((spread - 0.35) / 0.40),
        }
    raise ValueError(f"unknown domain {domain!r}")


def _grow_tree(rng, spread, depth=4):
    """Recursive branching polyline in unit coordinates: list of (points, width)."""
    segs = []
    stack = [(np.array([0.92, 0.5]), -np.pi / 2 + rng.uniform(-0.15, 0.15), 0.035, depth)]
    while stack:
        pos, ang, width, lvl = stack.pop()
        steps = max(int(26 * 0.72 ** (depth - lvl)), 6)
        pts = [pos.copy()]
        for _ in range(steps):
            ang += rng.normal(0.0, 0.07)
            pos = pos + 0.018 * np.array([np.sin(ang), np.cos(ang)])
            pts.append(pos.copy())
        segs.append((np.array(pts), width))
        if lvl > 0:
            for sgn in (-1.0, 1.0):
                stack.append((pos.copy(), ang + sgn * spread * rng.uniform(0.7, 1.3),
                              width * 0.68, lvl - 1))
    return segs


def _render_lunglike(size, pat, jitter, contrast, noise_rng):
    rr, cc = np.meshgrid(np.arange(size), np.arange(size), indexing="ij")
    y = rr / size
    x = cc / size
    img = 0.35 + 0.12 * y
    cy = pat["cy"] + jitter[0] / size
    cx = 0.5 + jitter[1] / size
    torso = ((y - cy) / 0.44) ** 2 + ((x - cx) / 0.40) ** 2
    img += 0.18 * np.exp(-torso * 2.0)
    ribs = 0.06 * (0.5 + 0.5 * np.sin(2 * np.pi * y / pat["rib_period"] + pat["rib_phase"]))
    img += ribs * (torso < 1.0)
    prng = np.random.default_rng(pat["perturb"])
    bump = _smooth_noise(prng, size, size / 10, amp=0.18)
    mask = np.zeros((size, size), bool)
    for sgn in (-1.0, 1.0):
        lx = cx + sgn * pat["sep"]
        implicit = ((y - cy) / pat["lobe_h"]) ** 2 + ((x - lx) / pat["lobe_w"]) ** 2
        lobe = implicit < 1.0 + bump
        img -= 0.28 * np.exp(-np.maximum(implicit - bump, 0.0) * 2.5)
        mask |= lobe
    img = 0.5 + contrast * (img - 0.5)
    img += _smooth_noise(noise_rng, size, 1.2, amp=0.015)
    return _quantize(img), mask


def _render_brainlike(size, pat, jitter, contrast, noise_rng):
    rr, cc = np.meshgrid(np.arange(size), np.arange(size), indexing="ij")
    y = (rr / size) - 0.5 - jitter[0] / size
    x = (cc / size) - 0.5 - jitter[1] / size
    ct, st = np.cos(pat["tilt"]), np.sin(pat["tilt"])
    yr = ct * y - st * x
    xr = st * y + ct * x
    a = pat["a"]
    b = pat["a"] * pat["aspect"]
    rho = np.sqrt((yr / a) ** 2 + (xr / b) ** 2)
    head = rho < 1.0
    img = np.full((size, size), 0.08)
    img += head * (0.55 + 0.10 * np.sin(2 * np.pi * pat["shells"] * rho))
    img += ((rho > 0.92) & (rho < 1.0)) * 0.25
    vent = np.zeros((size, size), bool)
    for sgn in (-1.0, 1.0):
        d = ((yr / pat["vent_r"]) ** 2 + ((xr - sgn * pat["vent_sep"]) / (pat["vent_r"] * 0.6)) ** 2)
        vent |= d < 1.0
        img -= 0.30 * np.exp(-d * 1.5) * head
    img = 0.5 + contrast * (img - 0.5)
    img += _smooth_noise(noise_rng, size, 1.0, amp=0.012)
    return _quantize(img), head


def _render_vessellike(size, pat, jitter, contrast, noise_rng):
    marks = {}
    for pts, width in pat["segs"]:
        w_px = max(width * size, 0.8)
        key = round(w_px, 3)
        canvas = marks.setdefault(key, np.zeros((size, size), bool))
        for i in range(len(pts) - 1):
            for t in np.linspace(0.0, 1.0, 4):
                p = pts[i] * (1 - t) + pts[i + 1] * t
                r = int(round(p[0] * size + jitter[0]))
                c = int(round(p[1] * size + jitter[1]))
                if 0 <= r < size and 0 <= c < size:
                    canvas[r, c] = True
    mask = np.zeros((size, size), bool)
    for w_px, canvas in marks.items():
        if canvas.any():
            dist = distance_transform_edt(~canvas)
            mask |= dist <= w_px
    img = np.full((size, size), 0.12)
    rr, cc = np.meshgrid(np.arange(size), np.arange(size), indexing="ij")
    vign = ((rr / size - 0.5) ** 2 + (cc / size - 0.5) ** 2)
    img += 0.10 * np.exp(-vign * 6.0)
    img += gaussian_filter(mask.astype(float), 0.8) * 0.55
    img = 0.5 + contrast * (img - 0.5)
    img += _smooth_noise(noise_rng, size, 1.0, amp=0.015)
    return _quantize(img), mask


_RENDERERS = {
    "lunglike": _render_lunglike,
    "brainlike": _render_brainlike,
    "vessellike": _render_vessellike,
}


def generate_domain_corpus(domain, n_patients, images_per_patient, size=64, seed=0) -> Corpus:
    """Render a deterministic corpus; same arguments give byte-identical output."""
    if domain not in _RENDERERS:
        raise ValueError(f"unknown domain {domain!r}, expected one of {DOMAINS}")
    if n_patients < 1:
        raise ValueError("n_patients must be >= 1")
    if images_per_patient < 1:
        raise ValueError("images_per_patient must be >= 1")
    if size < 32:
        raise ValueError("size must be >= 32")
    render = _RENDERERS[domain]
    images = []
    for p in range(n_patients):
        pat_rng = np.random.default_rng(np.random.SeedSequence((seed, p)))
        pat = _sample_patient(domain, pat_rng)
        pid = f"{domain}_p{p:03d}"
        for i in range(images_per_patient):
            img_rng = np.random.default_rng(np.random.SeedSequence((seed, p, i)))
            jitter = img_rng.uniform(-1.5, 1.5, size=2)
            contrast = img_rng.uniform(0.92, 1.08)
            img, mask = render(size, pat, jitter, contrast, img_rng)
            images.append(CorpusImage(img, mask, pid, domain, pat["label"]))
    return Corpus(domain=domain, size=size, images=images)


def make_pairs(corpus: Corpus, flts_per_ref, max_disp, spacing, seed=0) -> list[ImagePair]:
    """Sample B-spline fields per reference and warp to produce floating images."""
    if not corpus.images:
        raise ValueError("corpus is empty")
    pairs = []
    for idx, im in enumerate(corpus.images):
        h, w = im.image.shape
        for k in range(flts_per_ref):
            fseed = int(np.random.SeedSequence((seed, idx, k)).generate_state(1)[0])
            _, def_app = sample_bspline_field(h, w, spacing=spacing, max_disp=max_disp, seed=fseed)
            flt = warp(im.image, def_app)
            flt_mask = warp(im.mask.astype(np.float64), def_app) > 0.5
            pairs.append(
                ImagePair(
                    ref=im.image,
                    flt=flt,
                    def_app=def_app,
                    ref_mask=im.mask,
                    flt_mask=flt_mask,
                    patient_id=im.patient_id,
                    domain=im.domain,
                    class_label=im.class_label,
                )
            )
    return pairs


def split_patients(corpus: Corpus, fractions=(0.7, 0.1, 0.2), seed=0) -> CorpusSplit:
    """Shuffled patient-level partition sized by largest remainder."""
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ValueError("fractions must sum to 1")
    if len(fractions) != 3:
        raise ValueError("expected (train, val, test) fractions")
    patients = corpus.patient_ids()
    n = len(patients)
    if n < 3:
        raise ValueError("need at least as many patients as folds")
    rng = np.random.default_rng(seed)
    order = [patients[i] for i in rng.permutation(n)]
    raw = [f * n for f in fractions]
    sizes = [int(np.floor(r)) for r in raw]
    remainders = [r - s for r, s in zip(raw, sizes)]
    while sum(sizes) < n:
        i = int(np.argmax(remainders))
        sizes[i] += 1
        remainders[i] = -1.0
    folds = []
    at = 0
    for s in sizes:
        folds.append(order[at : at + s])
        at += s
    split = CorpusSplit(train=folds[0], val=folds[1], test=folds[2])
    assert not (set(split.train) & set(split.val))
    assert not (set(split.train) & set(split.test))
    assert not (set(split.val) & set(split.test))
    return split


# ------------------------------------------------------------------ disk I/O


def save_image_png(path, image):
    Image.fromarray(np.round(np.clip(image, 0, 1) * 255.0).astype(np.uint8), mode="L").save(path)


def load_image_png(path) -> np.ndarray:
    return np.asarray(Image.open(path), dtype=np.float64) / 255.0


def save_dataset(root, domain, size, split: CorpusSplit, pairs: list[ImagePair], meta=None):
    """Write pair files plus a manifest tying them to patients and folds."""
    root = Path(root)
    pair_dir = root / "pairs"
    pair_dir.mkdir(parents=True, exist_ok=True)
    entries = []
    for i, p in enumerate(pairs):
        stem = f"{i:05d}"
        save_image_png(pair_dir / f"{stem}_ref.png", p.ref)
        save_image_png(pair_dir / f"{stem}_flt.png", p.flt)
        write_pfg(pair_dir / f"{stem}_ref_mask.pfg", p.ref_mask.astype(np.float32))
        write_pfg(pair_dir / f"{stem}_field.pfg", p.def_app.astype(np.float32))
        entries.append(
            {
                "patient_id": p.patient_id,
                "class_label": p.class_label,
                "ref": f"pairs/{stem}_ref.png",
                "flt_preview": f"pairs/{stem}_flt.png",
                "ref_mask": f"pairs/{stem}_ref_mask.pfg",
                "field": f"pairs/{stem}_field.pfg",
            }
        )
    manifest = {
        "domain": domain,
        "size": size,
        "split": {"train": split.train, "val": split.val, "test": split.test},
        "pairs": entries,
        "meta": meta or {},
    }
    with open(root / "manifest.json", "w") as f:
        json.dump(manifest, f, indent=1)


def load_dataset(root) -> Dataset:
    """Read a manifest and rebuild pairs; flt is recomputed from (ref, field)."""
    root = Path(root)
    manifest_path = root / "manifest.json"
    if not manifest_path.exists():
        raise FileNotFoundError(f"no manifest.json under {root}")
    with open(manifest_path) as f:
        manifest = json.load(f)
    split = CorpusSplit(**manifest["split"])
    pairs = []
    for e in manifest["pairs"]:
        ref = load_image_png(root / e["ref"])
        ref_mask = read_pfg(root / e["ref_mask"]) > 0.5
        def_app = read_pfg(root / e["field"]).astype(np.float64)
        flt = warp(ref, def_app)
        flt_mask = warp(ref_mask.astype(np.float64), def_app) > 0.5
        pairs.append(
            ImagePair(
                ref=ref,
                flt=flt,
                def_app=def_app,
                ref_mask=ref_mask,
                flt_mask=flt_mask,
                patient_id=e["patient_id"],
                domain=manifest["domain"],
                class_label=int(e["class_label"]),
            )
        )
    return Dataset(
        domain=manifest["domain"],
        size=int(manifest["size"]),
        split=split,
        pairs=pairs,
        meta=manifest.get("meta", {}),
    )
