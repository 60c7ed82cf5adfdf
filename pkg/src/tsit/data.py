"""Image codecs, datasets and deterministic batch loading.

Images live in [-1, 1] as float32 arrays shaped (3, H, W); a stored 8-bit
value p maps to 2p/255 - 1.  Semantic label masks are 8-bit single-channel
images holding integer class ids and are one-hot expanded at batch time.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

IMAGE_SUFFIXES = (".png", ".ppm")


class ImageDecodeError(ValueError):
    pass


class DataError(Exception):
    """Dataset layout problems (missing directories, unpaired files, ...)."""


@dataclass
class ImageRecord:
    pixels: np.ndarray  # (1, 3, H, W) float32 in [-1, 1]
    source: str = ""

    def __post_init__(self):
        p = np.asarray(self.pixels, dtype=np.float32)
        if p.ndim == 3:
            p = p[None]
        if p.ndim != 4 or p.shape[:2] != (1, 3):
            raise ValueError(f"image record needs shape (1, 3, H, W), got {p.shape}")
        if p.min() < -1.0 or p.max() > 1.0:
            raise ValueError("image values must lie in [-1, 1]")
        self.pixels = p

    @property
    def height(self) -> int:
        return self.pixels.shape[2]

    @property
    def width(self) -> int:
        return self.pixels.shape[3]


def _open(data: bytes) -> Image.Image:
    try:
        img = Image.open(io.BytesIO(data))
        img.load()
    except UnidentifiedImageError:
        raise ImageDecodeError("bad magic: not a PNG or PPM stream") from None
    except (OSError, SyntaxError, ValueError) as exc:
        raise ImageDecodeError(f"truncated or corrupt image stream: {exc}") from None
    if img.format not in ("PNG", "PPM"):
        raise ImageDecodeError(f"unsupported format {img.format}")
    return img


def to_unit_range(pixels_u8: np.ndarray) -> np.ndarray:
    return (pixels_u8.astype(np.float64) * (2.0 / 255.0) - 1.0).astype(np.float32)


def to_uint8(values: np.ndarray) -> np.ndarray:
    """Inverse of :func:`to_unit_range` with round-half-up."""
    p = np.floor((np.asarray(values, dtype=np.float64) + 1.0) * 127.5 + 0.5)
    return np.clip(p, 0, 255).astype(np.uint8)


def decode_image(data: bytes, source: str = "") -> ImageRecord:
    img = _open(data)
    if img.mode in ("RGBA", "P", "L"):
        img = img.convert("RGB")
    if img.mode != "RGB":
        raise ImageDecodeError(f"unsupported pixel format {img.mode} (8-bit RGB/RGBA only)")
    arr = np.asarray(img, dtype=np.uint8).transpose(2, 0, 1)
    return ImageRecord(to_unit_range(arr)[None], source)


def encode_image(rec: ImageRecord | np.ndarray, fmt: str = "png") -> bytes:
    pixels = rec.pixels if isinstance(rec, ImageRecord) else np.asarray(rec)
    if pixels.ndim == 4:
        pixels = pixels[0]
    img = Image.fromarray(to_uint8(pixels).transpose(1, 2, 0), mode="RGB")
    buf = io.BytesIO()
    img.save(buf, format={"png": "PNG", "ppm": "PPM"}[fmt.lower()])
    return buf.getvalue()


def decode_mask(data: bytes) -> np.ndarray:
    img = _open(data)
    if img.mode not in ("L", "P"):
        raise ImageDecodeError(f"label masks must be 8-bit single channel, got {img.mode}")
    return np.asarray(img, dtype=np.uint8).astype(np.int64)


def encode_mask(mask: np.ndarray) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(np.asarray(mask, dtype=np.uint8), mode="L").save(buf, format="PNG")
    return buf.getvalue()


def read_image(path) -> ImageRecord:
    path = Path(path)
    return decode_image(path.read_bytes(), str(path))


def write_image(path, rec: ImageRecord | np.ndarray) -> None:
    path = Path(path)
    path.write_bytes(encode_image(rec, "ppm" if path.suffix.lower() == ".ppm" else "png"))


def nearest_indices(src: int, dst: int) -> np.ndarray:
    return (np.arange(dst) * src) // dst


def resize_nearest(x, h: int, w: int):
    """Nearest-neighbour resize of an ImageRecord, a (..., H, W) array or a mask.

    Source index for output position i is floor(i * src / dst), so label values
    are never mixed."""
    if h < 1 or w < 1:
        raise ValueError("resize target must be positive")
    arr = x.pixels if isinstance(x, ImageRecord) else np.asarray(x)
    rows = nearest_indices(arr.shape[-2], h)
    cols = nearest_indices(arr.shape[-1], w)
    out = arr[..., rows[:, None], cols[None, :]]
    if isinstance(x, ImageRecord):
        return ImageRecord(out, x.source)
    return out


def one_hot(mask: np.ndarray, num_classes: int) -> np.ndarray:
    """(N, H, W) integer mask -> (N, C, H, W) float32 one-hot."""
    mask = np.asarray(mask)
    if mask.min() < 0 or mask.max() >= num_classes:
        raise DataError(f"label ids must lie in [0, {num_classes})")
    return np.moveaxis(np.eye(num_classes, dtype=np.float32)[mask], -1, 1).copy()


# -- datasets ----------------------------------------------------------------


@dataclass
class DatasetSpec:
    mode: str = "unpaired"  # paired | unpaired | semantic
    content_dir: str = ""
    style_dir: str = ""
    height: int = 256
    width: int = 256
    seed: int = 0
    num_classes: int = 0
    flip: bool = False

    def validate(self, k: int | None = None) -> None:
        if self.mode not in ("paired", "unpaired", "semantic"):
            raise DataError(f"unknown dataset mode {self.mode!r}")
        if k is not None and (self.height % 2**k or self.width % 2**k):
            raise DataError(f"resize target {self.height}x{self.width} is not divisible by 2^{k}")
        if self.mode == "semantic" and self.num_classes < 2:
            raise DataError("semantic mode needs num_classes >= 2")


class ImageFolderDataset:
    """Content/style (or labels/images) directories; files paired by basename."""

    def __init__(self, spec: DatasetSpec):
        spec.validate()
        self.spec = spec
        self.content_files = self._list(spec.content_dir, "content_dir")
        self.style_files = self._list(spec.style_dir, "style_dir")
        if spec.mode in ("paired", "semantic"):
            cs = [p.stem for p in self.content_files]
            ss = [p.stem for p in self.style_files]
            if cs != ss:
                missing = sorted(set(cs) ^ set(ss))[:5]
                raise DataError(f"paired mode: basenames differ between {spec.content_dir} and "
                                f"{spec.style_dir} (e.g. {missing})")
        self._cache: dict[Path, np.ndarray] = {}

    @staticmethod
    def _list(directory: str, what: str) -> list[Path]:
        d = Path(directory)
        if not directory or not d.is_dir():
            raise DataError(f"{what} does not exist: {directory}")
        files = sorted(p for p in d.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)
        if not files:
            raise DataError(f"{what} contains no images: {directory}")
        return files

    def __len__(self) -> int:
        return len(self.content_files)

    @property
    def num_styles(self) -> int:
        return len(self.style_files)

    def _image(self, path: Path) -> np.ndarray:
        if path not in self._cache:
            try:
                rec = read_image(path)
            except ImageDecodeError as exc:
                raise DataError(f"{path}: {exc}") from None
            self._cache[path] = resize_nearest(rec, self.spec.height, self.spec.width).pixels[0]
        return self._cache[path]

    def content(self, i: int) -> np.ndarray:
        path = self.content_files[i]
        if self.spec.mode != "semantic":
            return self._image(path)
        if path not in self._cache:
            mask = decode_mask(path.read_bytes())
            self._cache[path] = resize_nearest(mask, self.spec.height, self.spec.width)
        return self._cache[path]

    def style(self, i: int) -> np.ndarray:
        return self._image(self.style_files[i])


@dataclass
class SyntheticDataset:
    """Procedural images: content layouts of flat shapes, styles given by
    per-channel affine palettes.  ``target[i]`` is content layout i rendered in
    the palette of style i (a paired ground truth)."""

    spec: DatasetSpec
    content_images: np.ndarray
    style_images: np.ndarray
    targets: np.ndarray
    palettes: np.ndarray  # (P, 2, 3): per-channel scale and offset
    palette_ids: np.ndarray
    content_layouts: np.ndarray
    labels: np.ndarray | None = None
    kind: str = "style_transfer"
    content_files: list = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.content_images)

    @property
    def num_styles(self) -> int:
        return len(self.style_images)

    def content(self, i: int) -> np.ndarray:
        if self.kind == "semantic":
            return self.labels[i]
        return self.content_images[i]

    def style(self, i: int) -> np.ndarray:
        if self.spec.mode in ("paired", "semantic"):
            return self.targets[i]
        return self.style_images[i]


NEUTRAL_PALETTE = np.array([[0.8, 0.8, 0.8], [0.0, 0.0, 0.0]])


def render(layout: np.ndarray, palette: np.ndarray) -> np.ndarray:
    """Map a [0, 1] layout to a (3, H, W) image: offset + scale * (2 * layout - 1)."""
    scale, offset = palette
    img = offset[:, None, None] + scale[:, None, None] * (2.0 * layout[None] - 1.0)
    return img.astype(np.float32)


def random_palettes(n: int, rng: np.random.Generator) -> np.ndarray:
    scale = rng.uniform(0.2, 0.5, size=(n, 3))
    offset = rng.uniform(-0.5, 0.5, size=(n, 3))
    return np.stack([scale, offset], axis=1)


def random_layout(h: int, w: int, rng: np.random.Generator, num_classes: int = 4):
    """Flat background plus 2-4 rectangles/discs; returns (levels in [0,1], class ids)."""
    levels = np.linspace(0.0, 1.0, num_classes)
    classes = np.zeros((h, w), dtype=np.int64)
    yy, xx = np.mgrid[0:h, 0:w]
    for _ in range(rng.integers(2, 5)):
        cls = int(rng.integers(1, num_classes))
        cy, cx = rng.uniform(0, h), rng.uniform(0, w)
        ry, rx = rng.uniform(h / 8, h / 3), rng.uniform(w / 8, w / 3)
        if rng.random() < 0.5:
            region = (np.abs(yy - cy) <= ry) & (np.abs(xx - cx) <= rx)
        else:
            region = ((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2 <= 1.0
        classes[region] = cls
    return levels[classes], classes


def make_synthetic_dataset(kind: str = "style_transfer", n: int = 8, h: int = 32, w: int = 32,
                           seed: int = 0, n_palettes: int = 4, num_classes: int = 4,
                           mode: str | None = None) -> SyntheticDataset:
    if kind not in ("style_transfer", "semantic"):
        raise ValueError(f"unknown synthetic kind {kind!r}")
    rng = np.random.default_rng(seed)
    palettes = random_palettes(n_palettes, rng)
    content_layouts, labels, contents, styles, targets = [], [], [], [], []
    palette_ids = rng.integers(0, n_palettes, size=n)
    for i in range(n):
        layout, classes = random_layout(h, w, rng, num_classes)
        style_layout, _ = random_layout(h, w, rng, num_classes)
        pal = palettes[palette_ids[i]]
        content_layouts.append(layout)
        labels.append(classes)
        contents.append(render(layout, NEUTRAL_PALETTE))
        styles.append(render(style_layout, pal))
        targets.append(render(layout, pal))
    if mode is None:
        mode = "semantic" if kind == "semantic" else "unpaired"
    spec = DatasetSpec(mode=mode, height=h, width=w, seed=seed,
                       num_classes=num_classes if kind == "semantic" else 0)
    return SyntheticDataset(spec, np.stack(contents), np.stack(styles), np.stack(targets), palettes,
                            palette_ids, np.stack(content_layouts),
                            np.stack(labels) if kind == "semantic" else None, kind)


# -- batching ----------------------------------------------------------------


@dataclass
class Batch:
    content: np.ndarray  # (N, C, H, W): images, or one-hot labels in semantic mode
    style: np.ndarray  # (N, 3, H, W): style images or paired targets
    content_index: np.ndarray
    style_index: np.ndarray


class BatchLoader:
    """Deterministic batches: the sample order of each epoch is a pure function
    of (seed, epoch), so batch ``step`` can be rebuilt without replaying."""

    def __init__(self, dataset, batch_size: int = 1, seed: int = 0, flip: bool = False):
        if len(dataset) == 0:
            raise DataError("dataset is empty")
        self.dataset = dataset
        self.batch_size = batch_size
        self.seed = seed
        self.flip = flip
        self.mode = dataset.spec.mode
        self.step = 0

    def _order(self, epoch: int, stream: int, size: int) -> np.ndarray:
        return np.random.default_rng([self.seed, epoch, stream]).permutation(size)

    def _indices(self, step: int, stream: int, size: int) -> np.ndarray:
        out = []
        for j in range(self.batch_size):
            flat = step * self.batch_size + j
            epoch, pos = divmod(flat, size)
            out.append(self._order(epoch, stream, size)[pos])
        return np.array(out)

    def batch_at(self, step: int) -> Batch:
        ds = self.dataset
        ci = self._indices(step, 0, len(ds))
        si = ci if self.mode in ("paired", "semantic") else self._indices(step, 1, ds.num_styles)
        content = np.stack([ds.content(i) for i in ci])
        style = np.stack([ds.style(i) for i in si])
        if self.mode == "semantic":
            content = one_hot(content, ds.spec.num_classes)
        if self.flip:
            flips = np.random.default_rng([self.seed, step, 2]).random(self.batch_size) < 0.5
            content = np.where(flips[:, None, None, None], content[..., ::-1], content)
            style = np.where(flips[:, None, None, None], style[..., ::-1], style)
        return Batch(np.ascontiguousarray(content, dtype=np.float32),
                     np.ascontiguousarray(style, dtype=np.float32), ci, si)

    def next_batch(self) -> Batch:
        batch = self.batch_at(self.step)
        self.step += 1
        return batch

    def steps_per_epoch(self) -> int:
        return max(1, len(self.dataset) // self.batch_size)


def next_batch(loader: BatchLoader):
    """``(content batch, style/target batch)`` for the loader's next step."""
    b = loader.next_batch()
    return b.content, b.style
