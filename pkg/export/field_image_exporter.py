from io import BytesIO
from pathlib import Path

import matplotlib
matplotlib.use("Agg")
from matplotlib import colormaps
from matplotlib.colors import Normalize
import numpy as np
from PIL import Image

from export.report_exporter import ReportExporter, atomic_write_bytes
from logger.custom_logger import CustomLogger
from models.grid_calculus import ComplexField
from utils.path_utils import to_relpath

logger = CustomLogger()

IMAGE_KINDS = ("abs", "re", "im", "arg")
MASK_RGBA = (0, 0, 0, 0)


def field_to_rgba(field: ComplexField, kind: str = "abs", cmap_name: str = "viridis") -> np.ndarray:
    """
    場を matplotlib のカラーマップで RGBA (uint8) 配列に変換します。
    y が大きい行を画像の上にし、マスク点は透明にします。
    """
    if kind not in IMAGE_KINDS:
        raise ValueError(f"未対応の画像種別: {kind}")
    values = field.masked_values()
    data = {"abs": np.abs, "re": np.real, "im": np.imag, "arg": np.angle}[kind](values)
    valid = np.ones(field.domain.shape, dtype=bool) if field.mask is None else ~field.mask
    if kind == "arg":
        norm = Normalize(vmin=-np.pi, vmax=np.pi)
        cmap_name = "twilight"
    else:
        lo = float(data[valid].min()) if valid.any() else 0.0
        hi = float(data[valid].max()) if valid.any() else 1.0
        norm = Normalize(vmin=lo, vmax=hi if hi > lo else lo + 1.0)
    rgba = (colormaps[cmap_name](norm(data)) * 255).round().astype(np.uint8)
    rgba[~valid] = MASK_RGBA
    return np.ascontiguousarray(rgba[::-1])


def export_field_image(exporter: ReportExporter, name: str, field: ComplexField, kind: str = "abs",
                       cmap_name: str = "viridis") -> Path:
    """images/{name}_{kind}.png を Pillow で書き出します。"""
    image = Image.fromarray(field_to_rgba(field, kind, cmap_name), 'RGBA')
    buffer = BytesIO()
    image.save(buffer, format='PNG', optimize=True)
    relative = f"images/{name}_{kind}.png"
    target = atomic_write_bytes(exporter.path(relative), buffer.getvalue())
    exporter.add_image(relative)
    logger.log(f"'{to_relpath(target)}' に PNG として保存しました ({image.width}x{image.height})", level="DEBUG")
    return target
