"""
場の表 (i,j,x,y,re,im,mask) と Laurent 族のシリアライズ。
"""
from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from export.report_exporter import ReportExporter, atomic_write_text, dumps_json, render_csv
from logger.custom_logger import CustomLogger
from models.conformal_limit import FORMS, LaurentConnectionFamily, family_from_arrays
from models.grid_calculus import ComplexField, GridDomain
from utils.errors import ConfigError
from utils.path_utils import to_relpath

logger = CustomLogger()

FIELD_HEADER = ("i", "j", "x", "y", "re", "im", "mask")


def field_rows(field: ComplexField):
    domain = field.domain
    X, Y = domain.mesh()
    mask = field.mask if field.mask is not None else np.zeros(domain.shape, dtype=bool)
    values = field.masked_values()
    for j in range(domain.ny):
        for i in range(domain.nx):
            v = values[j, i]
            yield (i, j, float(X[j, i]), float(Y[j, i]), float(v.real), float(v.imag), bool(mask[j, i]))


def render_field_table(field: ComplexField) -> str:
    return render_csv(FIELD_HEADER, field_rows(field))


def write_field_table(path: str | Path, field: ComplexField) -> Path:
    return atomic_write_text(Path(path), render_field_table(field))


def read_field_table(path: str | Path, domain: GridDomain) -> ComplexField:
    """表を読み込みます。全格子点がちょうど 1 回ずつ現れる必要があります。"""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"場の表が見つかりません: {to_relpath(path)}", kind="missing_file", path=str(path))
    values = np.zeros(domain.shape, dtype=np.complex128)
    mask = np.zeros(domain.shape, dtype=bool)
    seen = np.zeros(domain.shape, dtype=bool)
    try:
        with path.open(newline='', encoding='utf-8') as f:
            reader = csv.DictReader(f)
            if tuple(reader.fieldnames or ()) != FIELD_HEADER:
                raise ConfigError(f"場の表のヘッダが {','.join(FIELD_HEADER)} ではありません: {to_relpath(path)}",
                                  kind="field_table")
            for row in reader:
                i, j = int(row["i"]), int(row["j"])
                if not (0 <= i < domain.nx and 0 <= j < domain.ny) or seen[j, i]:
                    raise ConfigError(f"場の表の添字 ({i}, {j}) が不正または重複しています", kind="field_table")
                seen[j, i] = True
                values[j, i] = complex(float(row["re"]), float(row["im"]))
                mask[j, i] = row["mask"].strip() in ("1", "true", "True")
    except (ValueError, KeyError) as e:
        raise ConfigError(f"場の表 '{to_relpath(path)}' を解析できません: {e}", kind="field_table") from e
    if not seen.all():
        raise ConfigError(f"場の表 '{to_relpath(path)}' に欠けている格子点があります "
                          f"({int((~seen).sum())} 点)", kind="field_table")
    return ComplexField(domain, values, mask if mask.any() else None)


def write_family(exporter: ReportExporter, family: LaurentConnectionFamily, subdir: str = "family") -> list[str]:
    """family/manifest.json と family/p{k}_{form}_{entry}.csv。"""
    names = []
    for k, form, (i, j), entry in family.iter_entries():
        if not np.any(entry.values):
            continue
        name = f"{subdir}/p{k}_{form}_{i + 1}{j + 1}.csv"
        atomic_write_text(exporter.path(name), render_field_table(entry))
        names.append(name)
    manifest = {"domain": family.domain.describe(), "files": names, **family.describe()}
    atomic_write_text(exporter.path(f"{subdir}/manifest.json"), dumps_json(manifest) + "\n")
    logger.log(f"族を {len(names)} 個の表として書き出しました", level="DEBUG")
    return names


def read_family(directory: str | Path, domain: GridDomain) -> LaurentConnectionFamily:
    directory = Path(directory)
    manifest_path = directory / "manifest.json"
    if not manifest_path.is_file():
        raise ConfigError(f"族のマニフェストが見つかりません: {to_relpath(manifest_path)}", kind="missing_file")
    manifest = json.loads(manifest_path.read_text(encoding='utf-8'))
    arrays: dict[int, list[np.ndarray]] = {}
    for name in manifest.get("files", []):
        stem = Path(name).stem  # p{k}_{form}_{ij}
        power, form, entry = stem[1:].split("_")
        k = int(power)
        pair = arrays.setdefault(k, [np.zeros(domain.shape + (2, 2), dtype=np.complex128) for _ in FORMS])
        field = read_field_table(directory / Path(name).name, domain)
        pair[FORMS.index(form)][..., int(entry[0]) - 1, int(entry[1]) - 1] = field.values
    return family_from_arrays(domain, {k: (v[0], v[1]) for k, v in arrays.items()},
                              hbar=float(manifest.get("hbar", 1.0)), synthetic=bool(manifest.get("synthetic", False)))
