"""
レポート一式 (<out>/<command>/) の書き出し。

    manifest.json   設定の写し、seed、ゲート、符号規約、状態、要約、表の一覧
    *.csv           数値表 (有効数字 17 桁)
    records.jsonl   1 行 1 レコードの構造化記録
    images/*.png    場の画像 (任意)

すべて一時ファイル + os.replace で原子的に書き込み、時刻は含めません。
"""
from __future__ import annotations

import json
import math
import os
import tempfile
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

from logger.custom_logger import CustomLogger
from utils.path_utils import to_relpath

logger = CustomLogger()

FLOAT_FORMAT = ".17g"


def atomic_write_bytes(target: Path, data: bytes) -> Path:
    target = Path(target)
    target.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp_name = tempfile.mkstemp(dir=target.parent, prefix=f".{target.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, 'wb') as f:
            f.write(data)
        os.replace(tmp_name, target)
    except Exception:
        if os.path.exists(tmp_name):
            os.unlink(tmp_name)
        raise
    return target


def atomic_write_text(target: Path, text: str) -> Path:
    return atomic_write_bytes(target, text.encode('utf-8'))


def format_value(value: Any) -> str:
    """CSV の 1 セル。浮動小数は 17 桁、真偽値は 0/1。"""
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format(float(value), FLOAT_FORMAT)
    return str(value)


def to_jsonable(value: Any) -> Any:
    """numpy 型・複素数・非有限値を JSON で表せる形に変換します。"""
    if isinstance(value, dict):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return [to_jsonable(v) for v in value.tolist()]
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        f = float(value)
        return f if math.isfinite(f) else str(f)
    if isinstance(value, (complex, np.complexfloating)):
        return {"re": to_jsonable(value.real), "im": to_jsonable(value.imag)}
    if isinstance(value, Path):
        return to_relpath(value)
    return value


def dumps_json(data: Any, indent: int | None = 2) -> str:
    return json.dumps(to_jsonable(data), indent=indent, ensure_ascii=False, sort_keys=True)


def render_csv(header: Sequence[str], rows: Iterable) -> str:
    lines = [",".join(header)]
    for row in rows:
        cells = [row.get(name) for name in header] if isinstance(row, dict) else list(row)
        if len(cells) != len(header):
            raise ValueError(f"列数 {len(cells)} がヘッダ {len(header)} と一致しません")
        lines.append(",".join(format_value(c) for c in cells))
    return "\n".join(lines) + "\n"


class ReportExporter:
    """1 コマンド分のレポートを <out>/<command>/ に書き出します。"""

    def __init__(self, out_dir: str | Path, command: str) -> None:
        self.command = command
        self.root = Path(out_dir) / command
        self.tables: list[str] = []
        self.images: list[str] = []
        self.records: list[dict] = []
        self.root.mkdir(parents=True, exist_ok=True)

    def path(self, name: str) -> Path:
        return self.root / name

    def write_table(self, name: str, header: Sequence[str], rows: Iterable) -> Path:
        target = atomic_write_text(self.path(name), render_csv(header, rows))
        if name not in self.tables:
            self.tables.append(name)
        logger.log(f"表を書き出しました: {to_relpath(target)}", level="DEBUG")
        return target

    def add_record(self, record_type: str, **fields) -> None:
        self.records.append({"type": record_type, **fields})

    def write_records(self) -> Path:
        text = "".join(dumps_json(r, indent=None) + "\n" for r in self.records)
        return atomic_write_text(self.path("records.jsonl"), text)

    def write_json(self, name: str, data: Any) -> Path:
        return atomic_write_text(self.path(name), dumps_json(data) + "\n")

    def write_manifest(self, manifest: dict) -> Path:
        body = {"command": self.command, "tables": sorted(self.tables), "images": sorted(self.images), **manifest}
        target = self.write_json("manifest.json", body)
        logger.log(f"マニフェストを書き出しました: {to_relpath(target)}", level="INFO")
        return target

    def add_image(self, relative_name: str) -> None:
        if relative_name not in self.images:
            self.images.append(relative_name)


def write_diagnostic(out_dir: str | Path, command: str | None, record: dict) -> Path:
    """LabError の診断記録 diagnostic.json を書き出します。"""
    root = Path(out_dir) / command if command else Path(out_dir)
    target = atomic_write_text(root / "diagnostic.json", dumps_json({"command": command, **record}) + "\n")
    logger.log(f"診断記録を書き出しました: {to_relpath(target)}", level="INFO")
    return target
