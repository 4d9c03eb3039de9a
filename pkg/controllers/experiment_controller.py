"""
実行設定 (ExperimentConfig) の検証と、実験プラグインの実行・レポート書き出しの制御。
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from export.report_exporter import ReportExporter
from logger.custom_logger import CustomLogger
from models.conformal_limit import ADJOINT_CONVENTION
from models.grid_calculus import GridDomain, make_domain
from plugins.base_experiment_plugin import ExperimentContext, ExperimentResult
from plugins.plugin_manager import PluginManager
from settings_manager import SettingsManager
from utils.errors import ConfigError
from utils.path_utils import get_project_root, log_exceptions, resolve_relative_to, to_relpath

logger = CustomLogger()

FIELD_NAMES = ("phi1", "boundary_u", "u", "seed", "phi3_holomorphic")
# (キー, 向き) 増加 = +1, 減少 = -1
MONOTONE_LISTS = (("family.r_values", 1), ("secondary.r_values", 1), ("wkb.eps_values", -1))
SIGN_CONVENTIONS = {
    "hitchin": "dzbar dz u + |phi1|^2 exp(-2u) = 0",
    "adjoint": ADJOINT_CONVENTION,
    "holonomy": "Y'(t) = C(t) Y(t), Y(0) = I, Hol = Y(1)",
    "curvature": "F = d_z A_zbar - d_zbar A_z + [A_z, A_zbar]",
}


@dataclass
class ExperimentConfig:
    command: str
    settings: SettingsManager
    domain: GridDomain
    output_dir: Path
    images: bool = False
    seed: int | None = None
    config_path: Path | None = None
    field_sources: dict[str, Any] = field(default_factory=dict)

    @classmethod
    def from_file(cls, path: str | Path, command: str | None = None, out: str | Path | None = None,
                  seed: int | None = None) -> 'ExperimentConfig':
        settings = SettingsManager(path, strict=True)
        return cls.from_settings(settings, command, out, seed)

    @classmethod
    def from_dict(cls, data: dict, command: str | None = None, out: str | Path | None = None,
                  seed: int | None = None, base_path: str | Path | None = None) -> 'ExperimentConfig':
        return cls.from_settings(SettingsManager.from_dict(data, base_path), command, out, seed)

    @classmethod
    def from_settings(cls, settings: SettingsManager, command: str | None = None, out: str | Path | None = None,
                      seed: int | None = None) -> 'ExperimentConfig':
        """CLI の値 (command, --out, --seed) は設定ファイルの値より優先します。"""
        command = command or settings.get_setting("command")
        if not command or not isinstance(command, str):
            raise ConfigError("コマンドが指定されていません (引数または設定キー 'command')", kind="missing_key")
        settings.set_setting("command", command)

        domain_cfg = settings.get_section("domain")
        for key in ("nx", "ny", "y_min", "y_max"):
            if key not in domain_cfg:
                raise ConfigError(f"必須の設定 'domain.{key}' がありません", kind="missing_key")
        try:
            domain = make_domain(domain_cfg["nx"], domain_cfg["ny"], domain_cfg.get("x_period", 1.0),
                                 domain_cfg["y_min"], domain_cfg["y_max"], domain_cfg.get("x_min", 0.0),
                                 domain_cfg.get("x_max"), domain_cfg.get("half_plane", True))
        except (TypeError, ValueError) as e:
            raise ConfigError(f"domain セクションの値が不正です: {e}", kind="domain") from e

        field_sources = {}
        for name, value in settings.get_section("fields").items():
            if name not in FIELD_NAMES:
                raise ConfigError(f"未知の場 'fields.{name}' (使用可能: {', '.join(FIELD_NAMES)})", kind="unknown_field")
            if isinstance(value, dict):
                if "file" not in value:
                    raise ConfigError(f"fields.{name} は式の文字列か {{\"file\": パス}} です", kind="field_source")
                path = resolve_relative_to(settings.filepath, value["file"])
                if not path.is_file():
                    raise ConfigError(f"fields.{name} のファイルが見つかりません: {to_relpath(path)}",
                                      kind="missing_file", path=str(path))
                field_sources[name] = path
            elif isinstance(value, (str, int, float)):
                field_sources[name] = str(value)
            else:
                raise ConfigError(f"fields.{name} の形式が不正です", kind="field_source")

        for key, direction in MONOTONE_LISTS:
            values = settings.get_setting(key)
            if values is None:
                continue
            if not isinstance(values, list) or not values or not all(isinstance(v, (int, float)) for v in values):
                raise ConfigError(f"'{key}' は数値の空でないリストです", kind="sweep_list")
            if any((b - a) * direction <= 0 for a, b in zip(values, values[1:])):
                order = "増加" if direction > 0 else "減少"
                raise ConfigError(f"'{key}' は狭義単調{order}である必要があります: {values}", kind="sweep_list")

        if seed is None:
            seed = settings.get_setting("seed")
        if seed is not None:
            if isinstance(seed, bool) or not isinstance(seed, int):
                raise ConfigError(f"seed は整数です (seed = {seed!r})", kind="seed")
            settings.set_setting("seed", seed)

        output_dir = Path(out) if out is not None else Path(settings.get_setting("output.dir", "out"))
        images = bool(settings.get_setting("output.images", False))
        return cls(command, settings, domain, output_dir, images, seed, settings.filepath, field_sources)

    def get(self, key_path: str, default: Any = None) -> Any:
        return self.settings.get_setting(key_path, default)

    def apply_defaults(self, parameters_definition: list) -> None:
        """プラグインのパラメータ定義の 'default' で欠けているキーを補い、範囲を検査します。"""
        for definition in parameters_definition:
            key = definition["name"]
            value = self.settings.get_setting(key)
            if value is None and definition.get("default") is not None:
                self.settings.set_setting(key, definition["default"])
                value = definition["default"]
            if value is None:
                continue
            expected = definition.get("type")
            if expected == "float" and not (isinstance(value, (int, float)) and not isinstance(value, bool)):
                raise ConfigError(f"'{key}' は数値です (値 {value!r})", kind="type")
            if expected == "int" and (isinstance(value, bool) or not isinstance(value, int)):
                raise ConfigError(f"'{key}' は整数です (値 {value!r})", kind="type")
            if expected == "choice" and value not in definition.get("choices", ()):
                raise ConfigError(f"'{key}' は {definition.get('choices')} のいずれかです (値 {value!r})", kind="choice")
            lo, hi = definition.get("range", (None, None))
            if isinstance(value, (int, float)) and not isinstance(value, bool):
                if (lo is not None and value < lo) or (hi is not None and value > hi):
                    raise ConfigError(f"'{key}' = {value} が範囲 [{lo}, {hi}] の外です", kind="range")

    def describe(self) -> dict:
        return {"command": self.command, "config_path": None if self.config_path is None else to_relpath(self.config_path),
                "seed": self.seed, "domain": self.domain.describe()}


@dataclass
class RunOutcome:
    command: str
    report_dir: Path
    result: ExperimentResult


class ExperimentController:
    """コマンド名から実験プラグインを選び、実行してレポート一式を書き出します。"""

    def __init__(self, project_root: Path | None = None, plugin_folder: str = "plugins/experiments") -> None:
        self.project_root = Path(project_root) if project_root else get_project_root()
        self.plugin_manager = PluginManager(self.project_root, plugin_folder)

    def available_commands(self) -> list[str]:
        return self.plugin_manager.get_available_commands()

    def resolve_plugin(self, command: str):
        plugin = self.plugin_manager.get_experiment_plugin(command)
        if plugin is None:
            raise ConfigError(f"未知のコマンド '{command}' (使用可能: {', '.join(self.available_commands())})",
                              kind="unknown_command")
        return plugin

    @log_exceptions(logger)
    def run(self, config: ExperimentConfig, threads: int = 1) -> RunOutcome:
        from controllers.pipeline_builder import PipelineBuilder

        plugin = self.resolve_plugin(config.command)
        config.apply_defaults(plugin.get_parameters_definition())
        exporter = ReportExporter(config.output_dir, config.command)
        logger.log(f"コマンド '{config.command}' を実行します (出力: {to_relpath(exporter.root)})", level="INFO")
        pipeline = PipelineBuilder(config, exporter)
        result = plugin.run(ExperimentContext(config, exporter, pipeline, threads))

        exporter.add_record("summary", **result.summary)
        exporter.write_records()
        conventions = {**SIGN_CONVENTIONS, "dprime_sign": config.get("slice.dprime_sign"), **result.conventions}
        exporter.write_manifest({
            "config": config.settings.get_all_settings(),
            **config.describe(),
            "gates": result.gates,
            "sign_conventions": conventions,
            "status": result.status,
            "summary": result.summary,
        })
        logger.log(f"コマンド '{config.command}' 完了: {result.status}", level="INFO")
        return RunOutcome(config.command, exporter.root, result)


def run(config: ExperimentConfig, threads: int = 1) -> RunOutcome:
    return ExperimentController().run(config, threads)
