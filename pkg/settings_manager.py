import json
import re
from pathlib import Path
from typing import Any, Dict

from utils.errors import ConfigError


class SettingsManager:
    """
    実行設定 (JSONC) を管理するクラス。

    行コメント (//) を許容する JSON を読み込み、ドット区切りのキーパスで値を取得・設定します。
    ロガー(CustomLogger)との循環依存を避けるため、ロガーは遅延取得します。
    """
    _logger_instance = None

    @staticmethod
    def _to_relpath(path) -> str:
        try:
            from logger.custom_logger import CustomLogger
            prj = getattr(CustomLogger, '_project_root_path', None)
            if prj and Path(path).is_absolute() and Path(path).is_relative_to(prj):
                return str(Path(path).relative_to(prj))
        except Exception:
            pass
        return str(path)

    def _get_logger(self) -> object:
        if SettingsManager._logger_instance is None:
            class FallbackLogger:
                def log(self, message: str, level: str = "INFO", exc_info: object = None):
                    print(f"[{level}] {message}")
                def set_level(self, level: str): pass
                def set_enabled(self, enabled: bool): pass
            SettingsManager._logger_instance = FallbackLogger()
        return SettingsManager._logger_instance

    @staticmethod
    def strip_comments(content: str) -> str:
        """
        JSONC の行コメントを除去します。
        文字列リテラル内の "//" (ファイルパスや URL) は保持します。
        """
        pattern = re.compile(r'("(?:\\.|[^"\\])*")|//[^\n]*')
        return pattern.sub(lambda m: m.group(1) if m.group(1) is not None else "", content)

    def __init__(self, settings_filename: str | Path, strict: bool = True) -> None:
        """
        :param settings_filename: 設定ファイルのパス。相対パスはカレントディレクトリ基準で解決します。
        :param strict: True の場合、ファイルが無い・JSON が不正なときに ConfigError を送出します。
                       False の場合は空の設定で続行します。
        """
        logger = self._get_logger()
        self.filepath = Path(settings_filename).expanduser()
        if not self.filepath.is_absolute():
            self.filepath = Path.cwd() / self.filepath
        self.strict = strict
        self.settings: Dict[str, Any] = {}
        logger.log(f"SettingsManager初期化: '{SettingsManager._to_relpath(self.filepath)}' (strict={strict})", level="DEBUG")
        self.load_settings()

    @classmethod
    def from_dict(cls, settings: Dict[str, Any], filepath: str | Path | None = None) -> 'SettingsManager':
        """ファイルを読まずに辞書から生成します。テストやプログラムからの実行用です。"""
        instance = cls.__new__(cls)
        instance.filepath = Path(filepath) if filepath else Path.cwd() / "inline_config.jsonc"
        instance.strict = True
        instance.settings = json.loads(json.dumps(settings))
        return instance

    def load_settings(self) -> None:
        logger = self._get_logger()
        rel = SettingsManager._to_relpath(self.filepath)
        if not self.filepath.is_file():
            if self.strict:
                raise ConfigError(f"設定ファイルが見つかりません: {rel}", kind="missing_config")
            logger.log(f"設定ファイル '{rel}' が見つかりません。空の設定を使用します。", level="INFO")
            self.settings = {}
            return
        try:
            content = self.filepath.read_text(encoding='utf-8')
            loaded = json.loads(self.strip_comments(content))
        except json.JSONDecodeError as e:
            if self.strict:
                raise ConfigError(f"設定ファイル '{rel}' の JSON 形式が不正です: {e}", kind="parse_error") from e
            logger.log(f"設定ファイル '{rel}' の JSON 形式が不正です: {e}。空の設定を使用します。", level="ERROR")
            loaded = {}
        except OSError as e:
            if self.strict:
                raise ConfigError(f"設定ファイル '{rel}' を読み込めません: {e}", kind="io_error") from e
            logger.log(f"設定ファイル '{rel}' の読み込み中に I/O エラー: {e}", level="ERROR")
            loaded = {}
        if not isinstance(loaded, dict):
            raise ConfigError(f"設定ファイル '{rel}' の最上位は JSON オブジェクトである必要があります", kind="parse_error")
        self.settings = loaded
        logger.log(f"設定ファイル '{rel}' の読み込み完了。", level="INFO")

    def get_all_settings(self) -> Dict[str, Any]:
        return json.loads(json.dumps(self.settings))

    def get_setting(self, key_path: str, default_value: Any = None) -> Any:
        """
        ドット区切りのキーパス (例: "domain.nx") で値を取得します。
        途中に辞書以外の値がある場合やキーが無い場合は default_value を返します。
        """
        value_ptr: Any = self.settings
        for key in key_path.split('.'):
            if not isinstance(value_ptr, dict) or key not in value_ptr:
                return default_value
            value_ptr = value_ptr[key]
        return value_ptr

    def set_setting(self, key_path: str, value: Any) -> None:
        """ドット区切りのキーパスに値を設定します。途中の辞書は必要に応じて作成します。"""
        keys = key_path.split('.')
        current_level = self.settings
        for key in keys[:-1]:
            if key not in current_level or not isinstance(current_level[key], dict):
                current_level[key] = {}
            current_level = current_level[key]
        current_level[keys[-1]] = value

    def get_section(self, section_name: str) -> Dict[str, Any]:
        section = self.settings.get(section_name, {})
        return dict(section) if isinstance(section, dict) else {}

