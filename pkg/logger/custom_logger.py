import time
import inspect
import threading
import traceback
from pathlib import Path


class CustomLogger:
    """
    実験ラボ全体で共有するロガーシングルトン。

    経過ミリ秒、レベル、メッセージ、呼び出し元 [path:line:Class.func] を
    コンソール(色付き)とログファイル(色なし)に出力します。
    レベル・有効/無効・ファイルは実行設定の "application.logging" から
    main.setup_logging() 経由で適用されます。ファイルは出力ディレクトリ下に置かれ、
    ワーカースレッドからの出力はロックで1行単位に直列化されます。
    """
    _instance = None
    _start_time = None
    _initializing = False  # 初期化中の循環呼び出し防止

    LOG_LEVELS = {
        "DEBUG": 10,
        "INFO": 20,
        "WARNING": 30,
        "ERROR": 40,
        "CRITICAL": 50
    }
    LOG_COLORS = {
        "DEBUG": "\033[94m",
        "INFO": "\033[92m",
        "WARNING": "\033[93m",
        "ERROR": "\033[91m",
        "CRITICAL": "\033[91m\033[1m",
        "DIM_GRAY": "\033[90m",
    }
    RESET_COLOR = "\033[0m"
    DEFAULT_LOG_NAME = "lab.log"
    _write_lock = threading.Lock()

    _current_level_int: int = 20
    _is_enabled: bool = True
    _log_file_path: Path | None = None
    _project_root_path: Path | None = None

    def __new__(cls, *args, **kwargs) -> 'CustomLogger':
        if not cls._instance:
            cls._initializing = True
            instance = super(CustomLogger, cls).__new__(cls)
            if cls._start_time is None:
                cls._start_time = time.time()

            # SettingsManager が内部ログに使えるよう先に登録する (循環インポート回避のため遅延インポート)
            from settings_manager import SettingsManager
            SettingsManager._logger_instance = instance

            cls._current_level_int = cls.LOG_LEVELS["INFO"]
            cls._is_enabled = True
            cls._log_file_path = None  # configure() で出力ディレクトリが決まるまでファイル出力なし

            cls._instance = instance
            cls._initializing = False
        return cls._instance

    def __init__(self) -> None:
        pass

    def configure(self, logging_config: dict, log_dir: Path | None = None) -> None:
        """
        "application.logging" セクション相当の辞書 (level / enabled / file) を適用します。
        file が未指定なら log_dir/lab.log、相対パスなら log_dir 基準、空文字ならファイル出力なし。
        log_dir も無ければファイル出力は行いません。不正なレベルは INFO に戻します。
        """
        level_str = str(logging_config.get("level", "INFO")).upper()
        enabled_setting = logging_config.get("enabled", True)
        if isinstance(enabled_setting, str):
            enabled = enabled_setting.lower() == "true"
        elif isinstance(enabled_setting, bool):
            enabled = enabled_setting
        else:
            enabled = True

        CustomLogger._current_level_int = CustomLogger.LOG_LEVELS.get(level_str, CustomLogger.LOG_LEVELS["INFO"])
        CustomLogger._is_enabled = enabled

        log_file = logging_config.get("file")
        if log_file == "":
            CustomLogger._log_file_path = None  # 空文字はファイル出力なし
        else:
            path = Path(log_file).expanduser() if log_file is not None else Path(CustomLogger.DEFAULT_LOG_NAME)
            if not path.is_absolute():
                path = Path(log_dir) / path if log_dir is not None else None
            CustomLogger._log_file_path = path

        if CustomLogger._log_file_path is not None:
            try:
                CustomLogger._log_file_path.parent.mkdir(parents=True, exist_ok=True)
            except OSError as e:
                print(f"[WARNING] ログディレクトリを作成できません: {e}。ファイル出力を無効化します。", flush=True)
                CustomLogger._log_file_path = None

        self.log(f"ロガー設定を適用しました。レベル: {level_str}, 有効: {enabled}, ファイル: {CustomLogger._log_file_path}", level="DEBUG")

    def set_level(self, level_name_or_int: str | int) -> None:
        if isinstance(level_name_or_int, str):
            CustomLogger._current_level_int = CustomLogger.LOG_LEVELS.get(level_name_or_int.upper(), CustomLogger.LOG_LEVELS["INFO"])
        elif isinstance(level_name_or_int, int):
            CustomLogger._current_level_int = level_name_or_int
        else:
            CustomLogger._current_level_int = CustomLogger.LOG_LEVELS["INFO"]

    def set_enabled(self, enabled: bool) -> None:
        CustomLogger._is_enabled = enabled

    def is_enabled_for(self, level: str) -> bool:
        """指定レベルのメッセージが出力対象かどうか。重いメッセージ整形の前に使います。"""
        return CustomLogger._is_enabled and CustomLogger.LOG_LEVELS.get(level.upper(), 20) >= CustomLogger._current_level_int

    @classmethod
    def set_project_root(cls, project_root: Path) -> None:
        """ログの呼び出し元パスをこのルートからの相対パスで表示します。"""
        cls._project_root_path = project_root.resolve() if project_root else None

    @staticmethod
    def _format_exception(exc_info: object) -> str:
        if exc_info is True:
            text = traceback.format_exc()
            return "" if text == "NoneType: None\n" or text == "None\n" else text
        if isinstance(exc_info, tuple):
            return "".join(traceback.format_exception(*exc_info))
        if isinstance(exc_info, BaseException):
            return "".join(traceback.format_exception(type(exc_info), exc_info, exc_info.__traceback__))
        return ""

    def log(self, message: str, level: str = "INFO", exc_info: object = None) -> None:
        if CustomLogger._initializing or not CustomLogger._is_enabled:
            return

        level_str = level.upper()
        level_int = CustomLogger.LOG_LEVELS.get(level_str, CustomLogger.LOG_LEVELS["INFO"])
        if level_int < CustomLogger._current_level_int:
            return

        frame = inspect.currentframe().f_back
        filepath_abs = Path(frame.f_code.co_filename).resolve()
        lineno = frame.f_lineno

        display_path = str(filepath_abs)
        root = CustomLogger._project_root_path
        if root is not None and filepath_abs.is_relative_to(root):
            display_path = str(filepath_abs.relative_to(root))

        context_parts = []
        if 'self' in frame.f_locals:
            context_parts.append(frame.f_locals['self'].__class__.__name__)
        elif 'cls' in frame.f_locals and isinstance(frame.f_locals['cls'], type):
            context_parts.append(frame.f_locals['cls'].__name__)
        context_parts.append(frame.f_code.co_name)
        log_context = ".".join(context_parts)

        now = time.time()
        start = CustomLogger._start_time if CustomLogger._start_time is not None else now
        elapsed = f"{int((now - start) * 1000):>5}"
        level_field = f"{level_str:<8}"

        color = CustomLogger.LOG_COLORS.get(level_str, "")
        dim = CustomLogger.LOG_COLORS["DIM_GRAY"]
        reset = CustomLogger.RESET_COLOR
        trace_text = self._format_exception(exc_info) if exc_info else ""
        with CustomLogger._write_lock:
            self._emit(f"{dim}{elapsed}ms:{reset} {color}{level_field}{reset} {message} "
                       f"{dim}[{display_path}:{lineno}:{log_context}]{reset}",
                       f"{elapsed}ms: {level_field} {message} [{display_path}:{lineno}:{log_context}]\n",
                       trace_text)

    @staticmethod
    def _emit(console_line: str, file_line: str, trace_text: str) -> None:
        print(console_line, flush=True)
        if trace_text:
            print(trace_text, end="", flush=True)

        if CustomLogger._log_file_path:
            try:
                with open(CustomLogger._log_file_path, "a", encoding="utf-8") as f:
                    f.write(file_line)
                    if trace_text:
                        f.write(trace_text)
            except OSError as e:
                # log() を再帰呼び出ししない
                print(f"ログファイルへの書き込みに失敗しました: {CustomLogger._log_file_path}, Error: {e}", flush=True)
