"""
共形極限ラボのコマンドラインエントリポイント。

    python main.py <command> --config <path> [--out DIR] [--seed N] [--threads N] [--verbose]

終了コード: 0 成功, 2 設定エラー, 3 ゲート失敗, 4 数値的発散, 1 その他の例外。
"""
import argparse
import sys
from pathlib import Path

from utils.path_utils import get_project_root, to_relpath

# プロジェクトのルートディレクトリを取得
_project_root = get_project_root()
if str(_project_root) not in sys.path:
    sys.path.insert(0, str(_project_root))

from controllers.experiment_controller import ExperimentConfig, ExperimentController
from export.report_exporter import write_diagnostic
from logger.custom_logger import CustomLogger
from settings_manager import SettingsManager
from utils.errors import LabError
from utils.numba_utils import clear_numba_cache_on_exit, configure_numba, resolve_thread_count


def get_logger(project_root: Path) -> CustomLogger:
    logger = CustomLogger()
    logger.set_project_root(project_root)
    return logger


logger = get_logger(_project_root)


def setup_logging(settings_manager: SettingsManager, logger_instance: CustomLogger, verbose: bool = False,
                  out: str | None = None) -> None:
    """
    実行設定の "application.logging" (level / enabled / file) をロガーに適用します。
    --verbose のときはレベルを DEBUG に上書きします。ログファイルは出力ディレクトリ下に置きます。
    """
    log_config = dict(settings_manager.get_setting("application.logging", {}) or {})
    if verbose:
        log_config["level"] = "DEBUG"
    log_dir = Path(out) if out is not None else Path(settings_manager.get_setting("output.dir", "out"))
    logger_instance.configure(log_config, log_dir)


def build_parser(commands: list[str]) -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="main.py", description="共形極限・Higgs 束・WKB の数値実験ラボ")
    parser.add_argument("command", nargs="?", default=None,
                        help=f"実行するコマンド ({', '.join(commands)})。省略時は設定キー 'command'")
    parser.add_argument("--config", required=True, help="実行設定ファイル (JSONC)")
    parser.add_argument("--out", default=None, help="出力ディレクトリ (設定 output.dir より優先)")
    parser.add_argument("--seed", type=int, default=None, help="走査順の乱数シード (設定 seed より優先)")
    parser.add_argument("--threads", type=int, default=None, help="ワーカースレッド数 (既定: 環境変数 CLL_THREADS または 1)")
    parser.add_argument("--verbose", action="store_true", help="DEBUG レベルでログを出力")
    return parser


def main(argv: list[str] | None = None) -> int:
    controller = ExperimentController(_project_root)
    args = build_parser(controller.available_commands()).parse_args(argv)

    command = args.command
    out_dir = Path(args.out) if args.out else Path("out")
    settings_manager = None
    try:
        settings_manager = SettingsManager(args.config, strict=True)
        setup_logging(settings_manager, logger, args.verbose, args.out)
        configure_numba(settings_manager, logger)
        threads = resolve_thread_count(args.threads, logger)

        config = ExperimentConfig.from_settings(settings_manager, command, args.out, args.seed)
        command, out_dir = config.command, config.output_dir
        outcome = controller.run(config, threads)
        logger.log(f"レポート: {to_relpath(outcome.report_dir)}", level="INFO")
        return 0
    except LabError as e:
        logger.log(f"{type(e).__name__} [{e.kind}]: {e.message}", level="ERROR")
        write_diagnostic(out_dir, command, e.to_record())
        return e.exit_code
    except Exception as e:
        logger.log(f"予期しないエラー: {e}", level="CRITICAL", exc_info=e)
        return 1
    finally:
        if settings_manager is not None:
            clear_numba_cache_on_exit(settings_manager, logger)


if __name__ == "__main__":
    sys.exit(main())
