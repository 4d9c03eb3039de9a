import os
import shutil
from pathlib import Path

import numba

from settings_manager import SettingsManager
from logger.custom_logger import CustomLogger

THREADS_ENV_VAR = "CLL_THREADS"


def configure_numba(settings_manager: SettingsManager, logger: CustomLogger) -> None:
    """実行設定 "application.numba" からキャッシュ設定を読み取り Numba に適用する。"""
    numba_config = settings_manager.get_setting("application.numba", {}) or {}
    numba.config.CACHE = bool(numba_config.get("cache_enabled", True))
    logger.log(f"Numbaキャッシュ設定適用 [有効: {numba.config.CACHE}]", level="DEBUG")


def resolve_thread_count(cli_threads: int | None, logger: CustomLogger) -> int:
    """
    ワーカースレッド数を決める。優先順位は --threads、環境変数 CLL_THREADS、既定値 1。
    Numba の並列スレッド数も同じ値に合わせる (上限は numba.config.NUMBA_NUM_THREADS)。
    """
    threads = cli_threads
    if threads is None:
        env_value = os.environ.get(THREADS_ENV_VAR)
        if env_value:
            try:
                threads = int(env_value)
            except ValueError:
                logger.log(f"{THREADS_ENV_VAR}='{env_value}' は整数ではありません。1 スレッドで実行します。", level="WARNING")
                threads = 1
    threads = max(1, int(threads or 1))

    limit = numba.config.NUMBA_NUM_THREADS
    try:
        numba.set_num_threads(min(threads, limit))
    except Exception as e:
        logger.log(f"Numbaのスレッド数を設定できませんでした: {e}", level="WARNING")
    logger.log(f"ワーカースレッド数: {threads} (Numba: {min(threads, limit)})", level="DEBUG")
    return threads


def clear_numba_cache_on_exit(settings_manager: SettingsManager, logger: CustomLogger) -> None:
    """"application.numba.clear_cache_on_exit" が真なら Numba のキャッシュディレクトリを削除する。"""
    numba_config = settings_manager.get_setting("application.numba", {}) or {}
    if not numba_config.get("clear_cache_on_exit", False):
        return

    cache_dir_str = numba.config.CACHE_DIR
    if not cache_dir_str:
        logger.log("Numbaキャッシュディレクトリが設定されていません (numba.config.CACHE_DIR)。", level="DEBUG")
        return
    cache_dir = Path(cache_dir_str)
    if not cache_dir.is_dir():
        logger.log(f"Numbaキャッシュディレクトリが見つかりません: {cache_dir}", level="DEBUG")
        return
    try:
        shutil.rmtree(cache_dir, ignore_errors=True)
        logger.log(f"Numbaキャッシュディレクトリをクリアしました: {cache_dir}", level="INFO")
    except Exception as e:
        logger.log(f"Numbaキャッシュディレクトリのクリア中にエラーが発生しました: {e}", level="WARNING")
