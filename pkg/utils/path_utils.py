from functools import wraps
from pathlib import Path


def log_exceptions(logger):
    """例外をロギングし、再スローするデコレータ。"""
    def decorator(func):
        @wraps(func)
        def wrapper(*args, **kwargs):
            try:
                return func(*args, **kwargs)
            except Exception as e:
                logger.log(f"例外発生: {func.__name__}: {type(e).__name__}: {e}", level="ERROR")
                raise
        return wrapper
    return decorator


def get_project_root() -> Path:
    """プロジェクトのルートディレクトリを返す。"""
    return Path(__file__).resolve().parent.parent


def to_relpath(p) -> str:
    """パスをプロジェクトルートからの相対パスに変換。"""
    prj = get_project_root()
    try:
        if Path(p).is_absolute() and Path(p).is_relative_to(prj):
            return str(Path(p).relative_to(prj))
    except Exception:
        pass
    return str(p)


def resolve_relative_to(base_file: Path, p: str | Path) -> Path:
    """設定ファイル内の相対パスを、その設定ファイルのディレクトリ基準で解決する。"""
    path = Path(p).expanduser()
    if path.is_absolute():
        return path
    return (Path(base_file).resolve().parent / path).resolve()
