"""Утилиты: переменные окружения, логирование, запись CSV/JSON."""
from __future__ import annotations

import csv
import json
import logging
import os
from pathlib import Path
from typing import Any, Iterable, Optional, Sequence

from dotenv import load_dotenv

ENV_THREADS = "KGSCATTER_THREADS"
ENV_LOG_LEVEL = "KGSCATTER_LOG_LEVEL"

LOG_FORMAT = "%(asctime)s %(levelname)-7s %(name)s: %(message)s"


def load_env(env_path: Optional[Path] = None) -> bool:
    """Загружает переменные окружения из .env файла (не перезаписывая уже заданные)."""
    env_path = env_path or Path(__file__).parent / ".env"
    if not env_path.exists():
        return False
    return load_dotenv(env_path, override=False, encoding="utf-8")


def env_threads() -> Optional[int]:
    """Thread count from the environment, or None when unset or malformed."""
    raw = os.getenv(ENV_THREADS)
    if raw is None or not raw.strip():
        return None
    try:
        value = int(raw)
    except ValueError:
        logging.getLogger(__name__).warning("ignoring %s=%r (not an integer)", ENV_THREADS, raw)
        return None
    return max(1, value)


def env_log_level() -> Optional[str]:
    raw = os.getenv(ENV_LOG_LEVEL)
    return raw.strip().upper() if raw and raw.strip() else None


def setup_logging(level: str = "WARNING") -> None:
    """Один stream handler на корневом логгере; повторный вызов только меняет уровень."""
    root = logging.getLogger()
    numeric = getattr(logging, str(level).upper(), logging.WARNING)
    if not any(getattr(h, "_kgscatter", False) for h in root.handlers):
        handler = logging.StreamHandler()
        handler.setFormatter(logging.Formatter(LOG_FORMAT))
        handler._kgscatter = True  # type: ignore[attr-defined]
        root.addHandler(handler)
    root.setLevel(numeric)


def ensure_dir(path: Path) -> Path:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _cell(value: Any) -> str:
    # repr keeps floats bit-exact in the text form
    if isinstance(value, float):
        return repr(value)
    if hasattr(value, "item"):
        return _cell(value.item())
    return str(value)


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
    """CSV с заголовком, UTF-8, переводы строк LF."""
    path = Path(path)
    ensure_dir(path.parent)
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(list(header))
        for row in rows:
            writer.writerow([_cell(v) for v in row])
    return path


def write_json(path: Path, payload: Any) -> Path:
    path = Path(path)
    ensure_dir(path.parent)
    text = payload if isinstance(payload, str) else json.dumps(payload, indent=2, ensure_ascii=False)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(text)
        f.write("\n")
    return path
