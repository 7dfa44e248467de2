from __future__ import annotations

import os
from pathlib import Path

CACHE_ENV_VAR = "RANK2S_CACHE"


def resolve_cache_dir(explicit: str | Path | None = None) -> Path:
    """Flag value, then ``$RANK2S_CACHE``, then the per-user cache folder."""
    if explicit:
        return Path(explicit).expanduser()
    env_value = os.environ.get(CACHE_ENV_VAR, "").strip()
    if env_value:
        return Path(env_value).expanduser()
    xdg = os.environ.get("XDG_CACHE_HOME", "").strip()
    base = Path(xdg).expanduser() if xdg else Path.home() / ".cache"
    return base / "rank2s"
