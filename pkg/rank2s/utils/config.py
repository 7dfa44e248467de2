"""YAML study configs: ``extends`` chains, mapping sections and dotted overrides."""
from __future__ import annotations

import copy
from pathlib import Path
from typing import Any, Mapping

import yaml

from rank2s.errors import ConfigValidationError, ParseError


def _deep_merge(base: dict[str, Any], override: Mapping[str, Any]) -> dict[str, Any]:
    out = dict(base)
    for key, value in override.items():
        if isinstance(out.get(key), dict) and isinstance(value, Mapping):
            out[key] = _deep_merge(out[key], value)
        else:
            out[key] = value
    return out


def _read_mapping(path: Path) -> dict[str, Any]:
    try:
        with path.open("r", encoding="utf-8") as f:
            data = yaml.safe_load(f)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        line = mark.line + 1 if mark is not None else None
        raise ParseError(str(path), line, f"invalid YAML: {getattr(exc, 'problem', None) or exc}") from None
    if not isinstance(data, dict):
        raise ConfigValidationError("<root>", f"config root must be a mapping: {path}")
    return data


def load_yaml_config(path: str | Path, *, _chain: tuple[Path, ...] = ()) -> dict[str, Any]:
    """Load a YAML mapping; ``extends: name`` merges ``name.yaml`` from the same folder underneath.

    Parents may extend further parents. A file that reappears in its own
    chain raises ConfigValidationError on the ``extends`` field.
    """
    path = Path(path)
    resolved = path.resolve()
    if resolved in _chain:
        names = " -> ".join(p.stem for p in (*_chain, resolved))
        raise ConfigValidationError("extends", f"circular chain {names}")
    data = _read_mapping(path)

    parent_name = data.pop("extends", None)
    if not parent_name:
        return data
    parent = path.parent / f"{parent_name}.yaml"
    if not parent.exists():
        raise FileNotFoundError(f"Extended config not found: {parent}")
    base = load_yaml_config(parent, _chain=(*_chain, resolved))
    return _deep_merge(base, data)


def section(cfg: Mapping[str, Any], key: str) -> dict[str, Any]:
    """``cfg[key]`` as a mapping; a missing or null key reads as empty."""
    value = cfg.get(key)
    if value is None:
        return {}
    if not isinstance(value, dict):
        raise ConfigValidationError(key, f"must be a mapping, got {type(value).__name__}")
    return value


def apply_overrides(cfg: Mapping[str, Any], overrides: Mapping[str, Any]) -> dict[str, Any]:
    """Copy of ``cfg`` with dotted keys (``study.iterations``) set; None values are skipped."""
    out = copy.deepcopy(dict(cfg))
    for dotted, value in overrides.items():
        if value is None:
            continue
        *parents, leaf = dotted.split(".")
        node = out
        for i, name in enumerate(parents):
            child = node.get(name)
            if child is None:
                child = node[name] = {}
            elif not isinstance(child, dict):
                raise ConfigValidationError(".".join(parents[: i + 1]), "must be a mapping")
            node = child
        node[leaf] = value
    return out
