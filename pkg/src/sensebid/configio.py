"""YAML config loading with line-anchored error messages."""

from __future__ import annotations

from typing import Any

import yaml


class ConfigError(Exception):
    def __init__(self, message: str, source: str | None = None, line: int | None = None):
        self.source = source
        self.line = line
        prefix = ""
        if source is not None:
            prefix = source if line is None else f"{source}:{line}"
            prefix += ": "
        super().__init__(prefix + message)


class RawConfig:
    """Parsed config plus per-key source lines for error reporting."""

    def __init__(self, data: dict, lines: dict[str, int], source: str):
        self.data = data
        self.lines = lines
        self.source = source

    def line_of(self, path: str) -> int | None:
        return self.lines.get(path)

    def error(self, path: str, message: str) -> ConfigError:
        return ConfigError(f"{path}: {message}", self.source, self.line_of(path))

    def has(self, path: str) -> bool:
        return self._lookup(path) is not _MISSING

    def get(self, path: str, default=None):
        found = self._lookup(path)
        return default if found is _MISSING else found

    def require(self, path: str, kinds: type | tuple[type, ...]):
        found = self._lookup(path)
        if found is _MISSING:
            raise ConfigError(f"missing required key: {path}", self.source)
        return self._typed(path, found, kinds)

    def get_typed(self, path: str, kinds, default):
        found = self._lookup(path)
        if found is _MISSING:
            return default
        return self._typed(path, found, kinds)

    def _typed(self, path: str, value, kinds):
        if isinstance(value, bool) and bool not in (
            kinds if isinstance(kinds, tuple) else (kinds,)
        ):
            raise self.error(path, f"expected {_kind_names(kinds)}, got a boolean")
        if not isinstance(value, kinds):
            raise self.error(
                path, f"expected {_kind_names(kinds)}, got {type(value).__name__}"
            )
        return value

    def _lookup(self, path: str):
        node: Any = self.data
        for part in path.split("."):
            if not isinstance(node, dict) or part not in node:
                return _MISSING
            node = node[part]
        return node


_MISSING = object()


def _kind_names(kinds) -> str:
    if isinstance(kinds, tuple):
        return " or ".join(k.__name__ for k in kinds)
    return kinds.__name__


def _walk(node, prefix: str, lines: dict[str, int]):
    lines.setdefault(prefix, node.start_mark.line + 1)
    if isinstance(node, yaml.MappingNode):
        for key_node, value_node in node.value:
            key = str(key_node.value)
            child = f"{prefix}.{key}" if prefix else key
            lines[child] = key_node.start_mark.line + 1
            _walk(value_node, child, lines)
    elif isinstance(node, yaml.SequenceNode):
        for i, item in enumerate(node.value):
            _walk(item, f"{prefix}[{i}]", lines)


def load_config(path) -> RawConfig:
    source = str(path)
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(str(exc), source)
    try:
        data = yaml.safe_load(text)
        tree = yaml.compose(text, Loader=yaml.SafeLoader)
    except yaml.YAMLError as exc:
        line = None
        mark = getattr(exc, "problem_mark", None)
        if mark is not None:
            line = mark.line + 1
        raise ConfigError(f"invalid YAML: {getattr(exc, 'problem', exc)}", source, line)
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError("top level must be a mapping", source, 1)
    lines: dict[str, int] = {}
    if tree is not None:
        _walk(tree, "", lines)
    return RawConfig(data, lines, source)
