"""YAML loading with source positions, so config errors can name a file and line."""

from __future__ import annotations

from pathlib import Path
from typing import Any, Sequence

import yaml

from .errors import ConfigInvalid


class SourceMap:
    """Maps a path inside a loaded document (keys and list indices) to a 1-based line."""

    def __init__(self, root: yaml.Node | None, filename: str | None = None):
        self.root = root
        self.filename = filename

    def line(self, path: Sequence[Any]) -> int | None:
        node = self.root
        best = node.start_mark.line + 1 if node is not None else None
        for key in path:
            if isinstance(node, yaml.MappingNode):
                nxt = None
                for k, v in node.value:
                    if isinstance(k, yaml.ScalarNode) and k.value == str(key):
                        nxt = v
                        best = k.start_mark.line + 1
                        break
                node = nxt
            elif isinstance(node, yaml.SequenceNode) and isinstance(key, int) and 0 <= key < len(node.value):
                node = node.value[key]
                best = node.start_mark.line + 1
            else:
                node = None
            if node is None:
                break
        return best

    def error(self, message: str, path: Sequence[Any] = ()) -> ConfigInvalid:
        where = "/".join(str(p) for p in path)
        msg = f"{message} (at {where})" if where else message
        return ConfigInvalid(msg, path=self.filename, line=self.line(path))


def load_yaml(text: str, filename: str | None = None) -> tuple[Any, SourceMap]:
    try:
        node = yaml.compose(text, Loader=yaml.SafeLoader)
        data = yaml.safe_load(text)
    except yaml.MarkedYAMLError as exc:
        line = exc.problem_mark.line + 1 if exc.problem_mark is not None else None
        raise ConfigInvalid(f"YAML syntax error: {exc.problem}", path=filename, line=line) from None
    except yaml.YAMLError as exc:
        raise ConfigInvalid(f"YAML error: {exc}", path=filename) from None
    return data, SourceMap(node, filename)


def load_yaml_file(path: str | Path) -> tuple[Any, SourceMap]:
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigInvalid(f"cannot read config: {exc.strerror}", path=str(p)) from None
    return load_yaml(text, str(p))


def dump_yaml(data: Any) -> str:
    return yaml.safe_dump(data, sort_keys=False, default_flow_style=None, width=100)
