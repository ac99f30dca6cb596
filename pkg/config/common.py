"""
Flat run-configuration files.

A run file is UTF-8 text of ``key = value`` lines with ``#`` comments and no sections. The
parser wraps the text in an implicit section so ``configparser`` can read it; files that do use
a ``[section]`` header are read as if the header were absent. Keys are normalized to
lower-case with ``-`` mapped to ``_``.
"""

import configparser
from pathlib import Path
from re import sub
from typing import Dict, Optional, Union

from wow_flow.errors import ConfigError
from wow_flow.utils.resources import ResourceError, list_presets, preset_text

__all__ = ["parse_run_config", "read_run_config", "normalize_key", "IMPLICIT_SECTION"]

IMPLICIT_SECTION = "run"


def normalize_key(key: str) -> str:
    return key.strip().lower().replace("-", "_")


def parse_run_config(text: str, source: str = "<string>") -> Dict[str, str]:
    """
    Parse flat ``key = value`` text into a dictionary.

    Args:
        text: File content.
        source: Name used in error messages.

    Returns:
        Dict[str, str]: Normalized keys to stripped values, inline comments removed.

    Raises:
        ConfigError: On malformed lines or duplicate keys.
    """
    cnf = configparser.ConfigParser(
        interpolation=None,
        strict=True,
        comment_prefixes=("#", ";"),
        inline_comment_prefixes=("#",),
        default_section="__defaults__",
    )
    cnf.optionxform = normalize_key
    try:
        cnf.read_string(f"[{IMPLICIT_SECTION}]\n{text}", source=source)
    except configparser.DuplicateOptionError as e:
        raise ConfigError(f"duplicate key '{e.option}' in {source}")
    except configparser.Error as e:
        raise ConfigError(f"error parsing {source}: {e}")

    result: Dict[str, str] = {}
    for section_name in cnf.sections():
        for key, value in cnf.items(section_name, raw=True):
            if key in result and section_name != IMPLICIT_SECTION:
                raise ConfigError(f"duplicate key '{key}' in {source}")
            result[key] = sub(r"\s*#.*$", "", value or "").strip()
    return result


def read_run_config(location: Optional[Union[str, Path]]) -> Dict[str, str]:
    """
    Read a run file, or a bundled preset when ``location`` is not an existing path.

    Raises:
        ConfigError: If ``location`` is neither a readable file nor a preset name.
    """
    if location is None or location == "":
        return {}
    path = Path(location)
    if path.is_file():
        try:
            return parse_run_config(path.read_text(encoding="utf-8"), source=str(path))
        except UnicodeDecodeError as e:
            raise ConfigError(f"{path} is not UTF-8 text: {e}")
    name = str(location).removesuffix(".cfg")
    try:
        return parse_run_config(preset_text(name), source=f"preset:{name}")
    except ResourceError:
        raise ConfigError(f"config '{location}' is not a file nor a preset ({', '.join(list_presets())})")
