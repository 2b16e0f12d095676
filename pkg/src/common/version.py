"""
Schema version checks for loaded JSON documents.
"""

from typing import Any

from packaging.version import InvalidVersion, Version

from .constants import SUPPORTED_SCHEMA_MAJOR
from .errors import ConfigError


def check_schema_version(document: dict[str, Any], source: str = "document") -> None:
    """
    Reject documents written by a newer, incompatible schema.

    A missing ``schema_version`` is accepted as the current schema.

    Args:
        document: Parsed JSON document
        source: Name used in the error message

    Raises:
        ConfigError: If the version is malformed or its major part is newer
    """
    raw = document.get("schema_version")
    if raw is None:
        return
    try:
        version = Version(str(raw).strip())
    except InvalidVersion as e:
        raise ConfigError(f"{source}: invalid schema_version '{raw}': {e}", field="schema_version")
    if version.major > SUPPORTED_SCHEMA_MAJOR:
        raise ConfigError(
            f"{source}: schema_version {version} is newer than supported "
            f"major {SUPPORTED_SCHEMA_MAJOR}",
            field="schema_version",
        )
