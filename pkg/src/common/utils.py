"""
Utility functions shared by the experiment drivers.
"""

import json
import logging
import math
from pathlib import Path
from typing import Any

import numpy as np
import pandas as pd


def ensure_directory(directory: Path) -> None:
    """
    Ensure a directory exists, creating it if necessary.

    Args:
        directory: Path to the directory
    """
    directory.mkdir(parents=True, exist_ok=True)


def load_json_file(file_path: Path) -> dict[str, Any] | None:
    """
    Load JSON data from a file.

    Args:
        file_path: Path to the JSON file

    Returns:
        Parsed JSON data or None if file doesn't exist or is invalid
    """
    if not file_path.exists():
        return None

    try:
        with open(file_path, encoding="utf-8") as f:
            return json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        logging.error(f"Failed to load JSON file {file_path}: {e}")
        return None


def to_jsonable(value: Any) -> Any:
    """
    Convert numpy scalars/arrays and non-finite floats into JSON-safe values.

    NaN and infinities become None so the output stays strict JSON.
    """
    if isinstance(value, dict):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return [to_jsonable(v) for v in value.tolist()]
    if isinstance(value, np.generic):
        value = value.item()
    if isinstance(value, float) and not math.isfinite(value):
        return None
    return value


def save_json_file(file_path: Path, data: dict[str, Any], indent: int = 2) -> bool:
    """
    Save data to a JSON file with sorted keys.

    Args:
        file_path: Path to save the JSON file
        data: Data to save
        indent: JSON indentation level

    Returns:
        True if successful, False otherwise
    """
    try:
        ensure_directory(file_path.parent)
        with open(file_path, "w", encoding="utf-8") as f:
            json.dump(to_jsonable(data), f, indent=indent, sort_keys=True)
            f.write("\n")
        return True
    except (OSError, TypeError) as e:
        logging.error(f"Failed to save JSON file {file_path}: {e}")
        return False


def save_csv_file(file_path: Path, table: pd.DataFrame) -> bool:
    """
    Save a table as CSV with a fixed float format.

    Args:
        file_path: Destination path
        table: Table to write (column order is preserved)

    Returns:
        True if successful, False otherwise
    """
    try:
        ensure_directory(file_path.parent)
        table.to_csv(file_path, index=False, float_format="%.17g", lineterminator="\n")
        return True
    except OSError as e:
        logging.error(f"Failed to save CSV file {file_path}: {e}")
        return False


def make_rng(seed: int | np.random.SeedSequence | None) -> np.random.Generator:
    """Create a PCG64 generator from a seed or seed sequence."""
    return np.random.default_rng(seed)


def spawn_rngs(seed: int, n: int) -> list[np.random.Generator]:
    """
    Split a seed into independent generators.

    Args:
        seed: Root seed
        n: Number of child streams

    Returns:
        List of generators, one per child stream
    """
    children = np.random.SeedSequence(seed).spawn(n)
    return [np.random.default_rng(child) for child in children]
