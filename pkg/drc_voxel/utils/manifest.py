"""Run manifests written next to every command's outputs.

Manifests carry no timestamps or host details so that re-running a command
with the same parameters reproduces them byte for byte.
"""

from pathlib import Path
from typing import Any, Dict, List

import orjson
from pydantic import BaseModel, ConfigDict, Field

from drc_voxel import __version__
from drc_voxel.utils.settings import DEFAULTS

MANIFEST_NAME = "run_manifest.json"
JSON_OPTIONS = orjson.OPT_INDENT_2 | orjson.OPT_SORT_KEYS | orjson.OPT_SERIALIZE_NUMPY


class RunManifest(BaseModel):
    model_config = ConfigDict(frozen=True)

    command: str
    parameters: Dict[str, Any] = Field(default_factory=dict)
    seeds: Dict[str, int] = Field(default_factory=dict)
    inputs: List[str] = Field(default_factory=list)
    outputs: List[str] = Field(default_factory=list)
    defaults: Dict[str, Any] = Field(default_factory=lambda: dict(DEFAULTS))
    tool_version: str = __version__


def dump_json(data: Any) -> bytes:
    return orjson.dumps(data, option=JSON_OPTIONS) + b"\n"


def write_json(path, data: Any) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(dump_json(data))
    return path


def write_manifest(directory, manifest: RunManifest) -> Path:
    return write_json(Path(directory) / MANIFEST_NAME, manifest.model_dump(mode="json"))


def read_manifest(path) -> RunManifest:
    return RunManifest.model_validate(orjson.loads(Path(path).read_bytes()))
