"""Reproducible run manifests for the command-line surface.

A manifest records the subcommand, every resolved parameter, the seed,
package and interpreter versions, and digests of input files: enough to
re-execute the run and obtain bit-identical outputs on the same build.
"""

from __future__ import annotations

import hashlib
import json
import platform
import sys
from dataclasses import dataclass, field
from datetime import datetime, timezone


def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


@dataclass(frozen=True)
class RunManifest:
    command: str
    params: dict
    seed: int | None
    versions: dict
    input_digests: dict = field(default_factory=dict)
    timestamp: str = ""

    def to_dict(self) -> dict:
        return {
            "command": self.command,
            "params": self.params,
            "seed": self.seed,
            "versions": self.versions,
            "input_digests": self.input_digests,
            "timestamp": self.timestamp,
        }

    def write(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def build_manifest(
    command: str,
    params: dict,
    *,
    seed: int | None = None,
    inputs: dict | None = None,
) -> RunManifest:
    import numpy

    import ddsim

    return RunManifest(
        command=command,
        params=params,
        seed=seed,
        versions={
            "ddsim": ddsim.__version__,
            "numpy": numpy.__version__,
            "python": sys.version.split()[0],
            "platform": platform.system(),
        },
        input_digests={k: file_digest(v) for k, v in (inputs or {}).items()},
        timestamp=datetime.now(timezone.utc).isoformat(),
    )


def load_manifest(path) -> dict:
    with open(path) as fh:
        return json.load(fh)
