"""Run manifests: provenance records written next to every CLI output."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

MANIFEST_NAME = "run_manifest.json"


class ManifestError(RuntimeError):
    pass


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def config_digest(config: dict) -> str:
    return hashlib.sha256(canonical_json(config).encode()).hexdigest()


def files_digest(paths, root) -> str:
    """SHA-256 over (relative name, bytes) of each file, in sorted name order."""
    root = Path(root)
    h = hashlib.sha256()
    for p in sorted(Path(p) for p in paths):
        h.update(p.relative_to(root).as_posix().encode())
        h.update(p.read_bytes())
    return h.hexdigest()


def tree_digest(directory) -> str:
    """Digest of every file below ``directory``, excluding run manifests."""
    directory = Path(directory)
    files = [p for p in directory.rglob("*") if p.is_file() and p.name != MANIFEST_NAME]
    return files_digest(files, directory)


@dataclass
class RunManifest:
    command: str
    version: str
    seed: int | None
    config: dict
    config_digest: str
    data_digest: str
    artifacts: dict = field(default_factory=dict)  # name -> [relative path, sha256]
    upstream: dict = field(default_factory=dict)  # command -> manifest digest(s)
    inputs: dict = field(default_factory=dict)  # locations of input directories
    timing: dict = field(default_factory=dict)

    def digest(self) -> str:
        """Content digest; timing and input locations are left out so reruns elsewhere reproduce it."""
        body = asdict(self)
        body.pop("timing")
        body.pop("inputs")
        return config_digest(body)

    def save(self, directory) -> Path:
        path = Path(directory) / MANIFEST_NAME
        path.write_text(json.dumps(asdict(self), indent=2, sort_keys=True))
        return path

    @classmethod
    def load(cls, directory, data_dir=None, verify: bool = True) -> "RunManifest":
        directory = Path(directory)
        path = directory / MANIFEST_NAME
        if not path.exists():
            raise ManifestError(f"no {MANIFEST_NAME} in {directory}")
        man = cls(**json.loads(path.read_text()))
        if verify:
            man.verify(directory, data_dir)
        return man

    def verify(self, directory, data_dir=None) -> None:
        directory = Path(directory)
        if config_digest(self.config) != self.config_digest:
            raise ManifestError(f"config digest mismatch in {directory}")
        for name, (rel, digest) in self.artifacts.items():
            target = directory / rel
            actual = tree_digest(target) if target.is_dir() else files_digest([target], target.parent)
            if actual != digest:
                raise ManifestError(f"artifact {name!r} in {directory} was modified")
        if data_dir is not None and tree_digest(data_dir) != self.data_digest:
            raise ManifestError(f"data digest mismatch for {data_dir}")


def artifact_entry(directory, rel) -> list:
    target = Path(directory) / rel
    digest = tree_digest(target) if target.is_dir() else files_digest([target], target.parent)
    return [str(rel), digest]
