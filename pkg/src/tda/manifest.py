"""Run manifest: one JSON file per run directory recording the config
snapshot, seed, and every artifact a subcommand emitted."""

from __future__ import annotations

import json
import time
import uuid
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ContractError

MANIFEST_NAME = "manifest.json"


@dataclass
class RunManifest:
    run_id: str
    seed: int
    config_snapshot: str
    created_at: str
    updated_at: str
    artifacts: list[dict] = field(default_factory=list)
    commands: list[str] = field(default_factory=list)

    @classmethod
    def create(cls, seed: int, config_snapshot: str) -> "RunManifest":
        now = _timestamp()
        return cls(
            run_id=uuid.uuid4().hex[:12],
            seed=seed,
            config_snapshot=config_snapshot,
            created_at=now,
            updated_at=now,
        )

    def add_artifact(self, kind: str, path: str | Path, run_dir: str | Path):
        rel = str(Path(path).resolve().relative_to(Path(run_dir).resolve()))
        for entry in self.artifacts:
            if entry["path"] == rel:
                raise ContractError(f"artifact {rel} referenced twice")
        self.artifacts.append({"kind": kind, "path": rel})

    def record_command(self, command: str):
        self.commands.append(command)
        self.updated_at = _timestamp()

    def save(self, run_dir: str | Path):
        payload = {
            "run_id": self.run_id,
            "seed": self.seed,
            "config_snapshot": self.config_snapshot,
            "created_at": self.created_at,
            "updated_at": self.updated_at,
            "artifacts": self.artifacts,
            "commands": self.commands,
        }
        path = Path(run_dir) / MANIFEST_NAME
        path.write_text(json.dumps(payload, indent=2) + "\n")

    @classmethod
    def load(cls, run_dir: str | Path) -> "RunManifest":
        path = Path(run_dir) / MANIFEST_NAME
        payload = json.loads(path.read_text())
        return cls(**payload)


def _timestamp() -> str:
    return time.strftime("%Y-%m-%dT%H:%M:%S", time.gmtime())


def load_or_create(run_dir: str | Path, seed: int, config_snapshot: str) -> RunManifest:
    run_dir = Path(run_dir)
    if (run_dir / MANIFEST_NAME).is_file():
        manifest = RunManifest.load(run_dir)
        manifest.config_snapshot = config_snapshot
        manifest.seed = seed
        return manifest
    return RunManifest.create(seed, config_snapshot)
