"""Run manifest: records config hash, per-stage outputs (with content hashes),
and timings.  The manifest hash covers only the deterministic fields, so two
runs of one config produce the same hash even though wall-clock times differ.
"""

import hashlib
import json
from pathlib import Path

from . import __version__

MANIFEST_NAME = "manifest.json"


def _sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


class RunManifest:
    def __init__(self, out_dir, config_hash: str, seeds):
        self.out_dir = Path(out_dir)
        self.doc = {
            "version": __version__,
            "config_hash": config_hash,
            "seed_list": list(seeds),
            "stages": {},
        }

    @classmethod
    def load_or_create(cls, out_dir, config_hash: str, seeds) -> "RunManifest":
        m = cls(out_dir, config_hash, seeds)
        path = m.out_dir / MANIFEST_NAME
        if path.exists():
            existing = json.loads(path.read_text())
            if existing.get("config_hash") == config_hash:
                m.doc = existing
            # a different config starts a fresh manifest in the same dir
        return m

    def record_stage(self, name: str, outputs, seconds: float) -> None:
        outputs = [str(Path(p)) for p in outputs]
        self.doc["stages"][name] = {
            "outputs": sorted(outputs),
            "output_sha256": {str(Path(p).name): _sha256_file(p) for p in sorted(outputs)},
            "seconds": round(seconds, 3),
        }

    def has_stage(self, name: str) -> bool:
        return name in self.doc["stages"]

    def manifest_hash(self) -> str:
        stable = {
            "version": self.doc["version"],
            "config_hash": self.doc["config_hash"],
            "seed_list": self.doc["seed_list"],
            "stages": {
                name: {"outputs": [Path(p).name for p in st["outputs"]],
                       "output_sha256": st["output_sha256"]}
                for name, st in sorted(self.doc["stages"].items())
            },
        }
        return hashlib.sha256(json.dumps(stable, sort_keys=True).encode()).hexdigest()

    def save(self) -> None:
        self.doc["manifest_hash"] = self.manifest_hash()
        self.out_dir.mkdir(parents=True, exist_ok=True)
        with open(self.out_dir / MANIFEST_NAME, "w") as fh:
            json.dump(self.doc, fh, indent=2, sort_keys=True)
            fh.write("\n")
