"""On-disk capture format, dataset manifests, and train/test splitting.

A capture is a pair of files: <name>.iq holding float32 little-endian
interleaved I/Q, and <name>.json holding the metadata needed to interpret it.
A dataset is a directory of captures plus manifest.json listing them with
labels and scenario tags.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import FormatError, InvalidSpec
from .signals import ComplexSignal
from .waveforms import BurstSpec, Protocol, generate_burst

_REQUIRED_META = ("sample_rate_hz", "protocols")
MANIFEST_NAME = "manifest.json"


def write_capture(path: str | Path, signal: ComplexSignal, meta: dict) -> Path:
    """Write <path>.iq plus the <path>.json sidecar. meta must carry at least
    the protocols list; sample_rate_hz comes from the signal itself."""
    path = Path(path)
    if path.suffix == ".iq":
        path = path.with_suffix("")
    meta = dict(meta)
    meta["sample_rate_hz"] = signal.sample_rate_hz
    meta.setdefault("num_samples", len(signal))
    if "protocols" not in meta:
        raise InvalidSpec("meta must include a 'protocols' list")
    meta["protocols"] = [p.label if isinstance(p, Protocol) else str(p) for p in meta["protocols"]]

    interleaved = np.empty(2 * len(signal), dtype="<f4")
    interleaved[0::2] = signal.samples.real.astype(np.float32)
    interleaved[1::2] = signal.samples.imag.astype(np.float32)
    iq_path = path.with_suffix(".iq")
    iq_path.write_bytes(interleaved.tobytes())
    path.with_suffix(".json").write_text(json.dumps(meta, indent=1, sort_keys=True))
    return iq_path


def read_capture(path: str | Path) -> tuple[ComplexSignal, dict]:
    """Load a capture and its sidecar; FormatError on any contract violation."""
    path = Path(path)
    if path.suffix == ".iq":
        path = path.with_suffix("")
    iq_path, meta_path = path.with_suffix(".iq"), path.with_suffix(".json")
    if not iq_path.exists():
        raise FormatError(f"missing capture blob {iq_path}")
    if not meta_path.exists():
        raise FormatError(f"missing sidecar {meta_path}")
    try:
        meta = json.loads(meta_path.read_text())
    except json.JSONDecodeError as e:
        raise FormatError(f"sidecar {meta_path} is not valid JSON: {e}") from e
    for key in _REQUIRED_META:
        if key not in meta:
            raise FormatError(f"sidecar {meta_path} lacks required field {key!r}")
    blob = iq_path.read_bytes()
    if len(blob) % 8 != 0:
        raise FormatError(f"{iq_path} length {len(blob)} is not a whole number of IQ pairs")
    interleaved = np.frombuffer(blob, dtype="<f4").astype(np.float64)
    samples = interleaved[0::2] + 1j * interleaved[1::2]
    if "num_samples" in meta and meta["num_samples"] != samples.size:
        raise FormatError(
            f"{iq_path}: sidecar says {meta['num_samples']} samples, blob holds {samples.size}"
        )
    return ComplexSignal(samples, float(meta["sample_rate_hz"])), meta


@dataclass(frozen=True)
class ManifestEntry:
    path: str  # relative to the manifest's directory
    protocols: tuple[str, ...]
    scenario: str = "synthetic"
    num_samples: int = 0
    seed_key: tuple[int, ...] = ()

    @property
    def primary_protocol(self) -> Protocol:
        from .waveforms import parse_protocol

        return parse_protocol(self.protocols[0])


@dataclass
class Manifest:
    root: Path
    seed: int | None
    entries: list[ManifestEntry] = field(default_factory=list)

    def resolve(self, entry: ManifestEntry) -> Path:
        return self.root / entry.path


def write_manifest(manifest: Manifest) -> Path:
    doc = {
        "seed": manifest.seed,
        "files": [
            {
                "path": e.path,
                "protocols": list(e.protocols),
                "scenario": e.scenario,
                "num_samples": e.num_samples,
                "seed_key": list(e.seed_key),
            }
            for e in manifest.entries
        ],
    }
    out = manifest.root / MANIFEST_NAME
    out.write_text(json.dumps(doc, indent=1))
    return out


def load_manifest(root: str | Path) -> Manifest:
    root = Path(root)
    path = root if root.name == MANIFEST_NAME else root / MANIFEST_NAME
    if not path.exists():
        raise FormatError(f"no {MANIFEST_NAME} under {root}")
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise FormatError(f"{path} is not valid JSON: {e}") from e
    if "files" not in doc:
        raise FormatError(f"{path} lacks a 'files' list")
    entries = [
        ManifestEntry(
            path=f["path"],
            protocols=tuple(f["protocols"]),
            scenario=f.get("scenario", "synthetic"),
            num_samples=f.get("num_samples", 0),
            seed_key=tuple(f.get("seed_key", ())),
        )
        for f in doc["files"]
    ]
    return Manifest(root=path.parent, seed=doc.get("seed"), entries=entries)


def generate_dataset(
    out_dir: str | Path,
    protocols: list[Protocol],
    bursts_per_protocol: int,
    seed: int,
    scenario: str = "synthetic",
    burst_spec_overrides: dict | None = None,
) -> Manifest:
    """Synthesize a labeled burst dataset on disk, one capture per burst.

    Each burst gets its own child seed derived from (seed, protocol index,
    burst index), recorded in the sidecar, so any single file can be
    regenerated byte-identically without replaying the whole run.
    """
    if bursts_per_protocol < 1:
        raise InvalidSpec(f"bursts_per_protocol must be >= 1, got {bursts_per_protocol}")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = Manifest(root=out_dir, seed=seed)
    overrides = burst_spec_overrides or {}

    for p_idx, protocol in enumerate(protocols):
        spec = BurstSpec(protocol=protocol, **overrides.get(protocol, {}))
        for b_idx in range(bursts_per_protocol):
            seed_key = (seed, p_idx, b_idx)
            rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed_key)))
            burst = generate_burst(spec, rng)
            name = f"{protocol.name.lower()}_{b_idx:04d}"
            meta = {
                "protocols": [protocol],
                "scenario": scenario,
                "seed_key": list(seed_key),
                "center_freq_hz": 2.442e9,
            }
            write_capture(out_dir / name, burst, meta)
            manifest.entries.append(
                ManifestEntry(
                    path=f"{name}.iq",
                    protocols=(protocol.label,),
                    scenario=scenario,
                    num_samples=len(burst),
                    seed_key=seed_key,
                )
            )
    write_manifest(manifest)
    return manifest


@dataclass(frozen=True)
class SplitSpec:
    """How to carve a manifest into train and test sets.

    strategy "time" keeps the first train_fraction of each (scenario,
    protocol-set) group in capture order for training, the remainder for
    test: no capture ever appears on both sides. strategy "scenario" holds
    out every capture whose scenario matches holdout_scenario.
    """

    strategy: str = "time"
    train_fraction: float = 0.8
    holdout_scenario: str | None = None

    def __post_init__(self):
        if self.strategy not in ("time", "scenario"):
            raise InvalidSpec(f"unknown split strategy {self.strategy!r}")
        if not 0.0 < self.train_fraction < 1.0:
            raise InvalidSpec(f"train_fraction must lie in (0, 1), got {self.train_fraction}")
        if self.strategy == "scenario" and not self.holdout_scenario:
            raise InvalidSpec("scenario split needs holdout_scenario")


def make_split(
    manifest: Manifest, spec: SplitSpec
) -> tuple[list[ManifestEntry], list[ManifestEntry]]:
    """Deterministic (train, test) partition of the manifest's entries."""
    if spec.strategy == "scenario":
        scenarios = {e.scenario for e in manifest.entries}
        if spec.holdout_scenario not in scenarios:
            raise InvalidSpec(
                f"holdout scenario {spec.holdout_scenario!r} not present (have {sorted(scenarios)})"
            )
        train = [e for e in manifest.entries if e.scenario != spec.holdout_scenario]
        test = [e for e in manifest.entries if e.scenario == spec.holdout_scenario]
        return train, test

    groups: dict[tuple, list[ManifestEntry]] = {}
    for entry in manifest.entries:
        groups.setdefault((entry.scenario, entry.protocols), []).append(entry)
    train, test = [], []
    for key in sorted(groups):
        members = groups[key]
        cut = int(round(spec.train_fraction * len(members)))
        cut = min(max(cut, 1), len(members) - 1) if len(members) > 1 else len(members)
        train.extend(members[:cut])
        test.extend(members[cut:])
    return train, test
