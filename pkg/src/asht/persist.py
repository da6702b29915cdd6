"""Binary checkpoints and run manifests with byte-stable serialization.

Checkpoint layout (single file)::

    magic "ASHT1\\n" | header length (8 bytes, big-endian) | header JSON |
    array payload | sha256 of everything before it (32 bytes)

The header JSON (sorted keys, compact separators) carries the checkpoint
kind — one of ``policy``, ``monitor``, ``inference`` — the caller's metadata,
and the name/shape of every array.  Arrays are stored sorted by name as
little-endian float64, so saving the same arrays and metadata twice produces
byte-identical files.  Loading verifies the digest before trusting anything
else, and refuses a kind other than the one the caller expects.

Run manifests are small JSON documents (run id, seed, configuration,
artifact digests) written with sorted keys and no timestamps, so a repeated
run of the same pipeline reproduces the manifest byte for byte.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .decoders import MODEL_KINDS, SequenceModel
from .nn import EncoderConfig, EncoderParams
from .policy import PolicyModel

MAGIC = b"ASHT1\n"
CHECKPOINT_KINDS = ("policy", "monitor", "inference")
_DIGEST_LEN = 32


class CheckpointError(RuntimeError):
    """A checkpoint file is missing, damaged, or of the wrong kind."""


def canonical_json(obj) -> str:
    """Deterministic JSON text: sorted keys, compact separators."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def config_digest(obj) -> str:
    """Short stable fingerprint of any JSON-serializable configuration."""
    return hashlib.sha256(canonical_json(obj).encode("utf-8")).hexdigest()[:16]


def file_sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


@dataclass
class Checkpoint:
    kind: str
    arrays: dict
    metadata: dict


def save_checkpoint(path, kind: str, arrays: dict, metadata: dict | None = None) -> str:
    """Write a checkpoint; returns the file's sha256 hex digest."""
    if kind not in CHECKPOINT_KINDS:
        raise CheckpointError(f"kind must be one of {CHECKPOINT_KINDS}, got {kind!r}")
    names = sorted(arrays)
    blocks = []
    specs = []
    for name in names:
        arr = np.ascontiguousarray(np.asarray(arrays[name], dtype="<f8"))
        blocks.append(arr.tobytes())
        specs.append({"name": name, "shape": list(arr.shape)})
    header = canonical_json(
        {"arrays": specs, "kind": kind, "metadata": metadata or {}}
    ).encode("utf-8")
    body = MAGIC + len(header).to_bytes(8, "big") + header + b"".join(blocks)
    blob = body + hashlib.sha256(body).digest()
    Path(path).write_bytes(blob)
    return hashlib.sha256(blob).hexdigest()


def load_checkpoint(path, expected_kind: str | None = None) -> Checkpoint:
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"no checkpoint at {path}")
    blob = path.read_bytes()
    if len(blob) < len(MAGIC) + 8 + _DIGEST_LEN or not blob.startswith(MAGIC):
        raise CheckpointError(f"{path} is not an ASHT1 checkpoint file")
    body, digest = blob[:-_DIGEST_LEN], blob[-_DIGEST_LEN:]
    if hashlib.sha256(body).digest() != digest:
        raise CheckpointError(f"{path}: integrity check failed (corrupted or truncated)")
    header_len = int.from_bytes(body[len(MAGIC):len(MAGIC) + 8], "big")
    header_start = len(MAGIC) + 8
    try:
        header = json.loads(body[header_start:header_start + header_len].decode("utf-8"))
        kind = header["kind"]
        specs = header["arrays"]
        metadata = header["metadata"]
    except (UnicodeDecodeError, json.JSONDecodeError, KeyError, TypeError) as exc:
        raise CheckpointError(f"{path}: malformed checkpoint header") from exc
    if expected_kind is not None and kind != expected_kind:
        raise CheckpointError(
            f"{path} holds a {kind!r} checkpoint, expected {expected_kind!r}"
        )
    payload = body[header_start + header_len:]
    arrays = {}
    offset = 0
    for spec in specs:
        shape = tuple(spec["shape"])
        nbytes = int(np.prod(shape, dtype=np.int64)) * 8
        chunk = payload[offset:offset + nbytes]
        if len(chunk) != nbytes:
            raise CheckpointError(f"{path}: payload shorter than header declares")
        arrays[spec["name"]] = np.frombuffer(chunk, dtype="<f8").reshape(shape).copy()
        offset += nbytes
    if offset != len(payload):
        raise CheckpointError(f"{path}: payload longer than header declares")
    return Checkpoint(kind=kind, arrays=arrays, metadata=metadata)


def save_policy_checkpoint(path, policy: PolicyModel, seed: int,
                           extra_metadata: dict | None = None) -> str:
    metadata = {
        "cell": policy.cell,
        "n_actions": policy.n_actions,
        "n_observations": policy.n_observations,
        "hidden_size": policy.hidden_size,
        "n_layers": policy.n_layers,
        "seed": seed,
        **(extra_metadata or {}),
    }
    return save_checkpoint(path, "policy", policy.params, metadata)


def load_policy_checkpoint(path) -> tuple[PolicyModel, dict]:
    ckpt = load_checkpoint(path, expected_kind="policy")
    md = ckpt.metadata
    policy = PolicyModel(
        cell=md["cell"],
        n_actions=int(md["n_actions"]),
        n_observations=int(md["n_observations"]),
        hidden_size=int(md["hidden_size"]),
        n_layers=int(md["n_layers"]),
        params=ckpt.arrays,
    )
    return policy, md


def save_decoder_checkpoint(path, model: SequenceModel, seed: int,
                            extra_metadata: dict | None = None) -> str:
    if model.kind not in MODEL_KINDS:
        raise CheckpointError(f"decoder kind must be one of {MODEL_KINDS}, got {model.kind!r}")
    metadata = {
        "encoder": asdict(model.enc.config),
        "n_actions": model.n_actions,
        "n_observations": model.n_observations,
        "seed": seed,
        **(extra_metadata or {}),
    }
    return save_checkpoint(path, model.kind, model.enc.params, metadata)


def load_decoder_checkpoint(path, expected_kind: str | None = None) -> tuple[SequenceModel, dict]:
    ckpt = load_checkpoint(path, expected_kind=expected_kind)
    if ckpt.kind not in MODEL_KINDS:
        raise CheckpointError(f"{path} holds a {ckpt.kind!r} checkpoint, not a decoder")
    md = ckpt.metadata
    enc = EncoderParams(config=EncoderConfig(**md["encoder"]), params=ckpt.arrays)
    model = SequenceModel(
        enc=enc,
        n_actions=int(md["n_actions"]),
        n_observations=int(md["n_observations"]),
        kind=ckpt.kind,
    )
    return model, md


@dataclass
class RunManifest:
    """What a pipeline run produced, without timestamps (reruns are identical)."""

    run_id: str
    seed: int
    config: dict = field(default_factory=dict)
    artifacts: dict = field(default_factory=dict)

    def digest(self) -> str:
        return config_digest(asdict(self))


def save_manifest(manifest: RunManifest, path) -> None:
    text = json.dumps(asdict(manifest), sort_keys=True, indent=2) + "\n"
    Path(path).write_text(text, encoding="utf-8")


def load_manifest(path) -> RunManifest:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    return RunManifest(
        run_id=data["run_id"],
        seed=int(data["seed"]),
        config=data["config"],
        artifacts=data["artifacts"],
    )
