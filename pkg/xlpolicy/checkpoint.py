"""
Checkpoint container

Layout (all on one file, written atomically):

    XLPOLICY-CKPT v1\\n
    {json header}\\n
    raw little-endian float64 parameter data

The header lists every parameter (name, shape, offset in elements) in the
network's ``named_parameters`` order, the action vocabulary with its digest,
and a snapshot of the architecture sections (sim, fusion, xl, policy) needed
to rebuild the network. Training hyperparameters and the seed are not part
of the snapshot, so re-saving an untouched model reproduces the same bytes.
"""
import json
import logging
from pathlib import Path
from typing import Dict, Optional, Union

import numpy as np
from pydantic import ValidationError

from xlpolicy.config import RunConfig, parse_run_config
from xlpolicy.errors import CheckpointFormatError, ConfigError, ShapeError
from xlpolicy.files import atomic_write_bytes
from xlpolicy.models import CheckpointHeader, TensorEntry
from xlpolicy.network import XlPolicyNetwork
from xlpolicy.policy import ActionSpec

logger = logging.getLogger(__name__)

CHECKPOINT_MAGIC = b"XLPOLICY-CKPT v1"
ARCHITECTURE_SECTIONS = ("sim", "fusion", "xl", "policy")


def architecture_snapshot(config: RunConfig) -> Dict[str, dict]:
    return {name: getattr(config, name).model_dump(mode="json") for name in ARCHITECTURE_SECTIONS}


def dumps_checkpoint(model: XlPolicyNetwork, state: Optional[Dict[str, np.ndarray]] = None) -> bytes:
    """
    Serialize ``model`` (or ``state``, a parameter snapshot of the same
    network) to checkpoint bytes.
    """
    state = model.state_dict() if state is None else state
    entries, chunks, offset = [], [], 0
    for name, param in model.named_parameters():
        array = np.ascontiguousarray(state[name], dtype="<f8")
        if array.shape != param.shape:
            raise ShapeError(f"snapshot {name} has shape {array.shape}, network expects {param.shape}")
        entries.append(TensorEntry(name=name, shape=list(array.shape), offset=offset))
        chunks.append(array.tobytes())
        offset += array.size

    header = CheckpointHeader(
        tensors=entries,
        vocabulary=model.spec.to_list(),
        vocab_digest=model.spec.digest(),
        config=architecture_snapshot(model.config),
    )
    header_line = json.dumps(header.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))
    return CHECKPOINT_MAGIC + b"\n" + header_line.encode("utf-8") + b"\n" + b"".join(chunks)


def save_checkpoint(path: Union[str, Path], model: XlPolicyNetwork,
                    state: Optional[Dict[str, np.ndarray]] = None) -> Path:
    """
    Raises:
        OSError: the target cannot be written
    """
    return atomic_write_bytes(path, dumps_checkpoint(model, state))


def _parse_header(blob: bytes, source: str):
    parts = blob.split(b"\n", 2)
    if len(parts) < 3:
        raise CheckpointFormatError(f"{source}: truncated checkpoint")
    magic, header_line, payload = parts
    if magic != CHECKPOINT_MAGIC:
        raise CheckpointFormatError(f"{source}: unknown checkpoint version {magic[:40]!r}")
    try:
        header = CheckpointHeader.model_validate_json(header_line)
    except ValidationError as e:
        raise CheckpointFormatError(f"{source}: malformed checkpoint header: {e}") from e
    return header, payload


def _check_architecture(config: RunConfig, header: CheckpointHeader) -> None:
    stored = header.config
    current = architecture_snapshot(config)
    for name in ("fusion", "xl", "policy"):
        if stored.get(name) != current[name]:
            raise ConfigError(f"checkpoint {name} section differs from the run config")


def loads_checkpoint(blob: bytes, config: Optional[RunConfig] = None,
                     source: str = "<bytes>") -> XlPolicyNetwork:
    """
    Rebuild a network from checkpoint bytes.

    Args:
        blob: checkpoint contents
        config: run config to check against; when omitted the network is
            rebuilt from the stored architecture snapshot
        source: name used in error messages

    Raises:
        CheckpointFormatError: unknown version, malformed header or payload
        ConfigError: vocabulary or architecture differs from ``config``
    """
    header, payload = _parse_header(blob, source)
    try:
        spec = ActionSpec(np.asarray(header.vocabulary, dtype=np.float64))
    except ConfigError as e:
        raise CheckpointFormatError(f"{source}: stored vocabulary is invalid: {e}") from e
    if spec.digest() != header.vocab_digest:
        raise CheckpointFormatError(f"{source}: vocabulary digest does not match its entries")

    if config is None:
        try:
            config = parse_run_config(dict(header.config))
        except ConfigError as e:
            raise CheckpointFormatError(f"{source}: stored config is invalid: {e}") from e
    else:
        expected = ActionSpec.from_config(config.actions)
        if expected.digest() != spec.digest():
            raise ConfigError(
                f"vocabulary mismatch: checkpoint uses {spec.digest()}, config uses {expected.digest()}"
            )
        spec = expected
        _check_architecture(config, header)

    total = sum(int(np.prod(e.shape)) if e.shape else 1 for e in header.tensors)
    if total * 8 != len(payload):
        raise CheckpointFormatError(f"{source}: payload holds {len(payload)} bytes, expected {total * 8}")
    values = np.frombuffer(payload, dtype="<f8")

    model = XlPolicyNetwork(config, spec)
    expected_names = [name for name, _ in model.named_parameters()]
    stored_names = [entry.name for entry in header.tensors]
    if stored_names != expected_names:
        raise CheckpointFormatError(f"{source}: parameter names do not match the network layout")

    state = {}
    for entry in header.tensors:
        size = int(np.prod(entry.shape)) if entry.shape else 1
        if entry.offset + size > values.size:
            raise CheckpointFormatError(f"{source}: payload too short for {entry.name}")
        state[entry.name] = values[entry.offset:entry.offset + size].reshape(entry.shape).astype(np.float64)

    try:
        model.load_state_dict(state)
    except ShapeError as e:
        raise CheckpointFormatError(f"{source}: {e}") from e
    return model


def load_checkpoint(path: Union[str, Path], config: Optional[RunConfig] = None) -> XlPolicyNetwork:
    """
    Raises:
        OSError: the file cannot be read
        CheckpointFormatError: see ``loads_checkpoint``
        ConfigError: see ``loads_checkpoint``
    """
    path = Path(path)
    model = loads_checkpoint(path.read_bytes(), config, source=str(path))
    logger.info(f"Loaded checkpoint {path} ({model.num_parameters()} parameters)")
    return model
