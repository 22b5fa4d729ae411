"""Chain checkpoints: JSON header line + raw little-endian payload.

Layout: one UTF-8 JSON line holding format version, chain configuration,
step counter, generator state, adaptation carry, and the payload byte
count; then a newline; then the chain state as float64 little-endian pairs
(re, im) in chain-major order.  Restoring the header's generator state and
carry into a new segment reproduces an uninterrupted run bit for bit.

Failure modes get their own exception types so a driver can map them to
distinct exit codes: malformed header or config (schema), non-finite state
(numerical), format version mismatch, and short payload (truncation).
"""

import dataclasses
import json

import numpy as np

from .sampler import ChainConfig, run_mcmc_chain

FORMAT_VERSION = 1


class CheckpointSchemaError(ValueError):
    """Header is not valid JSON or does not describe a chain state."""


class CheckpointNumericalError(RuntimeError):
    """Stored state contains non-finite values."""


class CheckpointVersionError(RuntimeError):
    def __init__(self, found):
        self.found = found
        super().__init__(
            "checkpoint format version %r, this reader handles %d"
            % (found, FORMAT_VERSION)
        )


class CheckpointTruncatedError(RuntimeError):
    def __init__(self, expected, got):
        self.expected = expected
        self.got = got
        super().__init__(
            "payload truncated: expected %d bytes, found %d" % (expected, got)
        )


def _rng_state_to_json(state):
    def conv(x):
        if isinstance(x, np.ndarray):
            return x.tolist()
        if isinstance(x, dict):
            return {k: conv(v) for k, v in x.items()}
        if isinstance(x, (np.integer,)):
            return int(x)
        return x

    return conv(state)


def _rng_state_from_json(data):
    out = dict(data)
    inner = dict(out.get("state", {}))
    for key in ("counter", "key"):
        if key in inner:
            inner[key] = np.array(inner[key], dtype=np.uint64)
    out["state"] = inner
    if "buffer" in out:
        out["buffer"] = np.array(out["buffer"], dtype=np.uint64)
    return out


@dataclasses.dataclass
class CheckpointData:
    config: ChainConfig
    step: int
    state: np.ndarray
    generator_state: dict
    carry: dict
    extra: dict


def write_checkpoint(path, config, step, state, generator_state, carry, extra=None):
    state = np.asarray(state, dtype=np.complex128)
    payload = np.empty(state.shape + (2,), dtype="<f8")
    payload[..., 0] = state.real
    payload[..., 1] = state.imag
    raw = payload.tobytes()
    header = {
        "format_version": FORMAT_VERSION,
        "config": dataclasses.asdict(config),
        "step": int(step),
        "shape": list(state.shape),
        "generator_state": _rng_state_to_json(generator_state),
        "carry": dict(carry or {}),
        "payload_bytes": len(raw),
        "extra": dict(extra or {}),
    }
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode("utf-8"))
        fh.write(b"\n")
        fh.write(raw)


def read_checkpoint(path):
    with open(path, "rb") as fh:
        line = fh.readline()
        raw = fh.read()
    try:
        header = json.loads(line.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointSchemaError("unreadable checkpoint header: %s" % exc)
    if not isinstance(header, dict):
        raise CheckpointSchemaError("checkpoint header is not an object")
    version = header.get("format_version")
    if version != FORMAT_VERSION:
        raise CheckpointVersionError(version)
    for key in ("config", "step", "shape", "generator_state", "payload_bytes"):
        if key not in header:
            raise CheckpointSchemaError("checkpoint header lacks %r" % key)
    try:
        config = ChainConfig(**header["config"])
    except TypeError as exc:
        raise CheckpointSchemaError("bad chain configuration: %s" % exc)
    shape = tuple(int(s) for s in header["shape"])
    expected = int(header["payload_bytes"])
    if expected != int(np.prod(shape)) * 2 * 8:
        raise CheckpointSchemaError(
            "declared payload size inconsistent with state shape"
        )
    if len(raw) < expected:
        raise CheckpointTruncatedError(expected, len(raw))
    pairs = np.frombuffer(raw[:expected], dtype="<f8").reshape(shape + (2,))
    state = pairs[..., 0] + 1j * pairs[..., 1]
    if not np.all(np.isfinite(pairs)):
        raise CheckpointNumericalError("checkpoint state is not finite")
    return CheckpointData(
        config=config,
        step=int(header["step"]),
        state=state,
        generator_state=_rng_state_from_json(header["generator_state"]),
        carry=dict(header.get("carry", {})),
        extra=dict(header.get("extra", {})),
    )


def resume_chain(path, observables=None):
    """Continue a checkpointed run through its remaining steps.

    The returned result covers only the resumed segment; kept samples and
    observables from before the checkpoint belong to the run that wrote it.
    """
    data = read_checkpoint(path)
    return run_mcmc_chain(
        data.config,
        observables=observables,
        rng_state=data.generator_state,
        start=data.state,
        start_step=data.step,
        carry=data.carry,
    )
