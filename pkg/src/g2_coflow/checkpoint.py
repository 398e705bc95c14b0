"""
Binary checkpoints of a flow state.

Layout (little-endian): magic ``G2CFLOW\\0``, u32 version, 7×u32 dims, f64 t, f64 A, u8 route, u8 scheme,
u8 integrator, u8 pad, u64 step, u32 component count, the ψ components and the warm-start φ components as
f64 in node-major order, and an 8-byte BLAKE2b digest of everything before it.
"""
import hashlib
import logging
import pathlib
import struct
import typing
from dataclasses import dataclass

import numpy as np

from .coflow import FlowState
from .coflow import initial_state
from .errors import ChecksumMismatch
from .errors import VersionMismatch
from .fields import FormField
from .fields import Grid

logger = logging.getLogger(__name__)

MAGIC = b"G2CFLOW\0"
VERSION = 1
_HEADER = struct.Struct("<8sI7IddBBBBQI")
_DIGEST_SIZE = 8

ROUTE_CODES = {"direct": 0, "velocity": 1}
SCHEME_CODES = {"spectral": 0, "fd4": 1}
INTEGRATOR_CODES = {"euler": 0, "rk4": 1}


def _decode(codes: typing.Dict[str, int], value: int, what: str) -> str:
    for name, code in codes.items():
        if code == value:
            return name
    raise ChecksumMismatch(f"checkpoint holds an unknown {what} code {value}")


def _digest(data: bytes) -> bytes:
    return hashlib.blake2b(data, digest_size=_DIGEST_SIZE).digest()


@dataclass(frozen=True, eq=False)
class Checkpoint:
    """
    A persisted flow state. ``phi`` is the recovered 3-form, kept so that a resumed run is bit-exact.
    """

    dims: typing.Tuple[int, ...]
    t: float
    A: float
    route: str
    scheme: str
    integrator: str
    step_index: int
    psi: np.ndarray
    phi: np.ndarray
    version: int = VERSION

    @classmethod
    def from_state(cls, state: FlowState, integrator: str = "rk4") -> "Checkpoint":
        return cls(
            dims=state.psi.grid.dims,
            t=state.t,
            A=state.A,
            route=state.route,
            scheme=state.scheme,
            integrator=integrator,
            step_index=state.step_index,
            psi=state.psi.components,
            phi=state.cache.phi.components,
        )

    def to_state(self, grid: Grid) -> FlowState:
        """
        Rebuild the flow state on ``grid`` (whose dims must match), warm starting φ from the stored one
        """
        if tuple(grid.dims) != tuple(self.dims):
            raise ValueError(f"checkpoint dims {self.dims} do not match grid dims {grid.dims}")
        psi = FormField(grid, 4, self.psi.copy())
        phi = FormField(grid, 3, self.phi.copy())
        return initial_state(psi, self.A, self.route, self.scheme, phi_guess=phi, t=self.t, step_index=self.step_index)

    def to_bytes(self) -> bytes:
        count = int(self.psi.shape[-1])
        header = _HEADER.pack(
            MAGIC,
            self.version,
            *self.dims,
            self.t,
            self.A,
            ROUTE_CODES[self.route],
            SCHEME_CODES[self.scheme],
            INTEGRATOR_CODES[self.integrator],
            0,
            self.step_index,
            count,
        )
        body = header + np.ascontiguousarray(self.psi, dtype="<f8").tobytes() + np.ascontiguousarray(self.phi, dtype="<f8").tobytes()
        return body + _digest(body)

    @classmethod
    def from_bytes(cls, data: bytes) -> "Checkpoint":
        """
        Decode and verify a checkpoint

            Raises:
                ChecksumMismatch: truncated or corrupted data
                VersionMismatch: a format version other than 1
        """
        if len(data) < _HEADER.size + _DIGEST_SIZE:
            raise ChecksumMismatch(f"checkpoint is truncated ({len(data)} bytes)")
        body, digest = data[:-_DIGEST_SIZE], data[-_DIGEST_SIZE:]
        if data[:8] != MAGIC:
            raise ChecksumMismatch("not a g2-coflow checkpoint")
        version = struct.unpack_from("<I", data, 8)[0]
        if version != VERSION:
            raise VersionMismatch(f"checkpoint format version {version} is not supported (expected {VERSION})")
        if _digest(body) != digest:
            raise ChecksumMismatch("checkpoint digest does not match its contents")
        fields = _HEADER.unpack_from(body)
        dims = tuple(int(d) for d in fields[2:9])
        t, A, route, scheme, integrator, _, step_index, count = fields[9:]
        nodes = int(np.prod(dims))
        expected = _HEADER.size + 2 * nodes * count * 8
        if len(body) != expected:
            raise ChecksumMismatch(f"checkpoint payload holds {len(body)} bytes, expected {expected}")
        payload = np.frombuffer(body, dtype="<f8", offset=_HEADER.size).astype(float)
        psi, phi = payload[: nodes * count], payload[nodes * count:]
        return cls(
            dims=dims,
            t=float(t),
            A=float(A),
            route=_decode(ROUTE_CODES, route, "route"),
            scheme=_decode(SCHEME_CODES, scheme, "scheme"),
            integrator=_decode(INTEGRATOR_CODES, integrator, "integrator"),
            step_index=int(step_index),
            psi=psi.reshape(dims + (count,)),
            phi=phi.reshape(dims + (count,)),
            version=version,
        )


def save_checkpoint(state: FlowState, path: typing.Union[str, pathlib.Path], integrator: str = "rk4") -> None:
    data = Checkpoint.from_state(state, integrator).to_bytes()
    pathlib.Path(path).write_bytes(data)
    logger.info("checkpoint at step %d (t = %g) written to %s", state.step_index, state.t, path)


def load_checkpoint(path: typing.Union[str, pathlib.Path]) -> Checkpoint:
    return Checkpoint.from_bytes(pathlib.Path(path).read_bytes())
