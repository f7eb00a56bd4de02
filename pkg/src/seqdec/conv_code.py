"""Rate-1/2 feedforward convolutional codes: octal generators, trellis, encoder.

Register convention: bit ``i`` of a generator mask taps ``u[k - i]``, so the
least-significant bit is the current input and the most-significant bit the
oldest one. The encoder state holds the last ``memory`` inputs with the most
recent input in bit 0.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

MAX_MEMORY = 12


class CodeError(ValueError):
    """Invalid generator specification."""


@dataclass(frozen=True)
class CodeSpec:
    generators: tuple[int, int]
    memory: int
    traceback_hint: int

    rate = (1, 2)

    @property
    def constraint_length(self) -> int:
        return self.memory + 1

    @property
    def num_states(self) -> int:
        return 1 << self.memory

    @property
    def name(self) -> str:
        g1, g2 = self.generators
        return f"(o{g1:o},o{g2:o})_{self.memory}"

    def __str__(self) -> str:
        g1, g2 = self.generators
        return f"{g1:o},{g2:o}"


def parse_octal_generators(text: str) -> CodeSpec:
    """Parse an octal generator pair such as ``"133,171"``.

    Tokens with a different number of octal digits are rejected: with
    MSB-first octal notation a short token is ambiguous (left or right
    aligned), so we refuse rather than guess.
    """
    tokens = [t.strip() for t in str(text).split(",")]
    if len(tokens) != 2:
        raise CodeError(f"expected two comma-separated octal generators, got {text!r}")
    masks = []
    for i, tok in enumerate(tokens):
        if tok.lower().startswith("0o"):
            tok = tok[2:]
        if not tok or any(c not in "01234567" for c in tok):
            raise CodeError(f"malformed octal generator {tok!r}")
        value = int(tok, 8)
        if value == 0:
            raise CodeError("generator polynomial must be nonzero")
        masks.append(value)
        tokens[i] = tok.lstrip("0")
    if len(tokens[0]) != len(tokens[1]):
        raise CodeError(
            f"generators {tokens[0]!r} and {tokens[1]!r} imply different constraint lengths"
        )
    memory = max(m.bit_length() for m in masks) - 1
    return CodeSpec(generators=(masks[0], masks[1]), memory=memory,
                    traceback_hint=5 * (memory + 1))


# Table of the learned codes, keyed by memory.
TABLE_CODES = {
    1: "1,3",
    2: "5,7",
    4: "23,35",
    6: "133,171",
    8: "561,753",
    10: "2335,3661",
}


def table_codes() -> list[CodeSpec]:
    return [parse_octal_generators(g) for g in TABLE_CODES.values()]


def _parity(x: np.ndarray) -> np.ndarray:
    x = x.copy()
    out = np.zeros_like(x)
    while np.any(x):
        out ^= x & 1
        x >>= 1
    return out


@dataclass(frozen=True)
class Trellis:
    """State-transition table of a code.

    ``next_state[s, b]`` and ``outputs[s, b]`` (two bits) for state ``s`` and
    input bit ``b``. ``prev_state[s, j]`` lists the two predecessors of ``s``
    and ``prev_input[s, j]`` the input bit on that branch (``s & 1`` whenever
    the memory is nonzero).
    """

    code: CodeSpec
    next_state: np.ndarray = field(repr=False)
    outputs: np.ndarray = field(repr=False)
    prev_state: np.ndarray = field(repr=False)
    prev_outputs: np.ndarray = field(repr=False)
    prev_input: np.ndarray = field(repr=False)

    @property
    def num_states(self) -> int:
        return self.code.num_states


@lru_cache(maxsize=32)
def build_trellis(code: CodeSpec, max_memory: int = MAX_MEMORY) -> Trellis:
    if code.memory > max_memory:
        raise CodeError(f"memory {code.memory} exceeds the configured maximum {max_memory}")
    S = code.num_states
    mask = S - 1
    states = np.arange(S, dtype=np.int64)
    nxt = np.empty((S, 2), dtype=np.int64)
    out = np.empty((S, 2, 2), dtype=np.uint8)
    for b in (0, 1):
        reg = (states << 1) | b
        nxt[:, b] = reg & mask
        for j, g in enumerate(code.generators):
            out[:, b, j] = _parity(reg & g)
    # predecessor j of state s carries the oldest register bit j
    prev = np.empty((S, 2), dtype=np.int64)
    prev_out = np.empty((S, 2, 2), dtype=np.uint8)
    prev_in = np.empty((S, 2), dtype=np.uint8)
    for j in (0, 1):
        if code.memory > 0:
            p, b = (states >> 1) | (j << (code.memory - 1)), states & 1
        else:
            # memoryless: one state, the two parallel branches differ by input
            p, b = states, np.full(S, j)
        prev[:, j] = p
        prev_in[:, j] = b
        prev_out[:, j] = out[p, b]
    for arr in (nxt, out, prev, prev_out, prev_in):
        arr.setflags(write=False)
    return Trellis(code, nxt, out, prev, prev_out, prev_in)


def encode(u, code: CodeSpec, state: int = 0) -> np.ndarray:
    """Encode ``u`` (last axis is time) from ``state``; returns ``2 * len(u)`` bits.

    No termination bits are appended. Leading axes are treated as independent
    streams.
    """
    u = np.asarray(u, dtype=np.uint8)
    if u.shape[-1] == 0:
        raise CodeError("cannot encode an empty bit stream")
    if np.any(u > 1):
        raise CodeError("bit stream must contain only 0/1 values")
    n = u.shape[-1]
    m = code.memory
    prefix = np.array([(state >> (m - 1 - i)) & 1 for i in range(m)], dtype=np.int64)
    padded = np.concatenate(
        [np.broadcast_to(prefix, u.shape[:-1] + (m,)), u.astype(np.int64)], axis=-1
    )
    # register at step k: sum_i u[k-i] << i
    reg = np.zeros(u.shape, dtype=np.int64)
    for i in range(m + 1):
        reg |= padded[..., m - i: m - i + n] << i
    x = np.empty(u.shape[:-1] + (n, 2), dtype=np.uint8)
    for j, g in enumerate(code.generators):
        x[..., j] = _parity(reg & g)
    return x.reshape(u.shape[:-1] + (2 * n,))


def trellis_walk(u, trellis: Trellis, state: int = 0) -> tuple[np.ndarray, int]:
    """Encode by walking the trellis; returns the output bits and the final state."""
    out = []
    for b in np.asarray(u, dtype=np.int64):
        out.extend(trellis.outputs[state, b])
        state = int(trellis.next_state[state, b])
    return np.asarray(out, dtype=np.uint8), state
