"""Hard-output Viterbi decoding from bit LLRs.

Path metrics are correlations ``sum L_i * (2 x_i - 1)`` (larger is better),
which is the ML criterion for AWGN. All decoders accept a leading batch axis;
the last axis holds ``2 * n`` LLRs for ``n`` information bits.
"""

from __future__ import annotations

import numpy as np

from .conv_code import CodeSpec, Trellis, encode

MAX_BRUTE_FORCE_BITS = 16


def _prepare(llrs, trellis: Trellis):
    L = np.asarray(llrs, dtype=np.float64)
    if L.ndim == 0 or L.shape[-1] == 0:
        raise ValueError("cannot decode an empty LLR sequence")
    if L.shape[-1] % 2:
        raise ValueError("LLR sequence length must be even for a rate-1/2 code")
    lead = L.shape[:-1]
    L = L.reshape(-1, L.shape[-1] // 2, 2)
    # branch sign pattern (S, 2 predecessors, 2 outputs) -> (2, 2S)
    sgn = 2.0 * trellis.prev_outputs.astype(np.float64) - 1.0
    sgn = sgn.reshape(-1, 2).T
    return L, lead, sgn


def _initial_metric(batch: int, num_states: int, start_state) -> np.ndarray:
    """``start_state`` is None (any state), one state, or one state per row."""
    if start_state is None:
        return np.zeros((batch, num_states))
    start = np.broadcast_to(np.asarray(start_state, dtype=np.int64), (batch,))
    if np.any((start < 0) | (start >= num_states)):
        raise ValueError(f"start state out of range for {num_states} states")
    m = np.full((batch, num_states), -np.inf)
    m[np.arange(batch), start] = 0.0
    return m


def _acs(metric, Lt, sgn, prev, S):
    """Add-compare-select for one step; returns new metric and chosen branch."""
    bm = (Lt @ sgn).reshape(-1, S, 2)
    cand = metric[:, prev] + bm
    choice = np.argmax(cand, axis=-1)  # ties -> branch 0
    new = np.take_along_axis(cand, choice[..., None], axis=-1)[..., 0]
    new -= new.max(axis=-1, keepdims=True)
    return new, choice


def decode_block(llrs, trellis: Trellis, start_state=0) -> np.ndarray:
    """Full-length Viterbi decoding; final state is the best metric (lowest index on ties).

    ``start_state=None`` leaves the initial state unconstrained; an array
    gives one start state per row.
    """
    L, lead, sgn = _prepare(llrs, trellis)
    B, n, _ = L.shape
    S = trellis.num_states
    prev, prev_in = trellis.prev_state, trellis.prev_input
    metric = _initial_metric(B, S, start_state)
    choices = np.empty((n, B, S), dtype=np.uint8)
    for t in range(n):
        metric, choices[t] = _acs(metric, L[:, t], sgn, prev, S)
    rows = np.arange(B)
    state = np.argmax(metric, axis=-1)
    u = np.empty((B, n), dtype=np.uint8)
    for t in range(n - 1, -1, -1):
        j = choices[t, rows, state]
        u[:, t] = prev_in[state, j]
        state = prev[state, j]
    return u.reshape(lead + (n,))


def decode_windowed(llrs, trellis: Trellis, traceback_len: int,
                    start_state=0) -> np.ndarray:
    """Sliding-window Viterbi decoding with decision delay ``traceback_len``.

    After step ``t >= traceback_len`` the bit ``traceback_len`` steps back on the
    currently best survivor is released; the tail is flushed from the final
    best path. Survivors are kept by register exchange over a circular buffer
    of ``traceback_len + 1`` bits.
    """
    if traceback_len < 1:
        raise ValueError("traceback_len must be at least 1")
    L, lead, sgn = _prepare(llrs, trellis)
    B, n, _ = L.shape
    S = trellis.num_states
    prev, prev_in = trellis.prev_state, trellis.prev_input
    W = min(traceback_len, n) + 1
    metric = _initial_metric(B, S, start_state)
    paths = np.zeros((B, S, W), dtype=np.uint8)
    rows = np.arange(B)[:, None]
    u = np.empty((B, n), dtype=np.uint8)
    for t in range(n):
        metric, choice = _acs(metric, L[:, t], sgn, prev, S)
        src = prev[np.arange(S), choice]
        paths = paths[rows, src]
        paths[:, :, t % W] = prev_in[np.arange(S), choice]
        if t >= traceback_len:
            best = np.argmax(metric, axis=-1)
            u[:, t - traceback_len] = paths[rows[:, 0], best, (t - traceback_len) % W]
    best = np.argmax(metric, axis=-1)
    for k in range(max(0, n - traceback_len), n):
        u[:, k] = paths[rows[:, 0], best, k % W]
    return u.reshape(lead + (n,))


def path_metric(llrs, x) -> np.ndarray:
    """Correlation metric of codeword ``x`` against ``llrs``."""
    return np.sum(np.asarray(llrs, dtype=np.float64) * (2.0 * np.asarray(x, dtype=np.float64) - 1.0),
                  axis=-1)


def brute_force_ml(llrs, code: CodeSpec, k: int, start_state: int = 0) -> np.ndarray:
    """Exhaustive ML over all ``2**k`` inputs; ties go to the lexicographically smallest."""
    if k > MAX_BRUTE_FORCE_BITS:
        raise ValueError(f"k={k} exceeds the brute-force limit of {MAX_BRUTE_FORCE_BITS}")
    L = np.asarray(llrs, dtype=np.float64)
    if L.shape[-1] != 2 * k:
        raise ValueError(f"expected {2 * k} LLRs, got {L.shape[-1]}")
    idx = np.arange(1 << k)
    cands = ((idx[:, None] >> np.arange(k - 1, -1, -1)) & 1).astype(np.uint8)
    code_words = encode(cands, code, state=start_state)
    metrics = L @ (2.0 * code_words.T - 1.0)
    return cands[np.argmax(metrics, axis=-1)]
