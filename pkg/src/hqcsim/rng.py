"""Counter-based random streams for reproducible ensemble sampling.

Every random draw in the package is addressed, not sequenced: a stream is
a Philox4x64 generator keyed by (master seed, stream tag), and each
particle owns fixed word positions inside each stream.  The tag packs an
ensemble id (density A, density B, probe ensembles, ...), a channel
(classical normals, quantum normals, mixture choice, rejection rounds)
and a sub-index.  Because draws are position-addressed, any subset of
particles can be generated independently, in any order or in parallel,
with bit-identical results.

Word -> variate maps:
  uniform: u = ((word >> 11) + 1) * 2**-53, in (0, 1]
  normal:  Box-Muller on consecutive uniform pairs
"""

from __future__ import annotations

import numpy as np

# channel ids inside a stream tag
CHANNEL_CLASSICAL = 1
CHANNEL_QUANTUM = 2
CHANNEL_CHOICE = 3
CHANNEL_REJECT_NORMALS = 4
CHANNEL_REJECT_UNIFORM = 5

_U64 = np.uint64
_TWO53 = 2.0 ** -53


def stream_tag(ensemble: int, channel: int, sub: int = 0) -> int:
    """Pack (ensemble, channel, sub) into a 64-bit stream tag."""
    if not (0 <= ensemble < 1 << 24 and 0 <= channel < 1 << 8 and 0 <= sub < 1 << 32):
        raise ValueError("stream tag component out of range")
    return (ensemble << 40) | (channel << 32) | sub


def stream_words(seed: int, tag: int, start: int, count: int) -> np.ndarray:
    """Raw 64-bit words [start, start + count) of the (seed, tag) stream."""
    if seed < 0 or seed >= 1 << 64:
        raise ValueError("seed must be a non-negative 64-bit integer")
    bg = np.random.Philox(key=np.array([seed, tag], dtype=_U64))
    block, offset = divmod(start, 4)
    if block:
        bg.advance(block)
    words = bg.random_raw(offset + count)
    return words[offset:] if offset else words


def stream_uniforms(seed: int, tag: int, start: int, count: int) -> np.ndarray:
    """Uniform variates in (0, 1] at word positions [start, start + count)."""
    words = stream_words(seed, tag, start, count)
    return ((words >> _U64(11)).astype(np.float64) + 1.0) * _TWO53


def stream_normals(seed: int, tag: int, start: int, count: int) -> np.ndarray:
    """Standard normals from word positions [start, start + count).

    count must be even; each uniform pair yields two normals (Box-Muller).
    """
    if count % 2:
        raise ValueError("normal draws consume words in pairs")
    u = stream_uniforms(seed, tag, start, count)
    r = np.sqrt(-2.0 * np.log(u[0::2]))
    theta = (2.0 * np.pi) * u[1::2]
    out = np.empty(count)
    out[0::2] = r * np.cos(theta)
    out[1::2] = r * np.sin(theta)
    return out
