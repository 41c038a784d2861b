"""Keyed, counter-based random streams.

Every random quantity in a simulation is addressed by a key path such as
``(design, n, t, replicate, pass, dimension)``.  A key maps to a Philox
stream through :class:`numpy.random.SeedSequence` spawn keys, so two
different key paths give statistically independent streams and the same
key path always reproduces the same numbers, whatever order the work is
scheduled in.

Blocks of uniforms are laid out row-major in the stream's counter space:
row ``r`` of a ``(rows, width)`` block occupies words ``r*width`` to
``(r+1)*width - 1``.  :meth:`KeyedStream.uniform_row` recomputes a single
row by advancing the counter, which is what makes per-draw substreams
cheap: a bootstrap draw ``b`` is a pure function of ``(key, b)``.
"""

import zlib

import numpy as np

# Philox emits four 64-bit words per counter increment.
_WORDS_PER_BLOCK = 4


def _key_part(part):
    if isinstance(part, (bool, np.bool_)):
        return int(part)
    if isinstance(part, (int, np.integer)):
        if part < 0:
            raise ValueError(f"key parts must be non-negative, got {part}")
        return int(part)
    if isinstance(part, str):
        return zlib.crc32(part.encode("utf-8"))
    raise TypeError(f"unsupported key part {part!r}")


class KeyedStream:
    """A random stream addressed by ``(seed, key...)``.

    Parameters
    ----------
    seed : int
        Master seed.
    key : tuple
        Key path; entries are non-negative integers or strings (strings are
        hashed with CRC-32, which is stable across processes and platforms).

    Examples
    --------
    >>> s = KeyedStream(12345).child("d1", 50, 50, 7)
    >>> u = s.child("final", "spatial").uniform_rows(399, 50)
    >>> u.shape
    (399, 50)
    """

    def __init__(self, seed, key=()):
        self.seed = int(seed)
        self.key = tuple(_key_part(k) for k in key)

    def __repr__(self):
        return f"KeyedStream(seed={self.seed}, key={self.key})"

    def child(self, *key):
        return KeyedStream(self.seed, self.key + tuple(key))

    def _bit_generator(self):
        ss = np.random.SeedSequence(self.seed, spawn_key=self.key)
        return np.random.Philox(ss)

    def generator(self):
        """Return a fresh :class:`numpy.random.Generator` at counter zero."""
        return np.random.Generator(self._bit_generator())

    def uniform_rows(self, rows, width):
        """Uniforms on [0, 1) shaped ``(rows, width)``; row r is counter block r."""
        return self.generator().random((rows, width))

    def uniform_row(self, row, width):
        """Recompute row ``row`` of :meth:`uniform_rows` without the others."""
        bg = self._bit_generator()
        blocks, rem = divmod(row * width, _WORDS_PER_BLOCK)
        bg.advance(blocks)
        g = np.random.Generator(bg)
        if rem:
            g.random(rem)
        return g.random(width)
