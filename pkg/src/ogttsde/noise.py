"""Counter-based Gaussian noise.

Every standard normal is a pure function of ``(seed, path, component, step)``:
the four integers are fed through the Philox4x32-10 block cipher and the
output words are mapped to a normal deviate with the Box-Muller transform.
Streams are therefore splittable and independent of how paths are grouped
or scheduled.
"""
from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np

_M0 = np.uint64(0xD2511F53)
_M1 = np.uint64(0xCD9E8D57)
_W0 = 0x9E3779B9
_W1 = 0xBB67AE85
_MASK32 = np.uint64(0xFFFFFFFF)
_SHIFT32 = np.uint64(32)
_TWO53_INV = 1.0 / 9007199254740992.0


def philox4x32(counter, key, rounds=10):
    """Philox4x32 bijection applied elementwise.

    ``counter`` is a sequence of four ``uint32``-valued arrays (broadcastable),
    ``key`` a pair of python ints or ``uint32`` arrays. Returns four ``uint64``
    arrays holding 32-bit words.
    """
    c0, c1, c2, c3 = (np.asarray(c, dtype=np.uint64) & _MASK32 for c in counter)
    c0, c1, c2, c3 = np.broadcast_arrays(c0, c1, c2, c3)
    k0 = np.asarray(key[0], dtype=np.uint64) & _MASK32
    k1 = np.asarray(key[1], dtype=np.uint64) & _MASK32
    for r in range(rounds):
        if r:
            k0 = (k0 + np.uint64(_W0)) & _MASK32
            k1 = (k1 + np.uint64(_W1)) & _MASK32
        p0 = _M0 * c0
        p1 = _M1 * c2
        c0, c1, c2, c3 = (
            (p1 >> _SHIFT32) ^ c1 ^ k0,
            p1 & _MASK32,
            (p0 >> _SHIFT32) ^ c3 ^ k1,
            p0 & _MASK32,
        )
    return c0, c1, c2, c3


def _to_unit_open(hi, lo):
    # 53-bit uniform strictly inside (0, 1)
    bits = ((hi << _SHIFT32) | lo) >> np.uint64(11)
    return (bits.astype(np.float64) + 0.5) * _TWO53_INV


def gaussian_reference(seed, path, component, step):
    """Pure-numpy counterpart of :func:`gaussian` (slower; used for cross-checks)."""
    seed = int(seed) & 0xFFFFFFFFFFFFFFFF
    step = np.asarray(step, dtype=np.uint64)
    path = np.asarray(path, dtype=np.uint64)
    component = np.asarray(component, dtype=np.uint64)
    w0, w1, w2, w3 = philox4x32(
        (step & _MASK32, step >> _SHIFT32, path, component),
        (seed & 0xFFFFFFFF, seed >> 32),
    )
    u1 = _to_unit_open(w0, w1)
    u2 = _to_unit_open(w2, w3)
    return np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)


@numba.vectorize(["float64(uint64, uint64, uint64, uint64)"], cache=True)
def _gaussian_kernel(seed, path, component, step):
    m32 = numba.uint64(0xFFFFFFFF)
    c0 = step & m32
    c1 = step >> numba.uint64(32)
    c2 = path & m32
    c3 = component & m32
    k0 = seed & m32
    k1 = seed >> numba.uint64(32)
    for r in range(10):
        if r:
            k0 = (k0 + numba.uint64(0x9E3779B9)) & m32
            k1 = (k1 + numba.uint64(0xBB67AE85)) & m32
        p0 = numba.uint64(0xD2511F53) * c0
        p1 = numba.uint64(0xCD9E8D57) * c2
        n0 = (p1 >> numba.uint64(32)) ^ c1 ^ k0
        n1 = p1 & m32
        n2 = (p0 >> numba.uint64(32)) ^ c3 ^ k1
        n3 = p0 & m32
        c0, c1, c2, c3 = n0, n1, n2, n3
    b1 = ((c0 << numba.uint64(32)) | c1) >> numba.uint64(11)
    b2 = ((c2 << numba.uint64(32)) | c3) >> numba.uint64(11)
    u1 = (numba.float64(b1) + 0.5) * _TWO53_INV
    u2 = (numba.float64(b2) + 0.5) * _TWO53_INV
    return np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)


def gaussian(seed, path, component, step):
    """Standard normal deviates for broadcastable integer index arrays."""
    seed = np.uint64(int(seed) & 0xFFFFFFFFFFFFFFFF)
    return _gaussian_kernel(seed, np.asarray(path, dtype=np.uint64),
                            np.asarray(component, dtype=np.uint64),
                            np.asarray(step, dtype=np.uint64))


@dataclass(frozen=True)
class NoiseStream:
    """Brownian increments for one seed.

    ``component`` selects which of the independent scalar Brownian motions is
    read; paths are addressed by integer index.
    """

    seed: int
    path_index: int = 0
    component: int = 0

    def normals(self, steps, paths=None, components=None):
        """Standard normals of shape ``(len(paths), len(steps), len(components))`` squeezed
        over dimensions left at their scalar defaults."""
        steps = np.asarray(steps, dtype=np.uint64)
        p = np.asarray(self.path_index if paths is None else paths, dtype=np.uint64)
        c = np.asarray(self.component if components is None else components, dtype=np.uint64)
        return _grid(self.seed, p, steps, c)

    def increments(self, n_steps, dt, start_step=0, paths=None, components=None):
        """Brownian increments ``sqrt(dt) * Z`` for steps ``start_step .. start_step + n_steps - 1``."""
        steps = np.arange(start_step, start_step + n_steps, dtype=np.uint64)
        return np.sqrt(dt) * self.normals(steps, paths, components)


def _grid(seed, paths, steps, components):
    # broadcast to (paths, steps, components), then drop scalar axes
    shape_p = paths.shape
    shape_c = components.shape
    P = paths.reshape(-1, 1, 1)
    S = steps.reshape(1, -1, 1)
    C = components.reshape(1, 1, -1)
    z = gaussian(seed, P, C, S)
    out_shape = shape_p + (steps.size,) + shape_c
    return z.reshape(out_shape)


def step_normals(seed, paths, step, n_components):
    """Normals for one integration step: shape ``(len(paths), n_components)``."""
    paths = np.asarray(paths, dtype=np.uint64)
    comps = np.arange(n_components, dtype=np.uint64)
    return gaussian(seed, paths[:, None], comps[None, :], np.uint64(step))
