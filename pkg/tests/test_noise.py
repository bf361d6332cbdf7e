import numpy as np
from hypothesis import given, settings, strategies as st
from scipy import stats

from ogttsde.noise import NoiseStream, gaussian, gaussian_reference, philox4x32, step_normals

U32 = 0xFFFFFFFF


def words(out):
    return [int(w) for w in out]


def test_philox_known_answers():
    # reference vectors of the Random123 distribution
    assert words(philox4x32((0, 0, 0, 0), (0, 0))) == [0x6627E8D5, 0xE169C58D, 0xBC57AC4C, 0x9B00DBD8]
    assert words(philox4x32((U32,) * 4, (U32, U32))) == [0x408F276D, 0x41C83B0E, 0xA20BC7C6, 0x6D5451FD]
    ctr = (0x243F6A88, 0x85A308D3, 0x13198A2E, 0x03707344)
    key = (0xA4093822, 0x299F31D0)
    assert words(philox4x32(ctr, key)) == [0xD16CFE09, 0x94FDCCEB, 0x5001E420, 0x24126EA1]


def test_compiled_kernel_matches_reference():
    paths = np.arange(64)[:, None]
    steps = np.arange(50)[None, :]
    for seed in (0, 1, 2**63 + 17):
        a = gaussian(seed, paths, 3, steps)
        b = gaussian_reference(seed, paths, 3, steps)
        np.testing.assert_allclose(a, b, rtol=0, atol=1e-15)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**64 - 1), st.integers(0, 2**32 - 1), st.integers(0, 4),
       st.integers(0, 2**40))
def test_pure_function_of_indices(seed, path, comp, step):
    z1 = gaussian(seed, path, comp, step)
    z2 = gaussian(seed, np.array([path, path]), comp, np.array([step, step]))
    assert np.isfinite(z1)
    assert z2[0] == z1 and z2[1] == z1


def test_streams_look_standard_normal():
    z = NoiseStream(7).normals(np.arange(200_000))
    assert abs(z.mean()) < 0.01
    assert abs(z.var() - 1) < 0.01
    assert stats.kstest(z, "norm").statistic < 0.005


def test_components_and_paths_are_uncorrelated():
    z = NoiseStream(11).normals(np.arange(50_000), paths=[0, 1], components=[0, 1])
    c = np.corrcoef(z.reshape(2, -1, 2).transpose(0, 2, 1).reshape(4, -1))
    assert np.max(np.abs(c - np.eye(4))) < 0.02


def test_increments_and_offsets_agree():
    s = NoiseStream(5, path_index=3, component=2)
    full = s.increments(100, 0.25)
    tail = s.increments(40, 0.25, start_step=60)
    np.testing.assert_array_equal(full[60:], tail)
    np.testing.assert_allclose(full, 0.5 * s.normals(np.arange(100)))


def test_step_normals_layout():
    z = step_normals(9, [4, 8], 17, 5)
    assert z.shape == (2, 5)
    assert z[1, 3] == gaussian(9, 8, 3, 17)
