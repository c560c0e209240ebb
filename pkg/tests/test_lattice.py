import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from andersonlab.lattice import (
    BoxSpec,
    DisorderField,
    DistributionSpec,
    LatticeError,
    SiteIndex,
    SublatticeSpec,
    VolumeCapError,
    assemble_hamiltonian,
    build_box,
    choose_decoupling_sublattice,
    dense_hamiltonian,
    mask_potential,
    sample_disorder,
)

small_boxes = st.tuples(st.integers(1, 2), st.sampled_from([4, 6, 8]))


def test_box_coordinates_and_index_round_trip():
    box, idx = build_box(2, 4)
    assert idx.coords.shape == (16, 2)
    assert idx.coords.min() == -2 and idx.coords.max() == 1
    assert idx.site_of(0) == (-2, -2)
    for i in range(box.volume):
        assert idx.index_of(idx.site_of(i)) == i
    # torus wrapping
    assert idx.index_of((2, 0)) == idx.index_of((-2, 0))


def test_origin_shifts_the_box():
    box, idx = build_box(1, 4, origin=(10,))
    assert list(idx.coords[:, 0]) == [8, 9, 10, 11]


@pytest.mark.parametrize("L, msg", [(7, "even"), (2, ">= 4")])
def test_bad_side_length(L, msg):
    with pytest.raises(LatticeError, match=msg):
        BoxSpec(1, L)


def test_volume_cap():
    with pytest.raises(VolumeCapError, match="cap"):
        build_box(3, 128, volume_cap=1 << 20)


def test_neighbors_are_torus_neighbors():
    box, idx = build_box(2, 6)
    for i in range(box.volume):
        x = np.array(idx.site_of(i))
        expected = set()
        for axis in range(2):
            for s in (-1, 1):
                y = x.copy()
                y[axis] += s
                expected.add(idx.index_of(y))
        assert set(idx.neighbors[i]) == expected


def test_offset_minimal_image():
    _, idx = build_box(1, 8)
    assert list(idx.offset([[-5], [3], [4], [7]]).ravel()) == [3, 3, -4, -1]


def test_distribution_parsing():
    d = DistributionSpec.parse("uniform:0,5")
    assert d.density_sup == pytest.approx(0.2)
    assert d.sup_support == 5
    p = DistributionSpec.parse("piecewise:0,0.5,2:1.5,0.1666666666666667")
    assert p.density_sup == 1.5
    assert DistributionSpec.parse(p.describe()) == p
    for bad in ("uniform:0.5,1", "piecewise:0.2,1:1.25", "gauss:0,1", "uniform:0", "uniform:0,1,2"):
        with pytest.raises(LatticeError):
            DistributionSpec.parse(bad)
    with pytest.raises(LatticeError, match="support infimum must be 0"):
        DistributionSpec.parse("uniform:0.5,1")
    with pytest.raises(LatticeError, match="integrate to 1"):
        DistributionSpec.piecewise([0, 1], [0.5])


def test_piecewise_ppf_inverts_cdf():
    p = DistributionSpec.piecewise([0, 0.5, 2], [1.5, 1 / 6])
    u = np.linspace(0, 1, 101)
    x = p.ppf(u)
    assert np.all(np.diff(x) >= 0)
    assert x[0] == 0 and x[-1] == pytest.approx(2)
    # cdf at 0.5 is 0.75
    assert p.ppf(0.75) == pytest.approx(0.5)


def test_quadrature_integrates_polynomials():
    p = DistributionSpec.piecewise([0, 0.5, 2], [1.5, 1 / 6])
    xs, ws = p.quadrature(16)
    assert ws.sum() == pytest.approx(1.0, abs=1e-14)
    # E[X^2] = 1.5 * 0.5^3/3 + (1/6) * (8 - 0.125)/3
    assert np.dot(ws, xs**2) == pytest.approx(1.5 * 0.125 / 3 + (7.875 / 3) / 6, rel=1e-13)


def test_sampling_mean_of_uniform():
    box = build_box(1, 1_000_000)[0]
    f = sample_disorder(DistributionSpec.uniform(0, 1), box, seed=0)
    assert abs(f.values.mean() - 0.5) <= 0.002
    assert f.values.min() >= 0 and f.values.max() <= 1


def test_sampling_is_keyed_by_seed_and_realization(unit, box1):
    a = sample_disorder(unit, box1, 3, 7).values
    assert np.array_equal(a, sample_disorder(unit, box1, 3, 7).values)
    assert not np.array_equal(a, sample_disorder(unit, box1, 3, 8).values)
    assert not np.array_equal(a, sample_disorder(unit, box1, 4, 7).values)


def test_field_is_read_only(unit, box1):
    f = sample_disorder(unit, box1, 0)
    with pytest.raises(ValueError):
        f.values[0] = 1.0


def test_field_box_mismatch(unit, box1):
    other = build_box(1, 8)[0]
    f = sample_disorder(unit, other, 0)
    with pytest.raises(LatticeError):
        dense_hamiltonian(box1, f)


def test_hamiltonian_entries():
    box = build_box(1, 4)[0]
    h = dense_hamiltonian(box, np.array([0.1, 0.2, 0.3, 0.4]))
    expected = np.array([
        [2.1, -1, 0, -1],
        [-1, 2.2, -1, 0],
        [0, -1, 2.3, -1],
        [-1, 0, -1, 2.4],
    ])
    assert np.array_equal(h, expected)
    assert np.array_equal(assemble_hamiltonian(box, np.array([0.1, 0.2, 0.3, 0.4])).to_dense(), expected)


@settings(max_examples=25, deadline=None)
@given(small_boxes, st.integers(0, 2**32 - 1))
def test_hamiltonian_symmetric_row_sums_and_spectrum(shape, seed):
    d, L = shape
    box = build_box(d, L)[0]
    field = sample_disorder(DistributionSpec.uniform(0, 1), box, seed)
    h = dense_hamiltonian(box, field)
    assert np.array_equal(h, h.T)
    assert np.allclose(h.sum(axis=1), field.values, atol=1e-14)
    ev = np.linalg.eigvalsh(h)
    assert ev.min() >= -1e-12
    assert ev.max() <= 4 * d + field.values.max() + 1e-12


@settings(max_examples=25, deadline=None)
@given(small_boxes, st.integers(0, 2**32 - 1), st.data())
def test_masking_lowers_every_eigenvalue(shape, seed, data):
    d, L = shape
    box = build_box(d, L)[0]
    field = sample_disorder(DistributionSpec.uniform(0, 1), box, seed)
    keep = data.draw(st.lists(st.integers(0, box.volume - 1), unique=True))
    masked = mask_potential(field, keep)
    assert np.all(masked.values <= field.values)
    full = np.linalg.eigvalsh(dense_hamiltonian(box, field))
    low = np.linalg.eigvalsh(dense_hamiltonian(box, masked))
    assert np.all(low <= full + 1e-12)


@settings(max_examples=25, deadline=None)
@given(small_boxes, st.integers(0, 2**32 - 1), st.data())
def test_translation_covariance(shape, seed, data):
    d, L = shape
    box, idx = build_box(d, L)
    field = sample_disorder(DistributionSpec.uniform(0, 1), box, seed)
    shift = data.draw(st.tuples(*[st.integers(-L, L)] * d))
    shifted = np.empty(box.volume)
    for i in range(box.volume):
        shifted[idx.index_of(np.add(idx.site_of(i), shift))] = field.values[i]
    a = np.linalg.eigvalsh(dense_hamiltonian(box, field))
    b = np.linalg.eigvalsh(dense_hamiltonian(box, shifted))
    assert np.allclose(a, b, atol=1e-12)


@pytest.mark.parametrize("d, L", [(1, 8), (1, 12), (2, 8), (3, 4)])
def test_sublattice_size_and_exclusion(d, L):
    box, idx = build_box(d, L)
    for i in range(box.volume):
        k = idx.site_of(i)
        g = choose_decoupling_sublattice(box, k)
        sites = g.sites_in(idx)
        assert sites.size == box.volume // 4**d
        assert not g.contains((0,) * d) and not g.contains(k)
        # brute force: first admissible offset in lexicographic order
        first = next(off for off in itertools.product(range(4), repeat=d)
                     if not SublatticeSpec(off).contains((0,) * d) and not SublatticeSpec(off).contains(k))
        assert g.offset == first


def test_sublattice_needs_l_divisible_by_four():
    box = build_box(1, 6)[0]
    with pytest.raises(LatticeError, match="divisible by 4"):
        choose_decoupling_sublattice(box, (1,))


def test_dense_conversion_cap():
    box = build_box(2, 66)[0]
    op = assemble_hamiltonian(box, np.zeros(box.volume))
    with pytest.raises(VolumeCapError):
        op.to_dense()


def test_disorder_field_shape_checked(box1):
    with pytest.raises(LatticeError):
        DisorderField(np.zeros(3), box1)


def test_site_index_bounds(box1):
    idx = SiteIndex(box1)
    with pytest.raises(LatticeError):
        idx.site_of(box1.volume)
    with pytest.raises(LatticeError):
        idx.index_of((0, 0))
