import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from todadisk.errors import ConfigurationError, DomainError
from todadisk.geometry import RDifferential
from todadisk.grid import (
    DifferenceStencil,
    DiskGrid,
    build_grid,
    discrete_curvature,
    euclidean_laplacian,
    laplace_beltrami,
    radial_reduce,
    read_field_csv,
    relative_curvature,
    write_field_csv,
)


def test_build_grid_contracts():
    g = build_grid(0.9, 16, 1)
    assert g.radial and g.size == 16 and g.rho[-1] == 0.9 and g.rho[0] == 0.0
    g = build_grid(0.99, 256, 128)
    assert g.shape == (256, 128) and g.size == 256 * 128
    assert g.n_unknowns == 1 + 255 * 128


@pytest.mark.parametrize("args", [(1.2, 16, 8), (0.0, 16, 8), (0.9, 8, 8), (0.9, 16, 4), (0.9, 16.5, 8)])
def test_build_grid_rejects_bad_parameters(args):
    with pytest.raises(ConfigurationError):
        build_grid(*args)


def test_pack_unpack_round_trip(rng):
    g = DiskGrid(0.9, 17, 8)
    v = rng.normal(size=g.n_unknowns)
    assert np.array_equal(g.pack(g.unpack(v)), v)
    full = g.unpack(v)
    assert np.all(full[0] == v[0])
    with pytest.raises(ConfigurationError):
        g.pack(np.zeros((3, 3)))


def test_refined_grid_is_nested():
    for cluster in (False, True):
        g = DiskGrid(0.95, 17, 8, cluster)
        f = g.refined()
        assert (f.n_rho, f.n_theta) == (33, 16)
        assert np.allclose(f.rho[::2], g.rho, atol=1e-15)
        z_f = f.z_p
        assert np.allclose(g.restrict_from_fine(f, z_f), g.z_p, atol=1e-14)


def test_clustered_grid_is_finer_at_the_rim():
    g = DiskGrid(0.95, 33, 8, cluster=True)
    d = np.diff(g.rho)
    assert d[-1] < d[0]
    assert np.all(d > 0)


def test_laplacian_of_constant_is_zero():
    g = DiskGrid(0.95, 33, 16)
    L = laplace_beltrami(g)
    out = L(np.full(g.n_unknowns, 3.7))
    assert np.max(np.abs(out[g.interior_mask])) < 1e-9
    assert np.all(DifferenceStencil(L.matrix)(np.full(g.n_unknowns, 3.7)) == 0.0)


def test_laplacian_of_modulus_squared_at_origin():
    # d_z d_zbar |z|^2 = 1, so Delta_g |z|^2 = 1/lambda = 1/4 at the origin
    for n in (17, 33):
        g = DiskGrid(0.9, n, 16)
        val = laplace_beltrami(g)(np.abs(g.z_p) ** 2)[0]
        assert val == pytest.approx(0.25, abs=1e-12)


def test_laplacian_of_log_density_is_half():
    # K = -2 Delta_g log lambda = -1
    errs = []
    for n, m in ((33, 32), (65, 64)):
        g = DiskGrid(0.6, n, m)
        val = laplace_beltrami(g)(np.log(g.density))
        errs.append(np.max(np.abs(val - 0.5)[g.interior_mask]))
    assert errs[1] < 5e-4
    assert errs[0] / errs[1] >= 3.5


def test_dirichlet_rows_are_identity():
    g = DiskGrid(0.9, 17, 8)
    v = np.arange(g.n_unknowns, dtype=float)
    assert np.array_equal(laplace_beltrami(g)(v)[g.boundary_mask], v[g.boundary_mask])


def test_difference_form_matches_matrix(rng):
    g = DiskGrid(0.9, 33, 16)
    M = laplace_beltrami(g).matrix
    v = rng.normal(size=g.n_unknowns)
    interior = g.interior_mask
    assert np.allclose(DifferenceStencil(M)(v)[interior], (M @ v)[interior], rtol=1e-10, atol=1e-9)


def test_curvature_examples():
    g = DiskGrid(0.6, 33, 16)
    K = discrete_curvature(g.density, g)
    inner = g.interior_mask
    assert np.max(np.abs(K[inner] + 1)) < 2e-3
    assert np.all(np.isnan(K[g.boundary_mask]))
    K2 = discrete_curvature(2.5 * g.density, g)
    assert np.max(np.abs(K2[inner] + 1 / 2.5)) < 1e-3
    flat = discrete_curvature(np.ones(g.n_unknowns), g)
    assert np.all(flat[inner] == 0.0)
    full = discrete_curvature(g.unpack(g.density), g)
    assert full.shape == g.shape


def test_curvature_rejects_nonpositive_factor():
    g = DiskGrid(0.6, 17, 8)
    bad = np.ones(g.n_unknowns)
    bad[3] = 0.0
    with pytest.raises(DomainError):
        discrete_curvature(bad, g)
    with pytest.raises(DomainError):
        relative_curvature(-bad, g)


def test_relative_curvature_of_constant_factor_is_exact():
    g = DiskGrid(0.99, 65, 32)
    K = relative_curvature(np.full(g.n_unknowns, 4.0), g)
    assert np.nanmax(np.abs(K + 0.25)) < 1e-14


def _smooth_fields(g):
    x, y = g.z_p.real, g.z_p.imag
    yield x**3 + x * y**2, 8 * x
    yield np.exp(x) * np.cos(y), 0 * x
    yield np.sin(2 * x) * np.exp(y), (1 - 4) * np.sin(2 * x) * np.exp(y)


def test_truncation_error_is_second_order_away_from_origin():
    # ring 1 carries the usual O(h) pointwise defect of polar stencils; the
    # order is measured on |z| >= 0.1
    errs = []
    for n, m in ((33, 32), (65, 64)):
        g = DiskGrid(0.9, n, m)
        L = euclidean_laplacian(g)
        mask = (g.rho_p >= 0.1) & g.interior_mask
        errs.append([np.max(np.abs(L @ u - ex)[mask]) for u, ex in _smooth_fields(g)])
    ratios = np.array(errs[0]) / np.array(errs[1])
    assert np.all(ratios >= 3.5), ratios


def test_curvature_truncation_error_is_second_order():
    errs = []
    for n, m in ((33, 32), (65, 64)):
        g = DiskGrid(0.6, n, m)
        errs.append(np.nanmax(np.abs(discrete_curvature(g.density, g) + 1)))
    assert errs[0] / errs[1] >= 3.5


def test_two_dimensional_and_radial_operators_agree_on_radial_fields():
    g2 = DiskGrid(0.9, 33, 16)
    g1 = DiskGrid(0.9, 33, 1)
    u2 = np.log(g2.density) + g2.rho_p**4
    u1 = np.log(g1.density) + g1.rho_p**4
    a = g2.unpack(laplace_beltrami(g2)(u2))
    b = laplace_beltrami(g1)(u1)
    assert np.max(np.abs(a - b[:, None])) <= 1e-12 * np.max(np.abs(b))


def test_radial_reduce():
    assert radial_reduce(RDifferential.monomial(4, 3.0, 2))
    assert not radial_reduce(RDifferential(3, [1.0, 1.0]))
    assert radial_reduce(RDifferential.zero(3))


def test_csv_round_trip_is_lossless(tmp_path, rng):
    g = DiskGrid(0.95, 17, 8, cluster=True)
    v = rng.normal(size=g.n_unknowns) * 1e3
    path = tmp_path / "f.csv"
    write_field_csv(path, g, v)
    assert path.read_text().splitlines()[0] == "rho,theta,x,y,value"
    assert np.array_equal(read_field_csv(path, g), v)
    with pytest.raises(ConfigurationError):
        read_field_csv(path, DiskGrid(0.95, 17, 16))


@settings(max_examples=25, deadline=None)
@given(
    R=st.floats(0.3, 0.99),
    n=st.integers(16, 40),
    m=st.sampled_from([1, 8, 12, 16]),
    cluster=st.booleans(),
    c=st.floats(-5, 5),
)
def test_stencil_annihilates_constants(R, n, m, cluster, c):
    g = DiskGrid(R, n, m, cluster)
    D = euclidean_laplacian(g)
    row_sums = np.asarray(D.sum(axis=1)).ravel()
    scale = np.max(np.abs(D.diagonal()))
    assert np.max(np.abs(row_sums)) <= 1e-12 * scale
    assert np.all(DifferenceStencil(D)(np.full(g.n_unknowns, c)) == 0.0)


@settings(max_examples=25, deadline=None)
@given(R=st.floats(0.3, 0.99), n=st.integers(16, 40), m=st.sampled_from([8, 16]), cluster=st.booleans())
def test_stencil_is_an_m_matrix(R, n, m, cluster):
    # nonpositive diagonal, nonnegative off-diagonal: the discrete maximum principle
    g = DiskGrid(R, n, m, cluster)
    D = euclidean_laplacian(g).tocoo()
    off = D.row != D.col
    assert np.all(D.data[off] >= 0)
    inner = g.interior_mask[D.row[~off]]
    assert np.all(D.data[~off][inner] < 0)
