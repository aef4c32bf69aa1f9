import math

import numpy as np
import pytest

from mfcn import manifolds as mf
from mfcn.errors import ContractError

TWO_PI = 2 * math.pi


def circle(density=None):
    return mf.ManifoldSpec("circle", density or mf.DensitySpec())


def test_single_circle_point_on_manifold():
    cloud = mf.sample_points(circle(), 1, seed=7)
    assert abs(np.linalg.norm(cloud.points[0]) - 1.0) <= 1e-12


def test_zero_tilt_matches_uniform_stream():
    uni = mf.sample_points(circle(), 257, seed=11)
    tilt = mf.sample_points(circle(mf.DensitySpec("cosine_tilt", 0.0)), 257, seed=11)
    assert np.array_equal(uni.points, tilt.points)
    assert np.array_equal(uni.intrinsic_coords, tilt.intrinsic_coords)


def test_determinism_bit_identical():
    a = mf.sample_points(circle(), 100, seed=3)
    b = mf.sample_points(circle(), 100, seed=3)
    assert np.array_equal(a.points, b.points)
    c = mf.sample_points(mf.ManifoldSpec("sphere", mf.DensitySpec("cosine_tilt", 0.4)), 100, 3)
    d = mf.sample_points(mf.ManifoldSpec("sphere", mf.DensitySpec("cosine_tilt", 0.4)), 100, 3)
    assert np.array_equal(c.points, d.points)


def test_cosine_tilt_mean_matches_quadrature_oracle():
    # oracle: expected mean of cos(theta) under the tilted density, by quadrature
    a = 0.5
    spec = circle(mf.DensitySpec("cosine_tilt", a))
    expected = mf.integrate(spec, lambda c: np.cos(c[:, 0]))
    assert expected == pytest.approx(a / 2, abs=1e-12)
    var = mf.integrate(spec, lambda c: np.cos(c[:, 0]) ** 2) - expected**2

    n = 10**5
    cloud = mf.sample_points(spec, n, seed=123)
    emp = float(np.mean(np.cos(cloud.intrinsic_coords[:, 0])))
    assert abs(emp - expected) <= 3 * math.sqrt(var / n)


@pytest.mark.parametrize("kind", ["sphere", "flat_torus"])
def test_rejection_sampling_mean_matches_quadrature_oracle(kind):
    a = 0.6
    spec = mf.ManifoldSpec(kind, mf.DensitySpec("cosine_tilt", a))
    expected = mf.integrate(spec, lambda c: np.cos(c[:, 0]))
    var = mf.integrate(spec, lambda c: np.cos(c[:, 0]) ** 2) - expected**2
    n = 40_000
    cloud = mf.sample_points(spec, n, seed=9)
    emp = float(np.mean(np.cos(cloud.intrinsic_coords[:, 0])))
    assert abs(emp - expected) <= 4 * math.sqrt(var / n)


def test_points_live_on_their_manifolds():
    sph = mf.sample_points(mf.ManifoldSpec("sphere"), 50, 1)
    assert np.max(np.abs(np.linalg.norm(sph.points, axis=1) - 1.0)) <= 1e-12
    tor = mf.sample_points(mf.ManifoldSpec("flat_torus"), 50, 1)
    assert np.max(np.abs(np.linalg.norm(tor.points[:, :2], axis=1) - 1.0)) <= 1e-12
    assert np.max(np.abs(np.linalg.norm(tor.points[:, 2:], axis=1) - 1.0)) <= 1e-12


def test_density_normalizes_and_is_bounded():
    for kind in ("circle", "sphere", "flat_torus"):
        spec = mf.ManifoldSpec(kind, mf.DensitySpec("cosine_tilt", 0.9))
        total = mf.integrate(spec, lambda c: np.ones(c.shape[0]))
        tol = 1e-10 if kind == "circle" else 1e-8
        assert total == pytest.approx(1.0, abs=tol)
        coords, _ = mf._quad_grid(spec, None)
        rho = spec.density_values(coords)
        assert np.all(rho > 0)
        assert np.all(np.isfinite(rho))


def test_circle_eigenpair_examples():
    spec = circle()
    e1 = mf.manifold_eigenpair(spec, 1)
    assert e1.eigenvalue == 0.0
    angles = np.linspace(0, TWO_PI, 13)[:, None]
    assert np.allclose(e1(angles), 1.0)

    e2 = mf.manifold_eigenpair(spec, 2)
    assert e2.eigenvalue == 1.0
    assert np.allclose(e2(angles), math.sqrt(2) * np.cos(angles[:, 0]), atol=1e-14)

    e4 = mf.manifold_eigenpair(spec, 4)
    assert e4.eigenvalue == 4.0
    assert np.allclose(e4(angles), math.sqrt(2) * np.cos(2 * angles[:, 0]), atol=1e-14)


def test_sphere_degree_one_cluster():
    spec = mf.ManifoldSpec("sphere")
    vals = [mf.manifold_eigenpair(spec, i).eigenvalue for i in (2, 3, 4)]
    assert vals == [2.0, 2.0, 2.0]
    assert mf.manifold_eigenpair(spec, 5).eigenvalue == 6.0


def test_eigenpair_range_errors():
    with pytest.raises(ContractError):
        mf.manifold_eigenpair(mf.ManifoldSpec("sphere"), 17)
    with pytest.raises(ContractError):
        mf.manifold_eigenpair(mf.ManifoldSpec("flat_torus"), 82)
    with pytest.raises(ContractError):
        mf.manifold_eigenpair(circle(), 0)
    with pytest.raises(ContractError):
        mf.manifold_eigenpair(circle(mf.DensitySpec("cosine_tilt", 0.5)), 1)


def _fd_laplacian_circle(fn, theta, h=1e-4):
    p = lambda t: fn(np.array([[t]]))[0]
    return -(p(theta + h) - 2 * p(theta) + p(theta - h)) / h**2


def _fd_laplacian_sphere(fn, th, ph, h=5e-4):
    p = lambda a, b: fn(np.array([[a, b]]))[0]
    d2ph = (p(th, ph + h) - 2 * p(th, ph) + p(th, ph - h)) / h**2
    # (1/sin) d/dth (sin * df/dth), via nested central differences
    dth = lambda a: (p(a + h, ph) - p(a - h, ph)) / (2 * h)
    g = lambda a: math.sin(a) * dth(a)
    d_sin_dth = (g(th + h) - g(th - h)) / (2 * h)
    return -(d_sin_dth / math.sin(th) + d2ph / math.sin(th) ** 2)


def _fd_laplacian_torus(fn, u, v, h=1e-4):
    p = lambda a, b: fn(np.array([[a, b]]))[0]
    duu = (p(u + h, v) - 2 * p(u, v) + p(u - h, v)) / h**2
    dvv = (p(u, v + h) - 2 * p(u, v) + p(u, v - h)) / h**2
    return -(duu + dvv)


def test_eigenfunctions_satisfy_laplacian_by_finite_differences():
    rng = np.random.default_rng(5)
    spec = circle()
    for i in range(1, 10):
        ef = mf.manifold_eigenpair(spec, i)
        for theta in rng.uniform(0, TWO_PI, 3):
            lhs = _fd_laplacian_circle(ef, theta)
            assert lhs == pytest.approx(ef.eigenvalue * ef(np.array([[theta]]))[0], abs=1e-5)

    spec = mf.ManifoldSpec("sphere")
    for i in range(1, 17):
        ef = mf.manifold_eigenpair(spec, i)
        for _ in range(3):
            th = rng.uniform(0.4, math.pi - 0.4)
            ph = rng.uniform(0, TWO_PI)
            lhs = _fd_laplacian_sphere(ef, th, ph)
            assert lhs == pytest.approx(ef.eigenvalue * ef(np.array([[th, ph]]))[0],
                                        abs=2e-5 * max(1, ef.eigenvalue))

    spec = mf.ManifoldSpec("flat_torus")
    for i in range(1, 82, 7):
        ef = mf.manifold_eigenpair(spec, i)
        u, v = rng.uniform(0, TWO_PI, 2)
        lhs = _fd_laplacian_torus(ef, u, v)
        assert lhs == pytest.approx(ef.eigenvalue * ef(np.array([[u, v]]))[0], abs=1e-5)


def _gram(spec, kappa, nodes=None):
    coords, w = mf._quad_grid(spec, nodes)
    Phi = mf.eigenfunction_matrix(spec, kappa, coords)
    return (Phi * w[:, None]).T @ Phi


def test_orthonormality_circle():
    G = _gram(circle(), 9, nodes=512)
    assert np.max(np.abs(G - np.eye(9))) <= 1e-8


def test_orthonormality_sphere_and_torus():
    G = _gram(mf.ManifoldSpec("sphere"), 16)
    assert np.max(np.abs(G - np.eye(16))) <= 1e-6
    G = _gram(mf.ManifoldSpec("flat_torus"), 81)
    assert np.max(np.abs(G - np.eye(81))) <= 1e-6


def test_eigenvalues_ascend():
    for kind, kappa in (("circle", 30), ("sphere", 16), ("flat_torus", 81)):
        spec = mf.ManifoldSpec(kind)
        vals = [mf.manifold_eigenpair(spec, i).eigenvalue for i in range(1, kappa + 1)]
        assert vals == sorted(vals)
        assert vals[0] == 0.0


def test_evaluate_pn_constant_and_linearity():
    cloud = mf.sample_points(circle(), 4, seed=0)
    ones = mf.evaluate_Pn(lambda c: np.ones(c.shape[0]), cloud)
    assert np.allclose(ones, 0.5)
    assert np.linalg.norm(ones) == pytest.approx(1.0, abs=1e-15)

    f = mf.manifold_eigenpair(circle(), 2)
    g = mf.manifold_eigenpair(circle(), 5)
    lhs = mf.evaluate_Pn(lambda c: 2.5 * f(c) - 1.5 * g(c), cloud)
    rhs = 2.5 * mf.evaluate_Pn(f, cloud) - 1.5 * mf.evaluate_Pn(g, cloud)
    assert np.array_equal(lhs, rhs)


def test_evaluate_pn_norm_concentration():
    # |  ||P_n phi_2||^2 - 1 | <= 6 sqrt(log n / n) ||phi_2||_4^2 in >= 99/100 trials
    spec = circle()
    phi2 = mf.manifold_eigenpair(spec, 2)
    l4sq = mf.quadrature(spec, phi2, 4) ** 2
    n = 4096
    bound = 6 * math.sqrt(math.log(n) / n) * l4sq
    bad = 0
    for seed in range(100):
        cloud = mf.sample_points(spec, n, seed=seed)
        v = mf.evaluate_Pn(phi2, cloud)
        if abs(v @ v - 1.0) > bound:
            bad += 1
    assert bad <= 1


def test_quadrature_examples():
    spec = circle()
    assert mf.quadrature(spec, lambda c: np.ones(c.shape[0]), 1) == pytest.approx(1.0, abs=1e-14)
    assert mf.quadrature(spec, lambda c: np.ones(c.shape[0]), 7.5) == pytest.approx(1.0, abs=1e-12)
    phi2 = mf.manifold_eigenpair(spec, 2)
    assert mf.quadrature(spec, phi2, 2) == pytest.approx(1.0, abs=1e-12)
    # (int 4 cos^4 dmu)^(1/4) = (3/2)^(1/4); trapezoid is exact for this band
    assert mf.quadrature(spec, phi2, 4) == pytest.approx((1.5) ** 0.25, abs=1e-12)
    with pytest.raises(ContractError):
        mf.quadrature(spec, phi2, 0.5)


def test_continuum_filter_identity_and_heat():
    spec = circle()
    coeffs = [0.3, 1.2, 0.0, -0.7]
    pts = np.linspace(0, TWO_PI, 9)[:, None]
    ident = mf.continuum_filter_value(spec, lambda lam: np.ones_like(lam), coeffs, pts)
    direct = mf.eigenfunction_matrix(spec, 4, pts) @ np.array(coeffs)
    assert np.allclose(ident, direct, atol=1e-13)

    heat = mf.continuum_filter_value(spec, lambda lam: np.exp(-lam), [0.0, 1.0], pts)
    assert np.allclose(heat, math.exp(-1) * math.sqrt(2) * np.cos(pts[:, 0]), atol=1e-13)

    zero = mf.continuum_filter_value(spec, lambda lam: np.exp(-lam), [0.0, 0.0], pts)
    assert np.array_equal(zero, np.zeros(9))


def test_plancherel_bandlimited():
    spec = circle()
    rng = np.random.default_rng(21)
    coeffs = rng.standard_normal(9)
    f = lambda c: mf.eigenfunction_matrix(spec, 9, c) @ coeffs
    norm_sq = mf.quadrature(spec, f, 2) ** 2
    assert norm_sq == pytest.approx(float(coeffs @ coeffs), abs=1e-10)


def test_scale_factors_from_volume():
    spec = circle()
    assert mf.scale_factor(spec, "LB") == 1.0
    rho = 1.0 / spec.volume
    assert mf.scale_factor(spec, "eps_uniform") == pytest.approx(rho / 2)
    assert mf.scale_factor(spec, "knn_uniform") == pytest.approx(rho ** (-2.0) / 2)
    sph = mf.ManifoldSpec("sphere")
    assert mf.scale_factor(sph, "knn_uniform") == pytest.approx((4 * math.pi) / 2)


def test_equispaced_cloud_is_exact_for_low_band():
    cloud = mf.equispaced_circle_cloud(8)
    Phi = mf.eigenfunction_matrix(circle(), 5, cloud.intrinsic_coords)
    G = Phi.T @ Phi / 8
    assert np.max(np.abs(G - np.eye(5))) <= 1e-12
