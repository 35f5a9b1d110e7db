import math

import numpy as np
import pytest
import scipy.io
import scipy.sparse as sp
from hypothesis import given
from hypothesis import strategies as st

from crgks.operators import (
    DENSE_ENTRY_BUDGET,
    GradientOperator,
    LinearOperator,
    build_gaussian_blur,
    build_gradient_1d,
    build_gradient_2d,
    build_radon_fanbeam,
    default_blur_halfwidth,
    fanbeam_rays,
    image_to_vector,
    ray_pixel_intersections,
    vector_to_image,
)

from .oracles import difference_matrix_2d_by_hand, gaussian_row, sampled_chord_lengths


def _adjoint_gap(op, rng, trials=100):
    worst = 0.0
    for _ in range(trials):
        x = rng.standard_normal(op.cols)
        y = rng.standard_normal(op.rows)
        gap = abs(op.apply(x) @ y - x @ op.apply_transpose(y))
        worst = max(worst, gap / (np.linalg.norm(x) * np.linalg.norm(y)))
    return worst


# ---------------------------------------------------------------------------
# LinearOperator


class TestLinearOperator:
    def test_dense_and_sparse_agree(self, rng):
        M = rng.standard_normal((32, 32))
        M[np.abs(M) < 0.8] = 0.0
        dense, sparse = LinearOperator(M), LinearOperator(sp.csr_matrix(M))
        assert not dense.is_sparse and sparse.is_sparse
        x, y = rng.standard_normal(32), rng.standard_normal(32)
        np.testing.assert_allclose(dense.apply(x), sparse.apply(x), rtol=0, atol=1e-14)
        np.testing.assert_allclose(dense.apply_transpose(y), sparse.apply_transpose(y), rtol=0, atol=1e-14)

    def test_dimension_checks(self):
        op = LinearOperator(np.ones((3, 2)))
        with pytest.raises(ValueError):
            op.apply(np.ones(3))
        with pytest.raises(ValueError):
            op.apply_transpose(np.ones(2))
        assert op.apply(np.ones(2)).shape == (3,)
        assert op.apply_transpose(np.ones(3)).shape == (2,)

    def test_apply_to_block(self, rng):
        M = rng.standard_normal((5, 4))
        V = rng.standard_normal((4, 3))
        np.testing.assert_allclose(LinearOperator(M).apply(V), M @ V)

    def test_auto_storage_follows_budget(self):
        small = LinearOperator.auto(sp.identity(10, format="csr"))
        assert not small.is_sparse
        side = int(math.isqrt(DENSE_ENTRY_BUDGET)) + 1
        big = LinearOperator.auto(sp.identity(side, format="csr"))
        assert big.is_sparse

    def test_row_scaled(self, rng):
        M = rng.standard_normal((6, 4))
        d = rng.uniform(size=6)
        for op in (LinearOperator(M), LinearOperator(sp.csr_matrix(M))):
            np.testing.assert_allclose(op.row_scaled(d).toarray(), d[:, None] * M, atol=1e-15)
        with pytest.raises(ValueError):
            LinearOperator(M).row_scaled(np.ones(4))

    def test_transpose_property(self, rng):
        M = rng.standard_normal((4, 3))
        np.testing.assert_array_equal(LinearOperator(M).T.toarray(), M.T)

    def test_matrix_market_roundtrip(self, tmp_path):
        L = build_gradient_2d(3, 4)
        path = tmp_path / "L.mtx"
        L.write_matrix_market(path)
        first = path.read_text().splitlines()[0]
        assert first == "%%MatrixMarket matrix coordinate real general"
        back = scipy.io.mmread(str(path))
        np.testing.assert_array_equal(back.toarray(), L.toarray())


# ---------------------------------------------------------------------------
# gradients


class TestGradient1D:
    def test_shape(self):
        L = build_gradient_1d(200)
        assert isinstance(L, GradientOperator)
        assert L.shape == (199, 200)

    def test_constant_in_null_space(self):
        np.testing.assert_array_equal(build_gradient_1d(3).apply(np.ones(3)), [0.0, 0.0])

    def test_forward_difference(self):
        np.testing.assert_array_equal(build_gradient_1d(3).apply(np.array([0.0, 1.0, 3.0])), [1.0, 2.0])

    def test_too_small(self):
        with pytest.raises(ValueError):
            build_gradient_1d(1)

    @given(st.integers(2, 60))
    def test_row_structure(self, n):
        M = build_gradient_1d(n).toarray()
        for row in M:
            nz = row[row != 0]
            assert nz.size <= 2 and set(nz) <= {1.0, -1.0}


class TestGradient2D:
    def test_default_size(self):
        L = build_gradient_2d(128, 128)
        assert L.shape == (32768, 16384)
        assert L.is_sparse

    def test_constant_2x2(self):
        np.testing.assert_array_equal(build_gradient_2d(2, 2).apply(np.ones(4)), np.zeros(8))

    def test_step_image_2x2(self):
        # top row zeros, bottom row ones: constant along x, a step along y
        img = np.array([[0.0, 0.0], [1.0, 1.0]])
        Lx = build_gradient_2d(2, 2).apply(image_to_vector(img))
        horizontal, vertical = Lx[:4], Lx[4:]
        np.testing.assert_array_equal(horizontal, 0.0)
        # pixel index = row + 2 * col; only rows 0 have a vertical neighbour
        np.testing.assert_array_equal(vertical, [1.0, 0.0, 1.0, 0.0])

    @pytest.mark.parametrize("n_x,n_y", [(2, 2), (3, 5), (6, 4)])
    def test_matches_pixel_loop(self, n_x, n_y):
        np.testing.assert_array_equal(
            build_gradient_2d(n_x, n_y).toarray(), difference_matrix_2d_by_hand(n_x, n_y)
        )

    def test_too_small(self):
        with pytest.raises(ValueError):
            build_gradient_2d(1, 4)

    @given(st.integers(2, 12), st.integers(2, 12), st.floats(-5, 5))
    def test_null_space_and_rows(self, n_x, n_y, c):
        L = build_gradient_2d(n_x, n_y)
        assert L.shape == (2 * n_x * n_y, n_x * n_y)
        assert not np.any(L.apply(np.full(n_x * n_y, c)))
        M = L.toarray()
        assert np.all(np.count_nonzero(M, axis=1) <= 2)
        assert set(np.unique(M)) <= {-1.0, 0.0, 1.0}


# ---------------------------------------------------------------------------
# blur


class TestGaussianBlur:
    def test_default_halfwidth(self):
        assert default_blur_halfwidth(2.0) == 8
        assert default_blur_halfwidth(1.1) == 5

    def test_degenerate_is_identity(self):
        A = build_gaussian_blur(50, 1e-6, kernel_halfwidth=1)
        np.testing.assert_allclose(A.toarray(), np.eye(50), atol=1e-9)

    @given(st.integers(5, 120), st.floats(0.3, 10.0))
    def test_rows_sum_to_one(self, n, sigma):
        sums = build_gaussian_blur(n, sigma).apply(np.ones(n))
        np.testing.assert_allclose(sums, 1.0, atol=1e-12)

    def test_spike_response(self):
        n, sigma, hw = 200, 2.0, 8
        A = build_gaussian_blur(n, sigma, hw)
        spike = np.zeros(n)
        spike[100] = 1.0
        out = A.apply(spike)
        k = np.arange(-hw, hw + 1)
        expected = np.exp(-(k**2) / (2 * sigma**2)) / np.exp(-(k**2) / (2 * sigma**2)).sum()
        np.testing.assert_allclose(out[100 - hw : 100 + hw + 1], expected, rtol=1e-12)
        np.testing.assert_allclose(out[100 - hw : 100], out[101 : 101 + hw][::-1], rtol=1e-12)
        assert np.argmax(out) == 100
        assert not np.any(out[: 100 - hw]) and not np.any(out[101 + hw :])

    def test_rows_match_entrywise_oracle(self):
        n, sigma, hw = 40, 3.0, 12
        M = build_gaussian_blur(n, sigma, hw).toarray()
        for i in (0, 5, 20, 39):
            np.testing.assert_allclose(M[i], gaussian_row(n, i, sigma, hw), rtol=1e-13, atol=1e-16)

    @given(st.floats(0.5, 6.0), st.data())
    def test_mass_conserved_away_from_ends(self, sigma, data):
        # with row normalization, column sums are one only for columns at
        # least 2 * halfwidth from the ends
        n = 160
        hw = default_blur_halfwidth(sigma)
        lo, hi = 2 * hw, n - 2 * hw
        x = np.zeros(n)
        vals = data.draw(st.lists(st.floats(0, 10), min_size=hi - lo, max_size=hi - lo))
        x[lo:hi] = vals
        A = build_gaussian_blur(n, sigma)
        total = x.sum()
        assert abs(A.apply(x).sum() - total) <= 1e-10 * max(total, 1e-300)

    def test_bad_sigma(self):
        with pytest.raises(ValueError):
            build_gaussian_blur(10, 0.0)
        with pytest.raises(ValueError):
            build_gaussian_blur(10, 1.0, kernel_halfwidth=0)


# ---------------------------------------------------------------------------
# fan-beam projector


class TestRayTracing:
    def test_horizontal_center_row(self):
        # a horizontal ray along the centre of row n/2 - 1 (just above y = 0)
        n = 8
        idx, seg = ray_pixel_intersections(n, (-10.0, 0.5), (10.0, 0.5))
        assert seg.sum() == pytest.approx(n)
        rows = idx % n
        assert np.all(rows == n // 2 - 1)
        np.testing.assert_allclose(seg, 1.0)

    def test_miss(self):
        idx, seg = ray_pixel_intersections(4, (-10.0, 3.0), (10.0, 3.0))
        assert idx.size == 0 and seg.size == 0

    def test_diagonal_length(self):
        n = 6
        idx, seg = ray_pixel_intersections(n, (-5.0, -5.0), (5.0, 5.0))
        assert seg.sum() == pytest.approx(n * math.sqrt(2.0))
        # the main anti-diagonal of the image (bottom-left to top-right)
        assert sorted(idx.tolist()) == sorted((n - 1 - c) + n * c for c in range(n))

    @pytest.mark.parametrize(
        "start,end",
        [((-7.0, -2.3), (6.0, 4.1)), ((1.3, -9.0), (-0.7, 9.0)), ((-9.0, 1.7), (9.0, -2.9))],
    )
    def test_against_sampling(self, start, end):
        n = 8
        idx, seg = ray_pixel_intersections(n, start, end)
        exact = np.zeros(n * n)
        np.add.at(exact, idx, seg)
        approx = sampled_chord_lengths(n, start, end)
        np.testing.assert_allclose(exact, approx, atol=2e-3)

    def test_fan_geometry(self):
        n = 16
        rays = list(fanbeam_rays(n, [0.0, 90.0], 5))
        assert len(rays) == 10
        for src, _ in rays:
            assert np.hypot(*src) == pytest.approx(n)
        # the edge rays of the fan are tangent to the circumscribed circle
        src, end = rays[0]
        d = (end - src) / np.linalg.norm(end - src)
        dist = abs(src[0] * d[1] - src[1] * d[0])
        assert dist == pytest.approx(n / math.sqrt(2.0))


class TestRadon:
    def test_experiment_shapes(self):
        A2 = build_radon_fanbeam(128, np.linspace(0, 180, 30, endpoint=False), 181)
        assert A2.shape == (5430, 16384)
        A3 = build_radon_fanbeam(64, np.linspace(0, 60, 60), 91)
        assert A3.shape == (5460, 4096)

    def test_positive_and_bounded(self):
        n = 16
        A = build_radon_fanbeam(n, np.linspace(0, 180, 12, endpoint=False), 31)
        assert A.is_sparse
        assert np.all(A.matrix.data >= 0)
        assert A.apply(np.ones(n * n)).max() <= n * math.sqrt(2.0) + 1e-12

    def test_rows_of_central_ray(self):
        n = 10
        A = build_radon_fanbeam(n, [0.0], 3)
        # middle detector is the central horizontal ray along y = 0, on a pixel edge
        assert A.apply(np.ones(n * n))[1] == pytest.approx(n)

    def test_tuple_grid_and_errors(self):
        assert build_radon_fanbeam((4, 4), [0.0], 3).shape == (3, 16)
        with pytest.raises(ValueError):
            build_radon_fanbeam(4, [], 3)
        with pytest.raises(ValueError):
            build_radon_fanbeam((4, 5), [0.0], 3)
        with pytest.raises(ValueError):
            build_radon_fanbeam(4, [0.0], 0)

    def test_adjointness(self, rng):
        A = build_radon_fanbeam(16, np.linspace(0, 60, 9), 21)
        assert _adjoint_gap(A, rng) <= 1e-12

    def test_dense_sparse_small(self, rng):
        A = build_radon_fanbeam(4, np.linspace(0, 180, 4, endpoint=False), 5)
        D = A.to_dense()
        x, y = rng.standard_normal(16), rng.standard_normal(20)
        np.testing.assert_allclose(A.apply(x), D.apply(x), atol=1e-14)
        np.testing.assert_allclose(A.apply_transpose(y), D.apply_transpose(y), atol=1e-14)


@pytest.mark.parametrize(
    "factory",
    [
        lambda: build_gradient_1d(50),
        lambda: build_gradient_2d(7, 9),
        lambda: build_gaussian_blur(80, 2.5),
        lambda: build_gaussian_blur(600, 1.5),
    ],
    ids=["grad1d", "grad2d", "blur-dense", "blur-sparse"],
)
def test_adjointness(factory, rng):
    assert _adjoint_gap(factory(), rng) <= 1e-12


def test_vectorization_roundtrip(rng):
    img = rng.standard_normal((3, 5))
    v = image_to_vector(img)
    # column-major: consecutive entries walk down a column
    np.testing.assert_array_equal(v[:3], img[:, 0])
    np.testing.assert_array_equal(vector_to_image(v, 5, 3), img)
