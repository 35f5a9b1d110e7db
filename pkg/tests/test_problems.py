import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from crgks.operators import build_gradient_1d, build_gradient_2d, vector_to_image
from crgks.problems import (
    EXPERIMENTS,
    add_noise,
    make_experiment,
    phantom_layered,
    phantom_piecewise_1d,
    phantom_shepp_logan,
    rng,
)


class TestPiecewise:
    def test_length_and_determinism(self):
        x = phantom_piecewise_1d(200)
        assert x.shape == (200,)
        np.testing.assert_array_equal(x, phantom_piecewise_1d(200))

    def test_canonical_plateaus(self):
        x = phantom_piecewise_1d(200)
        assert x[0] == 0.0 and x[40] == 1.0 and x[80] == 0.4 and x[120] == 1.6 and x[150] == 0.2
        assert x[-1] == 0.0

    @given(st.integers(20, 500))
    def test_sparse_gradient(self, n):
        x = phantom_piecewise_1d(n)
        jumps = np.abs(np.diff(x))
        nz = jumps[jumps > 0]
        assert np.count_nonzero(build_gradient_1d(n).apply(x)) == nz.size
        assert len(np.unique(x)) >= 4
        assert nz.max() / nz.min() >= 3

    def test_too_short(self):
        with pytest.raises(ValueError):
            phantom_piecewise_1d(10)


class TestSheppLogan:
    def test_size(self):
        assert phantom_shepp_logan(128).shape == (16384,)

    def test_centre_and_corners(self):
        n = 64
        img = vector_to_image(phantom_shepp_logan(n), n, n)
        assert img[n // 2, n // 2] > 0
        assert img[0, 0] == img[0, -1] == img[-1, 0] == img[-1, -1] == 0.0
        assert img.min() >= 0.0 and img.max() <= 1.0

    def test_top_down_orientation(self):
        # the +0.1 ellipse centred at y = 0.35 lies in the upper half (row 0 on top)
        n = 128
        img = vector_to_image(phantom_shepp_logan(n), n, n)
        upper, lower = img[41, 64], img[86, 64]
        assert upper == pytest.approx(0.3) and lower == pytest.approx(0.2)
        assert img[2, n // 2] == 0.0

    def test_too_small(self):
        with pytest.raises(ValueError):
            phantom_shepp_logan(8)


class TestLayered:
    def test_bands(self):
        n = 64
        x = phantom_layered(n)
        np.testing.assert_array_equal(x, phantom_layered(n))
        values = np.unique(x)
        assert 3 <= values.size <= 5
        img = vector_to_image(x, n, n)
        # oblique interfaces: the band boundary moves between the left and right edge
        left = np.flatnonzero(np.diff(img[:, 0]))
        right = np.flatnonzero(np.diff(img[:, -1]))
        assert left.size == right.size and np.any(left != right)

    def test_piecewise_constant(self):
        n = 32
        L = build_gradient_2d(n, n)
        Lx = L.apply(phantom_layered(n))
        assert np.count_nonzero(Lx) < 0.15 * Lx.size


@pytest.mark.parametrize("name", ["exp1", "exp3"])
def test_sparse_gradient_under_five_percent(name):
    P = make_experiment(name)
    Lx = P.L.apply(P.x_true)
    assert np.count_nonzero(Lx) < 0.05 * Lx.size


class TestNoise:
    def test_exact_level(self):
        clean = np.linspace(1, 2, 50)
        b, delta = add_noise(clean, 0.01, 3)
        assert np.linalg.norm(b - clean) == pytest.approx(delta, rel=1e-12)
        assert delta == pytest.approx(0.01 * np.linalg.norm(clean), rel=1e-14)

    def test_seeded(self):
        clean = np.ones(10)
        np.testing.assert_array_equal(add_noise(clean, 0.1, 7)[0], add_noise(clean, 0.1, 7)[0])
        assert not np.array_equal(add_noise(clean, 0.1, 7)[0], add_noise(clean, 0.1, 8)[0])

    def test_pcg64(self):
        assert isinstance(rng(0).bit_generator, np.random.PCG64)
        expected = np.random.Generator(np.random.PCG64(5)).standard_normal(3)
        np.testing.assert_array_equal(rng(5).standard_normal(3), expected)

    def test_zero_level_and_errors(self):
        b, delta = add_noise(np.ones(4), 0.0, 0)
        assert delta == 0.0 and np.array_equal(b, np.ones(4))
        with pytest.raises(ValueError):
            add_noise(np.ones(4), -0.1, 0)
        with pytest.raises(ValueError):
            add_noise(np.zeros(4), 0.1, 0)


class TestExperiments:
    @pytest.mark.parametrize(
        "name,scale,shape",
        [("exp1", None, (200, 200)), ("exp2", 32, (5430, 1024)), ("exp3", 32, (5460, 1024))],
    )
    def test_instances(self, name, scale, shape):
        P = make_experiment(name, scale, seed=1)
        assert P.A.shape == shape
        assert P.L.cols == P.A.cols
        assert np.linalg.norm(P.b - P.A.apply(P.x_true)) == pytest.approx(P.delta, rel=1e-10)
        assert P.noise_level == pytest.approx(P.delta / np.linalg.norm(P.A.apply(P.x_true)), rel=1e-10)
        assert P.rre(P.x_true) == 0.0

    def test_noise_levels(self):
        assert make_experiment("exp1").noise_level == 0.01
        assert make_experiment("exp2", 32).noise_level == 0.01
        assert make_experiment("exp3", 32).noise_level == 0.005

    def test_default_scale_ct(self):
        P = make_experiment("exp3")
        assert P.A.shape == (5460, 4096) and P.image_shape == (64, 64) and P.data_shape == (60, 91)

    def test_same_seed_same_data(self):
        np.testing.assert_array_equal(make_experiment("exp1", seed=4).b, make_experiment("exp1", seed=4).b)

    def test_unknown(self):
        with pytest.raises(ValueError):
            make_experiment("exp9")
        with pytest.raises(ValueError):
            make_experiment("exp2", scale=4)
        assert EXPERIMENTS == ("exp1", "exp2", "exp3")
