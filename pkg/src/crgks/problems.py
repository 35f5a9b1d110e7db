"""Phantoms, calibrated noise and the three benchmark problems."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .operators import (
    GradientOperator,
    LinearOperator,
    build_gaussian_blur,
    build_gradient_1d,
    build_gradient_2d,
    build_radon_fanbeam,
    image_to_vector,
)

__all__ = [
    "InverseProblem",
    "EXPERIMENTS",
    "phantom_piecewise_1d",
    "phantom_shepp_logan",
    "phantom_layered",
    "add_noise",
    "make_experiment",
    "rng",
]

PIECEWISE_HEIGHTS = (0.0, 1.0, 0.4, 1.6, 0.2, 0.0)
PIECEWISE_FRACTIONS = (0.15, 0.20, 0.15, 0.20, 0.15, 0.15)

# modified Shepp-Logan (Toft): intensity, semi-axes a, b, centre x0, y0, angle (deg)
SHEPP_LOGAN_ELLIPSES = (
    (1.0, 0.69, 0.92, 0.0, 0.0, 0.0),
    (-0.8, 0.6624, 0.874, 0.0, -0.0184, 0.0),
    (-0.2, 0.11, 0.31, 0.22, 0.0, -18.0),
    (-0.2, 0.16, 0.41, -0.22, 0.0, 18.0),
    (0.1, 0.21, 0.25, 0.0, 0.35, 0.0),
    (0.1, 0.046, 0.046, 0.0, 0.1, 0.0),
    (0.1, 0.046, 0.046, 0.0, -0.1, 0.0),
    (0.1, 0.046, 0.023, -0.08, -0.605, 0.0),
    (0.1, 0.023, 0.023, 0.0, -0.606, 0.0),
    (0.1, 0.023, 0.046, 0.06, -0.605, 0.0),
)

# layered phantom: band intensities top to bottom, boundary heights at x = 0
# (fractions of the half-width) and a common boundary slope
LAYER_INTENSITIES = (0.3, 0.8, 0.5, 1.0)
LAYER_OFFSETS = (0.45, 0.0, -0.5)
LAYER_SLOPE = 0.25

EXPERIMENTS = ("exp1", "exp2", "exp3")

EXP1_N = 200
EXP1_SIGMA = 6.0
EXP1_NOISE = 0.01
EXP2_SIZE = 128
EXP2_ANGLES = 30
EXP2_DETECTORS = 181
EXP2_NOISE = 0.01
EXP3_SIZE = 64
EXP3_ANGLES = 60
EXP3_DETECTORS = 91
EXP3_NOISE = 0.005


def rng(seed: int) -> np.random.Generator:
    """PCG64 generator; the same seed gives the same stream on every platform."""
    return np.random.Generator(np.random.PCG64(int(seed)))


@dataclass
class InverseProblem:
    A: LinearOperator
    b: np.ndarray
    L: GradientOperator
    delta: float
    noise_level: float
    seed: int
    x_true: np.ndarray | None = None
    name: str = ""
    image_shape: tuple[int, int] | None = None
    data_shape: tuple[int, int] | None = None
    meta: dict = field(default_factory=dict)

    @property
    def clean_data(self) -> np.ndarray | None:
        if self.x_true is None:
            return None
        return self.A.apply(self.x_true)

    def rre(self, x: np.ndarray) -> float:
        if self.x_true is None:
            raise ValueError("problem has no ground truth")
        return float(np.linalg.norm(x - self.x_true) / np.linalg.norm(self.x_true))


def phantom_piecewise_1d(n: int = EXP1_N) -> np.ndarray:
    """Six-plateau step signal with jumps of sizes 1, 0.6, 1.2, 1.4 and 0.2."""
    if n < 20:
        raise ValueError("signal length must be at least 20")
    edges = np.rint(np.cumsum((0.0,) + PIECEWISE_FRACTIONS) * n).astype(int)
    x = np.empty(n)
    for h, lo, hi in zip(PIECEWISE_HEIGHTS, edges[:-1], edges[1:]):
        x[lo:hi] = h
    return x


def _pixel_centres(n: int) -> tuple[np.ndarray, np.ndarray]:
    # row 0 is the top of the image, coordinates in [-1, 1]
    c = (np.arange(n) + 0.5) / n * 2.0 - 1.0
    X, Y = np.meshgrid(c, -c)
    return X, Y


def phantom_shepp_logan(n: int = EXP2_SIZE) -> np.ndarray:
    """Vectorized ``n x n`` modified Shepp-Logan head, clipped to ``[0, 1]``."""
    if n < 16:
        raise ValueError("image size must be at least 16")
    X, Y = _pixel_centres(n)
    img = np.zeros((n, n))
    for rho, a, b, x0, y0, ang in SHEPP_LOGAN_ELLIPSES:
        t = np.deg2rad(ang)
        xr = (X - x0) * np.cos(t) + (Y - y0) * np.sin(t)
        yr = -(X - x0) * np.sin(t) + (Y - y0) * np.cos(t)
        img[(xr / a) ** 2 + (yr / b) ** 2 <= 1.0] += rho
    return image_to_vector(np.clip(img, 0.0, 1.0))


def phantom_layered(n: int = EXP3_SIZE) -> np.ndarray:
    """Vectorized ``n x n`` image of four gently dipping bands with sharp interfaces."""
    if n < 16:
        raise ValueError("image size must be at least 16")
    X, Y = _pixel_centres(n)
    img = np.full((n, n), LAYER_INTENSITIES[-1])
    # paint from the bottom up so that each band lies above its boundary
    for level, offset in zip(LAYER_INTENSITIES[-2::-1], LAYER_OFFSETS[::-1]):
        img[Y > offset + LAYER_SLOPE * X] = level
    return image_to_vector(img)


def add_noise(clean: np.ndarray, level: float, seed: int) -> tuple[np.ndarray, float]:
    """Add white Gaussian noise of norm exactly ``level * ||clean||``."""
    clean = np.asarray(clean, dtype=float)
    if level < 0:
        raise ValueError("noise level must be nonnegative")
    if level == 0:
        return clean.copy(), 0.0
    norm = float(np.linalg.norm(clean))
    if norm == 0.0:
        raise ValueError("cannot scale noise relative to a zero signal")
    g = rng(seed).standard_normal(clean.shape)
    delta = level * norm
    return clean + delta * g / np.linalg.norm(g), delta


def make_experiment(name: str, scale: int | None = None, seed: int = 0) -> InverseProblem:
    """Build ``exp1`` (1D deblurring), ``exp2`` (sparse-angle CT) or ``exp3`` (limited-angle CT).

    ``scale`` overrides the image size of the CT problems; it is ignored
    for ``exp1``, whose length is fixed at 200.
    """
    if scale is not None and scale < 16:
        raise ValueError("scale must be at least 16")
    if name == "exp1":
        n = EXP1_N
        A = build_gaussian_blur(n, EXP1_SIGMA)
        L = build_gradient_1d(n)
        x_true = phantom_piecewise_1d(n)
        level, image_shape, data_shape = EXP1_NOISE, None, None
        meta = {"sigma": EXP1_SIGMA}
    elif name == "exp2":
        n = scale or EXP2_SIZE
        angles = np.linspace(0.0, 180.0, EXP2_ANGLES, endpoint=False)
        A = build_radon_fanbeam(n, angles, EXP2_DETECTORS)
        L = build_gradient_2d(n, n)
        x_true = phantom_shepp_logan(n)
        level, image_shape = EXP2_NOISE, (n, n)
        data_shape = (EXP2_ANGLES, EXP2_DETECTORS)
        meta = {"angles_deg": angles.tolist()}
    elif name == "exp3":
        n = scale or EXP3_SIZE
        angles = np.linspace(0.0, 60.0, EXP3_ANGLES)
        A = build_radon_fanbeam(n, angles, EXP3_DETECTORS)
        L = build_gradient_2d(n, n)
        x_true = phantom_layered(n)
        level, image_shape = EXP3_NOISE, (n, n)
        data_shape = (EXP3_ANGLES, EXP3_DETECTORS)
        meta = {"angles_deg": angles.tolist()}
    else:
        raise ValueError(f"unknown experiment {name!r}; choose from {', '.join(EXPERIMENTS)}")

    b, delta = add_noise(A.apply(x_true), level, seed)
    return InverseProblem(
        A=A,
        b=b,
        L=L,
        delta=delta,
        noise_level=level,
        seed=int(seed),
        x_true=x_true,
        name=name,
        image_shape=image_shape,
        data_shape=data_shape,
        meta=meta,
    )
