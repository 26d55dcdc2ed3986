"""
Sampling core
Seedable random streams, the truncated-normal angular kernel, direction
frames and the canonical-space maps rp(omega) and cy(omega)
"""

import math
from dataclasses import dataclass
from typing import NamedTuple, Optional, Tuple

import numpy as np
from scipy.special import ndtr, ndtri

# Uniforms are drawn from the generator in blocks of this size
_BLOCK = 4096
_SMALLEST_POSITIVE = float(np.nextafter(0.0, 1.0))


class RandomSequence:
    """Counter-based random stream keyed by (seed, stream id).

    Each chain owns one instance; instances are never shared between threads.
    """

    def __init__(self, seed: int, stream: int = 0):
        if seed < 0 or stream < 0:
            raise ValueError("seed and stream must be non-negative")
        self.seed = int(seed) & 0xFFFFFFFFFFFFFFFF
        self.stream = int(stream) & 0xFFFFFFFFFFFFFFFF
        bit_generator = np.random.Philox(key=(self.stream << 64) | self.seed)
        self._generator = np.random.Generator(bit_generator)
        self._block = self._generator.random(_BLOCK)
        self._cursor = 0

    def uniform(self) -> float:
        """Next uniform in [0, 1)"""
        if self._cursor == _BLOCK:
            self._block = self._generator.random(_BLOCK)
            self._cursor = 0
        value = self._block[self._cursor]
        self._cursor += 1
        return float(value)

    def uniform2(self) -> Tuple[float, float]:
        return self.uniform(), self.uniform()

    def __repr__(self):
        return f"RandomSequence(seed={self.seed}, stream={self.stream})"


class CanonicalPoint2(NamedTuple):
    u: float
    v: float


@dataclass(frozen=True)
class AngularKernel:
    """Truncated normal on [-pi, pi] for the polar offset of a perturbed direction"""
    sigma: float

    def __post_init__(self):
        if not self.sigma > 0 or not math.isfinite(self.sigma):
            raise ValueError(f"sigma must be positive and finite, got {self.sigma}")

    @property
    def mass(self) -> float:
        """Normal probability mass inside the truncation window"""
        return float(ndtr(math.pi / self.sigma) - ndtr(-math.pi / self.sigma))


def truncated_normal_sample(kernel: AngularKernel, rng: RandomSequence) -> float:
    """Polar offset in [-pi, pi] by inverse-CDF sampling"""
    lower = float(ndtr(-math.pi / kernel.sigma))
    upper = float(ndtr(math.pi / kernel.sigma))
    target = lower + rng.uniform() * (upper - lower)
    if target <= 0.0:
        target = _SMALLEST_POSITIVE
    theta = kernel.sigma * float(ndtri(target))
    return min(max(theta, -math.pi), math.pi)


def truncated_normal_pdf(kernel: AngularKernel, theta: float) -> float:
    """Density per radian; zero outside [-pi, pi]"""
    if abs(theta) > math.pi:
        return 0.0
    z = theta / kernel.sigma
    phi = math.exp(-0.5 * z * z) / math.sqrt(2.0 * math.pi)
    return phi / (kernel.sigma * kernel.mass)


def orthonormal_frame(omega: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Two unit tangents completing omega to a right-handed basis (branchless construction)"""
    x, y, z = float(omega[0]), float(omega[1]), float(omega[2])
    sign = math.copysign(1.0, z)
    a = -1.0 / (sign + z)
    b = x * y * a
    tangent = np.array([1.0 + sign * x * x * a, sign * b, -sign * x])
    bitangent = np.array([b, sign + y * y * a, -y])
    return tangent, bitangent


def normalize(vector: np.ndarray) -> np.ndarray:
    return vector / math.sqrt(float(vector @ vector))


def angle_between(a: np.ndarray, b: np.ndarray) -> float:
    """Angle between unit vectors; symmetric in its arguments and accurate near 0 and pi"""
    diff = a - b
    total = a + b
    return 2.0 * math.atan2(math.sqrt(float(diff @ diff)), math.sqrt(float(total @ total)))


def perturb_direction(omega: np.ndarray, kernel: AngularKernel, rng: RandomSequence) -> np.ndarray:
    """Rotate omega by a truncated-normal polar offset around a uniform azimuth"""
    theta = truncated_normal_sample(kernel, rng)
    phi = 2.0 * math.pi * rng.uniform()
    tangent, bitangent = orthonormal_frame(omega)
    sin_theta = math.sin(theta)
    result = (math.cos(theta) * omega
              + sin_theta * math.cos(phi) * tangent
              + sin_theta * math.sin(phi) * bitangent)
    return normalize(result)


def direction_pdf(kernel: AngularKernel, omega: np.ndarray, omega_new: np.ndarray) -> float:
    """Solid-angle density of proposing omega_new from omega.

    The signed offset theta and -theta land on the same direction, so the polar
    density is doubled and spread over the azimuth ring of length 2*pi*sin(t).
    """
    t = angle_between(omega, omega_new)
    sin_t = max(math.sin(t), 1e-15)
    return truncated_normal_pdf(kernel, t) / (math.pi * sin_t)


def raster_position(omega: np.ndarray, camera) -> Optional[CanonicalPoint2]:
    """Invert the pinhole primary-ray map; None when omega leaves the frustum"""
    forward_component = float(omega @ camera.forward)
    if forward_component <= 0.0:
        return None
    x = float(omega @ camera.right) / forward_component
    y = float(omega @ camera.up) / forward_component
    u = 0.5 * (x / (camera.tan_half_fov * camera.aspect) + 1.0)
    v = 0.5 * (y / camera.tan_half_fov + 1.0)
    if not (0.0 <= u <= 1.0 and 0.0 <= v <= 1.0):
        return None
    return CanonicalPoint2(u, v)


def cylindrical_coords(omega: np.ndarray) -> CanonicalPoint2:
    """Equal-area (azimuth, z) projection of a direction onto [0,1]^2"""
    azimuth = math.atan2(float(omega[1]), float(omega[0]))
    u = (azimuth / (2.0 * math.pi)) % 1.0
    v = 0.5 * (min(max(float(omega[2]), -1.0), 1.0) + 1.0)
    return CanonicalPoint2(u, v)


def luminance(rgb) -> float:
    """Rec.709 linear luminance"""
    return 0.2126 * float(rgb[0]) + 0.7152 * float(rgb[1]) + 0.0722 * float(rgb[2])


def sample_cosine_hemisphere(normal: np.ndarray, rng: RandomSequence) -> np.ndarray:
    u1, u2 = rng.uniform2()
    radius = math.sqrt(u1)
    phi = 2.0 * math.pi * u2
    tangent, bitangent = orthonormal_frame(normal)
    local_z = math.sqrt(max(0.0, 1.0 - u1))
    return normalize(radius * math.cos(phi) * tangent + radius * math.sin(phi) * bitangent + local_z * normal)


def sample_uniform_sphere(rng: RandomSequence) -> np.ndarray:
    z = 1.0 - 2.0 * rng.uniform()
    r = math.sqrt(max(0.0, 1.0 - z * z))
    phi = 2.0 * math.pi * rng.uniform()
    return np.array([r * math.cos(phi), r * math.sin(phi), z])
