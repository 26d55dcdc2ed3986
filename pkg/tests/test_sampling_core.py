import math

import numpy as np
import pytest
from scipy import integrate, stats

from sampling_core import (AngularKernel, RandomSequence, angle_between, cylindrical_coords, direction_pdf,
                           normalize, orthonormal_frame, perturb_direction, raster_position,
                           sample_uniform_sphere, truncated_normal_pdf, truncated_normal_sample)


def draw(rng, count):
    return np.array([rng.uniform() for _ in range(count)])


def test_random_sequence_is_reproducible_per_stream():
    a = draw(RandomSequence(7, 1), 5000)
    b = draw(RandomSequence(7, 1), 5000)
    c = draw(RandomSequence(7, 2), 5000)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)
    assert a.min() >= 0.0 and a.max() < 1.0


def test_random_sequence_rejects_negative_seed():
    with pytest.raises(ValueError):
        RandomSequence(-1)


@pytest.mark.parametrize("sigma", [1e-3, 0.1, 1.0, 10.0])
def test_truncated_normal_pdf_integrates_to_one(sigma):
    kernel = AngularKernel(sigma)
    bound = min(math.pi, 40.0 * sigma)
    total, _ = integrate.quad(lambda t: truncated_normal_pdf(kernel, t), -bound, bound,
                              points=[0.0], limit=200, epsabs=1e-13, epsrel=1e-12)
    assert abs(total - 1.0) < 1e-9


def test_truncated_normal_pdf_is_zero_outside_window():
    kernel = AngularKernel(1.0)
    assert truncated_normal_pdf(kernel, math.pi + 1e-9) == 0.0
    assert truncated_normal_pdf(kernel, -4.0) == 0.0


@pytest.mark.parametrize("sigma", [0.1, 1.0, 3.0])
def test_truncated_normal_sampler_matches_pdf(sigma):
    kernel = AngularKernel(sigma)
    rng = RandomSequence(11, 0)
    samples = np.array([truncated_normal_sample(kernel, rng) for _ in range(100_000)])
    assert np.all(np.abs(samples) <= math.pi)
    reference = stats.truncnorm(-math.pi / sigma, math.pi / sigma, scale=sigma)
    assert stats.kstest(samples, reference.cdf).pvalue > 0.01


@pytest.mark.parametrize("sigma", [0.0, -1.0, float('inf'), float('nan')])
def test_angular_kernel_rejects_bad_sigma(sigma):
    with pytest.raises(ValueError):
        AngularKernel(sigma)


def test_tiny_sigma_never_yields_minus_pi():
    kernel = AngularKernel(1e-6)
    rng = RandomSequence(1, 0)
    offsets = [truncated_normal_sample(kernel, rng) for _ in range(2000)]
    assert max(abs(t) for t in offsets) < 1e-3


@pytest.mark.parametrize("sigma", [0.05, 0.5, 2.0])
def test_direction_pdf_integrates_over_the_sphere(sigma):
    kernel = AngularKernel(sigma)
    omega = np.array([0.0, 0.0, 1.0])

    def ring(t):
        return 2.0 * math.pi * math.sin(t) * direction_pdf(kernel, omega, np.array([math.sin(t), 0.0, math.cos(t)]))

    total, _ = integrate.quad(ring, 0.0, math.pi, points=[min(sigma, 1.0)], limit=200)
    assert total == pytest.approx(1.0, abs=1e-6)


def test_direction_pdf_is_symmetric():
    kernel = AngularKernel(0.3)
    rng = RandomSequence(5)
    for _ in range(100):
        a = sample_uniform_sphere(rng)
        b = sample_uniform_sphere(rng)
        assert direction_pdf(kernel, a, b) == direction_pdf(kernel, b, a)


def test_perturbed_directions_follow_the_kernel():
    kernel = AngularKernel(0.2)
    rng = RandomSequence(9)
    omega = normalize(np.array([0.3, -0.4, 0.8]))
    angles = np.array([angle_between(omega, perturb_direction(omega, kernel, rng)) for _ in range(20_000)])
    # |theta| of a truncated normal is a half-normal at this sigma
    assert stats.kstest(angles, stats.halfnorm(scale=0.2).cdf).pvalue > 0.01


@pytest.mark.parametrize("omega", [(0, 0, 1), (0, 0, -1), (1, 0, 0), (0.2, -0.7, 0.1)])
def test_orthonormal_frame(omega):
    omega = normalize(np.array(omega, dtype=float))
    tangent, bitangent = orthonormal_frame(omega)
    basis = np.stack([tangent, bitangent, omega])
    assert np.allclose(basis @ basis.T, np.eye(3), atol=1e-12)


def test_raster_position_inverts_primary_rays(cornell):
    camera = cornell.camera
    for u, v in [(0.5, 0.5), (0.1, 0.9), (0.999, 0.001)]:
        point = raster_position(camera.primary_ray(u, v), camera)
        assert point.u == pytest.approx(u, abs=1e-12)
        assert point.v == pytest.approx(v, abs=1e-12)
    assert raster_position(-camera.forward, camera) is None
    assert raster_position(normalize(camera.forward + 5.0 * camera.right), camera) is None


def test_cylindrical_coords_are_equal_area():
    rng = RandomSequence(2)
    points = np.array([cylindrical_coords(sample_uniform_sphere(rng)) for _ in range(20_000)])
    assert points.min() >= 0.0 and points.max() <= 1.0
    counts, _, _ = np.histogram2d(points[:, 0], points[:, 1], bins=5, range=[[0, 1], [0, 1]])
    assert stats.chisquare(counts.ravel()).pvalue > 0.01
