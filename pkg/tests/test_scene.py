import math

import numpy as np
import pytest
from scipy import stats

from conftest import SCENE_DIR, scene_path
from sampling_core import RandomSequence, cylindrical_coords, normalize, sample_uniform_sphere
from scene import (DIELECTRIC, MIRROR, REFLECT, TRANSMIT, Material, SceneParseError, bsdf_eval, bsdf_pdf,
                   bsdf_sample, fresnel_dielectric, load_scene, parse_scene, specular_response)

CAMERA = "camera 0 0 0  0 0 -1  0 1 0  40\n"


@pytest.mark.parametrize("name", ['single_quad.scn', 'cornell_box.scn', 'mirror_box.scn', 'desk.scn'])
def test_bundled_scenes_parse(name):
    scene = load_scene(scene_path(name))
    assert scene.emitters
    assert scene.geometry_count > 0


def test_missing_scene_file():
    with pytest.raises(FileNotFoundError, match="nowhere.scn"):
        load_scene(SCENE_DIR + "/nowhere.scn")


@pytest.mark.parametrize("text, message, line", [
    (CAMERA + "material m diffuse 0.5 0.5\n", "takes 3 values", 2),
    (CAMERA + "material m plastic 0.5 0.5 0.5\n", "unknown material kind", 2),
    (CAMERA + "material m diffuse 0.5 0.5 1.5\n", r"\[0, 1\]", 2),
    (CAMERA + "sphere 0 0 -3 1 chalk\n", "unknown material", 2),
    (CAMERA + "material m diffuse .5 .5 .5\ntri 0 0 0 1 1 1 2 2 2 m\n", "degenerate", 3),
    (CAMERA + "material m diffuse .5 .5 .5\nsphere 0 0 -3 1 m\nemitter 1 1 1 1\n", "emitter index 1", 4),
    (CAMERA + "material m diffuse .5 .5 .5\nsphere 0 0 -3 x m\n", "expected numbers", 3),
    (CAMERA + "material m diffuse .5 .5 .5\nsphere 0 0 -3 1 m\nemitter 0 1 -1 1\n", ">= 0", 4),
    (CAMERA + "cube 1 2 3\n", "unknown record", 2),
    (CAMERA + CAMERA, "duplicate camera", 2),
    (CAMERA + "material m dielectric 0.9 1 1 1\n", "ior", 2),
])
def test_parse_errors_name_the_line(text, message, line):
    with pytest.raises(SceneParseError, match=message) as info:
        parse_scene(text, source="bad.scn")
    assert info.value.line == line
    assert f"bad.scn:{line}" in str(info.value)


def test_scene_needs_camera_and_emitter():
    body = "material m diffuse .5 .5 .5\nsphere 0 0 -3 1 m\n"
    with pytest.raises(SceneParseError, match="no camera"):
        parse_scene(body + "emitter 0 1 1 1\n")
    with pytest.raises(SceneParseError, match="no emitter"):
        parse_scene(CAMERA + body)
    assert not parse_scene(CAMERA + body, require_emitter=False).emitters


def test_intersection_finds_nearest_surface(mirror_box):
    hit = mirror_box.intersect(np.array([0.0, 0.0, 3.5]), np.array([0.0, 0.0, -1.0]))
    assert hit.position[2] == pytest.approx(-1.0)
    assert hit.geometry_id in (4, 5)

    toward_sphere = normalize(np.array([-0.45, -0.6, -0.35]) - np.array([0.0, 0.0, 3.5]))
    hit = mirror_box.intersect(np.array([0.0, 0.0, 3.5]), toward_sphere)
    assert hit.geometry_id == 12
    assert np.linalg.norm(hit.position - np.array([-0.45, -0.6, -0.35])) == pytest.approx(0.4)
    assert mirror_box.intersect(np.array([0.0, 0.0, 3.5]), np.array([0.0, 0.0, 1.0])) is None


def test_emission_is_front_face_only(cornell):
    normal = np.array([0.0, -1.0, 0.0])
    assert cornell.emitted_radiance(10, normal, np.array([0.0, -1.0, 0.0])).sum() > 0.0
    assert cornell.emitted_radiance(10, normal, np.array([0.0, 1.0, 0.0])).sum() == 0.0
    assert cornell.emitted_radiance(0, normal, np.array([0.0, -1.0, 0.0])).sum() == 0.0


def test_visibility(cornell):
    assert cornell.visible(np.array([0.0, -1.0, 0.0]), np.array([0.0, 0.99, 0.0]))
    assert not cornell.visible(np.array([0.0, -1.0, 0.0]), np.array([0.0, 2.0, 0.0]))


def test_camera_importance_and_pdf_agree_on_a_film(cornell):
    camera = cornell.camera
    axis = camera.forward
    assert camera.importance(axis) == pytest.approx(camera.pixel_count / camera.image_area)
    assert camera.direction_pdf(axis) == pytest.approx(1.0 / camera.image_area)
    assert camera.importance(-axis) == 0.0


def test_fresnel_at_normal_incidence():
    reflectance, cos_t = fresnel_dielectric(1.0, 1.0, 1.5)
    assert reflectance == pytest.approx(0.04)
    assert cos_t == pytest.approx(1.0)
    assert fresnel_dielectric(0.1, 1.5, 1.0) == (1.0, 0.0)


def test_dielectric_events_split_energy():
    glass = Material('glass', DIELECTRIC, np.ones(3), ior=1.5)
    normal = np.array([0.0, 0.0, 1.0])
    wi = normalize(np.array([0.3, 0.0, 1.0]))
    reflected = specular_response(glass, wi, normal, REFLECT)
    transmitted = specular_response(glass, wi, normal, TRANSMIT)
    assert reflected[2] + transmitted[2] == pytest.approx(1.0)
    assert transmitted[0][2] < 0.0
    # Snell: sin_t = sin_i / 1.5
    sin_i = math.hypot(wi[0], wi[1])
    assert math.hypot(transmitted[0][0], transmitted[0][1]) == pytest.approx(sin_i / 1.5)


def test_total_internal_reflection_has_no_transmit_event():
    glass = Material('glass', DIELECTRIC, np.ones(3), ior=1.5)
    wi = normalize(np.array([0.95, 0.0, -0.2]))
    assert specular_response(glass, wi, np.array([0.0, 0.0, 1.0]), TRANSMIT) is None


def test_mirror_reflects_on_either_side():
    mirror = Material('m', MIRROR, np.ones(3))
    wi = normalize(np.array([0.5, 0.0, -1.0]))
    direction, factor, probability = specular_response(mirror, wi, np.array([0.0, 0.0, 1.0]), REFLECT)
    assert np.allclose(direction, normalize(np.array([-0.5, 0.0, -1.0])))
    assert probability == 1.0
    assert specular_response(mirror, wi, np.array([0.0, 0.0, 1.0]), TRANSMIT) is None


@pytest.mark.parametrize("kind, extra", [('diffuse', {}), ('glossy', {'exponent': 20.0})])
def test_sampled_directions_match_pdf(kind, extra):
    material = Material('x', kind, np.full(3, 0.5), **extra)
    normal = np.array([0.0, 0.0, 1.0])
    wi = normalize(np.array([0.2, 0.1, 1.0]))
    rng = RandomSequence(4)
    for _ in range(200):
        sample = bsdf_sample(material, wi, normal, rng)
        if sample is None:
            continue
        assert sample.pdf == pytest.approx(bsdf_pdf(material, wi, sample.direction, normal))
        expected = bsdf_eval(material, wi, sample.direction, normal) * sample.direction[2] / sample.pdf
        assert np.allclose(sample.weight, expected)


def test_glossy_pdf_integrates_to_at_most_one():
    material = Material('g', 'glossy', np.full(3, 0.5), exponent=10.0)
    normal = np.array([0.0, 0.0, 1.0])
    wi = np.array([0.0, 0.0, 1.0])
    rng = RandomSequence(8)
    directions = [sample_uniform_sphere(rng) for _ in range(40_000)]
    estimate = np.mean([bsdf_pdf(material, wi, d, normal) for d in directions]) * 4.0 * math.pi
    assert estimate == pytest.approx(1.0, abs=0.1)


def test_with_film_and_scaled_emission_leave_the_original_alone(cornell):
    bigger = cornell.with_film(32, 8)
    assert bigger.camera.aspect == 4.0
    assert cornell.camera.width == 16
    brighter = cornell.scaled_emission(2.0)
    assert np.allclose(brighter.emitters[10], 2.0 * cornell.emitters[10])


UP = np.array([0.0, 0.0, 1.0])
BINS = 20
MATERIALS = [Material('d', 'diffuse', np.full(3, 0.8)),
             Material('g', 'glossy', np.full(3, 0.8), exponent=10.0),
             Material('s', 'glossy', np.full(3, 0.8), exponent=100.0)]


def from_cylindrical(u, v):
    z = 2.0 * v - 1.0
    r = math.sqrt(max(0.0, 1.0 - z * z))
    phi = 2.0 * math.pi * u
    return np.array([r * math.cos(phi), r * math.sin(phi), z])


def bin_masses(material, wi, sub=8):
    """pdf integrated over each cell of the equal-area (azimuth, z) grid, midpoint rule"""
    offsets = (np.arange(sub) + 0.5) / sub
    cell_area = 4.0 * math.pi / (BINS * BINS)
    masses = np.zeros((BINS, BINS))
    for i in range(BINS):
        for j in range(BINS):
            total = sum(bsdf_pdf(material, wi, from_cylindrical((i + a) / BINS, (j + b) / BINS), UP)
                        for a in offsets for b in offsets)
            masses[i, j] = total / (sub * sub) * cell_area
    return masses


@pytest.mark.parametrize("material", MATERIALS[:2], ids=['diffuse', 'glossy'])
def test_sampler_histogram_matches_pdf(material):
    wi = normalize(np.array([0.4, 0.1, 1.0]))
    draws = 100_000
    rng = RandomSequence(21)
    observed = np.zeros((BINS, BINS))
    failures = 0
    for _ in range(draws):
        sample = bsdf_sample(material, wi, UP, rng)
        if sample is None:
            failures += 1
            continue
        point = cylindrical_coords(sample.direction)
        observed[min(int(point.u * BINS), BINS - 1), min(int(point.v * BINS), BINS - 1)] += 1

    expected = draws * bin_masses(material, wi)
    assert expected.sum() <= draws * 1.001
    kept = expected >= 5.0
    rest_expected = draws - expected[kept].sum()
    rest_observed = observed[~kept].sum() + failures
    f_obs = list(observed[kept])
    f_exp = list(expected[kept])
    if rest_expected >= 5.0:
        f_obs.append(rest_observed)
        f_exp.append(rest_expected)
    else:
        assert rest_observed <= 20
    f_obs = np.array(f_obs)
    f_exp = np.array(f_exp) * f_obs.sum() / np.sum(f_exp)
    assert stats.chisquare(f_obs, f_exp).pvalue > 0.01


@pytest.mark.parametrize("material", MATERIALS, ids=['diffuse', 'glossy', 'sharp'])
def test_bsdf_reciprocity(material):
    rng = RandomSequence(5)
    for _ in range(500):
        wi = sample_uniform_sphere(rng)
        wo = sample_uniform_sphere(rng)
        forward = bsdf_eval(material, wi, wo, UP)
        backward = bsdf_eval(material, wo, wi, UP)
        assert np.allclose(forward, backward, rtol=1e-9, atol=1e-12)
    # mirrored pair on the glossy lobe axis is non-zero
    wi = normalize(np.array([0.3, 0.0, 1.0]))
    wo = normalize(np.array([-0.3, 0.0, 1.0]))
    assert bsdf_eval(material, wi, wo, UP)[0] > 0.0
    assert np.allclose(bsdf_eval(material, wi, wo, UP), bsdf_eval(material, wo, wi, UP), rtol=1e-9)


@pytest.mark.parametrize("material", MATERIALS, ids=['diffuse', 'glossy', 'sharp'])
@pytest.mark.parametrize("cos_i", [1.0, 0.7, 0.3, 0.05])
def test_bsdf_conserves_energy(material, cos_i):
    wi = np.array([math.sqrt(1.0 - cos_i * cos_i), 0.0, cos_i])
    rng = RandomSequence(9)
    draws = 20_000
    total = np.zeros(3)
    for _ in range(draws):
        sample = bsdf_sample(material, wi, UP, rng)
        if sample is None:
            continue
        wo = sample.direction
        total += bsdf_eval(material, wi, wo, UP) * float(wo @ UP) / bsdf_pdf(material, wi, wo, UP)
    reflected = total / draws
    assert reflected.max() <= 0.8 + 0.01
    if material.kind == 'diffuse' or cos_i == 1.0:
        assert reflected == pytest.approx(np.full(3, 0.8), abs=0.01)
