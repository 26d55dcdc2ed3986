import math

import numpy as np
import pytest

from conftest import cornell_diffuse_path, quad_path, surface
from light_path import Path, camera_vertex, eval_contribution, geometry_term, path_pdf, trace_eye_subpath
from sampling_core import RandomSequence, luminance


def test_direct_view_of_the_light(single_quad):
    path = quad_path(single_quad)
    contribution = eval_contribution(single_quad, path)
    camera = single_quad.camera
    # W_e on the axis times G = 1 / 9 times unit radiance
    expected = camera.pixel_count / camera.image_area / 9.0
    assert np.allclose(contribution.f, expected)
    assert contribution.pi == pytest.approx(expected)
    assert contribution.raster == pytest.approx((0.5, 0.5))


def test_diffuse_path_contribution_by_hand(cornell):
    path = cornell_diffuse_path(cornell)
    camera_v, floor, light = path.vertices
    camera = cornell.camera
    albedo = cornell.material(0).color
    radiance = cornell.emitters[10]

    primary = path.direction(1)
    expected = (camera.importance(primary)
                * geometry_term(cornell, camera_v, floor)
                * albedo / math.pi
                * geometry_term(cornell, floor, light)
                * radiance)
    contribution = eval_contribution(cornell, path)
    assert np.allclose(contribution.f, expected, rtol=1e-12)
    assert contribution.pi == pytest.approx(luminance(expected))


def test_emitter_in_the_middle_of_a_path_contributes_nothing(cornell):
    light = surface(cornell, (0.1, 0.99, -0.05), 10, 3, emitter=True, normal=(0.0, -1.0, 0.0))
    floor = surface(cornell, (0.0, -1.0, 0.0), 0, 0, normal=(0.0, -1.0, 0.0))
    path = Path((camera_vertex(cornell), light, floor))
    assert eval_contribution(cornell, path).pi == 0.0


def test_path_ending_on_a_non_emitter_contributes_nothing(cornell):
    floor = surface(cornell, (0.0, -1.0, 0.0), 0, 0, normal=(0.0, -1.0, 0.0))
    back = surface(cornell, (0.0, 0.0, -1.0), 4, 0, normal=(0.0, 0.0, 1.0))
    assert eval_contribution(cornell, Path((camera_vertex(cornell), floor, back))).pi == 0.0


def test_back_of_the_light_does_not_emit(cornell):
    # Ceiling point above the light's back face, joined through the light panel
    light = surface(cornell, (0.1, 0.99, -0.05), 10, 3, emitter=True, normal=(0.0, -1.0, 0.0))
    above = surface(cornell, (0.5, 1.0, 0.5), 2, 0, normal=(0.0, -1.0, 0.0))
    path = Path((camera_vertex(cornell), above, light))
    assert eval_contribution(cornell, path).pi == 0.0


def test_occluded_segment_contributes_nothing(mirror_box):
    floor = surface(mirror_box, (-0.45, -1.0, -0.35), 0, 0, normal=(0.0, -1.0, 0.0))
    light = surface(mirror_box, (0.1, 0.99, -0.05), 10, 3, emitter=True, normal=(0.0, -1.0, 0.0))
    # The chrome sphere sits directly above this floor point
    assert eval_contribution(mirror_box, Path((camera_vertex(mirror_box), floor, light))).pi == 0.0


@pytest.mark.parametrize("fixture", ['cornell', 'mirror_box'])
def test_path_pdf_matches_the_tracer(fixture, request):
    scene = request.getfixturevalue(fixture)
    rng = RandomSequence(21)
    checked = 0
    for _ in range(400):
        subpath = trace_eye_subpath(scene, rng, 8)
        if not subpath.reached_emitter:
            continue
        path = subpath.to_path()
        assert path_pdf(scene, path) == pytest.approx(subpath.pdf, rel=1e-9)
        checked += 1
    assert checked > 5


def test_traced_paths_carry_their_specular_events(mirror_box):
    rng = RandomSequence(13)
    specular_paths = 0
    for _ in range(3000):
        subpath = trace_eye_subpath(mirror_box, rng, 8)
        if not subpath.reached_emitter:
            continue
        path = subpath.to_path()
        for vertex in path.vertices[1:-1]:
            if vertex.is_specular:
                assert vertex.event in ('reflect', 'transmit')
        if any(path.specular_signature()):
            specular_paths += 1
            assert eval_contribution(mirror_box, path).pi >= 0.0
    assert specular_paths > 0


def test_max_vertices_stops_the_walk(cornell):
    rng = RandomSequence(1)
    for _ in range(50):
        subpath = trace_eye_subpath(cornell, rng, 3)
        assert len(subpath.vertices) <= 3
    assert trace_eye_subpath(cornell, rng, 1).termination == 'camera-only'
    with pytest.raises(ValueError):
        trace_eye_subpath(cornell, rng, 0)


def test_large_step_estimator_of_one_pixel_is_the_radiance(single_quad):
    """f / p of a direct hit equals W * H * L_e"""
    rng = RandomSequence(3)
    for _ in range(50):
        subpath = trace_eye_subpath(single_quad, rng, 2)
        if subpath.reached_emitter:
            path = subpath.to_path()
            ratio = eval_contribution(single_quad, path).pi / path_pdf(single_quad, path)
            assert ratio == pytest.approx(single_quad.camera.pixel_count)


def test_contribution_is_linear_in_emission(cornell):
    path = cornell_diffuse_path(cornell)
    base = eval_contribution(cornell, path)
    doubled = eval_contribution(cornell.scaled_emission(2.0), path)
    assert base.pi > 0.0
    assert doubled.pi == 2.0 * base.pi
    assert np.array_equal(doubled.f, 2.0 * base.f)
    assert path_pdf(cornell.scaled_emission(2.0), path) == path_pdf(cornell, path)
