import os
from dataclasses import replace

import numpy as np
import pytest

from light_path import Path, PathVertex, camera_vertex
from render_config import RenderConfig
from scene import load_scene, parse_scene

SCENE_DIR = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), 'scenes')

# Film of the small fixtures
FILM = 16


def scene_path(name):
    return os.path.join(SCENE_DIR, name)


@pytest.fixture
def single_quad():
    return load_scene(scene_path('single_quad.scn')).with_film(FILM, FILM)


@pytest.fixture
def cornell():
    return load_scene(scene_path('cornell_box.scn')).with_film(FILM, FILM)


@pytest.fixture
def mirror_box():
    return load_scene(scene_path('mirror_box.scn')).with_film(FILM, FILM)


@pytest.fixture
def small_config():
    """A render that finishes in a few seconds"""
    return RenderConfig(strategy='global', mutations=2000, b_samples=2000, width=FILM, height=FILM,
                        m_refine=500, m_split=50, n_top=4, n_bottom=4, seed=3)


@pytest.fixture
def configure(small_config):
    def make(**overrides):
        return replace(small_config, **overrides).validate()
    return make


def surface(scene, position, geometry_id, material_id, specular=False, emitter=False, normal=None):
    """Hand-built vertex; the normal defaults to the geometry's triangle normal"""
    if normal is None:
        hit = scene.intersect(np.asarray(position, dtype=float) + np.array([0.0, 0.0, 1e-3]),
                              np.array([0.0, 0.0, -1.0]))
        normal = hit.normal if hit is not None else np.array([0.0, 1.0, 0.0])
    return PathVertex(np.asarray(position, dtype=float), np.asarray(normal, dtype=float), material_id,
                      is_specular=specular, geometry_id=geometry_id, on_emitter=emitter)


def cornell_diffuse_path(scene):
    """camera -> floor -> ceiling light, all geometry of cornell_box.scn"""
    floor = surface(scene, (0.0, -1.0, 0.0), 0, 0, normal=(0.0, -1.0, 0.0))
    light = surface(scene, (0.1, 0.99, -0.05), 10, 3, emitter=True, normal=(0.0, -1.0, 0.0))
    return Path((camera_vertex(scene), floor, light))


def quad_path(scene, x=0.0, y=0.0):
    """camera -> point on the emissive quad of single_quad.scn"""
    light = surface(scene, (x, y, -3.0), 0, 0, emitter=True, normal=(0.0, 0.0, 1.0))
    return Path((camera_vertex(scene), light))


def kinds_path(scene, kinds):
    """Straight-line path whose interior vertices carry the given kinds ('d' diffuse, 's' specular)"""
    vertices = [camera_vertex(scene)]
    for i, kind in enumerate(kinds):
        vertices.append(PathVertex(np.array([0.0, 0.0, -1.0 - i]), np.array([0.0, 0.0, 1.0]), 0,
                                   is_specular=(kind == 's'), geometry_id=0))
    vertices.append(PathVertex(np.array([0.0, 0.0, -1.0 - len(kinds)]), np.array([0.0, 0.0, 1.0]), 0,
                               geometry_id=1, on_emitter=True))
    return Path(tuple(vertices))


@pytest.fixture
def tiny_scene_text():
    return """
camera 0 0 0  0 0 -1  0 1 0  40
material black diffuse 0 0 0
tri -0.5 -0.5 -3   0.5 -0.5 -3   0.5 0.5 -3   black
emitter 0 1 1 1
"""


@pytest.fixture
def tiny_scene(tiny_scene_text):
    return parse_scene(tiny_scene_text)
