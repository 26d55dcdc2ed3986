"""
Light paths
Path vertices, the measurement contribution f and its luminance pi,
geometry terms, eye-subpath tracing and the large-step path density
"""

import math
from dataclasses import dataclass, field
from typing import List, NamedTuple, Optional, Tuple

import numpy as np

from sampling_core import CanonicalPoint2, RandomSequence, luminance, raster_position
from scene import SceneModel, bsdf_eval, bsdf_pdf, bsdf_sample, specular_response

# Specular re-propagation must reproduce the stored direction to this cosine tolerance
_SPECULAR_COS_TOLERANCE = 1e-6


@dataclass(eq=False)
class PathVertex:
    position: np.ndarray
    normal: np.ndarray
    material_id: Optional[int]            # None marks the camera vertex
    is_specular: bool = False
    geometry_id: Optional[int] = None
    on_emitter: bool = False
    event: Optional[str] = None           # specular event taken toward the next vertex
    traced: bool = False                  # segment to the next vertex came from a ray cast

    @property
    def is_camera(self) -> bool:
        return self.material_id is None


def camera_vertex(scene: SceneModel) -> PathVertex:
    camera = scene.camera
    return PathVertex(camera.position, camera.forward, None, is_specular=False)


@dataclass(frozen=True, eq=False)
class Path:
    """x1 on the sensor through x_k on an emitter"""
    vertices: Tuple[PathVertex, ...]
    directions: Tuple[np.ndarray, ...] = field(init=False, repr=False)
    distances: Tuple[float, ...] = field(init=False, repr=False)

    def __post_init__(self):
        vertices = tuple(self.vertices)
        directions = []
        distances = []
        for a, b in zip(vertices[:-1], vertices[1:]):
            offset = b.position - a.position
            distance = math.sqrt(float(offset @ offset))
            distances.append(distance)
            directions.append(offset / distance if distance > 0 else offset)
        object.__setattr__(self, 'vertices', vertices)
        object.__setattr__(self, 'directions', tuple(directions))
        object.__setattr__(self, 'distances', tuple(distances))

    def __len__(self) -> int:
        return len(self.vertices)

    @property
    def k(self) -> int:
        return len(self.vertices)

    def vertex(self, index: int) -> PathVertex:
        """1-based access, matching x1..x_k"""
        return self.vertices[index - 1]

    def direction(self, index: int) -> np.ndarray:
        """Unit direction x_index -> x_(index+1), 1-based"""
        return self.directions[index - 1]

    def specular_signature(self) -> Tuple[bool, ...]:
        return tuple(v.is_specular for v in self.vertices)


class Contribution(NamedTuple):
    f: np.ndarray
    pi: float
    raster: Optional[CanonicalPoint2]


ZERO_CONTRIBUTION = Contribution(np.zeros(3), 0.0, None)


def _zero(raster: Optional[CanonicalPoint2] = None) -> Contribution:
    return Contribution(np.zeros(3), 0.0, raster)


def abs_cos(normal: np.ndarray, direction: np.ndarray) -> float:
    return abs(float(normal @ direction))


def geometry_term(scene: SceneModel, a: PathVertex, b: PathVertex, check_visibility: bool = True) -> float:
    offset = b.position - a.position
    distance2 = float(offset @ offset)
    if distance2 <= 0.0:
        return 0.0
    direction = offset / math.sqrt(distance2)
    g = abs_cos(a.normal, direction) * abs_cos(b.normal, direction) / distance2
    if g > 0.0 and check_visibility and not scene.visible(a.position, b.position):
        return 0.0
    return g


def eval_contribution(scene: SceneModel, path: Path) -> Contribution:
    """Measurement contribution in the product-area measure; zero for invalid paths"""
    vertices = path.vertices
    k = len(vertices)
    if k < 2 or not vertices[0].is_camera:
        return ZERO_CONTRIBUTION
    last = vertices[-1]
    if not scene.is_emitter(last.geometry_id):
        return ZERO_CONTRIBUTION
    if any(v.on_emitter or v.is_camera for v in vertices[1:-1]):
        return ZERO_CONTRIBUTION

    camera = scene.camera
    primary = path.directions[0]
    raster = raster_position(primary, camera)
    if raster is None:
        return ZERO_CONTRIBUTION

    f = np.full(3, camera.importance(primary))

    # Geometry terms; segments leaving a specular vertex are delta-measured
    for i in range(k - 1):
        a, b = vertices[i], vertices[i + 1]
        if a.is_specular:
            if not a.traced and not scene.visible(a.position, b.position):
                return _zero(raster)
            continue
        g = geometry_term(scene, a, b, check_visibility=not a.traced)
        if g == 0.0:
            return _zero(raster)
        f = f * g

    # Scattering at interior vertices
    for i in range(1, k - 1):
        vertex = vertices[i]
        material = scene.material(vertex.material_id)
        wi = -path.directions[i - 1]
        wo = path.directions[i]
        if vertex.is_specular:
            response = specular_response(material, wi, vertex.normal, vertex.event)
            if response is None or float(response[0] @ wo) < 1.0 - _SPECULAR_COS_TOLERANCE:
                return _zero(raster)
            f = f * response[1]
        else:
            f = f * bsdf_eval(material, wi, wo, vertex.normal)
        if not f.any():
            return _zero(raster)

    f = f * scene.emitted_radiance(last.geometry_id, last.normal, -path.directions[-1])
    pi = luminance(f)
    if not pi > 0.0:
        return _zero(raster)
    return Contribution(f, pi, raster)


@dataclass
class EyeSubpath:
    vertices: List[PathVertex]
    direction_pdfs: List[float]      # per bounce: solid angle, or event probability after a specular vertex
    vertex_pdfs: List[float]         # per vertex x2..: pdf in that vertex's measure
    termination: str                 # 'emitter', 'miss', 'absorbed', 'max' or 'camera-only'

    @property
    def pdf(self) -> float:
        return math.prod(self.vertex_pdfs)

    @property
    def reached_emitter(self) -> bool:
        return self.termination == 'emitter'

    def to_path(self) -> Path:
        return Path(tuple(self.vertices))


def surface_vertex(scene: SceneModel, hit) -> PathVertex:
    on_emitter = hit.emitter_id is not None
    material = scene.material(hit.material_id)
    return PathVertex(hit.position, hit.normal, hit.material_id,
                      is_specular=material.is_specular and not on_emitter,
                      geometry_id=hit.geometry_id, on_emitter=on_emitter)


def trace_eye_subpath(scene: SceneModel, rng: RandomSequence, max_vertices: int) -> EyeSubpath:
    """Camera ray plus BSDF sampling until an emitter, a miss, absorption or max_vertices"""
    if max_vertices < 1:
        raise ValueError("max_vertices must be >= 1")
    camera = scene.camera
    vertices = [camera_vertex(scene)]
    if max_vertices == 1:
        return EyeSubpath(vertices, [], [], 'camera-only')

    u, v = rng.uniform2()
    direction = camera.primary_ray(u, v)
    direction_pdfs = [camera.direction_pdf(direction)]
    vertex_pdfs = []
    origin = camera.position
    previous_specular = False

    while True:
        hit = scene.intersect(origin, direction)
        if hit is None:
            return EyeSubpath(vertices, direction_pdfs, vertex_pdfs, 'miss')

        vertices[-1].traced = True
        vertex = surface_vertex(scene, hit)
        if previous_specular:
            vertex_pdfs.append(direction_pdfs[-1])
        else:
            vertex_pdfs.append(direction_pdfs[-1] * abs_cos(hit.normal, direction) / (hit.t * hit.t))
        vertices.append(vertex)

        if vertex.on_emitter:
            return EyeSubpath(vertices, direction_pdfs, vertex_pdfs, 'emitter')
        if len(vertices) == max_vertices:
            return EyeSubpath(vertices, direction_pdfs, vertex_pdfs, 'max')

        sample = bsdf_sample(scene.material(hit.material_id), -direction, hit.normal, rng)
        if sample is None:
            return EyeSubpath(vertices, direction_pdfs, vertex_pdfs, 'absorbed')
        vertex.event = sample.event
        direction_pdfs.append(sample.pdf)
        previous_specular = sample.is_delta
        origin = hit.position
        direction = sample.direction


def path_pdf(scene: SceneModel, path: Path) -> float:
    """Density of generating path by eye-subpath tracing, in the path's own measure"""
    vertices = path.vertices
    camera = scene.camera
    primary = path.directions[0]
    pdf = camera.direction_pdf(primary) * abs_cos(vertices[1].normal, primary) / path.distances[0] ** 2
    for i in range(1, len(vertices) - 1):
        vertex = vertices[i]
        material = scene.material(vertex.material_id)
        wi = -path.directions[i - 1]
        wo = path.directions[i]
        if vertex.is_specular:
            response = specular_response(material, wi, vertex.normal, vertex.event)
            if response is None:
                return 0.0
            pdf *= response[2]
        else:
            pdf *= bsdf_pdf(material, wi, wo, vertex.normal) * abs_cos(vertices[i + 1].normal, wo) / path.distances[i] ** 2
        if pdf == 0.0:
            return 0.0
    return pdf
