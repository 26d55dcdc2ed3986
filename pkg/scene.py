"""
Scene model
Geometry, materials, emitters and the pinhole camera, ray intersection,
BSDF evaluation/sampling and the .scn scene-file reader
"""

import math
import os
from dataclasses import dataclass, replace
from typing import Dict, List, NamedTuple, Optional, Tuple

import numpy as np

from render_config import DEFAULT_EPSILON_RAY
from sampling_core import (RandomSequence, normalize, orthonormal_frame,
                           sample_cosine_hemisphere)

DIFFUSE = 'diffuse'
MIRROR = 'mirror'
DIELECTRIC = 'dielectric'
GLOSSY = 'glossy'
MATERIAL_KINDS = (DIFFUSE, MIRROR, DIELECTRIC, GLOSSY)

REFLECT = 'reflect'
TRANSMIT = 'transmit'


class SceneParseError(ValueError):
    """Malformed scene file; carries the 1-based line number"""

    def __init__(self, message: str, line: Optional[int] = None, source: Optional[str] = None):
        self.line = line
        self.source = source
        where = source or '<scene>'
        if line is not None:
            where = f"{where}:{line}"
        super().__init__(f"{where}: {message}")


@dataclass(frozen=True, eq=False)
class Material:
    name: str
    kind: str
    color: np.ndarray
    ior: float = 1.5
    exponent: float = 1.0

    @property
    def is_specular(self) -> bool:
        return self.kind in (MIRROR, DIELECTRIC)


@dataclass(frozen=True, eq=False)
class PinholeCamera:
    position: np.ndarray
    forward: np.ndarray
    right: np.ndarray
    up: np.ndarray
    fov_deg: float
    width: int = 1
    height: int = 1

    @classmethod
    def look_at(cls, position, target, up, fov_deg: float) -> 'PinholeCamera':
        position = np.asarray(position, dtype=float)
        forward = normalize(np.asarray(target, dtype=float) - position)
        right = np.cross(forward, np.asarray(up, dtype=float))
        if float(right @ right) < 1e-24:
            raise ValueError("camera up vector is parallel to the view direction")
        right = normalize(right)
        true_up = np.cross(right, forward)
        return cls(position, forward, right, true_up, float(fov_deg))

    def with_film(self, width: int, height: int) -> 'PinholeCamera':
        return replace(self, width=int(width), height=int(height))

    @property
    def tan_half_fov(self) -> float:
        return math.tan(math.radians(self.fov_deg) / 2.0)

    @property
    def aspect(self) -> float:
        return self.width / self.height

    @property
    def image_area(self) -> float:
        """Image-plane area at unit distance"""
        return 4.0 * self.tan_half_fov * self.tan_half_fov * self.aspect

    @property
    def pixel_count(self) -> int:
        return self.width * self.height

    def primary_ray(self, u: float, v: float) -> np.ndarray:
        x = (2.0 * u - 1.0) * self.tan_half_fov * self.aspect
        y = (2.0 * v - 1.0) * self.tan_half_fov
        return normalize(self.forward + x * self.right + y * self.up)

    def cos_theta(self, direction: np.ndarray) -> float:
        return float(direction @ self.forward)

    def importance(self, direction: np.ndarray) -> float:
        """Pinhole importance with a one-pixel box filter"""
        cos_theta = self.cos_theta(direction)
        if cos_theta <= 0.0:
            return 0.0
        return self.pixel_count / (self.image_area * cos_theta ** 4)

    def direction_pdf(self, direction: np.ndarray) -> float:
        """Solid-angle density of uniform image-plane sampling"""
        cos_theta = self.cos_theta(direction)
        if cos_theta <= 0.0:
            return 0.0
        return 1.0 / (self.image_area * cos_theta ** 3)


class Intersection(NamedTuple):
    position: np.ndarray
    normal: np.ndarray
    material_id: int
    emitter_id: Optional[int]
    t: float
    geometry_id: int


class BsdfSample(NamedTuple):
    direction: np.ndarray
    pdf: float                # solid angle, or discrete event probability when is_delta
    weight: np.ndarray        # f * |cos| / pdf, or f / p for delta events
    event: Optional[str]
    is_delta: bool


class SceneModel:
    """Immutable scene; shared read-only by every chain"""

    def __init__(self, camera: PinholeCamera, materials: List[Material],
                 spheres: List[Tuple[np.ndarray, float, int]],
                 triangles: List[Tuple[np.ndarray, np.ndarray, np.ndarray, int]],
                 geometry_kinds: List[Tuple[str, int]],
                 emitters: Dict[int, np.ndarray],
                 epsilon_ray: float = DEFAULT_EPSILON_RAY):
        self.camera = camera
        self.materials = list(materials)
        self.geometry_kinds = list(geometry_kinds)
        self.emitters = {int(k): np.asarray(v, dtype=float) for k, v in emitters.items()}
        self.epsilon_ray = float(epsilon_ray)
        self._spheres = list(spheres)
        self._triangles = list(triangles)

        # Per-kind arrays for vectorised intersection
        self._sphere_centers = np.array([s[0] for s in spheres], dtype=float).reshape(-1, 3)
        self._sphere_radii = np.array([s[1] for s in spheres], dtype=float)
        self._sphere_materials = [s[2] for s in spheres]
        self._tri_v0 = np.array([t[0] for t in triangles], dtype=float).reshape(-1, 3)
        self._tri_e1 = np.array([t[1] - t[0] for t in triangles], dtype=float).reshape(-1, 3)
        self._tri_e2 = np.array([t[2] - t[0] for t in triangles], dtype=float).reshape(-1, 3)
        normals = np.cross(self._tri_e1, self._tri_e2)
        lengths = np.linalg.norm(normals, axis=1, keepdims=True) if len(triangles) else np.ones((0, 1))
        self._tri_normals = normals / np.where(lengths > 0, lengths, 1.0)
        self._tri_materials = [t[3] for t in triangles]

        self._sphere_geometry = [g for g, (kind, _) in enumerate(geometry_kinds) if kind == 'sphere']
        self._tri_geometry = [g for g, (kind, _) in enumerate(geometry_kinds) if kind == 'tri']

        self._validate()

    def _validate(self):
        for material_id in self._sphere_materials + self._tri_materials:
            if not 0 <= material_id < len(self.materials):
                raise ValueError(f"material id {material_id} does not resolve")
        for geometry_id, radiance in self.emitters.items():
            if not 0 <= geometry_id < len(self.geometry_kinds):
                raise ValueError(f"emitter geometry index {geometry_id} out of range")
            if np.any(radiance < 0):
                raise ValueError("emitted radiance must be componentwise >= 0")

    def with_film(self, width: int, height: int) -> 'SceneModel':
        """Copy whose camera carries the film resolution"""
        clone = object.__new__(SceneModel)
        clone.__dict__.update(self.__dict__)
        clone.camera = self.camera.with_film(width, height)
        return clone

    def scaled_emission(self, factor: float) -> 'SceneModel':
        clone = object.__new__(SceneModel)
        clone.__dict__.update(self.__dict__)
        clone.emitters = {k: v * factor for k, v in self.emitters.items()}
        return clone

    @property
    def geometry_count(self) -> int:
        return len(self.geometry_kinds)

    def is_emitter(self, geometry_id: Optional[int]) -> bool:
        return geometry_id is not None and geometry_id in self.emitters

    def emitted_radiance(self, geometry_id: int, normal: np.ndarray, toward: np.ndarray) -> np.ndarray:
        """Front-face emission toward the unit direction `toward`"""
        radiance = self.emitters.get(geometry_id)
        if radiance is None or float(normal @ toward) <= 0.0:
            return np.zeros(3)
        return radiance

    def material(self, material_id: int) -> Material:
        return self.materials[material_id]

    def intersect(self, origin: np.ndarray, direction: np.ndarray,
                  t_max: float = math.inf) -> Optional[Intersection]:
        """Nearest hit with epsilon_ray < t < t_max, or None"""
        eps = self.epsilon_ray
        best_t = t_max
        best = None

        if len(self._tri_v0):
            pvec = np.cross(direction, self._tri_e2)
            det = np.einsum('ij,ij->i', self._tri_e1, pvec)
            ok = np.abs(det) > 1e-14
            inv_det = np.where(ok, 1.0 / np.where(ok, det, 1.0), 0.0)
            tvec = origin - self._tri_v0
            bary_u = np.einsum('ij,ij->i', tvec, pvec) * inv_det
            qvec = np.cross(tvec, self._tri_e1)
            bary_v = (qvec @ direction) * inv_det
            t = np.einsum('ij,ij->i', self._tri_e2, qvec) * inv_det
            hit = ok & (bary_u >= 0.0) & (bary_v >= 0.0) & (bary_u + bary_v <= 1.0) & (t > eps) & (t < best_t)
            if hit.any():
                candidates = np.where(hit, t, np.inf)
                index = int(np.argmin(candidates))
                best_t = float(candidates[index])
                best = ('tri', index)

        if len(self._sphere_radii):
            oc = origin - self._sphere_centers
            b = oc @ direction
            c = np.einsum('ij,ij->i', oc, oc) - self._sphere_radii ** 2
            disc = b * b - c
            root = np.sqrt(np.maximum(disc, 0.0))
            near = -b - root
            far = -b + root
            t = np.where(near > eps, near, far)
            hit = (disc >= 0.0) & (t > eps) & (t < best_t)
            if hit.any():
                candidates = np.where(hit, t, np.inf)
                index = int(np.argmin(candidates))
                best_t = float(candidates[index])
                best = ('sphere', index)

        if best is None:
            return None

        kind, index = best
        position = origin + best_t * direction
        if kind == 'tri':
            normal = self._tri_normals[index]
            material_id = self._tri_materials[index]
            geometry_id = self._tri_geometry[index]
        else:
            normal = normalize(position - self._sphere_centers[index])
            material_id = self._sphere_materials[index]
            geometry_id = self._sphere_geometry[index]
        emitter_id = geometry_id if geometry_id in self.emitters else None
        return Intersection(position, normal, material_id, emitter_id, best_t, geometry_id)

    def visible(self, a: np.ndarray, b: np.ndarray) -> bool:
        """Mutual visibility of two surface points"""
        offset = b - a
        distance = math.sqrt(float(offset @ offset))
        if distance <= 2.0 * self.epsilon_ray:
            return False
        hit = self.intersect(a, offset / distance, t_max=distance - self.epsilon_ray)
        return hit is None


# ---------------------------------------------------------------------------
# BSDFs. wi and wo both point away from the surface.
# ---------------------------------------------------------------------------

def reflect(w: np.ndarray, normal: np.ndarray) -> np.ndarray:
    return 2.0 * float(w @ normal) * normal - w


def _shading_normal(wi: np.ndarray, normal: np.ndarray) -> Optional[np.ndarray]:
    cos_i = float(wi @ normal)
    if cos_i > 0.0:
        return normal
    if cos_i < 0.0:
        return -normal
    return None


def fresnel_dielectric(cos_i: float, eta_i: float, eta_t: float) -> Tuple[float, float]:
    """Unpolarised Fresnel reflectance and cos of the refracted angle (1.0, 0.0 on TIR)"""
    sin2_t = (eta_i / eta_t) ** 2 * max(0.0, 1.0 - cos_i * cos_i)
    if sin2_t >= 1.0:
        return 1.0, 0.0
    cos_t = math.sqrt(1.0 - sin2_t)
    r_par = (eta_t * cos_i - eta_i * cos_t) / (eta_t * cos_i + eta_i * cos_t)
    r_perp = (eta_i * cos_i - eta_t * cos_t) / (eta_i * cos_i + eta_t * cos_t)
    return 0.5 * (r_par * r_par + r_perp * r_perp), cos_t


def _glossy_norm(exponent: float) -> float:
    return (exponent + 2.0) / (2.0 * math.pi)


def bsdf_eval(material: Material, wi: np.ndarray, wo: np.ndarray, normal: np.ndarray) -> np.ndarray:
    """Non-delta BSDF value; zero for delta kinds and for inconsistent sides"""
    if material.is_specular:
        return np.zeros(3)
    n = _shading_normal(wi, normal)
    if n is None or float(wo @ n) <= 0.0:
        return np.zeros(3)
    if material.kind == DIFFUSE:
        return material.color / math.pi
    cos_alpha = float(wo @ reflect(wi, n))
    if cos_alpha <= 0.0:
        return np.zeros(3)
    return material.color * (_glossy_norm(material.exponent) * cos_alpha ** material.exponent)


def bsdf_pdf(material: Material, wi: np.ndarray, wo: np.ndarray, normal: np.ndarray) -> float:
    """Solid-angle sampling density of wo; zero for delta kinds"""
    if material.is_specular:
        return 0.0
    n = _shading_normal(wi, normal)
    if n is None:
        return 0.0
    cos_o = float(wo @ n)
    if cos_o <= 0.0:
        return 0.0
    if material.kind == DIFFUSE:
        return cos_o / math.pi
    cos_alpha = float(wo @ reflect(wi, n))
    if cos_alpha <= 0.0:
        return 0.0
    return (material.exponent + 1.0) / (2.0 * math.pi) * cos_alpha ** material.exponent


def specular_response(material: Material, wi: np.ndarray, normal: np.ndarray,
                      event: str) -> Optional[Tuple[np.ndarray, np.ndarray, float]]:
    """Outgoing direction, delta reflectance factor and event probability of a specular event"""
    if material.kind == MIRROR:
        if event != REFLECT:
            return None
        n = _shading_normal(wi, normal)
        if n is None:
            return None
        return reflect(wi, n), material.color, 1.0

    cos_i = float(wi @ normal)
    if cos_i == 0.0:
        return None
    entering = cos_i > 0.0
    n = normal if entering else -normal
    eta_i, eta_t = (1.0, material.ior) if entering else (material.ior, 1.0)
    fresnel, cos_t = fresnel_dielectric(abs(cos_i), eta_i, eta_t)
    if event == REFLECT:
        return reflect(wi, n), material.color * fresnel, fresnel
    if fresnel >= 1.0:
        return None
    eta = eta_i / eta_t
    transmitted = normalize(-eta * wi + (eta * abs(cos_i) - cos_t) * n)
    return transmitted, material.color * (1.0 - fresnel), 1.0 - fresnel


def bsdf_sample(material: Material, wi: np.ndarray, normal: np.ndarray,
                rng: RandomSequence) -> Optional[BsdfSample]:
    if material.kind == MIRROR:
        response = specular_response(material, wi, normal, REFLECT)
        if response is None:
            return None
        return BsdfSample(response[0], 1.0, material.color, REFLECT, True)

    if material.kind == DIELECTRIC:
        reflected = specular_response(material, wi, normal, REFLECT)
        if reflected is None:
            return None
        fresnel = reflected[2]
        if rng.uniform() < fresnel:
            return BsdfSample(reflected[0], fresnel, material.color, REFLECT, True)
        direction, _, probability = specular_response(material, wi, normal, TRANSMIT)
        return BsdfSample(direction, probability, material.color, TRANSMIT, True)

    n = _shading_normal(wi, normal)
    if n is None:
        return None

    if material.kind == DIFFUSE:
        wo = sample_cosine_hemisphere(n, rng)
        pdf = bsdf_pdf(material, wi, wo, normal)
        if pdf <= 0.0:
            return None
        return BsdfSample(wo, pdf, material.color.copy(), None, False)

    # Glossy: Phong lobe around the mirror direction
    lobe_axis = reflect(wi, n)
    u1, u2 = rng.uniform2()
    cos_alpha = u1 ** (1.0 / (material.exponent + 1.0))
    sin_alpha = math.sqrt(max(0.0, 1.0 - cos_alpha * cos_alpha))
    phi = 2.0 * math.pi * u2
    tangent, bitangent = orthonormal_frame(lobe_axis)
    wo = normalize(sin_alpha * math.cos(phi) * tangent + sin_alpha * math.sin(phi) * bitangent
                   + cos_alpha * lobe_axis)
    pdf = bsdf_pdf(material, wi, wo, normal)
    if pdf <= 0.0:
        return None
    weight = bsdf_eval(material, wi, wo, normal) * float(wo @ n) / pdf
    return BsdfSample(wo, pdf, weight, None, False)


# ---------------------------------------------------------------------------
# Scene files
# ---------------------------------------------------------------------------

_ARITY = {
    'camera': 10,
    'sphere': 5,
    'tri': 10,
    'emitter': 4,
}


def _floats(tokens: List[str], line: int, source: Optional[str]) -> List[float]:
    try:
        values = [float(t) for t in tokens]
    except ValueError:
        raise SceneParseError(f"expected numbers, got {' '.join(tokens)!r}", line, source) from None
    if not all(math.isfinite(v) for v in values):
        raise SceneParseError("non-finite number", line, source)
    return values


def _unit_color(values: List[float], what: str, line: int, source: Optional[str]) -> np.ndarray:
    if any(v < 0.0 or v > 1.0 for v in values):
        raise SceneParseError(f"{what} must lie in [0, 1]", line, source)
    return np.array(values, dtype=float)


def parse_scene(text: str, source: Optional[str] = None, require_emitter: bool = True,
                epsilon_ray: float = DEFAULT_EPSILON_RAY) -> SceneModel:
    """Build a SceneModel from .scn text"""
    camera = None
    materials: List[Material] = []
    material_ids: Dict[str, int] = {}
    spheres = []
    triangles = []
    geometry_kinds: List[Tuple[str, int]] = []
    emitters: Dict[int, np.ndarray] = {}

    for number, raw in enumerate(text.splitlines(), start=1):
        stripped = raw.strip()
        if not stripped or stripped.startswith('#'):
            continue
        tokens = stripped.split()
        keyword, args = tokens[0], tokens[1:]

        if keyword == 'material':
            if len(args) < 2:
                raise SceneParseError("material needs a name and a kind", number, source)
            name, kind, params = args[0], args[1], args[2:]
            if kind not in MATERIAL_KINDS:
                raise SceneParseError(f"unknown material kind {kind!r}", number, source)
            if name in material_ids:
                raise SceneParseError(f"duplicate material {name!r}", number, source)
            expected = {DIFFUSE: 3, MIRROR: 3, DIELECTRIC: 4, GLOSSY: 4}[kind]
            if len(params) != expected:
                raise SceneParseError(f"{kind} material takes {expected} values, got {len(params)}", number, source)
            values = _floats(params, number, source)
            if kind == DIELECTRIC:
                if values[0] <= 1.0:
                    raise SceneParseError("dielectric ior must be > 1", number, source)
                material = Material(name, kind, _unit_color(values[1:], 'transmittance', number, source), ior=values[0])
            elif kind == GLOSSY:
                if values[3] <= 0.0:
                    raise SceneParseError("glossy exponent must be > 0", number, source)
                material = Material(name, kind, _unit_color(values[:3], 'albedo', number, source), exponent=values[3])
            else:
                material = Material(name, kind, _unit_color(values, 'albedo' if kind == DIFFUSE else 'reflectance',
                                                            number, source))
            material_ids[name] = len(materials)
            materials.append(material)
            continue

        if keyword not in _ARITY:
            raise SceneParseError(f"unknown record {keyword!r}", number, source)
        if len(args) != _ARITY[keyword]:
            raise SceneParseError(f"{keyword} takes {_ARITY[keyword]} fields, got {len(args)}", number, source)

        if keyword == 'camera':
            if camera is not None:
                raise SceneParseError("duplicate camera", number, source)
            values = _floats(args, number, source)
            if not 0.0 < values[9] < 180.0:
                raise SceneParseError("camera fov must lie in (0, 180) degrees", number, source)
            try:
                camera = PinholeCamera.look_at(values[0:3], values[3:6], values[6:9], values[9])
            except ValueError as e:
                raise SceneParseError(str(e), number, source) from None

        elif keyword in ('sphere', 'tri'):
            material_name = args[-1]
            if material_name not in material_ids:
                raise SceneParseError(f"unknown material {material_name!r}", number, source)
            values = _floats(args[:-1], number, source)
            if keyword == 'sphere':
                if values[3] <= 0.0:
                    raise SceneParseError("sphere radius must be > 0", number, source)
                geometry_kinds.append(('sphere', len(spheres)))
                spheres.append((np.array(values[:3]), values[3], material_ids[material_name]))
            else:
                a, b, c = (np.array(values[i:i + 3]) for i in (0, 3, 6))
                if np.linalg.norm(np.cross(b - a, c - a)) <= 1e-12:
                    raise SceneParseError("degenerate triangle", number, source)
                geometry_kinds.append(('tri', len(triangles)))
                triangles.append((a, b, c, material_ids[material_name]))

        elif keyword == 'emitter':
            try:
                index = int(args[0])
            except ValueError:
                raise SceneParseError(f"emitter index must be an integer, got {args[0]!r}", number, source) from None
            if not 0 <= index < len(geometry_kinds):
                raise SceneParseError(f"emitter index {index} does not name a geometry defined above", number, source)
            radiance = _floats(args[1:], number, source)
            if any(v < 0.0 for v in radiance):
                raise SceneParseError("emitted radiance must be >= 0", number, source)
            emitters[index] = np.array(radiance)

    if camera is None:
        raise SceneParseError("scene has no camera", None, source)
    if not geometry_kinds:
        raise SceneParseError("scene has no geometry", None, source)
    if require_emitter and not emitters:
        raise SceneParseError("scene has no emitter", None, source)

    return SceneModel(camera, materials, spheres, triangles, geometry_kinds, emitters, epsilon_ray)


def load_scene(path: str, require_emitter: bool = True, epsilon_ray: float = DEFAULT_EPSILON_RAY) -> SceneModel:
    if not os.path.exists(path):
        raise FileNotFoundError(f"scene file not found: {path}")
    with open(path, 'r', encoding='utf-8') as f:
        text = f.read()
    return parse_scene(text, source=path, require_emitter=require_emitter, epsilon_ray=epsilon_ray)
