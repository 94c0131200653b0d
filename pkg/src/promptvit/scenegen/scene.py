# Copyright 2025 The Levanter Authors
#
# SPDX-License-Identifier: Apache-2.0


"""
Scene description and rasterizer.

The camera sits at the origin looking along +z with image y pointing down and focal length equal to the frame
width in pixels. A scene holds a tilted ground plane, a far background, one moving "shape" (a flat square facing
the camera, or a ball) and a walking 25-joint stick figure standing on the plane. Every label is computed from
this description, so the depth, normal, segmentation, box and pose maps agree with one another.
"""

import dataclasses
import math

import numpy as np
from jaxtyping import Bool, Float, Int

from ..backbone import BackboneConfig
from ..util import InvalidConfig


FAR = 12.0
BACKGROUND_NORMAL = np.array([0.0, 0.0, -1.0])

SQUARE, BALL = 0, 1
SQUARE_HALF_SIZE = 0.3
BALL_RADIUS = 0.55
# normalized image units per frame
SHAPE_SPEED = 0.07

# direction index -> (dx, dy) in image coordinates
DIRECTIONS = ((1.0, 0.0), (-1.0, 0.0), (0.0, 1.0), (0.0, -1.0))
DIRECTION_NAMES = ("right", "left", "down", "up")

WALK_SPEED = 0.03
GAIT_AMPLITUDE = 0.2
GAIT_FREQUENCY = 0.35
JOINT_RADIUS = 0.08
HEAD_RADIUS = 0.13
PELVIS_HEIGHT = 0.88

# layer order inside the z-buffer; segmentation class = layer + 1, background = 0
PLANE, SHAPE, FIGURE = 0, 1, 2
NUM_LAYERS = 3


@dataclasses.dataclass(frozen=True)
class SceneConfig:
    frames: int = 4
    height: int = 32
    width: int = 32
    # label grid per frame
    grid_h: int = 4
    grid_w: int = 4
    # applied to real-origin samples only
    pixel_noise: float = 0.03
    color_jitter: float = 0.1

    def __post_init__(self):
        for name in ("frames", "height", "width", "grid_h", "grid_w"):
            if getattr(self, name) < 1:
                raise InvalidConfig(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.height % self.grid_h != 0 or self.width % self.grid_w != 0:
            raise InvalidConfig(
                f"Frame {self.height}x{self.width} is not divisible by grid {self.grid_h}x{self.grid_w}"
            )
        if self.pixel_noise < 0 or not 0 <= self.color_jitter < 1:
            raise InvalidConfig("pixel_noise must be >= 0 and color_jitter in [0, 1)")

    @staticmethod
    def from_backbone(config: BackboneConfig, **overrides) -> "SceneConfig":
        return SceneConfig(
            frames=config.frames,
            height=config.height,
            width=config.width,
            grid_h=config.grid_h,
            grid_w=config.grid_w,
            **overrides,
        )


@dataclasses.dataclass(frozen=True)
class ScenePlan:
    """Every random choice behind one video."""

    plane_height: float
    plane_tilt: float
    shape_kind: int
    direction: int
    shape_depth: float
    shape_start: tuple[float, float]  # normalized image coordinates of the centre at frame 0
    figure_depth: float
    figure_x: float
    figure_heading: float  # +1 walks towards +x
    gait_phase: float
    shape_color: tuple[float, float, float]
    figure_color: tuple[float, float, float]
    plane_color: tuple[float, float, float]
    background_color: tuple[float, float, float]

    @property
    def action(self) -> int:
        return 4 * self.shape_kind + self.direction

    @property
    def plane_normal(self) -> np.ndarray:
        return np.array([0.0, -math.cos(self.plane_tilt), -math.sin(self.plane_tilt)])

    def plane_y(self, z: float) -> float:
        """Camera y of the plane at depth z."""
        return (self.plane_height - math.sin(self.plane_tilt) * z) / math.cos(self.plane_tilt)

    def shape_center(self, t: int) -> np.ndarray:
        dx, dy = DIRECTIONS[self.direction]
        cx = self.shape_start[0] + SHAPE_SPEED * dx * t
        cy = self.shape_start[1] + SHAPE_SPEED * dy * t
        z = self.shape_depth
        return np.array([(cx - 0.5) * z, (cy - 0.5) * z, z])


def sample_plan(rng: np.random.Generator) -> ScenePlan:
    """
    Draws a scene. The shape starts on the side opposite its direction of motion. Every visible plane point lies
    deeper than the shape, and the shape is darker than everything behind it.
    """
    kind = int(rng.integers(2))
    direction = int(rng.integers(4))
    along = 0.25 + rng.uniform(-0.04, 0.04)
    across = 0.5 + rng.uniform(-0.1, 0.1)
    if direction == 0:
        start = (along, across)
    elif direction == 1:
        start = (1.0 - along, across)
    elif direction == 2:
        start = (across, along)
    else:
        start = (across, 1.0 - along)

    def color(lo: float, hi: float) -> tuple[float, float, float]:
        r, g, b = rng.uniform(lo, hi, size=3)
        return (float(r), float(g), float(b))

    return ScenePlan(
        plane_height=float(rng.uniform(2.7, 3.2)),
        plane_tilt=float(rng.uniform(0.05, 0.15)),
        shape_kind=kind,
        direction=direction,
        shape_depth=float(rng.uniform(3.0, 4.0)),
        shape_start=(float(start[0]), float(start[1])),
        figure_depth=float(rng.uniform(5.0, 6.5)),
        figure_x=float(rng.uniform(-1.2, 1.2)),
        figure_heading=float(rng.choice([-1.0, 1.0])),
        gait_phase=float(rng.uniform(0.0, 2 * math.pi)),
        shape_color=color(0.0, 0.3),
        figure_color=color(0.3, 0.9),
        plane_color=color(0.55, 0.8),
        background_color=color(0.7, 1.0),
    )


# 25 joints: spine base (pelvis), spine mid, neck, head, left arm (shoulder, elbow, wrist, hand), right arm,
# left leg (hip, knee, ankle, foot), right leg, spine shoulder, left hand tip and thumb, right hand tip and thumb
BONES = (
    (0, 1), (1, 20), (20, 2), (2, 3),
    (20, 4), (4, 5), (5, 6), (6, 7), (7, 21), (7, 22),
    (20, 8), (8, 9), (9, 10), (10, 11), (11, 23), (11, 24),
    (0, 12), (12, 13), (13, 14), (14, 15),
    (0, 16), (16, 17), (17, 18), (18, 19),
)  # fmt: skip


def _limb(anchor: np.ndarray, angle: float, heading: float, lengths: tuple[float, ...]) -> list[np.ndarray]:
    direction = np.array([heading * math.sin(angle), -math.cos(angle), 0.0])
    return [anchor + length * direction for length in lengths]


def figure_joints(plan: ScenePlan, t: int) -> Float[np.ndarray, "25 3"]:  # noqa: F722
    """Camera-space joint positions at frame t."""
    s = plan.figure_heading
    swing = GAIT_AMPLITUDE * math.sin(GAIT_FREQUENCY * t + plan.gait_phase)

    # body frame: x along the walking axis, y up, z away from the camera
    body = np.zeros((25, 3))
    body[1] = (0.0, 0.25, 0.0)
    body[20] = (0.0, 0.5, 0.0)
    body[2] = (0.0, 0.58, 0.0)
    body[3] = (0.0, 0.72, 0.0)
    for side, sign, shoulder, hip, tip, thumb in ((0, -1.0, 4, 12, 21, 22), (1, 1.0, 8, 16, 23, 24)):
        depth = 0.06 * sign
        leg_angle = swing if side == 0 else -swing
        arm_angle = -0.7 * leg_angle
        body[shoulder] = (0.0, 0.5, depth)
        body[shoulder + 1 : shoulder + 4] = _limb(body[shoulder], arm_angle, s, (0.28, 0.5, 0.56))
        body[tip] = _limb(body[shoulder], arm_angle, s, (0.62,))[0]
        body[thumb] = body[shoulder + 3] + (0.03 * s, 0.0, 0.0)
        body[hip] = (0.0, 0.0, depth)
        body[hip + 1 : hip + 3] = _limb(body[hip], leg_angle, s, (0.45, 0.85))
        body[hip + 3] = body[hip + 2] + (0.1 * s, -0.03, 0.0)

    pelvis = np.array(
        [plan.figure_x + s * WALK_SPEED * t, plan.plane_y(plan.figure_depth) - PELVIS_HEIGHT, plan.figure_depth]
    )
    camera = np.empty_like(body)
    camera[:, 0] = pelvis[0] + body[:, 0]
    camera[:, 1] = pelvis[1] - body[:, 1]
    camera[:, 2] = pelvis[2] + body[:, 2]
    return camera


def figure_spheres(joints: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Sphere centres and radii tracing the bones of a stick figure."""
    centers = [joints[a] + f * (joints[b] - joints[a]) for a, b in BONES for f in (0.0, 1 / 3, 2 / 3, 1.0)]
    radii = [JOINT_RADIUS] * len(centers)
    centers.append(joints[3])
    radii.append(HEAD_RADIUS)
    return np.stack(centers), np.asarray(radii)


def camera_rays(config: SceneConfig) -> Float[np.ndarray, "H W 3"]:  # noqa: F722
    """Per-pixel ray directions with unit z component, so a hit at ray parameter t has depth t."""
    f = float(config.width)
    u = (np.arange(config.width) + 0.5 - config.width / 2) / f
    v = (np.arange(config.height) + 0.5 - config.height / 2) / f
    rays = np.empty((config.height, config.width, 3))
    rays[..., 0] = u[None, :]
    rays[..., 1] = v[:, None]
    rays[..., 2] = 1.0
    return rays


@dataclasses.dataclass(frozen=True)
class LayerHit:
    depth: Float[np.ndarray, "H W"]  # inf where the layer is missed  # noqa: F722
    normal: Float[np.ndarray, "H W 3"]  # noqa: F722

    @property
    def mask(self) -> Bool[np.ndarray, "H W"]:  # noqa: F722
        return np.isfinite(self.depth)


def _miss(rays: np.ndarray) -> LayerHit:
    return LayerHit(np.full(rays.shape[:2], np.inf), np.zeros(rays.shape))


def hit_plane(plan: ScenePlan, rays: np.ndarray) -> LayerHit:
    phi = plan.plane_tilt
    denom = math.cos(phi) * rays[..., 1] + math.sin(phi)
    depth = np.full(rays.shape[:2], np.inf)
    facing = denom > 1e-9
    depth[facing] = plan.plane_height / denom[facing]
    depth[depth >= FAR] = np.inf
    normal = np.zeros(rays.shape)
    normal[np.isfinite(depth)] = plan.plane_normal
    return LayerHit(depth, normal)


def hit_square(center: np.ndarray, rays: np.ndarray) -> LayerHit:
    z = center[2]
    inside = (np.abs(rays[..., 0] * z - center[0]) <= SQUARE_HALF_SIZE) & (
        np.abs(rays[..., 1] * z - center[1]) <= SQUARE_HALF_SIZE
    )
    hit = _miss(rays)
    hit.depth[inside] = z
    hit.normal[inside] = BACKGROUND_NORMAL
    return hit


def hit_spheres(centers: np.ndarray, radii: np.ndarray, rays: np.ndarray) -> LayerHit:
    """Nearest hit over a set of spheres; normals are the unit outward sphere normals."""
    flat = rays.reshape(-1, 3)
    r2 = np.einsum("pi,pi->p", flat, flat)[:, None]
    rc = flat @ centers.T
    c2 = np.einsum("ki,ki->k", centers, centers)[None, :]
    disc = rc**2 - r2 * (c2 - radii[None, :] ** 2)
    with np.errstate(invalid="ignore"):
        t = (rc - np.sqrt(disc)) / r2
    t = np.where((disc >= 0) & (t > 0), t, np.inf)
    nearest = np.argmin(t, axis=1)
    depth = t[np.arange(len(flat)), nearest]
    hit = np.isfinite(depth)

    normal = np.zeros_like(flat)
    points = flat[hit] * depth[hit, None]
    outward = points - centers[nearest[hit]]
    normal[hit] = outward / np.linalg.norm(outward, axis=1, keepdims=True)
    return LayerHit(depth.reshape(rays.shape[:2]), normal.reshape(rays.shape))


def render_layers(plan: ScenePlan, t: int, rays: np.ndarray) -> tuple[LayerHit, LayerHit, LayerHit]:
    """The plane, shape and figure layers of frame t, each ignoring the others."""
    center = plan.shape_center(t)
    if plan.shape_kind == SQUARE:
        shape = hit_square(center, rays)
    else:
        shape = hit_spheres(center[None, :], np.array([BALL_RADIUS]), rays)
    figure = hit_spheres(*figure_spheres(figure_joints(plan, t)), rays)
    return hit_plane(plan, rays), shape, figure


@dataclasses.dataclass(frozen=True)
class RenderedFrame:
    rgb: Float[np.ndarray, "3 H W"]  # noqa: F722
    depth: Float[np.ndarray, "H W"]  # noqa: F722
    normal: Float[np.ndarray, "H W 3"]  # noqa: F722
    segm: Int[np.ndarray, "H W"]  # noqa: F722
    layer_masks: tuple[np.ndarray, ...]


_TO_LIGHT = np.array([-0.4, -1.0, -0.6]) / np.linalg.norm([-0.4, -1.0, -0.6])


def composite(plan: ScenePlan, layers: tuple[LayerHit, ...], rays: np.ndarray) -> RenderedFrame:
    """Z-buffers the layers over the background and shades the visible surface."""
    depths = np.stack([layer.depth for layer in layers])
    nearest = np.argmin(depths, axis=0)
    depth = np.min(depths, axis=0)
    background = ~np.isfinite(depth)
    segm = np.where(background, 0, nearest + 1)
    depth = np.where(background, FAR, depth)

    normal = np.empty(rays.shape)
    normal[background] = BACKGROUND_NORMAL
    colors = (plan.plane_color, plan.shape_color, plan.figure_color)
    albedo = np.empty(rays.shape)
    albedo[background] = plan.background_color
    for i, layer in enumerate(layers):
        visible = ~background & (nearest == i)
        normal[visible] = layer.normal[visible]
        albedo[visible] = colors[i]

    plane_visible = segm == PLANE + 1
    points = rays * depth[..., None]
    checker = (np.floor(points[..., 0] / 0.5) + np.floor(points[..., 2] / 0.5)) % 2
    albedo[plane_visible] *= np.where(checker[plane_visible] > 0, 1.0, 0.8)[:, None]

    shade = 0.35 + 0.65 * np.clip(normal @ _TO_LIGHT, 0.0, None)
    shade[background] = 1.0
    rgb = np.clip(albedo * shade[..., None], 0.0, 1.0).transpose(2, 0, 1)
    return RenderedFrame(rgb, depth, normal, segm, tuple(layer.mask for layer in layers))


def render(plan: ScenePlan, config: SceneConfig) -> list[RenderedFrame]:
    rays = camera_rays(config)
    return [composite(plan, render_layers(plan, t, rays), rays) for t in range(config.frames)]


def mask_box(mask: np.ndarray) -> np.ndarray:
    """Normalized corner box (x1, y1, x2, y2) around the set pixels of a mask."""
    rows = np.flatnonzero(mask.any(axis=1))
    cols = np.flatnonzero(mask.any(axis=0))
    if rows.size == 0:
        raise ValueError("Object is not visible in the frame")
    H, W = mask.shape
    return np.array([cols[0] / W, rows[0] / H, (cols[-1] + 1) / W, (rows[-1] + 1) / H])


def projected_box(centers: np.ndarray, radii: np.ndarray, config: SceneConfig) -> np.ndarray:
    """
    Normalized corner box around the image-plane projection of a set of spheres, clipped to the frame and at
    least one pixel wide. Used for objects too small to cover any pixel centre.
    """
    f = float(config.width)
    z = centers[:, 2]
    u = centers[:, 0] / z * f + config.width / 2
    v = centers[:, 1] / z * f + config.height / 2
    r = radii / z * f
    x1, x2 = np.clip([np.min(u - r), np.max(u + r)], 0, config.width)
    y1, y2 = np.clip([np.min(v - r), np.max(v + r)], 0, config.height)
    x1, y1 = min(x1, config.width - 1), min(y1, config.height - 1)
    x2, y2 = max(x2, x1 + 1), max(y2, y1 + 1)
    return np.array([x1 / config.width, y1 / config.height, x2 / config.width, y2 / config.height])
