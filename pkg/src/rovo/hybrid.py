"""Hybrid plane-cylinder-plane warp for wide-baseline fisheye overlap regions.

Each camera's warped image is made of three pieces that share one focal
length ``f``:

* a left perspective plane facing the overlap with the left neighbor,
* a cylinder of radius ``f`` (axis = rig-plane normal) in the middle,
* a right perspective plane facing the overlap with the right neighbor.

Both planes are tangent to the cylinder, so the ray field is continuous
(and has continuous first derivative) across the two seam columns.  When
neighboring camera centers lie in the rig plane, the shared plane between
them behaves like a rectified stereo pair: a scene point lands on the same
warped row in both images.

Warped pixel coordinates are ``(u, v)`` = (column, row) with integer values
at pixel centers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DimensionError, ParseError
from .fisheye import FisheyeIntrinsics, incidence_angle, project
from .geometry import RigidTransform
from .rig import RigConfig, fit_plane

SENTINEL = -1.0
DEFAULT_OUT_RESOLUTION = (1200, 400)
DEFAULT_FOV_SPAN = math.radians(200.0)


def _unit(v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    return v / np.linalg.norm(v)


@dataclass(frozen=True)
class HybridProjectionConfig:
    """Warp geometry for one camera; all directions are in the camera frame.

    ``cylinder_axis`` points "up" (towards decreasing warped rows).  The
    cylinder spans azimuths from ``right_plane_normal`` to
    ``left_plane_normal`` turning counter-clockwise about the axis.
    """

    left_plane_normal: np.ndarray
    right_plane_normal: np.ndarray
    cylinder_axis: np.ndarray
    projection_focal: float
    out_resolution: tuple[int, int]
    seam_columns: tuple[float, float]

    def __post_init__(self):
        for name in ("left_plane_normal", "right_plane_normal", "cylinder_axis"):
            v = _unit(getattr(self, name))
            v.flags.writeable = False
            object.__setattr__(self, name, v)
        n = self.cylinder_axis
        if abs(n @ self.left_plane_normal) > 1e-9 or abs(n @ self.right_plane_normal) > 1e-9:
            raise ValueError("plane normals must be perpendicular to the cylinder axis")
        object.__setattr__(self, "out_resolution", (int(self.out_resolution[0]), int(self.out_resolution[1])))
        object.__setattr__(self, "seam_columns", (float(self.seam_columns[0]), float(self.seam_columns[1])))

    @property
    def right_tangent(self) -> np.ndarray:
        return np.cross(self.cylinder_axis, self.right_plane_normal)

    @property
    def left_tangent(self) -> np.ndarray:
        return np.cross(self.cylinder_axis, self.left_plane_normal)

    @property
    def cylinder_span(self) -> float:
        """Azimuth covered by the cylindrical section (radians)."""
        d_l = self.left_plane_normal
        return math.atan2(d_l @ self.right_tangent, d_l @ self.right_plane_normal) % (2 * math.pi)

    @property
    def principal_row(self) -> float:
        return 0.5 * (self.out_resolution[1] - 1)

    @property
    def column_step(self) -> float:
        """Angular step between adjacent columns on the cylinder (radians)."""
        return 1.0 / self.projection_focal

    @property
    def center_direction(self) -> np.ndarray:
        """Viewing direction at the middle of the cylindrical section."""
        a = 0.5 * self.cylinder_span
        return math.cos(a) * self.right_plane_normal + math.sin(a) * self.right_tangent

    @classmethod
    def from_directions(
        cls,
        left_normal,
        right_normal,
        up,
        out_resolution=DEFAULT_OUT_RESOLUTION,
        fov_span: float = DEFAULT_FOV_SPAN,
    ) -> "HybridProjectionConfig":
        """Lay out planes and cylinder so the image covers ``fov_span`` of azimuth.

        The span left over after the cylinder is split evenly between the two
        planes; the focal length follows from the output width.
        """
        n = _unit(up)
        d_r = _unit(np.asarray(right_normal, float) - (np.asarray(right_normal, float) @ n) * n)
        d_l = _unit(np.asarray(left_normal, float) - (np.asarray(left_normal, float) @ n) * n)
        cyl = math.atan2(d_l @ np.cross(n, d_r), d_l @ d_r) % (2 * math.pi)
        if cyl >= math.pi:
            raise ValueError("left plane must lie counter-clockwise of the right plane within pi")
        side = 0.5 * (fov_span - cyl)
        if side < 0.0 or side >= 0.5 * math.pi:
            raise ValueError(f"fov_span {math.degrees(fov_span):.1f} deg incompatible with cylinder span {math.degrees(cyl):.1f} deg")
        w, _ = out_resolution
        f = (w - 1) / (cyl + 2.0 * math.tan(side))
        s_l = f * math.tan(side)
        return cls(d_l, d_r, n, f, tuple(out_resolution), (s_l, s_l + f * cyl))

    @classmethod
    def perspective(cls, forward, up, focal: float, out_resolution) -> "HybridProjectionConfig":
        """Degenerate layout with a zero-width cylinder: a single pinhole plane."""
        n = _unit(up)
        d = _unit(forward)
        s = 0.5 * (out_resolution[0] - 1)
        return cls(d, d, n, focal, tuple(out_resolution), (s, s))


def _camera_up(T_c_b: RigidTransform) -> np.ndarray:
    # camera "up" (-y) expressed in the body frame
    return T_c_b.matrix.T @ np.array([0.0, -1.0, 0.0])


def build_config(
    rig: RigConfig,
    cam: int,
    out_resolution=DEFAULT_OUT_RESOLUTION,
    fov_span: float = DEFAULT_FOV_SPAN,
) -> HybridProjectionConfig:
    """Warp geometry for camera ``cam`` derived from the rig layout.

    The rig plane is the least-squares plane through the camera centers; its
    normal is the cylinder axis.  Each side plane contains the baseline to the
    neighbor on that side (its normal is perpendicular to the baseline within
    the rig plane, pointing away from the rig).

    Raises:
        DegenerateRigError: when the camera centers are collinear.
    """
    centers = rig.centers()
    _, normal = fit_plane(centers)
    T = rig.extrinsics[cam]
    if normal @ _camera_up(T) < 0.0:
        normal = -normal
    axis_b = T.matrix.T @ np.array([0.0, 0.0, 1.0])
    fwd = axis_b - (axis_b @ normal) * normal
    if np.linalg.norm(fwd) < 1e-9:
        raise ValueError("optical axis is perpendicular to the rig plane")
    fwd = _unit(fwd)
    side_dir = np.cross(normal, fwd)  # points to the camera's left

    perps = []
    for nb in rig.neighbors(cam):
        b = centers[nb] - centers[cam]
        b = b - (b @ normal) * normal
        p = _unit(np.cross(normal, b))
        if p @ fwd < 0.0:
            p = -p
        perps.append((float(b @ side_dir), p))
    if len(perps) < 2:
        raise ValueError("camera needs two neighbors to build a hybrid projection")
    perps.sort(key=lambda e: e[0])
    right_b, left_b = perps[0][1], perps[-1][1]

    R = T.matrix
    return HybridProjectionConfig.from_directions(R @ left_b, R @ right_b, R @ normal, out_resolution, fov_span)


def warp_pixel_to_ray(x: np.ndarray, cfg: HybridProjectionConfig) -> np.ndarray:
    """Back-project warped pixels ``(2,)`` or ``(N, 2)`` to unit camera-frame rays."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    u, v = x[:, 0], x[:, 1]
    f = cfg.projection_focal
    s_l, s_r = cfg.seam_columns
    n = cfg.cylinder_axis
    d_r, e_r = cfg.right_plane_normal, cfg.right_tangent
    d_l, e_l = cfg.left_plane_normal, cfg.left_tangent
    h = -(v - cfg.principal_row)

    az = cfg.cylinder_span - (u - s_l) / f
    P = f * (np.cos(az)[:, None] * d_r + np.sin(az)[:, None] * e_r)
    left = u < s_l
    right = u > s_r
    P[left] = f * d_l + (s_l - u[left])[:, None] * e_l
    P[right] = f * d_r - (u[right] - s_r)[:, None] * e_r
    P += h[:, None] * n
    rays = P / np.linalg.norm(P, axis=1, keepdims=True)
    return rays[0] if single else rays


def ray_to_warp_pixel(rays: np.ndarray, cfg: HybridProjectionConfig) -> np.ndarray:
    """Forward warp: camera-frame rays to warped pixels; NaN where not imaged."""
    rays = np.asarray(rays, dtype=float)
    single = rays.ndim == 1
    r = np.atleast_2d(rays)
    f = cfg.projection_focal
    s_l, s_r = cfg.seam_columns
    cyl = cfg.cylinder_span
    a = r @ cfg.right_plane_normal
    b = r @ cfg.right_tangent
    c = r @ cfg.cylinder_axis
    az = np.mod(np.arctan2(b, a), 2 * math.pi)
    out = np.full((len(r), 2), np.nan)

    mid = az <= cyl
    rho = np.hypot(a, b)
    with np.errstate(divide="ignore", invalid="ignore"):
        out[mid, 0] = s_l + f * (cyl - az[mid])
        out[mid, 1] = cfg.principal_row - f * c[mid] / rho[mid]

        left = (~mid) & (az < cyl + 0.5 * math.pi)
        q = r[left] @ cfg.left_plane_normal
        out[left, 0] = s_l - f * (r[left] @ cfg.left_tangent) / q
        out[left, 1] = cfg.principal_row - f * c[left] / q

        right = (~mid) & (az > 1.5 * math.pi)
        out[right, 0] = s_r - f * b[right] / a[right]
        out[right, 1] = cfg.principal_row - f * c[right] / a[right]
    w, h = cfg.out_resolution
    bad = (out[:, 0] < -0.5) | (out[:, 0] > w - 0.5) | (out[:, 1] < -0.5) | (out[:, 1] > h - 0.5)
    out[bad] = np.nan
    return out[0] if single else out


def warp_rotation(rig: RigConfig, cam: int) -> RigidTransform:
    """Rotation taking the warp's canonical frame (x right, y down, z forward)
    to the camera frame, with forward = optical axis projected on the rig plane."""
    cfg = build_config(rig, cam)
    n = cfg.cylinder_axis
    z = np.array([0.0, 0.0, 1.0])
    fwd = _unit(z - (z @ n) * n)
    y = -n
    x = np.cross(y, fwd)
    return RigidTransform.from_matrix(np.column_stack([x, y, fwd]), np.zeros(3))


@dataclass
class RemapTable:
    """Source fisheye pixel for every warped pixel; invalid entries are ``-1``."""

    map: np.ndarray  # (out_h, out_w, 2) float64, (u, v) source coordinates
    src_resolution: tuple[int, int]

    @property
    def out_resolution(self) -> tuple[int, int]:
        return (self.map.shape[1], self.map.shape[0])

    @property
    def valid(self) -> np.ndarray:
        return self.map[..., 0] != SENTINEL

    def save(self, path) -> None:
        w, h = self.out_resolution
        lines = [f"REMAP {w} {h} {self.src_resolution[0]} {self.src_resolution[1]}"]
        flat = self.map.reshape(h, -1)
        for row in flat:
            lines.append(" ".join("-1 -1" if row[k] == SENTINEL else f"{row[k]:.6f} {row[k + 1]:.6f}" for k in range(0, len(row), 2)))
        Path(path).write_text("\n".join(lines) + "\n")

    @classmethod
    def load(cls, path) -> "RemapTable":
        text = Path(path).read_text().splitlines()
        head = text[0].split() if text else []
        if len(head) != 5 or head[0] != "REMAP":
            raise ParseError(f"{path}: missing REMAP header")
        w, h, sw, sh = (int(t) for t in head[1:])
        if len(text) - 1 < h:
            raise ParseError(f"{path}: expected {h} rows, found {len(text) - 1}")
        data = np.array([np.array(line.split(), dtype=float) for line in text[1 : h + 1]])
        if data.shape != (h, 2 * w):
            raise ParseError(f"{path}: malformed remap rows")
        return cls(data.reshape(h, w, 2), (sw, sh))


def build_remap_table(
    cfg: HybridProjectionConfig,
    phi: FisheyeIntrinsics,
    cam_from_warp_rotation: RigidTransform | None = None,
) -> RemapTable:
    """Source fisheye coordinates for each warped pixel.

    ``cam_from_warp_rotation`` optionally rotates the warp rays before
    projecting (identity when the config already lives in the camera frame).
    """
    w, h = cfg.out_resolution
    uu, vv = np.meshgrid(np.arange(w, dtype=float), np.arange(h, dtype=float))
    rays = warp_pixel_to_ray(np.column_stack([uu.ravel(), vv.ravel()]), cfg)
    if cam_from_warp_rotation is not None:
        rays = cam_from_warp_rotation.rotate(rays)
    ok = incidence_angle(rays) <= phi.fov_max
    pix = np.full((len(rays), 2), SENTINEL)
    pix[ok] = project(rays[ok], phi, check=False)
    sw, sh = phi.resolution
    inside = ok & (pix[:, 0] >= 0) & (pix[:, 0] <= sw - 1) & (pix[:, 1] >= 0) & (pix[:, 1] <= sh - 1)
    pix[~inside] = SENTINEL
    return RemapTable(pix.reshape(h, w, 2), (sw, sh))


def warp_image(src: np.ndarray, table: RemapTable) -> np.ndarray:
    """Bilinear resampling of ``src`` through ``table``; sentinel pixels are black."""
    src = np.asarray(src)
    sh, sw = src.shape[:2]
    if (sw, sh) != tuple(table.src_resolution):
        raise DimensionError(f"image is {sw}x{sh} but the table expects {table.src_resolution[0]}x{table.src_resolution[1]}")
    valid = table.valid
    out = np.zeros(table.map.shape[:2] + src.shape[2:], dtype=np.uint8)
    u = table.map[..., 0][valid]
    v = table.map[..., 1][valid]
    u0 = np.clip(np.floor(u).astype(int), 0, sw - 1)
    v0 = np.clip(np.floor(v).astype(int), 0, sh - 1)
    u1 = np.minimum(u0 + 1, sw - 1)
    v1 = np.minimum(v0 + 1, sh - 1)
    a = u - u0
    b = v - v0
    img = src.astype(float)
    if img.ndim == 3:
        a = a[:, None]
        b = b[:, None]
    val = (1 - a) * (1 - b) * img[v0, u0] + a * (1 - b) * img[v0, u1] + (1 - a) * b * img[v1, u0] + a * b * img[v1, u1]
    out[valid] = np.clip(np.rint(val), 0, 255).astype(np.uint8)
    return out


def read_pnm(path) -> np.ndarray:
    """Read an 8-bit binary PGM (P5) or PPM (P6) image."""
    from PIL import Image, UnidentifiedImageError

    path = Path(path)
    try:
        with open(path, "rb") as fh:
            magic = fh.read(2)
        if magic not in (b"P5", b"P6"):
            raise ParseError(f"{path}: not a binary PGM/PPM file (magic {magic!r})")
        with Image.open(path) as im:
            im.load()
            if im.mode not in ("L", "RGB"):
                raise ParseError(f"{path}: unsupported pixel format {im.mode}")
            return np.asarray(im).copy()
    except (UnidentifiedImageError, OSError, SyntaxError, ValueError) as exc:
        if isinstance(exc, ParseError):
            raise
        raise ParseError(f"{path}: {exc}") from exc


def write_pnm(path, img: np.ndarray) -> None:
    """Write a uint8 image as P5 (grayscale) or P6 (RGB)."""
    from PIL import Image

    img = np.asarray(img)
    if img.dtype != np.uint8:
        raise DimensionError("images must be 8-bit")
    if img.ndim == 2:
        Image.fromarray(img, mode="L").save(path, format="PPM")
    elif img.ndim == 3 and img.shape[2] == 3:
        Image.fromarray(img, mode="RGB").save(path, format="PPM")
    else:
        raise DimensionError(f"cannot write image of shape {img.shape}")
