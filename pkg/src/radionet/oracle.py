"""Ray-launching propagation simulator producing ground-truth radio maps.

Model
-----
2.5-D: geometry is traced in the horizontal plane; heights matter only
for occlusion. Rays launch from the transmitter at uniform azimuth
steps and reflect specularly off building walls, up to a bounce limit.
A wall occludes a ray only if the wall tops the ray's height at the
crossing; the ray height descends linearly from the transmitter height
to the receiver height over the maximum unfolded range.

Every grid cell whose center lies within a fixed capture radius (half a
cell diagonal) of a ray segment receives that segment's path class,
identified by the sequence of walls bounced so far. The class's power
at a cell uses the exact unfolded distance from the current mirror
image of the transmitter to the cell center, so line-of-sight power
reproduces the free-space formula exactly rather than up to ray
discretization. A cell hearing several distinct path classes sums their
linear powers (first ray to deliver a class wins; later rays of the
same class are the same path). Cells never reached stay at the clamp
floor.

Transmit power is fixed so a free-space receiver 10 m away reads the
clamp ceiling of -70 dB (evaluated at the 5.78 GHz band center).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .scene import SceneSpec


def fspl(distance_m, freq_ghz) -> float:
    """Free-space path loss in dB: 20 log10(d_km) + 20 log10(f_MHz) + 32.45."""
    d = np.asarray(distance_m, dtype=np.float64)
    if np.any(d <= 0):
        raise ValueError(f"fspl needs positive distance, got {distance_m}")
    if np.any(np.asarray(freq_ghz) <= 0):
        raise ValueError(f"fspl needs positive frequency, got {freq_ghz}")
    out = 20.0 * np.log10(d / 1000.0) + 20.0 * np.log10(np.asarray(freq_ghz) * 1000.0) + 32.45
    return float(out) if out.ndim == 0 else out


CLAMP_MIN_DB = -250.0
CLAMP_MAX_DB = -70.0
TX_REF_DISTANCE_M = 10.0
TX_REF_FREQ_GHZ = 5.78  # band center of 5.735..5.825 GHz
# ~= -2.31 dB: free space at 10 m then reads exactly -70 dB at band center
TX_POWER_DB = CLAMP_MAX_DB + fspl(TX_REF_DISTANCE_M, TX_REF_FREQ_GHZ)

_MIN_PATH_M = 1.0  # distance floor; anything closer clamps at the ceiling anyway


@dataclass(frozen=True)
class OracleConfig:
    n_rays: int = 720
    max_bounces: int = 2
    reflection_loss_db: float = 6.0
    tree_loss_db_per_m: float = 0.5
    rx_height: float = 1.5
    power_min: float = CLAMP_MIN_DB
    power_max: float = CLAMP_MAX_DB
    max_range: float | None = None  # None: world diagonal at trace time

    def __post_init__(self):
        if self.n_rays < 360:
            raise ValueError(f"n_rays must be at least 360, got {self.n_rays}")
        if not (0 <= self.max_bounces <= 5):
            raise ValueError(f"max_bounces must be in [0, 5], got {self.max_bounces}")
        if self.power_min >= self.power_max:
            raise ValueError("power_min must lie below power_max")


@dataclass
class RadioMap:
    """Received power per output cell, in dB and affinely normalized."""

    power_db: np.ndarray  # [H, W] float32 within [power_min, power_max]
    power_min: float = CLAMP_MIN_DB
    power_max: float = CLAMP_MAX_DB

    @property
    def normalized(self) -> np.ndarray:
        span = np.float32(self.power_max - self.power_min)
        return (self.power_db - np.float32(self.power_min)) / span

    @classmethod
    def from_normalized(cls, norm: np.ndarray, power_min=CLAMP_MIN_DB, power_max=CLAMP_MAX_DB):
        db = np.float32(power_min) + norm.astype(np.float32) * np.float32(power_max - power_min)
        return cls(power_db=db, power_min=power_min, power_max=power_max)


@dataclass(frozen=True)
class RayHit:
    distance: float
    wall_index: int
    wall: tuple[float, float, float, float]


class _WallSet:
    """Building walls flattened to coordinate arrays for vectorized casts."""

    def __init__(self, scene: SceneSpec):
        segs, heights = [], []
        for b in scene.buildings:
            for seg in b.wall_segments():
                segs.append(seg)
                heights.append(b.height)
        arr = np.array(segs, dtype=np.float64).reshape(-1, 4)
        self.ax, self.ay = arr[:, 0], arr[:, 1]
        self.sx, self.sy = arr[:, 2] - arr[:, 0], arr[:, 3] - arr[:, 1]
        self.height = np.array(heights, dtype=np.float64)
        self.segs = segs
        self.n = len(segs)

    def cast(self, px, py, dx, dy, height_at, s_offset, skip=-1):
        """Nearest occluding wall along (px,py)+t(dx,dy), or None.

        ``height_at(s)`` is the ray height at unfolded distance s;
        ``s_offset`` is the unfolded distance already travelled.
        """
        if self.n == 0:
            return None
        denom = dx * self.sy - dy * self.sx
        with np.errstate(divide="ignore", invalid="ignore"):
            qx, qy = self.ax - px, self.ay - py
            t = (qx * self.sy - qy * self.sx) / denom
            u = (qx * dy - qy * dx) / denom
        ok = np.isfinite(t) & (t > 1e-9) & (u >= 0.0) & (u <= 1.0)
        if skip >= 0:
            ok[skip] = False
        if not ok.any():
            return None
        ok &= self.height > height_at(s_offset + t)
        if not ok.any():
            return None
        t_masked = np.where(ok, t, np.inf)
        idx = int(np.argmin(t_masked))
        return RayHit(distance=float(t[idx]), wall_index=idx, wall=tuple(self.segs[idx]))


def ray_cast(
    origin,
    direction,
    scene: SceneSpec,
    height_start: float | None = None,
    height_end: float = 1.5,
    profile_length: float | None = None,
) -> RayHit | None:
    """First occluding building wall along a ray, or None.

    The ray height interpolates linearly from ``height_start`` (default:
    the scene's transmitter height) to ``height_end`` over
    ``profile_length`` (default: the world diagonal); a wall only counts
    if it tops the ray at the crossing point.
    """
    dx, dy = float(direction[0]), float(direction[1])
    norm = math.hypot(dx, dy)
    if norm == 0:
        raise ValueError("direction must be nonzero")
    dx, dy = dx / norm, dy / norm
    h0 = scene.tx[2] if height_start is None else height_start
    plen = scene.world_size * math.sqrt(2.0) if profile_length is None else profile_length

    def height_at(s):
        frac = np.minimum(np.asarray(s, dtype=np.float64) / plen, 1.0)
        return h0 + (height_end - h0) * frac

    return _WallSet(scene).cast(float(origin[0]), float(origin[1]), dx, dy, height_at, 0.0)


def _reflect(dx, dy, wall):
    ax, ay, bx, by = wall
    if abs(ax - bx) < 1e-12:  # vertical wall: flip x
        return -dx, dy
    return dx, -dy


def _mirror(x, y, wall):
    ax, ay, bx, by = wall
    if abs(ax - bx) < 1e-12:
        return 2.0 * ax - x, y
    return x, 2.0 * ay - y


def trace_radio_map(scene: SceneSpec, cfg: OracleConfig, h_out: int, w_out: int) -> RadioMap:
    """Launch cfg.n_rays rays and accumulate per-cell received power."""
    if scene.tx_inside_building():
        raise ValueError("tx inside a building footprint")
    ws = scene.world_size
    tx_x, tx_y, tx_h = scene.tx
    max_range = cfg.max_range if cfg.max_range is not None else ws * math.sqrt(2.0)
    walls = _WallSet(scene)

    def height_at(s):
        frac = np.minimum(np.asarray(s, dtype=np.float64) / max_range, 1.0)
        return tx_h + (cfg.rx_height - tx_h) * frac

    cxs = (np.arange(w_out, dtype=np.float64) + 0.5) * (ws / w_out)
    cys = (np.arange(h_out, dtype=np.float64) + 0.5) * (ws / h_out)
    px_grid, py_grid = np.meshgrid(cxs, cys)  # [H, W]
    pxf, pyf = px_grid.ravel(), py_grid.ravel()
    capture_r = 0.5 * math.hypot(ws / w_out, ws / h_out)
    capture_r2 = capture_r * capture_r

    trees = np.array([(x, y) for x, y, _ in scene.trees], dtype=np.float64).reshape(-1, 2)
    tree_scale = (
        np.array([h for _, _, h in scene.trees], dtype=np.float64) / 50.0 * cfg.tree_loss_db_per_m
    )
    tree_r = scene.tree_radius

    # per flat cell index: {wall-sequence signature: linear power}
    contribs: dict[int, dict[tuple, float]] = {}

    for ray_idx in range(cfg.n_rays):
        theta = 2.0 * math.pi * ray_idx / cfg.n_rays
        dx, dy = math.cos(theta), math.sin(theta)
        px, py = tx_x, tx_y
        img_x, img_y = tx_x, tx_y
        s_acc = 0.0
        foliage_db_acc = 0.0
        signature: tuple = ()
        prev_wall = -1
        for bounce in range(cfg.max_bounces + 1):
            remaining = max_range - s_acc
            if remaining <= 0:
                break
            hit = walls.cast(px, py, dx, dy, height_at, s_acc, skip=prev_wall)
            seg_len = min(hit.distance, remaining) if hit else remaining

            # foliage crossings along this segment as [start, end) intervals
            if trees.shape[0]:
                tcx = (trees[:, 0] - px) * dx + (trees[:, 1] - py) * dy
                perp2 = (trees[:, 0] - px) ** 2 + (trees[:, 1] - py) ** 2 - tcx**2
                inside = perp2 < tree_r * tree_r
                half = np.sqrt(np.maximum(tree_r * tree_r - perp2[inside], 0.0))
                lo = np.maximum(tcx[inside] - half, 0.0)
                hi = np.minimum(tcx[inside] + half, seg_len)
                keep = hi > lo
                fol_lo, fol_hi, fol_scale = lo[keep], hi[keep], tree_scale[inside][keep]
            else:
                fol_lo = fol_hi = fol_scale = np.empty(0)

            # cells captured by this segment
            tau = np.clip((pxf - px) * dx + (pyf - py) * dy, 0.0, seg_len)
            qx = pxf - (px + tau * dx)
            qy = pyf - (py + tau * dy)
            captured = np.nonzero(qx * qx + qy * qy <= capture_r2)[0]
            if captured.size:
                dpath = np.hypot(pxf[captured] - img_x, pyf[captured] - img_y)
                dpath = np.maximum(dpath, _MIN_PATH_M)
                fol_db = np.zeros(captured.size)
                if fol_lo.size:
                    overlap = np.clip(tau[captured][:, None], fol_lo, fol_hi) - fol_lo
                    fol_db = (overlap * fol_scale).sum(axis=1)
                power_db = (
                    TX_POWER_DB
                    - fspl(dpath, scene.freq_ghz)
                    - len(signature) * cfg.reflection_loss_db
                    - foliage_db_acc
                    - fol_db
                )
                linear = 10.0 ** (power_db / 10.0)
                for cell, lin in zip(captured.tolist(), linear.tolist()):
                    classes = contribs.setdefault(cell, {})
                    if signature not in classes:
                        classes[signature] = lin

            if hit is None or hit.distance > remaining:
                break
            # advance through the specular reflection
            foliage_db_acc += float(((fol_hi - fol_lo) * fol_scale).sum()) if fol_lo.size else 0.0
            px, py = px + dx * seg_len, py + dy * seg_len
            img_x, img_y = _mirror(img_x, img_y, hit.wall)
            dx, dy = _reflect(dx, dy, hit.wall)
            s_acc += seg_len
            signature = signature + (hit.wall_index,)
            prev_wall = hit.wall_index

    power = np.full(h_out * w_out, cfg.power_min, dtype=np.float64)
    for cell, classes in contribs.items():
        total = 0.0
        for lin in classes.values():
            total += lin
        power[cell] = 10.0 * math.log10(total)
    np.clip(power, cfg.power_min, cfg.power_max, out=power)
    return RadioMap(
        power_db=power.reshape(h_out, w_out).astype(np.float32),
        power_min=cfg.power_min,
        power_max=cfg.power_max,
    )
