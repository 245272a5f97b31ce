"""Randomized urban scene synthesis and rasterization to input planes.

A scene is a square world populated with rectilinear buildings (union of
axis-aligned rectangles drawn from the rect/L/T/H shape families),
roadside trees along the corridors between city blocks, and a single
transmitter. All sampling flows through one seeded stream in a fixed
order, so a scene is a pure function of (seed, params).

Rasterization produces per-cell heights sampled at cell centers,
normalized by a fixed 100 m ceiling so every legal height lands in
[0, 1]; frequency maps affinely from its 90 MHz band to [0, 1]; the
coordinate channels are grid_x[i,j] = j/(W-1), grid_y[i,j] = i/(H-1).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .tensor import RngState

HEIGHT_NORM_M = 100.0
FREQ_LOW_GHZ = 5.735
FREQ_HIGH_GHZ = 5.825

BUILDING_HEIGHT_RANGE_M = (30.0, 70.0)
TREE_HEIGHT_RANGE_M = (10.0, 50.0)
TX_HEIGHT_RANGE_M = (20.0, 80.0)

SHAPE_FAMILIES = ("rect", "L", "T", "H")


class GenerationError(RuntimeError):
    """Scene constraints could not be satisfied within bounded retries."""


@dataclass(frozen=True)
class Building:
    """Union of axis-aligned rectangles (x0, y0, x1, y1), one roof height."""

    rects: tuple[tuple[float, float, float, float], ...]
    height: float

    def contains(self, x: float, y: float) -> bool:
        return any(x0 <= x < x1 and y0 <= y < y1 for x0, y0, x1, y1 in self.rects)

    def bounds(self) -> tuple[float, float, float, float]:
        xs0, ys0, xs1, ys1 = zip(*self.rects)
        return min(xs0), min(ys0), max(xs1), max(ys1)

    def wall_segments(self) -> list[tuple[float, float, float, float]]:
        """All rectangle edges as (ax, ay, bx, by). Edges interior to the
        union are harmless for tracing because every rect shares one roof
        height: a ray either reflects at the outer wall or clears all of
        them."""
        segs = []
        for x0, y0, x1, y1 in self.rects:
            segs += [
                (x0, y0, x1, y0),
                (x1, y0, x1, y1),
                (x1, y1, x0, y1),
                (x0, y1, x0, y0),
            ]
        return segs


@dataclass(frozen=True)
class SceneSpec:
    """Full description of one sample's environment and radiation source."""

    world_size: float
    buildings: tuple[Building, ...]
    trees: tuple[tuple[float, float, float], ...]  # (x, y, height)
    tx: tuple[float, float, float]  # (x, y, height)
    freq_ghz: float
    tree_radius: float = 3.0

    def tx_inside_building(self) -> bool:
        x, y, _ = self.tx
        return any(b.contains(x, y) for b in self.buildings)

    def validate(self) -> None:
        ws = self.world_size
        if ws <= 0:
            raise ValueError("world_size must be positive")
        lo, hi = BUILDING_HEIGHT_RANGE_M
        for b in self.buildings:
            if not (lo <= b.height <= hi):
                raise ValueError(f"building height {b.height} outside [{lo}, {hi}] m")
        lo, hi = TREE_HEIGHT_RANGE_M
        for _, _, h in self.trees:
            if not (lo <= h <= hi):
                raise ValueError(f"tree height {h} outside [{lo}, {hi}] m")
        lo, hi = TX_HEIGHT_RANGE_M
        if not (lo <= self.tx[2] <= hi):
            raise ValueError(f"tx height {self.tx[2]} outside [{lo}, {hi}] m")
        if not (FREQ_LOW_GHZ <= self.freq_ghz <= FREQ_HIGH_GHZ):
            raise ValueError(f"frequency {self.freq_ghz} outside the allowed band")
        if not (0 <= self.tx[0] < ws and 0 <= self.tx[1] < ws):
            raise ValueError("tx outside world bounds")
        if self.tx_inside_building():
            raise ValueError("tx inside a building footprint")
        self._check_disjoint_footprints()

    def _check_disjoint_footprints(self) -> None:
        boxes = [b.bounds() for b in self.buildings]
        for i in range(len(boxes)):
            for j in range(i + 1, len(boxes)):
                a, b = boxes[i], boxes[j]
                if a[0] < b[2] and b[0] < a[2] and a[1] < b[3] and b[1] < a[3]:
                    raise ValueError(f"building footprints {i} and {j} overlap")


@dataclass(frozen=True)
class SceneParams:
    """Knobs for the scene sampler. Height/frequency ranges are fixed."""

    world_size: float = 512.0
    block_grid: int = 4
    road_width: float = 14.0
    building_margin: float = 6.0
    building_density: float = 0.7
    building_fill: tuple[float, float] = (0.55, 0.95)
    shape_families: tuple[str, ...] = SHAPE_FAMILIES
    tree_spacing: float = 10.0
    tree_radius: float = 3.0
    tx_max_tries: int = 1000

    def __post_init__(self):
        if self.world_size <= 0 or self.block_grid < 1:
            raise ValueError("world_size and block_grid must be positive")
        unknown = set(self.shape_families) - set(SHAPE_FAMILIES)
        if unknown:
            raise ValueError(f"unknown shape families {sorted(unknown)}; known: {SHAPE_FAMILIES}")


def _carve_footprint(rng: RngState, family: str, x0, y0, x1, y1):
    w, h = x1 - x0, y1 - y0
    if family == "rect":
        return ((x0, y0, x1, y1),)
    tw = float(rng.uniform((), 0.30, 0.50)) * w
    th = float(rng.uniform((), 0.30, 0.50)) * h
    cx = (x0 + x1) / 2.0
    cy = (y0 + y1) / 2.0
    if family == "L":
        return ((x0, y0, x0 + tw, y1), (x0, y0, x1, y0 + th))
    if family == "T":
        return ((x0, y1 - th, x1, y1), (cx - tw / 2, y0, cx + tw / 2, y1))
    if family == "H":
        return (
            (x0, y0, x0 + tw, y1),
            (x1 - tw, y0, x1, y1),
            (x0 + tw, cy - th / 2, x1 - tw, cy + th / 2),
        )
    raise ValueError(f"unknown shape family {family!r}")


def generate_scene(rng: RngState, params: SceneParams = SceneParams()) -> SceneSpec:
    """Sample one scene. Sampling order is fixed: buildings block by block
    (row-major), trees along vertical then horizontal corridors, then the
    transmitter, then the frequency."""
    ws = params.world_size
    cell = ws / params.block_grid
    half_road = params.road_width / 2.0

    buildings: list[Building] = []
    for r in range(params.block_grid):
        for c in range(params.block_grid):
            if float(rng.uniform(())) >= params.building_density:
                continue
            ix0 = c * cell + half_road + params.building_margin
            iy0 = r * cell + half_road + params.building_margin
            ix1 = (c + 1) * cell - half_road - params.building_margin
            iy1 = (r + 1) * cell - half_road - params.building_margin
            if ix1 - ix0 < 10.0 or iy1 - iy0 < 10.0:
                continue  # block too small to host a building
            family = params.shape_families[rng.randint(0, len(params.shape_families))]
            flo, fhi = params.building_fill
            w = float(rng.uniform((), flo, fhi)) * (ix1 - ix0)
            h = float(rng.uniform((), flo, fhi)) * (iy1 - iy0)
            bx0 = ix0 + float(rng.uniform(())) * (ix1 - ix0 - w)
            by0 = iy0 + float(rng.uniform(())) * (iy1 - iy0 - h)
            height = float(rng.uniform((), *BUILDING_HEIGHT_RANGE_M))
            rects = _carve_footprint(rng, family, bx0, by0, bx0 + w, by0 + h)
            buildings.append(Building(rects=rects, height=height))

    trees: list[tuple[float, float, float]] = []

    def tree_row(line_pos: float, offset: float, vertical: bool):
        t = float(rng.uniform((), 0.0, params.tree_spacing))
        while t < ws:
            x, y = (line_pos + offset, t) if vertical else (t, line_pos + offset)
            if 0 <= x < ws and 0 <= y < ws:
                trees.append((x, y, float(rng.uniform((), *TREE_HEIGHT_RANGE_M))))
            t += params.tree_spacing * float(rng.uniform((), 0.7, 1.3))

    row_offset = half_road * 0.6
    for k in range(1, params.block_grid):
        for off in (-row_offset, row_offset):
            tree_row(k * cell, off, vertical=True)
    for k in range(1, params.block_grid):
        for off in (-row_offset, row_offset):
            tree_row(k * cell, off, vertical=False)

    tx_xy = None
    for _ in range(params.tx_max_tries):
        x = float(rng.uniform((), 0.0, ws))
        y = float(rng.uniform((), 0.0, ws))
        if not any(b.contains(x, y) for b in buildings):
            tx_xy = (x, y)
            break
    if tx_xy is None:
        raise GenerationError(
            f"could not place transmitter outside buildings in {params.tx_max_tries} tries"
        )
    tx_h = float(rng.uniform((), *TX_HEIGHT_RANGE_M))
    freq = float(rng.uniform((), FREQ_LOW_GHZ, FREQ_HIGH_GHZ))

    scene = SceneSpec(
        world_size=ws,
        buildings=tuple(buildings),
        trees=tuple(trees),
        tx=(tx_xy[0], tx_xy[1], tx_h),
        freq_ghz=freq,
        tree_radius=params.tree_radius,
    )
    scene.validate()
    return scene


# ---------------------------------------------------------------------------
# rasterization
# ---------------------------------------------------------------------------


@dataclass
class InputFeatureMaps:
    """Normalized input planes, all [H, W] float32 in [0, 1]."""

    building_map: np.ndarray
    tree_map: np.ndarray
    tx_map: np.ndarray
    freq_map: np.ndarray
    grid_x: np.ndarray
    grid_y: np.ndarray

    def stacked(self, include_grid: bool) -> np.ndarray:
        planes = [self.building_map, self.tree_map, self.tx_map, self.freq_map]
        if include_grid:
            planes += [self.grid_x, self.grid_y]
        return np.stack(planes, axis=0)


def grid_channels(h: int, w: int) -> tuple[np.ndarray, np.ndarray]:
    gx = (np.arange(w, dtype=np.float32) / np.float32(w - 1))[None, :].repeat(h, axis=0)
    gy = (np.arange(h, dtype=np.float32) / np.float32(h - 1))[:, None].repeat(w, axis=1)
    return gx, gy


def rasterize_scene(scene: SceneSpec, h_in: int, w_in: int) -> InputFeatureMaps:
    """Sample object heights at cell centers and normalize every plane."""
    if h_in < 8 or w_in < 8:
        raise ValueError(f"resolution must be at least 8, got {h_in}x{w_in}")
    ws = scene.world_size
    tx_x, tx_y, tx_h = scene.tx
    if not (0 <= tx_x < ws and 0 <= tx_y < ws):
        raise ValueError("tx outside world bounds")

    cx = (np.arange(w_in, dtype=np.float64) + 0.5) * (ws / w_in)
    cy = (np.arange(h_in, dtype=np.float64) + 0.5) * (ws / h_in)

    bmap = np.zeros((h_in, w_in), np.float32)
    for b in scene.buildings:
        hval = np.float32(b.height) / np.float32(HEIGHT_NORM_M)
        for x0, y0, x1, y1 in b.rects:
            jm = (cx >= x0) & (cx < x1)
            im = (cy >= y0) & (cy < y1)
            region = bmap[np.ix_(im, jm)]
            np.maximum(region, hval, out=region)
            bmap[np.ix_(im, jm)] = region

    tmap = np.zeros((h_in, w_in), np.float32)
    r = scene.tree_radius
    for x, y, h in scene.trees:
        j0 = max(0, int(np.searchsorted(cx, x - r)))
        j1 = min(w_in, int(np.searchsorted(cx, x + r)) + 1)
        i0 = max(0, int(np.searchsorted(cy, y - r)))
        i1 = min(h_in, int(np.searchsorted(cy, y + r)) + 1)
        if j0 >= j1 or i0 >= i1:
            continue
        dx = cx[j0:j1] - x
        dy = cy[i0:i1] - y
        mask = (dy[:, None] ** 2 + dx[None, :] ** 2) <= r * r
        hval = np.float32(h) / np.float32(HEIGHT_NORM_M)
        region = tmap[i0:i1, j0:j1]
        region[mask] = np.maximum(region[mask], hval)

    txmap = np.zeros((h_in, w_in), np.float32)
    tj = min(int(tx_x / ws * w_in), w_in - 1)
    ti = min(int(tx_y / ws * h_in), h_in - 1)
    txmap[ti, tj] = np.float32(tx_h) / np.float32(HEIGHT_NORM_M)

    fnorm = (scene.freq_ghz - FREQ_LOW_GHZ) / (FREQ_HIGH_GHZ - FREQ_LOW_GHZ)
    fmap = np.full((h_in, w_in), np.float32(fnorm), np.float32)

    gx, gy = grid_channels(h_in, w_in)
    return InputFeatureMaps(bmap, tmap, txmap, fmap, gx, gy)


def split_dataset(n: int, ratio: tuple[int, int] = (99, 1), seed: int = 0):
    """Seeded shuffle, then split ``n`` indices train:val by ``ratio``.

    Both sides are non-empty for n >= 2; together they cover 0..n-1.
    """
    if n < 2:
        raise ValueError(f"need at least 2 samples to split, got {n}")
    a, b = ratio
    if a <= 0 or b <= 0:
        raise ValueError(f"ratio parts must be positive, got {ratio}")
    n_val = int(round(n * b / (a + b)))
    n_val = min(max(n_val, 1), n - 1)
    perm = RngState(seed).permutation(n)
    return perm[: n - n_val].copy(), perm[n - n_val :].copy()


# ---------------------------------------------------------------------------
# scene text files (one scene per file, explicit units)
# ---------------------------------------------------------------------------

_SCENE_HEADER = "radionet-scene 1"


def dump_scene(scene: SceneSpec) -> str:
    lines = [
        _SCENE_HEADER,
        f"world_size_m {scene.world_size!r}",
        f"freq_ghz {scene.freq_ghz!r}",
        f"tree_radius_m {scene.tree_radius!r}",
        f"tx_m {scene.tx[0]!r} {scene.tx[1]!r} {scene.tx[2]!r}",
    ]
    for b in scene.buildings:
        coords = " ".join(repr(v) for rect in b.rects for v in rect)
        lines.append(f"building_m {b.height!r} {coords}")
    for x, y, h in scene.trees:
        lines.append(f"tree_m {x!r} {y!r} {h!r}")
    return "\n".join(lines) + "\n"


def parse_scene(text: str) -> SceneSpec:
    lines = [ln.strip() for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]
    if not lines or lines[0] != _SCENE_HEADER:
        raise ValueError(f"not a scene file (expected header {_SCENE_HEADER!r})")
    fields: dict[str, float] = {}
    buildings: list[Building] = []
    trees: list[tuple[float, float, float]] = []
    tx = None
    for ln in lines[1:]:
        key, *vals = ln.split()
        if key in ("world_size_m", "freq_ghz", "tree_radius_m"):
            fields[key] = float(vals[0])
        elif key == "tx_m":
            tx = (float(vals[0]), float(vals[1]), float(vals[2]))
        elif key == "building_m":
            height = float(vals[0])
            coords = [float(v) for v in vals[1:]]
            if len(coords) % 4:
                raise ValueError(f"building rect coordinates not a multiple of 4: {ln!r}")
            rects = tuple(tuple(coords[i : i + 4]) for i in range(0, len(coords), 4))
            buildings.append(Building(rects=rects, height=height))
        elif key == "tree_m":
            trees.append((float(vals[0]), float(vals[1]), float(vals[2])))
        else:
            raise ValueError(f"unknown scene line {key!r}")
    if tx is None or "world_size_m" not in fields or "freq_ghz" not in fields:
        raise ValueError("scene file missing world_size_m, freq_ghz or tx_m")
    scene = SceneSpec(
        world_size=fields["world_size_m"],
        buildings=tuple(buildings),
        trees=tuple(trees),
        tx=tx,
        freq_ghz=fields["freq_ghz"],
        tree_radius=fields.get("tree_radius_m", 3.0),
    )
    scene.validate()
    return scene


def save_scene(scene: SceneSpec, path) -> None:
    with open(path, "w", encoding="ascii") as fh:
        fh.write(dump_scene(scene))


def load_scene(path) -> SceneSpec:
    with open(path, "r", encoding="ascii") as fh:
        return parse_scene(fh.read())
