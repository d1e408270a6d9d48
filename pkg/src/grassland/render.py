"""Deterministic rasterization of scenario frames and draft overlays.

Everything is drawn with integer numpy masks evaluated at pixel centres, so
identical inputs give identical bytes on every platform. Pillow is only used
to encode PNG and GIF containers.
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Callable, Iterable, NamedTuple, Sequence, Union

import numpy as np
from PIL import GifImagePlugin, Image

from grassland.errors import ContractViolation, HorizonError, ParseError
from grassland.world import Cell, Coord, DynamicScenario, GridWorld, as_coord

DEFAULT_CELL_PX = 32
DEFAULT_FRAMES = 6
FRAME_MS = 1000


def _rgb(hex_code: str) -> tuple[int, int, int]:
    return tuple(int(hex_code[i:i + 2], 16) for i in (1, 3, 5))


GRASS = _rgb("#4CAF50")
WATER = _rgb("#2196F3")
LAVA = _rgb("#F44336")
WALL_BODY = _rgb("#8D6E63")
WALL_BORDER = _rgb("#FFEB3B")
START_FLAG = _rgb("#FFFFFF")
DEST_FLAG = _rgb("#B71C1C")
AGENT = _rgb("#7B1FA2")
PATH = _rgb("#D50000")
MARK = _rgb("#000000")

PATH_WIDTH = 3
MARK_WIDTH = 2

_BASE_KINDS = {GRASS: Cell.GRASS, WATER: Cell.WATER, WALL_BODY: Cell.WALL}
# Sample points as fractions of the cell (row, col); valid for cell_px >= 8.
_BASE_PROBE = (0.8, 0.8)
_FLAG_PROBE = (0.35, 0.35)
MIN_PARSE_PX = 8


@dataclass(frozen=True)
class PathLine:
    coords: tuple[Coord, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "coords", tuple(as_coord(c) for c in self.coords))


@dataclass(frozen=True)
class PositionMark:
    coord: Coord

    def __post_init__(self) -> None:
        object.__setattr__(self, "coord", as_coord(self.coord))


Overlay = Union[PathLine, PositionMark]


@dataclass(frozen=True, eq=False)
class Frame:
    pixels: np.ndarray  # (rows, cols, 3) uint8, read-only
    cell_px: int
    tick: int

    def __post_init__(self) -> None:
        px = np.ascontiguousarray(self.pixels, dtype=np.uint8)
        if px.ndim != 3 or px.shape[2] != 3:
            raise ContractViolation(f"frame pixels must be HxWx3, got {px.shape}")
        px.setflags(write=False)
        object.__setattr__(self, "pixels", px)

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Frame):
            return NotImplemented
        return (
            self.cell_px == other.cell_px
            and self.tick == other.tick
            and np.array_equal(self.pixels, other.pixels)
        )

    __hash__ = None  # type: ignore[assignment]

    @classmethod
    def from_png(cls, data: bytes, cell_px: int, tick: int) -> Frame:
        with Image.open(io.BytesIO(data)) as im:
            return cls(np.asarray(im.convert("RGB")), cell_px, tick)


# -- masks ---------------------------------------------------------------------

def _centres(n: int) -> np.ndarray:
    return np.arange(n) + 0.5


@lru_cache(maxsize=None)
def _flag_mask(px: int) -> np.ndarray:
    """Triangle pennant in the upper-left of the cell."""
    ys, xs = np.meshgrid(_centres(px) / px, _centres(px) / px, indexing="ij")
    (x0, y0), (x1, y1), (x2, y2) = (0.25, 0.15), (0.25, 0.55), (0.65, 0.35)

    def side(ax, ay, bx, by):
        return (bx - ax) * (ys - ay) - (by - ay) * (xs - ax)

    d0, d1, d2 = side(x0, y0, x1, y1), side(x1, y1, x2, y2), side(x2, y2, x0, y0)
    mask = ((d0 >= 0) & (d1 >= 0) & (d2 >= 0)) | ((d0 <= 0) & (d1 <= 0) & (d2 <= 0))
    mask.setflags(write=False)
    return mask


@lru_cache(maxsize=None)
def _circle_mask(px: int) -> np.ndarray:
    ys, xs = np.meshgrid(_centres(px), _centres(px), indexing="ij")
    mask = (ys - px / 2) ** 2 + (xs - px / 2) ** 2 <= (px / 4) ** 2
    mask.setflags(write=False)
    return mask


@lru_cache(maxsize=None)
def _outline_mask(px: int, width: int) -> np.ndarray:
    mask = np.ones((px, px), dtype=bool)
    mask[width:px - width, width:px - width] = False
    mask.setflags(write=False)
    return mask


def _wall_border(px: int) -> int:
    return max(1, px // 8)


def _paint(img: np.ndarray, pos: Coord, px: int, mask: np.ndarray, color) -> None:
    tile = img[pos[0] * px:(pos[0] + 1) * px, pos[1] * px:(pos[1] + 1) * px]
    tile[mask] = color


def _draw_segment(img: np.ndarray, a: tuple[float, float], b: tuple[float, float], radius: float, color) -> None:
    h, w = img.shape[:2]
    top = max(0, int(np.floor(min(a[0], b[0]) - radius)))
    bottom = min(h, int(np.ceil(max(a[0], b[0]) + radius)) + 1)
    left = max(0, int(np.floor(min(a[1], b[1]) - radius)))
    right = min(w, int(np.ceil(max(a[1], b[1]) + radius)) + 1)
    ys, xs = np.meshgrid(np.arange(top, bottom) + 0.5, np.arange(left, right) + 0.5, indexing="ij")
    dy, dx = b[0] - a[0], b[1] - a[1]
    length2 = dy * dy + dx * dx
    if length2 == 0:
        t = np.zeros_like(ys)
    else:
        t = np.clip(((ys - a[0]) * dy + (xs - a[1]) * dx) / length2, 0.0, 1.0)
    dist2 = (ys - (a[0] + t * dy)) ** 2 + (xs - (a[1] + t * dx)) ** 2
    img[top:bottom, left:right][dist2 <= radius * radius] = color


def _draw_overlay(img: np.ndarray, overlay: Overlay, px: int) -> None:
    if isinstance(overlay, PositionMark):
        _paint(img, overlay.coord, px, _circle_mask(px), AGENT)
        _paint(img, overlay.coord, px, _outline_mask(px, MARK_WIDTH), MARK)
        return
    centres = [((r + 0.5) * px, (c + 0.5) * px) for r, c in overlay.coords]
    if len(centres) == 1:
        centres = centres * 2
    for a, b in zip(centres, centres[1:]):
        _draw_segment(img, a, b, PATH_WIDTH / 2, PATH)


def _overlay_coords(overlay: Overlay) -> Iterable[Coord]:
    return overlay.coords if isinstance(overlay, PathLine) else (overlay.coord,)


# -- rendering -----------------------------------------------------------------

def _render_base(world: GridWorld, lava: frozenset[Coord], px: int) -> np.ndarray:
    img = np.empty((world.height * px, world.width * px, 3), dtype=np.uint8)
    border = _wall_border(px)
    for r, row in enumerate(world.cells):
        for c, kind in enumerate(row):
            tile = img[r * px:(r + 1) * px, c * px:(c + 1) * px]
            if kind is Cell.WALL:
                tile[:] = WALL_BORDER
                tile[border:px - border, border:px - border] = WALL_BODY
            elif (r, c) in lava:
                tile[:] = LAVA
            else:
                tile[:] = WATER if kind is Cell.WATER else GRASS
    if world.start is not None:
        _paint(img, world.start, px, _flag_mask(px), START_FLAG)
    if world.dest is not None:
        _paint(img, world.dest, px, _flag_mask(px), DEST_FLAG)
    return img


def render_frame(
    scenario: DynamicScenario,
    t: int,
    overlays: Sequence[Overlay] = (),
    cell_px: int = DEFAULT_CELL_PX,
) -> Frame:
    """Rasterize tick ``t``; overlays are drawn last, in list order."""
    if cell_px < 1:
        raise ContractViolation(f"cell_px must be positive, got {cell_px}")
    world = scenario.world
    for overlay in overlays:
        for pos in _overlay_coords(overlay):
            if not world.in_bounds(pos):
                raise ContractViolation(f"overlay coordinate {pos} outside {world.height}x{world.width} grid")
    img = _render_base(world, scenario.lava_at(t), cell_px)
    for overlay in overlays:
        _draw_overlay(img, overlay, cell_px)
    return Frame(img, cell_px, t)


OverlaySource = Union[Sequence[Sequence[Overlay]], Callable[[int], Sequence[Overlay]], None]


def render_video(
    scenario: DynamicScenario,
    frames: int = DEFAULT_FRAMES,
    overlays_per_tick: OverlaySource = None,
    cell_px: int = DEFAULT_CELL_PX,
) -> list[Frame]:
    """One frame per tick ``0..frames-1`` (one frame per second of video)."""
    if frames < 1:
        raise ContractViolation("a video needs at least one frame")
    if frames > scenario.horizon + 1:
        raise HorizonError(f"{frames} frames exceed horizon {scenario.horizon}")
    out = []
    for t in range(frames):
        if overlays_per_tick is None:
            overlays: Sequence[Overlay] = ()
        elif callable(overlays_per_tick):
            overlays = overlays_per_tick(t)
        else:
            overlays = overlays_per_tick[t]
        out.append(render_frame(scenario, t, overlays, cell_px))
    return out


class ParsedFrame(NamedTuple):
    world: GridWorld
    lava: frozenset[Coord]


def parse_frame(frame: Frame) -> ParsedFrame:
    """Recover the logical grid from a clean (overlay-free) frame.

    Each cell is classified from two probe pixels, then the result is
    re-rendered and compared pixel for pixel; any mismatch (an overlay, a
    foreign image) is a :class:`ParseError` naming the first bad cell.
    """
    px = frame.cell_px
    if px < MIN_PARSE_PX:
        raise ParseError(f"cell_px {px} too small to parse (need >= {MIN_PARSE_PX})")
    if frame.height % px or frame.width % px:
        raise ParseError(f"frame {frame.width}x{frame.height} is not a multiple of cell_px {px}")
    rows, cols = frame.height // px, frame.width // px
    base_dy, base_dx = (int(f * px) for f in _BASE_PROBE)
    flag_dy, flag_dx = (int(f * px) for f in _FLAG_PROBE)
    cells: list[list[Cell]] = []
    lava = set()
    start = dest = None
    for r in range(rows):
        row = []
        for c in range(cols):
            y, x = r * px, c * px
            base = tuple(int(v) for v in frame.pixels[y + base_dy, x + base_dx])
            if base == LAVA:
                kind = Cell.GRASS
                lava.add(Coord(r, c))
            elif base in _BASE_KINDS:
                kind = _BASE_KINDS[base]
            else:
                raise ParseError(f"unrecognized cell signature {base} at {Coord(r, c)}")
            flag = tuple(int(v) for v in frame.pixels[y + flag_dy, x + flag_dx])
            if flag == START_FLAG:
                start = Coord(r, c)
            elif flag == DEST_FLAG:
                dest = Coord(r, c)
            row.append(kind)
        cells.append(row)
    world = GridWorld(tuple(tuple(r) for r in cells), start, dest)
    lava_set = frozenset(lava)
    expected = _render_base(world, lava_set, px)
    diff = np.any(expected != frame.pixels, axis=2)
    if diff.any():
        y, x = (int(v) for v in np.argwhere(diff)[0])
        raise ParseError(f"cell {Coord(y // px, x // px)} does not match a clean render (overlay present?)")
    return ParsedFrame(world, lava_set)


# -- encoding ------------------------------------------------------------------

_PALETTE = [GRASS, WATER, LAVA, WALL_BODY, WALL_BORDER, START_FLAG, DEST_FLAG, AGENT, PATH, MARK]


def _palette_image() -> Image.Image:
    pal = Image.new("P", (1, 1))
    flat = [v for color in _PALETTE for v in color]
    pal.putpalette(flat + [0] * (768 - len(flat)))
    return pal


def _to_indexed(frame: Frame) -> Image.Image:
    px = frame.pixels
    index = np.full(px.shape[:2], 255, dtype=np.uint8)
    for i, color in enumerate(_PALETTE):
        index[np.all(px == color, axis=2)] = i
    if (index == 255).any():
        # Foreign colours: fall back to Pillow quantization against our palette.
        return Image.fromarray(px, "RGB").quantize(palette=_palette_image(), dither=Image.Dither.NONE)
    im = Image.fromarray(index, "P")
    im.putpalette(_palette_image().getpalette())
    return im


def encode_png(frame: Frame) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(frame.pixels, "RGB").save(buf, format="PNG", compress_level=6)
    return buf.getvalue()


def encode_gif(frames: Sequence[Frame], duration_ms: int = FRAME_MS) -> bytes:
    """Animated GIF, one image block per frame, looping forever.

    Pillow's high-level writer merges identical consecutive frames, which
    would break the one-frame-per-tick contract, so blocks are assembled here.
    """
    if not frames:
        raise ContractViolation("cannot encode a GIF with zero frames")
    images = [_to_indexed(f) for f in frames]
    buf = io.BytesIO()
    header, _ = GifImagePlugin.getheader(images[0], info={"loop": 0, "optimize": False})
    for chunk in header:
        buf.write(chunk)
    for im in images:
        for chunk in GifImagePlugin.getdata(im, duration=duration_ms, optimize=False):
            buf.write(chunk)
    buf.write(b";")
    return buf.getvalue()


def write_frames(
    scenario: DynamicScenario,
    directory: str | Path,
    frames: int = DEFAULT_FRAMES,
    cell_px: int = DEFAULT_CELL_PX,
    gif: bool = True,
) -> list[Path]:
    """Write ``frame_<tttt>.png`` per tick (and ``video.gif``) into ``directory``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    video = render_video(scenario, frames, cell_px=cell_px)
    paths = []
    for frame in video:
        path = directory / f"frame_{frame.tick:04d}.png"
        path.write_bytes(encode_png(frame))
        paths.append(path)
    if gif:
        (directory / "video.gif").write_bytes(encode_gif(video))
    return paths


def read_frames(directory: str | Path, cell_px: int = DEFAULT_CELL_PX) -> list[Frame]:
    directory = Path(directory)
    paths = sorted(directory.glob("frame_*.png"))
    return [Frame.from_png(p.read_bytes(), cell_px, int(p.stem.split("_")[1])) for p in paths]
