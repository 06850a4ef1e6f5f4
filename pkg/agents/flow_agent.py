"""
Block-matching flow, backward warping, flow-chained pixel propagation and
harmonic pre-fill of whatever propagation cannot reach.

Flow convention: FlowField(a -> b) holds, for every pixel p of frame a, the
displacement (u, v) such that p + (u, v) is the matching location in frame b
(u horizontal, v vertical). warp(frame_b, flow_a_to_b) resamples frame b into
frame a's geometry.
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple, Union

import numpy as np
from scipy import ndimage

from config import FILL_CONSTANT, FILL_TOLERANCE, FLOW_DEFAULTS
from utils.errors import DecodeError, DimensionMismatch, InvalidArgument, IoError
from utils.video_io import Frame, MaskSeq, VideoClip, check_pair

logger = logging.getLogger(__name__)

_CROSS = np.array([[0, 1, 0], [1, 0, 1], [0, 1, 0]], dtype=np.float64)
_FLOW_RECORD = np.dtype([("u", "<f4"), ("v", "<f4"), ("valid", "u1")])


@dataclass(frozen=True)
class FlowField:
    from_index: int
    to_index: int
    u: np.ndarray
    v: np.ndarray
    valid: np.ndarray

    def __post_init__(self):
        u = np.asarray(self.u, dtype=np.float64)
        v = np.asarray(self.v, dtype=np.float64)
        valid = np.asarray(self.valid).astype(np.uint8)
        if u.ndim != 2 or u.shape != v.shape or u.shape != valid.shape:
            raise DimensionMismatch(f"flow components disagree: {u.shape}, {v.shape}, {valid.shape}")
        if not (np.all(np.isfinite(u)) and np.all(np.isfinite(v))):
            raise InvalidArgument("flow must be finite")
        if not np.all(valid <= 1):
            raise InvalidArgument("flow validity must be 0 or 1")
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "v", v)
        object.__setattr__(self, "valid", valid)

    @property
    def shape(self) -> Tuple[int, int]:
        return self.u.shape

    @classmethod
    def zeros(cls, from_index: int, to_index: int, height: int, width: int) -> "FlowField":
        return cls(from_index, to_index, np.zeros((height, width)), np.zeros((height, width)),
                   np.ones((height, width), dtype=np.uint8))


FlowSet = Dict[Tuple[int, int], FlowField]


@dataclass
class FillResult:
    frame: Frame
    fallback: bool = False
    iterations: int = 0


def _pixels(frame: Union[Frame, np.ndarray]) -> np.ndarray:
    data = frame.data if isinstance(frame, Frame) else np.asarray(frame, dtype=np.float64)
    return data[:, :, None] if data.ndim == 2 else data


def _hole_map(mask: Optional[np.ndarray], shape: Tuple[int, int]) -> np.ndarray:
    if mask is None:
        return np.zeros(shape, dtype=bool)
    mask = np.asarray(mask).astype(bool)
    if mask.shape != shape:
        raise DimensionMismatch(f"mask {mask.shape} does not match frame {shape}")
    return mask


def candidate_displacements(radius: int) -> List[Tuple[int, int]]:
    """Displacements in tie-break order: smallest |u| + |v|, then (u, v)"""
    span = range(-radius, radius + 1)
    return sorted(((u, v) for u in span for v in span), key=lambda d: (abs(d[0]) + abs(d[1]), d[0], d[1]))


def estimate_flow(
    a: Union[Frame, np.ndarray],
    b: Union[Frame, np.ndarray],
    exclude: Optional[np.ndarray] = None,
    block: int = FLOW_DEFAULTS["block"],
    radius: int = FLOW_DEFAULTS["radius"],
    exclude_b: Optional[np.ndarray] = None,
    from_index: int = 0,
    to_index: int = 1,
) -> FlowField:
    """
    Exhaustive block matching of a against b.

    A candidate is scored by the mean absolute difference over the pixels
    whose match lands inside b and outside `exclude_b`; it needs at least
    half of the block. Blocks touching `exclude` (holes of a) get valid = 0.
    """
    pa, pb = _pixels(a), _pixels(b)
    if pa.shape != pb.shape:
        raise DimensionMismatch(f"frames disagree: {pa.shape} vs {pb.shape}")
    if block < 1 or radius < 0:
        raise InvalidArgument(f"need block >= 1 and radius >= 0, got {block} / {radius}")
    h, w, c = pa.shape
    hole_a = _hole_map(exclude, (h, w))
    hole_b = _hole_map(exclude_b, (h, w))

    nby, nbx = -(-h // block), -(-w // block)
    hp, wp = nby * block, nbx * block
    a_pad = np.pad(pa, ((0, hp - h), (0, wp - w), (0, 0)))
    inside_a = np.pad(np.ones((h, w)), ((0, hp - h), (0, wp - w)))
    r = radius
    b_pad = np.pad(pb, ((r, r + hp - h), (r, r + wp - w), (0, 0)))
    usable_b = np.pad((~hole_b).astype(np.float64), ((r, r + hp - h), (r, r + wp - w)))

    def per_block(x: np.ndarray) -> np.ndarray:
        return x.reshape(nby, block, nbx, block).sum(axis=(1, 3))

    block_pixels = per_block(inside_a)
    best_score = np.full((nby, nbx), np.inf)
    best_u = np.zeros((nby, nbx))
    best_v = np.zeros((nby, nbx))
    for du, dv in candidate_displacements(radius):
        shifted = b_pad[r + dv:r + dv + hp, r + du:r + du + wp]
        weight = inside_a * usable_b[r + dv:r + dv + hp, r + du:r + du + wp]
        count = per_block(weight)
        sad = per_block(np.abs(a_pad - shifted).sum(axis=2) * weight)
        enough = (count > 0) & (2 * count >= block_pixels)
        score = np.where(enough, sad / np.maximum(count * c, 1), np.inf)
        better = score < best_score
        best_score = np.where(better, score, best_score)
        best_u = np.where(better, du, best_u)
        best_v = np.where(better, dv, best_v)

    touched = per_block(np.pad(hole_a.astype(np.float64), ((0, hp - h), (0, wp - w)))) > 0
    valid = np.isfinite(best_score) & ~touched

    def to_pixels(x: np.ndarray) -> np.ndarray:
        return np.repeat(np.repeat(x, block, axis=0), block, axis=1)[:h, :w]

    return FlowField(from_index, to_index, to_pixels(best_u), to_pixels(best_v), to_pixels(valid))


def estimate_clip_flows(
    clip: VideoClip,
    holes: Optional[MaskSeq] = None,
    block: int = FLOW_DEFAULTS["block"],
    radius: int = FLOW_DEFAULTS["radius"],
    threads: int = 1,
) -> FlowSet:
    """Forward and backward flows for every adjacent frame pair"""
    if holes is not None:
        check_pair(clip, holes)
    pairs = []
    for t in range(clip.num_frames - 1):
        pairs += [(t, t + 1), (t + 1, t)]

    def one(pair: Tuple[int, int]) -> FlowField:
        i, j = pair
        return estimate_flow(
            clip.data[i], clip.data[j],
            exclude=None if holes is None else holes.data[i],
            exclude_b=None if holes is None else holes.data[j],
            block=block, radius=radius, from_index=i, to_index=j,
        )

    with ThreadPoolExecutor(max_workers=max(1, threads)) as executor:
        flows = list(executor.map(one, pairs))
    return {pair: flow for pair, flow in zip(pairs, flows)}


def warp(frame: Union[Frame, np.ndarray], flow: FlowField) -> Tuple[Frame, np.ndarray]:
    """Backward bilinear warp; returns the warped frame and its coverage map"""
    pixels = _pixels(frame)
    h, w, c = pixels.shape
    if flow.shape != (h, w):
        raise DimensionMismatch(f"flow {flow.shape} does not match frame {(h, w)}")
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    sy, sx = ys + flow.v, xs + flow.u
    coverage = (flow.valid == 1) & (sy >= 0) & (sy <= h - 1) & (sx >= 0) & (sx <= w - 1)
    out = np.zeros_like(pixels)
    for ch in range(c):
        out[:, :, ch] = ndimage.map_coordinates(pixels[:, :, ch], [sy, sx], order=1, mode="nearest")
    out *= coverage[:, :, None]
    return Frame(np.clip(out, 0.0, 1.0)), coverage.astype(np.uint8)


def _completed_flow(flow: FlowField) -> Tuple[np.ndarray, np.ndarray]:
    """u, v with invalid pixels taking the flow of the nearest valid pixel"""
    invalid = flow.valid == 0
    if not invalid.any():
        return flow.u, flow.v
    if invalid.all():
        return np.zeros_like(flow.u), np.zeros_like(flow.v)
    iy, ix = ndimage.distance_transform_edt(invalid, return_distances=False, return_indices=True)
    return flow.u[iy, ix], flow.v[iy, ix]


def _require_adjacent(flows: FlowSet, num_frames: int):
    missing = [
        pair for t in range(num_frames - 1) for pair in ((t, t + 1), (t + 1, t)) if pair not in flows
    ]
    if missing:
        raise InvalidArgument(f"missing flows for frame pairs {missing[:4]}")


def _chain(
    start: int, ys: np.ndarray, xs: np.ndarray, step: int, hole: np.ndarray,
    fields: Dict[Tuple[int, int], Tuple[np.ndarray, np.ndarray]], max_chain: int,
):
    """Follow one direction; returns (chain length or 0, source frame, y, x) per pixel"""
    num_frames, h, w = hole.shape
    n = len(ys)
    length = np.zeros(n, dtype=np.int64)
    src_y = np.zeros(n, dtype=np.int64)
    src_x = np.zeros(n, dtype=np.int64)
    py, px = ys.astype(np.float64), xs.astype(np.float64)
    active = np.ones(n, dtype=bool)
    frame = start
    for k in range(1, max_chain + 1):
        target = frame + step
        if target < 0 or target >= num_frames or not active.any():
            break
        u, v = fields[(frame, target)]
        iy, ix = np.rint(py).astype(np.int64), np.rint(px).astype(np.int64)
        idx = np.nonzero(active)[0]
        py[idx] += v[iy[idx], ix[idx]]
        px[idx] += u[iy[idx], ix[idx]]
        ry, rx = np.rint(py).astype(np.int64), np.rint(px).astype(np.int64)
        inside = (ry >= 0) & (ry < h) & (rx >= 0) & (rx < w)
        active &= inside
        idx = np.nonzero(active)[0]
        found = idx[hole[target, ry[idx], rx[idx]] == 0]
        length[found] = k
        src_y[found], src_x[found] = ry[found], rx[found]
        active[found] = False
        frame = target
    return length, src_y, src_x


def propagate_pixels(
    clip: VideoClip,
    holes: MaskSeq,
    flows: FlowSet,
    max_chain: Optional[int] = None,
) -> Tuple[VideoClip, MaskSeq]:
    """
    Copy known content along flow chains into hole pixels.

    For every hole pixel the backward (towards frame 0) and forward chains are
    followed for at most max_chain frames; the first known landing wins, the
    shorter chain is preferred and ties go backward. Unreached pixels stay in
    the residual mask.
    """
    check_pair(clip, holes)
    num_frames = clip.num_frames
    max_chain = num_frames if max_chain is None else max_chain
    if max_chain < 0:
        raise InvalidArgument(f"max_chain must be >= 0, got {max_chain}")
    if not holes.data.any() or num_frames == 1:
        return clip, holes
    _require_adjacent(flows, num_frames)
    fields = {key: _completed_flow(flow) for key, flow in flows.items()}

    out = clip.data.copy()
    residual = holes.data.copy()
    for t in range(num_frames):
        ys, xs = np.nonzero(holes.data[t])
        if len(ys) == 0:
            continue
        back = _chain(t, ys, xs, -1, holes.data, fields, max_chain)
        fwd = _chain(t, ys, xs, +1, holes.data, fields, max_chain)
        use_back = (back[0] > 0) & ((fwd[0] == 0) | (back[0] <= fwd[0]))
        use_fwd = (fwd[0] > 0) & ~use_back
        for chosen, (length, sy, sx), step in ((use_back, back, -1), (use_fwd, fwd, +1)):
            sel = np.nonzero(chosen)[0]
            src_frames = t + step * length[sel]
            out[t, ys[sel], xs[sel]] = clip.data[src_frames, sy[sel], sx[sel]]
            residual[t, ys[sel], xs[sel]] = 0
    return clip.with_data(out), MaskSeq(residual)


def fill_holes(
    frame: Union[Frame, np.ndarray],
    hole: np.ndarray,
    tol: float = FILL_TOLERANCE,
    max_iter: Optional[int] = None,
) -> FillResult:
    """
    Discrete harmonic fill: hole pixels are repeatedly replaced by the mean of
    their in-frame 4-neighbours, starting from the mean of the hole boundary.
    """
    pixels = _pixels(frame).copy()
    h, w, c = pixels.shape
    hole = _hole_map(hole, (h, w))
    if not hole.any():
        return FillResult(Frame(pixels))
    if hole.all():
        logger.warning(f"⚠️ All-hole frame filled with constant {FILL_CONSTANT}")
        return FillResult(Frame(np.full_like(pixels, FILL_CONSTANT)), fallback=True)

    max_iter = 10 * max(h, w) if max_iter is None else max_iter
    neighbours = ndimage.convolve(np.ones((h, w)), _CROSS, mode="constant", cval=0.0)
    boundary = ndimage.binary_dilation(hole, structure=_CROSS.astype(bool)) & ~hole
    pixels[hole] = pixels[boundary].mean(axis=0)

    iterations = 0
    for iterations in range(1, max_iter + 1):
        change = 0.0
        for ch in range(c):
            layer = pixels[:, :, ch]
            mean = ndimage.convolve(layer, _CROSS, mode="constant", cval=0.0) / neighbours
            change = max(change, float(np.max(np.abs(mean[hole] - layer[hole]))))
            layer[hole] = mean[hole]
        if change < tol:
            break
    return FillResult(Frame(np.clip(pixels, 0.0, 1.0)), iterations=iterations)


def fill_clip(clip: VideoClip, holes: MaskSeq) -> Tuple[VideoClip, List[int]]:
    """fill_holes on every frame; also returns the frames that hit the all-hole fallback"""
    check_pair(clip, holes)
    results = [fill_holes(clip.data[t], holes.data[t]) for t in range(clip.num_frames)]
    fallback = [t for t, r in enumerate(results) if r.fallback]
    return clip.with_data(np.stack([r.frame.data for r in results])), fallback


def save_flow(flow: FlowField, file_path: str):
    """Header (from, to, H, W) as int32 LE, then row-major (u, v, valid) records"""
    h, w = flow.shape
    records = np.empty(h * w, dtype=_FLOW_RECORD)
    records["u"] = flow.u.ravel()
    records["v"] = flow.v.ravel()
    records["valid"] = flow.valid.ravel()
    try:
        with open(file_path, "wb") as handle:
            handle.write(np.array([flow.from_index, flow.to_index, h, w], dtype="<i4").tobytes())
            handle.write(records.tobytes())
    except OSError as e:
        raise IoError(f"Error writing flow {file_path}: {e}") from e


def load_flow(file_path: str) -> FlowField:
    try:
        with open(file_path, "rb") as handle:
            raw = handle.read()
    except OSError as e:
        raise IoError(f"Error reading flow {file_path}: {e}") from e
    if len(raw) < 16:
        raise DecodeError(f"Truncated flow header in {file_path}")
    from_index, to_index, h, w = np.frombuffer(raw[:16], dtype="<i4").tolist()
    if len(raw) != 16 + h * w * _FLOW_RECORD.itemsize:
        raise DecodeError(f"Flow body of {file_path} does not match {h}x{w}")
    records = np.frombuffer(raw[16:], dtype=_FLOW_RECORD)
    return FlowField(from_index, to_index, records["u"].reshape(h, w), records["v"].reshape(h, w),
                     records["valid"].reshape(h, w))


@dataclass
class FlowCompletionAgent:
    """Optical-flow completion stage: estimate, propagate, pre-fill"""
    block: int = FLOW_DEFAULTS["block"]
    radius: int = FLOW_DEFAULTS["radius"]
    max_chain: Optional[int] = None
    threads: int = 1
    calls: Dict[str, int] = field(default_factory=lambda: {"estimate": 0, "propagate": 0, "fill": 0})

    def estimate(self, clip: VideoClip, holes: Optional[MaskSeq] = None) -> FlowSet:
        self.calls["estimate"] += 1
        logger.info(f"🔍 Estimating flow for {clip.num_frames - 1} frame pairs")
        return estimate_clip_flows(clip, holes, self.block, self.radius, self.threads)

    def propagate(self, clip: VideoClip, holes: MaskSeq, flows: FlowSet) -> Tuple[VideoClip, MaskSeq]:
        self.calls["propagate"] += 1
        completed, residual = propagate_pixels(clip, holes, flows, self.max_chain)
        filled = int(holes.data.sum() - residual.data.sum())
        logger.info(f"✅ Propagated {filled} of {int(holes.data.sum())} hole pixels")
        return completed, residual

    def fill(self, clip: VideoClip, holes: MaskSeq) -> Tuple[VideoClip, List[int]]:
        self.calls["fill"] += 1
        filled, fallback = fill_clip(clip, holes)
        if fallback:
            logger.warning(f"⚠️ Constant fallback used for frames {fallback}")
        return filled, fallback
