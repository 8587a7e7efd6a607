"""Frame-to-frame association of detections into persistent tracks by greedy IoU matching."""
import logging
from dataclasses import dataclass, field
from typing import Sequence

from .types import Box, Detection

logger = logging.getLogger(__name__)

DEFAULT_IOU_THRESHOLD = 0.3
DEFAULT_MAX_MISSES = 10


def iou(a: Box, b: Box) -> float:
    """Intersection over union of two boxes given as (x, y, w, h)."""
    ix = max(0.0, min(a.x + a.w, b.x + b.w) - max(a.x, b.x))
    iy = max(0.0, min(a.y + a.h, b.y + b.h) - max(a.y, b.y))
    inter = ix * iy
    if inter <= 0.0:
        return 0.0
    if a == b:
        return 1.0
    union = a.area + b.area - inter
    return min(1.0, inter / union)


@dataclass
class TrackState:
    track_id: int
    last: Detection
    age: int = 0  # frames since creation
    misses: int = 0  # consecutive unmatched frames
    history: list[tuple[float, Detection]] = field(default_factory=list)

    @property
    def box(self) -> Box:
        return self.last.box


@dataclass
class StepResult:
    tracks: list[TrackState]
    assignments: list[int]  # track id per input detection


def step(
    tracks: Sequence[TrackState],
    detections: Sequence[Detection],
    next_id: int,
    iou_threshold: float = DEFAULT_IOU_THRESHOLD,
    max_misses: int = DEFAULT_MAX_MISSES,
) -> tuple[StepResult, int]:
    """Associate one frame of detections with live tracks.

    Candidate pairs with IoU >= threshold (and same class) are taken greedily in
    descending IoU order, ties broken by lower track id and then detection order.
    Returns the step result and the next unused track id.
    """
    candidates = []
    for track in tracks:
        for j, d in enumerate(detections):
            if d.class_id != track.last.class_id:
                continue
            score = iou(track.box, d.box)
            if score > 0.0 and score >= iou_threshold:
                candidates.append((-score, track.track_id, j))
    candidates.sort()

    by_id = {track.track_id: track for track in tracks}
    assignments: list[int] = [-1] * len(detections)
    matched_tracks = set()
    for _, track_id, j in candidates:
        if track_id in matched_tracks or assignments[j] != -1:
            continue
        matched_tracks.add(track_id)
        assignments[j] = track_id

    survivors = []
    for track in tracks:
        track.age += 1
        if track.track_id not in matched_tracks:
            track.misses += 1
            if track.misses > max_misses:
                logger.debug(f"Track {track.track_id} ended after {track.misses} missed frames")
                continue
        survivors.append(track)

    for j, d in enumerate(detections):
        track_id = assignments[j]
        if track_id == -1:
            track_id = next_id
            next_id += 1
            assignments[j] = track_id
            by_id[track_id] = TrackState(track_id=track_id, last=d)
            survivors.append(by_id[track_id])
        track = by_id[track_id]
        track.last = d
        track.misses = 0
        track.history.append((d.t, d))

    survivors.sort(key=lambda tr: tr.track_id)
    return StepResult(tracks=survivors, assignments=assignments), next_id


class IouTracker:
    """Holds the live track set of one stream and hands out ids that are never reused."""
    def __init__(self, iou_threshold: float = DEFAULT_IOU_THRESHOLD, max_misses: int = DEFAULT_MAX_MISSES):
        self.iou_threshold = iou_threshold
        self.max_misses = max_misses
        self.tracks: list[TrackState] = []
        self.next_id = 0

    def step(self, detections: Sequence[Detection]) -> list[int]:
        """Update with one frame of detections and return their track ids."""
        result, self.next_id = step(self.tracks, detections, self.next_id, self.iou_threshold, self.max_misses)
        self.tracks = result.tracks
        return result.assignments

    def run(self, frames: Sequence[Sequence[Detection]]) -> list[list[int]]:
        return [self.step(frame) for frame in frames]
