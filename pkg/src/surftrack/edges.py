"""Edge-neighborhood sampling and texture / occluding classification.

Each edge pixel gets a four-label key read at fixed offsets from the
super segmentation. Sampled edge points are classified by estimating
the frame-to-frame motion independently on both sides: matching sides
mean a texture edge inside one surface, diverging sides mean an
occluding border, whose owner is the side whose motion explains its
half of the patch better.
"""

import logging
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from .diffeo import DiffeoResult, clamp_center, estimate
from .gaborbank import GaborBank, token, warped_token
from .raster import EdgeMap, Image, LabelMap

log = logging.getLogger(__name__)

LINEAR_TOL = 0.1
TRANSLATION_TOL = 4.0
OWNER_MARGIN = 1e-3


class NeighborhoodKey(NamedTuple):
    """Super labels read above, below, right of, and left of an edge pixel."""

    n: int
    s: int
    e: int
    w: int

    def labels(self):
        return frozenset(self)


@dataclass(frozen=True)
class EdgeSample:
    frame_index: int
    edge_point: tuple
    key: NeighborhoodKey
    side_a_center: tuple
    side_b_center: tuple
    side_a_label: int
    side_b_label: int
    result_a: DiffeoResult
    result_b: DiffeoResult


@dataclass(frozen=True)
class SampleVote:
    """Outcome for one sample: texture, occluding (with owner), or dropped.

    kind is one of texture, occluding, unusable (a side's refinement
    aborted), undecided (occluding but no clear owner). Only the first
    two enter the consensus.
    """

    kind: str
    owner_label: Optional[int] = None


@dataclass(frozen=True)
class EdgeVerdict:
    key: NeighborhoodKey
    kind: str
    owner_label: Optional[int]
    vote_tally: dict


def enumerate_neighborhoods(super_map: LabelMap, edges: EdgeMap,
                            offset: int = 20):
    """Group edge pixels by key, keeping only two-sided neighborhoods."""
    if super_map.labels.shape != edges.mask.shape:
        raise ValueError("super map and edge map dimensions differ")
    lab = super_map.labels
    h, w = lab.shape
    groups = {}
    for y, x in np.argwhere(edges.mask):
        if y < offset or y + offset >= h or x < offset or x + offset >= w:
            continue
        key = NeighborhoodKey(int(lab[y - offset, x]), int(lab[y + offset, x]),
                              int(lab[y, x + offset]), int(lab[y, x - offset]))
        if len(key.labels()) != 2:
            continue
        groups.setdefault(key, []).append((int(x), int(y)))
    return groups


def sample_edge_points(groups, count: int = 100, seed: int = 0):
    """Evenly sample edge points across keys.

    Each key gets floor(count / k) draws, the remainder goes round-robin
    in sorted key order; a key with fewer pixels than its quota
    contributes all of them.
    """
    if not groups:
        log.warning("no two-sided edge neighborhoods to sample")
        return []
    rng = np.random.default_rng(seed)
    keys = sorted(groups)
    base, extra = divmod(count, len(keys))
    picks = []
    for i, key in enumerate(keys):
        quota = base + (1 if i < extra else 0)
        pixels = groups[key]
        if len(pixels) <= quota:
            chosen = range(len(pixels))
        else:
            chosen = rng.choice(len(pixels), size=quota, replace=False)
        picks.extend((key, pixels[j]) for j in chosen)
    return picks


def _label_window(lab, point, radius):
    x, y = int(round(point[0])), int(round(point[1]))
    h, w = lab.shape
    y0, y1 = max(y - radius, 0), min(y + radius + 1, h)
    x0, x1 = max(x - radius, 0), min(x + radius + 1, w)
    return lab[y0:y1, x0:x1], x0, y0


def place_side_centers(bank: GaborBank, super_map: LabelMap, edge_point,
                       key: NeighborhoodKey, offset: int = 20):
    """Patch centers offset to both sides along the local label gradient.

    Returns ((center, label) for side a, same for side b) with side a on
    the smaller label, or None when the placement cannot be validated:
    the gradient is undefined, or a border-clamped center misses its
    side of the edge.
    """
    la, lb = sorted(key.labels())
    window, x0, y0 = _label_window(super_map.labels, edge_point, offset // 2)
    ya, xa = np.nonzero(window == la)
    yb, xb = np.nonzero(window == lb)
    if len(xa) == 0 or len(xb) == 0:
        return None
    direction = np.array([xb.mean() - xa.mean(), yb.mean() - ya.mean()])
    norm = np.linalg.norm(direction)
    if norm < 1e-9:
        return None
    direction /= norm
    point = np.asarray(edge_point, dtype=float)
    centers = {}
    for label, sign in ((la, -1.0), (lb, 1.0)):
        c = clamp_center(super_map.labels.shape, bank,
                         point + sign * offset * direction)
        ci = (int(round(c[0])), int(round(c[1])))
        if int(super_map.labels[ci[1], ci[0]]) != label:
            return None
        centers[label] = c
    return (centers[la], la), (centers[lb], lb)


def build_sample(bank: GaborBank, img1: Image, img2: Image,
                 super_map: LabelMap, frame_index: int, key: NeighborhoodKey,
                 edge_point, offset: int = 20, **estimate_kwargs):
    """Run both side estimates for one edge point; None if unplaceable."""
    placed = place_side_centers(bank, super_map, edge_point, key, offset)
    if placed is None:
        return None
    (ca, la), (cb, lb) = placed
    return EdgeSample(
        frame_index=frame_index,
        edge_point=(float(edge_point[0]), float(edge_point[1])),
        key=key,
        side_a_center=ca,
        side_b_center=cb,
        side_a_label=la,
        side_b_label=lb,
        result_a=estimate(bank, img1, img2, ca, **estimate_kwargs),
        result_b=estimate(bank, img1, img2, cb, **estimate_kwargs),
    )


def classify_sample(sample: EdgeSample, linear_tol: float = LINEAR_TOL,
                    translation_tol: float = TRANSLATION_TOL,
                    norm: str = "euclidean") -> str:
    """texture when both sides moved the same way, within the thresholds.

    A sample is unusable only when a side's refinement aborted (flat or
    degenerate patch). The absolute convergence flag is too strict here:
    the filter support straddles the edge, so a mismatch energy floor is
    inherent at exactly the edges worth classifying.
    """
    if norm not in ("euclidean", "max"):
        raise ValueError(f"unknown difference norm {norm!r}")
    if (sample.result_a.diagnostic is not None
            or sample.result_b.diagnostic is not None):
        return "unusable"
    diff = sample.result_a.params.to_array() - sample.result_b.params.to_array()
    reduce = np.linalg.norm if norm == "euclidean" else lambda v: np.abs(v).max()
    if reduce(diff[:4]) < linear_tol and reduce(diff[4:]) < translation_tol:
        return "texture"
    return "occluding"


def edge_line(edge_map: EdgeMap, super_map: LabelMap, edge_point,
              key: NeighborhoodKey, radius: int = 16):
    """Total-least-squares line through nearby edge pixels of this key.

    Pixels are kept when their 3x3 label neighborhood holds exactly the
    key's two labels, so other contours crossing the window do not skew
    the fit. Returns (point_on_line, unit_normal).
    """
    window, x0, y0 = _label_window(edge_map.mask.astype(np.uint8), edge_point,
                                   radius)
    lab = super_map.labels
    h, w = lab.shape
    wanted = key.labels()
    pts = []
    for wy, wx in np.argwhere(window):
        y, x = wy + y0, wx + x0
        block = lab[max(y - 1, 0):y + 2, max(x - 1, 0):x + 2]
        if frozenset(int(v) for v in np.unique(block)) == wanted:
            pts.append((x, y))
    pts = np.asarray(pts, dtype=float)
    if len(pts) < 2:
        return np.asarray(edge_point, dtype=float), None
    mean = pts.mean(axis=0)
    _, _, vt = np.linalg.svd(pts - mean, full_matrices=False)
    # rows of vt: major axis (edge direction), minor axis (normal)
    return mean, vt[1]


def _half_plane_mask(bank: GaborBank, center, line_point, normal, toward):
    side = np.dot(np.asarray(toward, dtype=float) - line_point, normal)
    oriented = normal if side >= 0 else -normal
    # boundary cells stay unmasked so the mask never starves the support
    return ((center[0] + bank.ux - line_point[0]) * oriented[0]
            + (center[1] + bank.uy - line_point[1]) * oriented[1]) >= 0


def determine_owner(bank: GaborBank, img1: Image, img2: Image,
                    edge_map: EdgeMap, super_map: LabelMap,
                    sample: EdgeSample, margin: float = OWNER_MARGIN):
    """Owner label of an occluding sample, or None when too close to call.

    Each side's estimated motion is scored on its own half of the patch
    only; the side whose motion explains its half better owns the border,
    since the accretion strip contaminates the failing side.
    """
    point, normal = edge_line(edge_map, super_map, sample.edge_point,
                              sample.key)
    if normal is None:
        # no usable line fit; fall back to the center offset direction
        direction = (np.asarray(sample.side_b_center)
                     - np.asarray(sample.side_a_center))
        normal = direction / np.linalg.norm(direction)
    dists = {}
    for center, label, result in (
            (sample.side_a_center, sample.side_a_label, sample.result_a),
            (sample.side_b_center, sample.side_b_label, sample.result_b)):
        mask = _half_plane_mask(bank, center, point, normal, center)
        base = token(bank, img1, center, support_mask=mask)
        moved = warped_token(bank, img2, center, result.params.to_array(),
                             support_mask=mask)
        dists[label] = float(np.linalg.norm(moved.values - base.values))
    (la, da), (lb, db) = sorted(dists.items())
    if abs(da - db) < margin * max(da, db):
        return None
    return la if da < db else lb


def consensus(key: NeighborhoodKey, votes) -> EdgeVerdict:
    """Winner-take-all over texture and per-owner occluding votes.

    Any tie goes to texture: inventing an object border costs more than
    missing one. Zero usable votes marks the key unknown.
    """
    tally = {}
    for vote in votes:
        if vote.kind == "texture":
            tally["texture"] = tally.get("texture", 0) + 1
        elif vote.kind == "occluding":
            name = f"occluding:{vote.owner_label}"
            tally[name] = tally.get(name, 0) + 1
    if not tally:
        return EdgeVerdict(key, "unknown", None, {})
    best = max(tally.values())
    winners = [name for name, c in tally.items() if c == best]
    if len(winners) > 1 or winners[0] == "texture":
        return EdgeVerdict(key, "texture", None, tally)
    return EdgeVerdict(key, "occluding", int(winners[0].split(":")[1]), tally)


@dataclass(frozen=True)
class PairClassification:
    """All sampling and voting artifacts for one frame pair."""

    verdicts: dict
    samples: list
    votes: list


def classify_pair(bank: GaborBank, img1: Image, img2: Image,
                  super_map: LabelMap, edge_map: EdgeMap, frame_index: int,
                  count: int = 100, seed: int = 0, offset: int = 20,
                  linear_tol: float = LINEAR_TOL,
                  translation_tol: float = TRANSLATION_TOL,
                  norm: str = "euclidean",
                  **estimate_kwargs) -> PairClassification:
    """Sample, classify, and fold one frame pair into per-key verdicts."""
    groups = enumerate_neighborhoods(super_map, edge_map, offset)
    picks = sample_edge_points(groups, count, seed)
    samples = []
    votes = []
    per_key = {key: [] for key in groups}
    for key, point in picks:
        sample = build_sample(bank, img1, img2, super_map, frame_index, key,
                              point, offset, **estimate_kwargs)
        if sample is None:
            continue
        kind = classify_sample(sample, linear_tol, translation_tol, norm)
        if kind == "occluding":
            owner = determine_owner(bank, img1, img2, edge_map, super_map,
                                    sample)
            vote = (SampleVote("occluding", owner) if owner is not None
                    else SampleVote("undecided"))
        else:
            vote = SampleVote(kind)
        samples.append(sample)
        votes.append(vote)
        per_key[key].append(vote)
    verdicts = {key: consensus(key, key_votes)
                for key, key_votes in per_key.items()}
    return PairClassification(verdicts, samples, votes)
