"""Object segmentation, backward tracking, and the scene graph.

Per-key verdicts say which contours are texture and which are object
borders with owners. This module erases texture edges to get per-frame
object segmentation maps, finds the static background, propagates
labels across frames along persistence links, and assembles the scene
graph whose connected components are the invariant objects. A final
sweep relabels every frame by graph component, which is what corrects
isolated per-frame misclassifications.
"""

import logging
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .gaborbank import GaborBank, token
from .raster import Image, LabelMap

log = logging.getLogger(__name__)

# A persistence link requires the warped patch to actually match the
# content it lands on. Fits whose support straddles an edge keep an
# energy floor up to ~0.11 of the token norm even at true matches, so
# the gate sits above that floor but below the ~0.25+ of a wrong basin.
LINK_RESIDUAL_TOL = 0.2


@dataclass(frozen=True)
class FramePairEvidence:
    """Classification outcome for the pair (i, i+1), as the tracker sees it.

    persistence_links holds one (super_label_i, super_label_i+1) entry
    per accepted patch, multiplicity included: the split and merge rules
    count links.
    """

    frame_index: int
    verdicts: dict
    persistence_links: list = field(default_factory=list)


def extract_persistence_links(bank: GaborBank, img1: Image,
                              super_next: LabelMap, classification,
                              residual_tol: float = LINK_RESIDUAL_TOL):
    """Links (super_i, super_i+1) from the classification's own fits.

    A texture sample contributes both side patches, an occluding sample
    only the owner side, and only when the sample agrees with its key's
    consensus: an outvoted sample already failed the neighborhood and
    its fit cannot be trusted to land on the right surface. Each patch
    links its own label to the super label under its warped center.
    """
    h, w = super_next.labels.shape
    links = []
    for sample, vote in zip(classification.samples, classification.votes):
        verdict = classification.verdicts.get(sample.key)
        if verdict is None or vote.kind != verdict.kind:
            continue
        if verdict.kind == "texture":
            sides = ((sample.side_a_center, sample.side_a_label,
                      sample.result_a),
                     (sample.side_b_center, sample.side_b_label,
                      sample.result_b))
        elif verdict.kind == "occluding":
            if vote.owner_label != verdict.owner_label:
                continue
            if verdict.owner_label == sample.side_a_label:
                sides = ((sample.side_a_center, sample.side_a_label,
                          sample.result_a),)
            else:
                sides = ((sample.side_b_center, sample.side_b_label,
                          sample.result_b),)
        else:
            continue
        for center, label, result in sides:
            if result.diagnostic is not None:
                continue
            base = token(bank, img1, center)
            energy = float(base.values @ base.values)
            if energy <= 0.0:
                continue
            if result.residual_energy > residual_tol * energy:
                continue
            tx, ty = result.params.translation
            lx = int(round(center[0] + tx))
            ly = int(round(center[1] + ty))
            if not (0 <= lx < w and 0 <= ly < h):
                continue
            links.append((int(label), int(super_next.labels[ly, lx])))
    return links


# ---------------------------------------------------------------------------
# Texture-edge erasure
# ---------------------------------------------------------------------------

def _boundary_length(labels: np.ndarray, la: int, lb: int) -> int:
    a, b = labels == la, labels == lb
    n = (a[1:] & b[:-1]).sum() + (a[:-1] & b[1:]).sum()
    n += (a[:, 1:] & b[:, :-1]).sum() + (a[:, :-1] & b[:, 1:]).sum()
    return int(n)


def segmentation_merges(super_map: LabelMap, verdicts) -> dict:
    """Texture-erasure mapping label -> replacement label.

    A region is merged when all its evidence is texture: at least one
    texture-verdict key and no occluding-verdict key on any of its
    borders, owner or not. Occluding participation on either side keeps
    a region separate; one stray texture vote against a border that
    several keys call occluding must not fold an object into its
    neighbor. Unknown keys count as texture (occlusion needs positive
    evidence). Merging follows partner chains to their fixed point.
    """
    partners = {}
    occluding = set()
    for key, verdict in verdicts.items():
        la, lb = sorted(key.labels())
        if verdict.kind == "occluding":
            occluding.add(la)
            occluding.add(lb)
        elif verdict.kind in ("texture", "unknown"):
            partners.setdefault(la, set()).add(lb)
            partners.setdefault(lb, set()).add(la)

    target = {}
    for label, cands in sorted(partners.items()):
        if label in occluding:
            continue
        if len(cands) > 1:
            lengths = {c: _boundary_length(super_map.labels, label, c)
                       for c in sorted(cands)}
            choice = max(sorted(cands), key=lambda c: lengths[c])
            log.warning("label %d has %d texture partners %s; merging into "
                        "%d (longest shared boundary)", label, len(cands),
                        sorted(cands), choice)
        else:
            choice = next(iter(cands))
        target[label] = choice

    # collapse chains to their fixed point; a cycle of mutually pure
    # partners lands on its smallest member so dict order cannot matter
    resolved = {}
    for label in target:
        walk = [label]
        seen = {label}
        node = target[label]
        while node in target and node not in seen:
            walk.append(node)
            seen.add(node)
            node = target[node]
        if node in seen:
            node = min(walk[walk.index(node):])
        resolved[label] = node
    return {k: v for k, v in resolved.items() if k != v}


def make_segmentation(super_map: LabelMap, verdicts) -> LabelMap:
    """Erase texture edges: pure texture regions take their partner's label."""
    merges = segmentation_merges(super_map, verdicts)
    if not merges:
        return LabelMap(super_map.labels.copy())
    lut = np.arange(int(super_map.labels.max()) + 1, dtype=np.int32)
    for src, dst in merges.items():
        lut[src] = dst
    return LabelMap(lut[super_map.labels])


# ---------------------------------------------------------------------------
# Background and label propagation
# ---------------------------------------------------------------------------

def find_background(img_prev: Image, img_cur: Image, seg: LabelMap) -> int:
    """Label whose pixels changed least since the previous frame.

    Scores the fraction of pixels within half a 16-bit quantization
    step; the background is the region most often exactly static.
    """
    still = np.abs(img_cur.data - img_prev.data) < (1.0 / 512.0)
    best_label, best_frac, best_area = -1, -1.0, 0
    tie = False
    for label in seg.present_labels():
        region = seg.labels == label
        area = int(region.sum())
        frac = float(still[region].mean()) if area else 0.0
        if frac > best_frac:
            best_label, best_frac, best_area, tie = label, frac, area, False
        elif frac == best_frac:
            tie = True
            if area > best_area:
                best_label, best_area = label, area
    if tie:
        log.warning("background tie at fraction %.4f; keeping larger "
                    "region %d", best_frac, best_label)
    return best_label


def initial_tracking(seg: LabelMap, background_label: int,
                     next_fresh: int = 1):
    """Frame-0 tracking map: background 0, objects numbered in label order."""
    lut = np.zeros(int(seg.labels.max()) + 1, dtype=np.int32)
    for label in seg.present_labels():
        if label == background_label:
            continue
        lut[label] = next_fresh
        next_fresh += 1
    return LabelMap(lut[seg.labels]), next_fresh


def _region_ids(seg: LabelMap, tracking: LabelMap) -> dict:
    ids = {}
    for label in seg.present_labels():
        yx = np.argwhere(seg.labels == label)[0]
        ids[label] = int(tracking.labels[yx[0], yx[1]])
    return ids


def make_tracking(seg_prev: LabelMap, seg_cur: LabelMap, links,
                  prior_tracking: LabelMap, background_label: int,
                  next_fresh: int):
    """Propagate tracked labels from the previous frame along links.

    Each target takes the label of the source sending it the most links
    (merge rule); a source whose links split over several targets keeps
    its label on the modal one and the rest go fresh. Unlinked regions
    go fresh too. The background is forced to 0 and never competes.
    Returns the new tracking map and the advanced fresh-label counter.
    """
    source_id = _region_ids(seg_prev, prior_tracking)
    counts = Counter((int(s), int(t)) for s, t in links)
    areas = {label: int((seg_cur.labels == label).sum())
             for label in seg_cur.present_labels()}
    src_areas = {label: int((seg_prev.labels == label).sum())
                 for label in seg_prev.present_labels()}

    by_target = {}
    for (s, t), n in counts.items():
        if t == background_label or s not in source_id:
            continue
        if source_id[s] == 0:
            continue
        by_target.setdefault(t, []).append((n, src_areas.get(s, 0), -s, s))

    # merge rule: the strongest source claims the target
    claimed_source = {}
    for t, cands in by_target.items():
        cands.sort(reverse=True)
        if len(cands) > 1:
            log.info("frame target %d linked from %d sources; keeping "
                     "source %d", t, len(cands), cands[0][3])
        claimed_source[t] = cands[0][3]

    # split rule: each source keeps its label on its modal claimed target
    by_source = {}
    for t, s in claimed_source.items():
        n = counts[(s, t)]
        by_source.setdefault(s, []).append((n, areas.get(t, 0), -t, t))
    assignment = {}
    for s, cands in sorted(by_source.items()):
        cands.sort(reverse=True)
        keeper = cands[0][3]
        assignment[keeper] = source_id[s]
        if len(cands) > 1:
            log.info("source %d split over %d targets; label stays on %d",
                     s, len(cands), keeper)

    lut = np.zeros(int(seg_cur.labels.max()) + 1, dtype=np.int32)
    for label in seg_cur.present_labels():
        if label == background_label:
            continue
        if label in assignment:
            lut[label] = assignment[label]
        else:
            lut[label] = next_fresh
            next_fresh += 1
    return LabelMap(lut[seg_cur.labels]), next_fresh


# ---------------------------------------------------------------------------
# Scene graph
# ---------------------------------------------------------------------------

@dataclass
class SceneGraph:
    """Vertices (frame, super_label); edges typed texture or persistence.

    component_of maps every vertex to an object id: 0 for any component
    holding a background vertex, the rest numbered by first appearance.
    """

    vertices: list
    edges: list
    component_of: dict

    @property
    def component_count(self) -> int:
        return len(set(self.component_of.values()))

    def dump_edges(self) -> str:
        lines = [f"{fa}:{la} -- {fb}:{lb} {kind}"
                 for (fa, la), (fb, lb), kind in self.edges]
        return "\n".join(lines) + ("\n" if lines else "")


def build_scene_graph(super_maps, evidences, background_labels) -> SceneGraph:
    """Union vertices along committed texture merges and persistence links.

    Texture edges come from the same merge computation the segmentation
    applies, not from raw texture verdicts: a verdict outweighed by
    occluding evidence on the same region never merged anything, so it
    must not connect anything here either. Per-frame background vertices
    are identified with each other rather than edge-linked, and links
    touching the background are dropped: the background is pinned to
    object id 0 by fiat, so its component needs no evidence, and a
    static-side patch that lands on a moved object must not weld that
    object to the background. Component ids for the rest follow first
    frame of appearance, then smallest label.
    """
    if len(background_labels) != len(super_maps):
        raise ValueError("one background label per frame required")
    if len(evidences) != len(super_maps):
        raise ValueError("one evidence record per frame required")
    vertices = []
    index = {}
    for f, sm in enumerate(super_maps):
        for label in sm.present_labels():
            index[(f, int(label))] = len(vertices)
            vertices.append((f, int(label)))

    parent = list(range(len(vertices)))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    def union(a, b):
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[max(ra, rb)] = min(ra, rb)

    edges = []
    for f, sm in enumerate(super_maps):
        for src, dst in sorted(
                segmentation_merges(sm, evidences[f].verdicts).items()):
            a, b = (f, src), (f, dst)
            if a in index and b in index:
                edges.append((a, b, "texture"))
                union(index[a], index[b])
    for f in range(len(super_maps) - 1):
        bg_src = int(background_labels[f])
        bg_dst = int(background_labels[f + 1])
        for s, t in evidences[f].persistence_links:
            if int(s) == bg_src or int(t) == bg_dst:
                continue
            a, b = (f, int(s)), (f + 1, int(t))
            if a in index and b in index:
                edges.append((a, b, "persistence"))
                union(index[a], index[b])

    roots = {}
    for i, v in enumerate(vertices):
        roots.setdefault(find(i), []).append(v)
    background_roots = {find(index[(f, int(bl))])
                        for f, bl in enumerate(background_labels)}
    component_of = {}
    next_id = 1
    for root, members in sorted(roots.items(),
                                key=lambda kv: min(kv[1])):
        if root in background_roots:
            cid = 0
        else:
            cid = next_id
            next_id += 1
        for v in members:
            component_of[v] = cid
    return SceneGraph(vertices, edges, component_of)


def posthoc_relabel(graph: SceneGraph, super_maps):
    """Final maps: every pixel takes its vertex's graph component id."""
    out = []
    for f, sm in enumerate(super_maps):
        lut = np.zeros(int(sm.labels.max()) + 1, dtype=np.int32)
        for label in sm.present_labels():
            lut[label] = graph.component_of[(f, int(label))]
        out.append(LabelMap(lut[sm.labels]))
    return out
