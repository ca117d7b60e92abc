"""Edge-structure recovery by pooled local covariance estimation.

The pipeline quantizes the vertex set onto a lattice, repeatedly picks a
small window holding a fixed number of vertices, locates all rotated
lattice copies of the window's occupancy pattern, pools sample covariances
over a well-separated subset of the copies, and reads edges of the window
core off the inverted local Schur complement, transporting the decisions
to every copy.  Undecidable vertices are reported, never guessed.
"""
from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
from scipy.spatial import cKDTree

from .geometry import (
    CollisionError,
    Lattice,
    PatternTemplate,
    Torus,
    quantize,
    unwrap_chart,
)
from .gmrf import PrecisionModel, SampleMatrix, assemble_precision, graph_distance


class TemplateNotFound(RuntimeError):
    """No qualifying lattice square within the size cap."""


class DetectionSkipped(RuntimeError):
    """The pooled covariance was numerically unusable for this window."""


@dataclass
class SelectorParams:
    """Tuning knobs of the recovery loop.

    `r` vertices per window, lattice pitch `eps`, pooling separation `w`,
    known coupling `theta`, and the decision threshold on recovered
    precision entries (default theta/2).  `min_zeta` optionally rejects
    detections whose certified decay order falls below it; `k_cap`
    overrides the default window-size cap.
    """

    r: int
    eps: float
    w: float
    theta: float
    detect_threshold: float | None = None
    min_zeta: int | None = None
    k_cap: int | None = None

    def __post_init__(self):
        if self.r < 2:
            raise ValueError("r must be at least 2")
        if self.eps <= 0:
            raise ValueError("eps must be positive")
        if self.w < self.eps:
            raise ValueError("w must be at least eps")
        if self.detect_threshold is None:
            if self.theta <= 0:
                raise ValueError("a zero-coupling run needs an explicit threshold")
            self.detect_threshold = 0.5 * self.theta
        if self.theta > 0:
            if not (0.0 < self.detect_threshold < self.theta):
                raise ValueError("detect_threshold must lie strictly in (0, theta)")
        elif self.detect_threshold <= 0:
            raise ValueError("detect_threshold must be positive")


def default_params(p: int, theta: float) -> SelectorParams:
    """Asymptotic defaults: r = max(2, ceil(lnln p)), eps = 1/ln p,
    w = eps * ln^2 p, threshold theta/2.  All overridable."""
    if p < 16:
        raise ValueError("defaults need p >= 16")
    lp = math.log(p)
    r = max(2, math.ceil(math.log(lp)))
    eps = 1.0 / lp
    return SelectorParams(r=r, eps=eps, w=eps * lp * lp, theta=theta)


@dataclass
class Occurrence:
    """One placement of a pattern: lattice position, quarter-turn rotation,
    and the vertex ids it covers in template slot order."""

    position: tuple[int, int]
    rotation: int
    vertex_ids: tuple[int, ...]
    center: np.ndarray


@dataclass
class CopySet:
    """A pattern, all its matched occurrences (the original first when
    known), and the indices of the pooling subset chosen for separation."""

    template: PatternTemplate
    matches: list[Occurrence]
    separated: list[int] = field(default_factory=list)
    torus: Torus | None = None


def _occurrence_center(ids, points, torus: Torus) -> np.ndarray:
    local = unwrap_chart(points[list(ids)], points[ids[0]], torus)
    return torus.wrap(points[ids[0]] + local.mean(axis=0))


def find_copies(lattice: Lattice, template: PatternTemplate, graph,
                anchor: tuple[int, int] | None = None) -> CopySet:
    """All placements where a rotation of the pattern occurs contiguously.

    A placement matches when every rotated pattern offset is occupied and
    no foreign vertex sits inside the pattern's convex hull (checked on
    the hull-interior cells).  Placements wrap around the torus.
    Duplicates across rotations of symmetric patterns are removed by
    occurrence vertex set; when `anchor` names the template's own
    placement, that occurrence is moved to the front.
    """
    occ = lattice.occupancy
    m = lattice.period
    if template.k > m:
        raise ValueError("pattern exceeds the lattice period")
    seen_patterns: set[frozenset] = set()
    raw: list[Occurrence] = []
    for q in range(4):
        rot = template.rotated(q)
        key = frozenset(rot.offsets)
        if key in seen_patterns:
            continue
        seen_patterns.add(key)
        present = np.ones((m, m), dtype=bool)
        for a, b in rot.offsets:
            present &= np.roll(occ, (-a, -b), axis=(0, 1))
        for a, b in rot.interior_cells():
            present &= ~np.roll(occ, (-a, -b), axis=(0, 1))
        for i, j in zip(*np.nonzero(present)):
            ids = tuple(
                lattice.vertex_of_node[((i + a) % m, (j + b) % m)]
                for a, b in rot.offsets
            )
            raw.append(Occurrence(
                position=(int(i), int(j)),
                rotation=q,
                vertex_ids=ids,
                center=_occurrence_center(ids, graph.points, lattice.torus),
            ))
    matches: list[Occurrence] = []
    seen_sets: set[frozenset] = set()
    for occr in raw:
        key = frozenset(occr.vertex_ids)
        if key not in seen_sets:
            seen_sets.add(key)
            matches.append(occr)
    if anchor is not None:
        for idx, occr in enumerate(matches):
            if occr.position == tuple(anchor) and occr.rotation == 0:
                matches.insert(0, matches.pop(idx))
                break
    return CopySet(template=template, matches=matches, torus=lattice.torus)


def greedy_separated(copies: CopySet, w: float) -> CopySet:
    """Fill the pooling subset greedily in scan order.

    An occurrence is accepted iff its center is at least `w` (toroidal)
    from every accepted one; the center distance lower-bounds the
    bottleneck distance between the vertex sets, so accepted occurrences
    are genuinely w-separated.  The first occurrence is always accepted.
    """
    if not copies.matches:
        raise ValueError("no occurrences to separate")
    torus = copies.torus
    accepted: list[int] = []
    for idx, occr in enumerate(copies.matches):
        if all(
            torus.distance(occr.center, copies.matches[j].center) >= w
            for j in accepted
        ):
            accepted.append(idx)
    copies.separated = accepted
    return copies


def pooled_scm(samples: SampleMatrix, copies: CopySet) -> np.ndarray:
    """Average the per-occurrence sample covariances over the pooling set.

    Occurrence vertex lists are slot-aligned, so entry (a, b) always
    refers to the same pair of template slots regardless of position or
    rotation.  The reduction order is the fixed scan order.
    """
    if not copies.separated:
        raise ValueError("pooling subset is empty")
    X = samples.data
    size = copies.template.size
    out = np.zeros((size, size))
    for idx in copies.separated:
        ids = copies.matches[idx].vertex_ids
        if len(ids) != size:
            raise ValueError("occurrence is not slot-aligned with the template")
        sub = X[:, list(ids)]
        out += sub.T @ sub
    out /= samples.n * len(copies.separated)
    return out


def detect_edges(S: np.ndarray, h_slots, theta: float, threshold: float):
    """Read edges among the inner slots from the pooled covariance.

    Inverts the Schur complement of the inner block and declares an edge
    where the recovered precision entry clears the threshold in absolute
    value.  Returns the boolean adjacency over the inner slots and the
    recovered precision matrix for margin diagnostics.  Raises
    DetectionSkipped when the linear algebra is unusable.
    """
    S = np.asarray(S, dtype=float)
    hpos = np.asarray(h_slots, dtype=int)
    mask = np.ones(S.shape[0], dtype=bool)
    mask[hpos] = False
    rpos = np.nonzero(mask)[0]
    SH = S[np.ix_(hpos, hpos)]
    try:
        if len(rpos):
            SHR = S[np.ix_(hpos, rpos)]
            SR = S[np.ix_(rpos, rpos)]
            core = SH - SHR @ sla.cho_solve(sla.cho_factor(SR), SHR.T)
        else:
            core = SH
        j_hat = np.linalg.inv(core)
    except np.linalg.LinAlgError as exc:
        raise DetectionSkipped(str(exc)) from exc
    adj = np.abs(j_hat) >= threshold
    np.fill_diagonal(adj, False)
    return adj, j_hat


class _BoxCounter:
    """Toroidal k x k window sums from one 2-D prefix table."""

    def __init__(self, grid: np.ndarray):
        m = grid.shape[0]
        self.m = m
        self.prefix = np.zeros((2 * m + 1, 2 * m + 1), dtype=np.int64)
        self.prefix[1:, 1:] = (
            np.tile(grid, (2, 2)).astype(np.int64).cumsum(0).cumsum(1)
        )

    def counts(self, k: int) -> np.ndarray:
        if k > self.m:
            raise ValueError("window exceeds the lattice period")
        i = np.arange(self.m)
        P = self.prefix
        return (
            P[np.ix_(i + k, i + k)]
            - P[np.ix_(i, i + k)]
            - P[np.ix_(i + k, i)]
            - P[np.ix_(i, i)]
        )


def _box_counts(grid: np.ndarray, k: int) -> np.ndarray:
    """Count of true cells in every k x k toroidal window (anchor layout)."""
    return _BoxCounter(grid).counts(k)


class _WindowIndex:
    """Per-row node buckets for fast vertex lookup in lattice windows."""

    def __init__(self, lattice: Lattice):
        self.m = lattice.period
        self.rows: list[np.ndarray] = [
            np.empty(0, dtype=int) for _ in range(self.m)
        ]
        self.row_vertices: list[np.ndarray] = [
            np.empty(0, dtype=int) for _ in range(self.m)
        ]
        per_row: dict[int, list[tuple[int, int]]] = {}
        for v, (i, j) in lattice.node_of_vertex.items():
            per_row.setdefault(i, []).append((j, v))
        for i, pairs in per_row.items():
            pairs.sort()
            self.rows[i] = np.array([j for j, _ in pairs], dtype=int)
            self.row_vertices[i] = np.array([v for _, v in pairs], dtype=int)

    def vertices_in(self, i0: int, j0: int, k: int) -> list[int]:
        out: list[int] = []
        m = self.m
        for di in range(k):
            i = (i0 + di) % m
            cols, verts = self.rows[i], self.row_vertices[i]
            if len(cols) == 0:
                continue
            j_end = j0 + k
            if j_end <= m:
                lo = np.searchsorted(cols, j0)
                hi = np.searchsorted(cols, j_end)
                out.extend(verts[lo:hi])
            else:
                lo = np.searchsorted(cols, j0)
                out.extend(verts[lo:])
                hi = np.searchsorted(cols, j_end - m)
                out.extend(verts[:hi])
        return out


def default_k_cap(r: int, eta: float, eps: float, m: int) -> int:
    """Window-size sanity cap: about (1/eps) sqrt(r/eta) log r nodes."""
    cap = math.ceil(math.sqrt(r / eta) * math.log(max(r, 3)) / eps)
    return max(3, min(cap, m))


def _candidate_squares(lattice: Lattice, r: int, target: np.ndarray,
                       k_cap: int, index: _WindowIndex,
                       occ_boxes: "_BoxCounter | None" = None):
    """Yield (i, j, k, ids) squares in row-major scan order.

    For each anchor, k grows until the window first encloses at least r
    vertices; the anchor qualifies when that count is exactly r and the
    window holds at least one target vertex.  Windows are automatically
    contiguous: every vertex inside the square belongs to the window set.
    """
    m = lattice.period
    tgt_grid = np.zeros((m, m), dtype=bool)
    for v in np.nonzero(target)[0]:
        tgt_grid[lattice.node_of_vertex[v]] = True
    if occ_boxes is None:
        occ_boxes = _BoxCounter(lattice.occupancy)
    tgt_boxes = _BoxCounter(tgt_grid)
    reached = np.zeros((m, m), dtype=bool)
    candidates: list[tuple[int, int, int]] = []
    for k in range(1, min(k_cap, m) + 1):
        cnt = occ_boxes.counts(k)
        newly = (cnt >= r) & ~reached
        reached |= newly
        good = newly & (cnt == r) & (tgt_boxes.counts(k) > 0)
        for i, j in zip(*np.nonzero(good)):
            candidates.append((int(i), int(j), k))
        if reached.all():
            break
    candidates.sort()
    for i, j, k in candidates:
        ids = index.vertices_in(i, j, k)
        if len(ids) == r:
            yield i, j, k, sorted(ids)


def choose_template(lattice: Lattice, r: int, detected, graph,
                    k_cap: int | None = None):
    """First lattice square in scan order holding exactly r vertices,
    at least one of them not yet detected.

    Returns ((i, j, k), template, vertex ids).  The template is the
    window's occupancy pattern cropped to its bounding square, slots
    ordered to follow the sorted vertex ids.  Raises TemplateNotFound
    when no square qualifies within the cap.
    """
    index = _WindowIndex(lattice)
    target = ~np.asarray(detected, dtype=bool)
    if k_cap is None:
        k_cap = default_k_cap(r, graph.params.eta, lattice.eps, lattice.period)
    for i, j, k, ids in _candidate_squares(lattice, r, target, k_cap, index):
        template, _ = _window_template(lattice, ids, i, j)
        return (i, j, k), template, tuple(ids)
    raise TemplateNotFound(f"no window of exactly {r} vertices within cap {k_cap}")


def _window_template(lattice: Lattice, ids, i0: int, j0: int):
    """Pattern of the window's occupied cells, cropped and normalized.

    Slot order follows `ids`.  Returns the template and its lattice anchor
    (the position find_copies reports for the original occurrence).
    """
    m = lattice.period
    rel = [
        (
            (lattice.node_of_vertex[v][0] - i0) % m,
            (lattice.node_of_vertex[v][1] - j0) % m,
        )
        for v in ids
    ]
    r0 = min(a for a, _ in rel)
    c0 = min(b for _, b in rel)
    offsets = tuple((a - r0, b - c0) for a, b in rel)
    template = PatternTemplate.from_offsets(offsets)
    anchor = ((i0 + r0) % m, (j0 + c0) % m)
    return template, anchor


def _middle_slots(lattice: Lattice, ids, square,
                  node_of_vertex) -> tuple[list[int], int]:
    """Slots of window vertices inside the middle half-square of the
    chosen window, growing the middle one ring at a time if it is empty.
    Returns (slot list, margin in rings actually achieved)."""
    i0, j0, k = square
    m = lattice.period
    k_h = max(1, k // 2)
    while True:
        margin = (k - k_h) // 2
        lo_i, lo_j = i0 + margin, j0 + margin
        slots = []
        for t, v in enumerate(ids):
            a = (node_of_vertex[v][0] - lo_i) % m
            b = (node_of_vertex[v][1] - lo_j) % m
            if a < k_h and b < k_h:
                slots.append(t)
        if slots or k_h >= k:
            return slots, margin
        k_h = min(k, k_h + 2)


@dataclass
class SelectionReport:
    """Outcome of a recovery run with loss metrics against ground truth."""

    p: int
    n: int
    r: int
    eps: float
    w: float
    theta: float
    copies_found: int
    copies_used: int
    zero_one_loss: int
    missed_edges: int
    false_edges: int
    undecided_vertices: list[int]
    runtime_ms: float
    edges: list[tuple[int, int]]
    true_edge_count: int = 0
    iterations: int = 0
    achieved_zetas: list[float] = field(default_factory=list)
    provenance: dict = field(default_factory=dict)
    low_confidence: bool = False

    @property
    def edge_error_rate(self) -> float:
        return (self.missed_edges + self.false_edges) / max(1, self.true_edge_count)

    def to_json(self) -> str:
        return json.dumps(
            {
                "p": self.p,
                "n": self.n,
                "r": self.r,
                "eps": self.eps,
                "w": self.w,
                "theta": self.theta,
                "copies_found": self.copies_found,
                "copies_used": self.copies_used,
                "zero_one_loss": self.zero_one_loss,
                "missed_edges": self.missed_edges,
                "false_edges": self.false_edges,
                "undecided_vertices": list(self.undecided_vertices),
                "runtime_ms": self.runtime_ms,
                "edges": [[int(u), int(v)] for u, v in self.edges],
            }
        )


def zero_one_loss(e_hat, e_true):
    """(loss, missed, false): loss is 0 iff the adjacencies are identical;
    the counts enumerate the symmetric difference over unordered pairs."""
    A = sp.csr_matrix(e_hat)
    B = sp.csr_matrix(e_true)
    if A.shape != B.shape:
        raise ValueError("adjacency shapes differ")

    def pair_set(M):
        coo = M.tocoo()
        return {
            (int(u), int(v))
            for u, v, x in zip(coo.row, coo.col, coo.data)
            if u < v and x
        }

    ea, eb = pair_set(A), pair_set(B)
    missed = len(eb - ea)
    false = len(ea - eb)
    return (0 if (missed == 0 and false == 0) else 1), missed, false


def _snap_eps(eps: float, s: float) -> float:
    """Largest lattice pitch <= about eps that divides the torus side."""
    m = max(1, round(s / eps))
    return s / m


def _quantize_with_backoff(graph, eps: float, max_halvings: int = 8):
    """Quantize, halving the pitch on node collisions."""
    eps = _snap_eps(eps, graph.torus.s)
    last: CollisionError | None = None
    for _ in range(max_halvings + 1):
        try:
            return quantize(graph, eps)
        except CollisionError as exc:
            last = exc
            eps = _snap_eps(eps / 2.0, graph.torus.s)
    raise last


def run_selection(
    graph,
    params: SelectorParams,
    samples: SampleMatrix | None = None,
    model: PrecisionModel | None = None,
    exact_cov: bool = False,
) -> SelectionReport:
    """Full recovery loop: window choice, copy search, separation, pooling,
    core detection with transport to all copies, and loss metrics.

    With `exact_cov` the population covariance of `model` (assembled from
    the graph if omitted) replaces the pooled sample covariance; otherwise
    `samples` drawn from the graph's model are pooled.  A vertex is marked
    decided only when all its potential neighbors (the beta-ball around
    it) were examined jointly with it, so every edge of a decided vertex
    has been explicitly ruled in or out.  Conflicting edge decisions keep
    the larger detection margin.
    """
    t0 = time.perf_counter()
    p = graph.p
    beta = graph.params.beta
    if exact_cov:
        if model is None:
            model = assemble_precision(
                graph.adjacency, params.theta, graph.params.d
            )
        elif model.p != p:
            raise ValueError("model dimension disagrees with the graph")
    elif samples is None:
        raise ValueError("need samples unless exact_cov is set")
    elif samples.p != p:
        raise ValueError("sample dimension disagrees with the graph")

    lattice = _quantize_with_backoff(graph, params.eps)
    eps_used = lattice.eps
    index = _WindowIndex(lattice)
    k_cap = params.k_cap or default_k_cap(
        params.r, graph.params.eta, eps_used, lattice.period
    )
    tree = cKDTree(np.mod(graph.points, graph.torus.s), boxsize=graph.torus.s)
    node_of_vertex = lattice.node_of_vertex

    detected = np.zeros(p, dtype=bool)
    undecided = np.zeros(p, dtype=bool)
    decisions: dict[tuple[int, int], tuple[bool, float, dict]] = {}
    copies_found = copies_used = iterations = 0
    achieved_zetas: list[float] = []
    low_confidence = False

    def ball_ids(v: int) -> list[int]:
        return tree.query_ball_point(graph.points[v] % graph.torus.s, beta)

    def markable(v: int, img_set: set) -> bool:
        return all(u in img_set for u in ball_ids(v))

    occ_boxes = _BoxCounter(lattice.occupancy)  # occupancy never changes
    while True:
        target = ~(detected | undecided)
        if not target.any():
            break
        progressed = False
        for i, j, k, ids in _candidate_squares(
            lattice, params.r, target, k_cap, index, occ_boxes=occ_boxes
        ):
            template, anchor = _window_template(lattice, ids, i, j)
            outside = np.ones(p, dtype=bool)
            outside[list(ids)] = False
            outside_ids = np.nonzero(outside)[0]
            window_dist = graph_distance(graph.adjacency, ids, outside_ids)
            if math.isinf(window_dist):
                # window contains whole components: the local inversion is
                # exact with no truncation, so the whole window is the core
                h_slots = list(range(len(ids)))
                zeta = math.inf
            else:
                h_slots, _ = _middle_slots(
                    lattice, ids, (i, j, k), node_of_vertex
                )
                if not h_slots:
                    continue
                h_ids = [ids[t] for t in h_slots]
                dist = graph_distance(graph.adjacency, h_ids, outside_ids)
                zeta = dist - 2 if math.isfinite(dist) else math.inf
            h_ids = [ids[t] for t in h_slots]
            # cheap viability screen: the window's own core must decide
            # at least one new vertex, else copies cannot either
            h_set = set(h_ids)
            if not any(
                target[v] and markable(v, h_set) for v in h_ids
            ):
                continue
            if params.min_zeta is not None and zeta < params.min_zeta:
                continue

            copies = find_copies(lattice, template, graph, anchor=anchor)
            greedy_separated(copies, params.w)
            copies_found += len(copies.matches)
            copies_used += len(copies.separated)
            if len(copies.separated) == 1 and not exact_cov:
                low_confidence = True
            if exact_cov:
                S = model.covariance_submatrix(list(ids))
            else:
                try:
                    S = pooled_scm(samples, copies)
                except ValueError:
                    continue
            try:
                adj_h, j_hat = detect_edges(
                    S, h_slots, params.theta, params.detect_threshold
                )
            except DetectionSkipped:
                continue

            iteration_marked = False
            for occ_idx in copies.separated:
                occ = copies.matches[occ_idx]
                img = [occ.vertex_ids[t] for t in h_slots]
                img_set = set(img)
                for a in range(len(img)):
                    for b in range(a + 1, len(img)):
                        u, v = img[a], img[b]
                        key = (u, v) if u < v else (v, u)
                        margin_ab = abs(
                            abs(j_hat[a, b]) - params.detect_threshold
                        )
                        declared = bool(adj_h[a, b])
                        prev = decisions.get(key)
                        if prev is None:
                            decisions[key] = (
                                declared,
                                margin_ab,
                                {"iteration": iterations, "copy": occ_idx,
                                 "conflicts": []},
                            )
                        elif margin_ab > prev[1]:
                            conflicts = prev[2]["conflicts"]
                            if declared != prev[0]:
                                conflicts = conflicts + [
                                    {"iteration": prev[2]["iteration"],
                                     "declared": prev[0],
                                     "margin": prev[1]}
                                ]
                            decisions[key] = (
                                declared,
                                margin_ab,
                                {"iteration": iterations, "copy": occ_idx,
                                 "conflicts": conflicts},
                            )
                        elif declared != prev[0]:
                            prev[2]["conflicts"].append(
                                {"iteration": iterations,
                                 "declared": declared,
                                 "margin": margin_ab}
                            )
                for v in img:
                    if not detected[v] and markable(v, img_set):
                        detected[v] = True
                        undecided[v] = False
                        iteration_marked = True
            iterations += 1
            achieved_zetas.append(zeta)
            if iteration_marked:
                progressed = True
                break
        if not progressed:
            undecided |= ~detected
            break

    edges = sorted(k for k, (declared, _, _) in decisions.items() if declared)
    rows = [u for u, v in edges] + [v for u, v in edges]
    cols = [v for u, v in edges] + [u for u, v in edges]
    e_hat = sp.csr_matrix(
        (np.ones(len(rows), dtype=np.int8), (rows, cols)), shape=(p, p)
    )
    loss, missed, false = zero_one_loss(e_hat, graph.adjacency)
    return SelectionReport(
        p=p,
        n=samples.n if samples is not None else 0,
        r=params.r,
        eps=eps_used,
        w=params.w,
        theta=params.theta,
        copies_found=copies_found,
        copies_used=copies_used,
        zero_one_loss=loss,
        missed_edges=missed,
        false_edges=false,
        undecided_vertices=sorted(np.nonzero(undecided)[0].tolist()),
        runtime_ms=1000.0 * (time.perf_counter() - t0),
        edges=edges,
        true_edge_count=graph.adjacency.nnz // 2,
        iterations=iterations,
        achieved_zetas=achieved_zetas,
        provenance={f"{u},{v}": meta for (u, v), (_, _, meta) in decisions.items()},
        low_confidence=low_confidence,
    )
