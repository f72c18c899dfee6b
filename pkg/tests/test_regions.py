import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ripeline.imaging import LabImage, RgbImage, rgb_to_lab
from ripeline.regions import (
    GrowthConfig,
    InputError,
    Region,
    RegionError,
    SuperpixelGraph,
    SuperpixelNode,
    build_graph,
    grow_regions,
    region_mask,
    region_to_thumbnail,
)
from ripeline.superpixels import SlicConfig, SuperpixelLabels, slic_segment
from ripeline.synthetic import red_disc_scene


def block_labels(rows, cols, cell=4):
    ids = np.arange(rows * cols).reshape(rows, cols)
    return np.kron(ids, np.ones((cell, cell), dtype=np.int64))


def test_graph_two_superpixels():
    lab = np.zeros((4, 6), dtype=np.int64)
    lab[:, 3:] = 1
    g = build_graph(SuperpixelLabels(lab, 2), LabImage(np.zeros((4, 6, 3))))
    assert g.k == 2 and g.edges == [(0, 1)]


def test_graph_single_superpixel():
    g = build_graph(SuperpixelLabels(np.zeros((3, 3), dtype=np.int64), 1), LabImage(np.zeros((3, 3, 3))))
    assert g.k == 1 and g.edges == []


def test_graph_three_by_three_lattice():
    lab = block_labels(3, 3)
    rng = np.random.default_rng(0)
    img = LabImage(rng.normal(0, 10, (12, 12, 3)))
    g = build_graph(SuperpixelLabels(lab, 9), img)
    # rook adjacency on a 3x3 lattice, counted by brute force
    want = set()
    for i in range(9):
        for j in range(9):
            ri, ci, rj, cj = i // 3, i % 3, j // 3, j % 3
            if i < j and abs(ri - rj) + abs(ci - cj) == 1:
                want.add((i, j))
    assert len(want) == 12
    assert set(g.edges) == want
    for i, node in enumerate(g.nodes):
        pix = img.data[lab == i]
        assert np.allclose(node.mean_lab, pix.mean(axis=0), atol=1e-12)
        assert node.pixel_count == 16
        ys, xs = np.nonzero(lab == i)
        assert node.bbox == (xs.min(), ys.min(), xs.max(), ys.max())
        assert node.centroid == pytest.approx((xs.mean(), ys.mean()))


def test_graph_shape_mismatch():
    with pytest.raises(InputError):
        build_graph(SuperpixelLabels(np.zeros((3, 3), dtype=np.int64), 1), LabImage(np.zeros((3, 4, 3))))


def make_graph(colors, edges, counts=None):
    counts = counts or [10] * len(colors)
    nodes = [SuperpixelNode(tuple(map(float, c)), (0.0, 0.0), n, (0, 0, 0, 0)) for c, n in zip(colors, counts)]
    return SuperpixelGraph(nodes, sorted(edges))


def reference_grow(graph, tau, min_pixels, order):
    """Seeded breadth-first growth written out with plain Python containers."""
    k = len(graph.nodes)
    adj = {i: set() for i in range(k)}
    for a, b in graph.edges:
        adj[a].add(b)
        adj[b].add(a)
    if order == "raster":
        seeds = list(range(k))
    elif order == "redness":
        seeds = sorted(range(k), key=lambda i: (-graph.nodes[i].mean_lab[1], i))
    else:
        seeds = sorted(range(k), key=lambda i: (-graph.nodes[i].pixel_count, i))
    taken = set()
    out = []
    for s in seeds:
        if s in taken:
            continue
        taken.add(s)
        region = [s]
        total = graph.nodes[s].pixel_count
        acc = [c * total for c in graph.nodes[s].mean_lab]
        queue = sorted(adj[s])
        while queue:
            n = queue.pop(0)
            if n in taken:
                continue
            mean = [v / total for v in acc]
            if math.dist(mean, graph.nodes[n].mean_lab) <= tau:
                taken.add(n)
                region.append(n)
                cnt = graph.nodes[n].pixel_count
                acc = [a + c * cnt for a, c in zip(acc, graph.nodes[n].mean_lab)]
                total += cnt
                queue.extend(sorted(adj[n]))
        if total >= min_pixels:
            out.append(frozenset(region))
    return out


@st.composite
def small_graphs(draw):
    k = draw(st.integers(1, 9))
    colors = draw(st.lists(st.tuples(*[st.floats(-40, 40, allow_nan=False)] * 3), min_size=k, max_size=k))
    counts = draw(st.lists(st.integers(1, 30), min_size=k, max_size=k))
    pairs = [(i, j) for i in range(k) for j in range(i + 1, k)]
    edges = draw(st.lists(st.sampled_from(pairs), unique=True)) if pairs else []
    return make_graph(colors, edges, counts)


def components(graph):
    parent = list(range(graph.k))

    def find(i):
        while parent[i] != i:
            i = parent[i]
        return i

    for a, b in graph.edges:
        parent[find(a)] = find(b)
    groups = {}
    for i in range(graph.k):
        groups.setdefault(find(i), set()).add(i)
    return {frozenset(g) for g in groups.values()}


@settings(max_examples=150, deadline=None)
@given(small_graphs(), st.floats(0, 60), st.sampled_from(["raster", "redness", "size"]))
def test_matches_reference_grower(graph, tau, order):
    cfg = GrowthConfig(similarity_threshold=tau, min_region_pixels=1, seed_order=order, max_region_fraction=1.0)
    got = [r.members for r in grow_regions(graph, cfg)]
    assert got == reference_grow(graph, tau, 1, order)
    members = [m for r in got for m in r]
    assert len(members) == len(set(members))


@settings(max_examples=100, deadline=None)
@given(small_graphs())
def test_threshold_extremes(graph):
    distinct = len({n.mean_lab for n in graph.nodes}) == graph.k
    zero = grow_regions(graph, GrowthConfig(0.0, 1, "raster", 1.0))
    if distinct:
        assert all(len(r.members) == 1 for r in zero)
    # tau = 0 regions refine the tau = inf regions
    inf = grow_regions(graph, GrowthConfig(math.inf, 1, "raster", 1.0))
    assert {r.members for r in inf} == components(graph)
    for r in zero:
        assert any(r.members <= big.members for big in inf)


def test_growth_is_not_monotone_in_threshold():
    # The running mean makes absorption order-dependent. With seed s (L=50),
    # neighbours p (L=40) and q (L=58): at tau=8 only q joins; at tau=10 p
    # joins first and drags the mean to 45, which then rejects q.
    g = make_graph([(50, 0, 0), (40, 0, 0), (58, 0, 0)], [(0, 1), (0, 2)])
    small = {r.members for r in grow_regions(g, GrowthConfig(8.0, 1, "raster", 1.0))}
    large = {r.members for r in grow_regions(g, GrowthConfig(10.0, 1, "raster", 1.0))}
    assert frozenset({0, 2}) in small
    assert frozenset({0, 1}) in large
    assert not any(frozenset({0, 2}) <= r for r in large)


def test_seed_orders():
    g = make_graph([(50, 5, 0), (50, 60, 0), (50, 30, 0)], [], counts=[5, 1, 9])
    assert [min(r.members) for r in grow_regions(g, GrowthConfig(0, 1, "redness", 1.0))] == [1, 2, 0]
    assert [min(r.members) for r in grow_regions(g, GrowthConfig(0, 1, "size", 1.0))] == [2, 0, 1]
    assert [min(r.members) for r in grow_regions(g, GrowthConfig(0, 1, "raster", 1.0))] == [0, 1, 2]


def test_small_and_huge_regions_dropped():
    g = make_graph([(50, 0, 0), (90, 0, 0)], [(0, 1)], counts=[5, 100])
    assert grow_regions(g, GrowthConfig(1.0, 10, "raster", 1.0))[0].members == frozenset({1})
    assert grow_regions(g, GrowthConfig(1.0, 1, "raster", 0.5))[0].members == frozenset({0})


def test_growth_config_validation():
    for kwargs in [dict(similarity_threshold=-1), dict(min_region_pixels=0), dict(seed_order="blue"),
                   dict(max_region_fraction=0)]:
        with pytest.raises(ValueError):
            GrowthConfig(**kwargs)


def test_red_disc_recovered():
    img, mask = red_disc_scene(96, 30)
    lab = rgb_to_lab(img)
    labels = slic_segment(lab, SlicConfig(k_target=64))
    regions = grow_regions(build_graph(labels, lab), GrowthConfig(similarity_threshold=10), image_pixels=96 * 96)
    assert len(regions) == 1
    got = region_mask(labels, regions[0])
    assert np.logical_xor(got, mask).sum() <= 0.05 * mask.sum()
    ys, xs = np.nonzero(got)
    assert regions[0].bbox == (xs.min(), ys.min(), xs.max(), ys.max())


def test_deterministic_order():
    img, _ = red_disc_scene(64, 18)
    lab = rgb_to_lab(img)
    labels = slic_segment(lab, SlicConfig(k_target=30))
    cfg = GrowthConfig(similarity_threshold=5, min_region_pixels=1, max_region_fraction=1.0)
    a = grow_regions(build_graph(labels, lab), cfg)
    b = grow_regions(build_graph(labels, lab), cfg)
    assert a == b


def whole(img):
    return Region(frozenset({0}), (0, 0, img.width - 1, img.height - 1), (0.0, 0.0, 0.0), img.width * img.height)


def test_thumbnail_whole_image_identity():
    rng = np.random.default_rng(0)
    img = RgbImage(rng.integers(0, 256, (20, 20, 3), dtype=np.uint8))
    assert region_to_thumbnail(img, whole(img), 20) == img


def test_thumbnail_upscale_keeps_corners():
    data = np.zeros((10, 10, 3), dtype=np.uint8)
    data[4:6, 4:6] = [[[255, 0, 0], [0, 255, 0]], [[0, 0, 255], [9, 9, 9]]]
    img = RgbImage(data)
    r = Region(frozenset({0}), (4, 4, 5, 5), (0.0, 0.0, 0.0), 4)
    # 5% of 2 pixels rounds to 0, so the crop is exactly the 2x2 block
    t = region_to_thumbnail(img, r, 8)
    assert t.data[0, 0].tolist() == [255, 0, 0]
    assert t.data[0, -1].tolist() == [0, 255, 0]
    assert t.data[-1, 0].tolist() == [0, 0, 255]
    assert t.data[-1, -1].tolist() == [9, 9, 9]


def test_thumbnail_aspect_distortion():
    img = RgbImage(np.zeros((40, 40, 3), dtype=np.uint8))
    r = Region(frozenset({0}), (5, 5, 14, 24), (0.0, 0.0, 0.0), 200)
    assert region_to_thumbnail(img, r, 32).data.shape == (32, 32, 3)


def test_thumbnail_errors():
    img = RgbImage(np.zeros((10, 10, 3), dtype=np.uint8))
    with pytest.raises(RegionError):
        region_to_thumbnail(img, Region(frozenset({0}), (5, 5, 4, 6), (0, 0, 0), 1), 16)
    with pytest.raises(RegionError):
        region_to_thumbnail(img, whole(img), 4)
    with pytest.raises(RegionError):
        region_to_thumbnail(img, Region(frozenset({0}), (0, 0, 10, 9), (0, 0, 0), 1), 16)
