import numpy as np
import pytest

from fuzzyseg.errors import (
    BadObjectIdError,
    ConflictingSeedsError,
    EmptySeedsError,
    OutOfRangeError,
    UnsegmentedSpelError,
)
from fuzzyseg.imagecore import GrayImage, Spel
from fuzzyseg.mofs import (
    BucketQueue,
    SeedSpec,
    Semisegmentation,
    connectedness_map,
    crisp_labels,
    quantize,
    quantize_level,
    segment,
)

from oracles import maxmin_closure


def blank_image(width, height):
    return GrayImage(np.zeros((height, width)))


def random_instance(rng, max_side=5, num_objects=2):
    width = int(rng.integers(2, max_side + 1))
    height = int(rng.integers(1, max_side + 1))
    psi_h = rng.integers(0, 1001, (height, width - 1)).astype(np.int16)
    psi_v = rng.integers(0, 1001, (height - 1, width)).astype(np.int16)
    all_spels = [(x, y) for y in range(height) for x in range(width)]
    picks = rng.choice(len(all_spels), size=num_objects, replace=False)
    seeds = {m + 1: [all_spels[i]] for m, i in enumerate(picks)}
    return width, height, psi_h, psi_v, seeds


def run_both(stub_model_cls, width, height, psi_h, psi_v, seeds, per_object_fields=None):
    """Run the engine and the closure oracle; return both results."""
    fields = per_object_fields or {m: (psi_h, psi_v) for m in seeds}
    model = stub_model_cls(fields)
    spec = SeedSpec({m: [Spel(*p) for p in pts] for m, pts in seeds.items()})
    seg = segment(blank_image(width, height), spec, model)
    oracle_fields = {}
    for m, pts in seeds.items():
        idx = [y * width + x for x, y in pts]
        fh, fv = fields[m]
        oracle_fields[m] = maxmin_closure(fh, fv, idx, width, height)
    stacked = np.stack([oracle_fields[m] for m in sorted(seeds)])
    sigma0 = stacked.max(axis=0)
    members = (stacked == sigma0[None]) & (sigma0[None] > 0)
    return seg, sigma0, members


class TestQuantize:
    def test_truncation(self):
        assert quantize(0.12345) == 0.123

    def test_half_up(self):
        assert quantize(0.9995) == 1.0
        assert quantize(0.0005) == 0.001

    def test_endpoints(self):
        assert quantize(0.0) == 0.0
        assert quantize(1.0) == 1.0

    def test_out_of_range(self):
        with pytest.raises(OutOfRangeError):
            quantize(1.2)
        with pytest.raises(OutOfRangeError):
            quantize(-0.1)

    def test_levels(self):
        assert quantize_level(0.5004) == 500
        assert quantize_level(0.5006) == 501


class TestBucketQueue:
    def test_fifo_within_bucket(self):
        q = BucketQueue()
        q.push(1000, 1)
        q.push(1000, 2)
        assert q.pop_max() == (1000, 1)
        assert q.pop_max() == (1000, 2)

    def test_cursor_moves_down_only(self):
        q = BucketQueue()
        q.push(900, 1)
        q.push(500, 2)
        assert q.pop_max() == (900, 1)
        with pytest.raises(ValueError):
            q.push(901, 3)
        q.push(700, 3)
        assert q.pop_max() == (700, 3)
        assert q.pop_max() == (500, 2)
        assert q.pop_max() is None

    def test_len(self):
        q = BucketQueue()
        assert len(q) == 0
        q.push(10, 1)
        assert len(q) == 1
        q.pop_max()
        assert len(q) == 0


class TestSeedSpec:
    def test_from_clicks_dilates(self):
        spec = SeedSpec.from_clicks({1: [(1, 1)]}, 4, 4)
        assert len(spec.regions[1]) == 9
        assert Spel(0, 0) in spec.regions[1]

    def test_dilation_clips_at_border(self):
        spec = SeedSpec.from_clicks({1: [(0, 0)]}, 4, 4)
        assert len(spec.regions[1]) == 4

    def test_out_of_bounds_click(self):
        with pytest.raises(ValueError, match=r"\(-1, 0\)"):
            SeedSpec.from_clicks({1: [(-1, 0)]}, 4, 4)

    def test_ids_must_be_consecutive(self):
        with pytest.raises(ValueError):
            SeedSpec({1: [Spel(0, 0)], 3: [Spel(1, 1)]})

    def test_empty_rejected(self):
        with pytest.raises(EmptySeedsError):
            SeedSpec({})

    def test_conflict_detection(self):
        spec = SeedSpec({1: [Spel(0, 0)], 2: [Spel(0, 0)]})
        with pytest.raises(ConflictingSeedsError):
            spec.validate(4, 4)


class TestSegment:
    def test_three_spel_chain(self, stub_model_cls):
        # strengths 0.8 then 0.5 away from the seed
        psi_h = np.array([[800, 500]], dtype=np.int16)
        psi_v = np.zeros((0, 3), dtype=np.int16)
        model = stub_model_cls({1: (psi_h, psi_v)})
        spec = SeedSpec({1: [Spel(0, 0)]})
        seg = segment(blank_image(3, 1), spec, model)
        assert seg.sigma0_levels.tolist() == [[1000, 800, 500]]

    def test_all_affinity_one(self, stub_model_cls):
        psi_h = np.full((4, 3), 1000, dtype=np.int16)
        psi_v = np.full((3, 4), 1000, dtype=np.int16)
        model = stub_model_cls({1: (psi_h, psi_v)})
        seg = segment(blank_image(4, 4), SeedSpec({1: [Spel(2, 2)]}), model)
        assert (seg.sigma0_levels == 1000).all()
        assert seg.members.all()

    def test_equidistant_spel_belongs_to_both(self, stub_model_cls):
        psi_h = np.array([[700, 900, 900, 700]], dtype=np.int16)
        psi_v = np.zeros((0, 5), dtype=np.int16)
        model = stub_model_cls({1: (psi_h, psi_v), 2: (psi_h, psi_v)})
        spec = SeedSpec({1: [Spel(0, 0)], 2: [Spel(4, 0)]})
        seg = segment(blank_image(5, 1), spec, model)
        assert seg.sigma_vector(Spel(2, 0)) == (0.7, 0.7, 0.7)

    def test_conflicting_seeds_rejected(self, stub_model_cls):
        psi = np.zeros((2, 1), dtype=np.int16), np.zeros((1, 2), dtype=np.int16)
        model = stub_model_cls({1: psi, 2: psi})
        spec = SeedSpec({1: [Spel(0, 0)], 2: [Spel(0, 0), Spel(1, 1)]})
        with pytest.raises(ConflictingSeedsError):
            segment(blank_image(2, 2), spec, model)

    def test_oracle_equivalence_randomized(self, stub_model_cls, rng):
        for _ in range(40):
            num_objects = int(rng.integers(1, 3))
            width, height, psi_h, psi_v, seeds = random_instance(rng, 5, num_objects)
            seg, sigma0, members = run_both(stub_model_cls, width, height, psi_h, psi_v, seeds)
            assert np.array_equal(seg.sigma0_levels, sigma0)
            assert np.array_equal(seg.members, members)

    def test_per_object_fields_differ(self, stub_model_cls, rng):
        width = height = 4
        fields = {
            m: (
                rng.integers(0, 1001, (height, width - 1)).astype(np.int16),
                rng.integers(0, 1001, (height - 1, width)).astype(np.int16),
            )
            for m in (1, 2)
        }
        seeds = {1: [(0, 0)], 2: [(3, 3)]}
        seg, sigma0, members = run_both(
            stub_model_cls, width, height, None, None, seeds, per_object_fields=fields
        )
        assert np.array_equal(seg.sigma0_levels, sigma0)
        assert np.array_equal(seg.members, members)

    def test_monotone_extraction(self, stub_model_cls, rng):
        width, height, psi_h, psi_v, seeds = random_instance(rng, 5, 2)
        model = stub_model_cls({m: (psi_h, psi_v) for m in seeds})
        spec = SeedSpec({m: [Spel(*p) for p in pts] for m, pts in seeds.items()})
        levels_per_object = {m: [] for m in seeds}
        segment(
            blank_image(width, height),
            spec,
            model,
            monitor=lambda m, idx, level: levels_per_object[m].append(level),
        )
        for levels in levels_per_object.values():
            assert all(a >= b for a, b in zip(levels, levels[1:]))

    def test_idempotent_bytes(self, stub_model_cls, rng):
        width, height, psi_h, psi_v, seeds = random_instance(rng, 5, 2)
        model = stub_model_cls({m: (psi_h, psi_v) for m in seeds})
        spec = SeedSpec({m: [Spel(*p) for p in pts] for m, pts in seeds.items()})
        a = segment(blank_image(width, height), spec, model)
        b = segment(blank_image(width, height), spec, model)
        assert a.to_bytes() == b.to_bytes()

    def test_extra_seed_never_decreases_connectedness(self, stub_model_cls, rng):
        for _ in range(10):
            width, height, psi_h, psi_v, _ = random_instance(rng, 5, 1)
            model = stub_model_cls({1: (psi_h, psi_v)})
            img = blank_image(width, height)
            base = segment(img, SeedSpec({1: [Spel(0, 0)]}), model)
            extra_x = int(rng.integers(0, width))
            extra_y = int(rng.integers(0, height))
            more = segment(
                img, SeedSpec({1: [Spel(0, 0), Spel(extra_x, extra_y)]}), model
            )
            assert (connectedness_map(more, 1) >= connectedness_map(base, 1)).all()

    def test_invariants_hold(self, stub_model_cls, rng):
        for _ in range(10):
            width, height, psi_h, psi_v, seeds = random_instance(rng, 5, 2)
            seg, _, _ = run_both(stub_model_cls, width, height, psi_h, psi_v, seeds)
            sigma0 = seg.sigma0_levels
            members = seg.members
            # each sigma_m is 0 or sigma_0, and positive grades have an owner
            assert ((sigma0 > 0) == members.any(axis=0)).all()
            for m, pts in seeds.items():
                for x, y in pts:
                    assert sigma0[y, x] == 1000
                    assert members[m - 1, y, x]


class TestMaps:
    def build(self, stub_model_cls):
        psi_h = np.array([[800, 500]], dtype=np.int16)
        psi_v = np.zeros((0, 3), dtype=np.int16)
        model = stub_model_cls({1: (psi_h, psi_v)})
        return segment(blank_image(3, 1), SeedSpec({1: [Spel(0, 0)]}), model)

    def test_connectedness_map(self, stub_model_cls):
        seg = self.build(stub_model_cls)
        assert connectedness_map(seg, 1).tolist() == [[1.0, 0.8, 0.5]]

    def test_bad_object_id(self, stub_model_cls):
        seg = self.build(stub_model_cls)
        with pytest.raises(BadObjectIdError):
            connectedness_map(seg, 2)

    def test_seed_is_full_strength(self, stub_model_cls):
        seg = self.build(stub_model_cls)
        assert connectedness_map(seg, 1)[0, 0] == 1.0

    def test_other_object_spel_is_zero(self, stub_model_cls):
        psi_h = np.array([[900, 100, 900]], dtype=np.int16)
        psi_v = np.zeros((0, 4), dtype=np.int16)
        model = stub_model_cls({1: (psi_h, psi_v), 2: (psi_h, psi_v)})
        seg = segment(
            blank_image(4, 1), SeedSpec({1: [Spel(0, 0)], 2: [Spel(3, 0)]}), model
        )
        assert connectedness_map(seg, 1)[0, 3] == 0.0
        assert connectedness_map(seg, 2)[0, 0] == 0.0

    def test_crisp_labels_from_chain(self, stub_model_cls):
        seg = self.build(stub_model_cls)
        assert crisp_labels(seg).labels.tolist() == [[1, 1, 1]]

    def test_crisp_tie_goes_to_lowest_id(self):
        sigma0 = np.array([[700]], dtype=np.uint16)
        members = np.array([[[True]], [[True]], [[False]]])
        seg = Semisegmentation(sigma0, members)
        assert crisp_labels(seg).labels.tolist() == [[1]]

    def test_crisp_rejects_unreached_spels(self, stub_model_cls):
        psi_h = np.array([[0]], dtype=np.int16)
        psi_v = np.zeros((0, 2), dtype=np.int16)
        model = stub_model_cls({1: (psi_h, psi_v)})
        seg = segment(blank_image(2, 1), SeedSpec({1: [Spel(0, 0)]}), model)
        with pytest.raises(UnsegmentedSpelError):
            crisp_labels(seg)


class TestSerialization:
    def test_roundtrip(self, stub_model_cls, rng, tmp_path):
        width, height, psi_h, psi_v, seeds = random_instance(rng, 5, 2)
        seg, _, _ = run_both(stub_model_cls, width, height, psi_h, psi_v, seeds)
        path = tmp_path / "seg.bin"
        seg.save(path)
        assert Semisegmentation.load(path) == seg

    def test_header_layout(self, stub_model_cls):
        psi_h = np.array([[800, 500]], dtype=np.int16)
        psi_v = np.zeros((0, 3), dtype=np.int16)
        model = stub_model_cls({1: (psi_h, psi_v)})
        seg = segment(blank_image(3, 1), SeedSpec({1: [Spel(0, 0)]}), model)
        blob = seg.to_bytes()
        assert blob[:4] == b"FSEG"
        # width=3, height=1, M=1, then 3 spels x 2 uint16
        assert len(blob) == 16 + 3 * 2 * 2
