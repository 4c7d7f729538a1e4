import json

import numpy as np
import pytest

from marsdust.degrade import (
    ALPHA_SET,
    AtmosphericLight,
    DatasetManifest,
    PairRecord,
    Reflexivity,
    TransmissionMap,
    auto_select_dusty_patches,
    estimate_atmospheric_light,
    estimate_reflexivity,
    generate_pairs,
    make_transmission,
    replay_dusty,
    synthesize_dusty,
)
from marsdust.errors import EstimationError, ManifestError, ValidationError
from marsdust.noise import NoiseField
from marsdust.raster import Image, load_image

from conftest import make_clean_image, make_dust_patches


def reflexivity_oracle(patches):
    """Independent scalar-loop double sum, straight from the definition."""
    channels = patches[0].channels
    per_patch = []
    for patch in patches:
        sums = [0.0] * channels
        counted = 0
        for y in range(patch.height):
            for x in range(patch.width):
                m = max(patch.data[y, x, c] for c in range(channels))
                if m <= 0.0:
                    continue
                counted += 1
                for c in range(channels):
                    sums[c] += patch.data[y, x, c] / m
        if counted:
            per_patch.append([s / counted for s in sums])
    return [sum(p[c] for p in per_patch) / len(per_patch) for c in range(channels)]


class TestTransmission:
    def test_zero_noise_is_fully_transparent(self):
        t = make_transmission(NoiseField(np.zeros((4, 5))), 0.7)
        assert np.all(t.values == 1.0)

    def test_full_noise_full_alpha_is_opaque(self):
        t = make_transmission(NoiseField(np.ones((3, 3))), 1.0)
        assert np.all(t.values == 0.0)

    def test_direct_arithmetic(self):
        t = make_transmission(NoiseField(np.full((2, 2), 0.5)), 0.6)
        assert np.allclose(t.values, 0.7, rtol=0, atol=1e-15)

    def test_monotone_in_alpha(self):
        rng = np.random.default_rng(1)
        field = NoiseField(rng.random((16, 16)))
        t1 = make_transmission(field, 0.4)
        t2 = make_transmission(field, 0.9)
        assert np.all(t1.values >= t2.values)

    def test_output_within_band(self):
        rng = np.random.default_rng(2)
        field = NoiseField(rng.random((8, 8)))
        t = make_transmission(field, 0.6)
        assert t.values.min() >= 1 - 0.6 - 1e-15 and t.values.max() <= 1.0

    def test_alpha_validated(self):
        with pytest.raises(ValidationError):
            make_transmission(NoiseField(np.zeros((2, 2))), 0.0)
        with pytest.raises(ValidationError):
            make_transmission(NoiseField(np.zeros((2, 2))), 1.1)


class TestReflexivity:
    def test_gray_patch_gives_unit_phi(self):
        patch = Image(np.full((4, 4, 3), 0.3))
        phi = estimate_reflexivity([patch])
        assert phi.phi == (1.0, 1.0, 1.0)

    def test_constant_color_patch(self):
        patch = Image(np.tile(np.array([0.8, 0.6, 0.4]), (5, 5, 1)))
        phi = estimate_reflexivity([patch])
        # (1, 0.75, 0.5) computed in the same float arithmetic as the example
        assert phi.phi == (1.0, 0.6 / 0.8, 0.4 / 0.8)

    def test_two_patch_average(self):
        p1 = Image(np.tile(np.array([0.9, 0.72, 0.54]), (3, 3, 1)))  # (1, .8, .6)
        p2 = Image(np.tile(np.array([0.5, 0.3, 0.2]), (3, 3, 1)))  # (1, .6, .4)
        phi = estimate_reflexivity([p1, p2])
        assert np.allclose(phi.phi, (1.0, 0.7, 0.5), rtol=0, atol=1e-15)

    def test_matches_scalar_loop_oracle(self):
        rng = np.random.default_rng(77)
        for trial in range(20):
            patches = [
                Image(np.clip(rng.random((rng.integers(2, 6), rng.integers(2, 6), 3)) + 0.05, 0, 1))
                for _ in range(rng.integers(1, 5))
            ]
            got = estimate_reflexivity(patches).phi
            want = reflexivity_oracle(patches)
            assert max(abs(g - w) for g, w in zip(got, want)) < 1e-12

    def test_zero_max_pixels_skipped(self):
        arr = np.full((2, 2, 3), 0.5)
        arr[0, 0] = 0.0  # black pixel must not poison the average
        phi = estimate_reflexivity([Image(arr)])
        assert phi.phi == (1.0, 1.0, 1.0)

    def test_fully_black_patch_dropped(self):
        black = Image(np.zeros((2, 2, 3)))
        ok = Image(np.tile(np.array([0.8, 0.6, 0.4]), (2, 2, 1)))
        phi = estimate_reflexivity([black, ok])
        assert phi.phi == (1.0, 0.6 / 0.8, 0.4 / 0.8)

    def test_empty_set_rejected(self):
        with pytest.raises(EstimationError):
            estimate_reflexivity([])

    def test_all_black_rejected(self):
        with pytest.raises(EstimationError):
            estimate_reflexivity([Image(np.zeros((2, 2, 3)))])

    def test_phi_max_at_most_one(self):
        rng = np.random.default_rng(5)
        for _ in range(10):
            patches = [Image(np.clip(rng.random((4, 4, 3)) + 0.01, 0, 1)) for _ in range(3)]
            assert max(estimate_reflexivity(patches).phi) <= 1.0 + 1e-12


class TestAtmosphericLight:
    def test_unit_phi(self):
        img = Image(np.full((3, 3, 3), 0.9))
        light = estimate_atmospheric_light(img, Reflexivity((1.0, 1.0, 1.0)))
        assert light.values == (0.9, 0.9, 0.9)

    def test_direct_arithmetic(self):
        arr = np.zeros((2, 2, 3))
        arr[0, 0] = (0.8, 0.1, 0.2)
        img = Image(arr)
        light = estimate_atmospheric_light(img, Reflexivity((1.0, 0.75, 0.5)))
        # (0.8, 0.6, 0.4) in the same float arithmetic as the example
        assert light.values == (1.0 * 0.8, 0.75 * 0.8, 0.5 * 0.8)

    def test_scaling_property(self):
        rng = np.random.default_rng(9)
        phi = Reflexivity((1.0, 0.7, 0.55))
        for k in (0.25, 0.5, 0.99):
            base = rng.random((6, 6, 3))
            l1 = estimate_atmospheric_light(Image(base), phi)
            l2 = estimate_atmospheric_light(Image(base * k), phi)
            assert np.allclose(np.array(l2.values), k * np.array(l1.values), rtol=1e-15)

    def test_channel_mismatch(self):
        with pytest.raises(ValidationError):
            estimate_atmospheric_light(Image(np.zeros((2, 2, 1))), Reflexivity((1.0, 0.5, 0.5)))


class TestSynthesize:
    def test_full_transmission_is_identity(self):
        rng = np.random.default_rng(3)
        img = Image(rng.random((5, 5, 3)))
        out = synthesize_dusty(img, TransmissionMap(np.ones((5, 5))), AtmosphericLight((0.9, 0.8, 0.7)))
        assert np.array_equal(out.data, img.data)

    def test_zero_transmission_is_light(self):
        rng = np.random.default_rng(4)
        img = Image(rng.random((5, 5, 3)))
        light = AtmosphericLight((0.9, 0.8, 0.7))
        out = synthesize_dusty(img, TransmissionMap(np.zeros((5, 5))), light)
        assert np.allclose(out.data, np.array(light.values), rtol=0, atol=1e-15)

    def test_direct_arithmetic(self):
        img = Image(np.full((1, 1, 1), 0.8))
        out = synthesize_dusty(img, TransmissionMap(np.full((1, 1), 0.5)), AtmosphericLight((0.6,)))
        assert abs(out.data[0, 0, 0] - 0.7) < 1e-15

    def test_convex_combination_bound(self):
        rng = np.random.default_rng(6)
        img = Image(rng.random((8, 8, 3)))
        tmap = TransmissionMap(rng.random((8, 8)))
        light = AtmosphericLight((0.9, 0.5, 0.2))
        out = synthesize_dusty(img, tmap, light)
        low = np.minimum(img.data, np.array(light.values))
        high = np.maximum(img.data, np.array(light.values))
        assert np.all(out.data >= low - 1e-12) and np.all(out.data <= high + 1e-12)

    def test_dim_mismatch(self):
        with pytest.raises(ValidationError):
            synthesize_dusty(
                Image(np.zeros((4, 4, 1))), TransmissionMap(np.ones((3, 4))), AtmosphericLight((0.5,))
            )


@pytest.fixture(scope="module")
def small_corpus(tmp_path_factory):
    root = tmp_path_factory.mktemp("synth")
    clean_dir = root / "clean"
    clean_dir.mkdir()
    from marsdust.raster import save_image

    for i in range(3):
        save_image(make_clean_image(500 + i, 48, 40), clean_dir / f"c{i}.png", 8)
    phi = estimate_reflexivity(make_dust_patches(9))
    return root, clean_dir, phi


class TestGeneratePairs:
    def test_counts_and_alpha_protocol(self, small_corpus):
        root, clean_dir, phi = small_corpus
        manifest = generate_pairs(clean_dir, phi, maps_per_image=7, seed=11, out_dir=root / "d1")
        assert len(manifest.records) == 3 * 7
        by_clean = {}
        for rec in manifest.records:
            by_clean.setdefault(rec.clean, []).append(rec.alpha)
        for alphas in by_clean.values():
            assert sorted(alphas) == sorted(ALPHA_SET)

    def test_deterministic_bytes(self, small_corpus):
        root, clean_dir, phi = small_corpus
        m1 = generate_pairs(clean_dir, phi, maps_per_image=1, seed=5, out_dir=root / "d2a")
        m2 = generate_pairs(clean_dir, phi, maps_per_image=1, seed=5, out_dir=root / "d2b")
        for r1, r2 in zip(m1.records, m2.records):
            b1 = open(r1.dusty, "rb").read()
            b2 = open(r2.dusty, "rb").read()
            assert b1 == b2

    def test_jobs_do_not_change_output(self, small_corpus):
        root, clean_dir, phi = small_corpus
        m1 = generate_pairs(clean_dir, phi, maps_per_image=2, seed=8, out_dir=root / "d3a", jobs=1)
        m2 = generate_pairs(clean_dir, phi, maps_per_image=2, seed=8, out_dir=root / "d3b", jobs=3)
        assert [r.seed for r in m1.records] == [r.seed for r in m2.records]
        for r1, r2 in zip(m1.records, m2.records):
            assert open(r1.dusty, "rb").read() == open(r2.dusty, "rb").read()

    def test_replay_is_bit_identical(self, small_corpus):
        root, clean_dir, phi = small_corpus
        manifest = generate_pairs(clean_dir, phi, maps_per_image=2, seed=13, out_dir=root / "d4")
        for rec in manifest.records:
            replayed = replay_dusty(rec)
            again = replay_dusty(rec)
            assert np.array_equal(replayed.data, again.data)
            stored = load_image(rec.dusty)
            q = np.floor(replayed.data * 65535 + 0.5) / 65535
            assert np.array_equal(q, stored.data)

    def test_empty_dir_rejected(self, tmp_path, small_corpus):
        _, _, phi = small_corpus
        empty = tmp_path / "none"
        empty.mkdir()
        with pytest.raises(ValidationError, match="no PNG"):
            generate_pairs(empty, phi, out_dir=tmp_path / "out")


class TestManifest:
    def test_roundtrip(self, tmp_path):
        rec = PairRecord(
            clean="a.png",
            dusty="b.png",
            scale=123.456789,
            octaves=3,
            lacunarity=2.0000000001,
            persistence=0.5499999999999999,
            alpha=0.7,
            light=(0.875, 0.7000000000000001, 0.5425),
            seed=2**63 - 11,
        )
        m = DatasetManifest([rec])
        m.save(tmp_path / "m.jsonl")
        back = DatasetManifest.load(tmp_path / "m.jsonl")
        assert back.records == m.records

    def test_float_precision_in_file(self, tmp_path):
        rec = PairRecord("a", "b", 1 / 3, 2, 2.1, 0.123456789012345678, 0.4, (1 / 7,), 1)
        DatasetManifest([rec]).save(tmp_path / "m.jsonl")
        line = (tmp_path / "m.jsonl").read_text().strip()
        obj = json.loads(line)
        assert obj["scale"] == 1 / 3  # 17 significant digits round-trips float64
        assert obj["light"][0] == 1 / 7
        assert set(obj) == {
            "clean", "dusty", "scale", "octaves", "lacunarity",
            "persistence", "alpha", "light", "seed",
        }

    def test_malformed_json_rejected(self, tmp_path):
        p = tmp_path / "bad.jsonl"
        p.write_text('{"clean": "a"\n')
        with pytest.raises(ManifestError, match="malformed"):
            DatasetManifest.load(p)

    def test_wrong_keys_rejected(self, tmp_path):
        p = tmp_path / "bad2.jsonl"
        p.write_text('{"clean":"a","dusty":"b"}\n')
        with pytest.raises(ManifestError, match="keys"):
            DatasetManifest.load(p)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ManifestError):
            DatasetManifest.load(tmp_path / "absent.jsonl")


class TestAutoPatches:
    def test_prefers_dustier_tiles(self):
        # left half clear textured terrain, right half bright flat dust
        rng = np.random.default_rng(10)
        arr = np.zeros((64, 64, 3))
        arr[:, :32] = rng.random((64, 32, 3)) * 0.6
        arr[:, 32:] = 0.85
        img = Image(arr)
        patches = auto_select_dusty_patches(img, tile=32, count=2)
        assert len(patches) == 2
        for p in patches:
            assert p.data.mean() > 0.8

    def test_small_image_falls_back_to_whole(self):
        img = Image(np.full((16, 16, 3), 0.5))
        assert len(auto_select_dusty_patches(img, tile=32)) == 1
