import math

import numpy as np
import pytest

from src.data import (EMBEDDED, S_COLUMNS, SCHEMAS, DatasetKind, deformations_from_frame, embedded_names,
                      frame_from_deformations, generate_compressible, invariant_ranges, load_embedded,
                      sample_deformation_box, yield_angles, yield_points_from_law)
from src.errors import UnknownDataset
from src.hyper import get_law

REGISTRY = ["compressible-invariants-50", "treloar-20C", "treloar-50C", "cortex", "corona-radiata", "midbrain-1",
            "midbrain-2", "drucker", "cazacu", "tresca", "40Cr3MoV", "SS316L", "U71Mn"]


def test_registry_names():
    assert sorted(embedded_names()) == sorted(REGISTRY)


@pytest.mark.parametrize("name", REGISTRY)
def test_embedded_tables_parse_with_schema(name):
    ds = load_embedded(name)
    assert list(ds.frame.columns) == SCHEMAS[ds.kind]
    assert len(ds) > 0
    assert ds.metadata["source"] == "embedded"
    numeric = [c for c in ds.frame.columns if c != "mode"]
    assert np.all(np.isfinite(ds.frame[numeric].to_numpy(dtype=float)))


def test_table_sizes():
    assert len(load_embedded("compressible-invariants-50")) == 50
    for name in ("drucker", "cazacu", "tresca"):
        assert len(load_embedded(name)) == 30


def test_mode_tables_use_known_modes():
    for name, (_, kind, _) in EMBEDDED.items():
        if kind is DatasetKind.MODE_CURVE:
            assert set(load_embedded(name).frame["mode"]) <= {"UT", "UC", "ET", "PS", "SS", "ST"}


def test_treloar_has_three_modes():
    assert set(load_embedded("treloar-20C").frame["mode"]) == {"UT", "ET", "PS"}


def test_hardening_tables_are_sorted():
    for name in ("40Cr3MoV", "SS316L", "U71Mn"):
        assert np.all(np.diff(load_embedded(name).frame["strain_percent"].to_numpy()) >= 0.0)


def test_unknown_dataset():
    with pytest.raises(UnknownDataset) as err:
        load_embedded("treloar-80C")
    assert err.value.to_dict() == {"error": "UnknownDataset", "message": "Unknown dataset 'treloar-80C'",
                                   "name": "treloar-80C"}


def test_fingerprint_is_stable():
    assert load_embedded("drucker").fingerprint() == load_embedded("drucker").fingerprint()
    assert load_embedded("drucker").fingerprint() != load_embedded("cazacu").fingerprint()


def test_box_samples():
    Fs = sample_deformation_box(0.2, 50, seed=3)
    assert Fs.shape == (50, 3, 3)
    assert np.all(np.linalg.det(Fs) > 0.0)
    offsets = Fs - np.eye(3)
    assert np.all(np.abs(offsets) <= 0.2 + 1e-12)
    np.testing.assert_array_equal(Fs, sample_deformation_box(0.2, 50, seed=3))
    assert not np.array_equal(Fs, sample_deformation_box(0.2, 50, seed=4))


def test_zero_box_gives_identities():
    np.testing.assert_array_equal(sample_deformation_box(0.0, 4, seed=0), np.repeat(np.eye(3)[None], 4, axis=0))


@pytest.mark.parametrize("delta", [-0.1, 0.5, 0.8])
def test_box_size_limits(delta):
    with pytest.raises(ValueError):
        sample_deformation_box(delta, 10, seed=0)


def test_generated_compressible_dataset():
    ds = generate_compressible("gent-gent", 0.2, 20, seed=0)
    assert ds.kind is DatasetKind.COMPRESSIBLE
    assert len(ds) == 20
    Fs, S = deformations_from_frame(ds.frame)
    np.testing.assert_allclose(S, np.transpose(S, (0, 2, 1)))
    np.testing.assert_allclose(S[0], get_law("gent-gent").stress(Fs[0]), rtol=1e-12)
    assert ds.fingerprint() == generate_compressible("gent-gent", 0.2, 20, seed=0).fingerprint()


def test_frame_round_trip_keeps_symmetric_stress(rng):
    Fs = np.eye(3) + rng.uniform(-0.1, 0.1, (3, 3, 3))
    A = rng.normal(size=(3, 3, 3))
    S = A + np.transpose(A, (0, 2, 1))
    frame = frame_from_deformations(Fs, S)
    assert list(frame.columns[-6:]) == S_COLUMNS
    Fs2, S2 = deformations_from_frame(frame)
    np.testing.assert_array_equal(Fs2, Fs)
    np.testing.assert_array_equal(S2, S)


def test_invariant_ranges():
    ranges = invariant_ranges(generate_compressible("polynomial", 0.1, 10, seed=0))
    assert set(ranges) == {"I1", "I2", "J"}
    lo, hi = ranges["J"]
    assert 0.0 < lo <= 1.0 + 0.4 and lo <= hi
    ranges = invariant_ranges(load_embedded("compressible-invariants-50"))
    assert ranges["I1"][0] <= ranges["I1"][1]


def test_yield_angles_close_the_loop():
    angles = yield_angles(30)
    assert angles[0] == pytest.approx(math.pi)
    assert angles[-1] == pytest.approx(3 * math.pi)


def test_ray_regeneration_reproduces_drucker_table():
    generated = yield_points_from_law("drucker", 30).frame
    table = load_embedded("drucker").frame
    np.testing.assert_allclose(generated.to_numpy(), table.to_numpy(), atol=2e-3)


def test_ray_regeneration_needs_three_rays():
    with pytest.raises(ValueError):
        yield_points_from_law("tresca", 2)


def test_regenerated_points_carry_principal_stresses():
    ds = yield_points_from_law("von-mises", 8)
    principal = np.array(ds.metadata["principal"])
    assert principal.shape == (8, 3)
    np.testing.assert_allclose(np.hypot(ds.frame["pi1"], ds.frame["pi2"]), 1.0, atol=1e-10)
