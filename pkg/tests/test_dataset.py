"""Ingestion, cleaning, featurization, standardization and split contracts."""

import json
import math

import numpy as np
import pytest

from albench import dataset as ds
from albench.errors import InsufficientDataError, ManifestError, ValidationError

from conftest import DUP_OF, KEPT_PAIR, N_MP, N_OQMD, carbon_manifest, carbon_record


def load_from_dict(tmp_path, manifest, name="m.json"):
    p = tmp_path / name
    p.write_text(json.dumps(manifest), encoding="utf-8")
    return ds.load_manifest(p)


class TestLoadManifest:
    def test_empty_manifest(self, tmp_path):
        assert load_from_dict(tmp_path, {"records": []}) == []

    def test_carbon_counts(self, carbon_clean_path):
        records = ds.load_manifest(carbon_clean_path)
        assert len(records) == 600
        assert sum(r.source == "MP" for r in records) == N_MP
        assert sum(r.source == "OQMD" for r in records) == N_OQMD

    def test_missing_formation_energy_retained_then_filtered(self, tmp_path):
        recs = [carbon_record(i, -1.0 - i, "MP") for i in range(3)]
        del recs[1]["formation_energy_per_atom"]
        loaded = load_from_dict(tmp_path, {"records": recs})
        assert len(loaded) == 3
        assert math.isnan(loaded[1].formation_energy_per_atom)
        kept = ds.filter_records(loaded)
        assert [r.id for r in kept] == [recs[0]["id"], recs[2]["id"]]

    def test_optional_defaults(self, tmp_path):
        rec = carbon_record(5, -1.0, "MP")
        for key in ("magnetization_per_atom", "energy_above_hull", "is_stable"):
            del rec[key]
        loaded = load_from_dict(tmp_path, {"records": [rec]})[0]
        assert loaded.magnetization_per_atom == 0.0
        assert loaded.energy_above_hull == 0.0
        assert loaded.is_stable is False

    def test_duplicate_id_rejected(self, tmp_path):
        recs = [carbon_record(0, -1.0, "MP"), carbon_record(1, -2.0, "MP")]
        recs[1]["id"] = recs[0]["id"]
        with pytest.raises(ValidationError, match="duplicate id"):
            load_from_dict(tmp_path, {"records": recs})

    def test_malformed_json_reports_line(self, tmp_path):
        p = tmp_path / "bad.json"
        p.write_text('{"records": [\n  {"id": }\n]}', encoding="utf-8")
        with pytest.raises(ManifestError, match="line"):
            ds.load_manifest(p)

    def test_missing_required_field_names_record(self, tmp_path):
        rec = carbon_record(0, -1.0, "MP")
        del rec["density"]
        with pytest.raises(ManifestError, match="record 0"):
            load_from_dict(tmp_path, {"records": [rec]})

    def test_bad_source(self, tmp_path):
        rec = carbon_record(0, -1.0, "MP")
        rec["source"] = "AFLOW"
        with pytest.raises(ManifestError, match="source"):
            load_from_dict(tmp_path, {"records": [rec]})

    def test_spacegroup_range(self, tmp_path):
        rec = carbon_record(0, -1.0, "MP")
        rec["spacegroup_number"] = 231
        with pytest.raises(ManifestError, match="spacegroup"):
            load_from_dict(tmp_path, {"records": [rec]})


class TestFilterRecords:
    def rec(self, **kw):
        d = carbon_record(0, -1.0, "MP")
        d.update(kw)
        return ds.MaterialRecord(**d)

    def test_boundaries(self):
        assert ds.filter_records([self.rec(n_atoms=1)]) == []
        assert len(ds.filter_records([self.rec(n_atoms=2)])) == 1
        assert len(ds.filter_records([self.rec(n_atoms=50)])) == 1
        assert ds.filter_records([self.rec(n_atoms=51)]) == []

    def test_nonfinite_rejected(self):
        assert ds.filter_records([self.rec(formation_energy_per_atom=math.nan)]) == []
        assert ds.filter_records([self.rec(band_gap=math.inf)]) == []

    def test_ten_record_fixture(self):
        # three violations planted by hand: 1 atom, 60 atoms, NaN energy
        records = [
            self.rec(id="a", n_atoms=2),
            self.rec(id="b", n_atoms=1),
            self.rec(id="c", n_atoms=10),
            self.rec(id="d", n_atoms=60),
            self.rec(id="e", n_atoms=50),
            self.rec(id="f", formation_energy_per_atom=math.nan),
            self.rec(id="g", n_atoms=25),
            self.rec(id="h", n_atoms=3),
            self.rec(id="i", n_atoms=49),
            self.rec(id="j", n_atoms=4),
        ]
        kept = ds.filter_records(records)
        assert [r.id for r in kept] == ["a", "c", "e", "g", "h", "i", "j"]

    def test_idempotent(self):
        records = [self.rec(id=str(i), n_atoms=i) for i in range(1, 60, 7)]
        once = ds.filter_records(records)
        assert ds.filter_records(once) == once


class TestDeduplicate:
    def rec(self, rid, formula, ef):
        d = carbon_record(0, ef, "MP")
        d.update(id=rid, formula=formula, formation_energy_per_atom=ef)
        return ds.MaterialRecord(**d)

    def test_below_threshold_merged(self):
        two = [self.rec("a", "C", -1.0), self.rec("b", "C", -1.0005)]
        assert [r.id for r in ds.deduplicate(two)] == ["a"]

    def test_above_threshold_kept(self):
        two = [self.rec("a", "C", -1.0), self.rec("b", "C", -1.002)]
        assert [r.id for r in ds.deduplicate(two)] == ["a", "b"]

    def test_greedy_chain(self):
        # A~B and B~C at 0.8 meV each, but A and C differ by 1.6 meV:
        # greedy earlier-wins keeps A, drops B, keeps C (compared against A)
        chain = [self.rec("A", "C", 0.0), self.rec("B", "C", 0.0008), self.rec("C", "C", 0.0016)]
        assert [r.id for r in ds.deduplicate(chain)] == ["A", "C"]

    def test_different_reduced_formulas_never_merge(self):
        two = [self.rec("a", "TiO2", -1.0), self.rec("b", "SiO2", -1.0)]
        assert len(ds.deduplicate(two)) == 2

    def test_reduced_formula_equality(self):
        two = [self.rec("a", "Ti2O4", -1.0), self.rec("b", "TiO2", -1.0002)]
        assert [r.id for r in ds.deduplicate(two)] == ["a"]

    def test_idempotent(self):
        recs = [self.rec(str(i), "C", -1.0 + 0.0004 * i) for i in range(10)]
        once = ds.deduplicate(recs)
        assert ds.deduplicate(once) == once

    def test_unparseable_formula_names_record(self):
        bad = [self.rec("weird", "C?x", -1.0)]
        with pytest.raises(ValidationError, match="weird"):
            ds.deduplicate(bad)

    def test_tolerance_validated(self):
        with pytest.raises(ValidationError):
            ds.deduplicate([], energy_tol=0.0)


class TestFormulaParsing:
    def test_simple(self):
        assert ds.parse_formula("TiO2") == {"Ti": 1, "O": 2}

    def test_parentheses(self):
        assert ds.parse_formula("Ca(OH)2") == {"Ca": 1, "O": 2, "H": 2}

    def test_reduced(self):
        assert ds.reduced_formula("C4") == "C"
        assert ds.reduced_formula("Ti2O4") == ds.reduced_formula("TiO2")

    def test_garbage(self):
        for bad in ("", "c2", "Ti-O", "(C", "C)2"):
            with pytest.raises(ValidationError):
                ds.parse_formula(bad)


class TestFeaturize:
    def rec(self, formula="C", **kw):
        d = carbon_record(3, -1.0, "MP")
        d.update(formula=formula, **kw)
        return ds.MaterialRecord(**d)

    def test_elemental_carbon_degenerate_stats(self):
        v = ds.featurize(self.rec("C"), ds.FeatureSchema())
        names = ds.FeatureSchema().names
        got = dict(zip(names, v))
        assert got["mean_atomic_number"] == 6.0
        assert got["std_atomic_number"] == 0.0
        assert got["electronegativity_range"] == 0.0
        assert got["n_distinct_elements"] == 1.0

    def test_tio2_weighted_mean(self):
        v = ds.featurize(self.rec("TiO2"), ds.FeatureSchema())
        got = dict(zip(ds.FeatureSchema().names, v))
        # (22 + 2*8) / 3, by atom fraction
        assert got["mean_atomic_number"] == pytest.approx(38.0 / 3.0, abs=1e-12)
        assert got["n_distinct_elements"] == 2.0
        table = ds.element_table()
        en = sorted([table["Ti"]["electronegativity"], table["O"]["electronegativity"]])
        assert got["min_electronegativity"] == en[0]
        assert got["max_electronegativity"] == en[1]
        assert got["electronegativity_range"] == pytest.approx(en[1] - en[0], abs=1e-12)

    def test_length_and_finite(self):
        v = ds.featurize(self.rec("Fe3O4"), ds.FeatureSchema())
        assert v.shape == (17,)
        assert np.all(np.isfinite(v))

    def test_property_features_passthrough(self):
        r = self.rec("C", band_gap=1.25, is_stable=True)
        got = dict(zip(ds.FeatureSchema().names, ds.featurize(r, ds.FeatureSchema())))
        assert got["band_gap"] == 1.25
        assert got["is_stable"] == 1.0
        assert got["energy_per_atom"] == r.energy_per_atom

    def test_leakage_guard_swaps_energy_feature(self):
        guarded = ds.FeatureSchema(leakage_guard=True)
        assert guarded.names[-1] == "mean_covalent_radius"
        assert "energy_per_atom" not in guarded.names
        v = ds.featurize(self.rec("TiO2"), guarded)
        table = ds.element_table()
        expect = (table["Ti"]["covalent_radius"] + 2 * table["O"]["covalent_radius"]) / 3
        assert v[-1] == pytest.approx(expect, abs=1e-12)

    def test_schema_counts(self):
        schema = ds.FeatureSchema()
        assert len(schema.names) == 17
        assert schema.n_compositional == 8
        assert schema.n_property == 9

    def test_unknown_element(self):
        # Pu parses as a symbol but sits outside the embedded 1-86 table
        with pytest.raises(ValidationError, match="unknown element"):
            ds.featurize(self.rec("PuO2"), ds.FeatureSchema())

    def test_missing_electronegativity(self):
        with pytest.raises(ValidationError, match="electronegativity"):
            ds.featurize(self.rec("He"), ds.FeatureSchema())

    def test_every_clean_record_featurizes_finite(self, carbon_clean_path):
        records = ds.load_manifest(carbon_clean_path)
        X = ds.featurize_records(records, ds.FeatureSchema())
        assert X.shape == (600, 17)
        assert np.all(np.isfinite(X))


class TestStandardization:
    def test_two_value_column(self):
        X = np.array([[1.0], [3.0]])
        p = ds.fit_standardization(X)
        assert p.means[0] == 2.0
        assert p.std_devs[0] == 1.0  # population convention
        out = ds.apply_standardization(X, p)
        assert out.tolist() == [[-1.0], [1.0]]

    def test_constant_column_flagged_and_zeroed(self):
        X = np.full((5, 2), 3.14)
        X[:, 1] = np.arange(5)
        p = ds.fit_standardization(X)
        assert p.constant_mask.tolist() == [True, False]
        out = ds.apply_standardization(X, p)
        assert np.all(out[:, 0] == 0.0)

    def test_fit_apply_roundtrip_moments(self):
        rng = np.random.default_rng(0)
        X = rng.normal(size=(40, 17)) * rng.uniform(0.5, 4.0, size=17) + rng.normal(size=17)
        p = ds.fit_standardization(X)
        out = ds.apply_standardization(X, p)
        assert np.abs(out.mean(axis=0)).max() < 1e-9
        assert np.abs(out.std(axis=0) - 1.0).max() < 1e-9

    def test_single_row_hand_value(self):
        p = ds.StandardizationParams(
            means=np.array([2.0]), std_devs=np.array([1.5]), constant_mask=np.array([False])
        )
        assert ds.apply_standardization(np.array([5.0]), p).tolist() == [2.0]

    def test_identity_params(self):
        p = ds.StandardizationParams(
            means=np.zeros(3), std_devs=np.ones(3), constant_mask=np.zeros(3, dtype=bool)
        )
        assert ds.apply_standardization(np.zeros(3), p).tolist() == [0.0, 0.0, 0.0]

    def test_dimension_mismatch(self):
        p = ds.fit_standardization(np.zeros((3, 4)) + np.arange(4))
        with pytest.raises(ValidationError):
            ds.apply_standardization(np.zeros((2, 5)), p)

    def test_too_few_rows(self):
        with pytest.raises(InsufficientDataError):
            ds.fit_standardization(np.zeros((1, 17)))

    def test_params_pure_function_of_training_rows(self):
        rng = np.random.default_rng(1)
        X = rng.normal(size=(30, 17))
        train = X[:20]
        p1 = ds.fit_standardization(train)
        X[20:] += 100.0  # perturb rows the fit never saw
        p2 = ds.fit_standardization(X[:20])
        assert np.array_equal(p1.means, p2.means)
        assert np.array_equal(p1.std_devs, p2.std_devs)


class TestSplit:
    def test_table_arithmetic(self):
        s = ds.split(600, 0.8, seed=0)
        assert (s.pool_indices.size, s.test_indices.size) == (480, 120)
        s = ds.split(509, 0.8, seed=0)
        assert (s.pool_indices.size, s.test_indices.size) == (407, 102)

    def test_deterministic(self):
        a, b = ds.split(101, 0.8, seed=5), ds.split(101, 0.8, seed=5)
        assert np.array_equal(a.pool_indices, b.pool_indices)
        assert np.array_equal(a.test_indices, b.test_indices)
        c = ds.split(101, 0.8, seed=6)
        assert not np.array_equal(a.test_indices, c.test_indices)

    def test_partition_property(self):
        for n, r, s in [(5, 0.8, 0), (37, 0.5, 3), (600, 0.8, 11), (509, 0.8, 2), (100, 0.9, 7)]:
            parts = ds.split(n, r, s)
            merged = np.concatenate([parts.pool_indices, parts.test_indices])
            assert np.array_equal(np.sort(merged), np.arange(n))

    def test_errors(self):
        with pytest.raises(ValidationError):
            ds.split(100, 1.0, seed=0)
        with pytest.raises(InsufficientDataError):
            ds.split(4, 0.8, seed=0)
        with pytest.raises(InsufficientDataError):
            ds.split(5, 0.999, seed=0)


class TestCarbonFixturePipeline:
    def test_raw_fixture_cleans_to_table_shape(self, carbon_raw_path):
        records = ds.load_manifest(carbon_raw_path)
        assert len(records) == 602
        filtered = ds.filter_records(records)
        assert len(filtered) == 601  # the 1-atom record is gone
        deduped = ds.deduplicate(filtered, energy_tol=0.001)
        assert len(deduped) == 600  # the 0.5 meV duplicate is gone
        dropped = {r.id for r in filtered} - {r.id for r in deduped}
        assert dropped == {"oqmd-dup-0900"}
        # the planted 2 meV pair survived
        ids = {r.id for r in deduped}
        manifest = carbon_manifest(raw=False)
        assert manifest["records"][KEPT_PAIR[0]]["id"] in ids
        assert manifest["records"][KEPT_PAIR[1]]["id"] in ids
        parts = ds.split(len(deduped), 0.8, seed=0)
        assert (parts.pool_indices.size, parts.test_indices.size) == (480, 120)

    def test_planted_energies(self):
        m = carbon_manifest(raw=True)
        efs = {r["id"]: r["formation_energy_per_atom"] for r in m["records"]}
        pair_gap = efs[m["records"][KEPT_PAIR[1]]["id"]] - efs[m["records"][KEPT_PAIR[0]]["id"]]
        assert pair_gap == pytest.approx(0.002, abs=1e-12)
        dup_gap = efs["oqmd-dup-0900"] - efs[m["records"][DUP_OF]["id"]]
        assert dup_gap == pytest.approx(0.0005, abs=1e-12)
