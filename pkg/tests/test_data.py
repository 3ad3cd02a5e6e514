import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from agfn.data import SyntheticSpec, generate, load_csv, save_csv, split
from agfn.errors import DomainError, ParseError
from agfn.numerics import pearson

SPEC = SyntheticSpec(n=60, seq_len=3, d_T=4, d_A=5, d_V=3, noise_std=(0.2, 0.4, 0.6), conflict_prob=0.2,
                     missing_prob=0.2, seed=42)


class TestGenerate:
    def test_noiseless_rows_are_exact(self):
        ds = generate(SyntheticSpec(n=20, seq_len=3, noise_std=(0.0, 0.0, 0.0), seed=3))
        for s in ds.samples:
            for seq, u in zip(s.sequences, ds.directions):
                np.testing.assert_array_equal(seq, np.tile(s.label * u, (3, 1)))

    def test_directions_are_unit(self):
        ds = generate(SPEC)
        for u in ds.directions:
            assert np.linalg.norm(u) == pytest.approx(1.0, abs=1e-12)

    def test_pooled_feature_collinear_with_direction(self):
        ds = generate(SyntheticSpec(n=30, seq_len=5, noise_std=(0.0, 0.0, 0.0), seed=4))
        for s in ds.samples:
            for seq, u in zip(s.sequences, ds.directions):
                pooled = seq.mean(axis=0)
                assert pooled @ u == pytest.approx(s.label, abs=1e-12)
                np.testing.assert_allclose(pooled - (pooled @ u) * u, 0.0, atol=1e-12)

    def test_missing_always(self):
        ds = generate(SyntheticSpec(n=50, seq_len=2, missing_prob=1.0, seed=5))
        for s in ds.samples:
            zeroed = [not np.any(seq) for seq in s.sequences]
            assert sum(zeroed) == 1
            assert "TAV"[zeroed.index(True)] == s.meta["missing"]

    def test_conflict_and_missing_exclusive(self):
        ds = generate(SyntheticSpec(n=300, seq_len=1, conflict_prob=0.5, missing_prob=0.5, seed=6))
        for s in ds.samples:
            assert s.meta["conflict"] is None or s.meta["missing"] is None
        conflicts, missing = ds.event_counts()
        assert conflicts > 100 and missing > 50

    def test_deterministic(self, tmp_path):
        save_csv(generate(SPEC), tmp_path / "a.csv")
        save_csv(generate(SPEC), tmp_path / "b.csv")
        assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()

    def test_seed_changes_data(self):
        a = generate(SPEC)
        b = generate(SyntheticSpec(**{**SPEC.__dict__, "seed": 43}))
        assert not np.array_equal(a.samples[0].text, b.samples[0].text)

    def test_labels_in_range(self):
        ds = generate(SPEC)
        assert all(-3.0 <= s.label <= 3.0 for s in ds.samples)

    def test_conflicted_modality_anticorrelates(self):
        ds = generate(SyntheticSpec(n=600, seq_len=2, noise_std=(0.5, 0.5, 0.5), conflict_prob=0.5,
                                    seed=7))
        for m, name in enumerate("TAV"):
            picked = [s for s in ds.samples if s.meta["conflict"] == name]
            proj = [s.sequences[m].mean(axis=0) @ ds.directions[m] for s in picked]
            assert pearson(proj, [s.label for s in picked]) < -0.9

    @pytest.mark.parametrize("bad", [dict(n=0), dict(d_A=1), dict(conflict_prob=1.5),
                                     dict(noise_std=(0.1, -1.0, 0.1))])
    def test_invalid_spec(self, bad):
        with pytest.raises(DomainError):
            generate(SyntheticSpec(**bad))


class TestSplit:
    @pytest.mark.parametrize("n,sizes", [(100, (70, 10, 20)), (10, (7, 1, 2)), (33, (23, 3, 7))])
    def test_sizes(self, n, sizes):
        parts = split(generate(SyntheticSpec(n=n, seq_len=1, d_T=2, d_A=2, d_V=2)), 1)
        assert tuple(len(p) for p in parts) == sizes

    @given(st.integers(10, 200), st.integers(0, 2**64 - 1))
    @settings(max_examples=25, deadline=None)
    def test_partition(self, n, seed):
        ds = generate(SyntheticSpec(n=n, seq_len=1, d_T=2, d_A=2, d_V=2, seed=3))
        ids = [i for part in split(ds, seed) for i in part.ids]
        assert sorted(ids) == sorted(ds.ids)
        assert len(set(ids)) == n

    def test_too_small(self):
        with pytest.raises(DomainError):
            split(generate(SyntheticSpec(n=9, seq_len=1)), 1)


class TestCsv:
    def test_round_trip(self, tmp_path):
        ds = generate(SPEC)
        save_csv(ds, tmp_path / "d.csv")
        back = load_csv(tmp_path / "d.csv")
        assert back.ids == ds.ids and back.dims == ds.dims and back.seq_len == 3
        for a, b in zip(ds.samples, back.samples):
            assert b.label == pytest.approx(a.label, abs=1e-9)
            for x, y in zip(a.sequences, b.sequences):
                np.testing.assert_allclose(y, x, atol=1e-9, rtol=0)

    def test_header_line(self, tmp_path):
        save_csv(generate(SPEC), tmp_path / "d.csv")
        assert (tmp_path / "d.csv").read_text().split("\n")[0] == "#agfn-features v1 dT=4 dA=5 dV=3 seq=3"

    def _write(self, tmp_path, text):
        p = tmp_path / "bad.csv"
        p.write_text(text)
        return p

    def test_empty_data(self, tmp_path):
        with pytest.raises(ParseError, match="line 2"):
            load_csv(self._write(tmp_path, "#agfn-features v1 dT=2 dA=2 dV=2 seq=1\n"))

    def test_empty_file(self, tmp_path):
        with pytest.raises(ParseError, match="line 1"):
            load_csv(self._write(tmp_path, ""))

    def test_bad_header(self, tmp_path):
        with pytest.raises(ParseError, match="line 1"):
            load_csv(self._write(tmp_path, "#features dT=2\ns0,1,1,1,1,1,1,1\n"))

    def test_ragged_row(self, tmp_path):
        text = ("#agfn-features v1 dT=4 dA=1 dV=1 seq=1\n"
                "s0,1,1,2,3,4,5,6\n"
                "s1,1,1,2,3,5,6\n")
        with pytest.raises(ParseError, match="line 3"):
            load_csv(self._write(tmp_path, text))

    def test_label_out_of_range(self, tmp_path):
        text = "#agfn-features v1 dT=1 dA=1 dV=1 seq=1\ns0,3.5,1,2,3\n"
        with pytest.raises(ParseError, match="line 2"):
            load_csv(self._write(tmp_path, text))

    @pytest.mark.parametrize("value", ["abc", "nan", "inf"])
    def test_bad_values(self, tmp_path, value):
        text = f"#agfn-features v1 dT=1 dA=1 dV=1 seq=1\ns0,0.5,1,2,3\ns1,0.5,1,{value},3\n"
        with pytest.raises(ParseError, match="line 3"):
            load_csv(self._write(tmp_path, text))
