import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from maxdiff.design import (
    design_diagnostics,
    design_from_dict,
    design_to_dict,
    generate_design,
    pair_balance_score,
)
from maxdiff.domain import Design, DesignSpec, Screen

# Minimum pair-balance score found by scripts/design_balance_oracle.py for
# (K=6, k=3, T=10, V=4): 100,000 random frequency-balanced designs, oracle
# seed 20240101, minimum 0.0 (first reached at restart 35000).
ORACLE_MIN_BALANCE_K6 = 0.0


def small_specs():
    return (
        st.tuples(
            st.integers(3, 10),  # n_items
            st.integers(2, 4),  # items_per_screen
            st.integers(1, 8),  # screens_per_respondent
            st.integers(1, 4),  # n_versions
            st.integers(0, 2**32),  # rng_seed
        )
        .filter(lambda t: t[1] <= t[0])
        .map(lambda t: DesignSpec(*t))
    )


class TestGenerateDesign:
    def test_full_screen_trivial_case(self):
        design = generate_design(DesignSpec(3, 3, 1, 1, rng_seed=0))
        assert len(design.versions) == 1
        assert len(design.versions[0]) == 1
        assert sorted(design.versions[0][0].item_indices) == [0, 1, 2]

    def test_paper_scale_frequencies_are_one_or_two(self):
        # 18 items, 3 per screen, 10 screens: 30 slots over 18 items.
        design = generate_design(DesignSpec(18, 3, 10, 10, rng_seed=7))
        diag = design_diagnostics(design)
        assert set(diag.frequencies.ravel().tolist()) == {1, 2}
        assert diag.violations == ()

    def test_deterministic_for_equal_specs(self):
        spec = DesignSpec(12, 3, 8, 5, rng_seed=99)
        assert generate_design(spec).versions == generate_design(spec).versions

    def test_seed_changes_design(self):
        a = generate_design(DesignSpec(12, 3, 8, 5, rng_seed=1))
        b = generate_design(DesignSpec(12, 3, 8, 5, rng_seed=2))
        assert a.versions != b.versions

    def test_incomplete_coverage_warning_in_metadata(self):
        design = generate_design(DesignSpec(18, 3, 2, 1, rng_seed=0))
        assert any("T*k < K" in w for w in design.metadata["warnings"])

    def test_beats_randomized_search_floor(self):
        design = generate_design(DesignSpec(6, 3, 10, 4, rng_seed=20240101))
        assert design.metadata["balance_score"] <= ORACLE_MIN_BALANCE_K6 + 1e-12
        assert design_diagnostics(design).balance_score == design.metadata[
            "balance_score"
        ]

    @given(small_specs())
    def test_frequency_balance_and_coverage(self, spec):
        design = generate_design(spec)
        diag = design_diagnostics(design)
        assert diag.violations == ()
        for v in range(spec.n_versions):
            freq = diag.frequencies[v]
            assert freq.max() - freq.min() <= 1
            assert freq.sum() == spec.screens_per_respondent * spec.items_per_screen
            if spec.screens_per_respondent * spec.items_per_screen >= spec.n_items:
                assert freq.min() >= 1

    @given(small_specs())
    def test_swap_phase_never_hurts_balance(self, spec):
        design = generate_design(spec)
        assert (
            design.metadata["balance_score"]
            <= design.metadata["balance_score_initial"] + 1e-12
        )

    @given(small_specs())
    def test_regeneration_is_bit_identical(self, spec):
        assert generate_design(spec).versions == generate_design(spec).versions


class TestDesignDiagnostics:
    def test_pairwise_counts_for_two_full_screens(self):
        # Both screens show all three items: every pair co-occurs twice.
        design = generate_design(DesignSpec(3, 3, 2, 1, rng_seed=5))
        diag = design_diagnostics(design)
        off_diagonal = diag.cooccurrence[~np.eye(3, dtype=bool)]
        assert (off_diagonal == 2).all()
        assert (np.diag(diag.cooccurrence) == 0).all()
        assert diag.balance_score == 0.0

    def test_cooccurrence_symmetric_zero_diagonal(self):
        design = generate_design(DesignSpec(9, 3, 6, 3, rng_seed=11))
        diag = design_diagnostics(design)
        assert (diag.cooccurrence == diag.cooccurrence.T).all()
        assert (np.diag(diag.cooccurrence) == 0).all()

    def test_positional_counts_account_for_every_slot(self):
        spec = DesignSpec(9, 3, 6, 3, rng_seed=11)
        diag = design_diagnostics(generate_design(spec))
        assert diag.positional.shape == (9, 3)
        assert diag.positional.sum() == 3 * 6 * 3
        # Column sums: one item per position per screen.
        assert (diag.positional.sum(axis=0) == 3 * 6).all()

    def test_duplicate_item_in_screen_is_flagged(self):
        spec = DesignSpec(4, 3, 1, 1, rng_seed=0)
        broken = Design(spec=spec, versions=((Screen((1, 1, 2)),),))
        diag = design_diagnostics(broken)
        assert len([v for v in diag.violations if "duplicate" in v]) == 1

    def test_unbalanced_frequencies_flagged(self):
        spec = DesignSpec(4, 2, 4, 1, rng_seed=0)
        screens = tuple(Screen((0, 1)) for _ in range(4))
        diag = design_diagnostics(Design(spec=spec, versions=(screens,)))
        assert any("spread" in v for v in diag.violations)
        assert any("never appear" in v for v in diag.violations)

    def test_out_of_range_index_flagged(self):
        spec = DesignSpec(3, 2, 1, 1, rng_seed=0)
        diag = design_diagnostics(Design(spec=spec, versions=((Screen((0, 7)),),)))
        assert any("out of range" in v for v in diag.violations)


class TestPairBalanceScore:
    def test_uniform_counts_score_zero(self):
        m = np.full((4, 4), 3)
        np.fill_diagonal(m, 0)
        assert pair_balance_score(m) == 0.0

    def test_variance_over_unordered_pairs(self):
        m = np.zeros((3, 3), dtype=int)
        m[0, 1] = m[1, 0] = 4
        # pairs: (0,1)=4, (0,2)=0, (1,2)=0 -> mean 4/3
        expected = np.var([4, 0, 0])
        assert pair_balance_score(m) == pytest.approx(expected)


class TestDesignJson:
    def test_round_trip_preserves_design(self):
        spec = DesignSpec(6, 3, 4, 2, rng_seed=13)
        design = generate_design(spec)
        ids = [f"f{i}" for i in range(6)]
        doc = json.loads(json.dumps(design_to_dict(design, ids)))
        loaded, loaded_ids = design_from_dict(doc)
        assert loaded.spec == spec
        assert loaded.versions == design.versions
        assert loaded_ids == tuple(ids)

    def test_versions_use_item_ids_not_indices(self):
        design = generate_design(DesignSpec(3, 3, 1, 1, rng_seed=0))
        doc = design_to_dict(design, ["alpha", "beta", "gamma"])
        assert sorted(doc["versions"][0][0]) == ["alpha", "beta", "gamma"]
