import math

import pytest

from maxdiff.domain import (
    ChoiceObservation,
    CohortSpec,
    Dataset,
    DesignSpec,
    InvalidInputError,
    InvalidSpecError,
    Item,
    ItemShare,
    Screen,
    ShareReport,
    chance_cutoff,
    decision_counts,
    items_from_csv,
    load_dataset,
    observations_from_csv,
    observations_to_csv,
    validate_dataset,
    write_items_csv,
    write_responses_csv,
)


def make_items(n):
    return tuple(Item(f"it{i:02d}", f"Item {i}") for i in range(n))


def obs(respondent="r1", screen=0, shown=("it00", "it01", "it02"), best="it00", **kw):
    return ChoiceObservation(
        respondent_id=respondent,
        version_index=kw.pop("version", 0),
        screen_index=screen,
        shown=shown,
        best=best,
        **kw,
    )


class TestChanceCutoff:
    def test_twenty_items_is_five_percent(self):
        assert chance_cutoff(20) == 5.0

    def test_eighteen_items(self):
        assert chance_cutoff(18) == pytest.approx(100.0 / 18, abs=1e-12)

    def test_degenerate_count_rejected(self):
        with pytest.raises(InvalidSpecError):
            chance_cutoff(1)

    def test_cutoff_times_count_is_exactly_one_hundred(self):
        for k in range(2, 1001):
            assert abs(chance_cutoff(k) * k - 100.0) <= 1e-12


class TestItem:
    def test_empty_label_rejected(self):
        with pytest.raises(InvalidInputError):
            Item("a", "")

    def test_bad_slug_rejected(self):
        with pytest.raises(InvalidInputError):
            Item("has space", "Label")

    def test_description_optional(self):
        assert Item("a", "A").description == ""


class TestDesignSpec:
    def test_screen_size_beyond_item_count_rejected(self):
        with pytest.raises(InvalidSpecError):
            DesignSpec(n_items=3, items_per_screen=4, screens_per_respondent=1, n_versions=1)

    def test_single_item_rejected(self):
        with pytest.raises(InvalidSpecError):
            DesignSpec(n_items=1, items_per_screen=2, screens_per_respondent=1, n_versions=1)

    def test_standard_screen_size_warning_free(self):
        spec = DesignSpec(18, 3, 10, 10)
        assert spec.warnings() == []

    def test_nonstandard_screen_size_flagged_but_allowed(self):
        spec = DesignSpec(18, 2, 10, 10)
        assert any("nonstandard" in w for w in spec.warnings())
        spec = DesignSpec(18, 6, 10, 10)
        assert any("nonstandard" in w for w in spec.warnings())

    def test_incomplete_coverage_flagged(self):
        spec = DesignSpec(18, 3, 2, 1)
        assert any("T*k < K" in w for w in spec.warnings())


class TestScreen:
    def test_negative_index_rejected(self):
        with pytest.raises(InvalidInputError):
            Screen((0, -1, 2))

    def test_duplicates_construct_for_diagnostics(self):
        # Dirty designs must be representable so diagnostics can flag them.
        assert Screen((1, 1, 2)).item_indices == (1, 1, 2)


class TestObservationAndDataset:
    def test_empty_respondent_rejected(self):
        with pytest.raises(InvalidInputError):
            obs(respondent="")

    def test_decision_count_per_mode(self):
        assert obs().n_decisions == 1
        assert obs(worst="it01").n_decisions == 2

    def test_duplicate_item_ids_rejected(self):
        with pytest.raises(InvalidInputError):
            Dataset(items=(Item("a", "A"), Item("a", "B")), observations=())

    def test_respondent_bookkeeping(self):
        ds = Dataset(make_items(3), (obs(), obs(respondent="r2")))
        assert ds.n_respondents == 2
        assert ds.respondent_ids() == ("r1", "r2")


class TestCohortSpec:
    def test_exact_match_on_all_required_attributes(self):
        cohort = CohortSpec("low_vision", {"vision": "low"})
        assert cohort.matches({"vision": "low", "age": "55+"})
        assert not cohort.matches({"vision": "none"})
        assert not cohort.matches({})

    def test_empty_name_rejected(self):
        with pytest.raises(InvalidInputError):
            CohortSpec("", {})


class TestShareReport:
    def _entries(self, shares, cutoff):
        order = sorted(range(len(shares)), key=lambda i: -shares[i])
        rank = {i: pos + 1 for pos, i in enumerate(order)}
        return tuple(
            ItemShare(f"it{i:02d}", s, rank[i], s >= cutoff)
            for i, s in enumerate(shares)
        )

    def test_valid_report_constructs(self):
        report = ShareReport(self._entries([60.0, 30.0, 10.0], 100 / 3), 100 / 3, 5, 15)
        assert report.rank_of("it00") == 1
        assert [e.item_id for e in report.ranked()] == ["it00", "it01", "it02"]

    def test_bad_sum_rejected(self):
        with pytest.raises(InvalidInputError):
            ShareReport(self._entries([60.0, 30.0, 20.0], 100 / 3), 100 / 3, 5, 15)

    def test_inconsistent_flag_rejected(self):
        entries = self._entries([60.0, 30.0, 10.0], 100 / 3)
        broken = entries[:2] + (
            ItemShare("it02", 10.0, 3, True),  # 10 < cutoff but flagged
        )
        with pytest.raises(InvalidInputError):
            ShareReport(broken, 100 / 3, 5, 15)

    def test_non_permutation_ranks_rejected(self):
        entries = tuple(
            ItemShare(f"it{i:02d}", s, 1, s >= 100 / 3)
            for i, s in enumerate([60.0, 30.0, 10.0])
        )
        with pytest.raises(InvalidInputError):
            ShareReport(entries, 100 / 3, 5, 15)

    def test_share_outside_own_interval_rejected(self):
        entries = (
            ItemShare("it00", 60.0, 1, True, ci_low=61.0, ci_high=62.0),
            ItemShare("it01", 40.0, 2, True, ci_low=39.0, ci_high=41.0),
        )
        with pytest.raises(InvalidInputError):
            ShareReport(entries, 50.0, 5, 15)


class TestValidateDataset:
    def test_well_formed_dataset_is_clean(self):
        ds = Dataset(make_items(3), (obs(), obs(respondent="r2", best="it01")))
        assert validate_dataset(ds) == []

    def test_best_not_in_shown_is_one_violation(self):
        ds = Dataset(make_items(4), (obs(best="it03"),))
        problems = validate_dataset(ds)
        assert len(problems) == 1
        assert "r1" in problems[0] and "screen 0" in problems[0]

    def test_worst_equals_best_is_one_violation(self):
        ds = Dataset(make_items(3), (obs(worst="it00"),))
        problems = validate_dataset(ds)
        assert len(problems) == 1
        assert "worst equals best" in problems[0]

    def test_duplicate_shown_ids_flagged(self):
        ds = Dataset(make_items(3), (obs(shown=("it00", "it00", "it01")),))
        assert any("duplicate" in p for p in validate_dataset(ds))

    def test_unknown_item_flagged(self):
        ds = Dataset(make_items(2), (obs(shown=("it00", "it09"), best="it00"),))
        assert any("unknown item" in p for p in validate_dataset(ds))

    def test_too_few_shown_flagged(self):
        ds = Dataset(make_items(3), (obs(shown=("it00",), best="it00"),))
        assert any("need >= 2" in p for p in validate_dataset(ds))

    def test_indices_checked_against_design(self):
        from maxdiff.design import generate_design

        design = generate_design(DesignSpec(3, 3, 2, 1, rng_seed=0))
        ds = Dataset(make_items(3), (obs(version=5), obs(screen=9)))
        problems = validate_dataset(ds, design)
        assert any("version index 5" in p for p in problems)
        assert any("screen index 9" in p for p in problems)


class TestDecisionCounts:
    def test_best_only_counts_one_per_screen(self):
        ds = Dataset(make_items(3), tuple(obs(screen=t) for t in range(10)))
        assert decision_counts(ds) == {"r1": 10}

    def test_best_worst_counts_double(self):
        ds = Dataset(
            make_items(3), tuple(obs(screen=t, worst="it01") for t in range(10))
        )
        assert decision_counts(ds) == {"r1": 20}


class TestCsvInterchange:
    def test_items_round_trip_with_quoting(self, tmp_path):
        items = (
            Item("voice_control", 'Voice "hands-free" control', "Open apps, dictate"),
            Item("captions", "Live Captions", "Dialogue as text, on screen"),
        )
        path = tmp_path / "items.csv"
        write_items_csv(items, path)
        assert items_from_csv(path.read_text(encoding="utf-8")) == items

    def test_items_header_enforced(self):
        with pytest.raises(InvalidInputError):
            items_from_csv("identifier,label,description\na,A,\n")

    def test_responses_round_trip(self, tmp_path):
        observations = (
            obs(attributes={"vision": "low", "age": "55+"}),
            obs(respondent="r2", screen=1, worst="it02", best="it01"),
        )
        path = tmp_path / "resp.csv"
        write_responses_csv(observations, path)
        text = path.read_text(encoding="utf-8")
        assert text.splitlines()[0] == (
            "respondent_id,version,screen,shown,best,worst,attributes"
        )
        assert observations_from_csv(text) == observations

    def test_empty_worst_column_means_best_only(self):
        text = observations_to_csv((obs(),))
        assert ",it00,," in text
        assert observations_from_csv(text)[0].worst is None

    def test_shown_joined_with_pipes(self):
        text = observations_to_csv((obs(),))
        assert "it00|it01|it02" in text

    def test_attributes_key_value_pairs(self):
        text = observations_to_csv((obs(attributes={"b": "2", "a": "1"}),))
        assert "a=1;b=2" in text

    def test_load_dataset(self, tmp_path):
        items = make_items(3)
        write_items_csv(items, tmp_path / "items.csv")
        write_responses_csv((obs(),), tmp_path / "resp.csv")
        ds = load_dataset(tmp_path / "items.csv", tmp_path / "resp.csv")
        assert validate_dataset(ds) == []
        assert math.isclose(chance_cutoff(len(ds.items)), 100 / 3)
