"""Acceptance suite: one test per criterion, each printing a PASS line.

Run with `pytest tests/test_acceptance.py -v -s` to see the lines as the
criteria complete. Heavy simulation criteria use fixed seeds; tolerances
were validated against the simulation runs before being frozen here.
"""

import signal
import socket
import subprocess
import sys
import time

import httpx
import numpy as np
from scipy import stats

from maxdiff.design import design_diagnostics, generate_design
from maxdiff.domain import (
    BEST_ONLY,
    BEST_WORST,
    ChoiceObservation,
    CohortSpec,
    Dataset,
    DesignSpec,
    Item,
    chance_cutoff,
    decision_counts,
    observations_from_csv,
    validate_dataset,
)
from maxdiff.estimator import (
    fit,
    fit_by_cohort,
    log_likelihood,
    log_likelihood_gradient,
    shares_from_utilities,
)
from maxdiff.simulator import (
    PopulationSpec,
    compare_methods,
    default_items,
    draw_population,
    simulate_dataset,
)

PAPER_SCALE = dict(n_items=18, items_per_screen=3, screens_per_respondent=10, n_versions=10)


def ok(criterion, message):
    print(f"[criterion {criterion:2d}] PASS  {message}")


def make_items(n):
    return tuple(Item(f"it{i:02d}", f"Item {i}") for i in range(n))


def random_instance(rng):
    n_items = int(rng.integers(3, 9))
    n_obs = int(rng.integers(1, 51))
    items = make_items(n_items)
    ids = [i.id for i in items]
    observations = []
    for n in range(n_obs):
        size = int(rng.integers(2, n_items + 1))
        shown = list(rng.choice(n_items, size=size, replace=False))
        best = int(rng.choice(shown))
        worst = None
        if rng.integers(2) and size >= 2:
            rest = [i for i in shown if i != best]
            worst = ids[int(rng.choice(rest))]
        observations.append(
            ChoiceObservation(f"r{n % 9}", 0, n, tuple(ids[i] for i in shown),
                              ids[best], worst)
        )
    return Dataset(items, tuple(observations))


def test_criterion_1_share_normalization_and_translation_invariance():
    rng = np.random.default_rng(601)
    for _ in range(10):
        ds = random_instance(rng)
        result = fit(ds)
        total = sum(e.share for e in result.shares.entries)
        assert abs(total - 100.0) <= 1e-9
    for _ in range(10):
        u = rng.normal(0, 3, int(rng.integers(2, 30)))
        for c in (-17.0, 0.4, 250.0):
            np.testing.assert_allclose(
                shares_from_utilities(u), shares_from_utilities(u + c), atol=1e-12
            )
    ok(1, "fit shares sum to 100 within 1e-9; softmax translation-invariant to 1e-12")


def test_criterion_2_chance_cutoff_and_flags_at_twenty_items():
    assert chance_cutoff(20) == 5.0
    design = generate_design(DesignSpec(20, 4, 10, 8, rng_seed=20))
    pop = PopulationSpec(tuple(np.linspace(-0.7, 0.7, 20)), 0.3, 250, rng_seed=21)
    ds = simulate_dataset(draw_population(pop), design, BEST_ONLY, seed=22)
    report = fit(ds).shares
    assert report.chance_cutoff == 5.0
    flagged = {e.item_id for e in report.entries if e.above_chance}
    at_or_above = {e.item_id for e in report.entries if e.share >= 5.0}
    assert flagged == at_or_above
    assert 0 < len(flagged) < 20
    ok(2, f"cutoff(20)=5.0; report flags exactly the {len(flagged)} items with share >= 5.0")


def test_criterion_3_gradient_matches_finite_differences():
    rng = np.random.default_rng(603)
    h = 1e-5
    worst_error = 0.0
    for _ in range(100):
        ds = random_instance(rng)
        u = rng.normal(0, 1, len(ds.items))
        lam = float(rng.uniform(0, 0.05))
        g = log_likelihood_gradient(u, ds, lam)
        fd = np.empty_like(g)
        for i in range(len(u)):
            up, dn = u.copy(), u.copy()
            up[i] += h
            dn[i] -= h
            fd[i] = (log_likelihood(up, ds, lam) - log_likelihood(dn, ds, lam)) / (2 * h)
        worst_error = max(worst_error, float(np.max(np.abs(g - fd) / (1 + np.abs(fd)))))
    assert worst_error < 1e-6
    ok(3, f"analytic gradient vs central differences on 100 instances: max rel err {worst_error:.2e}")


def test_criterion_4_uniform_recovery_at_paper_scale():
    design = generate_design(DesignSpec(rng_seed=7, **PAPER_SCALE))
    pop = PopulationSpec(tuple(np.zeros(18)), 0.0, 300, rng_seed=101)
    ds = simulate_dataset(draw_population(pop), design, BEST_ONLY, seed=202)
    shares = np.array([e.share for e in fit(ds).shares.entries])
    deviation = np.abs(shares - 100.0 / 18).max()
    assert deviation < 1.5
    ok(4, f"N=300 uniform study: every share within {deviation:.2f} pts of 5.56 (bound 1.5)")


def test_criterion_5_signal_recovery_at_paper_scale():
    design = generate_design(DesignSpec(rng_seed=7, **PAPER_SCALE))
    true_u = np.linspace(-1.0, 1.0, 18)
    truth = shares_from_utilities(true_u)
    errors, correlations = [], []
    for rep in range(20):
        pop = PopulationSpec(tuple(true_u), 0.5, 500, rng_seed=3000 + rep)
        ds = simulate_dataset(draw_population(pop), design, BEST_ONLY, seed=4000 + rep)
        shares = np.array([e.share for e in fit(ds).shares.entries])
        errors.append(np.abs(shares - truth).mean())
        correlations.append(stats.spearmanr(shares, truth).statistic)
    mean_error = float(np.mean(errors))
    mean_rho = float(np.mean(correlations))
    assert mean_rho >= 0.95
    assert mean_error < 1.0
    ok(5, f"N=500 signal study x20: rank corr {mean_rho:.3f} (>=0.95), MAE {mean_error:.2f} pts (<1)")


def test_criterion_6_design_balance_at_paper_scale():
    spec = DesignSpec(rng_seed=7, **PAPER_SCALE)
    design = generate_design(spec)
    diag = design_diagnostics(design)
    assert set(diag.frequencies.ravel().tolist()) == {1, 2}
    assert diag.violations == ()
    assert generate_design(spec).versions == design.versions
    ok(6, "K=18,k=3,T=10,V=10: frequencies in {1,2}, zero violations, seed-deterministic")


def test_criterion_7_method_efficiency():
    pop = PopulationSpec(tuple(np.linspace(-1.0, 1.0, 18)), 0.5, 400, rng_seed=0)
    spec = DesignSpec(rng_seed=7, **PAPER_SCALE)
    comparison = compare_methods(pop, 400, spec, replications=50, seed=99)
    best_only = comparison.methods[BEST_ONLY]
    best_worst = comparison.methods[BEST_WORST]
    top_choice = comparison.methods["top_choice"]
    assert best_only.mean_share_se < top_choice.mean_share_se
    assert best_worst.mean_abs_share_error <= best_only.mean_abs_share_error
    ok(
        7,
        "N=400, R=50: share SE best_only %.3f < top_choice %.3f; "
        "MAE best_worst %.3f <= best_only %.3f"
        % (
            best_only.mean_share_se,
            top_choice.mean_share_se,
            best_worst.mean_abs_share_error,
            best_only.mean_abs_share_error,
        ),
    )


def test_criterion_8_decision_count_bookkeeping():
    design = generate_design(DesignSpec(rng_seed=7, **PAPER_SCALE))
    pop = PopulationSpec(tuple(np.zeros(18)), 0.0, 12, rng_seed=5)
    u = draw_population(pop)
    best_only = decision_counts(simulate_dataset(u, design, BEST_ONLY, seed=6))
    best_worst = decision_counts(simulate_dataset(u, design, BEST_WORST, seed=6))
    assert set(best_only.values()) == {10}
    assert set(best_worst.values()) == {20}
    ok(8, "best-only logs T=10 decisions per respondent, best-worst logs 2T=20")


def test_criterion_9_subgroup_rank_reversal():
    design = generate_design(DesignSpec(rng_seed=7, **PAPER_SCALE))
    items = default_items(18)
    base = np.linspace(-1.0, 1.0, 18)
    a_idx, b_idx = 4, 13
    swapped = base.copy()
    swapped[[a_idx, b_idx]] = swapped[[b_idx, a_idx]]
    a_id, b_id = items[a_idx].id, items[b_idx].id
    cohorts = [CohortSpec("one", {"cohort": "one"}), CohortSpec("two", {"cohort": "two"})]

    detected = 0
    runs = 100
    for run in range(runs):
        observations = []
        for offset, (name, mean) in enumerate((("one", base), ("two", swapped))):
            pop = PopulationSpec(tuple(mean), 0.5, 300, rng_seed=run * 10 + offset)
            ds = simulate_dataset(
                draw_population(pop),
                design,
                BEST_ONLY,
                seed=run * 10 + 2 + offset,
                items=items,
                attributes={"cohort": name},
            )
            observations.extend(
                ChoiceObservation(
                    f"{name}-{o.respondent_id}", o.version_index, o.screen_index,
                    o.shown, o.best, o.worst, o.attributes,
                )
                for o in ds.observations
            )
        analysis = fit_by_cohort(Dataset(items, tuple(observations)), cohorts)
        one = analysis.cohorts["one"].shares
        two = analysis.cohorts["two"].shares
        # truth: cohort one prefers b (u=+0.53) over a; cohort two reversed
        if one.rank_of(b_id) < one.rank_of(a_id) and two.rank_of(a_id) < two.rank_of(b_id):
            detected += 1
    assert detected >= 95
    ok(9, f"swapped-pair rank reversal detected in {detected}/100 runs at N=300 per cohort")


# ---------------------------------------------------------------------------
# Criterion 10: HTTP service durability, via a real server process
# ---------------------------------------------------------------------------


def _free_port():
    with socket.socket() as sock:
        sock.bind(("127.0.0.1", 0))
        return sock.getsockname()[1]


def _start_server(data_dir, port):
    process = subprocess.Popen(
        [
            sys.executable, "-m", "maxdiff.cli", "serve",
            "--data-dir", str(data_dir), "--port", str(port),
        ],
        stdout=subprocess.DEVNULL,
        stderr=subprocess.DEVNULL,
    )
    base = f"http://127.0.0.1:{port}"
    deadline = time.time() + 15
    while time.time() < deadline:
        try:
            httpx.get(f"{base}/studies/nope/results", timeout=1)
            return process, base
        except httpx.TransportError:
            if process.poll() is not None:
                raise RuntimeError("server process exited during startup")
            time.sleep(0.1)
    process.kill()
    raise RuntimeError("server did not come up in time")


def _stop_server(process):
    process.send_signal(signal.SIGTERM)
    try:
        process.wait(timeout=10)
    except subprocess.TimeoutExpired:
        process.kill()
        process.wait()


def test_criterion_10_service_durability_and_ordering(tmp_path):
    data_dir = tmp_path / "studies"
    port = _free_port()
    process, base = _start_server(data_dir, port)
    try:
        items = [
            {"id": f"it{i:02d}", "label": f"Item {i}", "description": f"Does {i}"}
            for i in range(18)
        ]
        created = httpx.post(
            f"{base}/studies",
            json={
                "items": items,
                "mode": "best_only",
                "design_spec": {
                    "items_per_screen": 3,
                    "screens_per_respondent": 10,
                    "n_versions": 10,
                    "rng_seed": 7,
                },
            },
            timeout=10,
        )
        assert created.status_code == 201
        study_id = created.json()["study_id"]

        recorded = {}
        for session_number in range(2):
            opened = httpx.post(
                f"{base}/studies/{study_id}/sessions",
                json={"attributes": {}},
                timeout=10,
            )
            sid = opened.json()["session_id"]
            while True:
                screen = httpx.get(f"{base}/sessions/{sid}/screen", timeout=10).json()
                if screen.get("completed"):
                    break
                index = screen["screen_index"]
                best = screen["options"][index % 3]["id"]
                other = screen["options"][(index + 1) % 3]["id"]
                if index == 2:
                    # out-of-order and duplicate probes on one mid-session screen
                    out_of_order = httpx.post(
                        f"{base}/sessions/{sid}/choices",
                        json={"screen_index": index + 3, "best": best},
                        timeout=10,
                    )
                    assert out_of_order.status_code == 409
                ack = httpx.post(
                    f"{base}/sessions/{sid}/choices",
                    json={"screen_index": index, "best": best},
                    timeout=10,
                )
                assert ack.status_code == 204
                recorded[(sid, index)] = best
                if index == 4:
                    duplicate = httpx.post(
                        f"{base}/sessions/{sid}/choices",
                        json={"screen_index": index, "best": other},
                        timeout=10,
                    )
                    assert duplicate.status_code == 409
                worst_probe = httpx.post(
                    f"{base}/sessions/{sid}/choices",
                    json={"screen_index": index + 1, "best": best, "worst": other},
                    timeout=10,
                )
                assert worst_probe.status_code in (409, 422)

        export_before = httpx.get(f"{base}/studies/{study_id}/export.csv", timeout=10).text
        observations = observations_from_csv(export_before)
        assert len(observations) == 2 * 10
        dataset = Dataset(make_items(18), observations)
        assert validate_dataset(dataset) == []
        for obs in observations:
            assert recorded[(obs.respondent_id, obs.screen_index)] == obs.best
    finally:
        _stop_server(process)

    process, base = _start_server(data_dir, port)
    try:
        export_after = httpx.get(f"{base}/studies/{study_id}/export.csv", timeout=10).text
        assert export_after == export_before
    finally:
        _stop_server(process)
    ok(10, "2 HTTP sessions -> 20 valid observations; 409 on duplicate/out-of-order; "
           "export byte-identical across restart")
