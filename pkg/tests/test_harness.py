import json

import numpy as np
import pytest

from sbekmeans.core import ContractError, Dataset, RngStream, SolverConfig
from sbekmeans.harness import compare_cost, make_histogram, run_trials, summarize
from sbekmeans.solvers import SolveTrace


def test_summarize_examples():
    assert summarize([1, 1, 1]) == (1, 1, 1, 0)
    assert summarize([0, 2]) == (0, 2, 1, 1)
    lo, hi, _, _ = summarize([0.48, 0.264, 0.264])
    assert (lo, hi) == (0.264, 0.48)
    with pytest.raises(ContractError):
        summarize([])


def test_histogram_examples():
    h = make_histogram([0, 1, 2, 3], bins=2)
    assert h.counts.tolist() == [2, 2]
    assert h.bin_edges.tolist() == [0, 1.5, 3]
    single = make_histogram([0.264], bins=30)
    assert single.counts.tolist() == [1]
    vals = np.random.default_rng(0).normal(size=137)
    h = make_histogram(vals, bins=30)
    assert h.counts.sum() == 137 and np.all(np.diff(h.bin_edges) > 0)
    assert h.to_csv().splitlines()[0] == "bin_left,bin_right,count"
    with pytest.raises(ContractError):
        make_histogram([], 3)


def _blobs(seed=0):
    g = np.random.default_rng(seed)
    return Dataset(np.vstack([g.normal(loc=c, size=(40, 2)) for c in ([0, 0], [6, 0], [0, 6])]))


def test_single_trial_has_zero_variance():
    s = run_trials(_blobs(), "em", SolverConfig(k=3), 1, base_seed=4)
    assert s.min == s.max == s.mean and s.variance == 0


@pytest.mark.parametrize("algo", ["em", "mbem", "sbe", "be"])
def test_trials_reproducible_and_worker_independent(algo):
    data = _blobs()
    cfg = SolverConfig(k=3, batch_size=20, imaxit=3, omaxit=15)
    a = run_trials(data, algo, cfg, 6, base_seed=11)
    b = run_trials(data, algo, cfg, 6, base_seed=11, workers=3)
    assert a.objectives == b.objectives
    assert a.to_dict() == b.to_dict()
    assert a.min <= a.mean <= a.max and a.variance >= 0
    assert summarize(a.objectives) == (a.min, a.max, a.mean, a.variance)
    json.dumps(a.to_dict())


def test_trial_uses_stream_for_init():
    from sbekmeans.core import init_random
    from sbekmeans.solvers import em_run
    data = _blobs()
    s = run_trials(data, "em", SolverConfig(k=3), 3, base_seed=5)
    expect = em_run(data, init_random(data, 3, RngStream(5, 2))).final_objective
    assert s.objectives[2] == expect


def test_divergent_trials_are_recorded():
    g = np.random.default_rng(0)
    data = Dataset(g.normal(size=(30, 2)) * 1e150)
    cfg = SolverConfig(k=2, gamma0=1e160, alpha=0.0, batch_size=30, imaxit=2, omaxit=40)
    with np.errstate(all="ignore"), pytest.raises(Exception, match="diverged"):
        run_trials(data, "sbe", cfg, 3, base_seed=0)


def _trace(alg, iters, dists, t):
    return SolveTrace(alg, None, 0.0, wall_times=[t] * iters, distance_evaluations=dists, iterations=iters)


def test_compare_cost_ratios():
    n, k, m, imaxit = 60000, 10, 500, 5
    rows = compare_cost([_trace("em", 3, 3 * n * k, 2.3), _trace("mbem", 4, 4 * m * k, 0.03),
                         _trace("sbe", 2, 2 * imaxit * m * k, 0.1)])
    per = {r.algorithm: r.distance_evals_per_iter for r in rows}
    assert per["em"] / per["sbe"] == 24
    assert per["sbe"] / per["mbem"] == 5
    assert [r.algorithm for r in rows] == ["em", "mbem", "sbe"]
    assert rows[0].mean_time_per_iter == pytest.approx(2.3)
    assert len(compare_cost([_trace("em", 1, 10, 1.0)])) == 1
    with pytest.raises(ContractError):
        compare_cost([])


def test_some_divergent_trials_are_excluded(monkeypatch):
    from sbekmeans import harness
    from sbekmeans.solvers import DivergenceError
    real = harness.run_solver

    def flaky(algorithm, data, cfg, rng, *a, **kw):
        if rng.stream_id == 1:
            raise DivergenceError(algorithm, 3)
        return real(algorithm, data, cfg, rng, *a, **kw)

    monkeypatch.setattr(harness, "run_solver", flaky)
    s = run_trials(_blobs(), "em", SolverConfig(k=3), 4, base_seed=0)
    assert s.diverged == [1]
    assert np.isnan(s.objectives[1])
    assert s.to_dict()["objectives"][1] is None
    assert summarize([v for i, v in enumerate(s.objectives) if i != 1]) == (s.min, s.max, s.mean, s.variance)
