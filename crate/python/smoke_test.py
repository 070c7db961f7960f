"""Smoke test for the pyepibranch extension.

Build and install first:
    cd crates/python && maturin build --release -o dist && pip install dist/*.whl
"""

import math

import pyepibranch as eb


def main():
    p = eb.DiseaseParams.baseline()
    h = p.h
    assert p.dim == 5 * h + 1

    r = p.failure_rates("E")
    assert r[:5] == [0.0, 0.0, 1 / 3, 0.5, 1.0], r[:5]
    assert p.state_index("H", 1) == 5 * h

    x0 = [0.0] * p.dim
    x0[p.state_index("E", 1)] = 200.0
    traj = eb.simulate_meanfield(p, x0, 60)
    assert len(traj) == 61
    hosp = [x[-1] for x in traj]
    assert all(b >= 0 for b in hosp)

    rho = eb.spectral_radius(p)
    assert 1.0 < rho < 1.3, rho
    assert eb.spectral_radius(p.with_contact_rates(0.0, 0.0)) == 0.0

    a = eb.simulate_stochastic(p, [int(v) for v in x0], 30, seed=5)
    b = eb.simulate_stochastic(p, [int(v) for v in x0], 30, seed=5)
    assert a == b

    assert abs(eb.tracing_rho(p, 0.0, 0.0) - rho) < 1e-8
    assert eb.tracing_rho(p, 1.0, 0.5) < rho

    obs = [None if t == 10 else hosp[t] for t in range(1, 31)]
    means, stds = eb.filter_hospitalizations(p, obs, x0)
    assert len(means) == 31 and len(stds) == 31

    assert eb.loss_l1([[1.0, 2.0, 3.0]], [1.0, 2.0, 5.0]) == (1.0, 0.0)
    m, _ = eb.loss_l1_log([[1.0, 2.0, 4.0]], [1.0, 1.0, 2.0])
    assert abs(m - math.log(2)) < 1e-12

    best, loss, half = eb.grid_search_fit(
        [int(v) for v in hosp[:41]],
        {"x_e0": [200], "alpha1": [0.3, 0.4], "t2": [20], "alpha2": [0.3],
         "t3": [30], "alpha3": [0.3]},
        p, seed=1, n_reps=20, refine_rounds=0,
    )
    assert best["x_e0"] == 200 and loss >= 0 and half >= 0

    cohorts = [(0, 0, 0, 100.0), (1, 1, 0, 100.0)]
    R = eb.maxent_routing(cohorts, {(0, 1, 0): 30.0, (1, 0, 0): 30.0})
    assert abs(R[0][1] - 0.3) < 1e-8 and abs(R[1][0] - 0.3) < 1e-8

    try:
        eb.make_params(0.7, 0.05, 0.4, 0.3, {"E": [1.0]})
    except ValueError as e:
        assert "missing" in str(e)
    else:
        raise AssertionError("incomplete durations accepted")

    print("smoke test passed")


if __name__ == "__main__":
    main()
