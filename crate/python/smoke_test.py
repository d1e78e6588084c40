"""Smoke test for the riskq Python extension.

Build and install first, e.g. `maturin develop -m crates/python/Cargo.toml --release`.
"""

import math

import riskq


def close(a, b, tol):
    return all(abs(x - y) <= tol for x, y in zip(a, b))


def main():
    mdp = riskq.Mdp.fixture()
    assert (mdp.num_states, mdp.num_actions) == (2, 2)
    assert mdp.validate() == []
    assert math.isclose(mdp.risk_hat, 0.1 / 0.9)

    log_x, _, converged = riskq.fixed_point_f(mdp)
    assert converged
    assert math.isclose(log_x[2], 100 / 9, abs_tol=1e-8)
    q_star, _, _ = riskq.fixed_point_t(mdp)
    assert close(q_star, [0.0, -47.5938, -100.0, -100.0], 1e-3)
    assert close(riskq.x_to_q(mdp, [math.exp(v) for v in log_x]), q_star, 1e-7)
    assert riskq.greedy_actions_from_q(q_star, 2)[0] == 0

    report = riskq.run_example()
    assert report["greedy_risk_neutral"][0] == 1
    assert report["greedy_risk_sensitive"][0] == 0

    again = riskq.Mdp.from_json(mdp.to_json())
    assert again.content_hash() == mdp.content_hash()

    rand = riskq.Mdp.random(3, 2, 0.8, 0.5, seed=7)
    x = [1.0] * 6
    pi = [[0.5, 0.5]] * 3
    fx = riskq.apply_f(rand, x)
    fpi = riskq.apply_f_pi(rand, pi, x)
    assert all(a <= b * (1 + 1e-12) for a, b in zip(fx, fpi))
    best, best_log = riskq.brute_force_optimal(rand)
    log_star, _, _ = riskq.fixed_point_f(rand)
    assert riskq.linf_distance(best_log, log_star) < 1e-7

    study = riskq.two_timescale(mdp, 2000, [0, 1])
    assert study["violations"] == 0
    assert study["n"][-1] == 2000
    study = riskq.one_timescale(rand, 2000, [0])
    assert study["violations"] == 0

    n, mean, env = riskq.scalar_study(20000, list(range(5)))
    assert all(m <= e for k, m, e in zip(n, mean, env) if k >= 100)
    slope, _, r2 = riskq.fit_loglog([(k, k ** -0.5) for k in n if k > 0], 1, 10**6)
    assert abs(slope + 0.5) < 1e-12 and r2 > 0.999

    assert math.isclose(riskq.compute_c1(0.25, 1.0, 0.5), 1 / 3)
    assert riskq.oracle_check(count=5) == (5, 5)

    try:
        riskq.Mdp([[[0.5, 0.4]]], [[0.0]], 0.9, 0.1)
    except ValueError:
        pass
    else:
        raise AssertionError("rows not summing to one must be rejected")

    print("python smoke test: ok")


if __name__ == "__main__":
    main()
