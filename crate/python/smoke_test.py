"""Smoke test for the bellbeam Python module.

Build first, e.g. `maturin develop -m crates/py/Cargo.toml` or
`pip install --no-build-isolation ./crates/py`.
"""

import math

import bellbeam


def close(a, b, tol):
    assert abs(a - b) <= tol, f"{a} vs {b}"


def main():
    bell = bellbeam.State.werner(1.0)
    close(bellbeam.chsh_discrete(bell), -2.0 * math.sqrt(2.0), 1e-12)
    close(bellbeam.chsh_discrete(bellbeam.State.werner(0.0)), 0.0, 1e-12)
    close(bellbeam.exact_correlation(bell, "r2_t2"), -1.0 / math.sqrt(2.0), 1e-12)
    print("eigenvalues", [round(x, 12) for x in bell.eigenvalues()])

    z = bellbeam.Observable([0.0, 0.0, 1.0])
    table = bellbeam.joint_probabilities(bell, z, z)
    close(table[0][1] + table[1][0], 1.0, 1e-12)

    k = bellbeam.Kernel.default_channel_one()
    for a in "+-":
        for b in "+-":
            close(k.decode(a, b), 1.0 if a == b else 0.0, 1e-8)
    f = bellbeam.Density([(1.0, 1.2, 0.3)])
    xs = f.sample(1000, 7)
    assert all(0.0 <= x <= math.pi for x in xs)

    est = bellbeam.simulate(p=1.0, trials=50_000, seed=3)
    print("S =", est["s"], "+/-", est["std_error"], "violated", est["violated"])
    assert est["violated"] and 2.7 < abs(est["s"]) < 2.95

    rows = bellbeam.sweep([0.0, 1.0], trials=20_000, seed=1)
    assert not rows[0]["violated"] and rows[1]["violated"]

    vals = bellbeam.six_state_adiabats(0.0, 0.0, 0.0, 0.0, 1.0, 1.0)
    for got, want in zip(vals, [-1, -1, -1, -1, 2, 2]):
        close(got, want, 1e-10)
    close(bellbeam.two_state_adiabats(0.0, 0.0, 1.0, 1.0)[1], 2.0, 1e-12)

    pts = [(math.pi * i / 99, math.exp(-((math.pi * i / 99 - 1.0) ** 2) / 0.08)) for i in range(100)]
    fit = bellbeam.fit_peaks(pts, 1)
    close(fit["peaks"][0]["mean_rad"], 1.0, 1e-6)

    try:
        bellbeam.State.werner(1.5)
    except ValueError:
        pass
    else:
        raise AssertionError("p = 1.5 accepted")

    print("bellbeam", bellbeam.__version__, "smoke test passed")


if __name__ == "__main__":
    main()
