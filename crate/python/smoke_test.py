"""Smoke test for the lbjump_py extension.

Build and install first, e.g.
    maturin build --release -m crates/python/Cargo.toml -o dist && pip install dist/*.whl
"""

import json
import math

import lbjump_py as lb


def close(a, b, tol):
    assert abs(a - b) <= tol, (a, b)


def main():
    g = lb.Balancing("barker")
    close(g(1.0), 1.0, 1e-15)
    close(g(3.0), 3.0 * g(1.0 / 3.0), 1e-12)
    assert g.sup == 2.0
    assert lb.Balancing("sqrt").sup is None
    assert all(lb.Balancing(n).check() for n in ["min", "barker", "max", "sqrt", "power(0.5)"])

    two = lb.Model.finite([0.5, 0.5], [[0.0, 1.0], [1.0, 0.0]])
    close(two.gap(g), 2.0, 1e-12)
    close(two.z_lambda(g), 1.0, 1e-15)

    three = lb.Model.finite([0.2, 0.3, 0.5], [[0, 0.5, 0.5], [0.5, 0, 0.5], [0.5, 0.5, 0]])
    ok, gap_l, gap_p, bar = three.gap_sandwich(lb.Balancing("min"))
    assert ok and gap_l >= gap_p >= gap_l / bar - 1e-9
    avg = three.time_average_identity(g, 0, 200_000, 7)
    close(avg, 1.3, 0.02)

    times, states = three.simulate(g, 0, seed=1, events=50)
    assert len(times) == 51 and times == sorted(times)
    again = three.simulate(g, 0, seed=1, events=50)
    assert again == (times, states)

    lattice = lb.Model.from_json(json.dumps({
        "target": {"kind": "lattice", "family": "exp_power", "a": 1.0, "beta": 1.0},
        "kernel": {"kind": "walk"},
    }))
    close(lattice.rate(lb.Balancing("sqrt"), 0), 0.5 * math.exp(-0.5), 1e-15)

    gauss = lb.Model.from_json(json.dumps({
        "target": {"kind": "continuous", "family": "gaussian"},
        "kernel": {"kind": "gaussian", "sigma": 0.5},
    }))
    times, states = gauss.simulate(g, [0.0], seed=2, time=5.0)
    assert times[-1] <= 5.0 and len(states[0]) == 1

    lower, upper = lb.hitting_bracket(1.0, 1.5, lb.Balancing("min"), 10, 2)
    assert 0.0 < lower <= upper

    ok, skew, inv = lb.nonrev_cycle_certificate([0.2, 0.3, 0.5], lb.Balancing("sqrt"))
    assert ok and skew <= 1e-12 and inv <= 1e-12

    five = [3.0 ** i for i in range(5)]
    probs = [w / sum(five) for w in five]
    rows = [[0.0 if i == j else 0.25 for j in range(5)] for i in range(5)]
    face = lb.Model.finite(probs, rows).faceoff(lb.Balancing("sqrt"), 20_000, 10, 3)
    assert set(face) == {"truth", "var_mc", "var_is", "var_mh", "p_value"}

    passed, line = lb.acceptance_criterion(1)
    assert passed and line.startswith("PASS")

    try:
        lb.Balancing("nope")
    except ValueError:
        pass
    else:
        raise AssertionError("unknown balancing name accepted")

    print("smoke test ok")


if __name__ == "__main__":
    main()
