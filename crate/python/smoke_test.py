"""Smoke test for the rlshape_py extension.

Build and install first:
    cd crates/python && maturin build --release -o dist && pip install dist/*.whl
"""
import json
import math

import rlshape_py as rl


def main():
    grid = rl.Grid([1.5, 1.5], [4.0, 4.0], [0.1, 0.1])
    assert grid.counts() == [26, 26]
    assert len(grid) == 26 * 26
    assert grid.locate([2.0, 2.5]) == [5, 10]
    assert grid.point([5, 10]) == [2.0, 2.5]

    foil = rl.Airfoil(2.0, 2.0)
    x, zu, zl = foil.sample(33)
    assert x[0] == 0.0 and x[-1] == 1.0
    assert all(u >= l for u, l in zip(zu, zl))
    try:
        rl.Airfoil(2.0, 0.5)
        raise AssertionError("b <= 1 accepted")
    except ValueError:
        pass

    assert rl.synthetic_valley(2.0, 2.5) == 0.0
    assert rl.fictitious(-1.0) == 0.0

    values = [rl.synthetic_valley(*grid.point([i, j])) for i in range(3, 8) for j in range(8, 13)]
    p = rl.transition_matrix(grid, [5, 10], [2, 2], values, 5.0)
    assert all(abs(sum(row) - 1.0) < 1e-12 for row in p)

    coords, v, iterations, converged = rl.value_fixed_point(grid, [5, 10], [2, 2], values)
    best = coords[min(range(len(v)), key=v.__getitem__)]
    assert best == [2.0, 2.5], best
    assert iterations >= 1

    trace = json.loads(rl.optimize("synthetic", [3.9, 1.7]))
    assert trace["schema_version"] == rl.TRACE_SCHEMA_VERSION
    assert trace["terminated_reason"]["kind"] == "converged"
    end = trace["cycles"][-1]["argmin_coords"]
    assert math.dist(end, [2.0, 2.5]) < 0.25, end

    fixed, free = rl.walk_means('{"walk": {"n_walks": 100}}')
    assert fixed > free, (fixed, free)

    stokes = rl.StokesObjective('{"nx": 32, "nz": 40}')
    r1, r2 = stokes.empty_channel()
    assert abs(r1 - 0.36) < 1e-6 and r2 < 1e-6
    r1, r2, r = stokes.evaluate(2.0, 2.0)
    assert 0.0 <= r1 <= 1.0 and r2 >= 0.0 and abs(r - r1 - r2) < 1e-12
    assert stokes.simulations == 1

    print("python smoke test passed")


if __name__ == "__main__":
    main()
