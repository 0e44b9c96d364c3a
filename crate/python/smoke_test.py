"""Smoke test for the ppm_py extension.

Build and install it first, e.g.

    pip install maturin
    maturin build --release -m crates/python/Cargo.toml
    pip install target/wheels/ppm_py-*.whl
"""

import math

import ppm_py


def close(a, b, tol=1e-12):
    return abs(a - b) <= tol


def main():
    chain = ppm_py.Tree([0, 1])
    r = ppm_py.project(chain, [0.5, 0.7])
    assert close(r.t_star, -0.5), r
    assert all(close(a, b) for a, b in zip(r.m_star, [0.3, 0.7]))
    assert all(close(a, b) for a, b in zip(r.f_star, [1.0, 0.7]))
    assert close(r.cost, 0.5)
    assert close(ppm_py.project(chain, [0.5, 0.7], incremental=True).cost, 0.5)

    results, total = ppm_py.project_matrix(chain, [[0.5, 0.5], [0.7, 0.7]])
    assert len(results) == 2 and close(total, 0.5 * math.sqrt(2))

    star = ppm_py.Tree.from_prufer([1, 1])
    assert star.parents() == [0, 1, 1, 1]
    assert star.prufer() == [1, 1]
    assert star.children(1) == [2, 3, 4]
    assert len(star) == 4

    assert ppm_py.count_trees(10) == 100_000_000
    assert ppm_py.count_trees(11) == 2_357_947_691

    # noiseless data from the star with m = (0.1, 0.2, 0.3, 0.4)
    rows = [[1.0], [0.2], [0.3], [0.4]]
    report = ppm_py.search(rows, k=3, workers=2)
    assert report["trees_evaluated"] == 16
    assert report["ranked"][0]["cost"] <= 1e-9
    assert any(t["prufer"] == [1, 1] and t["cost"] <= 1e-9 for t in report["ranked"])

    try:
        ppm_py.Tree([0, 3])
    except ValueError:
        pass
    else:
        raise AssertionError("invalid tree accepted")

    print("ppm_py smoke test passed")


if __name__ == "__main__":
    main()
