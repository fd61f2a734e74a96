"""Smoke test for the furstlab Python bindings.

Build and install first:  pip install --no-build-isolation -e crates/python
"""

import json
import math
import os
import tempfile

import furstlab


def main():
    tops = furstlab.enumerate_admissible(4)
    assert len(tops) == 40, len(tops)
    assert furstlab.count_arrows(4) == 92

    fine, coarse = furstlab.Topology.finest(3), furstlab.Topology.coarsest(3)
    assert fine.is_finer(coarse)
    chain = furstlab.chain_decompose(fine, coarse, [1.0, 0.2, -1.2])
    assert len(chain) == 4 and chain[0] == coarse and chain[-1] == fine

    diag = furstlab.MatrixMeasure([(1.0, [[2, 0, 0], [0, 1, 0], [0, 0, 0.5]])])
    spec = furstlab.lyapunov_spectrum(diag, 10_000, 1)
    for a, b in zip(spec.chi, [math.log(2), 0.0, -math.log(2)]):
        assert abs(a - b) < 1e-12, spec.chi

    mu = furstlab.MatrixMeasure.preset("sl2z-free")
    h, ci = furstlab.rw_entropy(mu, 10)
    assert 0.45 < h < 0.65, h
    h_inv, _ = furstlab.rw_entropy(mu.inverse(), 10)
    assert h == h_inv
    assert furstlab.MatrixMeasure.from_json(mu.to_json()).hash() == mu.hash()

    cloud = furstlab.sample_stationary_cloud(mu, 5000, 200, 7)
    assert len(cloud) == 5000 and cloud.d == 2
    delta, _ = furstlab.local_dimension(cloud, 3, n_centers=300)
    assert 0.5 < delta < 1.1, delta
    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "c.flgc")
        cloud.write_binary(path)
        back = furstlab.PointCloud.read_binary(path)
        assert back.point(17) == cloud.point(17)

    report, code = furstlab.run_config('{"task": {"kind": "topo", "d": 4}}')
    assert code == 0
    assert json.loads(report)["counts"] == {"topologies": 40, "arrows": 92}

    try:
        furstlab.MatrixMeasure([(1.0, [[1, 0], [0, 0]])])
    except furstlab.FurstlabError as e:
        assert str(e).startswith("invalid_measure") or ":" in str(e)
    else:
        raise AssertionError("singular atom accepted")

    print("smoke test passed")


if __name__ == "__main__":
    main()
