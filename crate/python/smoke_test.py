"""Smoke test for the holonomy_lab extension module."""

import math

import holonomy_lab as hl


def close(a, b, tol):
    return all(abs(x - y) < tol for ra, rb in zip(a, b) for x, y in zip(ra, rb))


def main():
    assert hl.families() == ["poincare2d", "flat", "product4d", "sheared_poincare", "fubini_study_chart"]

    z = [[1.2, 0.1], [0.1, 0.9]]
    series = hl.sym_sqrt(z, "power_series")
    eigen = hl.sym_sqrt(z, "eigen")
    assert close(series, eigen, 1e-12)

    t = 0.3
    rot = [[math.cos(t), -math.sin(t)], [math.sin(t), math.cos(t)]]
    assert hl.so_residual(rot, [[1.0, 0.0], [0.0, 1.0]]) < 1e-14
    log = hl.principal_log(rot)
    assert abs(log[1][0] - t) < 1e-12
    assert close(hl.expm(log), rot, 1e-12)

    assert [d for _, d in hl.catalog(4)] == [0, 1, 3, 4, 6]
    assert hl.order("trivial", "so2_block", 2)["holds"]
    assert not hl.order("so4", "u2", 4)["holds"]

    disk = hl.MetricFamily("poincare2d")
    k, rho = 2, 0.4
    matrix, err, so_defect = disk.transport_circle([0.0, 0.0], rho, k=k)
    angle = abs(math.atan2(matrix[1][0], matrix[0][0]))
    expected = 4 * math.pi * rho**2 / (k**2 - rho**2)
    assert abs(angle - expected) < 1e-6 * expected, (angle, expected)
    assert disk.classify(k=2)[0] == "so2_block"
    assert disk.classify()[0] == "trivial"
    assert hl.MetricFamily("flat", {"dim": 3.0}).classify(k=1)[0] == "trivial"

    report = hl.run_semicontinuity(
        '{"family": {"name": "poincare2d"}, "ks": [2, 4],'
        ' "classification": {"target": "so2_block"}}',
        steps=512,
        restarts=8,
    )
    assert report.semicontinuity and report.strict and report.exit_code == 0
    rows = report.rows
    assert [r["k"] for r in rows] == [2, 4, -1]
    assert rows[-1]["class_id"] == "trivial"
    assert report.to_csv().splitlines()[0].startswith("k,c0_conn_dist")

    try:
        hl.run_semicontinuity('{"family": {"name": "poincare2d"}, "ks": []}')
    except ValueError:
        pass
    else:
        raise AssertionError("invalid manifest accepted")

    print("smoke test passed")


if __name__ == "__main__":
    main()
