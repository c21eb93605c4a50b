import math

import numpy as np
import pytest

from lefgpd.geometry import AffineMap, CircleMap, TorusGeometry
from lefgpd.heatkernel import HeatTime
from lefgpd.lefschetz import (
    VerificationConfig,
    cohomological_side,
    commutation_check,
    fixed_point_records,
    fixed_point_side,
    geometric_supertrace,
    localization_fraction,
    sweep,
    verify,
    wedge_matrix,
)
from lefgpd.groupoid import auto_grid
from lefgpd.superalgebra import GradedEndomorphism

CAT = [[2, 1], [1, 1]]
NONLINEAR = CircleMap(-1, 0.0, sin=[(1, 0.05)])
NO_FIXED = CircleMap(1, 0.25, sin=[(1, 0.1)])

# ten integer matrices with det(A - I) != 0 across n = 1, 2, 3
SUITE = [
    [[2]], [[3]], [[-1]],
    [[2, 1], [1, 1]], [[0, 1], [-1, 0]], [[2, 1], [0, 3]], [[3, 2], [1, 1]],
    [[1, 1, 0], [0, 1, 1], [1, 0, 2]], [[-1, 0, 0], [0, 2, 1], [0, 1, 1]], [[2, 0, 0], [0, 0, 1], [0, -1, 0]],
]


def config(f, **kw):
    return VerificationConfig(TorusGeometry(f.n, kw.pop("grid_size", 32)), f, **kw)


# -- the four sides ---------------------------------------------------------

def test_fixed_point_side_examples():
    assert fixed_point_side(AffineMap(CAT)) == -1.0
    assert fixed_point_side(AffineMap([[3]])) == -2.0
    assert abs(fixed_point_side(NONLINEAR) - 2.0) < 1e-8
    assert fixed_point_side(NO_FIXED) == 0.0
    records = fixed_point_records(NONLINEAR)
    assert len(records) == 2
    assert all(abs(r.weight * r.local_supertrace - 1.0) < 1e-12 for r in records)


def test_cohomological_side_examples():
    assert cohomological_side(AffineMap(CAT)) == -1.0
    assert cohomological_side(AffineMap([[1]], [0.3])) == 0.0
    assert cohomological_side(CircleMap(-1)) == 2.0
    assert cohomological_side(NONLINEAR) == 2.0
    assert cohomological_side(NO_FIXED) == 0.0


def test_geometric_supertrace_examples():
    assert abs(geometric_supertrace(AffineMap([[1]], [0.5]), None, TorusGeometry(1), HeatTime(0.3))) < 1e-10
    t = 0.1  # tau = 0.01
    value = geometric_supertrace(AffineMap(CAT), None, TorusGeometry(2), HeatTime(t), TorusGeometry(2).grid(256))
    assert abs(value - (-1.0)) < 1e-4
    values = [geometric_supertrace(NONLINEAR, None, TorusGeometry(1), HeatTime(t), auto_grid(1, t))
              for t in [0.2, 0.1, 0.05]]
    assert all(abs(v - 2.0) < 1e-3 for v in values)


@pytest.mark.parametrize("A", SUITE)
def test_three_way_agreement(A):
    n = len(A)
    report = verify(config(AffineMap(A), grid_size=16 if n == 3 else 32))
    assert report.error is None
    expected = float(round(np.linalg.det(np.eye(n) - np.array(A))))
    lim = report.limits
    assert abs(lim["fixed_point_side"] - expected) < 1e-10
    assert abs(lim["spectral"] - expected) < 1e-10
    assert abs(lim["cohomological"] - expected) < 1e-10
    assert abs(lim["geometric_extrapolated"] - expected) < 1e-4
    assert report.passed


def test_t_independence_affine():
    report = verify(config(AffineMap(CAT), rungs=6))
    values = [row["str_t_geometric"] for row in report.rows]
    assert max(values) - min(values) < 1e-4
    assert [row["grid_size"] for row in report.rows] == sorted(row["grid_size"] for row in report.rows)


@pytest.mark.parametrize("f", [AffineMap(CAT), AffineMap([[3]]), NONLINEAR, CircleMap(2, 0.1, sin=[(1, 0.1)])])
def test_localization(f):
    tau = 0.0025
    frac = localization_fraction(f, None, TorusGeometry(f.n), tau, auto_grid(f.n, math.sqrt(tau)))
    assert frac >= 0.99


@pytest.mark.parametrize("f", [NONLINEAR, CircleMap(2, 0.1, sin=[(1, 0.1)]), CircleMap(-2, 0.3, cos=[(2, 0.05)]),
                               CircleMap(3, 0.0, sin=[(1, 0.08)], cos=[(3, 0.01)])])
def test_nonlinear_consistency(f):
    report = verify(config(f))
    lim = report.limits
    assert lim["cohomological"] == round(lim["cohomological"])
    assert abs(lim["geometric_extrapolated"] - lim["fixed_point_side"]) < 1e-3
    assert abs(lim["cohomological"] - lim["fixed_point_side"]) < 1e-8
    assert report.passed


def test_no_fixed_point_decay():
    values = [geometric_supertrace(NO_FIXED, None, TorusGeometry(1), HeatTime(t), auto_grid(1, t))
              for t in [0.2, 0.1, 0.05]]
    assert abs(values[-1]) < 1e-6
    report = verify(config(NO_FIXED))
    assert report.limits["fixed_point_side"] == 0.0 and report.passed


# -- verify() ---------------------------------------------------------------

def test_verify_examples():
    report = verify(config(AffineMap(CAT)))
    assert report.passed
    assert set(report.limits) == {"fixed_point_side", "cohomological", "spectral", "geometric_extrapolated"}
    for key in ("fixed_point_side", "cohomological", "spectral"):
        assert report.limits[key] == -1.0
    assert len(report.rows) == 4 and report.rows[0]["t"] > report.rows[-1]["t"]

    report = verify(config(AffineMap([[1]], [0.3])))
    assert report.passed
    assert all(abs(v) < 1e-10 for v in report.limits.values())

    report = verify(config(AffineMap([[2]]), s=1))
    assert report.passed
    assert abs(report.limits["geometric_extrapolated"] + 1.0) < 1e-4


def test_verify_error_report():
    report = verify(config(AffineMap([[1]])))
    assert not report.passed
    assert "NonSimpleFixedPoint" in report.error_type
    assert report.to_dict()["error"]


def test_verify_user_zeta():
    # a zeta hook that is not the pullback: no cohomological value, limits still agree
    zeta = lambda x: GradedEndomorphism([np.full(np.shape(x)[:-1] + (1, 1), 1.0),
                                         np.full(np.shape(x)[:-1] + (1, 1), 4.0)])
    report = verify(config(AffineMap([[3]]), zeta=zeta))
    assert report.limits["cohomological"] is None
    assert report.verdict["cohomological_vs_fixed_point"] is None
    assert abs(report.limits["fixed_point_side"] - (1 - 4)) < 1e-12
    assert abs(report.limits["geometric_extrapolated"] - (1 - 4)) < 1e-4


def test_verify_failed_verdict_still_reports(monkeypatch):
    import lefgpd.lefschetz as lf
    monkeypatch.setattr(lf, "spectral_supertrace", lambda map, ht: -1.0 + 1e-6)
    report = verify(config(AffineMap(CAT)))
    assert report.error is None and not report.passed
    assert report.verdict["spectral_vs_fixed_point"] is False
    assert report.verdict["geometric_vs_fixed_point"] is True
    assert len(report.rows) == 4 and report.ladder["residuals"]


def test_verify_higher_order():
    report = verify(VerificationConfig(TorusGeometry(1, 32), AffineMap([[3]]), s=2, t_max=0.5))
    assert report.passed
    assert report.rows[0]["tau"] == 0.5 ** 4


def test_config_validation():
    with pytest.raises(ValueError):
        config(AffineMap(CAT), rungs=3)
    with pytest.raises(ValueError):
        config(AffineMap(CAT), t_max=0.6)
    with pytest.raises(ValueError):
        VerificationConfig(TorusGeometry(1), AffineMap(CAT))


def test_sweep_table():
    report, table = sweep(config(AffineMap(CAT), rungs=6))
    assert len(table) == 6
    assert list(table[0]) == ["t", "tau", "str_t_geometric", "str_spectral", "fixed_point_side", "abs_error"]
    assert all(row["abs_error"] < 1e-4 for row in table)
    assert [r["t"] for r in table] == sorted((r["t"] for r in table), reverse=True)


# -- commutation with d -----------------------------------------------------

def test_wedge_matrix_squares_to_zero():
    k = np.array([1, -2, 3])
    W = wedge_matrix(k)
    np.testing.assert_array_equal(W @ W, np.zeros_like(W))


def test_commutation_affine():
    assert commutation_check(AffineMap(CAT), mode_cutoff=8) < 1e-12
    assert commutation_check(AffineMap([[1, 1, 0], [0, 1, 1], [1, 0, 2]]), mode_cutoff=3) < 1e-12
    assert commutation_check(AffineMap(np.eye(2, dtype=int)), mode_cutoff=4) == 0.0


@pytest.mark.parametrize("f", [NONLINEAR, NO_FIXED, CircleMap(2, 0.1, sin=[(1, 0.1)], cos=[(2, 0.03)])])
def test_commutation_circle(f):
    assert commutation_check(f, mode_cutoff=32) < 1e-10


def test_commutation_identity_circle():
    assert commutation_check(CircleMap(1), mode_cutoff=32) < 1e-10
