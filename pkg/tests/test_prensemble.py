from fractions import Fraction
import io
import math

import numpy as np

from prtrack.__main__ import GEOMETRY_AT_0_15, THREE_STATE_COUNTS
from prtrack.blochcore import resonance_fluorescence, to_bloch, von_neumann_entropy
from prtrack.prensemble import (
    SWEEP_COLUMNS,
    EnsembleException,
    NonRationalInput,
    PREnsemble,
    angle_between,
    complex_pair_feasible,
    count_threshold,
    ensemble_from_json,
    ensemble_to_json,
    ensembles_to_csv,
    entropy_gap,
    geometry,
    mirror,
    rationalize,
    rotate,
    sweep_rows,
    three_state_ensembles,
    three_state_system,
    two_state_ensembles,
    verify_pr,
    _same_cycle,
)
import pytest


def _affine(epsilon):
    return to_bloch(resonance_fluorescence(epsilon))


def _by_provenance(ensembles, name):
    return next(e for e in ensembles if e.provenance == (name,))


@pytest.mark.parametrize(
    "epsilon, expected",
    (
        (0.05, 3),
        (0.1, 3),
        (0.23, 3),
        (0.3, 1),
        (1.0, 1),
    ),
)
def test_two_state_counts(epsilon, expected):
    """Test that each real eigenvector gives one two-state ensemble."""
    ensembles = two_state_ensembles(_affine(epsilon))
    assert len(ensembles) == expected
    for e in ensembles:
        assert e.K == 2
        assert verify_pr(e, _affine(epsilon)).passes


def test_two_state_weights_and_rates(rf_affine):
    """Test the closed-form weights and rates along u1."""
    e = _by_provenance(two_state_ensembles(rf_affine), "u1")
    r_ss = rf_affine.r_ss
    # u1 is the x axis and r_ss has no x component.
    eta = math.sqrt(1 - float(np.dot(r_ss, r_ss)))
    assert np.allclose(e.states[0], r_ss + eta * np.array([1, 0, 0]))
    assert np.allclose(e.states[1], r_ss - eta * np.array([1, 0, 0]))
    assert e.weights == pytest.approx((0.5, 0.5))
    assert e.rates == pytest.approx((0.25, 0.25))
    assert e.entropy == pytest.approx(1.0)


def test_two_state_balance(rf_affine):
    """Test that p_k kappa_k is the same around the cycle."""
    for e in two_state_ensembles(rf_affine):
        assert e.weights[0] * e.rates[0] == pytest.approx(e.weights[1] * e.rates[1])
        assert sum(e.weights) == pytest.approx(1.0)


def test_minimum_entropy_small_drive():
    """Test the leading small-epsilon behaviour of h(u-)."""
    epsilon = 0.05
    affine = _affine(epsilon)
    e = _by_provenance(two_state_ensembles(affine), "u-")
    leading = epsilon**4 * (math.log2(math.e) - 4 * math.log2(epsilon))
    assert e.entropy == pytest.approx(leading, rel=0.05)
    assert min(x.entropy for x in two_state_ensembles(affine)) == e.entropy


@pytest.mark.parametrize("epsilon", (0.1, 0.2, 0.5))
def test_entropy_gap(epsilon):
    """Test that every ensemble is at least as mixed as the steady state."""
    affine = _affine(epsilon)
    for e in two_state_ensembles(affine):
        assert entropy_gap(e, affine) > 0
        assert e.entropy > von_neumann_entropy(affine.r_ss)


def test_verify_pr_detects_errors(rf_affine):
    """Test that broken ensembles fail the check."""
    e = two_state_ensembles(rf_affine)[0]
    bad_rates = PREnsemble(e.states, e.weights, (e.rates[0], -e.rates[1]))
    assert not verify_pr(bad_rates, rf_affine).passes
    bad_weights = PREnsemble(e.states, (0.9, 0.1), e.rates)
    report = verify_pr(bad_weights, rf_affine)
    assert not report.passes
    assert report.convexity > 1e-3
    off_sphere = PREnsemble(tuple(0.9 * r for r in e.states), e.weights, e.rates)
    assert max(verify_pr(off_sphere, rf_affine).norm) == pytest.approx(0.1)


def test_rotate_and_mirror(rf_affine):
    """Test that relabelling and reflection preserve the PR conditions."""
    for e in two_state_ensembles(rf_affine):
        rolled = rotate(e, 1)
        assert np.allclose(rolled.states[0], e.states[1])
        assert rolled.weights == (e.weights[1], e.weights[0])
        assert verify_pr(rolled, rf_affine).passes
        assert verify_pr(mirror(e), rf_affine).passes
        assert rotate(e, 2).weights == e.weights


def test_ensemble_json(rf_affine):
    """Test that ensembles survive JSON."""
    e = two_state_ensembles(rf_affine)[1]
    restored = ensemble_from_json(ensemble_to_json(e))
    assert restored.provenance == e.provenance
    assert np.allclose(restored.states, e.states)
    assert restored.rates == e.rates


def test_weight_count_mismatch():
    """Test that weights must match states."""
    with pytest.raises(EnsembleException):
        PREnsemble(states=([0, 0, 1],), weights=(0.5, 0.5), rates=())


@pytest.mark.parametrize(
    "lam, expected",
    (
        (-0.75 + 0.1j, True),
        (-0.75 + 0.5j, False),
        (-0.1 + 1.0j, False),
    ),
)
def test_complex_pair_feasible(lam, expected):
    """Test the real-rate condition Re^2 > 3 Im^2."""
    assert complex_pair_feasible(lam) is expected


def test_complex_pair_feasible_needs_complex():
    """Test that a real eigenvalue is rejected."""
    with pytest.raises(ValueError):
        complex_pair_feasible(complex(-0.5, 0.0))


def test_rationalize():
    """Test exact conversion of short decimals."""
    assert rationalize(0.1, 10**6) == Fraction(1, 10)
    assert rationalize(-0.5, 10) == Fraction(-1, 2)
    assert rationalize(Fraction(2, 3), 10) == Fraction(2, 3)
    with pytest.raises(NonRationalInput):
        rationalize(math.pi, 1000)
    with pytest.raises(NonRationalInput):
        rationalize(float("nan"), 1000)


def test_three_state_system_shape(rf_affine, solver_config):
    """Test that the system has nine jump and three norm equations."""
    polys = three_state_system(rf_affine, solver_config)
    assert len(polys) == 12
    assert all(p.nvars == 12 for p in polys)
    assert all(p.degree == 2 for p in polys)
    # r1 = (0, 0, 1) with kappa12 = 0 and r2 = r1 leaves only A r1 + b.
    point = [0, 0, 1] * 3 + [0, 0, 0]
    values = [complex(p.evaluate(point)) for p in polys[:3]]
    assert values == pytest.approx([0, -0.1, -2])
    assert [complex(p.evaluate(point)) for p in polys[9:]] == pytest.approx([0, 0, 0])


def test_three_state_system_non_rational(solver_config):
    """Test that irrational drive strengths are refused."""
    with pytest.raises(NonRationalInput):
        three_state_system(_affine(math.pi / 10), solver_config)


def test_geometry_two_state(rf_affine):
    """Test angles of the u1 ensemble."""
    e = _by_provenance(two_state_ensembles(rf_affine), "u1")
    geo = geometry(e, rf_affine.r_ss)
    half = angle_between(e.states[0], rf_affine.r_ss)
    assert geo.angles_to_ss == pytest.approx((half, half))
    assert geo.total_angle == pytest.approx(2 * half)
    assert geo.entropy == pytest.approx(1.0)


@pytest.mark.parametrize(
    "a, b, expected",
    (
        ([1, 0, 0], [0, 1, 0], 90.0),
        ([1, 0, 0], [2, 0, 0], 0.0),
        ([0, 0, 1], [0, 0, -3], 180.0),
    ),
)
def test_angle_between(a, b, expected):
    """Test that angle_between works as expected."""
    assert angle_between(a, b) == pytest.approx(expected)


def test_sweep_rows_and_csv(rf_affine):
    """Test the sweep row schema and its CSV rendering."""
    ensembles = two_state_ensembles(rf_affine)
    rows = sweep_rows(0.1, ensembles, rf_affine.r_ss)
    assert [row["solution_id"] for row in rows] == [1, 2, 3]
    for row in rows:
        assert tuple(row) == SWEEP_COLUMNS
        assert row["angle3"] is None
        assert row["kappa31"] is None
    stream = io.StringIO()
    ensembles_to_csv(rows, stream)
    lines = stream.getvalue().splitlines()
    assert lines[0] == ",".join(SWEEP_COLUMNS)
    assert len(lines) == 4
    assert lines[1].endswith(",")


def test_count_threshold():
    """Test that bisection finds where a count changes."""
    assert count_threshold(lambda x: 3 if x < 0.4 else 1, 0.0, 1.0, tol=1e-6) == pytest.approx(0.4, abs=1e-6)
    with pytest.raises(EnsembleException):
        count_threshold(lambda x: 2, 0.0, 1.0)


def test_two_state_threshold():
    """Test that two of the three two-state ensembles disappear at epsilon = 1/4."""

    def count(epsilon):
        return len(two_state_ensembles(_affine(epsilon)))

    assert count_threshold(count, 0.21, 0.3, tol=1e-4) == pytest.approx(0.25, abs=2e-3)


@pytest.mark.slow
@pytest.mark.parametrize("epsilon", sorted(THREE_STATE_COUNTS))
def test_three_state_counts(epsilon, solver_config):
    """Test the number of cyclic three-state ensembles across the drive range."""
    affine = _affine(epsilon)
    ensembles = three_state_ensembles(affine, solver_config)
    assert len(ensembles) == THREE_STATE_COUNTS[epsilon]
    for e in ensembles:
        assert e.K == 3
        assert verify_pr(e, affine).passes
        assert e.weights[0] == max(e.weights)
        assert entropy_gap(e, affine) > 0


@pytest.mark.slow
def test_three_state_geometry(solver_config):
    """Test the geometry of the six three-state ensembles at epsilon = 0.15."""
    affine = _affine(0.15)
    ensembles = three_state_ensembles(affine, solver_config)
    assert len(ensembles) == len(GEOMETRY_AT_0_15)
    entropies = [e.entropy for e in ensembles]
    assert entropies == sorted(entropies)
    for e, (total, angles, h) in zip(ensembles, GEOMETRY_AT_0_15):
        geo = geometry(e, affine.r_ss)
        assert geo.total_angle == pytest.approx(total, rel=1e-2)
        assert sorted(geo.angles_to_ss) == pytest.approx(sorted(angles), rel=1e-2)
        assert geo.entropy == pytest.approx(h, abs=1e-3)
    totals = [geometry(e, affine.r_ss).total_angle for e in ensembles]
    assert all(a > b for a, b in zip(totals, totals[1:]))


@pytest.mark.slow
@pytest.mark.parametrize("epsilon", (0.18, 0.23))
def test_three_state_mirror_closure(epsilon, solver_config):
    """Test that the mirror image x -> -x of every ensemble is also found."""
    affine = _affine(epsilon)
    ensembles = three_state_ensembles(affine, solver_config)
    assert ensembles
    for e in ensembles:
        image = mirror(e)
        assert verify_pr(image, affine).passes
        assert any(_same_cycle(image, other) for other in ensembles)
