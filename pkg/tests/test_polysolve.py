from fractions import Fraction
from pathlib import Path

import numpy as np

from prtrack.config import SolverConfig
from prtrack.polysolve import (
    DRL,
    LEX,
    MonomialOrder,
    MultiPoly,
    NotZeroDimensional,
    PolynomialParseError,
    ResourceLimit,
    SolverDegeneracy,
    ZeroPolynomial,
    buchberger,
    format_system,
    interreduce,
    is_groebner,
    mult_matrix,
    multi_divide,
    newton_polish,
    normal_form,
    parse_system,
    poly_variables,
    s_polynomial,
    solve_lex,
    solve_zero_dim,
    standard_monomials,
)
import pytest


DATA = Path(__file__).parent.joinpath('data')

WORKED_BASIS = """
# vars: x y
x^2 + x*y - y^2
x*y^2 - y^3 - y + 1
y^4 + x*y + 2*y^2 - x - 2*y
"""

# Column j holds the normal form of x * b_j for B = (1, x, y, xy, y^2, y^3).
WORKED_MX = [
    [0, 0, 0, 1, -1, 0],
    [1, 0, 0, 0, 0, 1],
    [0, 0, 0, -1, 1, 1],
    [0, -1, 1, 0, 0, -1],
    [0, 1, 0, 0, 0, -1],
    [0, 0, 0, 0, 1, 0],
]


@pytest.fixture()
def xy():
    """Prepare the generators of Q[x, y]."""
    return poly_variables(2)


@pytest.fixture()
def worked_basis(worked_system, solver_config):
    """Prepare the reduced DRL basis of the worked example."""
    polys, _ = worked_system
    return buchberger(polys, DRL, solver_config)


@pytest.mark.parametrize(
    "order, bigger, smaller",
    (
        (DRL, (1, 0), (0, 1)),
        (LEX, (1, 0), (0, 1)),
        (DRL, (1, 2), (0, 3)),
        (DRL, (0, 5), (1, 0)),
        (LEX, (1, 0), (0, 5)),
        (DRL, (1, 2, 0), (2, 0, 1)),
        (MonomialOrder("lex", precedence=(1, 0)), (0, 1), (5, 0)),
    ),
)
def test_monomial_orders(order, bigger, smaller):
    """Test that the monomial orders compare as expected."""
    assert order.lt(smaller, bigger)
    assert not order.lt(bigger, smaller)


def test_monomial_order_validation():
    """Test that unknown orders and bad precedences are rejected."""
    with pytest.raises(ValueError):
        MonomialOrder("grlex")
    with pytest.raises(ValueError):
        MonomialOrder("lex", precedence=(0, 0))


def test_arithmetic(xy):
    """Test that ring arithmetic works as expected."""
    x, y = xy
    square = (x + y) ** 2
    assert square == x * x + 2 * x * y + y * y
    assert square - square == 0
    assert (x - 1) * (x + 1) == x**2 - 1
    assert (Fraction(1, 2) * x).terms == {(1, 0): Fraction(1, 2)}
    assert square.degree == 2
    assert MultiPoly.constant(0, 2).degree == -1
    assert (x**2 * y).derivative(0) == 2 * x * y
    assert (x**2 * y + y).substitute(0, 3) == 10 * y
    assert square.evaluate([1.0, 2.0]) == pytest.approx(9.0)
    assert x.variables_used() == (0,)


def test_leading_term(xy):
    """Test leading terms under both orders."""
    x, y = xy
    f = 3 * y**3 - x * y**2 + x
    assert f.leading_term(DRL) == ((1, 2), Fraction(-1))
    assert f.leading_term(LEX) == ((1, 2), Fraction(-1))
    assert f.monic(DRL).leading_term(DRL)[1] == 1
    assert (y**5 + x).leading_monomial(LEX) == (1, 0)
    with pytest.raises(ZeroPolynomial):
        MultiPoly.constant(0, 2).leading_term()


def test_s_polynomial(worked_system):
    """Test that S(f1, f2) of the worked example gives x*y^2 - y^3 - y + 1."""
    (f1, f2), names = worked_system
    expected, _ = parse_system("x*y^2 - y^3 - y + 1", names)
    assert s_polynomial(f1, f2) == expected[0]
    with pytest.raises(ZeroPolynomial):
        s_polynomial(f1, MultiPoly.constant(0, 2))


def test_multi_divide(xy):
    """Test that f = sum q_i g_i + r with an irreducible remainder."""
    x, y = xy
    f = x**2 * y + x * y**2 + y**2
    divisors = [x * y - 1, y**2 - 1]
    quotients, remainder = multi_divide(f, divisors)
    assert sum((q * g for q, g in zip(quotients, divisors)), remainder) == f
    assert remainder == x + y + 1
    assert normal_form(f, divisors) == remainder
    with pytest.raises(ZeroPolynomial):
        multi_divide(f, [])


def test_buchberger_worked_example(worked_basis, worked_system):
    """Test that the reduced DRL basis equals the known one."""
    expected, _ = parse_system(WORKED_BASIS)
    assert list(worked_basis) == expected
    assert worked_basis.leading_monomials == [(2, 0), (1, 2), (0, 4)]
    assert is_groebner(worked_basis)
    polys, _ = worked_system
    assert not is_groebner(polys)
    for f in polys:
        assert worked_basis.contains(f)


def test_interreduce_is_idempotent(worked_basis):
    """Test that interreducing a reduced basis changes nothing."""
    assert interreduce(worked_basis) == list(worked_basis)


def test_buchberger_resource_limit(worked_system):
    """Test that the pair limit is enforced."""
    polys, _ = worked_system
    with pytest.raises(ResourceLimit):
        buchberger(polys, DRL, SolverConfig(max_pairs=1))


def test_buchberger_retires_divisible_leads(xy):
    """Test that elements whose lead is divisible by a newer one drop out."""
    x, y = xy
    basis = buchberger([x**2 - 1, x**3 - x, y - x])
    assert list(basis) == [x - y, y**2 - 1]
    assert is_groebner(basis)


def test_buchberger_rational_input(xy):
    """Test that rational inputs give the monic reduced basis."""
    x, y = xy
    basis = buchberger([Fraction(1, 3) * x + Fraction(1, 2) * y, 6 * y**2 - 4])
    assert list(basis) == [x + Fraction(3, 2) * y, y**2 - Fraction(2, 3)]


def test_buchberger_lex_cyclic():
    """Test the Lex basis of the cyclic 3-roots system."""
    x, y, z = poly_variables(3)
    polys = [x + y + z, x * y + y * z + z * x, x * y * z - 1]
    basis = buchberger(polys, LEX)
    assert list(basis) == [z**3 - 1, y**2 + y * z + z**2, x + y + z]
    assert is_groebner(basis, LEX)
    for f in polys:
        assert basis.contains(f)


def test_interreduce_rational_input(xy):
    """Test that interreduce clears tails and normalises to monic form."""
    x, y = xy
    reduced = interreduce([2 * x**3 + 4 * y, 3 * y - 3])
    assert reduced == [y - 1, x**3 + 2]


def test_buchberger_zero_input(xy):
    """Test that zero input is rejected."""
    with pytest.raises(ZeroPolynomial):
        buchberger([xy[0], MultiPoly.constant(0, 2)])


def test_standard_monomials(worked_basis):
    """Test that B = {1, x, y, xy, y^2, y^3} in this order."""
    quotient = standard_monomials(worked_basis)
    assert quotient.monomials == ((0, 0), (1, 0), (0, 1), (1, 1), (0, 2), (0, 3))


def test_standard_monomials_not_zero_dimensional(xy):
    """Test that x*y = 0 has infinitely many solutions."""
    x, y = xy
    basis = buchberger([x * y])
    with pytest.raises(NotZeroDimensional):
        standard_monomials(basis)


def test_mult_matrix(worked_basis):
    """Test m_x of the worked example and m_x m_y = m_xy."""
    quotient = standard_monomials(worked_basis)
    x, y = poly_variables(2)
    m_x = mult_matrix(x, worked_basis, quotient)
    m_y = mult_matrix(y, worked_basis, quotient)
    assert [[int(c) for c in row] for row in m_x.matrix] == WORKED_MX
    assert (m_x @ m_y).matrix == (m_y @ m_x).matrix
    assert (m_x @ m_y).matrix == mult_matrix(x * y, worked_basis, quotient).matrix
    assert np.allclose(m_x.to_numpy(), WORKED_MX)


def test_solve_worked_example(worked_system, solver_config):
    """Test that all six solutions are found and satisfy the system."""
    polys, _ = worked_system
    solutions = solve_zero_dim(polys, solver_config)
    assert len(solutions) == 6
    for point in solutions:
        assert max(abs(p.evaluate(point)) for p in polys) < 1e-10
    by_lex = solve_lex(polys, solver_config)
    assert len(by_lex) == 6
    for point in by_lex:
        assert min(np.max(np.abs(point - other)) for other in solutions) < 1e-8


def test_solution_coordinates_are_eigenvalues(worked_system, worked_basis, solver_config):
    """Test that each solution coordinate is an eigenvalue of m_{x_i}."""
    polys, _ = worked_system
    quotient = standard_monomials(worked_basis)
    spectra = [
        np.linalg.eigvals(mult_matrix(var, worked_basis, quotient).to_numpy())
        for var in poly_variables(2)
    ]
    for point in solve_zero_dim(polys, solver_config):
        for coordinate, spectrum in zip(point, spectra):
            assert np.min(np.abs(spectrum - coordinate)) < 1e-6


def test_solve_circle_line(solver_config):
    """Test the intersection of the unit circle with a = b."""
    polys, names = parse_system(DATA.joinpath('circle_line.txt').read_text())
    assert names == ["a", "b"]
    solutions = solve_zero_dim(polys, solver_config)
    values = sorted(point[0].real for point in solutions)
    assert values == pytest.approx([-2**-0.5, 2**-0.5])
    for point in solutions:
        assert point[0] == pytest.approx(point[1])


def test_solve_inconsistent(xy, solver_config):
    """Test that an inconsistent system has no solutions."""
    x, _ = xy
    assert solve_zero_dim([x, x - 1], solver_config) == []


def test_solve_fixed_separating_element(worked_system):
    """Test that a fixed separating element is used first."""
    polys, _ = worked_system
    config = SolverConfig(seed=1, separating_element=(2, 7))
    assert len(solve_zero_dim(polys, config)) == 6


def test_solve_degenerate_separating_element(mocker, worked_system):
    """Test that SolverDegeneracy is raised when no element separates."""
    polys, _ = worked_system
    mocker.patch('prtrack.polysolve._eigen_readout', return_value=None)
    with pytest.raises(SolverDegeneracy):
        solve_zero_dim(polys, SolverConfig(separating_retries=2))


def test_newton_polish(xy):
    """Test that Newton steps converge to a simple root."""
    x, y = xy
    polys = [x**2 + y**2 - 1, x - y]
    point, residual = newton_polish(polys, [0.8, 0.6])
    assert residual < 1e-12
    assert point[0].real == pytest.approx(2**-0.5)


def test_parse_and_format(worked_basis):
    """Test that format_system output parses back to the same polynomials."""
    text = format_system(list(worked_basis), ["x", "y"])
    assert text.startswith("# vars: x y\n")
    parsed, names = parse_system(text)
    assert names == ["x", "y"]
    assert parsed == list(worked_basis)


def test_parse_rational_coefficients():
    """Test coefficients written as fractions."""
    polys, names = parse_system("-(3/4)*a^2*b + 2*b - 1/2")
    assert names == ["a", "b"]
    assert polys[0].terms == {
        (2, 1): Fraction(-3, 4),
        (0, 1): Fraction(2),
        (0, 0): Fraction(-1, 2),
    }


@pytest.mark.parametrize(
    "text",
    (
        "",
        "# only a comment",
        "x^2 + * y",
        "# vars: x\nx + z",
        "x + 2..5",
    ),
)
def test_parse_errors(text):
    """Test that malformed systems raise PolynomialParseError."""
    with pytest.raises(PolynomialParseError):
        parse_system(text)
