"""LMI flattening, variable packing, and the conic solver bridge."""

import numpy as np
import pytest

from framersynth.sdp import (
    SOLVER_ENV_VAR,
    ConicProgram,
    LmiSpec,
    Var,
    solve_conic,
)


# -- variable packing --------------------------------------------------------


def test_scalar_var_round_trip():
    v = Var("t", "scalar", 1)
    assert v.size == 1
    assert v.unpack(v.pack(3.5)) == 3.5


def test_full_var_round_trip():
    v = Var("X", "full", 2, 3)
    M = np.arange(6.0).reshape(2, 3)
    np.testing.assert_array_equal(v.unpack(v.pack(M)), M)
    assert v.size == 6


def test_sym_var_round_trip():
    v = Var("S", "sym", 3)
    assert v.size == 6
    S = np.array([[1.0, 2.0, 3.0], [2.0, 4.0, 5.0], [3.0, 5.0, 6.0]])
    np.testing.assert_array_equal(v.unpack(v.pack(S)), S)


def test_replicated_var_round_trip():
    v = Var("Q", "sym", 2, replicas=3)
    assert (v.rows, v.cols) == (6, 6)
    block = np.array([[2.0, 0.5], [0.5, 1.0]])
    full = v.unpack(v.pack(np.kron(np.eye(3), block)))
    np.testing.assert_array_equal(full, np.kron(np.eye(3), block))
    # pack averages replicas when they disagree
    stack = np.kron(np.diag([1.0, 0.0, 0.0]), block) + np.kron(np.diag([0.0, 1.0, 1.0]), 3 * block)
    avg = v.unpack(v.pack(stack))
    np.testing.assert_allclose(avg, np.kron(np.eye(3), (block + 3 * block + 3 * block) / 3))


def test_entry_placements_match_unpack():
    """Each scalar unknown touches exactly the entries unpack says it does."""
    for v in (Var("S", "sym", 3), Var("X", "full", 2, 2), Var("Q", "sym", 2, replicas=2)):
        for k in range(v.size):
            e = np.zeros(v.size)
            e[k] = 1.0
            M = v.unpack(e)
            built = np.zeros((v.rows, v.cols))
            for (i, j, c) in v.entry_placements(k):
                built[i, j] += c
            np.testing.assert_array_equal(built, M)


def test_var_validation():
    with pytest.raises(ValueError):
        Var("x", "diag", 2)
    with pytest.raises(ValueError):
        Var("x", "full", 2)  # needs both dims


# -- LMI grids and flattening ------------------------------------------------


def _random_program(rng):
    prog = ConicProgram()
    prog.add_var(Var("mu", "scalar", 1))
    prog.add_var(Var("Q", "sym", 2))
    prog.add_var(Var("T", "full", 2, 3))
    lmi = LmiSpec("test", [2, 3], sense="nsd", margin=0.0)
    lmi.const(0, 0, rng.standard_normal((2, 2)))
    lmi.term(0, 0, "Q", coef=-1.0)
    lmi.scal(0, 0, "mu", np.eye(2))
    lmi.term(0, 1, "T", L=rng.standard_normal((2, 2)), R=rng.standard_normal((3, 3)))
    lmi.term(0, 1, "Q", R=rng.standard_normal((2, 3)), coef=0.5)
    lmi.term(1, 1, "T", L=rng.standard_normal((3, 2)), R=None, coef=-2.0)
    lmi.const(1, 1, np.eye(3))
    prog.add_lmi(lmi)
    return prog, lmi


def test_flatten_agrees_with_structural_evaluation():
    """The pencil lowering and the direct grid evaluation must coincide."""
    rng = np.random.default_rng(12)
    prog, lmi = _random_program(rng)
    F0, G = prog.flatten_lmi(lmi)
    for _ in range(10):
        x = rng.standard_normal(prog.num_scalars)
        vals = prog.values_from(x)
        F_pencil = (F0.reshape(-1) + G @ x).reshape(lmi.dim, lmi.dim)
        F_grid = lmi.evaluate(vals)
        np.testing.assert_allclose(F_pencil, F_grid, atol=1e-12)
    # off-diagonal term in a symmetric grid: flatten fills the mirror block,
    # evaluate does the same, so both sides above are already symmetric-free
    assert lmi.dim == 5


def test_flatten_nonsquare_offdiag_term():
    prog = ConicProgram()
    prog.add_var(Var("X", "full", 1, 2))
    lmi = LmiSpec("m", [1, 2], sense="nsd")
    lmi.term(0, 1, "X")
    lmi.const(0, 0, np.zeros((1, 1)))
    prog.add_lmi(lmi)
    F0, G = prog.flatten_lmi(lmi)
    x = np.array([2.0, -3.0])
    F = (F0.reshape(-1) + G @ x).reshape(3, 3)
    expected = np.array([
        [0.0, 2.0, -3.0],
        [2.0, 0.0, 0.0],
        [-3.0, 0.0, 0.0],
    ])
    np.testing.assert_array_equal(F, expected)


def test_margin_folds_into_constant():
    prog = ConicProgram()
    prog.add_var(Var("t", "scalar", 1))
    nsd = LmiSpec("a", [2], sense="nsd", margin=0.25)
    nsd.scal(0, 0, "t", np.eye(2))
    prog.add_lmi(nsd)
    F0, _ = prog.flatten_lmi(nsd)
    np.testing.assert_array_equal(F0, 0.25 * np.eye(2))
    psd = LmiSpec("b", [2], sense="psd", margin=0.25)
    psd.scal(0, 0, "t", np.eye(2))
    prog.add_lmi(psd)
    F0p, _ = prog.flatten_lmi(psd)
    np.testing.assert_array_equal(F0p, -0.25 * np.eye(2))


def test_residuals_ignore_margins():
    prog = ConicProgram()
    prog.add_var(Var("t", "scalar", 1))
    lmi = LmiSpec("a", [1], sense="nsd", margin=0.5)
    lmi.scal(0, 0, "t", np.eye(1))
    prog.add_lmi(lmi)
    res = prog.evaluate_residuals({"t": -0.2})
    # -0.2 satisfies the non-strict constraint, violates the margined one;
    # residuals report the non-strict reading
    assert res["a"] == pytest.approx(-0.2)


def test_block_position_validation():
    lmi = LmiSpec("a", [1, 1])
    with pytest.raises(ValueError):
        lmi.const(1, 0, np.zeros((1, 1)))  # lower triangle
    with pytest.raises(ValueError):
        lmi.const(0, 2, np.zeros((1, 1)))
    with pytest.raises(ValueError):
        LmiSpec("b", [1], sense="indef")


def test_program_bookkeeping():
    prog = ConicProgram()
    prog.add_var(Var("t", "scalar", 1))
    with pytest.raises(ValueError):
        prog.add_var(Var("t", "scalar", 1))
    prog.add_var(Var("X", "full", 2, 2))
    with pytest.raises(ValueError):
        prog.minimize("X")
    prog.minimize("t", weight=2.0)
    prog.minimize("t")
    np.testing.assert_array_equal(prog.cost_vector(), [3.0, 0, 0, 0, 0])


def test_pin_zero_equalities():
    prog = ConicProgram()
    prog.add_var(Var("t", "scalar", 1))
    prog.add_var(Var("X", "full", 2, 2))
    prog.pin_zero("X", [0, 3])
    A_eq, b_eq = prog.equality_matrix()
    assert A_eq.shape == (2, 5)
    np.testing.assert_array_equal(A_eq.toarray(), [[0, 1, 0, 0, 0], [0, 0, 0, 0, 1]])
    np.testing.assert_array_equal(b_eq, [0.0, 0.0])
    with pytest.raises(ValueError):
        prog.pin_zero("X", [4])


# -- solving -----------------------------------------------------------------


def _min_t_above(value):
    """minimize t subject to t >= value, as a 1x1 psd LMI."""
    prog = ConicProgram()
    prog.add_var(Var("t", "scalar", 1))
    prog.minimize("t")
    lmi = LmiSpec("floor", [1], sense="psd")
    lmi.scal(0, 0, "t", np.eye(1))
    lmi.const(0, 0, -value * np.eye(1))
    prog.add_lmi(lmi)
    return prog


def test_solve_tiny_bound():
    prog = _min_t_above(1.5)
    res = solve_conic(prog)
    assert res["status"] in ("optimal", "optimal_inaccurate")
    assert res["objective"] == pytest.approx(1.5, abs=1e-6)
    vals = prog.values_from(res["x"])
    assert vals["t"] == pytest.approx(1.5, abs=1e-6)


def test_solve_matrix_bound():
    """minimize t with t I >= A: optimum is the top eigenvalue of A."""
    A = np.array([[2.0, 1.0], [1.0, 2.0]])  # eigenvalues 1 and 3
    prog = ConicProgram()
    prog.add_var(Var("t", "scalar", 1))
    prog.minimize("t")
    lmi = LmiSpec("dom", [2], sense="psd")
    lmi.scal(0, 0, "t", np.eye(2))
    lmi.const(0, 0, -A)
    prog.add_lmi(lmi)
    res = solve_conic(prog)
    assert res["status"] in ("optimal", "optimal_inaccurate")
    assert res["objective"] == pytest.approx(3.0, abs=1e-5)


def test_solve_infeasible():
    prog = ConicProgram()
    prog.add_var(Var("t", "scalar", 1))
    prog.minimize("t")
    up = LmiSpec("up", [1], sense="nsd")     # t + 1 <= 0  =>  t <= -1
    up.scal(0, 0, "t", np.eye(1))
    up.const(0, 0, np.eye(1))
    prog.add_lmi(up)
    dn = LmiSpec("dn", [1], sense="psd")     # t - 1 >= 0  =>  t >= 1
    dn.scal(0, 0, "t", np.eye(1))
    dn.const(0, 0, -np.eye(1))
    prog.add_lmi(dn)
    res = solve_conic(prog)
    assert res["status"] == "infeasible"


def test_solve_with_pinned_entries():
    """Pinning forces components of the unknown to zero through equalities."""
    prog = ConicProgram()
    prog.add_var(Var("t", "scalar", 1))
    prog.add_var(Var("x", "full", 1, 2))
    prog.minimize("t")
    # t >= 2 - x_0 - x_1 with x_1 pinned to zero and x_0 <= 0.5 each
    lmi = LmiSpec("f", [1], sense="psd")
    lmi.scal(0, 0, "t", np.eye(1))
    lmi.term(0, 0, "x", L=None, R=np.array([[1.0], [1.0]]))
    lmi.const(0, 0, -2.0 * np.eye(1))
    prog.add_lmi(lmi)
    cap = LmiSpec("cap", [1], sense="nsd")
    cap.term(0, 0, "x", R=np.array([[1.0], [0.0]]))
    cap.const(0, 0, -0.5 * np.eye(1))
    prog.add_lmi(cap)
    prog.pin_zero("x", [1])
    res = solve_conic(prog)
    assert res["status"] in ("optimal", "optimal_inaccurate")
    vals = prog.values_from(res["x"])
    assert abs(vals["x"][0, 1]) <= 1e-7
    assert res["objective"] == pytest.approx(1.5, abs=1e-5)


def test_solver_env_override(monkeypatch):
    monkeypatch.setenv(SOLVER_ENV_VAR, "SCS")
    res = solve_conic(_min_t_above(0.5))
    assert res["solver"] == "SCS"
    assert res["objective"] == pytest.approx(0.5, abs=1e-5)


def test_solver_argument_beats_env(monkeypatch):
    monkeypatch.setenv(SOLVER_ENV_VAR, "SCS")
    res = solve_conic(_min_t_above(0.5), solver="CLARABEL")
    assert res["solver"] == "CLARABEL"


def test_unknown_solver_reports_numeric_error(monkeypatch):
    monkeypatch.setenv(SOLVER_ENV_VAR, "NOSUCHSOLVER")
    res = solve_conic(_min_t_above(0.5))
    assert res["status"] == "numeric_error"
