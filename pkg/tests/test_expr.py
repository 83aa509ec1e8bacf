import numpy as np
import pytest
from hypothesis import given, strategies as st

from feedbacksim.expr import ExprError, evaluate_expr, format_expr, parse_expr
from feedbacksim.operators import SpaceSignature, build_generator, fock_pair


def test_squeezing_form_interior():
    sp = fock_pair(3)
    H = evaluate_expr("x_1*x_2 - y_1*y_2", sp)
    a1, a2 = build_generator(sp, "1", "a"), build_generator(sp, "2", "a")
    ref = 0.5 * (a1 @ a2 + a1.dag() @ a2.dag())
    assert H.is_hermitian()
    assert np.allclose(H.interior(), ref.interior(), atol=1e-14)


def test_identity_and_dag():
    sp = fock_pair(4)
    assert np.allclose(evaluate_expr("id", sp).mat, np.eye(16))
    assert np.allclose(evaluate_expr("dag(a_1)", sp).mat, build_generator(sp, "1", "adag").mat)


def test_complex_literals_and_params():
    sp = SpaceSignature.of(("q", "qubit"))
    sx, sy = build_generator(sp, "q", "sx"), build_generator(sp, "q", "sy")
    M = evaluate_expr("(sx_q - i*sy_q)/2", sp)
    # sx - i sy = [[0, 0], [2, 0]]
    assert np.allclose(M.mat, np.array([[0, 0], [1, 0]]))
    M2 = evaluate_expr("2i*sx_q + k*sy_q", sp, {"k": 0.5})
    assert np.allclose(M2.mat, 2j * sx.mat + 0.5 * sy.mat)


def test_scalar_plus_operator_means_identity():
    sp = SpaceSignature.of(("c", "fock", 3))
    assert np.allclose(evaluate_expr("1 + n_c", sp).mat, np.diag([1, 2, 3]))


@pytest.mark.parametrize("text,col", [("x_1 +* 2", 6), ("(x_1", 5), ("x_1 $ 2", 5)])
def test_syntax_errors_have_columns(text, col):
    with pytest.raises(ExprError) as e:
        parse_expr(text)
    assert e.value.pos + 1 == col


def test_semantic_errors():
    sp = fock_pair(3)
    with pytest.raises(ExprError):
        evaluate_expr("x_9", sp)
    with pytest.raises(ExprError):
        evaluate_expr("kappa*x_1", sp)
    with pytest.raises(ExprError):
        evaluate_expr("x_1/x_2", sp)
    with pytest.raises(ExprError):
        evaluate_expr("sz_1", sp)


_atoms = st.sampled_from(["a_1", "adag_2", "x_1", "y_2", "n_1", "id", "2", "0.5i", "k"])


@st.composite
def exprs(draw, depth=3):
    if depth == 0 or draw(st.booleans()):
        return draw(_atoms)
    op = draw(st.sampled_from(["+", "-", "*", "dag", "neg"]))
    if op == "dag":
        return f"dag({draw(exprs(depth - 1))})"
    if op == "neg":
        return f"-({draw(exprs(depth - 1))})"
    return f"({draw(exprs(depth - 1))} {op} {draw(exprs(depth - 1))})"


@given(exprs())
def test_format_roundtrip(text):
    sp = fock_pair(3)
    p = {"k": 0.3}
    once = evaluate_expr(text, sp, p)
    again = evaluate_expr(format_expr(parse_expr(text)), sp, p)
    assert np.allclose(once.mat, again.mat)


@given(exprs())
def test_adjoint_is_conjugate_transpose(text):
    sp = fock_pair(3)
    p = {"k": 0.3}
    A = evaluate_expr(text, sp, p)
    assert np.allclose(evaluate_expr(f"dag({text})", sp, p).mat, A.mat.conj().T)
