import numpy as np
import pytest

from tendist import (
    DenseTensor,
    TensorVar,
    build_statement,
    format_statement,
    parse_statement,
    sequential_evaluate,
)
from tendist.errors import ExtentMismatch, MissingInput, TendistError
from tendist.ir import Access, Add, Const, Mul


def t(dims, values):
    return DenseTensor(dims, np.array(values, dtype=float))


def test_parse_gemm_classification():
    stmt = parse_statement("C(i, j) = A(i, k) * B(k, j)", {"i": 2, "j": 3, "k": 4})
    assert stmt.free_vars == ("i", "j")
    assert stmt.reduction_vars == ("k",)
    assert stmt.var_order == ("i", "j", "k")
    assert stmt.mode == "sum-reduce"
    assert stmt.tensors()["A"].dims == (2, 4)
    assert stmt.tensors()["B"].dims == (4, 3)
    assert stmt.tensors()["C"].dims == (2, 3)


def test_parse_assign_mode():
    stmt = parse_statement("D(i, j) = A(i, j) + B(i, j)", {"i": 2, "j": 2})
    assert stmt.mode == "assign"
    assert stmt.reduction_vars == ()


def test_reduction_vars_follow_rhs_appearance():
    stmt = parse_statement("A(i, j) = B(i, k, l) * C(k, j) * D(l, j)",
                           {"i": 2, "j": 2, "k": 3, "l": 4})
    assert stmt.reduction_vars == ("k", "l")


def test_precedence_mul_binds_tighter():
    stmt = parse_statement("D(i) = A(i) + B(i) * C(i)", {"i": 2})
    assert isinstance(stmt.rhs, Add)
    assert isinstance(stmt.rhs.rhs, Mul)
    out = sequential_evaluate(stmt, {
        "A": t((2,), [1, 2]), "B": t((2,), [3, 4]), "C": t((2,), [5, 6])})
    assert out.data.tolist() == [16.0, 26.0]


def test_parens_override_precedence():
    stmt = parse_statement("D(i) = (A(i) + B(i)) * C(i)", {"i": 2})
    out = sequential_evaluate(stmt, {
        "A": t((2,), [1, 2]), "B": t((2,), [3, 4]), "C": t((2,), [5, 6])})
    assert out.data.tolist() == [20.0, 36.0]


def test_constants_in_rhs():
    stmt = parse_statement("D(i) = A(i) * 2 + 1", {"i": 3})
    out = sequential_evaluate(stmt, {"A": t((3,), [0, 1, 2])})
    assert out.data.tolist() == [1.0, 3.0, 5.0]


def test_gemm_known_values():
    stmt = parse_statement("C(i, j) = A(i, k) * B(k, j)", {"i": 2, "j": 2, "k": 2})
    out = sequential_evaluate(stmt, {
        "A": t((2, 2), [[1, 2], [3, 4]]),
        "B": t((2, 2), [[5, 6], [7, 8]]),
    })
    assert out.data.tolist() == [[19.0, 22.0], [43.0, 50.0]]


def test_ttv_known_values():
    stmt = parse_statement("A(i, j) = B(i, j, k) * c(k)", {"i": 2, "j": 2, "k": 2})
    out = sequential_evaluate(stmt, {
        "B": t((2, 2, 2), np.arange(8).reshape(2, 2, 2)),
        "c": t((2,), [1, 2]),
    })
    assert out.data.tolist() == [[2.0, 8.0], [14.0, 20.0]]


def test_scalar_output_innerprod():
    stmt = parse_statement("a = A(i, j) * B(i, j)", {"i": 2, "j": 2})
    assert stmt.free_vars == ()
    assert stmt.reduction_vars == ("i", "j")
    out = sequential_evaluate(stmt, {
        "A": t((2, 2), [[1, 2], [3, 4]]),
        "B": t((2, 2), [[5, 6], [7, 8]]),
    })
    assert out.dims == ()
    assert out[()] == 70.0


def test_reduction_accumulates_in_ascending_order():
    # 1e16 + (-1e16) + 1.5 is 1.5 only when summed left to right;
    # any other order collapses the 1.5 into the big term first
    stmt = parse_statement("a = c(k) * o(k)", {"k": 3})
    out = sequential_evaluate(stmt, {
        "c": t((3,), [1e16, -1e16, 1.5]),
        "o": t((3,), [1, 1, 1]),
    })
    assert out[()] == 1.5


def test_matches_einsum_on_integer_inputs():
    rng = np.random.default_rng(5)
    a = rng.integers(-4, 5, size=(3, 4)).astype(float)
    b = rng.integers(-4, 5, size=(4, 5)).astype(float)
    stmt = parse_statement("C(i, j) = A(i, k) * B(k, j)", {"i": 3, "j": 5, "k": 4})
    out = sequential_evaluate(stmt, {"A": DenseTensor((3, 4), a), "B": DenseTensor((4, 5), b)})
    assert np.array_equal(out.data, np.einsum("ik,kj->ij", a, b))


def test_build_statement_with_operator_sugar():
    A = TensorVar("A", (2, 3))
    B = TensorVar("B", (3, 2))
    C = TensorVar("C", (2, 2))
    stmt = build_statement(C("i", "j"), A("i", "k") * B("k", "j"))
    assert stmt.extents == {"i": 2, "j": 2, "k": 3}
    assert format_statement(stmt) == "C(i, j) = A(i, k) * B(k, j)"


def test_format_statement_round_trips():
    text = "D(i) = (A(i) + B(i)) * C(i) + 2"
    stmt = parse_statement(text, {"i": 2})
    # formatting re-parses to the same statement
    again = parse_statement(format_statement(stmt), {"i": 2})
    ins = {"A": t((2,), [1, 2]), "B": t((2,), [3, 4]), "C": t((2,), [5, 6])}
    assert sequential_evaluate(stmt, ins) == sequential_evaluate(again, ins)


def test_extent_conflict_rejected():
    # A is used with dims (2, 3) and (3, 2)
    with pytest.raises(ExtentMismatch):
        parse_statement("C(i, j) = A(i, j) * A(j, i)", {"i": 2, "j": 3})
    # same variable bound to two different extents by one tensor
    B = TensorVar("B", (2, 3))
    C = TensorVar("C", (2, 2))
    with pytest.raises(ExtentMismatch):
        build_statement(C("i", "j"), B("i", "i"))


def test_missing_extent_rejected():
    with pytest.raises(ExtentMismatch):
        parse_statement("C(i, j) = A(i, k) * B(k, j)", {"i": 2, "j": 3})


def test_parse_garbage_rejected():
    with pytest.raises(TendistError):
        parse_statement("C(i, j) = A(i, k) ? B(k, j)", {"i": 2, "j": 2, "k": 2})
    with pytest.raises(TendistError):
        parse_statement("C(i, j) = A(i, k) * B(k, j) extra", {"i": 2, "j": 2, "k": 2})


def test_missing_input_rejected():
    stmt = parse_statement("C(i, j) = A(i, k) * B(k, j)", {"i": 2, "j": 2, "k": 2})
    with pytest.raises(MissingInput):
        sequential_evaluate(stmt, {"A": t((2, 2), [[1, 2], [3, 4]])})


def test_wrong_input_dims_rejected():
    stmt = parse_statement("C(i, j) = A(i, k) * B(k, j)", {"i": 2, "j": 2, "k": 2})
    with pytest.raises(ExtentMismatch):
        sequential_evaluate(stmt, {
            "A": t((2, 3), [[1, 2, 3], [4, 5, 6]]),
            "B": t((2, 2), [[1, 2], [3, 4]]),
        })
