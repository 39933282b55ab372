import numpy as np
import pytest

from m2vsl import gradcheck as G
from m2vsl import tensor as T
from m2vsl.errors import UsageError


def test_fresh_build_passes_every_suite():
    report = G.gradcheck()
    assert [s.name for s in report.suites] == list(G.SUITES)
    assert report.passed, report.lines()
    assert all(s.max_rel_err <= 1e-4 for s in report.suites)
    assert set(report.to_dict()) >= {f"{n}.max_rel_err" for n in G.SUITES}


def test_corrupted_matmul_backward_is_caught(monkeypatch):
    real = T.matmul

    def bad_matmul(a, b):
        out = real(a, b)
        back = out._backward
        out._backward = lambda g: tuple(x * 1.01 if x is not None else None for x in back(g))
        return out

    monkeypatch.setattr(T, "matmul", bad_matmul)
    report = G.gradcheck(suites=("tensor_ops", "full_graph"))
    assert not report.passed
    assert "matmul" in report.suites[0].failing()


def test_exact_tie_is_skipped_not_failed():
    res = G.check_case("tie", lambda v: T.max_over_locations(v["a"])[0], {"a": np.full((2, 2), 0.5)})
    assert res.skipped == 4 and res.checked == 0


def test_unknown_suite():
    with pytest.raises(UsageError):
        G.run_suite("nope")
