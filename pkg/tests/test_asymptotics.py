import numpy as np
import pytest

from charwave.asymptotics import (
    AsymptoticScale,
    Observable,
    Problem,
    SweepError,
    SweepRecord,
    classify,
    classify_series,
    geometric_eps,
    seminorm,
    sweep,
)
from charwave.curves import RegularizedCurve, build_frame
from charwave.goursat import GridField, SourceTerm, make_grid
from charwave.initialdata import InitialData

EPS = geometric_eps(0.5, 0.5, 8)
K = ((-1.0, 1.0), (-1.0, 1.0))


def _field(fn, eps=0.2, n=201):
    c = RegularizedCurve.from_text("x")
    fr = build_frame(c, 2, 2, eps)
    xs, ys = make_grid(fr, n, n)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    return GridField(fr, xs, ys, fn(X, Y), eps)


def test_seminorm_zero_field():
    f = _field(lambda X, Y: 0 * X)
    assert all(seminorm(f, K, l) == 0 for l in range(5))


def test_seminorm_linear_field():
    e = 0.2
    f = _field(lambda X, Y: Y - e * X, eps=e)
    assert seminorm(f, K, 0) == pytest.approx(1 + e, abs=1e-12)
    assert seminorm(f, K, 1) == pytest.approx(1 + e, abs=1e-12)


def test_seminorm_quadratic_field():
    f = _field(lambda X, Y: X**2)
    assert seminorm(f, K, 2) == pytest.approx(2.0, abs=1e-9)


def test_seminorm_order_limits():
    f = _field(lambda X, Y: X)
    with pytest.raises(ValueError):
        seminorm(f, K, 5)


def test_classify_zero_is_negligible():
    assert classify_series(EPS, np.zeros(len(EPS))).klass == "negligible"


def test_classify_inverse_eps():
    v = classify_series(EPS, 1 / np.asarray(EPS))
    assert str(v) == "moderate(1)"
    assert v.fitted_slope == pytest.approx(-1.0, abs=1e-12)


def test_classify_eps4_is_negligible():
    v = classify_series(EPS, np.asarray(EPS) ** 4, q_threshold=3)
    assert v.klass == "negligible"
    assert v.fitted_slope == pytest.approx(4.0, abs=1e-12)


def test_classify_constant_is_bounded_moderate():
    assert str(classify_series(EPS, np.full(len(EPS), 3.0))) == "moderate(0)"


def test_classify_exponential_blowup_is_indeterminate():
    v = classify_series(EPS, np.exp(1 / np.asarray(EPS)))
    assert v.klass == "indeterminate"


def test_classify_with_log_generator():
    eps = np.asarray(EPS)
    scale = AsymptoticScale.default(EPS)
    v = classify_series(EPS, np.abs(np.log(eps)) / eps, scale)
    assert v.klass == "moderate"


def test_geometric_eps_validation():
    assert geometric_eps(0.5, 0.5, 4) == (0.5, 0.25, 0.125, 0.0625)
    with pytest.raises(SweepError):
        geometric_eps(0.5, 1.5, 4)
    with pytest.raises(SweepError):
        geometric_eps(0.5, 0.5, 2)


def test_record_rejects_non_geometric_eps():
    with pytest.raises(SweepError):
        SweepRecord((0.5, 0.3, 0.1, 0.01), {})


def test_sweep_zero_problem_gives_zero_seminorms():
    pb = Problem(InitialData.from_text("0", "0"), SourceTerm.from_text("0"),
                 RegularizedCurve.from_text("x^3 + eps*x"), grid=(33, 33))
    rec = sweep(pb, 0.5, 0.5, 5, [Observable("u", K, "K", l) for l in (0, 1)])
    for key in rec.values:
        assert np.all(rec.series(key) == 0)
        assert classify(rec, key).klass == "negligible"


def test_sweep_example1_is_bounded():
    pb = Problem(InitialData.from_text("x^2", "1"), SourceTerm.from_text("0"),
                 RegularizedCurve.from_text("x^3 + eps*x"), grid=(65, 65))
    ob = Observable("u", K, "K", 0)
    rec = sweep(pb, 0.5, 0.5, 6, [ob])
    v = classify(rec, ob.key)
    assert str(v) == "moderate(0)" and v.fitted_slope >= -0.1


def test_sweep_record_csv_round_trip(tmp_path):
    pb = Problem(InitialData.from_text("x^2", "1"), SourceTerm.from_text("0"),
                 RegularizedCurve.from_text("x^3 + eps*x"), grid=(33, 33))
    rec = sweep(pb, 0.5, 0.5, 4, [Observable("u", K, "K", 0), Observable("u", K, "K", 1)])
    p = tmp_path / "s.csv"
    rec.to_csv(p)
    back = SweepRecord.from_csv(p)
    assert back.eps_list == rec.eps_list
    for key in rec.values:
        assert np.array_equal(back.series(key), rec.series(key))


def test_sweep_without_observables_fails():
    pb = Problem(InitialData.from_text("0", "0"), SourceTerm.from_text("0"),
                 RegularizedCurve.from_text("x"))
    with pytest.raises(SweepError):
        sweep(pb, 0.5, 0.5, 4, [])


def test_parallel_sweep_matches_serial():
    pb = Problem(InitialData.from_text("sin(x)", "cos(x)"), SourceTerm.from_text("0.5*sin(u)"),
                 RegularizedCurve.from_text("x^3 + eps*x"), grid=(33, 33))
    obs = [Observable("u", K, "K", 1)]
    a = sweep(pb, 0.5, 0.5, 4, obs, jobs=1)
    b = sweep(pb, 0.5, 0.5, 4, obs, jobs=2)
    assert np.array_equal(a.series(obs[0].key), b.series(obs[0].key))
