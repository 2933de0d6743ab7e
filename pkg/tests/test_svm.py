import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from scenecensor.errors import DimensionError, TrainingError
from scenecensor.media import Label
from scenecensor.svm import (
    KernelSpec, SvmModel, TrainConfig, bias_from_alpha, dual_objective, kkt_violation, oracle_model,
    project_dual, qp_oracle, smo_solve, train_smo,
)

PAIR_X = np.array([[-1.0], [1.0]])
PAIR_Y = np.array([-1.0, 1.0])
XOR_X = np.array([[0.0, 0.0], [1.0, 1.0], [0.0, 1.0], [1.0, 0.0]])
XOR_Y = np.array([-1.0, -1.0, 1.0, 1.0])


def test_symmetric_pair():
    model = train_smo(PAIR_X, PAIR_Y, TrainConfig(C=10), KernelSpec("linear"))
    assert model.bias == pytest.approx(0.0, abs=1e-12)
    assert model.decision(np.array([-1.0])) == pytest.approx(-1.0, abs=1e-12)
    assert model.decision(np.array([1.0])) == pytest.approx(1.0, abs=1e-12)
    assert model.decision(np.array([0.0])) == pytest.approx(0.0, abs=1e-12)


def test_symmetric_pair_oracle_is_analytic():
    # W(a) = 2a - 2a^2 with a1 = a2 = a, maximised at a = 1/2
    alpha = qp_oracle(PAIR_X, PAIR_Y, 1e6, KernelSpec("linear"))
    np.testing.assert_allclose(alpha, [0.5, 0.5], atol=1e-10)


def test_xor_rbf():
    model = train_smo(XOR_X, XOR_Y, TrainConfig(C=10), KernelSpec("rbf", 1.0))
    np.testing.assert_array_equal(model.predict(XOR_X), XOR_Y.astype(int))
    oracle = oracle_model(XOR_X, XOR_Y, 10, KernelSpec("rbf", 1.0))
    np.testing.assert_array_equal(oracle.predict(XOR_X), XOR_Y.astype(int))
    assert model.decision(np.array([0.5, 0.5])) == pytest.approx(oracle.decision(np.array([0.5, 0.5])), abs=1e-4)


def test_separable_linear_matches_oracle():
    rng = np.random.default_rng(4)
    X = rng.uniform(-1, 1, (40, 2))
    X = X[np.abs(X[:, 0] + 0.5 * X[:, 1]) > 0.15][:20]
    y = np.sign(X[:, 0] + 0.5 * X[:, 1])
    kernel = KernelSpec("linear")
    model = train_smo(X, y, TrainConfig(C=1000, tol=1e-6), kernel)
    oracle = oracle_model(X, y, 1000, kernel)
    np.testing.assert_allclose(model.decision(X), oracle.decision(X), atol=1e-4)
    np.testing.assert_array_equal(model.predict(X), y.astype(int))


def test_small_c_clips_every_alpha():
    rng = np.random.default_rng(1)
    X = rng.standard_normal((10, 2))
    y = np.array([1.0, -1.0] * 5)
    X[y > 0] += 0.05  # overlapping classes
    C = 1e-3
    alpha = qp_oracle(X, y, C, KernelSpec("linear"))
    np.testing.assert_allclose(alpha, C, rtol=1e-9)
    result = smo_solve(X, y, TrainConfig(C=C), KernelSpec("linear"))
    np.testing.assert_allclose(result.alpha, C, rtol=1e-9)


def test_model_invariants_and_margin():
    rng = np.random.default_rng(2)
    X = rng.standard_normal((60, 3))
    y = np.where(X[:, 0] + 0.3 * rng.standard_normal(60) > 0, 1.0, -1.0)
    cfg = TrainConfig(C=2.0)
    model = train_smo(X, y, cfg, KernelSpec())
    assert np.all(np.abs(model.dual_coefs) > 0)
    assert np.all(np.abs(model.dual_coefs) <= cfg.C * (1 + 1e-12))
    assert abs(model.dual_coefs.sum()) < 1e-6
    free = np.abs(model.dual_coefs) < cfg.C * (1 - 1e-8)
    margins = np.abs(model.decision(model.support_vectors[free]))
    np.testing.assert_allclose(margins, 1.0, atol=cfg.tol)


def test_dual_objective_non_decreasing():
    rng = np.random.default_rng(3)
    X = rng.standard_normal((40, 2))
    y = np.where(X[:, 0] * X[:, 1] > 0, 1.0, -1.0)
    kernel = KernelSpec("rbf", 0.5)
    K = kernel(X, X)
    objectives = []
    smo_solve(X, y, TrainConfig(C=5), kernel, on_step=lambda alpha: objectives.append(dual_objective(alpha, y, K)))
    assert len(objectives) > 10
    assert np.all(np.diff(objectives) >= -1e-12)


def test_deterministic_for_fixed_seed():
    rng = np.random.default_rng(5)
    X, y = rng.standard_normal((50, 4)), np.where(rng.standard_normal(50) > 0, 1.0, -1.0)
    a = train_smo(X, y, TrainConfig(seed=9), KernelSpec())
    assert a == train_smo(X, y, TrainConfig(seed=9), KernelSpec())


def test_errors():
    with pytest.raises(TrainingError, match="degenerate labels"):
        train_smo(np.zeros((3, 2)), np.ones(3))
    with pytest.raises(TrainingError, match="invalid feature"):
        train_smo(np.array([[0.0], [np.inf]]), PAIR_Y)
    with pytest.raises(ValueError):
        TrainConfig(C=0)
    with pytest.raises(ValueError):
        KernelSpec("poly")
    model = train_smo(PAIR_X, PAIR_Y, TrainConfig(C=10), KernelSpec("linear"))
    with pytest.raises(DimensionError):
        model.decision(np.zeros(2))


def test_predict_tie_and_signs():
    model = SvmModel(KernelSpec("linear"), np.array([[1.0]]), np.array([1.0]), 0.0)
    assert model.predict(np.array([0.0])) is Label.INAPPROPRIATE
    assert model.predict(np.array([0.5])) is Label.INAPPROPRIATE
    assert model.predict(np.array([-0.5])) is Label.APPROPRIATE
    np.testing.assert_array_equal(model.predict(np.array([[-1.0], [0.0], [2.0]])), [-1, 1, 1])


def test_predict_invariant_under_positive_rescaling():
    rng = np.random.default_rng(6)
    X = rng.standard_normal((30, 2))
    y = np.where(X[:, 1] > 0, 1.0, -1.0)
    model = train_smo(X, y, TrainConfig(), KernelSpec())
    scaled = SvmModel(model.kernel, model.support_vectors, 3.7 * model.dual_coefs, 3.7 * model.bias, model.C)
    Z = rng.standard_normal((100, 2))
    np.testing.assert_array_equal(model.predict(Z), scaled.predict(Z))


def test_default_gamma_heuristic():
    X = np.array([[0.0, 2.0], [2.0, 0.0], [1.0, 1.0], [3.0, 3.0]])
    spec = KernelSpec().resolve(X)
    assert spec.gamma == pytest.approx(1 / (2 * X.var()))
    assert KernelSpec().resolve(np.ones((3, 2))).gamma == 1.0


def test_projection_feasible_and_optimal():
    rng = np.random.default_rng(7)
    for _ in range(50):
        n = int(rng.integers(2, 12))
        y = rng.choice([-1.0, 1.0], n)
        y[0], y[1] = 1.0, -1.0
        C = float(rng.uniform(0.1, 3))
        z = rng.normal(0, 2, n)
        p = project_dual(z, y, C)
        assert np.all(p >= 0) and np.all(p <= C)
        assert abs(p @ y) < 1e-9
        # no random feasible point is closer to z
        for _ in range(20):
            q = project_dual(p + 0.3 * rng.standard_normal(n), y, C)
            assert np.linalg.norm(z - p) <= np.linalg.norm(z - q) + 1e-9


@settings(max_examples=25, deadline=None)
@given(st.integers(4, 30), st.integers(1, 4), st.sampled_from(["linear", "rbf"]), st.floats(0.1, 100),
       st.integers(0, 2**32 - 1))
def test_smo_matches_oracle(n, d, kind, C, seed):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, d))
    y = np.where(X @ rng.standard_normal(d) + 0.5 * rng.standard_normal(n) > 0, 1.0, -1.0)
    y[0], y[1] = 1.0, -1.0
    kernel = KernelSpec(kind, None if kind == "linear" else float(rng.uniform(0.1, 2)))
    cfg = TrainConfig(C=C, tol=1e-8, seed=seed)
    result = smo_solve(X, y, cfg, kernel)
    alpha = qp_oracle(X, y, C, kernel)
    K = kernel(X, X)
    assert dual_objective(alpha, y, K) >= dual_objective(result.alpha, y, K) - 1e-8
    assert abs(dual_objective(alpha, y, K) - dual_objective(result.alpha, y, K)) < 1e-6
    assert kkt_violation(result.alpha, result.bias, y, K, C) <= cfg.tol
    model = train_smo(X, y, cfg, kernel)
    oracle = SvmModel(kernel, X, alpha * y, bias_from_alpha(alpha, y, K, C), C)
    Z = np.vstack([X, rng.standard_normal((10, d))])
    np.testing.assert_allclose(model.decision(Z), oracle.decision(Z), atol=1e-4)


def test_default_tolerance_kkt_holds():
    rng = np.random.default_rng(8)
    X = rng.standard_normal((120, 5))
    y = np.where(np.sin(X[:, 0]) + X[:, 1] ** 2 - 1 > 0, 1.0, -1.0)
    for kernel in (KernelSpec("linear"), KernelSpec("rbf")):
        cfg = TrainConfig(C=3.0)
        result = smo_solve(X, y, cfg, kernel)
        K = kernel.resolve(X)(X, X)
        assert result.converged
        assert kkt_violation(result.alpha, result.bias, y, K, cfg.C) <= cfg.tol


def test_row_cache_path_matches_full_gram(monkeypatch):
    import scenecensor.svm as svm

    rng = np.random.default_rng(9)
    X = rng.standard_normal((80, 3))
    y = np.where(X[:, 0] > 0, 1.0, -1.0)
    full = train_smo(X, y, TrainConfig(tol=1e-6), KernelSpec("rbf", 0.5))
    monkeypatch.setattr(svm, "FULL_GRAM_LIMIT", 10)
    cached = train_smo(X, y, TrainConfig(tol=1e-6), KernelSpec("rbf", 0.5))
    np.testing.assert_allclose(cached.decision(X), full.decision(X), atol=1e-5)
