import numpy as np
import pytest

from tnneig import densela, forms, metrics, quadrature, reference, tnn


def sin_pair(n):
    return (lambda x, n=n: np.sin(n * np.pi * x),
            lambda x, n=n: n * np.pi * np.cos(n * np.pi * x))


def rank_one(pairs):
    return metrics.from_callables([[p] for p in pairs])


class TestEigenvalueErrors:
    def test_exact_match(self):
        assert np.all(metrics.eigenvalue_errors([1.0, 2.0], [1.0, 2.0]) == 0.0)

    def test_simple_relative(self):
        assert metrics.eigenvalue_errors([1.1], [1.0])[0] == pytest.approx(0.1)

    def test_zero_exact_rejected(self):
        with pytest.raises(ValueError):
            metrics.eigenvalue_errors([1.0], [0.0])

    def test_length_mismatch_rejected(self):
        with pytest.raises(ValueError):
            metrics.eigenvalue_errors([1.0, 2.0], [1.0])


class TestProjectionErrors:
    def setup_method(self):
        self.rule = quadrature.composite_legendre(0.0, 1.0, 16, 12)

    def test_member_of_span_gives_zero(self):
        u = rank_one([sin_pair(1)])
        basis = [rank_one([sin_pair(1)]), rank_one([sin_pair(2)])]
        el2, eh1 = metrics.projection_errors(u, basis, [self.rule])
        assert el2 <= 1e-12 and eh1 <= 1e-12

    def test_orthogonal_function_gives_one(self):
        u = rank_one([sin_pair(3)])
        basis = [rank_one([sin_pair(1)]), rank_one([sin_pair(2)])]
        el2, eh1 = metrics.projection_errors(u, basis, [self.rule])
        assert abs(el2 - 1.0) <= 1e-10 and abs(eh1 - 1.0) <= 1e-10

    def test_partial_projection_closed_form(self):
        # u = (sin1 + sin2)/sqrt(2) against span{sin1}: err_L2 = 1/sqrt(2)
        u = metrics.from_callables([[sin_pair(1), sin_pair(2)]],
                                   coeffs=[1.0, 1.0])
        basis = [rank_one([sin_pair(1)])]
        el2, eh1 = metrics.projection_errors(u, basis, [self.rule])
        assert el2 == pytest.approx(1.0 / np.sqrt(2.0), abs=1e-10)
        # H1 seminorm weights sin2 four times as much: err = sqrt(4/5)
        assert eh1 == pytest.approx(np.sqrt(4.0 / 5.0), abs=1e-10)

    def test_scale_invariance(self):
        u = rank_one([sin_pair(2)])
        basis = [rank_one([sin_pair(1)]), rank_one([sin_pair(2)])]
        base = metrics.projection_errors(u, basis, [self.rule])
        scaled_basis = [metrics.SeparableFunction(10.0 * b.coeffs, b.factors, b.d)
                        for b in basis]
        scaled = metrics.projection_errors(u, scaled_basis, [self.rule])
        assert abs(base[0] - scaled[0]) <= 1e-12
        assert abs(base[1] - scaled[1]) <= 1e-12

    def test_projection_optimality(self):
        # perturbing the least-squares coefficients never lowers the error
        u = metrics.from_callables([[sin_pair(1), sin_pair(3)]],
                                   coeffs=[1.0, 0.5])
        basis = [rank_one([sin_pair(1)]), rank_one([sin_pair(2)])]
        rule = self.rule
        fns = [u] + basis
        l2, _ = metrics._inner_products(fns, [rule])
        gram = l2[1:, 1:]
        cross = l2[0, 1:]
        uu = l2[0, 0]
        coeff = densela.cho_solve(densela.cholesky(gram), cross)
        best = uu - 2 * coeff @ cross + coeff @ gram @ coeff
        rng = np.random.default_rng(0)
        for _ in range(20):
            delta = 1e-3 * rng.standard_normal(2)
            trial = coeff + delta
            value = uu - 2 * trial @ cross + trial @ gram @ trial
            assert value >= best - 1e-12

    def test_singular_eigenspace_reported(self):
        u = rank_one([sin_pair(2)])
        basis = [rank_one([sin_pair(1)]), rank_one([sin_pair(1)])]
        with pytest.raises(metrics.SingularEigenspaceError):
            metrics.projection_errors(u, basis, [self.rule])

    def test_empty_eigenspace_rejected(self):
        with pytest.raises(ValueError):
            metrics.projection_errors(rank_one([sin_pair(1)]), [], [self.rule])


class TestRotatedProjection:
    def test_identity_rotation_matches_separable_path(self):
        ref = reference.oscillator_states(np.eye(2), 3)
        rules = [quadrature.composite_legendre(-10.0, 10.0, 48, 10)] * 2
        state = ref.states[0]
        u = metrics.from_callables([[state.factors[0]], [state.factors[1]]])
        basis = [
            metrics.from_callables([[ref.states[i].factors[0]],
                                    [ref.states[i].factors[1]]])
            for i in (0, 1)
        ]
        sep = metrics.projection_errors(u, basis, rules)
        rot = metrics.projection_errors_rotated(state.factors, ref.rotation,
                                                basis, rules)
        assert abs(sep[0] - rot[0]) <= 1e-9
        assert abs(sep[1] - rot[1]) <= 1e-9

    def test_rotated_state_against_unrotated_basis(self):
        from tnneig.config import COUPLED_2D_MATRIX
        ref = reference.oscillator_states(COUPLED_2D_MATRIX, 2)
        rules = [quadrature.composite_legendre(-10.0, 10.0, 48, 10)] * 2
        state = ref.states[0]
        # the basis function is f0(x0) f1(x1) without the rotation, close to
        # but not equal to the rotated exact state
        errs = metrics.projection_errors_rotated(
            state.factors, ref.rotation,
            [metrics.from_callables([[state.factors[0]], [state.factors[1]]])],
            rules)
        assert 0.0 < errs[0] < 1.0
        assert 0.0 < errs[1] < 1.0


class TestModelProjectionErrors:
    def test_tnn_eigenspace_against_itself(self):
        # build a tiny model, use its own combination as the "exact" state
        specs = [tnn.bounded_natural(0.0, 1.0, 8, 10)] * 2
        model = tnn.init_model(specs, k=2, p=2, depth=1, width=4, seed=3)
        rules = metrics.metric_rules(specs)
        y = np.eye(2)
        fn = metrics.from_model(model, y[:, 0])
        errs = metrics.projection_errors(
            fn, [metrics.from_model(model, y[:, t]) for t in range(2)], rules)
        assert errs[0] <= 1e-10 and errs[1] <= 1e-10

    def test_grouped_errors_match_generic_path(self):
        specs = [tnn.whole_line(32)] * 2
        model = tnn.init_model(specs, k=3, p=3, depth=1, width=5, seed=8)
        ref = reference.oscillator_states(np.eye(2), 3)
        rules = metrics.metric_rules(specs)
        y = np.eye(3)
        groups = ref.degenerate_groups()
        factors = [s.factors for s in ref.states]
        got = metrics.model_projection_errors(model, y, groups, factors, rules)
        flat_index = 0
        for group in groups:
            basis = [metrics.from_model(model, y[:, t]) for t in group]
            for t in group:
                u = metrics.from_callables([[factors[t][0]], [factors[t][1]]])
                expect = metrics.projection_errors(u, basis, rules)
                assert got[flat_index][0] == pytest.approx(expect[0], abs=1e-9)
                assert got[flat_index][1] == pytest.approx(expect[1], abs=1e-9)
                flat_index += 1
