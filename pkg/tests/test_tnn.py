import numpy as np
import pytest

from tnneig import forms, tnn
from tnneig.errors import CheckpointError, DegenerateComponentError


def constant_model(spec, value=1.0):
    model = tnn.init_model([spec], k=1, p=1, depth=0, width=0, seed=0)
    model.subnets[0].weights[0][:] = 0.0
    model.subnets[0].biases[0][:] = value
    return model


def linear_model(spec):
    model = tnn.init_model([spec], k=1, p=1, depth=0, width=0, seed=0)
    model.subnets[0].weights[0][:] = 1.0
    model.subnets[0].biases[0][:] = 0.0
    return model


def mixed_specs():
    return [tnn.whole_line(20), tnn.periodic_angle(2 * np.pi, 6, 6),
            tnn.bounded_dirichlet(-1.0, 2.0, 4, 6)]


class TestComponentValues:
    def test_constant_on_unit_interval_is_unit_norm(self):
        model = constant_model(tnn.bounded_natural(0.0, 1.0, 4, 8))
        vals, derivs = tnn.component_values(model, 0, 0)
        assert np.max(np.abs(vals - 1.0)) < 1e-14
        assert np.max(np.abs(derivs)) < 1e-14

    def test_linear_on_unit_interval(self):
        model = linear_model(tnn.bounded_natural(0.0, 1.0, 4, 8))
        rule = model.specs[0].rule()
        vals, derivs = tnn.component_values(model, 0, 0)
        assert np.max(np.abs(vals - np.sqrt(3.0) * rule.nodes)) < 1e-13
        assert np.max(np.abs(derivs - np.sqrt(3.0))) < 1e-13

    def test_whole_line_gaussian_norm(self):
        model = constant_model(tnn.whole_line(40))
        norms = tnn.component_norms(model, 0)
        assert abs(norms[0, 0] - np.pi ** 0.25) < 1e-12
        x = np.linspace(-3, 3, 21)
        vals, derivs = tnn.component_values_at(model, 0, 0, x)
        expect = np.exp(-0.5 * x * x) / np.pi ** 0.25
        assert np.max(np.abs(vals[0] - expect)) < 1e-13
        assert np.max(np.abs(derivs[0] - (-x) * expect)) < 1e-13

    def test_normalized_components_have_unit_quadrature_norm(self):
        model = tnn.init_model(mixed_specs(), k=3, p=4, depth=2, width=6, seed=5)
        model.log_beta[0][:] = np.log([0.8, 1.1, 1.4])
        for dim, spec in enumerate(model.specs):
            rule = spec.rule()
            for ell in range(model.k):
                vals, _ = tnn.component_values(model, ell, dim)
                if spec.is_unbounded:
                    beta = float(model.beta(dim)[ell])
                    norm_sq = (vals ** 2 * rule.weights
                               * np.exp(rule.nodes ** 2
                                        if spec.kind == "whole_line"
                                        else rule.nodes)).sum(axis=1) / beta
                else:
                    norm_sq = (vals ** 2 * rule.weights).sum(axis=1)
                assert np.max(np.abs(norm_sq - 1.0)) < 1e-12

    def test_periodic_endpoints_match(self):
        model = tnn.init_model([tnn.periodic_angle(2 * np.pi, 8, 8)],
                               k=2, p=3, depth=2, width=5, seed=9)
        for ell in range(2):
            left, _ = tnn.component_values_at(model, ell, 0, np.array([0.0]))
            right, _ = tnn.component_values_at(model, ell, 0, np.array([2 * np.pi]))
            assert np.max(np.abs(left - right)) < 1e-12

    def test_degenerate_component_reported(self):
        model = constant_model(tnn.bounded_natural(0.0, 1.0, 2, 4), value=0.0)
        with pytest.raises(DegenerateComponentError):
            tnn.component_norms(model, 0)


class TestEvaluatePoint:
    def test_constant_coefficient(self):
        model = constant_model(tnn.bounded_natural(0.0, 1.0, 2, 6))
        model.coeffs[:] = 5.0
        assert abs(tnn.evaluate_point(model, 0, [0.3]) - 5.0) < 1e-13

    def test_product_of_linear_factors(self):
        specs = [tnn.bounded_natural(0.0, 1.0, 4, 8)] * 2
        model = tnn.init_model(specs, k=1, p=1, depth=0, width=0, seed=0)
        for i in (0, 1):
            model.subnets[i].weights[0][:] = 1.0
            model.subnets[i].biases[0][:] = 0.0
        model.coeffs[:] = 1.0
        got = tnn.evaluate_point(model, 0, [0.2, 0.5])
        assert abs(got - 3.0 * 0.2 * 0.5) < 1e-13

    def test_matches_component_reconstruction(self):
        model = tnn.init_model(mixed_specs(), k=2, p=3, depth=2, width=5, seed=3)
        x = np.array([0.7, 1.3, 0.4])
        for ell in range(2):
            prod = np.ones(model.p)
            for i in range(3):
                vals, _ = tnn.component_values_at(model, ell, i, x[i:i + 1])
                prod *= vals[:, 0]
            expected = float(model.coeffs[ell] @ prod)
            assert abs(tnn.evaluate_point(model, ell, x) - expected) < 1e-13

    def test_coefficient_scaling_is_exact(self):
        model = tnn.init_model(mixed_specs(), k=1, p=3, depth=2, width=5, seed=8)
        x = np.array([0.2, 2.0, 0.9])
        base = tnn.evaluate_point(model, 0, x)
        model.coeffs *= 7.0
        assert tnn.evaluate_point(model, 0, x) == pytest.approx(7.0 * base, rel=1e-14)


class TestFlattening:
    def test_round_trip_bit_exact(self):
        model = tnn.init_model(mixed_specs(), k=3, p=4, depth=2, width=7, seed=42)
        vec = tnn.flatten_params(model)
        back = tnn.flatten_params(tnn.unflatten_params(model, vec))
        assert np.array_equal(vec.view(np.uint64), back.view(np.uint64))

    def test_zero_vector_round_trip(self):
        model = tnn.init_model([tnn.bounded_natural(0, 1, 2, 4)],
                               k=2, p=2, depth=1, width=3, seed=0)
        zeros = np.zeros(tnn.num_params(model))
        rebuilt = tnn.unflatten_params(model, zeros)
        assert np.all(tnn.flatten_params(rebuilt) == 0.0)

    def test_single_entry_perturbation_is_local(self):
        model = tnn.init_model([tnn.whole_line(8), tnn.periodic_angle(2 * np.pi, 2, 3)],
                               k=2, p=2, depth=1, width=3, seed=1)
        vec = tnn.flatten_params(model)
        for t in range(vec.size):
            bumped = vec.copy()
            bumped[t] += 1.0
            rebuilt = tnn.flatten_params(tnn.unflatten_params(model, bumped))
            diff = rebuilt - vec
            assert np.count_nonzero(diff) == 1
            assert diff[t] == 1.0

    def test_length_mismatch_rejected(self):
        model = tnn.init_model([tnn.bounded_natural(0, 1, 2, 4)],
                               k=1, p=2, depth=1, width=3, seed=0)
        with pytest.raises(ValueError):
            tnn.unflatten_params(model, np.zeros(3))


class TestCheckpoint:
    def test_round_trip_bit_exact(self, tmp_path):
        model = tnn.init_model(mixed_specs(), k=2, p=3, depth=2, width=5, seed=7)
        path = tmp_path / "model.ckpt"
        tnn.save_checkpoint(model, path, seed=7, meta={"note": "test"})
        loaded, header = tnn.load_checkpoint(path)
        assert header["seed"] == 7
        assert header["meta"]["note"] == "test"
        a = tnn.flatten_params(model)
        b = tnn.flatten_params(loaded)
        assert np.array_equal(a.view(np.uint64), b.view(np.uint64))

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "junk.ckpt"
        path.write_bytes(b"definitely not a checkpoint")
        with pytest.raises(CheckpointError):
            tnn.load_checkpoint(path)

    def test_truncated_data_rejected(self, tmp_path):
        model = tnn.init_model([tnn.bounded_natural(0, 1, 2, 4)],
                               k=1, p=2, depth=1, width=3, seed=0)
        path = tmp_path / "model.ckpt"
        tnn.save_checkpoint(model, path, seed=0)
        blob = path.read_bytes()
        path.write_bytes(blob[:-16])
        with pytest.raises(CheckpointError):
            tnn.load_checkpoint(path)

    def test_version_mismatch_rejected(self, tmp_path):
        model = tnn.init_model([tnn.bounded_natural(0, 1, 2, 4)],
                               k=1, p=2, depth=1, width=3, seed=0)
        path = tmp_path / "model.ckpt"
        tnn.save_checkpoint(model, path, seed=0)
        blob = bytearray(path.read_bytes())
        # bump the version digit inside the JSON header
        idx = blob.find(b'"version": 1')
        blob[idx:idx + len(b'"version": 1')] = b'"version": 9'
        path.write_bytes(bytes(blob))
        with pytest.raises(CheckpointError):
            tnn.load_checkpoint(path)


def test_measure_weighted_normalization_uses_mass_weight():
    # on the half line with measure r^2, a constant net against exp(-r)
    model = constant_model(tnn.half_line(40))
    model.log_beta[0][:] = np.log(2.0)      # envelope exp(-r)
    norms = tnn.component_norms(model, 0, forms.W_X2)
    # integral of r^2 exp(-2r) dr = 2 / 8 = 1/4
    assert abs(norms[0, 0] - 0.5) < 1e-12
