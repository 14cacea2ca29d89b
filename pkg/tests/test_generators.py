import numpy as np
import pytest

from src.data.generators import (
    DatasetSpec,
    burgers_exact,
    cell_volume,
    make_burgers_dataset,
    make_dataset,
    make_synthetic2d_dataset,
    spatial_grid,
    synthetic_fields,
)
from src.utils.errors import ConfigError


def _naive_burgers(x, t, re):
    t0 = np.exp(re / 8.0)
    return (x / (t + 1.0)) / (1.0 + np.sqrt((t + 1.0) / t0) * np.exp(re * x ** 2 / (4.0 * t + 4.0)))


class TestBurgersExact:
    def test_zero_at_left_boundary(self):
        t = np.linspace(0.0, 2.0, 11)
        for re in (100.0, 450.0, 800.0):
            np.testing.assert_array_equal(burgers_exact(0.0, t, re), 0.0)

    def test_decays_at_right_boundary(self):
        t = np.linspace(0.0, 2.0, 41)
        for re in (100.0, 300.0, 800.0):
            assert np.all(np.abs(burgers_exact(2.0, t, re)) <= 1e-6)

    def test_agrees_with_naive_form(self):
        x = np.linspace(0.0, 2.0, 33)[:, None]
        t = np.linspace(0.0, 2.0, 9)[None, :]
        for re in (8.0, 100.0, 250.0):
            naive = _naive_burgers(x, t, re)
            assert np.all(np.isfinite(naive))
            np.testing.assert_allclose(burgers_exact(x, t, re), naive, rtol=1e-12, atol=0.0)

    def test_reference_point(self):
        # x = 1, t = 0, Re = 100: 1 / (1 + exp(25 - 12.5 / 2))
        assert burgers_exact(1.0, 0.0, 100.0) == pytest.approx(1.0 / (1.0 + np.exp(18.75)), rel=1e-12)

    def test_t0_at_re_eight(self):
        # Re = 8 -> t0 = e, so at x -> 0+ the slope is 1 / ((t + 1) (1 + sqrt((t + 1) / e)))
        x = 1e-8
        expected = x / (1.0 + np.sqrt(1.0 / np.e))
        assert burgers_exact(x, 0.0, 8.0) == pytest.approx(expected, rel=1e-12)

    def test_no_overflow_at_large_reynolds(self):
        u = burgers_exact(np.linspace(0.0, 2.0, 128), 0.0, 1e5)
        assert np.all(np.isfinite(u))


class TestBurgersDataset:
    def test_default_split_sizes(self):
        train, validation, test = make_burgers_dataset(DatasetSpec())
        assert train.fields.shape == (10, 101, 1, 1, 128)
        assert validation.n_snapshots == 80
        assert test.n_snapshots == 20
        assert (train.split, validation.split, test.split) == ("train", "validation", "test")

    def test_training_reynolds_numbers(self):
        train, _, _ = make_burgers_dataset(DatasetSpec())
        np.testing.assert_allclose(np.diff(train.parameters[:, 0]), 700.0 / 9.0)
        assert train.parameters[0, 0] == 100.0 and train.parameters[-1, 0] == 800.0
        assert train.is_uniform()

    def test_random_splits_stay_in_range(self):
        _, validation, test = make_burgers_dataset(DatasetSpec(seed=3))
        for s in (validation, test):
            assert np.all((s.parameters >= 100.0) & (s.parameters <= 800.0))
            assert np.all((s.times >= 0.0) & (s.times <= 2.0))

    def test_fixed_test_parameters(self):
        _, _, test = make_burgers_dataset(DatasetSpec(test_params=[[646.0], [290.8]]))
        np.testing.assert_array_equal(test.parameters[:, 0], [290.8, 646.0])

    def test_holdout_parameters_leave_the_training_grid(self):
        spec = DatasetSpec(train_param_counts=[8], param_ranges=[[100.0, 800.0]], validation_params=[[200.0]])
        train, validation, _ = make_burgers_dataset(spec)
        assert train.n_params == 7
        assert 200.0 not in train.parameters[:, 0]
        np.testing.assert_array_equal(validation.parameters[:, 0], [200.0])

    def test_deterministic(self, small_burgers_spec):
        first = make_dataset(small_burgers_spec)
        second = make_dataset(small_burgers_spec)
        for a, b in zip(first, second):
            assert a.fields.tobytes() == b.fields.tobytes()
            assert a.times.tobytes() == b.times.tobytes()

    def test_cell_centred_grid(self):
        x = spatial_grid(128, 2.0)
        assert x[0] == pytest.approx(1.0 / 128.0) and x[-1] == pytest.approx(2.0 - 1.0 / 128.0)
        np.testing.assert_allclose(spatial_grid(5, 2.0, "node"), [0.0, 0.5, 1.0, 1.5, 2.0])
        assert cell_volume(DatasetSpec()) == pytest.approx(2.0 / 128.0)

    def test_invalid_spec(self):
        with pytest.raises(ConfigError):
            DatasetSpec(param_ranges=[[800.0, 100.0]])
        with pytest.raises(ConfigError):
            DatasetSpec(kind="burgers1d", channels=2)
        with pytest.raises(ConfigError):
            DatasetSpec(n_train_times=0)


class TestSyntheticDataset:
    def _spec(self, **overrides) -> DatasetSpec:
        options = dict(kind="synthetic2d", param_ranges=[[-1.0, 1.0]], train_param_counts=[3], time_range=[0.0, 1.0],
                       n_train_times=5, n_val_params=1, n_val_times=2, n_test_params=1, n_test_times=2,
                       channels=2, n_y=16, n_x=32, n_gaussians=2, seed=1)
        options.update(overrides)
        return DatasetSpec(**options)

    def test_requested_shape(self):
        spec = self._spec(channels=3, n_y=64, n_x=128, train_param_counts=[2], n_train_times=3)
        train, validation, test = make_synthetic2d_dataset(spec)
        assert train.field_shape == validation.field_shape == test.field_shape == (3, 64, 128)
        assert train.fields.shape[:2] == (2, 3)

    def test_zero_velocity_is_stationary(self):
        spec = self._spec()
        fields = synthetic_fields(spec, np.array([[0.0]]), np.linspace(0.0, 1.0, 4))
        for k in range(1, 4):
            np.testing.assert_array_equal(fields[0, k], fields[0, 0])

    def test_single_blob_translates(self):
        spec = self._spec(n_gaussians=1, channels=1, n_y=8, n_x=64, domain_size=[2.0, 1.0])
        velocity = 0.75
        times = np.array([0.0, 0.4, 1.2])
        fields = synthetic_fields(spec, np.array([[velocity]]), times)
        dx = 2.0 / 64
        x = spatial_grid(64, 2.0)
        peak0 = x[np.argmax(fields[0, 0, 0].max(axis=0))]
        for k, t in enumerate(times):
            peak = x[np.argmax(fields[0, k, 0].max(axis=0))]
            expected = (peak0 + velocity * t) % 2.0
            distance = min(abs(peak - expected), 2.0 - abs(peak - expected))
            assert distance <= 1.5 * dx

    def test_two_parameter_velocities(self):
        spec = self._spec(param_ranges=[[-1.0, 1.0], [0.0, 0.5]], train_param_counts=[2, 2])
        train, _, _ = make_dataset(spec)
        assert train.parameters.shape == (4, 2)

    def test_deterministic(self):
        first = make_dataset(self._spec())
        second = make_dataset(self._spec())
        assert first[0].fields.tobytes() == second[0].fields.tobytes()
