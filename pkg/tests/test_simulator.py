import json

import numpy as np
import pytest

from kroncal.exceptions import DatasetError, InputError
from kroncal.simulator import (
    DatasetSpec,
    EpisodeData,
    PlantTruth,
    export_csv,
    file_digest,
    generate_candidates,
    generate_episode,
    identity_plant,
    make_dataset,
    read_dataset,
    simulate_measure,
    table1_plant,
)


class TestCandidates:
    def test_unit_bounds(self):
        C = generate_candidates(DatasetSpec(seed=3), 0)
        assert C.shape == (50, 3)
        assert C.min() >= 0.0 and C.max() <= 1.0

    def test_deterministic(self):
        spec = DatasetSpec(seed=11)
        np.testing.assert_array_equal(generate_candidates(spec, 5), generate_candidates(spec, 5))
        assert not np.array_equal(generate_candidates(spec, 5), generate_candidates(spec, 6))

    def test_uniform_moments(self):
        spec = DatasetSpec(m_per_episode=1000, seed=1)
        X = np.vstack([generate_candidates(spec, e) for e in range(100)])
        assert X.shape == (10**5, 3)
        np.testing.assert_allclose(X.mean(axis=0), 0.5, atol=0.005)
        np.testing.assert_allclose(X.var(axis=0), 1 / 12, atol=0.002)

    def test_physical_bounds(self):
        spec = DatasetSpec(bounds=((-30, 30), (-25, 25), (-30, 30)))
        C = generate_candidates(spec, 0)
        assert np.all(np.abs(C[:, 1]) <= 25) and not spec.normalized

    @pytest.mark.parametrize("bounds", [((0, 0), (0, 1), (0, 1)), ((1, 0), (0, 1), (0, 1)), ((0, 1),)])
    def test_degenerate_bounds(self, bounds):
        with pytest.raises(InputError):
            DatasetSpec(bounds=bounds)

    def test_spec_invariants(self):
        with pytest.raises(InputError):
            DatasetSpec(n_episodes=0)
        with pytest.raises(InputError):
            DatasetSpec(m_per_episode=3)


class TestMeasure:
    def test_identity_noiseless(self, rng):
        U = rng.random((10, 3))
        np.testing.assert_array_equal(simulate_measure(identity_plant(), U), U)

    def test_table1_substitution(self):
        y = simulate_measure(table1_plant(), np.array([10.0, 10.0, 10.0]))
        np.testing.assert_allclose(y, [7.4, 1.3, 11.11], atol=1e-12)

    def test_noise_std(self):
        plant = identity_plant(0.01)
        Y = simulate_measure(plant, np.tile([0.3, 0.3, 0.3], (10**5, 1)), np.random.default_rng(0))
        np.testing.assert_allclose(Y.std(axis=0), 0.01, rtol=0.05)

    def test_pooled_residual_mean_zero(self):
        plant = table1_plant(0.02)
        rng = np.random.default_rng(5)
        U = rng.random((20000, 3))
        R = simulate_measure(plant, U, rng) - (U @ np.asarray(plant.x_a).T + np.asarray(plant.x_b))
        assert np.all(np.abs(R.mean(axis=0)) < 4 * 0.02 / np.sqrt(len(U)))

    def test_deterministic_under_seed(self, rng):
        plant = table1_plant(0.05)
        u = rng.random(3)
        assert np.array_equal(simulate_measure(plant, u, 4), simulate_measure(plant, u, 4))

    def test_negative_sigma(self):
        with pytest.raises(InputError):
            PlantTruth(np.eye(3), np.zeros(3), [-0.1, 0, 0])


class TestDataset:
    def test_inputs_only_file(self, tmp_path):
        path = tmp_path / "d.jsonl"
        make_dataset(DatasetSpec(n_episodes=1), None, path)
        lines = path.read_text().splitlines()
        assert len(lines) == 2
        header, rec = json.loads(lines[0]), json.loads(lines[1])
        assert header["format_version"] == 1 and header["plant_digest"] is None
        assert len(rec["inputs"]) == 50 and "outputs" not in rec

    @pytest.mark.parametrize("n, with_outputs, dim", [(1000, False, 3), (100, True, 6)])
    def test_table3_shapes(self, tmp_path, n, with_outputs, dim):
        spec = DatasetSpec(n_episodes=n, seed=2, with_outputs=with_outputs)
        path = tmp_path / "d.jsonl"
        make_dataset(spec, table1_plant(0.01), path)
        header, eps = read_dataset(path)
        assert len(eps) == n and all(ep.m == 50 for ep in eps)
        width = 3 + (3 if eps[0].outputs is not None else 0)
        assert width == dim
        assert header["spec"]["n_episodes"] == n

    def test_byte_identical(self, tmp_path):
        spec = DatasetSpec(n_episodes=5, seed=9, with_outputs=True)
        a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
        make_dataset(spec, table1_plant(0.01), a)
        make_dataset(spec, table1_plant(0.01), b)
        assert file_digest(a) == file_digest(b)

    def test_episode_independence(self):
        spec = DatasetSpec(n_episodes=8, seed=4, with_outputs=True)
        plant = table1_plant(0.01)
        full = make_dataset(spec, plant)
        alone = generate_episode(spec, 6, plant)
        np.testing.assert_array_equal(full[6].inputs, alone.inputs)
        np.testing.assert_array_equal(full[6].outputs, alone.outputs)

    def test_outputs_do_not_change_inputs(self):
        a = generate_episode(DatasetSpec(seed=1), 3)
        b = generate_episode(DatasetSpec(seed=1, with_outputs=True), 3, table1_plant(0.01))
        np.testing.assert_array_equal(a.inputs, b.inputs)

    def test_round_trip_exact(self, tmp_path):
        spec = DatasetSpec(n_episodes=3, seed=8, with_outputs=True)
        eps = make_dataset(spec, table1_plant(0.01), tmp_path / "d.jsonl")
        _, back = read_dataset(tmp_path / "d.jsonl")
        for e, f in zip(eps, back):
            np.testing.assert_array_equal(e.inputs, f.inputs)
            np.testing.assert_array_equal(e.outputs, f.outputs)

    def test_outputs_need_plant(self):
        with pytest.raises(InputError):
            make_dataset(DatasetSpec(with_outputs=True), None)

    def test_io_errors_have_path(self, tmp_path):
        with pytest.raises(DatasetError, match="missing.jsonl"):
            read_dataset(tmp_path / "missing.jsonl")
        bad = tmp_path / "bad.jsonl"
        bad.write_text('{"format_version": 99}\n')
        with pytest.raises(DatasetError):
            read_dataset(bad)

    def test_csv_export(self, tmp_path):
        eps = make_dataset(DatasetSpec(n_episodes=2, with_outputs=True), table1_plant(0.0))
        path = export_csv(tmp_path / "d.csv", eps)
        lines = path.read_text().splitlines()
        assert lines[0] == "episode_id,index,u_pitch,u_yaw,u_roll,y_pitch,y_yaw,y_roll"
        assert len(lines) == 101

    def test_normalized_episode_validation(self):
        with pytest.raises(InputError):
            EpisodeData(0, np.full((5, 3), 2.0), normalized=True)
