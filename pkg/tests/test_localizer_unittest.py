import math
import tempfile
import unittest
from pathlib import Path

import numpy as np

from src.localizer.checkpoint import load_checkpoint, load_checkpoint_metadata, save_checkpoint
from src.localizer.config import EmbeddingConfig, EncoderConfig, LocalizerConfig, TrainingConfig
from src.localizer.gradcheck import block_gradient_check, gradient_check
from src.localizer.inference import (
    evaluate_map,
    export_embeddings,
    forward,
    localize,
    localize_many,
    predict_normalized,
    to_meters,
    uncertainty_error_correlation,
)
from src.localizer.loss import batch_loss, loss
from src.localizer.model import LocalizerModel, embed_fingerprint, encode_fingerprints
from src.localizer.optim import AdamW
from src.localizer.training import build_localizer, train
from src.radio.dataset import CoordinateTransform, split_train_val
from src.radio.distribution_maps import build_rss_distribution_maps
from src.radio.errors import EmptyFingerprintError
from src.radio.types import Fingerprint, GaussianLocation, Location, MacTable
from src.simulation.crowdsource import crowdsource_radio_map
from src.simulation.world import WorldSpec, generate_world


def tiny_config(activation="gelu", mac_embedding="distribution_map", seed=0):
    return LocalizerConfig(
        embedding=EmbeddingConfig(d_model=8, conv_channels=2, window=36, rss_widths=(1, 4, 1), mac_embedding=mac_embedding),
        encoder=EncoderConfig(n_layers=1, n_heads=2, d_ff=16, dropout=0.0),
        head_widths=(8,),
        activation=activation,
        seed=seed,
    )


class LocalizerTests(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        world = generate_world(WorldSpec(area_w=30.0, area_h=20.0, corridor_pitch=10.0, n_aps=8, seed=3))
        cls.radio_map = crowdsource_radio_map(world, n_samples=120, loc_noise_sigma=0.5, dropout=0.0, seed=1)
        cls.model = build_localizer(cls.radio_map, tiny_config(), cell_size=1.0)

    def _three_token_batch(self, n=6):
        picked = [(fp, loc) for fp, loc in self.radio_map.samples if len(fp) >= 3][:n]
        fps = [Fingerprint(fp.entries[:3]) for fp, _ in picked]
        batch, _ = encode_fingerprints(fps, self.model.mac_table)
        targets = self.model.transform.apply(np.array([[loc.x, loc.y] for _, loc in picked]))
        return batch, targets

    def test_backward_matches_central_differences(self):
        batch, targets = self._three_token_batch()
        report = gradient_check(self.model.copy(), batch, targets, n_directions=200, h=1e-5)
        self.assertLessEqual(report.max_relative_error, 1e-4)

    def test_every_parameter_block_gets_a_correct_gradient(self):
        batch, targets = self._three_token_batch()
        report = block_gradient_check(self.model.copy(), batch, targets, samples_per_block=3, h=1e-5, abs_floor=1e-6)
        self.assertIn("embed.conv1.w", report.per_block)
        self.assertLessEqual(report.max_relative_error, 1e-3, msg=f"worst block {report.worst_block}")

    def test_index_embedding_gradient(self):
        model = build_localizer(self.radio_map, tiny_config(mac_embedding="index"), cell_size=1.0)
        picked = [(fp, loc) for fp, loc in self.radio_map.samples][:5]
        batch, _ = encode_fingerprints([fp for fp, _ in picked], model.mac_table)
        targets = model.transform.apply(np.array([[loc.x, loc.y] for _, loc in picked]))
        report = gradient_check(model, batch, targets, n_directions=50, h=1e-5)
        self.assertLessEqual(report.max_relative_error, 1e-4)

    def test_loss_reference_values(self):
        self.assertEqual(loss(GaussianLocation(Location(1.0, 2.0), 1.0), Location(1.0, 2.0)), 0.0)
        value = loss(GaussianLocation(Location(1.0, 0.0), 1e-3), Location(0.0, 0.0))
        self.assertAlmostEqual(value, 1.0 / 1e-3 + math.log(1e-3), places=9)
        self.assertAlmostEqual(value, 993.0922, places=3)

    def test_loss_is_stationary_at_sigma_equal_error(self):
        grid = np.arange(1, 5001) * 1e-3
        for e in (0.1, 0.5, 2.0):
            values = e / grid + np.log(grid)
            self.assertAlmostEqual(float(grid[np.argmin(values)]), e, delta=1e-3)
            one = loss(GaussianLocation(Location(e, 0.0), e), Location(0.0, 0.0))
            self.assertAlmostEqual(one, 1.0 + math.log(e), places=12)

    def test_loss_without_uncertainty_is_mean_error(self):
        mu = np.array([[3.0, 4.0], [0.0, 1.0]])
        value, dmu, dsigma = batch_loss(mu, np.array([0.5, 0.5]), np.zeros((2, 2)), use_uncertainty=False)
        self.assertAlmostEqual(value, 3.0)
        np.testing.assert_array_equal(dsigma, 0.0)
        np.testing.assert_allclose(dmu[0], [0.3, 0.4])

    def test_eval_mode_is_deterministic_and_permutation_invariant(self):
        rng = np.random.default_rng(0)
        macs = list(self.model.mac_table.macs)
        fps, shuffled = [], []
        for _ in range(1000):
            k = int(rng.integers(1, len(macs) + 1))
            chosen = rng.choice(len(macs), size=k, replace=False)
            entries = tuple((macs[i], float(rng.uniform(-100.0, -30.0))) for i in chosen)
            fps.append(Fingerprint(entries))
            shuffled.append(Fingerprint(tuple(entries[i] for i in rng.permutation(k))))
        batch, _ = encode_fingerprints(fps, self.model.mac_table)
        batch_perm, _ = encode_fingerprints(shuffled, self.model.mac_table)
        mu, sigma = predict_normalized(self.model, batch)
        mu_p, sigma_p = predict_normalized(self.model, batch_perm)
        np.testing.assert_array_equal(mu, mu_p)
        np.testing.assert_array_equal(sigma, sigma_p)

        first = forward(self.model, fps[0])
        self.assertEqual(first, forward(self.model, fps[0]))
        self.assertGreaterEqual(first.sigma, self.model.config.sigma_floor)

    def test_replacement_maps_leave_the_model_untouched(self):
        model = self.model.copy()
        original = model.windows
        other_maps = build_rss_distribution_maps(self.radio_map, cell_size=2.0)
        seen = []
        embeddings = model.mac_embeddings

        def watched(indices, windows=None):
            seen.append(model.windows is original)
            return embeddings(indices, windows=windows)

        model.mac_embeddings = watched
        fp = self.radio_map.fingerprints[0]
        swapped = forward(model, fp, dist_maps=other_maps)
        embed_fingerprint(model, fp, dist_maps=other_maps)
        self.assertEqual(seen, [True, True])
        self.assertIs(model.windows, original)

        reference = LocalizerModel(
            model.config,
            model.mac_table,
            windows=other_maps.windowed(model.config.embedding.window),
            transform=model.transform,
            params=model.params,
        )
        self.assertEqual(swapped, forward(reference, fp))

    def test_unknown_macs_map_to_none(self):
        unknown = Fingerprint((("ffffffffffff", -50.0),))
        known = self.radio_map.fingerprints[0]
        results = localize_many(self.model, [unknown, known])
        self.assertIsNone(results[0])
        self.assertIsInstance(results[1], GaussianLocation)
        with self.assertRaises(EmptyFingerprintError):
            encode_fingerprints([unknown], self.model.mac_table)

    def test_sigma_scales_with_mean_extent(self):
        model = self.model.copy()
        transform = CoordinateTransform(offset_x=0.0, offset_y=0.0, scale_x=40.0, scale_y=60.0)
        _, sigma = to_meters(model, np.zeros((1, 2)), np.array([0.1]), transform)
        self.assertAlmostEqual(float(sigma[0]), 5.0)
        mu, _ = to_meters(model, np.array([[0.25, 0.5]]), np.array([0.1]), CoordinateTransform.identity())
        np.testing.assert_allclose(mu, [[0.25, 0.5]])

    def test_adamw_single_step(self):
        opt = AdamW(1, lr=0.1, betas=(0.9, 0.999), eps=1e-8, weight_decay=0.01)
        out = opt.step(np.array([1.0]), np.array([0.5]))
        expected = 1.0 * (1 - 0.1 * 0.01) - 0.1 * 0.5 / (math.sqrt(0.25) + 1e-8)
        self.assertAlmostEqual(float(out[0]), expected, places=12)
        self.assertEqual(opt.t, 1)

    def test_zero_learning_rate_leaves_parameters_unchanged(self):
        model = self.model.copy()
        before = model.parameter_vector()
        train_map, val_map = split_train_val(self.radio_map, 0.9, seed=0)
        trained, history = train(model, train_map, val_map, TrainingConfig(lr=0.0, epochs=2, batch_size=32))
        np.testing.assert_array_equal(trained.parameter_vector(), before)
        self.assertEqual(len(history.rows), 2)
        frame = history.to_frame()
        self.assertEqual(list(frame.columns), ["epoch", "train_loss", "val_mean_err", "val_mean_sigma"])
        self.assertEqual(frame["epoch"].tolist(), [1, 2])
        self.assertTrue((frame["val_mean_sigma"] > 0).all())

    def test_checkpoint_restores_predictions(self):
        fps = list(self.radio_map.fingerprints[:10])
        with tempfile.TemporaryDirectory() as tmp:
            path = save_checkpoint(self.model, Path(tmp) / "localizer.joblib", metadata={"run": "test"})
            restored = load_checkpoint(path, mac_table=self.radio_map.mac_table)
            np.testing.assert_array_equal(restored.parameter_vector(), self.model.parameter_vector())
            self.assertEqual(localize_many(restored, fps), localize_many(self.model, fps))
            self.assertEqual(load_checkpoint_metadata(path)["run"], "test")
            self.assertEqual(load_checkpoint_metadata(Path(tmp) / "missing.joblib"), {})
            with self.assertRaises(ValueError):
                load_checkpoint(path, mac_table=MacTable.from_macs(["ffffffffffff"]))

    def test_map_evaluation_matches_single_localization(self):
        frame = evaluate_map(self.model, self.radio_map)
        self.assertEqual(len(frame), len(self.radio_map))
        fp, loc = self.radio_map.samples[3]
        single = localize(self.model, fp)
        self.assertAlmostEqual(frame.loc[3, "est_x"], single.mu.x, places=9)
        self.assertAlmostEqual(frame.loc[3, "sigma"], single.sigma, places=9)
        self.assertAlmostEqual(frame.loc[3, "err"], single.mu.distance_to(loc), places=9)

    def test_uncertainty_error_correlation(self):
        self.assertAlmostEqual(uncertainty_error_correlation(np.array([1.0, 2.0, 3.0]), np.array([2.0, 4.0, 6.0])), 1.0)
        self.assertTrue(math.isnan(uncertainty_error_correlation(np.ones(3), np.array([1.0, 2.0, 3.0]))))

    def test_embedding_export_has_one_row_per_mac(self):
        frame = export_embeddings(self.model)
        self.assertEqual(len(frame), len(self.model.mac_table))
        self.assertEqual(list(frame.columns), ["mac"] + [f"e{i}" for i in range(8)])


if __name__ == "__main__":
    unittest.main()
