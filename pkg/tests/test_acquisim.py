"""Tests for synthetic homodyne acquisitions."""

import unittest
import os
import sys
import tempfile
import shutil

import numpy as np
from scipy import stats

# Add the project root to path for imports
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

# Import with patched home directory so settings and logs stay out of the real home
os.environ['HOME'] = tempfile.mkdtemp()
os.environ['USERPROFILE'] = os.environ['HOME']  # For Windows

from src.core import acquisim as aq
from src.core import fockspace as fs
from src.core import gaussmodel as gm
from src.core.errors import DomainError, DegenerateRates, DataFormatError, EmptyData


class TestScan(unittest.TestCase):
    """Test the phase scan and configuration."""

    def test_single_ramp(self):
        """Test a linear ramp from 0 to the full span."""
        cfg = aq.AcquisitionConfig(n_segments=1000)
        self.assertEqual(aq.phase_of_sample(0, cfg), 0.0)
        self.assertAlmostEqual(aq.phase_of_sample(999, cfg), 3 * np.pi, places=12)
        phases = aq.phase_of_sample(np.arange(1000), cfg)
        self.assertTrue(np.all(np.diff(phases) > 0))

    def test_sawtooth(self):
        """Test that each ramp restarts at zero."""
        cfg = aq.AcquisitionConfig(n_segments=1000, ramps=2, phase_span=np.pi)
        self.assertEqual(aq.phase_of_sample(500, cfg), 0.0)
        self.assertAlmostEqual(aq.phase_of_sample(499, cfg), np.pi, places=12)

    def test_index_domain(self):
        """Test indices outside the acquisition."""
        cfg = aq.AcquisitionConfig(n_segments=1000)
        with self.assertRaises(DomainError):
            aq.phase_of_sample(1000, cfg)
        with self.assertRaises(DomainError):
            aq.phase_of_sample(-1, cfg)

    def test_config_validation(self):
        """Test rejected acquisition settings."""
        with self.assertRaises(DomainError):
            aq.AcquisitionConfig(n_segments=50, bin_size=100)
        with self.assertRaises(DomainError):
            aq.AcquisitionConfig(xi=1.2)
        with self.assertRaises(DomainError):
            aq.AcquisitionConfig(phase_span=0.0)

    def test_config_dict(self):
        """Test that unknown keys are ignored when reading metadata."""
        cfg = aq.AcquisitionConfig(n_segments=2000, seed=5, xi=0.9)
        data = dict(cfg.to_dict(), extra='ignored')
        self.assertEqual(aq.AcquisitionConfig.from_dict(data), cfg)

    def test_effective_modal_purity(self):
        """Test dark-count dilution of the modal purity."""
        self.assertAlmostEqual(aq.effective_modal_purity(0.96, 1000.0, 2.0), 0.96 * 0.998, places=12)
        cfg = aq.AcquisitionConfig(xi=0.9, trigger_rate_hz=100.0, dark_rate_hz=10.0)
        self.assertAlmostEqual(cfg.effective_xi, 0.81, places=12)
        with self.assertRaises(DegenerateRates):
            aq.effective_modal_purity(0.9, 2.0, 2.0)
        with self.assertRaises(DomainError):
            aq.effective_modal_purity(0.9, 0.0, 2.0)


class TestSampling(unittest.TestCase):
    """Test quadrature sampling statistics."""

    def test_vacuum_shot_noise(self):
        """Test that the vacuum has unit variance in shot-noise units."""
        x = aq.draw_quadratures(fs.vacuum(2).density(), np.zeros(20000), aq.make_rng(1))
        self.assertAlmostEqual(float(np.mean(x)), 0.0, delta=0.03)
        self.assertAlmostEqual(float(np.var(x)), 1.0, delta=0.04)

    def test_squeezed_variances(self):
        """Test squeezed and anti-squeezed variances."""
        r = 0.4
        rho = fs.squeezed_vacuum(r).density()
        rng = aq.make_rng(2)
        x0 = aq.draw_quadratures(rho, np.zeros(20000), rng)
        x90 = aq.draw_quadratures(rho, np.full(20000, np.pi / 2), rng)
        self.assertAlmostEqual(float(np.var(x0)), np.exp(-2 * r), delta=0.05 * np.exp(-2 * r))
        self.assertAlmostEqual(float(np.var(x90)), np.exp(2 * r), delta=0.05 * np.exp(2 * r))

    def test_reproducible(self):
        """Test that a seed fixes the dataset."""
        rho = fs.squeezed_vacuum(0.3).density()
        cfg = aq.AcquisitionConfig(n_segments=500, seed=11)
        first = aq.sample_quadratures(rho, rho, cfg)
        second = aq.sample_quadratures(rho, rho, cfg)
        other = aq.sample_quadratures(rho, rho, aq.AcquisitionConfig(n_segments=500, seed=12))
        np.testing.assert_array_equal(first.x, second.x)
        self.assertFalse(np.array_equal(first.x, other.x))
        self.assertEqual(first.metadata['rng'], 'PCG64')
        self.assertEqual(first.metadata['seed'], 11)

    def test_modal_purity_selects_source(self):
        """Test Ξ = 1 and Ξ = 0 with a single photon against the vacuum."""
        one = fs.fock_state(1, 3).density()
        vac = fs.vacuum(3).density()
        pure = aq.sample_quadratures(one, vac, aq.AcquisitionConfig(n_segments=10000, xi=1.0))
        none = aq.sample_quadratures(one, vac, aq.AcquisitionConfig(n_segments=10000, xi=0.0))
        self.assertAlmostEqual(float(np.var(pure.x)), 3.0, delta=0.15)
        self.assertAlmostEqual(float(np.var(none.x)), 1.0, delta=0.05)

    def test_detection_loss(self):
        """Test that η mixes the single photon with vacuum: Var = 1 + 2η."""
        one = fs.fock_state(1, 3).density()
        data = aq.sample_quadratures(one, one, aq.AcquisitionConfig(n_segments=20000, eta_hd=0.5))
        self.assertAlmostEqual(float(np.var(data.x)), 2.0, delta=0.08)

    def test_electronic_noise(self):
        """Test that electronic noise adds its variance."""
        vac = fs.vacuum(2).density()
        data = aq.sample_quadratures(vac, vac, aq.AcquisitionConfig(n_segments=20000,
                                                                   electronic_noise_db=10.0))
        self.assertAlmostEqual(float(np.var(data.x)), 1.1, delta=0.04)

    def test_heralded_source(self):
        """Test the parity of heralded and false-herald states."""
        signal, background = aq.heralded_source(0.4, 0.077, n_max=20)
        self.assertEqual(signal.n_max, 20)
        self.assertGreater(fs.photon_distribution(signal)[1::2].sum(), 0.9)
        self.assertGreater(fs.photon_distribution(background)[0::2].sum(), 0.98)
        self.assertLess(fs.parity_origin(signal), 0.0)
        self.assertGreater(fs.parity_origin(background), 0.0)

    def test_heralded_source_input_impurity(self):
        """Test a lossy input against the Gaussian-mixture herald."""
        cfg = gm.PredictionConfig(view='homodyne')
        r = cfg.gain_c * np.sqrt(2.0)
        signal, background = aq.heralded_source(r, cfg.tap_R, input_efficiency=cfg.input_efficiency)
        heralded, false_herald, _ = gm.predict_components(2.0, cfg)
        self.assertAlmostEqual(fs.parity_origin(signal), heralded.at_origin(), delta=1e-6)
        self.assertAlmostEqual(fs.parity_origin(background), false_herald.at_origin(), delta=1e-6)
        with self.assertRaises(DomainError):
            aq.heralded_source(r, cfg.tap_R, input_efficiency=1.2)


class TestSamplerDistribution(unittest.TestCase):
    """Kolmogorov-Smirnov checks of the inverse-CDF sampler."""

    def test_fixed_phase(self):
        """Test the squeezed quadrature at θ = 0 against N(0, e^{-2r})."""
        r = 0.4
        x = aq.draw_quadratures(fs.squeezed_vacuum(r).density(), np.zeros(50000), aq.make_rng(21))
        result = stats.kstest(x, stats.norm(scale=np.exp(-r)).cdf)
        self.assertLess(result.statistic, 0.01)

    def test_anti_squeezed_phase(self):
        """Test θ = π/2 against N(0, e^{2r})."""
        r = 0.4
        x = aq.draw_quadratures(fs.squeezed_vacuum(r).density(), np.full(50000, np.pi / 2), aq.make_rng(22))
        result = stats.kstest(x, stats.norm(scale=np.exp(r)).cdf)
        self.assertLess(result.statistic, 0.01)

    def test_zero_modal_purity(self):
        """Test that Ξ = 0 draws only the vacuum background."""
        one = fs.fock_state(1, 3).density()
        vac = fs.vacuum(3).density()
        data = aq.sample_quadratures(one, vac, aq.AcquisitionConfig(n_segments=50000, xi=0.0, seed=23))
        result = stats.kstest(data.x, stats.norm.cdf)
        self.assertLess(result.statistic, 0.01)


class TestDatasetFiles(unittest.TestCase):
    """Test dataset persistence."""

    def setUp(self):
        """Set up test environment."""
        self.test_dir = tempfile.mkdtemp()

    def tearDown(self):
        """Clean up test environment."""
        shutil.rmtree(self.test_dir)

    def test_save_load(self):
        """Test the CSV and sidecar pair."""
        rho = fs.squeezed_vacuum(0.3).density()
        data = aq.sample_quadratures(rho, rho, aq.AcquisitionConfig(n_segments=300),
                                     description={'kind': 'squeezing'})
        csv_path, meta_path = data.save(os.path.join(self.test_dir, 'run.csv'))
        self.assertEqual(meta_path, aq.sidecar_path(str(csv_path)))
        with open(csv_path) as f:
            self.assertEqual(f.readline().strip(), 'segment,scan_phase,x')

        loaded = aq.QuadratureDataset.load(str(csv_path))
        self.assertEqual(len(loaded), 300)
        np.testing.assert_array_equal(loaded.x, data.x)
        np.testing.assert_array_equal(loaded.segment, data.segment)
        self.assertEqual(loaded.metadata['description'], {'kind': 'squeezing'})
        self.assertEqual(loaded.config.n_segments, 300)

    def test_load_without_sidecar(self):
        """Test that a bare CSV loads with empty metadata."""
        path = os.path.join(self.test_dir, 'bare.csv')
        with open(path, 'w') as f:
            f.write('segment,scan_phase,x\n0,0.0,0.5\n1,0.1,-0.2\n')
        data = aq.QuadratureDataset.load(path)
        self.assertEqual(data.metadata, {})
        self.assertEqual(data.segment.tolist(), [0, 1])

    def test_load_errors(self):
        """Test empty and malformed datasets."""
        empty = os.path.join(self.test_dir, 'empty.csv')
        with open(empty, 'w') as f:
            f.write('segment,scan_phase,x\n')
        with self.assertRaises(EmptyData):
            aq.QuadratureDataset.load(empty)
        wrong = os.path.join(self.test_dir, 'wrong.csv')
        with open(wrong, 'w') as f:
            f.write('i,x\n0,1.0\n')
        with self.assertRaises(DataFormatError):
            aq.QuadratureDataset.load(wrong)
        with self.assertRaises(DataFormatError):
            aq.QuadratureDataset([0, 1], [0.0], [0.1, 0.2], {})


if __name__ == '__main__':
    unittest.main()
