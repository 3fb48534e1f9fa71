"""Synthetic phase-scanned homodyne acquisitions.

Quadrature values in datasets are shot-noise normalized (vacuum variance 1),
i.e. √2 times the Wigner-unit quadrature of fockspace.
"""

from dataclasses import dataclass, asdict, fields
from pathlib import Path
from typing import Optional, Dict, Any, Tuple

import numpy as np

from src.core.errors import DomainError, DegenerateRates, DataFormatError, EmptyData
from src.core.fockspace import (
    DensityMatrix, apply_loss, hermite_functions, herald_subtract, squeezed_vacuum,
    mean_photon_number)
from src.utils.file_service import get_file_service
from src.utils.logging import get_logger

logger = get_logger()

SAMPLE_GRID = np.linspace(-8.0, 8.0, 4096)
SHOT_NOISE_SCALE = np.sqrt(2.0)
RNG_ALGORITHM = "PCG64"
CHUNK = 512
DATASET_HEADER = ('segment', 'scan_phase', 'x')


@dataclass(frozen=True)
class AcquisitionConfig:
    n_segments: int = 4000
    phase_span: float = 3 * np.pi
    bin_size: int = 100
    seed: int = 20240101
    eta_hd: float = 1.0
    xi: float = 1.0
    dark_rate_hz: float = 0.0
    trigger_rate_hz: Optional[float] = None
    ramps: int = 1
    electronic_noise_db: Optional[float] = None

    def __post_init__(self):
        if self.bin_size < 2 or self.n_segments < self.bin_size:
            raise DomainError("n_segments must be at least bin_size (>= 2)", operation="AcquisitionConfig")
        if self.phase_span <= 0:
            raise DomainError("phase_span must be positive", operation="AcquisitionConfig")
        if not 0.0 <= self.xi <= 1.0 or not 0.0 <= self.eta_hd <= 1.0:
            raise DomainError("xi and eta_hd must lie in [0, 1]", operation="AcquisitionConfig")
        if self.ramps < 1 or self.n_segments // self.ramps < 2:
            raise DomainError("each ramp needs at least two segments", operation="AcquisitionConfig")

    @property
    def effective_xi(self) -> float:
        if self.trigger_rate_hz is None:
            return self.xi
        return effective_modal_purity(self.xi, self.trigger_rate_hz, self.dark_rate_hz)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "AcquisitionConfig":
        known = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in data.items() if k in known})


@dataclass(frozen=True, eq=False)
class QuadratureDataset:
    """One acquisition: per-sample segment index, generated scan phase and x."""

    segment: np.ndarray
    scan_phase: np.ndarray
    x: np.ndarray
    metadata: Dict[str, Any]

    def __post_init__(self):
        n = len(self.x)
        if len(self.segment) != n or len(self.scan_phase) != n:
            raise DataFormatError("dataset columns differ in length", operation="QuadratureDataset")
        object.__setattr__(self, 'segment', np.asarray(self.segment, dtype=int))
        object.__setattr__(self, 'scan_phase', np.asarray(self.scan_phase, dtype=float))
        object.__setattr__(self, 'x', np.asarray(self.x, dtype=float))

    def __len__(self) -> int:
        return len(self.x)

    @property
    def config(self) -> AcquisitionConfig:
        return AcquisitionConfig.from_dict(self.metadata.get('config', {}))

    def save(self, csv_path: str) -> Tuple[Path, Path]:
        """Write the CSV and its sidecar JSON (same stem)."""
        fs = get_file_service()
        csv_file = fs.write_csv(csv_path, DATASET_HEADER,
                                zip(self.segment.tolist(), self.scan_phase.tolist(), self.x.tolist()))
        meta_file = fs.write_json(str(sidecar_path(csv_path)), self.metadata)
        logger.info(f"Saved {len(self)} quadratures to {csv_file}")
        return csv_file, meta_file

    @classmethod
    def load(cls, csv_path: str) -> "QuadratureDataset":
        fs = get_file_service()
        rows = fs.read_csv(csv_path, DATASET_HEADER)
        if not rows:
            raise EmptyData(f"{csv_path} has no samples", operation="QuadratureDataset.load")
        meta_path = sidecar_path(csv_path)
        metadata = fs.read_json(str(meta_path)) if meta_path.exists() else {}
        data = np.asarray(rows)
        return cls(data[:, 0].astype(int), data[:, 1], data[:, 2], metadata)


def sidecar_path(csv_path: str) -> Path:
    """Sidecar JSON path next to a dataset CSV."""
    return Path(csv_path).with_suffix('.json')


def effective_modal_purity(xi_filter: float, trigger_rate_hz: float, dark_rate_hz: float) -> float:
    """Ξ_eff = Ξ_filter·(1 − dark/trigger)."""
    if trigger_rate_hz <= 0 or dark_rate_hz < 0:
        raise DomainError("rates must be nonnegative and the trigger rate positive",
                          operation="effective_modal_purity")
    if trigger_rate_hz <= dark_rate_hz:
        raise DegenerateRates(f"trigger rate {trigger_rate_hz} does not exceed dark rate {dark_rate_hz}",
                              operation="effective_modal_purity")
    return float(xi_filter * (1.0 - dark_rate_hz / trigger_rate_hz))


def phase_of_sample(i, cfg: AcquisitionConfig):
    """Saw-tooth scan: ``cfg.ramps`` linear ramps 0 → phase_span over the acquisition."""
    index = np.asarray(i)
    if np.any(index < 0) or np.any(index >= cfg.n_segments):
        raise DomainError(f"segment index outside 0..{cfg.n_segments - 1}", operation="phase_of_sample")
    length = cfg.n_segments // cfg.ramps
    within = np.minimum(index, length * cfg.ramps - 1) % length
    phase = cfg.phase_span * within / (length - 1)
    return float(phase) if phase.ndim == 0 else phase


def _phase_polynomials(rho: DensityMatrix, grid: np.ndarray) -> np.ndarray:
    """G_d(x) = Σ_m ρ_{m,m+d} ψ_m ψ_{m+d}, so pr(x|θ) = Re Σ_d c_d e^{idθ} G_d."""
    mat = rho.elements
    psi = hermite_functions(rho.n_max, grid)
    dim = mat.shape[0]
    poly = np.zeros((dim, grid.size), dtype=complex)
    for d in range(dim):
        m = np.arange(dim - d)
        poly[d] = np.diagonal(mat, offset=d) @ (psi[m] * psi[m + d])
    poly[1:] *= 2.0
    return poly


def _inverse_cdf(rho: DensityMatrix, phases: np.ndarray, uniforms: np.ndarray) -> np.ndarray:
    grid = SAMPLE_GRID
    step = grid[1] - grid[0]
    poly = _phase_polynomials(rho, grid)
    orders = np.arange(poly.shape[0])
    out = np.empty(len(phases))
    for start in range(0, len(phases), CHUNK):
        theta = phases[start:start + CHUNK]
        u = uniforms[start:start + CHUNK]
        pdf = np.maximum((np.exp(1j * np.outer(theta, orders)) @ poly).real, 0.0)
        cdf = np.zeros_like(pdf)
        cdf[:, 1:] = np.cumsum(0.5 * (pdf[:, 1:] + pdf[:, :-1]) * step, axis=1)
        cdf /= cdf[:, -1:]
        k = np.clip((cdf < u[:, None]).sum(axis=1), 1, grid.size - 1)
        rows = np.arange(len(u))
        lo, hi = cdf[rows, k - 1], cdf[rows, k]
        width = np.where(hi > lo, hi - lo, 1.0)
        out[start:start + CHUNK] = grid[k - 1] + np.clip((u - lo) / width, 0.0, 1.0) * step
    return out * SHOT_NOISE_SCALE


def draw_quadratures(rho: DensityMatrix, phases, rng: np.random.Generator) -> np.ndarray:
    """One shot-noise-unit quadrature per phase, by inverse CDF on a 4096-point grid."""
    phases = np.atleast_1d(np.asarray(phases, dtype=float))
    return _inverse_cdf(rho, phases, rng.random(len(phases)))


def make_rng(seed: int) -> np.random.Generator:
    """Seeded PCG64 generator; the same seed reproduces a dataset bit for bit."""
    return np.random.Generator(np.random.PCG64(seed))


def _describe(rho: DensityMatrix) -> Dict[str, Any]:
    return {'n_max': rho.n_max, 'mean_photon_number': mean_photon_number(rho)}


def sample_quadratures(rho_signal: DensityMatrix, rho_false: DensityMatrix,
                       cfg: AcquisitionConfig, description: Optional[Dict[str, Any]] = None
                       ) -> QuadratureDataset:
    """Simulate an acquisition: each segment comes from the signal state with probability Ξ."""
    xi = cfg.effective_xi
    logger.info(f"Sampling {cfg.n_segments} quadratures (Ξ={xi:.4f}, η={cfg.eta_hd:.3f}, seed={cfg.seed})")
    signal = apply_loss(rho_signal, cfg.eta_hd)
    background = apply_loss(rho_false, cfg.eta_hd)

    rng = make_rng(cfg.seed)
    segment = np.arange(cfg.n_segments)
    phases = phase_of_sample(segment, cfg)
    from_signal = rng.random(cfg.n_segments) < xi
    uniforms = rng.random(cfg.n_segments)

    x = np.empty(cfg.n_segments)
    if from_signal.any():
        x[from_signal] = _inverse_cdf(signal, phases[from_signal], uniforms[from_signal])
    if (~from_signal).any():
        x[~from_signal] = _inverse_cdf(background, phases[~from_signal], uniforms[~from_signal])
    if cfg.electronic_noise_db is not None:
        x += rng.normal(0.0, np.sqrt(10.0 ** (-cfg.electronic_noise_db / 10.0)), cfg.n_segments)

    metadata = {
        'config': cfg.to_dict(),
        'seed': cfg.seed,
        'rng': RNG_ALGORITHM,
        'xi_effective': xi,
        'units': 'shot-noise',
        'signal': _describe(rho_signal),
        'false': _describe(rho_false),
        'description': description or {},
    }
    logger.debug(f"{int(from_signal.sum())} of {cfg.n_segments} samples drawn from the signal state")
    return QuadratureDataset(segment, phases, x, metadata)


def heralded_source(r: float, reflectivity: float, n_max: Optional[int] = None,
                    tap_levels: Optional[int] = None,
                    input_efficiency: float = 1.0) -> Tuple[DensityMatrix, DensityMatrix]:
    """(heralded, false-herald) states at the tap output for squeezed vacuum S(r)|0⟩.

    With ``input_efficiency`` below one the squeezed beam passes a loss
    channel before it reaches the tap.
    """
    squeezed = squeezed_vacuum(r).density()
    if input_efficiency != 1.0:
        squeezed = apply_loss(squeezed, input_efficiency)
    signal, _ = herald_subtract(squeezed, reflectivity, tap_levels=tap_levels)
    background = apply_loss(squeezed, 1.0 - reflectivity)
    if n_max is not None:
        signal = signal.truncate(n_max)
        background = background.truncate(n_max)
    return signal, background
