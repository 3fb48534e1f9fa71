"""Phase assignment and maximum-likelihood homodyne tomography."""

from dataclasses import dataclass
from typing import Optional, List, Dict, Any

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.stats import norm

from src.core.errors import (
    DomainError, PhaseUnresolvable, IllConditionedCorrection, NotConverged, EmptyData)
from src.core.acquisim import QuadratureDataset, SHOT_NOISE_SCALE
from src.core.fockspace import DensityMatrix, hermite_functions, loss_kraus
from src.utils.logging import get_logger

logger = get_logger()

DEFAULT_EDGES = np.linspace(-6.0, 6.0, 101)
OUTER_LIMIT = 12.0
PIECE_WIDTH = 0.12
UNRESOLVED_FRACTION = 0.05
NOISE_MARGIN = 1.5
PERCENTILES = (2.0, 98.0)
MIN_ETA = 0.5
PROB_FLOOR = 1e-300


def _fold(theta: np.ndarray) -> np.ndarray:
    folded = np.mod(theta, np.pi)
    return np.where(folded > np.pi / 2, np.pi - folded, folded)


@dataclass(frozen=True, eq=False)
class PhaseAssignment:
    """Phase per bin of consecutive samples; the last bin absorbs the remainder."""

    thetas: np.ndarray
    variances: np.ndarray
    bin_size: int
    n_samples: int
    clamped: np.ndarray = None
    v_min: float = float('nan')
    v_max: float = float('nan')

    def __post_init__(self):
        thetas = np.asarray(self.thetas, dtype=float)
        if np.any(thetas < 0) or np.any(thetas > np.pi / 2 + 1e-12):
            raise DomainError("assigned phases must lie in [0, π/2]", operation="PhaseAssignment")
        if len(thetas) != max(self.n_samples // self.bin_size, 0):
            raise DomainError("one phase per bin is required", operation="PhaseAssignment")
        object.__setattr__(self, 'thetas', thetas)
        object.__setattr__(self, 'variances', np.asarray(self.variances, dtype=float))
        clamped = np.zeros(len(thetas), dtype=bool) if self.clamped is None else np.asarray(self.clamped, bool)
        object.__setattr__(self, 'clamped', clamped)

    @property
    def n_bins(self) -> int:
        return len(self.thetas)

    @property
    def bins(self) -> List[tuple]:
        return list(zip(range(self.n_bins), self.thetas.tolist(), self.variances.tolist()))

    def bin_of_sample(self) -> np.ndarray:
        return np.minimum(np.arange(self.n_samples) // self.bin_size, self.n_bins - 1)

    @classmethod
    def from_scan_phases(cls, dataset: QuadratureDataset, bin_size: int = 100) -> "PhaseAssignment":
        """Known-phase assignment: the generated scan phase of each bin, folded into [0, π/2]."""
        index = _bin_index(len(dataset), bin_size)
        n_bins = index[-1] + 1
        thetas = np.array([np.mean(dataset.scan_phase[index == b]) for b in range(n_bins)])
        variances = np.array([np.var(dataset.x[index == b], ddof=1) for b in range(n_bins)])
        return cls(_fold(thetas), variances, bin_size, len(dataset))


def _bin_index(n: int, bin_size: int) -> np.ndarray:
    n_bins = n // bin_size
    if n_bins == 0:
        raise EmptyData(f"{n} samples do not fill one bin of {bin_size}", operation="bin samples")
    return np.minimum(np.arange(n) // bin_size, n_bins - 1)


def estimate_phases(dataset: QuadratureDataset, v_min: Optional[float] = None,
                    v_max: Optional[float] = None, bin_size: int = 100) -> PhaseAssignment:
    """Assign each bin the phase whose variance V_min cos²θ + V_max sin²θ matches the bin."""
    if bin_size < 2:
        raise DomainError("bin_size must be at least 2", operation="estimate_phases")
    index = _bin_index(len(dataset), bin_size)
    n_bins = index[-1] + 1
    variances = np.array([np.var(dataset.x[index == b], ddof=1) for b in range(n_bins)])

    estimated = v_min is None and v_max is None
    lo_pct, hi_pct = np.percentile(variances, PERCENTILES)
    v_min = float(lo_pct) if v_min is None else float(v_min)
    v_max = float(hi_pct) if v_max is None else float(v_max)
    if v_min <= 0 or v_max <= v_min or v_max - v_min < UNRESOLVED_FRACTION * v_min:
        raise PhaseUnresolvable(f"variance range [{v_min:.4f}, {v_max:.4f}] is too narrow",
                                operation="estimate_phases", details={'v_min': v_min, 'v_max': v_max})
    if estimated:
        # spread expected from sampling noise alone at these percentiles
        z = norm.ppf(PERCENTILES[1] / 100.0)
        noise_spread = 2.0 * z * np.sqrt(2.0 / (bin_size - 1)) * float(np.median(variances))
        if v_max - v_min < NOISE_MARGIN * noise_spread:
            raise PhaseUnresolvable(
                f"variance spread {v_max - v_min:.4f} is within sampling noise ({noise_spread:.4f})",
                operation="estimate_phases", details={'v_min': v_min, 'v_max': v_max})

    ratio = (variances - v_min) / (v_max - v_min)
    clamped = (ratio < 0) | (ratio > 1)
    thetas = np.arcsin(np.sqrt(np.clip(ratio, 0.0, 1.0)))
    if clamped.any():
        logger.debug(f"{int(clamped.sum())} of {n_bins} bins clamped to the variance range")
    logger.info(f"Assigned phases to {n_bins} bins (V_min={v_min:.4f}, V_max={v_max:.4f})")
    return PhaseAssignment(thetas, variances, bin_size, len(dataset), clamped, v_min, v_max)


@dataclass(frozen=True, eq=False)
class PovmSet:
    """Histogram POVM: element (i, j) is Φ(θ_i) B_j Φ(θ_i)†, Φ = diag(e^{inθ}).

    ``base`` holds the real θ = 0 operators B_j, already passed through the
    adjoint loss map when ``eta_correction`` < 1.
    """

    base: np.ndarray
    thetas: np.ndarray
    x_edges: np.ndarray
    eta_correction: float = 1.0

    @property
    def n_max(self) -> int:
        return self.base.shape[1] - 1

    def rotation(self, i: int) -> np.ndarray:
        return np.exp(1j * self.thetas[i] * np.arange(self.n_max + 1))

    def element(self, i: int, j: int) -> np.ndarray:
        phase = self.rotation(i)
        return phase[:, None] * self.base[j] * phase.conj()[None, :]


def _bin_integrals(n_max: int, edges: np.ndarray) -> np.ndarray:
    """∫ ψ_m ψ_n over each bin, outer bins extended to ±12."""
    limits = np.array(edges, dtype=float)
    limits[0] = min(limits[0], -OUTER_LIMIT)
    limits[-1] = max(limits[-1], OUTER_LIMIT)
    nodes, weights = leggauss(8)
    out = np.zeros((len(edges) - 1, n_max + 1, n_max + 1))
    for j in range(len(edges) - 1):
        pieces = int(np.ceil((limits[j + 1] - limits[j]) / PIECE_WIDTH))
        cuts = np.linspace(limits[j], limits[j + 1], pieces + 1)
        half = 0.5 * np.diff(cuts)
        mid = 0.5 * (cuts[1:] + cuts[:-1])
        xs = (mid[:, None] + half[:, None] * nodes[None, :]).ravel()
        ws = (half[:, None] * weights[None, :]).ravel()
        psi = hermite_functions(n_max, xs)
        out[j] = (psi * ws) @ psi.T
    return out


def _adjoint_loss(op: np.ndarray, eta: float) -> np.ndarray:
    dim = op.shape[0]
    out = np.zeros_like(op)
    for k in range(dim):
        kraus = loss_kraus(dim, eta, k)
        out += kraus.T @ op @ kraus
    return out


def build_povm(assignment: PhaseAssignment, x_edges=None, n_max: int = 15, eta: float = 1.0) -> PovmSet:
    """POVM for the assigned phases; eta < 1 corrects detection loss."""
    edges = DEFAULT_EDGES if x_edges is None else np.asarray(x_edges, dtype=float)
    if edges.ndim != 1 or len(edges) < 2 or np.any(np.diff(edges) <= 0):
        raise DomainError("histogram edges must be strictly increasing", operation="build_povm")
    if edges[0] > -6.0 or edges[-1] < 6.0:
        raise DomainError("histogram edges must cover [-6, 6]", operation="build_povm")
    if eta > 1.0:
        raise DomainError(f"efficiency must not exceed 1, got {eta}", operation="build_povm")
    if eta < MIN_ETA:
        raise IllConditionedCorrection(f"loss correction for η={eta} is unstable (η < {MIN_ETA})",
                                       operation="build_povm")
    base = _bin_integrals(n_max, edges)
    if eta < 1.0:
        base = np.array([_adjoint_loss(b, eta) for b in base])
    logger.debug(f"Built POVM: {assignment.n_bins} phases x {len(edges) - 1} bins, n_max={n_max}, η={eta}")
    return PovmSet(base, assignment.thetas.copy(), edges, float(eta))


def histogram_counts(dataset: QuadratureDataset, assignment: PhaseAssignment, x_edges) -> np.ndarray:
    """Counts f_ij of samples in phase bin i and quadrature bin j (Wigner-unit edges)."""
    if assignment.n_samples != len(dataset):
        raise DomainError("phase assignment was built for a different dataset", operation="histogram_counts")
    edges = np.asarray(x_edges, dtype=float)
    x = np.clip(dataset.x / SHOT_NOISE_SCALE, edges[0], edges[-1])
    xbin = np.clip(np.searchsorted(edges, x, side='right') - 1, 0, len(edges) - 2)
    counts = np.zeros((assignment.n_bins, len(edges) - 1), dtype=int)
    np.add.at(counts, (assignment.bin_of_sample(), xbin), 1)
    return counts


@dataclass
class ReconstructionResult:
    rho: DensityMatrix
    log_likelihood_trace: List[float]
    iterations: int
    converged: bool
    eta_correction: float = 1.0
    bin_size: int = 100
    stalled: bool = False

    @property
    def final_ll(self) -> float:
        return self.log_likelihood_trace[-1]

    def to_report(self) -> Dict[str, Any]:
        return {
            'rho': self.rho.to_dict(),
            'iterations': self.iterations,
            'final_ll': self.final_ll,
            'converged': self.converged,
            'eta_correction': self.eta_correction,
            'n_max': self.rho.n_max,
            'bin_size': self.bin_size,
            'stalled': self.stalled,
        }


class _Likelihood:
    """Log-likelihood and R operator over the nonzero histogram cells."""

    def __init__(self, counts: np.ndarray, povm: PovmSet):
        dim = povm.n_max + 1
        levels = np.arange(dim)
        self.freq = counts / counts.sum()
        self.base = povm.base.reshape(povm.base.shape[0], -1)
        # phase factors e^{-i(m-n)θ_i} rotating ρ into each bin's frame
        diff = levels[:, None] - levels[None, :]
        self.rot = np.exp(-1j * povm.thetas[:, None, None] * diff[None, :, :]).reshape(len(povm.thetas), -1)
        self.dim = dim
        self.mask = self.freq > 0

    def probabilities(self, rho: np.ndarray) -> np.ndarray:
        return np.maximum(((self.rot * rho.ravel()[None, :]) @ self.base.T).real, PROB_FLOOR)

    def log_likelihood(self, rho: np.ndarray) -> float:
        p = self.probabilities(rho)
        return float(np.sum(self.freq[self.mask] * np.log(p[self.mask])))

    def r_operator(self, rho: np.ndarray) -> np.ndarray:
        weights = np.where(self.mask, self.freq / self.probabilities(rho), 0.0)
        # Σ_j w_ij B_j per phase bin, rotated back to the lab frame
        r = ((weights @ self.base) * self.rot.conj()).sum(axis=0).reshape(self.dim, self.dim)
        return 0.5 * (r + r.conj().T)


def _step(rho: np.ndarray, r: np.ndarray) -> np.ndarray:
    out = r @ rho @ r
    out = 0.5 * (out + out.conj().T)
    return out / np.trace(out).real


def mle_reconstruct(dataset: QuadratureDataset, assignment: PhaseAssignment, povm: PovmSet,
                    rel_ll_change: float = 1e-9, max_iter: int = 2000,
                    strict: bool = False) -> ReconstructionResult:
    """Iterative RρR maximum-likelihood reconstruction from binned counts.

    A step that would lower the likelihood is replaced by the diluted update
    (I + εR)/(1 + ε), halving ε until the likelihood does not decrease. When
    even the most diluted step loses likelihood the run stops as stalled.
    """
    if len(dataset) == 0:
        raise EmptyData("no samples to reconstruct from", operation="mle_reconstruct")
    if len(povm.thetas) != assignment.n_bins:
        raise DomainError("POVM and phase assignment differ in bin count", operation="mle_reconstruct")
    counts = histogram_counts(dataset, assignment, povm.x_edges)
    model = _Likelihood(counts, povm)
    dim = model.dim
    identity = np.eye(dim)

    rho = identity / dim
    ll = model.log_likelihood(rho)
    trace = [ll]
    converged = False
    stalled = False
    iterations = 0
    logger.info(f"MLE reconstruction: {len(dataset)} samples, n_max={dim - 1}, η={povm.eta_correction}")
    for iterations in range(1, max_iter + 1):
        r = model.r_operator(rho)
        candidate = _step(rho, r)
        cand_ll = model.log_likelihood(candidate)
        eps = 1.0
        while cand_ll < ll and eps > 1e-12:
            diluted = (identity + eps * r) / (1.0 + eps)
            candidate = _step(rho, diluted)
            cand_ll = model.log_likelihood(candidate)
            eps *= 0.5
        if cand_ll < ll:
            # a shortfall within tolerance is round-off at the maximum
            converged = ll - cand_ll <= rel_ll_change * abs(ll)
            stalled = not converged
            break
        change = (cand_ll - ll) / abs(ll) if ll != 0 else 0.0
        rho, ll = candidate, cand_ll
        trace.append(ll)
        if iterations % 100 == 0:
            logger.debug(f"MLE iteration {iterations}: log-likelihood {ll:.10f}")
        if change < rel_ll_change:
            converged = True
            break

    result = ReconstructionResult(DensityMatrix.from_unnormalized(rho), trace, iterations, converged,
                                  povm.eta_correction, assignment.bin_size, stalled)
    if not converged:
        reason = "stalled: no diluted step raises the likelihood" if stalled else \
            f"no convergence within {max_iter} iterations"
        logger.warning(f"MLE stopped after {iterations} iterations ({reason})")
        if strict:
            raise NotConverged(reason, operation="mle_reconstruct",
                               details={'iterations': iterations, 'final_ll': ll, 'stalled': stalled})
    else:
        logger.info(f"MLE converged after {iterations} iterations (log-likelihood {ll:.8f})")
    return result
