"""Cat-state figures of merit and report assembly."""

from dataclasses import dataclass, asdict
from typing import Optional, List, Sequence, Dict, Any

import numpy as np
from scipy.optimize import minimize_scalar

from src.core.errors import DomainError, InvalidState, NoFit
from src.core.fockspace import (
    DensityMatrix, odd_cat_coefficients, squeezed_vacuum, annihilate, fock_state,
    parity_origin, photon_distribution)
from src.core.calib import squeezing_from_db
from src.core.gaussmodel import PredictionConfig, predict_components, mixture_to_fock
from src.utils.logging import get_logger

logger = get_logger()

ALPHA_RANGE = (0.1, 3.0)
ALPHA_STEP = 0.01
FIDELITY_TOLERANCE = 0.03
W00_TOLERANCE = 0.02
# Largest normalized mismatch (F and W(0,0) each within 3 tolerances) a Ξ fit may leave.
NOFIT_THRESHOLD = 18.0
SOURCES = ('predicted', 'reconstructed', 'reconstructed_loss_corrected')


@dataclass(frozen=True)
class CatFidelity:
    fidelity: float
    alpha: float
    at_boundary: bool = False


@dataclass
class AnalysisReport:
    power_mw: float
    fidelity: float
    alpha: float
    w00: float
    photon_dist: List[float]
    source: str = 'predicted'
    xi_fit: Optional[float] = None
    alpha_at_boundary: bool = False

    def __post_init__(self):
        if self.source not in SOURCES:
            raise DomainError(f"unknown report source '{self.source}'", operation="AnalysisReport")
        if not 0.0 <= self.fidelity <= 1.0:
            raise InvalidState("fidelity outside [0, 1]", operation="AnalysisReport")
        if abs(sum(self.photon_dist) - 1.0) > 1e-9:
            raise InvalidState("photon distribution does not sum to 1", operation="AnalysisReport")

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    def table_row(self) -> List[Any]:
        return [self.power_mw, self.fidelity, self.alpha, self.w00,
                '' if self.xi_fit is None else self.xi_fit]


def _cat_overlap(rho: DensityMatrix, alpha: float) -> float:
    """Overlap with the odd cat laid along x or along p, whichever is larger.

    A state squeezed at θ = 0 is elongated along p, so its cat partner is
    |iα⟩ − |−iα⟩ with amplitudes i^n c_n.
    """
    coeffs = odd_cat_coefficients(alpha, rho.n_max)
    along_x = float((coeffs @ rho.elements @ coeffs).real)
    rotated = coeffs * (1j ** np.arange(coeffs.size))
    along_p = float((rotated.conj() @ rho.elements @ rotated).real)
    return max(along_x, along_p)


def cat_fidelity_max(rho: DensityMatrix, alpha_range: Sequence[float] = ALPHA_RANGE) -> CatFidelity:
    """Best odd-cat fidelity: 0.01-step scan, then bounded golden-section refinement."""
    lo, hi = float(alpha_range[0]), float(alpha_range[1])
    if not 0 < lo < hi:
        raise DomainError("alpha range must be increasing and positive", operation="cat_fidelity_max")
    alphas = np.arange(lo, hi + 0.5 * ALPHA_STEP, ALPHA_STEP)
    alphas = alphas[alphas <= hi + 1e-12]
    scan = np.array([_cat_overlap(rho, a) for a in alphas])
    k = int(np.argmax(scan))
    best_alpha, best_f = float(alphas[k]), float(scan[k])

    window = (float(alphas[max(k - 1, 0)]), float(alphas[min(k + 1, len(alphas) - 1)]))
    if window[1] > window[0]:
        refined = minimize_scalar(lambda a: -_cat_overlap(rho, a), bounds=window, method='bounded',
                                  options={'xatol': 1e-9})
        if -refined.fun > best_f:
            best_alpha, best_f = float(refined.x), float(-refined.fun)

    at_boundary = best_alpha - lo < ALPHA_STEP or hi - best_alpha < ALPHA_STEP
    if at_boundary:
        logger.warning(f"Cat fidelity maximum {best_f:.6f} lies at the α search boundary ({best_alpha:.4f})")
    return CatFidelity(float(min(max(best_f, 0.0), 1.0)), best_alpha, bool(at_boundary))


def _subtracted_squeezed(squeezing_db: float, n_max: Optional[int]) -> DensityMatrix:
    r = squeezing_from_db(squeezing_db)
    if r == 0:
        return fock_state(1, n_max or 1).density()
    return annihilate(squeezed_vacuum(r, n_max)).density()


def fidelity_surface(squeezing_db_list: Sequence[float], alpha_list: Sequence[float],
                     n_max: Optional[int] = None) -> np.ndarray:
    """F[i, j] between the ideally subtracted squeezed state at squeezing_db_list[i]
    and the odd cat of amplitude alpha_list[j]."""
    if len(squeezing_db_list) == 0 or len(alpha_list) == 0:
        raise DomainError("squeezing and amplitude lists must be nonempty", operation="fidelity_surface")
    surface = np.zeros((len(squeezing_db_list), len(alpha_list)))
    for i, db in enumerate(squeezing_db_list):
        rho = _subtracted_squeezed(float(db), n_max)
        surface[i] = [_cat_overlap(rho, float(a)) for a in alpha_list]
    logger.debug(f"Fidelity surface {surface.shape}: max {surface.max():.6f}")
    return surface


def wigner_origin(rho: DensityMatrix) -> float:
    """W(0,0) = (1/π) Σ (−1)^n ρ_nn."""
    return parity_origin(rho)


def analyze_state(rho: DensityMatrix, power_mw: float, source: str = 'reconstructed',
                  xi_fit: Optional[float] = None) -> AnalysisReport:
    """Odd-cat fidelity, W(0,0) and photon statistics of one state."""
    best = cat_fidelity_max(rho)
    dist = photon_distribution(rho)
    dist = dist / dist.sum()
    return AnalysisReport(
        power_mw=float(power_mw),
        fidelity=best.fidelity,
        alpha=best.alpha,
        w00=wigner_origin(rho),
        photon_dist=dist.tolist(),
        source=source,
        xi_fit=xi_fit,
        alpha_at_boundary=best.at_boundary,
    )


def fit_xi(measured: AnalysisReport, cfg: PredictionConfig, n_max: int = 30) -> float:
    """Modal purity whose prediction best matches the measured (F_odd, W(0,0)).

    Each quantity is scaled by its reporting tolerance before squaring.
    """
    heralded, background, _ = predict_components(measured.power_mw, cfg)
    rho_h = mixture_to_fock(heralded, n_max)
    rho_b = mixture_to_fock(background, n_max)
    w_h, w_b = heralded.at_origin(), background.at_origin()

    def mismatch(xi: float) -> float:
        fid = cat_fidelity_max(rho_h.mix(rho_b, xi)).fidelity
        w00 = xi * w_h + (1.0 - xi) * w_b
        return ((fid - measured.fidelity) / FIDELITY_TOLERANCE) ** 2 + \
            ((w00 - measured.w00) / W00_TOLERANCE) ** 2

    search = minimize_scalar(mismatch, bounds=(0.0, 1.0), method='bounded', options={'xatol': 1e-6})
    candidates = [(mismatch(1.0), 1.0), (mismatch(0.0), 0.0), (float(search.fun), float(search.x))]
    cost, xi = min(candidates, key=lambda c: c[0])
    if cost > NOFIT_THRESHOLD:
        raise NoFit(f"best modal purity {xi:.4f} leaves normalized mismatch {cost:.2f}",
                    operation="fit_xi", details={'xi': xi, 'mismatch': cost})
    logger.info(f"Fitted modal purity Ξ={xi:.4f} at {measured.power_mw:g} mW (mismatch {cost:.3e})")
    return xi
