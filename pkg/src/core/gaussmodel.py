"""Signed Gaussian-mixture Wigner model of heralded photon subtraction.

Every operation maps mixtures to mixtures in closed form, so the prediction
pipeline never needs a Fock truncation until mixture_to_fock is called.
Covariances are in Wigner units (vacuum = I/2).
"""

from dataclasses import dataclass, asdict
from enum import Enum
from typing import List, Tuple, Optional, Dict, Any, Sequence

import numpy as np
from scipy.optimize import brentq

from src.core.errors import (
    DomainError, InvalidState, HeraldImpossible, UncertaintyViolation, QuadratureFailure, NoFit)
from src.core.fockspace import DensityMatrix, hermite_functions, TAIL_LIMIT
from src.utils.logging import get_logger

logger = get_logger()

WEIGHT_TOL = 1e-9
CLICK_FLOOR = 1e-12
FOCK_PSD_TOL = -1e-6
GRID_HALF_WIDTH = 10.0
GRID_STEP = 0.05
NORMALIZATION_TOL = 1e-5
ZERO_NEGATIVITY_TOL = 1e-9

_IDENTITY = np.eye(2)


def _frozen(array, shape) -> np.ndarray:
    out = np.array(array, dtype=float, copy=True).reshape(shape)
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class GaussianComponent:
    """One signed Gaussian term w·N(mean, cov) of a Wigner function."""

    weight: float
    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = _frozen(self.mean, (2,))
        cov = np.array(self.cov, dtype=float).reshape(2, 2)
        if abs(cov[0, 1] - cov[1, 0]) > 1e-12:
            raise InvalidState("component covariance is not symmetric", operation="GaussianComponent")
        cov = 0.5 * (cov + cov.T)
        if np.linalg.eigvalsh(cov)[0] <= 0:
            raise InvalidState("component covariance is not positive definite",
                               operation="GaussianComponent")
        object.__setattr__(self, 'weight', float(self.weight))
        object.__setattr__(self, 'mean', mean)
        object.__setattr__(self, 'cov', _frozen(cov, (2, 2)))

    def evaluate(self, x, p) -> np.ndarray:
        inv = np.linalg.inv(self.cov)
        dx = np.asarray(x, dtype=float) - self.mean[0]
        dp = np.asarray(p, dtype=float) - self.mean[1]
        quad = inv[0, 0] * dx * dx + 2.0 * inv[0, 1] * dx * dp + inv[1, 1] * dp * dp
        return self.weight * np.exp(-0.5 * quad) / (2.0 * np.pi * np.sqrt(np.linalg.det(self.cov)))


@dataclass(frozen=True, eq=False)
class GaussianMixtureWigner:
    """Normalized signed mixture of Gaussian components."""

    components: Tuple[GaussianComponent, ...]

    def __post_init__(self):
        comps = tuple(self.components)
        if not comps:
            raise InvalidState("a mixture needs at least one component", operation="GaussianMixtureWigner")
        total = sum(c.weight for c in comps)
        if abs(total - 1.0) > WEIGHT_TOL:
            raise InvalidState(f"mixture weights sum to {total:.12f}, expected 1",
                               operation="GaussianMixtureWigner", details={'total_weight': total})
        object.__setattr__(self, 'components', comps)

    def __call__(self, x, p):
        total = sum(c.evaluate(x, p) for c in self.components)
        return float(total) if np.ndim(total) == 0 else total

    @property
    def total_weight(self) -> float:
        return float(sum(c.weight for c in self.components))

    def at_origin(self) -> float:
        return self(0.0, 0.0)


def _normalized(components: Sequence[GaussianComponent], norm: float) -> GaussianMixtureWigner:
    return GaussianMixtureWigner(tuple(
        GaussianComponent(c.weight / norm, c.mean, c.cov) for c in components))


def squeezed_wigner(v_x: float, v_p: float) -> GaussianMixtureWigner:
    """Gaussian state with shot-noise-normalized variances v_x, v_p (vacuum = 1)."""
    if v_x <= 0 or v_p <= 0:
        raise DomainError("variances must be positive", operation="squeezed_wigner")
    if v_x * v_p < 1.0 - 1e-9:
        raise UncertaintyViolation(f"V_x·V_p = {v_x * v_p:.6f} < 1",
                                   operation="squeezed_wigner",
                                   details={'v_x': v_x, 'v_p': v_p})
    return GaussianMixtureWigner((GaussianComponent(1.0, np.zeros(2), np.diag([v_x / 2.0, v_p / 2.0])),))


def subtract_click(state: GaussianMixtureWigner, reflectivity: float) -> Tuple[GaussianMixtureWigner, float]:
    """Herald on a click of the tap mode after a beamsplitter of reflectivity R.

    Each input component yields the unconditioned transmitted Gaussian minus
    the tap-vacuum-conditioned Gaussian weighted by its vacuum probability.
    """
    if not 0.0 < reflectivity < 1.0:
        raise DomainError(f"reflectivity must lie in (0, 1), got {reflectivity}",
                          operation="subtract_click")
    t = 1.0 - reflectivity
    r = reflectivity
    out: List[GaussianComponent] = []
    click = 0.0
    for comp in state.components:
        sigma, mean = comp.cov, comp.mean
        c11 = t * sigma + 0.5 * r * _IDENTITY
        c22 = r * sigma + 0.5 * t * _IDENTITY
        c12 = np.sqrt(t * r) * (0.5 * _IDENTITY - sigma)
        m1 = np.sqrt(t) * mean
        m2 = -np.sqrt(r) * mean
        s = c22 + 0.5 * _IDENTITY
        s_inv = np.linalg.inv(s)
        p_vac = float(np.exp(-0.5 * m2 @ s_inv @ m2) / np.sqrt(np.linalg.det(s)))
        m_cond = m1 - c12 @ s_inv @ m2
        cov_cond = c11 - c12 @ s_inv @ c12.T
        out.append(GaussianComponent(comp.weight, m1, c11))
        out.append(GaussianComponent(-comp.weight * p_vac, m_cond, cov_cond))
        click += comp.weight * (1.0 - p_vac)
    if click < CLICK_FLOOR:
        raise HeraldImpossible(f"click probability {click:.3e} is below {CLICK_FLOOR:g}",
                               operation="subtract_click", details={'click_probability': click})
    logger.debug(f"Gaussian herald R={reflectivity:.4f}: click probability {click:.6e}")
    return _normalized(out, click), float(click)


def mix_modal_purity(heralded: GaussianMixtureWigner, background: GaussianMixtureWigner,
                     xi: float) -> GaussianMixtureWigner:
    """Ξ·heralded + (1 − Ξ)·background; zero-weight branches are dropped."""
    if not 0.0 <= xi <= 1.0:
        raise DomainError(f"modal purity must lie in [0, 1], got {xi}", operation="mix_modal_purity")
    comps = []
    if xi > 0:
        comps += [GaussianComponent(xi * c.weight, c.mean, c.cov) for c in heralded.components]
    if xi < 1:
        comps += [GaussianComponent((1.0 - xi) * c.weight, c.mean, c.cov) for c in background.components]
    return GaussianMixtureWigner(tuple(comps))


def apply_gaussian_loss(state: GaussianMixtureWigner, eta: float) -> GaussianMixtureWigner:
    """Loss with transmission eta: mean → √η·mean, cov → η·cov + (1−η)/2·I."""
    if not 0.0 <= eta <= 1.0:
        raise DomainError(f"efficiency must lie in [0, 1], got {eta}", operation="apply_gaussian_loss")
    return GaussianMixtureWigner(tuple(
        GaussianComponent(c.weight, np.sqrt(eta) * c.mean, eta * c.cov + 0.5 * (1.0 - eta) * _IDENTITY)
        for c in state.components))


def undo_gaussian_loss(state: GaussianMixtureWigner, eta: float) -> GaussianMixtureWigner:
    """Inverse of apply_gaussian_loss."""
    if not 0.0 < eta <= 1.0:
        raise DomainError(f"efficiency must lie in (0, 1], got {eta}", operation="undo_gaussian_loss")
    comps = []
    for c in state.components:
        cov = (c.cov - 0.5 * (1.0 - eta) * _IDENTITY) / eta
        if np.linalg.eigvalsh(cov)[0] <= 0:
            raise UncertaintyViolation(f"loss {1.0 - eta:.4f} cannot be removed from this state",
                                       operation="undo_gaussian_loss")
        comps.append(GaussianComponent(c.weight, c.mean / np.sqrt(eta), cov))
    return GaussianMixtureWigner(tuple(comps))


def purity_at_zero_negativity(heralded: GaussianMixtureWigner,
                              background: GaussianMixtureWigner) -> float:
    """Modal purity at which the mixed Wigner function vanishes at the origin.

    W(0,0) is linear in Ξ, so the bracketed root must agree with
    W_b/(W_b − W_h); a disagreement means the mixture was not built from
    these two states.
    """
    w_h = heralded.at_origin()
    w_b = background.at_origin()
    if not w_h < 0.0 < w_b:
        raise NoFit("no sign change of W(0,0) between background and heralded state",
                    operation="purity_at_zero_negativity",
                    details={'w_heralded': w_h, 'w_background': w_b})
    root = brentq(lambda xi: mix_modal_purity(heralded, background, xi).at_origin(),
                  0.0, 1.0, xtol=1e-14, rtol=4 * np.finfo(float).eps)
    closed = w_b / (w_b - w_h)
    if abs(root - closed) > ZERO_NEGATIVITY_TOL:
        raise QuadratureFailure(f"zero-negativity purity {root:.12f} differs from {closed:.12f}",
                                operation="purity_at_zero_negativity",
                                details={'root': root, 'closed_form': closed})
    logger.debug(f"Zero-negativity purity {root:.12f}")
    return float(root)


def _component_position_kernel(comp: GaussianComponent, xs: np.ndarray) -> np.ndarray:
    """⟨x|ρ_c|x'⟩ on the grid for a single Gaussian term."""
    a, c, b = comp.cov[0, 0], comp.cov[0, 1], comp.cov[1, 1]
    mu_x, mu_p = comp.mean
    q = 0.5 * (xs[:, None] + xs[None, :])
    y = xs[:, None] - xs[None, :]
    marginal = np.exp(-0.5 * (q - mu_x) ** 2 / a) / np.sqrt(2.0 * np.pi * a)
    cond_mean = mu_p + (c / a) * (q - mu_x)
    cond_var = b - c * c / a
    return comp.weight * marginal * np.exp(1j * y * cond_mean - 0.5 * y * y * cond_var)


def mixture_to_fock(state: GaussianMixtureWigner, n_max: int) -> DensityMatrix:
    """Fock-basis density matrix of a mixture, levels 0..n_max.

    Each component is written in the position representation and projected
    onto Hermite functions on a uniform grid over [−10, 10].
    """
    xs = np.arange(-GRID_HALF_WIDTH, GRID_HALF_WIDTH + 0.5 * GRID_STEP, GRID_STEP)
    kernel = np.zeros((xs.size, xs.size), dtype=complex)
    for comp in state.components:
        kernel += _component_position_kernel(comp, xs)
    mass = float(np.trace(kernel).real * GRID_STEP)
    if abs(mass - state.total_weight) > NORMALIZATION_TOL:
        raise QuadratureFailure(f"grid integral {mass:.8f} differs from total weight {state.total_weight:.8f}",
                                operation="mixture_to_fock", details={'grid_mass': mass})
    psi = hermite_functions(n_max, xs)
    rho = psi @ kernel @ psi.T * GRID_STEP ** 2
    rho = 0.5 * (rho + rho.conj().T)
    tail = 1.0 - float(np.trace(rho).real)
    if tail > TAIL_LIMIT:
        logger.warning(f"Mixture population above n_max={n_max} is {tail:.3e}")
    else:
        logger.debug(f"Mixture population above n_max={n_max} is {tail:.3e}")
    return DensityMatrix.from_unnormalized(rho, psd_tol=FOCK_PSD_TOL)


# ---------------------------------------------------------------------------
# Prediction pipeline
# ---------------------------------------------------------------------------

class CorrectionView(str, Enum):
    """Which losses remain in a predicted state."""

    UNCORRECTED = "uncorrected"
    HOMODYNE = "homodyne"
    ALT_INPUT = "alt_input"
    ALT_OUTPUT = "alt_output"


@dataclass(frozen=True)
class PredictionConfig:
    gain_c: float = 0.28
    tap_R: float = 0.077
    eta_hd: float = 0.77
    eta_bs: float = 0.92
    eta_alt: float = 0.62
    xi: float = 1.0
    view: CorrectionView = CorrectionView.UNCORRECTED

    def __post_init__(self):
        if self.gain_c <= 0:
            raise DomainError("gain_c must be positive", operation="PredictionConfig")
        if not 0.0 < self.tap_R < 1.0:
            raise DomainError("tap_R must lie in (0, 1)", operation="PredictionConfig")
        for name in ("eta_hd", "eta_bs", "eta_alt", "xi"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise DomainError(f"{name} must lie in [0, 1], got {value}", operation="PredictionConfig")
        object.__setattr__(self, 'view', CorrectionView(self.view))

    @classmethod
    def from_experiment(cls, exp, view=CorrectionView.UNCORRECTED, xi: Optional[float] = None,
                        power_mw: Optional[float] = None) -> "PredictionConfig":
        """Derive from an ExperimentConfig; Ξ defaults to the global value."""
        if xi is None:
            xi = exp.xi_for(power_mw) if power_mw is not None else exp.xi
        return cls(gain_c=exp.gain_c, tap_R=exp.tap_R, eta_hd=exp.eta_hd, eta_bs=exp.eta_bs,
                   eta_alt=exp.eta_alt, xi=xi, view=CorrectionView(view))

    @property
    def input_efficiency(self) -> float:
        """Efficiency of the squeezed beam before the tap.

        The part of the measured-squeezing efficiency not explained by the tap
        transmission and the homodyne detector.
        """
        return min(1.0, self.eta_alt / (self.eta_bs * self.eta_hd))


@dataclass(frozen=True)
class PredictionRecord:
    power_mw: float
    fidelity: float
    alpha: float
    w00: float
    success_prob: float
    xi: float
    view: str = CorrectionView.UNCORRECTED.value
    alpha_at_boundary: bool = False

    def __post_init__(self):
        if not 0.0 <= self.fidelity <= 1.0 or self.alpha <= 0:
            raise InvalidState("prediction record out of range", operation="PredictionRecord")

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    def table_row(self) -> List[float]:
        return [self.power_mw, self.fidelity, self.alpha, self.w00]


def _apply_view(state: GaussianMixtureWigner, cfg: PredictionConfig) -> GaussianMixtureWigner:
    """Heralded output as seen in the requested view.

    Only the detection loss η_hd acts after the herald. The output-side
    alternative removes the input impurity from the homodyne-corrected state
    as if it had happened after the tap.
    """
    if cfg.view is CorrectionView.UNCORRECTED:
        return apply_gaussian_loss(state, cfg.eta_hd)
    if cfg.view is CorrectionView.ALT_OUTPUT:
        return undo_gaussian_loss(state, cfg.input_efficiency)
    return state


def _input_state(r: float, cfg: PredictionConfig) -> GaussianMixtureWigner:
    squeezed = squeezed_wigner(np.exp(-2.0 * r), np.exp(2.0 * r))
    if cfg.view is CorrectionView.ALT_INPUT:
        return squeezed
    return apply_gaussian_loss(squeezed, cfg.input_efficiency)


def predict_components(power_mw: float, cfg: PredictionConfig
                       ) -> Tuple[GaussianMixtureWigner, GaussianMixtureWigner, float]:
    """Heralded and false-herald states in the configured view plus the click probability.

    The squeezed beam reaches the tap already mixed with vacuum at the input
    efficiency. The false-herald state is that beam after the tap
    transmission, seen when the click was uncorrelated with the homodyne mode.
    """
    if power_mw < 0:
        raise DomainError("pump power must be nonnegative", operation="predict_components")
    r = cfg.gain_c * np.sqrt(power_mw)
    source = _input_state(r, cfg)
    heralded, click = subtract_click(source, cfg.tap_R)
    background = apply_gaussian_loss(source, 1.0 - cfg.tap_R)
    return _apply_view(heralded, cfg), _apply_view(background, cfg), click


def predict_state(power_mw: float, cfg: PredictionConfig, n_max: int = 30) -> PredictionRecord:
    """Predicted figures of merit for one pump power."""
    # catanalysis imports this module for Ξ fitting
    from src.core.catanalysis import cat_fidelity_max

    logger.info(f"Predicting {power_mw:g} mW ({cfg.view.value}, Ξ={cfg.xi:.3f})")
    heralded, background, click = predict_components(power_mw, cfg)
    state = mix_modal_purity(heralded, background, cfg.xi)
    rho = mixture_to_fock(state, n_max)
    best = cat_fidelity_max(rho)
    return PredictionRecord(
        power_mw=float(power_mw),
        fidelity=best.fidelity,
        alpha=best.alpha,
        w00=state.at_origin(),
        success_prob=click,
        xi=cfg.xi,
        view=cfg.view.value,
        alpha_at_boundary=best.at_boundary,
    )
