"""Calibration models and curve fits for the squeezing source and detector."""

from dataclasses import dataclass, asdict
from typing import Dict, List, Optional, Sequence, Tuple, Any, Callable

import numpy as np
import lmfit

from src.core.errors import DomainError, FitDiverged, NoSignal, EmptyData
from src.utils.file_service import get_file_service
from src.utils.logging import get_logger

logger = get_logger()

# Detection efficiency from the component budget.
ETA_HD_BUDGET = 0.77
# Total efficiency inferred from the measured squeezing.
ETA_MEASURED = 0.62

FIT_STARTS = 5
FIT_OPTIONS = {'xatol': 1e-10, 'fatol': 1e-14, 'maxiter': 500}

CSV_HEADERS = {
    'shg': ('P', 'eta'),
    'gain': ('P', 'vmin', 'vmax'),
    'squeezing': ('P', 'vmin', 'vmax'),
}


def _check_efficiency(value: float, name: str) -> float:
    if not 0.0 <= value <= 1.0:
        raise DomainError(f"{name} must lie in [0, 1], got {value}", operation=name)
    return float(value)


@dataclass(frozen=True)
class GainModelParams:
    c: float = 0.28
    epsilon: float = 0.77

    def __post_init__(self):
        if self.c <= 0:
            raise DomainError("gain coefficient must be positive", operation="GainModelParams")
        _check_efficiency(self.epsilon, "epsilon")


@dataclass(frozen=True)
class ShgModelParams:
    eta_inf: float = 0.53
    g: float = 0.18

    def __post_init__(self):
        if self.eta_inf <= 0 or self.g <= 0:
            raise DomainError("SHG parameters must be positive", operation="ShgModelParams")
        _check_efficiency(self.eta_inf, "eta_inf")


@dataclass(frozen=True)
class DetectorModel:
    gain_mv2_per_1e6_photons: float = 13.6
    elec_noise_mv2: float = 3.7

    def __post_init__(self):
        if self.gain_mv2_per_1e6_photons <= 0 or self.elec_noise_mv2 <= 0:
            raise DomainError("detector gain and noise must be positive", operation="DetectorModel")


@dataclass(frozen=True)
class EfficiencyBudget:
    eta_op: float = 0.90
    eta_mm: float = 0.95
    eta_ph: float = 0.95
    eta_el: float = 0.995

    def __post_init__(self):
        for name in ("eta_op", "eta_mm", "eta_ph", "eta_el"):
            _check_efficiency(getattr(self, name), name)


@dataclass
class FitReport:
    kind: str
    params: Dict[str, float]
    residual_rms: float
    n_points: int
    nfev: int = 0
    starts: int = FIT_STARTS

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


# ---------------------------------------------------------------------------
# Models
# ---------------------------------------------------------------------------

def shg_efficiency(power_mw, p: ShgModelParams = ShgModelParams()):
    """η∞·tanh²(g√P_F)."""
    power = np.asarray(power_mw, dtype=float)
    if np.any(power < 0):
        raise DomainError("fundamental power must be nonnegative", operation="shg_efficiency")
    value = p.eta_inf * np.tanh(p.g * np.sqrt(power)) ** 2
    return float(value) if value.ndim == 0 else value


def squeezing_parameter(power_mw, c: float):
    """r = c√P_p."""
    power = np.asarray(power_mw, dtype=float)
    if np.any(power < 0):
        raise DomainError("pump power must be nonnegative", operation="squeezing_parameter")
    return c * np.sqrt(power)


def _mixed_pair(r, weight: float) -> Tuple[Any, Any]:
    low = weight * np.exp(-2.0 * r) + (1.0 - weight)
    high = weight * np.exp(2.0 * r) + (1.0 - weight)
    if np.ndim(low) == 0:
        return float(low), float(high)
    return low, high


def parametric_gain(power_mw, p: GainModelParams = GainModelParams()):
    """Seed de-amplification and amplification (g_min, g_max) at pump power P_p.

    g_min pairs with e^(−2r): the attenuated branch.
    """
    return _mixed_pair(squeezing_parameter(power_mw, p.c), p.epsilon)


def squeezing_variance(power_mw, c: float, eta: float):
    """(V_min, V_max) in shot-noise units for total efficiency eta."""
    _check_efficiency(eta, "eta")
    return _mixed_pair(squeezing_parameter(power_mw, c), eta)


def homodyne_efficiency(b: EfficiencyBudget) -> float:
    """η_op·η_mm²·η_ph·η_el."""
    return _check_efficiency(b.eta_op * b.eta_mm ** 2 * b.eta_ph * b.eta_el, "homodyne_efficiency")


def electronic_noise_efficiency(clearance_db: float) -> float:
    if clearance_db < 0:
        raise DomainError("clearance must be nonnegative", operation="electronic_noise_efficiency")
    return _check_efficiency(1.0 - 10.0 ** (-clearance_db / 10.0), "electronic_noise_efficiency")


def shot_noise_clearance(n_lo_photons: float, d: DetectorModel = DetectorModel()) -> float:
    """Shot-noise to electronic-noise ratio in dB for an LO of n photons per pulse."""
    if n_lo_photons < 0:
        raise DomainError("photon number must be nonnegative", operation="shot_noise_clearance")
    if n_lo_photons == 0:
        raise NoSignal("no local-oscillator photons", operation="shot_noise_clearance")
    shot = d.gain_mv2_per_1e6_photons * n_lo_photons / 1e6
    return float(10.0 * np.log10(shot / d.elec_noise_mv2))


def to_db(ratio):
    return 10.0 * np.log10(ratio)


def from_db(db):
    return 10.0 ** (np.asarray(db, dtype=float) / 10.0)


def squeezing_from_db(squeezing_db):
    """r for a pure squeezed state whose squeezed variance is squeezing_db below shot noise."""
    db = np.asarray(squeezing_db, dtype=float)
    if np.any(db < 0):
        raise DomainError("squeezing level must be nonnegative", operation="squeezing_from_db")
    r = db * np.log(10.0) / 20.0
    return float(r) if r.ndim == 0 else r


# ---------------------------------------------------------------------------
# Fits
# ---------------------------------------------------------------------------

def _shg_setup():
    params = lmfit.Parameters()
    params.add('eta_inf', value=0.5, min=1e-6, max=1.0)
    params.add('g', value=0.2, min=1e-6, max=5.0)

    def residual(pars, data):
        p = ShgModelParams(pars['eta_inf'].value, pars['g'].value)
        return shg_efficiency(data[:, 0], p) - data[:, 1]
    return params, residual


def _gain_setup():
    params = lmfit.Parameters()
    params.add('c', value=0.3, min=1e-6, max=5.0)
    params.add('epsilon', value=0.8, min=0.0, max=1.0)

    def residual(pars, data):
        low, high = parametric_gain(data[:, 0], GainModelParams(pars['c'].value, pars['epsilon'].value))
        return np.concatenate([low - data[:, 1], high - data[:, 2]])
    return params, residual


def _squeezing_setup():
    params = lmfit.Parameters()
    params.add('c', value=0.3, min=1e-6, max=5.0)
    params.add('eta', value=0.6, min=0.0, max=1.0)

    def residual(pars, data):
        low, high = squeezing_variance(data[:, 0], pars['c'].value, pars['eta'].value)
        return np.concatenate([low - data[:, 1], high - data[:, 2]])
    return params, residual


_FIT_SETUPS: Dict[str, Callable] = {
    'shg': _shg_setup,
    'gain': _gain_setup,
    'squeezing': _squeezing_setup,
}


def _start_points(params: lmfit.Parameters, rng: np.random.Generator) -> List[lmfit.Parameters]:
    starts = [params]
    for _ in range(FIT_STARTS - 1):
        trial = params.copy()
        for par in trial.values():
            par.set(value=float(np.clip(par.value * rng.uniform(0.5, 1.5), par.min, par.max)))
        starts.append(trial)
    return starts


def fit_curve(kind: str, points: Sequence[Sequence[float]],
              initial: Optional[Dict[str, float]] = None) -> FitReport:
    """Least-squares fit of one calibration model by multi-start Nelder-Mead.

    ``points`` rows are (x, y) for 'shg' and (x, y_min, y_max) for 'gain' and
    'squeezing'; both branches enter the residual with equal weight.
    ``initial`` replaces the first start for the parameters it names.
    """
    if kind not in _FIT_SETUPS:
        raise DomainError(f"unknown fit kind '{kind}'", operation="fit_curve")
    data = np.asarray(points, dtype=float)
    width = len(CSV_HEADERS[kind])
    if data.ndim != 2 or data.shape[1] < width:
        raise DomainError(f"{kind} fit needs rows of {width} values", operation="fit_curve")
    if np.any(data[:, 0] < 0):
        raise DomainError("abscissae must be nonnegative", operation="fit_curve")
    if len(data) < 3 or len(np.unique(data[:, 0])) < 3:
        raise FitDiverged(f"{kind} fit is underdetermined: need 3 distinct abscissae, got "
                          f"{len(np.unique(data[:, 0]))}", operation="fit_curve")

    params, residual = _FIT_SETUPS[kind]()
    for name, value in (initial or {}).items():
        if name in params:
            par = params[name]
            par.set(value=float(np.clip(value, par.min, par.max)))
    rng = np.random.default_rng(len(data))
    best = None
    nfev = 0
    for start in _start_points(params, rng):
        result = lmfit.minimize(residual, start, method='nelder', args=(data,),
                                options=FIT_OPTIONS)
        nfev += result.nfev
        if not result.success:
            logger.debug(f"{kind} fit start did not converge: {result.message}")
            continue
        cost = float(np.sum(residual(result.params, data) ** 2))
        if best is None or cost < best[0]:
            best = (cost, result)
    if best is None:
        raise FitDiverged(f"{kind} fit did not converge from any of {FIT_STARTS} starts",
                          operation="fit_curve")

    cost, result = best
    n_residuals = len(residual(result.params, data))
    report = FitReport(
        kind=kind,
        params={name: float(par.value) for name, par in result.params.items()},
        residual_rms=float(np.sqrt(cost / n_residuals)),
        n_points=len(data),
        nfev=nfev,
    )
    logger.info(f"Fitted {kind}: {report.params} (rms {report.residual_rms:.3e})")
    return report


def load_points(kind: str, csv_path: str) -> List[List[float]]:
    """Measurement rows for a fit kind from its CSV layout."""
    if kind not in CSV_HEADERS:
        raise DomainError(f"unknown fit kind '{kind}'", operation="load_points")
    rows = get_file_service().read_csv(csv_path, CSV_HEADERS[kind])
    if not rows:
        raise EmptyData(f"{csv_path} has no data rows", operation="load_points")
    return rows
