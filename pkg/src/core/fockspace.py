"""Truncated Fock-basis states, channels and phase-space functions.

Quadratures follow x = (a + a†)/√2, p = (a − a†)/(i√2), so the vacuum has
variance 1/2 and Wigner function e^(−x²−p²)/π. Shot-noise-normalized
variances (vacuum = 1) are twice the values used here.
"""

from dataclasses import dataclass, field
from typing import Optional, Tuple, Union, Callable, Dict, Any

import numpy as np
from scipy.linalg import expm
from scipy.special import gammaln, eval_genlaguerre

from src.core.errors import (
    DomainError, InvalidState, TruncationError, HeraldImpossible, DataFormatError)
from src.utils.logging import get_logger

logger = get_logger()

# Largest tail mass an explicit truncation may drop.
TAIL_LIMIT = 1e-6
# Tail mass targeted when the truncation is chosen automatically.
AUTO_TAIL = 1e-10
NORM_TOL = 1e-9
HERMITIAN_TOL = 1e-9
PSD_TOL = -1e-8
CLICK_FLOOR = 1e-12
MAX_AUTO_N = 400


def _frozen(array: np.ndarray, dtype=complex) -> np.ndarray:
    out = np.array(array, dtype=dtype, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class PureState:
    """State vector over Fock levels 0..n_max."""

    coeffs: np.ndarray
    label: str = ""

    def __post_init__(self):
        coeffs = np.atleast_1d(np.asarray(self.coeffs, dtype=complex))
        if coeffs.ndim != 1 or coeffs.size < 2:
            raise InvalidState("a pure state needs at least levels 0 and 1",
                               operation="PureState")
        norm = float(np.vdot(coeffs, coeffs).real)
        if abs(norm - 1.0) > NORM_TOL:
            raise InvalidState(f"state norm is {norm:.12f}, expected 1",
                               operation="PureState", details={'norm': norm})
        object.__setattr__(self, 'coeffs', _frozen(coeffs))

    @property
    def n_max(self) -> int:
        return self.coeffs.size - 1

    def density(self) -> "DensityMatrix":
        return DensityMatrix(np.outer(self.coeffs, self.coeffs.conj()))

    def padded(self, n_max: int) -> np.ndarray:
        """Coefficient vector zero-padded to n_max (never truncated)."""
        if n_max <= self.n_max:
            return np.array(self.coeffs)
        out = np.zeros(n_max + 1, dtype=complex)
        out[:self.coeffs.size] = self.coeffs
        return out


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    """Density operator over Fock levels 0..n_max.

    Hermiticity, unit trace and positivity are checked on construction;
    ``psd_tol`` loosens the positivity bound for numerically integrated states.
    """

    elements: np.ndarray
    psd_tol: float = field(default=PSD_TOL, repr=False)

    def __post_init__(self):
        rho = np.asarray(self.elements, dtype=complex)
        if rho.ndim != 2 or rho.shape[0] != rho.shape[1] or rho.shape[0] < 2:
            raise InvalidState(f"density matrix must be square with n_max >= 1, got {rho.shape}",
                               operation="DensityMatrix")
        asym = float(np.max(np.abs(rho - rho.conj().T)))
        if asym > HERMITIAN_TOL:
            raise InvalidState(f"matrix is not Hermitian (max deviation {asym:.3e})",
                               operation="DensityMatrix")
        rho = 0.5 * (rho + rho.conj().T)
        trace = float(np.trace(rho).real)
        if abs(trace - 1.0) > NORM_TOL:
            raise InvalidState(f"trace is {trace:.12f}, expected 1",
                               operation="DensityMatrix", details={'trace': trace})
        min_eig = float(np.linalg.eigvalsh(rho)[0])
        if min_eig < self.psd_tol:
            raise InvalidState(f"matrix is not positive semidefinite (min eigenvalue {min_eig:.3e})",
                               operation="DensityMatrix", details={'min_eigenvalue': min_eig})
        object.__setattr__(self, 'elements', _frozen(rho))

    @property
    def n_max(self) -> int:
        return self.elements.shape[0] - 1

    @classmethod
    def from_unnormalized(cls, rho: np.ndarray, psd_tol: float = PSD_TOL) -> "DensityMatrix":
        rho = np.asarray(rho, dtype=complex)
        rho = 0.5 * (rho + rho.conj().T)
        return cls(rho / np.trace(rho).real, psd_tol=psd_tol)

    def padded(self, n_max: int) -> np.ndarray:
        """Matrix zero-padded to n_max (never truncated)."""
        if n_max <= self.n_max:
            return np.array(self.elements)
        out = np.zeros((n_max + 1, n_max + 1), dtype=complex)
        d = self.elements.shape[0]
        out[:d, :d] = self.elements
        return out

    def truncate(self, n_max: int) -> "DensityMatrix":
        """Project onto levels 0..n_max and renormalize."""
        if n_max >= self.n_max:
            return DensityMatrix(self.padded(n_max), psd_tol=self.psd_tol)
        block = self.elements[:n_max + 1, :n_max + 1]
        kept = float(np.trace(block).real)
        if kept <= 0:
            raise TruncationError(f"no population at or below n = {n_max}",
                                  operation="truncate")
        logger.debug(f"Truncating to n_max={n_max} drops tail mass {1.0 - kept:.3e}")
        return DensityMatrix.from_unnormalized(block, psd_tol=self.psd_tol)

    def mix(self, other: "DensityMatrix", weight: float) -> "DensityMatrix":
        """weight·self + (1 − weight)·other at the larger truncation."""
        n = max(self.n_max, other.n_max)
        return DensityMatrix(weight * self.padded(n) + (1.0 - weight) * other.padded(n))

    def to_dict(self) -> Dict[str, Any]:
        return {
            'n_max': self.n_max,
            're': self.elements.real.tolist(),
            'im': self.elements.imag.tolist(),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "DensityMatrix":
        try:
            n_max = int(data['n_max'])
            rho = np.asarray(data['re'], dtype=float) + 1j * np.asarray(data['im'], dtype=float)
        except (KeyError, TypeError, ValueError) as e:
            raise DataFormatError(f"malformed density matrix document: {e}",
                                  operation="DensityMatrix.from_dict")
        if rho.shape != (n_max + 1, n_max + 1):
            raise DataFormatError(f"matrix shape {rho.shape} does not match n_max={n_max}",
                                  operation="DensityMatrix.from_dict")
        return cls(rho)


# ---------------------------------------------------------------------------
# Truncation bookkeeping
# ---------------------------------------------------------------------------

def _required_n_max(tail: Callable[[int], float], tol: float, start: int = 1, step: int = 1) -> int:
    n = start
    while tail(n) >= tol:
        n += step
        if n > MAX_AUTO_N:
            raise TruncationError(f"no truncation up to {MAX_AUTO_N} reaches tail mass {tol:g}",
                                  operation="auto truncation")
    return n


def _resolve_n_max(tail: Callable[[int], float], n_max: Optional[int], label: str,
                   start: int = 1, step: int = 1) -> int:
    if n_max is None:
        return _required_n_max(tail, AUTO_TAIL, start, step)
    if n_max < 1:
        raise DomainError("n_max must be at least 1", operation=label)
    mass = tail(n_max)
    if mass >= TAIL_LIMIT:
        raise TruncationError(f"{label}: tail mass above n_max={n_max} is {mass:.3e}",
                              operation=label, details={'tail_mass': mass, 'n_max': n_max})
    return n_max


def _squeezed_log_populations(r: float, ks: np.ndarray) -> np.ndarray:
    """log P(2k) for squeezed vacuum."""
    t2 = np.tanh(r) ** 2
    return (ks * np.log(t2) + gammaln(2 * ks + 1) - 2 * ks * np.log(2.0)
            - 2 * gammaln(ks + 1) - np.log(np.cosh(r)))


def squeezed_tail(r: float, n_max: int) -> float:
    """Population of squeezed vacuum above level n_max."""
    if r == 0:
        return 0.0
    k0 = n_max // 2 + 1
    ks = np.arange(k0, k0 + 20000, dtype=float)
    return float(np.exp(_squeezed_log_populations(r, ks)).sum())


def odd_cat_norm(alpha: float) -> float:
    """Normalization 1/√(2(1 − e^(−2α²))) of |α⟩ − |−α⟩."""
    return 1.0 / np.sqrt(2.0 * (-np.expm1(-2.0 * alpha * alpha)))


def _odd_cat_log_populations(alpha: float, ns: np.ndarray) -> np.ndarray:
    a2 = alpha * alpha
    return (np.log(2.0) - a2 + ns * np.log(a2) - gammaln(ns + 1)
            - np.log(-np.expm1(-2.0 * a2)))


def odd_cat_tail(alpha: float, n_max: int) -> float:
    """Population of the odd cat above level n_max."""
    n0 = n_max + 1 if (n_max + 1) % 2 == 1 else n_max + 2
    ns = np.arange(n0, n0 + 4000, 2, dtype=float)
    return float(np.exp(_odd_cat_log_populations(alpha, ns)).sum())


# ---------------------------------------------------------------------------
# State constructors
# ---------------------------------------------------------------------------

def fock_state(n: int, n_max: Optional[int] = None) -> PureState:
    """Number state |n⟩ on levels 0..n_max (default max(n, 1))."""
    n_max = max(n, 1) if n_max is None else n_max
    if not 0 <= n <= n_max:
        raise DomainError(f"level {n} outside 0..{n_max}", operation="fock_state")
    coeffs = np.zeros(n_max + 1, dtype=complex)
    coeffs[n] = 1.0
    return PureState(coeffs, label=f"|{n}>")


def vacuum(n_max: int = 1) -> PureState:
    """|0⟩ on levels 0..n_max."""
    return fock_state(0, n_max)


def squeezed_vacuum(r: float, n_max: Optional[int] = None) -> PureState:
    """Squeezed vacuum S(r)|0⟩ with the x quadrature (θ = 0) squeezed.

    c_2k = (−tanh r)^k √((2k)!) / (2^k k! √cosh r), so c_0 > 0.
    """
    if r < 0:
        raise DomainError("squeezing parameter must be nonnegative", operation="squeezed_vacuum")
    n_max = _resolve_n_max(lambda n: squeezed_tail(r, n), n_max, "squeezed_vacuum", start=2, step=2)
    if n_max < 2:
        raise DomainError("squeezed vacuum needs n_max >= 2", operation="squeezed_vacuum")
    coeffs = np.zeros(n_max + 1, dtype=complex)
    if r == 0:
        coeffs[0] = 1.0
    else:
        ks = np.arange(n_max // 2 + 1, dtype=float)
        amplitude = np.exp(0.5 * _squeezed_log_populations(r, ks))
        coeffs[0::2] = amplitude * (-1.0) ** ks
        coeffs /= np.linalg.norm(coeffs)
    logger.debug(f"Squeezed vacuum r={r:.4f} at n_max={n_max}")
    return PureState(coeffs, label=f"S({r:.4f})|0>")


def odd_cat(alpha: float, n_max: Optional[int] = None) -> PureState:
    """Odd coherent-state superposition ∝ |α⟩ − |−α⟩ for real α > 0."""
    if alpha <= 0:
        raise DomainError("cat amplitude must be positive", operation="odd_cat")
    n_max = _resolve_n_max(lambda n: odd_cat_tail(alpha, n), n_max, "odd_cat")
    coeffs = odd_cat_coefficients(alpha, n_max)
    coeffs = coeffs / np.linalg.norm(coeffs)
    return PureState(coeffs, label=f"cat-({alpha:.4f})")


def odd_cat_coefficients(alpha: float, n_max: int) -> np.ndarray:
    """Analytically normalized odd-cat amplitudes on levels 0..n_max.

    Not renormalized after truncation, so ⟨ψ|ρ|ψ⟩ with a state supported on
    0..n_max is exact.
    """
    ns = np.arange(n_max + 1, dtype=float)
    coeffs = np.zeros(n_max + 1)
    odd = ns % 2 == 1
    coeffs[odd] = np.exp(0.5 * _odd_cat_log_populations(alpha, ns[odd]))
    return coeffs


def annihilate(state: PureState) -> PureState:
    """Normalized â|ψ⟩: the vanishing-reflectivity limit of photon subtraction."""
    c = state.coeffs
    out = np.zeros_like(c)
    out[:-1] = np.sqrt(np.arange(1, c.size)) * c[1:]
    norm = np.linalg.norm(out)
    if norm ** 2 < CLICK_FLOOR:
        raise HeraldImpossible("state has no photon to remove", operation="annihilate")
    return PureState(out / norm, label=f"a{state.label}")


# ---------------------------------------------------------------------------
# Channels
# ---------------------------------------------------------------------------

def _as_matrix(state: Union[PureState, DensityMatrix]) -> np.ndarray:
    if isinstance(state, PureState):
        return np.outer(state.coeffs, state.coeffs.conj())
    return np.array(state.elements)


def loss_kraus(dim: int, eta: float, k: int) -> np.ndarray:
    """E_k = √((1−η)^k / k!) η^(n̂/2) â^k on dim levels."""
    m = np.arange(dim - k)
    log_binom = gammaln(m + k + 1) - gammaln(m + 1) - gammaln(k + 1)
    op = np.zeros((dim, dim))
    op[m, m + k] = np.exp(0.5 * log_binom) * eta ** (m / 2.0) * (1.0 - eta) ** (k / 2.0)
    return op


def apply_loss(rho: DensityMatrix, eta: float) -> DensityMatrix:
    """Photon-loss channel (generalized Bernoulli transformation) with efficiency eta."""
    if not 0.0 <= eta <= 1.0:
        raise DomainError(f"efficiency must lie in [0, 1], got {eta}", operation="apply_loss")
    mat = rho.elements
    dim = mat.shape[0]
    out = np.zeros_like(mat)
    for k in range(dim):
        op = loss_kraus(dim, eta, k)
        out += op @ mat @ op.T
    return DensityMatrix.from_unnormalized(out)


def _block_beamsplitter_amplitudes(dim: int, reflectivity: float) -> np.ndarray:
    """amp[N, k] = ⟨N−k, k| U_BS |N, 0⟩ from the two-mode unitary.

    U_BS = exp(θ(â₁†â₂ − â₁â₂†)) with sin²θ = R conserves total photon number,
    so each block N is exponentiated on its own basis |N−j, j⟩.
    """
    theta = np.arcsin(np.sqrt(reflectivity))
    amp = np.zeros((dim, dim))
    for total in range(dim):
        j = np.arange(total)
        # basis index j counts tap photons
        hop = np.sqrt((total - j) * (j + 1.0))
        gen = np.zeros((total + 1, total + 1))
        gen[j, j + 1] = hop       # â₁†â₂ lowers the tap count
        gen[j + 1, j] = -hop      # −â₁â₂† raises it
        amp[total, :total + 1] = expm(theta * gen)[:, 0]
    return amp


def _dense_two_mode_click(rho_in: np.ndarray, reflectivity: float) -> np.ndarray:
    dim = rho_in.shape[0]
    amp = _block_beamsplitter_amplitudes(dim, reflectivity)
    out = np.zeros_like(rho_in)
    for k in range(1, dim):
        op = np.zeros((dim, dim))
        totals = np.arange(k, dim)
        op[totals - k, totals] = amp[totals, k]
        out += op @ rho_in @ op.T
    return out


def _tap_truncated_click(rho_in: np.ndarray, reflectivity: float, tap_levels: int) -> np.ndarray:
    dim = rho_in.shape[0]
    out = np.zeros_like(rho_in)
    for k in range(1, min(tap_levels, dim)):
        op = loss_kraus(dim, 1.0 - reflectivity, k)
        out += op @ rho_in @ op.T
    return out


def herald_subtract(state: Union[PureState, DensityMatrix], reflectivity: float,
                    n_max: Optional[int] = None,
                    tap_levels: Optional[int] = None) -> Tuple[DensityMatrix, float]:
    """Photon subtraction heralded by an on/off click on the tap mode.

    The input meets vacuum on a beamsplitter of reflectivity R; the tap mode is
    projected onto Λ = 1 − |0⟩⟨0|. With ``tap_levels`` only tap occupations
    below that level are kept.

    Returns the normalized transmitted state and the click probability.
    """
    if not 0.0 < reflectivity < 1.0:
        raise DomainError(f"reflectivity must lie in (0, 1), got {reflectivity}",
                          operation="herald_subtract")
    rho_in = _as_matrix(state)
    if tap_levels is None:
        click = _dense_two_mode_click(rho_in, reflectivity)
    else:
        if tap_levels < 2:
            raise DomainError("tap_levels must be at least 2", operation="herald_subtract")
        click = _tap_truncated_click(rho_in, reflectivity, tap_levels)
    probability = float(np.trace(click).real)
    if probability < CLICK_FLOOR:
        raise HeraldImpossible(f"click probability {probability:.3e} is below {CLICK_FLOOR:g}",
                               operation="herald_subtract",
                               details={'click_probability': probability})
    logger.debug(f"Herald R={reflectivity:.4f}: click probability {probability:.6e}")
    heralded = DensityMatrix.from_unnormalized(click)
    if n_max is not None:
        heralded = heralded.truncate(n_max)
    return heralded, probability


# ---------------------------------------------------------------------------
# Phase-space functions and figures of merit
# ---------------------------------------------------------------------------

def _wigner_terms(dim: int, x: np.ndarray, p: np.ndarray):
    """Yield (m, n, K_mn) with K_mn the Wigner function of |m⟩⟨n| for m ≤ n."""
    a = (x + 1j * p) / np.sqrt(2.0)
    b = 4.0 * np.abs(a) ** 2
    envelope = np.exp(-b / 2.0) / np.pi
    for m in range(dim):
        for n in range(m, dim):
            coef = (-1.0) ** m * np.exp(0.5 * (gammaln(m + 1) - gammaln(n + 1)))
            kernel = coef * (2.0 * a) ** (n - m) * eval_genlaguerre(m, n - m, b) * envelope
            yield m, n, kernel


def wigner(rho: DensityMatrix, x, p) -> np.ndarray:
    """Wigner function W(x, p) (scalars or broadcastable arrays)."""
    x, p = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(p, dtype=float))
    mat = rho.elements
    total = np.zeros(x.shape)
    for m, n, kernel in _wigner_terms(mat.shape[0], x, p):
        value = mat[m, n]
        if value == 0:
            continue
        if m == n:
            total += (value * kernel).real
        else:
            total += 2.0 * (value * kernel).real
    return total if total.ndim else float(total)


def wigner_grid(rho: DensityMatrix, xs, ps) -> np.ndarray:
    """W on the grid, indexed [i, j] = W(xs[i], ps[j])."""
    xx, pp = np.meshgrid(np.asarray(xs, dtype=float), np.asarray(ps, dtype=float), indexing='ij')
    return wigner(rho, xx, pp)


def hermite_functions(n_max: int, x) -> np.ndarray:
    """ψ_0..ψ_n_max at x, normalized for vacuum variance 1/2; shape (n_max+1, len(x))."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    psi = np.zeros((n_max + 1, x.size))
    psi[0] = np.pi ** -0.25 * np.exp(-0.5 * x * x)
    if n_max >= 1:
        psi[1] = np.sqrt(2.0) * x * psi[0]
    for n in range(1, n_max):
        psi[n + 1] = np.sqrt(2.0 / (n + 1)) * x * psi[n] - np.sqrt(n / (n + 1.0)) * psi[n - 1]
    return psi


def quadrature_pdf(rho: DensityMatrix, theta: float, x) -> np.ndarray:
    """Homodyne density pr(x|θ) for x_θ = x cosθ + p sinθ."""
    scalar = np.ndim(x) == 0
    mat = rho.elements
    psi = hermite_functions(rho.n_max, x)
    phases = np.exp(1j * theta * np.arange(rho.n_max + 1))
    v = phases[:, None] * psi
    pdf = np.einsum('mx,mn,nx->x', v.conj(), mat, v).real
    pdf = np.maximum(pdf, 0.0)
    return float(pdf[0]) if scalar else pdf


def _ladder(dim: int) -> np.ndarray:
    return np.diag(np.sqrt(np.arange(1, dim)), k=1)


def quadrature_variance(rho: DensityMatrix, theta: float) -> float:
    """Var(x_θ) in Wigner units, evaluated with operators one level above the truncation."""
    mat = rho.padded(rho.n_max + 1)
    a = _ladder(mat.shape[0]) * np.exp(-1j * theta)
    xq = (a + a.conj().T) / np.sqrt(2.0)
    mean = np.trace(mat @ xq).real
    second = np.trace(mat @ xq @ xq).real
    return float(second - mean ** 2)


def mean_photon_number(rho: DensityMatrix) -> float:
    """⟨n̂⟩ = Σ n·P(n)."""
    return float(np.arange(rho.n_max + 1) @ photon_distribution(rho))


def photon_distribution(rho: DensityMatrix) -> np.ndarray:
    """Photon-number probabilities diag(ρ)."""
    return np.clip(np.diag(rho.elements).real, 0.0, None)


def fidelity(rho: DensityMatrix, target: PureState) -> float:
    """Pure-target overlap ⟨ψ|ρ|ψ⟩; the smaller operand is zero-padded."""
    n = max(rho.n_max, target.n_max)
    psi = target.padded(n)
    value = float(np.vdot(psi, rho.padded(n) @ psi).real)
    return float(min(max(value, 0.0), 1.0))


def parity_origin(rho: DensityMatrix) -> float:
    """W(0,0) from the parity sum (1/π) Σ (−1)^n ρ_nn."""
    signs = (-1.0) ** np.arange(rho.n_max + 1)
    return float(signs @ np.diag(rho.elements).real / np.pi)


def state_fidelity(rho: DensityMatrix, sigma: DensityMatrix) -> float:
    """Uhlmann fidelity (Tr √(√ρ σ √ρ))² between two density matrices."""
    n = max(rho.n_max, sigma.n_max)
    a = rho.padded(n)
    b = sigma.padded(n)
    vals, vecs = np.linalg.eigh(a)
    root = (vecs * np.sqrt(np.clip(vals, 0.0, None))) @ vecs.conj().T
    inner = np.linalg.eigvalsh(root @ b @ root)
    value = float(np.sum(np.sqrt(np.clip(inner, 0.0, None))) ** 2)
    return float(min(max(value, 0.0), 1.0))
