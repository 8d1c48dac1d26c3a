"""Bath coupling spectra ``omega -> G(omega) >= 0`` with detailed-balance laws.

Every variant is a callable evaluated on scalars or arrays.  For
``omega >= 0`` the value is the downward (system emits) rate; negative
arguments give the upward rate fixed by the variant's balance law.
"""
import csv
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .errors import ContractViolation, ExtrapolationError, InvariantViolation


# --------------------------------------------------------------------------
# Rate profiles for omega >= 0
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Flat:
    g0: float

    def __call__(self, w):
        return np.full_like(np.asarray(w, dtype=float), self.g0)


@dataclass(frozen=True)
class Ohmic:
    """``alpha * w * exp(-(w / cutoff)^2)``."""

    alpha: float
    cutoff: float

    def __call__(self, w):
        w = np.asarray(w, dtype=float)
        return self.alpha * w * np.exp(-((w / self.cutoff) ** 2))


@dataclass(frozen=True)
class Gaussian:
    """``g0 * exp(-(w - center)^2 / (2 width^2))``."""

    g0: float
    center: float
    width: float

    def __call__(self, w):
        w = np.asarray(w, dtype=float)
        return self.g0 * np.exp(-0.5 * ((w - self.center) / self.width) ** 2)


@dataclass(frozen=True)
class GapGaussian:
    """Gaussian shoulder starting at ``gap``: zero below, ``g0 exp(-(w-gap)^2/(2 width^2))`` above."""

    g0: float
    gap: float
    width: float

    def __call__(self, w):
        w = np.asarray(w, dtype=float)
        return np.where(w >= self.gap, self.g0 * np.exp(-0.5 * ((w - self.gap) / self.width) ** 2), 0.0)


PROFILES = {"flat": Flat, "ohmic": Ohmic, "gaussian": Gaussian, "gap_gaussian": GapGaussian}


def make_profile(spec):
    """Build a rate profile from a mapping such as ``{"kind": "flat", "g0": 1e-3}``."""
    spec = dict(spec)
    kind = spec.pop("kind")
    try:
        return PROFILES[kind](**spec)
    except KeyError:
        raise ContractViolation(f"unknown rate profile {kind!r}") from None


def _boltzmann_scaled(values, exponent):
    """``values * exp(exponent)`` with zeros kept at zero and no overflow warnings."""
    values = np.asarray(values, dtype=float)
    exponent = np.asarray(exponent, dtype=float)
    out = np.zeros(np.broadcast(values, exponent).shape)
    pos = np.broadcast_to(values > 0, out.shape)
    with np.errstate(over="ignore", divide="ignore"):
        logv = np.log(np.where(values > 0, values, 1.0))
        out[pos] = np.exp(np.broadcast_to(logv + exponent, out.shape)[pos])
    return out


def _scalar_or_array(w, out):
    return float(out) if np.ndim(w) == 0 else out


class CouplingSpectrum:
    """Common interface; subclasses implement ``_evaluate`` on arrays."""

    law = "none"

    def __call__(self, omega):
        w = np.asarray(omega, dtype=float)
        out = np.asarray(self._evaluate(np.atleast_1d(w)), dtype=float).reshape(w.shape)
        if np.any(out < 0) or not np.all(np.isfinite(out)):
            raise InvariantViolation("coupling spectrum produced a negative or non-finite value")
        return _scalar_or_array(omega, out)

    def balance_ratio(self, omega):
        """Expected ``G(-omega) / G(omega)`` for ``omega >= 0`` under the declared law."""
        raise NotImplementedError


@dataclass(frozen=True, eq=False)
class Thermal(CouplingSpectrum):
    """KMS spectrum at temperature ``T``: ``G(-w) = exp(-w/T) G(w)``."""

    profile: object
    T: float

    law = "thermal"

    def __post_init__(self):
        if self.T < 0:
            raise ContractViolation("temperature must be >= 0")

    def _down(self, w):
        return np.asarray(self.profile(w), dtype=float)

    def _evaluate(self, w):
        a = np.abs(w)
        down = self._down(a)
        if self.T == 0:
            up = np.where(a == 0, down, 0.0)
        else:
            up = _boltzmann_scaled(down, -a / self.T)
        return np.where(w >= 0, down, up)

    def balance_ratio(self, omega):
        if self.T == 0:
            return 0.0 if omega > 0 else 1.0
        return math.exp(-omega / self.T)


@dataclass(frozen=True, eq=False)
class Chemical(CouplingSpectrum):
    """Chemical bath: ``G(-w) = exp(-(w - delta_g)/T1) G(w)`` for ``w >= 0``.

    The same law with ``delta_g -> delta_mu`` describes an excitonic bath
    with a smooth line shape.
    """

    profile: object
    T1: float
    delta_g: float = 0.0

    law = "chemical"

    def __post_init__(self):
        if not self.T1 > 0:
            raise ContractViolation("chemical bath temperature T1 must be positive")

    def _evaluate(self, w):
        a = np.abs(w)
        down = np.asarray(self.profile(a), dtype=float)
        up = _boltzmann_scaled(down, -(a - self.delta_g) / self.T1)
        return np.where(w >= 0, down, up)

    def balance_ratio(self, omega):
        return math.exp(-(omega - self.delta_g) / self.T1)


@dataclass(frozen=True, eq=False)
class Bare(CouplingSpectrum):
    """A profile used on the whole real line with no balance law."""

    profile: object

    def _evaluate(self, w):
        return np.asarray(self.profile(w), dtype=float)

    def balance_ratio(self, omega):
        return float(self(-omega) / self(omega))


def excitonic_profile_spectrum(profile, T, delta_mu):
    """Excitonic bath with smooth line shape and chemical potential ``delta_mu``."""
    return Chemical(profile, T, delta_mu)


def fermi_dirac(E, mu, T):
    E = np.asarray(E, dtype=float)
    if T == 0:
        return np.where(E < mu, 1.0, np.where(E > mu, 0.0, 0.5))
    return expit(-(E - mu) / T)


def fermi_hole(E, mu, T):
    """``1 - fermi_dirac(E, mu, T)`` without cancellation."""
    E = np.asarray(E, dtype=float)
    if T == 0:
        return np.where(E > mu, 1.0, np.where(E < mu, 0.0, 0.5))
    return expit((E - mu) / T)


@dataclass(frozen=True, eq=False)
class Excitonic(CouplingSpectrum):
    """Coupling spectrum of the two-band electron bath in a grand-canonical state.

    For ``w >= 0``::

        G(w)  = sum_kl |g_kl|^2 d_eta(eps_kl - w) f_b(l) (1 - f_a(k))
        G(-w) = sum_kl |g_kl|^2 d_eta(eps_kl - w) f_a(k) (1 - f_b(l)) exp((eps_kl - w)/T)

    with ``eps_kl = E_a(k) - E_b(l)`` and ``d_eta`` a normalized Gaussian of
    width ``eta``.  The factor ``exp((eps_kl - w)/T)`` equals one on the
    delta support, so the eta -> 0 limit is unchanged while the ratio
    ``G(-w)/G(w) = exp(-(w - delta_mu)/T)`` holds exactly at finite eta.
    """

    energies_a: tuple
    energies_b: tuple
    couplings: object  # (n_a, n_b) array of g_kl
    mu_a: float
    mu_b: float
    T: float
    eta: float = 1e-3

    law = "excitonic"

    def __post_init__(self):
        if not self.T > 0 or not self.eta > 0:
            raise ContractViolation("excitonic spectrum requires T > 0 and eta > 0")
        g = np.asarray(self.couplings)
        if g.shape != (len(self.energies_a), len(self.energies_b)):
            raise ContractViolation("couplings must have shape (len(band_a), len(band_b))")

    @property
    def delta_mu(self):
        return self.mu_a - self.mu_b

    def _terms(self):
        Ea = np.asarray(self.energies_a, dtype=float)
        Eb = np.asarray(self.energies_b, dtype=float)
        eps = (Ea[:, None] - Eb[None, :]).ravel()
        fa = fermi_dirac(Ea, self.mu_a, self.T)[:, None]
        fb = fermi_dirac(Eb, self.mu_b, self.T)[None, :]
        ha = fermi_hole(Ea, self.mu_a, self.T)[:, None]
        hb = fermi_hole(Eb, self.mu_b, self.T)[None, :]
        weight = (np.abs(np.asarray(self.couplings)) ** 2).ravel()
        down = weight * (fb * ha).ravel()
        up = weight * (fa * hb).ravel()
        return eps, down, up

    def _evaluate(self, w):
        eps, down, up = self._terms()
        a = np.abs(w)[:, None]
        delta = np.exp(-0.5 * ((eps[None, :] - a) / self.eta) ** 2) / (self.eta * math.sqrt(2 * math.pi))
        g_down = np.sum(delta * down[None, :], axis=1)
        g_up = np.sum(_boltzmann_scaled(delta * up[None, :], (eps[None, :] - a) / self.T), axis=1)
        return np.where(w >= 0, g_down, g_up)

    def balance_ratio(self, omega):
        return math.exp(-(omega - self.delta_mu) / self.T)


@dataclass(frozen=True, eq=False)
class Tabulated(CouplingSpectrum):
    """Samples ``(omega, G)`` with linear interpolation inside the sampled range."""

    omega: tuple
    values: tuple

    law = "tabulated"

    def __post_init__(self):
        w = np.asarray(self.omega, dtype=float)
        g = np.asarray(self.values, dtype=float)
        if w.ndim != 1 or w.shape != g.shape or w.size < 2:
            raise ContractViolation("tabulated spectrum needs two equal-length columns")
        if np.any(np.diff(w) <= 0):
            raise ContractViolation("tabulated frequencies must be strictly increasing")
        if np.any(g < 0):
            raise InvariantViolation("tabulated spectrum has negative entries")

    def _evaluate(self, w):
        lo, hi = self.omega[0], self.omega[-1]
        if np.any(w < lo) or np.any(w > hi):
            raise ExtrapolationError(
                f"frequency outside tabulated range [{lo}, {hi}]"
            )
        return np.interp(w, self.omega, self.values)

    @classmethod
    def from_csv(cls, path):
        rows = []
        with open(path, newline="") as fh:
            for row in csv.reader(fh):
                if not row or row[0].strip().startswith("#"):
                    continue
                try:
                    rows.append((float(row[0]), float(row[1])))
                except ValueError:
                    continue  # header line
        rows.sort()
        return cls(tuple(r[0] for r in rows), tuple(r[1] for r in rows))


def spectrum_eval(spec, omega):
    return spec(omega)
