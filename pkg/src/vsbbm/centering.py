"""Closed-form centering terms for the maximum and their logarithmic corrections."""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import DomainError
from .speed_profiles import SpeedProfile

__all__ = [
    "SQRT2",
    "STANDARD_LOG_COEFFICIENT",
    "CenteringTerm",
    "LogCorrectionLedger",
    "m_standard",
    "m_plus",
    "m_minus",
    "case_b_log_coefficient",
    "partial_log_correction",
    "case_b_gate_correction",
]

SQRT2 = math.sqrt(2.0)
STANDARD_LOG_COEFFICIENT = 3.0 / (2.0 * SQRT2)
_PI_SIXTH = math.pi ** (1.0 / 6.0)


@dataclass(frozen=True)
class LogCorrectionLedger:
    """Per-piece summands of the Case-A correction.

    ``log_bt[k] = log(b_k t)`` for every piece and
    ``gap_terms[k] = 2 log(pi^(1/6) (sigma_k - sigma_{k+1}))`` for ``k < ell``.
    """

    log_bt: tuple[float, ...]
    gap_terms: tuple[float, ...]

    @property
    def total(self) -> float:
        """Signed contribution to the centering (a negative number for large t)."""
        return -STANDARD_LOG_COEFFICIENT * (math.fsum(self.log_bt) + math.fsum(self.gap_terms))

    def to_dict(self) -> dict:
        return {"log_bt": list(self.log_bt), "gap_terms": list(self.gap_terms), "total": self.total}


@dataclass(frozen=True)
class CenteringTerm:
    kind: str
    value: float
    log_coefficient: float
    horizon_t: float
    leading: float
    ledger: LogCorrectionLedger | None = None
    t0: float = 1.0  # correction is negative for t > t0 with the profile held fixed

    def __float__(self) -> float:
        return self.value

    @property
    def correction(self) -> float:
        return self.value - self.leading

    def to_dict(self) -> dict:
        out = {"kind": self.kind, "value": self.value, "log_coefficient": self.log_coefficient,
               "horizon_t": self.horizon_t, "leading": self.leading, "correction": self.correction,
               "t0": self.t0}
        out["ledger"] = None if self.ledger is None else self.ledger.to_dict()
        return out


def _check_t(t: float) -> float:
    t = float(t)
    if not (math.isfinite(t) and t > 1.0):
        raise DomainError(f"centering needs t > 1, got {t}")
    return t


def m_standard(t: float) -> float:
    """sqrt(2) t - 3/(2 sqrt 2) log t."""
    t = _check_t(t)
    return SQRT2 * t - STANDARD_LOG_COEFFICIENT * math.log(t)


def m_plus(profile: SpeedProfile, t: float | None = None) -> CenteringTerm:
    """Case-A centering evaluated at the profile's horizon (or ``t``)."""
    t = _check_t(profile.horizon_t if t is None else t)
    sig = [math.sqrt(v) for v in profile.velocities]
    b = profile.lengths
    gaps = [sig[k] - sig[k + 1] for k in range(profile.ell - 1)]
    for k, g in enumerate(gaps):
        if not g > 0.0:
            raise DomainError(
                f"sigma_{k + 1} = {sig[k]:.12g} <= sigma_{k + 2} = {sig[k + 1]:.12g}; "
                "consecutive velocities must strictly decrease"
            )
    log_bt = tuple(math.log(bk * t) for bk in b)
    gap_terms = tuple(2.0 * math.log(_PI_SIXTH * g) for g in gaps)
    ledger = LogCorrectionLedger(log_bt, gap_terms)
    leading = SQRT2 * t * math.fsum(s * bk for s, bk in zip(sig, b))
    value = leading + ledger.total
    # with b and sigma frozen the bracket is ell*log t + const
    const = math.fsum(math.log(bk) for bk in b) + math.fsum(gap_terms)
    t0 = max(1.0, math.exp(-const / profile.ell))
    coeff = STANDARD_LOG_COEFFICIENT * (math.fsum(log_bt) + math.fsum(gap_terms)) / math.log(t)
    return CenteringTerm("case_a", value, coeff, t, leading, ledger, t0)


def case_b_log_coefficient(alpha_begin: float, alpha_end: float) -> float:
    for a in (alpha_begin, alpha_end):
        if not 0.0 < a < 0.5:
            raise DomainError(f"alpha must lie in (0, 1/2), got {a}")
    return (1.0 + 2.0 * (alpha_begin + alpha_end)) / (2.0 * SQRT2)


def m_minus(alpha_begin: float, alpha_end: float, t: float) -> CenteringTerm:
    """Case-B centering; depends on the speed function only through the end rates."""
    coeff = case_b_log_coefficient(alpha_begin, alpha_end)
    t = _check_t(t)
    leading = SQRT2 * t
    return CenteringTerm("case_b", leading - coeff * math.log(t), coeff, t, leading, None, 1.0)


def standard_term(t: float) -> CenteringTerm:
    t = _check_t(t)
    return CenteringTerm("standard", m_standard(t), STANDARD_LOG_COEFFICIENT, t, SQRT2 * t, None, 1.0)


def partial_log_correction(profile: SpeedProfile, t: float | None = None, upto: int | None = None) -> float:
    """-3/(2 sqrt 2) * sum_{k < upto} (log(b_k t) + 2 log(pi^(1/6)(sigma_k - sigma_{k+1}))).

    ``upto`` defaults to ``ell - 1``, the aggregate over all but the last piece.
    """
    t = _check_t(profile.horizon_t if t is None else t)
    upto = profile.ell - 1 if upto is None else int(upto)
    if not 0 <= upto <= profile.ell - 1:
        raise DomainError(f"upto must lie in [0, {profile.ell - 1}]")
    sig = [math.sqrt(v) for v in profile.velocities]
    terms = []
    for k in range(upto):
        g = sig[k] - sig[k + 1]
        if not g > 0.0:
            raise DomainError("consecutive velocities must strictly decrease")
        terms.append(math.log(profile.lengths[k] * t) + 2.0 * math.log(_PI_SIXTH * g))
    return -STANDARD_LOG_COEFFICIENT * math.fsum(terms)


def case_b_gate_correction(profile: SpeedProfile, alpha_1: float, alpha_l: float,
                           t: float | None = None) -> float:
    """3/(2 sqrt 2) sigma_ell log(b_ell t) - (1 + 2(alpha_1 + alpha_ell))/(2 sqrt 2) log t."""
    t = _check_t(profile.horizon_t if t is None else t)
    coeff = case_b_log_coefficient(alpha_1, alpha_l)
    sig_l = math.sqrt(profile.velocities[-1])
    return STANDARD_LOG_COEFFICIENT * sig_l * math.log(profile.lengths[-1] * t) - coeff * math.log(t)
