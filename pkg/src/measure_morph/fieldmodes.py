"""Per-mode time reparametrizations for a free scalar field.

Mode k oscillates with frequency k (massless) or sqrt(k^2 + m^2) (massive).
Composing exp(2 omega_m t) with the inverse of exp(2 omega_0 t) gives the
power law t**sigma(k) with sigma = omega_m / omega_0, so every mode gets its
own clock.  The table produced here makes that k dependence explicit; no
normalization factor or measure coefficient is attached to the modes.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Iterable, List, Sequence, Tuple

import numpy as np

from .diffeo import Composed, Exp2m, InverseOf, schwarzian_chain
from .errors import InvalidParameter, ZeroWaveNumber

DEFAULT_WINDOW = (0.01, 100.0)
TABLE_COLUMNS = ("k", "omega0", "omega_m", "sigma", "schwarzian_residual", "window_lo_image", "window_hi_image")


@dataclass(frozen=True)
class ModeSpec:
    k: float
    m: float

    def __post_init__(self):
        if not (math.isfinite(self.k) and self.k >= 0):
            raise InvalidParameter(f"k must be >= 0, got {self.k}")
        if not math.isfinite(self.m):
            raise InvalidParameter("m must be finite")

    @property
    def omega0(self) -> float:
        return self.k

    @property
    def omega_m(self) -> float:
        return math.hypot(self.k, self.m)

    @property
    def sigma(self) -> float:
        return sigma(self.k, self.m)


def sigma(k: float, m: float) -> float:
    """sqrt(1 + m^2/k^2), computed as hypot(k, m)/k."""
    if not k > 0:
        raise ZeroWaveNumber(f"sigma diverges at k={k}: the k = 0 mode has no finite reparametrization")
    return math.hypot(k, m) / k


def _check_window(window) -> Tuple[float, float]:
    lo, hi = float(window[0]), float(window[1])
    if not (0 < lo < hi and math.isfinite(hi)):
        raise InvalidParameter(f"window needs 0 < t_min < t_max, got {window}")
    return lo, hi


def mode_diffeo(k: float, m: float, window=DEFAULT_WINDOW) -> Composed:
    """exp(2 omega_m .) o exp(2 omega_0 .)^-1 restricted to ``window``; equals t**sigma(k)."""
    sigma(k, m)
    lo, hi = _check_window(window)
    spec = ModeSpec(k, m)
    massless = Exp2m(spec.omega0, window=(math.log(lo) / (2 * spec.omega0), math.log(hi) / (2 * spec.omega0)))
    return Composed(Exp2m(spec.omega_m), InverseOf(massless))


def probe_times(window, n: int = 1000) -> np.ndarray:
    lo, hi = _check_window(window)
    return np.geomspace(lo, hi, n)


def chain_schwarzian(k: float, m: float, t, window=DEFAULT_WINDOW) -> np.ndarray:
    """Schwarzian of the mode map built from its two legs with the composition rule."""
    d = mode_diffeo(k, m, window)
    return schwarzian_chain(d.outer, d.inner, t)


def dispersion_table(k_list: Iterable[float], m: float, window=DEFAULT_WINDOW, n_probes: int = 1000) -> List[dict]:
    """One row per wave number with the mode's clock exponent and window image.

    ``schwarzian_residual`` is the largest deviation, over ``n_probes``
    log-spaced probes, of the Schwarzian of the composed map (computed from
    its chained derivatives) from (1 - sigma^2)/(2 t^2).
    """
    lo, hi = _check_window(window)
    t = probe_times(window, n_probes)
    rows = []
    for k in k_list:
        spec = ModeSpec(float(k), m)
        s = spec.sigma
        d = mode_diffeo(spec.k, m, window)
        resid = np.max(np.abs(d.schwarzian(t) - (1.0 - s * s) / (2.0 * t * t)))
        lo_img, hi_img = d(np.array([lo, hi]))
        rows.append(
            {
                "k": spec.k,
                "omega0": spec.omega0,
                "omega_m": spec.omega_m,
                "sigma": s,
                "schwarzian_residual": float(resid),
                "window_lo_image": float(lo_img),
                "window_hi_image": float(hi_img),
            }
        )
    return rows


def write_table_csv(fh, rows: Sequence[dict]) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(TABLE_COLUMNS)
    for row in rows:
        w.writerow([repr(float(row[c])) for c in TABLE_COLUMNS])
