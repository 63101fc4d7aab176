import io
import math

import numpy as np
import pytest

from measure_morph.errors import InvalidParameter, ZeroWaveNumber
from measure_morph.fieldmodes import (
    TABLE_COLUMNS,
    chain_schwarzian,
    dispersion_table,
    mode_diffeo,
    probe_times,
    sigma,
    write_table_csv,
)


def test_sigma_values():
    assert sigma(1.0, 1.0) == pytest.approx(math.sqrt(2), rel=1e-15)
    assert sigma(2.0, 0.0) == 1.0
    with pytest.raises(ZeroWaveNumber):
        sigma(0.0, 1.0)


@pytest.mark.parametrize("k", [0.5, 1.0, 2.0, 4.0])
def test_mode_map_is_power_law(k):
    d = mode_diffeo(k, 1.0)
    t = probe_times((0.01, 100.0))
    s = sigma(k, 1.0)
    assert np.max(np.abs(d(t) / t**s - 1)) < 1e-10
    expected = (1 - s * s) / (2 * t * t)
    assert np.allclose(chain_schwarzian(k, 1.0, t), expected, rtol=1e-9)
    assert np.allclose(d.schwarzian(t), expected, rtol=1e-9)


def test_window_checks():
    with pytest.raises(InvalidParameter):
        mode_diffeo(1.0, 1.0, (0.0, 1.0))
    with pytest.raises(InvalidParameter):
        mode_diffeo(1.0, 1.0, (2.0, 1.0))


def test_table():
    rows = dispersion_table([0.5, 1, 2, 4], 1.0)
    assert [r["sigma"] for r in rows] == pytest.approx([math.sqrt(5), math.sqrt(2), math.sqrt(1.25), math.sqrt(1.0625)])
    assert all(r["schwarzian_residual"] < 1e-8 for r in rows)
    assert rows[1]["window_hi_image"] == pytest.approx(100.0 ** math.sqrt(2), rel=1e-10)
    buf = io.StringIO()
    write_table_csv(buf, rows)
    lines = buf.getvalue().splitlines()
    assert lines[0] == ",".join(TABLE_COLUMNS) and len(lines) == 5
