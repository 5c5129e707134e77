import math

import numpy as np
import pytest

from ldgea.optics.glass import (
    LINE_D,
    GlassCatalogError,
    WavelengthDomainError,
    load_catalog,
    parse_catalog,
    refractive_index,
)

# hand evaluation of the three-term Sellmeier formula for published N-BK7
# coefficients at the helium d line gives n = 1.51680
BK7_ND = 1.5168


def test_air_is_one():
    assert refractive_index(None, 0.5876) == 1.0


def test_constant_model_at_d_line(constant_catalog):
    assert refractive_index(constant_catalog[0], 0.5876) == 1.5


def test_sellmeier_bk7_d_line():
    cat = load_catalog()
    assert abs(cat.by_name("N-BK7").index(0.58756) - BK7_ND) < 1e-4


def test_sellmeier_matches_direct_formula():
    b = (1.03961212, 0.231792344, 1.01046945)
    c = (0.00600069867, 0.0200179144, 103.560653)
    line = "X,sellmeier," + ",".join(str(v) for v in (*b, *c)) + ",0.3,2.5"
    glass = parse_catalog(line)[0]
    for wl in (0.4861327, LINE_D, 0.6562725, 1.0):
        l2 = wl * wl
        n = math.sqrt(1 + sum(bi * l2 / (l2 - ci) for bi, ci in zip(b, c)))
        assert refractive_index(glass, wl) == pytest.approx(n, rel=1e-14)


def test_dispersive_constant_model_hits_its_three_lines():
    glass = parse_catalog("Y,constant,1.6,1.61,1.595,,,,0.3,2.5")[0]
    assert refractive_index(glass, 0.4861327) == pytest.approx(1.61, abs=1e-12)
    assert refractive_index(glass, LINE_D) == pytest.approx(1.6, abs=1e-12)
    assert refractive_index(glass, 0.6562725) == pytest.approx(1.595, abs=1e-12)


def test_wavelength_outside_domain_raises():
    glass = load_catalog()[0]
    with pytest.raises(WavelengthDomainError):
        refractive_index(glass, 5.0)


@pytest.mark.parametrize(
    "text",
    [
        "",
        "A,sellmeier,1,2,3",
        "A,magic,1,1,1,1,1,1,0.3,2.5",
        "A,constant,0.9,0.9,0.9,,,,0.3,2.5",
        "A,constant,1.5,1.5,1.5,,,,0.3,2.5\nA,constant,1.6,1.6,1.6,,,,0.3,2.5",
    ],
)
def test_bad_catalogs_are_rejected(text):
    with pytest.raises(GlassCatalogError):
        parse_catalog(text)


def test_bundled_catalog_ids_dense_and_rank_is_permutation():
    cat = load_catalog()
    assert [g.id for g in cat] == list(range(len(cat)))
    assert sorted(cat.nd_rank().tolist()) == list(range(len(cat)))
    nd = np.array([g.index(LINE_D) for g in cat])
    assert np.all(np.diff(nd[np.argsort(cat.nd_rank())]) >= 0)


def test_missing_catalog_file(tmp_path):
    with pytest.raises(GlassCatalogError):
        load_catalog(tmp_path / "none.csv")
