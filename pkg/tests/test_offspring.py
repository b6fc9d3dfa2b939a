import numpy as np
import pytest

from branchlab import offspring as off


def test_binary_critical():
    p = off.binary()
    assert p.mean == 1.0
    assert p.classify() == "critical"
    assert p.pgf(0.5) == pytest.approx(5 / 8, abs=1e-15)
    assert p.pgf(1.0) == pytest.approx(1.0, abs=1e-12)


def test_pgf_domain():
    p = off.binary()
    with pytest.raises(ValueError):
        p.pgf(1.5)
    with pytest.raises(ValueError):
        p.pgf(-0.1)


def test_geometric_family():
    g = off.geometric(0.5, cap=60)
    assert g.classify() == "critical"
    assert g.truncation_mass < 1e-10
    assert g.pgf(0.5) == pytest.approx(2 / 3, abs=1e-12)
    # p_k = 2^{-(k+1)} before the (tiny) renormalization
    assert g.prob(3) == pytest.approx(2.0**-4, rel=1e-12)


def test_classification():
    assert off.explicit([0.6, 0.2, 0.2]).classify() == "subcritical"
    assert off.explicit([0.2, 0.2, 0.6]).classify() == "supercritical"


def test_size_biased():
    assert off.binary().size_biased().prob(2) == 1.0
    g = off.geometric(0.5, cap=60)
    sb = g.size_biased()
    assert sb.prob(0) == 0.0
    for k in (1, 2, 5):
        assert sb.prob(k) == pytest.approx(k * 2.0 ** -(k + 1), rel=1e-10)
    # the subcritical (1/2, 1/2) law size-biases to the pure one-child law
    assert off.explicit([0.5, 0.5]).size_biased().prob(1) == 1.0


def test_size_biased_mean_dominates():
    for p in (off.binary(), off.geometric(0.5, cap=60), off.poisson(1.0),
              off.explicit([0.5, 0.3, 0.2])):
        assert p.size_biased().mean >= p.mean - 1e-12


def test_one_child_law_excluded():
    with pytest.raises(ValueError):
        off.explicit([0.0, 1.0])


def test_truncated_families_record_mass():
    for p in (off.geometric(0.4), off.poisson(0.9)):
        assert 0.0 < p.truncation_mass < 1e-10
        assert abs(p.pmf.sum() - 1.0) <= 1e-12


def test_heavy_tail():
    p = off.heavy_tail(2.5, 0.8, cap=10**5)
    assert p.classify() == "subcritical"
    assert p.mean == pytest.approx(0.8, abs=1e-9)
    k = np.arange(2, 50)
    ratios = p.pmf[k] / k.astype(float) ** -2.5
    assert np.allclose(ratios, ratios[0], rtol=1e-9)  # pure power law body
    assert p.truncation_mass < 1e-5


def test_json_round_trip():
    for p in (off.binary(), off.geometric(0.5, cap=60), off.poisson(1.0, cap=40),
              off.heavy_tail(2.5, 0.8, cap=1000)):
        spec = p.to_json()
        if spec["family"] == "binary":
            continue  # binary serializes through explicit pmfs elsewhere
        q = off.OffspringDist.from_json(spec)
        assert np.allclose(p.pmf, q.pmf)


def test_explicit_json():
    p = off.explicit([0.3, 0.4, 0.3])
    q = off.OffspringDist.from_json(p.to_json())
    assert np.allclose(p.pmf, q.pmf)
