import pytest

from branchlab import discrete_lab as lab
from branchlab import offspring as off
from branchlab.rng import RngStream
from branchlab.trees import HEIGHT, MAX_OUT_DEGREE, TOTAL_PROGENY, WIDTH

BIN = off.binary()
GEO = off.geometric(0.5, cap=60)
SUB = off.explicit([0.5, 0.5])


def test_tail_convergence_exact_binary_height():
    report = lab.run_tail_convergence(BIN, HEIGHT, 2, [4, 16, 64], "exact")
    tvs = report.column("tv")
    assert tvs[-1] < tvs[0]
    assert tvs[-1] < 0.05
    assert report.meta["immortal_total"] == pytest.approx(1.0, abs=1e-9)


def test_tail_convergence_b1_binary_is_exactly_zero():
    # both conditioned and immortal laws are the point mass on the 2-star
    report = lab.run_tail_convergence(BIN, HEIGHT, 1, [1, 4, 16], "exact")
    assert max(report.column("tv")) <= 1e-12


def test_tail_convergence_degenerate_lattice_flag():
    report = lab.run_tail_convergence(BIN, MAX_OUT_DEGREE, 2, [8, 16], "exact")
    assert all("skipped" in row for row in report.rows)
    assert report.meta["degenerate_lattice"]


def test_tail_convergence_mc_agrees_with_exact():
    grid = [2, 8]
    exact = lab.run_tail_convergence(BIN, HEIGHT, 2, grid, "exact")
    mc = lab.run_tail_convergence(
        BIN, HEIGHT, 2, grid, "mc", rng=RngStream(61), reps=20_000
    )
    for erow, mrow in zip(exact.rows, mc.rows):
        assert abs(erow["tv"] - mrow["tv"]) < 4 * mrow["se"] + 0.01


def test_point_convergence_progeny_lattice():
    report = lab.run_point_convergence(BIN, TOTAL_PROGENY, 2, [8, 9, 17, 33], "exact")
    by_n = {row["n"]: row for row in report.rows}
    assert by_n[8]["skipped"] == "outside support lattice"  # binary progeny is odd
    assert by_n[33]["tv"] < by_n[9]["tv"]


def test_point_convergence_subcritical_height_zero():
    report = lab.run_point_convergence(SUB, HEIGHT, 1, [1, 2, 3], "exact")
    assert max(row["tv"] for row in report.rows) <= 1e-12


def test_point_convergence_maxdeg_flags_degenerate():
    report = lab.run_point_convergence(BIN, MAX_OUT_DEGREE, 1, [2, 3, 8], "exact")
    by_n = {row["n"]: row for row in report.rows}
    assert "tv" in by_n[2]  # p_2 > 0 keeps n = 2 on the lattice
    assert by_n[3]["skipped"] == "outside support lattice"
    assert report.meta["degenerate_lattice"]


def test_ratio_limits_exact():
    report = lab.run_ratio_limits(BIN, HEIGHT, [2, 3], [1, 2], [16, 64], "exact")
    final = [row for row in report.rows if row["n"] == 64]
    for row in final:
        assert abs(row["tail_ratio"] - 1.0) < 0.05
        assert abs(row["point_ratio"] - 1.0) < 0.08
        assert abs(row["shift_ratio_r1"] - 1.0) < 0.05
        assert row["max_route_gap"] <= 1e-12


def test_ratio_limits_width_uses_dp():
    report = lab.run_ratio_limits(BIN, WIDTH, [2], [1], [32], "exact")
    row = report.rows[0]
    assert abs(row["tail_ratio"] - 1.0) < 0.08


def test_ratio_limits_mc_mode():
    report = lab.run_ratio_limits(
        BIN, HEIGHT, [2], [1], [8], "mc", rng=RngStream(62), reps=30_000
    )
    row = report.rows[0]
    exact = lab.run_ratio_limits(BIN, HEIGHT, [2], [1], [8], "exact").rows[0]
    assert abs(row["tail_ratio"] - exact["tail_ratio"]) < 4 * row["se_tail"] + 0.02


def test_ratio_requires_critical():
    with pytest.raises(ValueError):
        lab.run_ratio_limits(SUB, HEIGHT, [2], [1], [8], "exact")


def test_probe_conjectures_emits_two_columns():
    p = off.heavy_tail(2.5, 0.8, cap=2000)
    report = lab.probe_conjectures(
        p, MAX_OUT_DEGREE, 2, [20], 4000, RngStream(63),
    )
    assert report.meta["exploratory"]
    row = report.rows[0]
    assert "tv_immortal" in row and "tv_capped_spine" in row
    assert 0.0 <= row["tv_immortal"] <= 1.0
    assert 0.0 <= row["tv_capped_spine"] <= 1.0


def test_probe_requires_subcritical_heavy_tail():
    with pytest.raises(ValueError):
        lab.probe_conjectures(BIN, MAX_OUT_DEGREE, 2, [10], 100, RngStream(1))


def test_probe_critical_member_consistency():
    # as the family approaches criticality the tail run and the probe use the
    # same rejection machinery; sanity-check on a mildly subcritical member
    p = off.heavy_tail(2.5, 0.95, cap=2000)
    report = lab.probe_conjectures(p, TOTAL_PROGENY, 1, [15], 4000, RngStream(64))
    assert report.rows[0]["accepted"] > 0


def test_report_csv_round_trip(tmp_path):
    report = lab.run_tail_convergence(BIN, HEIGHT, 2, [4, 8], "exact")
    out = tmp_path / "r.csv"
    report.write(out)
    text = out.read_text()
    assert "tv" in text.splitlines()[0]
    assert len(text.splitlines()) == 3
