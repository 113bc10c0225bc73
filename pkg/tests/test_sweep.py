import json

import pytest

from dnaregime.homopolymer import EstimatorConfig
from dnaregime.sweep import (
    CSV_COLUMNS,
    RegimePoint,
    alpha_grid,
    calibrate_dpolicy,
    calibration_markdown,
    crossings_by_constraint,
    emit_map,
    find_crossing,
    parse_grid,
    point_seed,
    points_to_csv,
    points_to_svg,
    read_points_csv,
    sweep_gc,
    sweep_homopolymer,
)

FAST = EstimatorConfig.fixed(3000)


def test_alpha_grid():
    g = alpha_grid(0, 0.3, 0.005)
    assert len(g) == 61 and g[-1] == 0.3 and g[1] == 0.005
    assert alpha_grid(0, 10, 0.1, inclusive=False)[-1] == 9.9
    assert parse_grid("0:1:0.25") == [0, 0.25, 0.5, 0.75, 1.0]
    assert parse_grid("0.1, 0.2") == [0.1, 0.2]
    with pytest.raises(ValueError):
        alpha_grid(0, 1, 0)


def test_point_seed_depends_only_on_inputs():
    assert point_seed(1, 2, 0) == point_seed(1, 2, 0)
    assert len({point_seed(1, i, r) for i in range(10) for r in range(3)}) == 30
    assert point_seed(1, 0) != point_seed(2, 0)


def test_find_crossing_examples():
    (c,) = find_crossing([0, 1], [1, -1])
    assert c.alpha == 0.5 and c.direction == "down"
    assert find_crossing([0, 1, 2], [1, 2, 3]) == []
    xs = find_crossing([0, 1, 2, 3], [1, -1, 1, -1])
    assert [x.alpha for x in xs] == [0.5, 1.5, 2.5]
    assert [x.direction for x in xs] == ["down", "up", "down"]
    with pytest.raises(ValueError):
        find_crossing([1, 0], [1, -1])


def test_find_crossing_interval_from_uncertainty():
    (c,) = find_crossing([0, 1, 2], [1.0, 0.0 + 0.2, -1.0], [0.1, 0.1, 0.1])
    assert c.lo <= c.alpha <= c.hi
    assert c.lo < c.hi
    (c0,) = find_crossing([0, 1], [1, -1], [0, 0])
    assert c0.lo == c0.hi == c0.alpha


def test_find_crossing_exact_zero_is_not_double_counted():
    xs = find_crossing([0, 1, 2], [1, 0, -1])
    assert len(xs) == 1 and xs[0].alpha == pytest.approx(1.0)


def _pt(alpha, diff, c=1, unc=0.0):
    return RegimePoint("homopolymer", c, "linear-run", alpha, 0.01, None, 1.0, 1.0 - diff, diff, unc)


def test_csv_round_trip_and_default_format(tmp_path):
    pts = [_pt(0.0, 0.1), _pt(0.005, -0.0123456789), _pt(0.01, -0.2, unc=0.001)]
    pts += sweep_gc([12], [0.0], [0.0, 1.0], 0.01)
    text = points_to_csv(pts, header_comment="config_sha256=abc")
    assert text.splitlines()[0] == "# config_sha256=abc"
    assert text.splitlines()[1] == ",".join(CSV_COLUMNS)
    assert read_points_csv(text) == pts
    out = emit_map(pts, tmp_path / "map")
    assert out.read_text() == points_to_csv(pts)
    data = json.loads(emit_map(pts, tmp_path / "map.json", "json").read_text())
    assert len(data["points"]) == len(pts)
    with pytest.raises(ValueError):
        emit_map(pts, tmp_path / "x", "png")
    with pytest.raises(ValueError):
        emit_map([], tmp_path / "x")


def test_svg_single_point_and_colours():
    svg = points_to_svg([_pt(0.1, 0.5)])
    assert svg.startswith("<svg") and svg.count("<rect") == 1
    assert "#762a83" in svg  # full-strength purple for the only (largest) point
    assert "#e66101" in points_to_svg([_pt(0.1, -0.5)])
    assert "#bdbdbd" in points_to_svg([_pt(0.1, 0.5), _pt(0.2, 0.001)])
    assert "#bdbdbd" in points_to_svg([_pt(0.1, 0.5), _pt(0.2, 0.02, unc=0.05)])
    with pytest.raises(ValueError):
        points_to_svg([])


def test_homopolymer_sweep_deterministic_across_threads():
    kw = dict(m_list=[1, 3], growth_kind="linear", alphas=[0.0, 0.05], p=0.01,
              estimator_config=FAST, seed=42, replicates=2)
    a = sweep_homopolymer(threads=1, **kw)
    b = sweep_homopolymer(threads=2, **kw)
    assert points_to_csv(a) == points_to_csv(b)
    c = sweep_homopolymer(threads=1, **{**kw, "seed": 43})
    assert points_to_csv(a) != points_to_csv(c)
    assert [(p.constraint, p.alpha) for p in a] == [(1, 0.0), (1, 0.05), (3, 0.0), (3, 0.05)]
    for p in a:
        assert p.diff == pytest.approx(p.R_u - p.R_c)
        assert p.uncertainty > 0


def test_homopolymer_sweep_validation():
    with pytest.raises(ValueError):
        sweep_homopolymer([], "linear", [0.0], 0.01)
    with pytest.raises(ValueError):
        sweep_homopolymer([1], "linear", [0.0], 0.0)


def test_homopolymer_weak_constraint_costs_little_at_alpha_zero():
    pts, ests = sweep_homopolymer([1, 6], "linear", [0.0], 0.01, EstimatorConfig.fixed(200_000),
                                  seed=1, return_estimates=True)
    by_m = {p.constraint: p for p in pts}
    assert by_m[1].diff > 0.3  # m=1 loses log2(4/3)-ish at alpha=0
    assert abs(by_m[6].diff) < 0.01
    assert all(e.steps == 200_000 for e in ests)


def test_gc_sweep_properties():
    alphas = alpha_grid(0, 10, 0.5, inclusive=False)
    pts = sweep_gc([60], [0.0, 0.05, 0.5], alphas, 0.01)
    by = {(p.constraint, p.alpha): p for p in pts}
    for a in alphas:
        assert by[(0.5, a)].diff == 0.0
    assert by[(0.0, 0.0)].diff > 0 and by[(0.05, 0.0)].diff > 0
    assert any(by[(0.0, a)].diff < 0 for a in alphas)
    assert all(1 <= p.d_c <= 61 and 1 <= p.d_u <= 61 for p in pts)


def test_gc_sweep_threads_match_serial():
    kw = dict(n_list=[30], epsilon_list=[0.0, 0.1], alphas=[0.0, 2.0, 4.0], p=0.01)
    assert sweep_gc(threads=1, **kw) == sweep_gc(threads=2, **kw)


def test_gc_sweep_high_alpha_clamps_distance():
    (p,) = sweep_gc([20], [0.5], [9.9], 0.7)
    # 2*ceil(p_bar*n)+1 exceeds n+1; the whole space is one ball and the rate is 0
    assert p.d_u == p.d_c == 21
    assert p.R_u == 0.0 and p.R_c == 0.0


def test_crossings_by_constraint():
    pts = [_pt(0.0, 0.1, c=3), _pt(0.1, -0.1, c=3), _pt(0.0, 0.2, c=5), _pt(0.1, 0.1, c=5)]
    out = crossings_by_constraint(pts)
    assert out["homopolymer:constraint=3"][0]["alpha"] == pytest.approx(0.05)
    assert out["homopolymer:constraint=5"] == []


def test_calibration_report():
    rep = calibrate_dpolicy(n=30, alphas=alpha_grid(0, 10, 1.0, inclusive=False), scales=(1.0, 2.0))
    names = [r["policy"] for r in rep["policies"]]
    assert {"correct", "detect", "scaled(c=1)", "scaled(c=2)"} <= set(names)
    assert rep["best"] in names
    md = calibration_markdown(rep)
    assert md.startswith("#") and rep["best"] in md
