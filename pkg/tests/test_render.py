import xml.etree.ElementTree as ET

import pytest

from classkit.explain import MarginalScore
from classkit.render import (
    HIGH_COLOR,
    LOW_COLOR,
    HeatmapSpec,
    blend_hex,
    heatmap_svg,
    interpolation_param,
)
from helpers import make_session

SVG_NS = "{http://www.w3.org/2000/svg}"


def session_and_marginals(deltas, text="Some classroom talk number {i}."):
    session = make_session("s1", "t1", [text.format(i=i) for i in range(len(deltas))])
    marginals = [MarginalScore(i, float(d), ()) for i, d in enumerate(deltas)]
    return session, marginals


def parse(svg):
    return ET.fromstring(svg)


def utterance_rects(root):
    return [r for r in root.iter(f"{SVG_NS}rect") if r.get("class") == "utt"]


def callout_texts(root):
    return [t for t in root.iter(f"{SVG_NS}text") if (t.get("class") or "").startswith("callout")]


def test_endpoint_and_midpoint_colors():
    session, marginals = session_and_marginals([-1.0, 0.0, 1.0])
    root = parse(heatmap_svg(session, marginals, HeatmapSpec(k_callouts=1)))
    fills = [r.get("fill") for r in utterance_rects(root)]
    assert fills[0] == LOW_COLOR
    assert fills[2] == HIGH_COLOR
    # midpoint blend of 0x21/0xe0, 0x66/0x82, 0xac/0x14 with half-up rounding
    assert fills[1] == "#817460"
    assert blend_hex(0.0) == LOW_COLOR
    assert blend_hex(1.0) == HIGH_COLOR


def test_interpolation_param_monotone():
    deltas = [-2.0, -0.5, 0.1, 0.7, 3.0]
    params = [interpolation_param(d, min(deltas), max(deltas)) for d in deltas]
    assert params == sorted(params)
    assert params[0] == 0.0
    assert params[-1] == 1.0


def test_rect_and_callout_counts():
    deltas = [float(i % 7) - 3 + 0.01 * i for i in range(100)]
    session, marginals = session_and_marginals(deltas)
    svg = heatmap_svg(session, marginals, HeatmapSpec(k_callouts=4))
    root = parse(svg)
    assert len(utterance_rects(root)) == 100
    assert len(callout_texts(root)) == 8


def test_small_session_truncates_callouts_with_note():
    session, marginals = session_and_marginals([1.0, 2.0, 3.0])
    svg = heatmap_svg(session, marginals, HeatmapSpec(k_callouts=4))
    root = parse(svg)
    assert len(callout_texts(root)) == 3  # min(2k, utterance count)
    assert "callouts" in svg


def test_degenerate_deltas_mid_color_with_comment():
    session, marginals = session_and_marginals([2.0, 2.0, 2.0])
    svg = heatmap_svg(session, marginals, HeatmapSpec(k_callouts=1))
    assert "all marginal scores equal" in svg
    fills = {r.get("fill") for r in utterance_rects(parse(svg))}
    assert fills == {"#817460"}


def test_empty_marginals_error_and_alignment_check():
    session, marginals = session_and_marginals([1.0, 2.0])
    with pytest.raises(ValueError, match="no marginal scores"):
        heatmap_svg(session, [])
    with pytest.raises(ValueError, match="marginal scores for"):
        heatmap_svg(session, marginals[:1])


def test_output_is_deterministic_and_escaped():
    session = make_session("s1", "t1", ['She said "go" & <went>.', "Fine."])
    marginals = [MarginalScore(0, 1.0, ()), MarginalScore(1, -1.0, ())]
    svg1 = heatmap_svg(session, marginals)
    svg2 = heatmap_svg(session, marginals)
    assert svg1 == svg2
    parse(svg1)  # would raise if the quoting broke the XML
    assert "&amp;" in svg1 and "&lt;went&gt;" in svg1


def test_long_text_ellipsized_at_60_chars():
    long_text = "word " * 30
    session = make_session("s1", "t1", [long_text.strip(), "Short."])
    marginals = [MarginalScore(0, 1.0, ()), MarginalScore(1, -1.0, ())]
    svg = heatmap_svg(session, marginals, HeatmapSpec(k_callouts=1))
    root = parse(svg)
    for node in callout_texts(root):
        label = node.text or ""
        # strip the appended score suffix before measuring
        body = label.rsplit(" (", 1)[0]
        assert len(body) <= 60
