import numpy as np
import pytest

from lecvad.infer import (
    AnomalyInstance,
    InferConfig,
    candidate_instances,
    coarse_scores,
    detect,
    detection_record,
    outer_inner_confidence,
    read_detections,
    select_categories,
    temporal_nms,
    write_detections,
)
from lecvad.metrics import temporal_iou


def _scores(s_m, s_b1=None, s_aware=None):
    s_m = np.asarray(s_m, dtype=float)
    T = len(s_m)
    s_b1 = np.zeros(T) if s_b1 is None else np.asarray(s_b1, dtype=float)
    return {"s_b": np.stack([1 - s_b1, s_b1], 1), "s_m": s_m,
            "s_aware": s_m if s_aware is None else np.asarray(s_aware, dtype=float), "s_tv": None, "s_gmm": None}


def test_coarse_scores():
    sc = _scores([[1.0, 0.0], [0.0, 1.0], [0.4, 0.6]], [0.0, 1.0, 0.8])
    assert np.allclose(coarse_scores(sc), [0.0, 1.0, 0.7])


def test_coarse_in_unit_interval(rng):
    for _ in range(50):
        z = rng.standard_normal((10, 4))
        s_m = np.exp(z) / np.exp(z).sum(1, keepdims=True)
        c = coarse_scores(_scores(s_m, rng.uniform(0, 1, 10)))
        assert (c >= 0).all() and (c <= 1).all()


def _aware_for(activations, T=16):
    # logits whose softmax equals ``activations`` when every row is identical
    logits = np.log(np.asarray(activations))
    return np.tile(logits, (T, 1))


def test_select_categories_thresholds():
    act = [0.9, 0.05, 0.05]
    sc = _scores(np.full((16, 3), 1 / 3), s_aware=_aware_for(act))
    assert select_categories(sc, r_cls=0.1) == []
    # log/exp round trip can land 0.1 a hair above the threshold, so stay clear of the tie
    sc = _scores(np.full((16, 3), 1 / 3), s_aware=_aware_for([0.2001, 0.7, 0.0999]))
    assert select_categories(sc, r_cls=0.1) == [1]
    assert select_categories(sc, r_cls=0.0) == [1, 2]


def test_candidate_runs():
    col = [0.1, 0.3, 0.3, 0.1, 0.3]
    s_m = np.stack([1 - np.array(col), col], 1)
    assert candidate_instances(_scores(s_m), 1, 0.2, 0) == [(2, 3), (5, 5)]
    assert candidate_instances(_scores(s_m), 1, 0.2, 1) == [(2, 5)]
    assert candidate_instances(_scores(np.tile([0.9, 0.1], (5, 1))), 1, 0.2) == []
    with pytest.raises(ValueError):
        candidate_instances(_scores(s_m), 0)


def test_candidate_runs_strict_threshold():
    col = np.array([0.2, 0.2000001, 0.2])
    s_m = np.stack([1 - col, col], 1)
    assert candidate_instances(_scores(s_m), 1, 0.2) == [(2, 2)]


def test_candidate_properties(rng):
    for _ in range(200):
        col = rng.uniform(0, 1, int(rng.integers(1, 40)))
        runs = candidate_instances(_scores(np.stack([1 - col, col], 1)), 1, 0.5, 0)
        covered = np.zeros(len(col), dtype=bool)
        for (s, e), nxt in zip(runs, runs[1:] + [(10**9, 10**9)]):
            assert s <= e < nxt[0] - 1
            covered[s - 1:e] = True
        assert np.array_equal(covered, col > 0.5)


def test_outer_inner():
    assert outer_inner_confidence(np.full(10, 0.4), 3, 6) == pytest.approx(0.0)
    v = np.array([0.2, 0.5, 0.7])
    assert outer_inner_confidence(v, 1, 3) == pytest.approx(v.mean())
    # L=4 gives delta=1: one outer snippet per side
    v = np.array([0.0, 0.2, 0.9, 0.9, 0.9, 0.9, 0.2, 0.0])
    assert outer_inner_confidence(v, 3, 6) == pytest.approx(0.7)
    # only the right margin exists
    v = np.array([0.8, 0.8, 0.1, 0.3])
    assert outer_inner_confidence(v, 1, 2) == pytest.approx(0.8 - 0.1)


def test_outer_margin_width():
    v = np.arange(20, dtype=float)
    # L=8 gives delta=2
    w = outer_inner_confidence(v, 7, 14)
    assert w == pytest.approx(v[6:14].mean() - np.concatenate([v[4:6], v[14:16]]).mean())


def test_nms_examples():
    a = AnomalyInstance(1, 10, 1, 0.9)
    assert temporal_nms([a]) == [a]
    # IoU 8/10 = 0.8
    b = AnomalyInstance(1, 8, 1, 0.8)
    assert temporal_iou((1, 10), (1, 8)) == pytest.approx(0.8)
    assert temporal_nms([b, a], 0.5) == [a]
    c = AnomalyInstance(1, 8, 2, 0.8)
    assert set(temporal_nms([a, c], 0.5)) == {a, c}


def test_nms_antichain(rng):
    for _ in range(300):
        insts = []
        for _ in range(int(rng.integers(1, 12))):
            s = int(rng.integers(1, 30))
            insts.append(AnomalyInstance(s, s + int(rng.integers(0, 10)), int(rng.integers(1, 3)),
                                         float(rng.uniform())))
        thr = float(rng.uniform(0.05, 1.0))
        kept = temporal_nms(insts, thr)
        for i, x in enumerate(kept):
            for y in kept[i + 1:]:
                if x.g == y.g:
                    assert temporal_iou((x.s, x.e), (y.s, y.e)) < thr


def test_instance_validation():
    with pytest.raises(ValueError):
        AnomalyInstance(5, 3, 1, 0.1)
    with pytest.raises(ValueError):
        AnomalyInstance(1, 3, 0, 0.1)


def test_detect_all_normal_is_empty():
    s_m = np.tile([1.0, 0.0, 0.0], (20, 1))
    assert detect(_scores(s_m)) == []


def _planted():
    T = 32
    col = np.full(T, 0.05)
    col[10:18] = 0.9
    s_m = np.stack([1 - col, col, np.zeros(T)], 1)
    return _scores(s_m, col), T


def test_detect_finds_planted_interval():
    sc, _ = _planted()
    out = detect(sc)
    assert len(out) == 1
    assert out[0].g == 1 and temporal_iou((out[0].s, out[0].e), (11, 18)) == 1.0
    assert out[0].w == pytest.approx(0.9 - 0.05)


def test_detect_is_composition():
    sc, _ = _planted()
    cfg = InferConfig()
    manual = []
    for c in select_categories(sc, r_cls=cfg.r_cls):
        for s, e in candidate_instances(sc, c, cfg.r_ano, cfg.gap):
            manual.append(AnomalyInstance(s, e, c, outer_inner_confidence(sc["s_m"][:, c], s, e)))
    manual = sorted(temporal_nms(manual, cfg.iou_thresh), key=lambda a: -a.w)
    assert detect(sc, cfg) == manual
    assert detect(sc, cfg) == detect(sc, cfg)


def test_score_source_aware():
    sc, T = _planted()
    aware = np.array(sc["s_m"])
    aware[:, 1] = 0.0
    aware[:4, 1] = 0.8
    sc["s_aware"] = aware
    out = detect(sc, InferConfig(score_source="aware", r_cls=0.0))
    assert [(o.s, o.e) for o in out] == [(1, 4)]
    with pytest.raises(ValueError):
        InferConfig(score_source="other")


def test_detection_records_round_trip(tmp_path):
    inst = AnomalyInstance(3, 4, 2, 0.5)
    rec = detection_record("v1", inst, fps=25.0, snippet_len=16)
    assert rec == {"video_id": "v1", "s": 3, "e": 4, "g": 2, "w": 0.5,
                   "t_start_sec": 2 * 16 / 25.0, "t_end_sec": 4 * 16 / 25.0}
    path = tmp_path / "d.jsonl"
    write_detections([rec, rec], path)
    assert read_detections(path) == [rec, rec]
