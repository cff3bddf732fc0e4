"""End-to-end acceptance checks; each test records one PASS/FAIL line in the terminal summary."""

import itertools
import json
import time

import numpy as np
import pytest
import torch

from lecvad.cli import run
from lecvad.gmprior import GaussKernels, gmm_scores
from lecvad.infer import AnomalyInstance, temporal_nms
from lecvad.membank import init_bank, momentum_update
from lecvad.metrics import THRESHOLDS, detection_map, roc_auc, temporal_iou
from lecvad.objective import reg_loss, topk_pool
from lecvad.trainer import grad_check

from conftest import ACCEPTANCE_LINES
from test_metrics import _random_case, oracle_map, pairwise_auc


def record(n, title, ok, detail):
    ACCEPTANCE_LINES.append(f"[{'PASS' if ok else 'FAIL'}] criterion {n}: {title} :: {detail}")
    return ok


class Workspace:
    """Synthetic defaults (seed 7) plus cached CLI train/eval runs keyed by name."""

    def __init__(self, root):
        self.root = root
        self.data = root / "data"
        self.runs = {}
        t0 = time.perf_counter()
        assert run(["synth", "--seed", "7", "--out", str(self.data)]) == 0
        self.synth_seconds = time.perf_counter() - t0

    def train_eval(self, name, **overrides):
        if name in self.runs:
            return self.runs[name]
        out = self.root / name
        out.mkdir()
        cfg = {"train_manifest": str(self.data / "train.json"), "test_manifest": str(self.data / "test.json"),
               "out": str(out), **overrides}
        (out / "cfg.json").write_text(json.dumps(cfg))
        t0 = time.perf_counter()
        assert run(["train", "--config", str(out / "cfg.json"), "--threads", "1"]) == 0
        assert run(["eval", "--config", str(out / "cfg.json"), "--threads", "1"]) == 0
        result = {"seconds": time.perf_counter() - t0, "out": out,
                  "report": json.loads((out / "eval_report.json").read_text()),
                  "log": json.loads((out / "train_log.json").read_text())}
        self.runs[name] = result
        return result


@pytest.fixture(scope="module")
def ws(tmp_path_factory):
    return Workspace(tmp_path_factory.mktemp("acceptance"))


def test_c1_gradient_fidelity():
    t0 = time.perf_counter()
    report = grad_check(T=6, d=8, C=3, m_blocks=1)
    seconds = time.perf_counter() - t0
    ok = report.max_error < 1e-4 and report.passed and seconds < 30
    record(1, "gradient fidelity", ok,
           f"max rel err {report.max_error:.2e} over {len(report.errors)} tensors (< 1e-4), {seconds:.1f}s (< 30s)")
    assert ok, report.to_dict()


def test_c2_oracle_equivalence():
    rng = np.random.default_rng(2024)
    worst_topk = 0.0
    for _ in range(500):
        T = int(rng.integers(1, 9))
        K = int(rng.integers(1, T + 1))
        col = rng.standard_normal(T)
        brute = max(sum(col[list(H)]) / K for H in itertools.combinations(range(T), K))
        worst_topk = max(worst_topk, abs(topk_pool(torch.from_numpy(col)[:, None], K).item() - brute))
    worst_map = 0.0
    for _ in range(200):
        preds, gts = _random_case(rng)
        got, expect = detection_map(preds, gts).map_at, oracle_map(preds, gts, THRESHOLDS)
        worst_map = max(worst_map, max(abs(got[t] - expect[t]) for t in THRESHOLDS))
    auc_exact = True
    for _ in range(200):
        n = int(rng.integers(2, 30))
        labels = rng.integers(0, 2, n)
        labels[0], labels[1] = 0, 1
        scores = rng.integers(0, 5, n) / 4
        auc_exact &= roc_auc(scores, labels) == pairwise_auc(scores, labels)
    ok = worst_topk <= 1e-9 and worst_map <= 1e-9 and auc_exact
    record(2, "oracle equivalence", ok,
           f"topk max |diff| {worst_topk:.1e}, mAP max |diff| {worst_map:.1e}, AUC exact={auc_exact}")
    assert ok


def test_c3_analytic_invariants():
    gen = torch.Generator().manual_seed(11)
    checks = {}
    z = torch.randn(50, 7, generator=gen, dtype=torch.float64) * 5
    checks["softmax rows"] = (torch.softmax(z, 1).sum(1) - 1).abs().max().item() <= 1e-6
    T, C = 30, 4
    k = GaussKernels(torch.rand(T, C, generator=gen, dtype=torch.float64),
                     0.05 + torch.rand(T, C, generator=gen, dtype=torch.float64))
    s = gmm_scores(k, torch.softmax(torch.randn(T, C + 1, generator=gen, dtype=torch.float64), 1), T)
    checks["s_gmm in [0,1]"] = bool(((s >= 0) & (s <= 1)).all())
    s_b = torch.softmax(torch.randn(T, 2, generator=gen, dtype=torch.float64), 1)
    s_m = torch.softmax(torch.randn(T, C + 1, generator=gen, dtype=torch.float64), 1)
    matched = torch.cat([(1 - s_b[:, 1:]), s_m[:, 1:] / s_m[:, 1:].sum(1, keepdim=True) * s_b[:, 1:]], 1)
    checks["L_reg zero iff match"] = (reg_loss(matched, s_b).item() < 1e-12) and reg_loss(s_m, s_b).item() > 0
    f_aug = torch.randn(C + 1, 8, generator=gen, dtype=torch.float64)
    bank = init_bank(torch.randn(C + 1, 8, generator=gen, dtype=torch.float64), 0, 1.0).double()
    before = bank.M.clone()
    momentum_update(bank, f_aug)
    checks["eta=1 identity"] = torch.equal(bank.M, before)
    bank = init_bank(before, 0, 0.0).double()
    momentum_update(bank, f_aug)
    checks["eta=0 copy"] = torch.equal(bank.M, f_aug)
    rng = np.random.default_rng(5)
    antichain = True
    for _ in range(1000):
        props = []
        for _ in range(int(rng.integers(1, 15))):
            st = int(rng.integers(1, 40))
            props.append(AnomalyInstance(st, st + int(rng.integers(0, 12)), int(rng.integers(1, 4)),
                                         float(rng.uniform())))
        kept = temporal_nms(props, 0.5)
        antichain &= all(temporal_iou((a.s, a.e), (b.s, b.e)) < 0.5
                         for a, b in itertools.combinations(kept, 2) if a.g == b.g)
    checks["NMS antichain x1000"] = antichain
    ok = all(checks.values())
    record(3, "analytic invariants", ok, ", ".join(f"{k}={'ok' if v else 'BROKEN'}" for k, v in checks.items()))
    assert ok, checks


def test_c4_end_to_end_synthetic(ws):
    res = ws.train_eval("defaults")
    rep = res["report"]
    auc, map50 = rep["frame_auc"], rep["map_at"]["0.5"]
    seconds = res["seconds"] + ws.synth_seconds
    ok = auc >= 0.90 and map50 >= 0.30 and seconds < 600
    record(4, "end-to-end synthetic", ok,
           f"frame AUC {auc:.4f} (>= 0.90), mAP@0.5 {map50:.4f} (>= 0.30), {seconds:.0f}s (< 600s), "
           f"l_total epoch1 {res['log'][0]['l_total']:.4f} -> epoch10 {res['log'][-1]['l_total']:.4f}")
    assert ok


def test_c5_completeness(ws):
    with_prior = ws.train_eval("defaults")["report"]
    without = ws.train_eval("lambda0", lam=0.0)["report"]
    tv_a, tv_b = with_prior["mean_total_variation"], without["mean_total_variation"]
    frag_a, frag_b = with_prior["predictions_per_gt@0.5"], without["predictions_per_gt@0.5"]
    ok = tv_a < tv_b and frag_a <= frag_b
    record(5, "completeness (lambda 0.3 vs 0)", ok,
           f"mean TV {tv_a:.5f} vs {tv_b:.5f} (strictly lower), predictions/GT@0.5 {frag_a:.3f} vs {frag_b:.3f} (<=)")
    assert ok


TOGGLES = ("use_cmb", "use_vob", "use_gmm_loss", "use_reg_loss", "use_membank")


def test_c6_ablation_structure(ws):
    small = {"epochs": 1, "T_max": 64}
    outcomes = {}
    for toggle in TOGGLES:
        res = ws.train_eval(f"ablate_{toggle}", **small, **{toggle: False})
        finite = all(np.isfinite(v) for row in res["log"] for k, v in row.items() if k.startswith("l_"))
        emitted = (res["out"] / "eval_report.json").exists() and "avg_map" in res["report"]
        outcomes[toggle] = finite and emitted
    ok = all(outcomes.values())
    record(6, "ablation structure", ok, ", ".join(f"{k}=off:{'ok' if v else 'BROKEN'}" for k, v in outcomes.items()))
    assert ok


def test_c7_determinism(ws):
    a = ws.train_eval("defaults")
    b = ws.train_eval("defaults_repeat")
    same_ckpt = (a["out"] / "checkpoint.lck").read_bytes() == (b["out"] / "checkpoint.lck").read_bytes()
    same_report = (a["out"] / "eval_report.json").read_bytes() == (b["out"] / "eval_report.json").read_bytes()
    ok = same_ckpt and same_report
    record(7, "determinism (--threads 1)", ok, f"checkpoint identical={same_ckpt}, EvalReport identical={same_report}")
    assert ok
