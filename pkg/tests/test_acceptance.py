"""Acceptance suite: the ten criteria, each at its stated tolerance.

Every criterion prints one line ``ACCEPTANCE <k> PASS|FAIL <detail>`` to the
terminal (outside pytest's capture) before asserting.  Criteria 7, 8 and 10
train every model at desk scale and are marked slow.
"""

import time

import numpy as np
import pytest

from fibretm import autodiff as ad
from fibretm.autodiff import Tensor, gradient_check
from fibretm.datagen import build_dataset
from fibretm.evaluation import MonotonicityError, eval_mean_error, eval_participation, ls_ratio_search
from fibretm.matrix import embed, participation_ratio, participation_ratios
from fibretm.models import CNN, FCNN, Attention, AttentionFCNN, LinearSimilarity, build_pipeline, similarity
from fibretm.training import TrainConfig, train

from gradcases import CASES, SEEDS

FAMILIES = ("forward", "roundtrip", "physical")
SPARSE_ERR, DENSE_ERR = 0.10, 0.15

# desk-scale settings for criteria 7, 8 and 10
DESK_N, DESK_COUNT, DESK_SEED = 16, 2200, 0
DESK_MODEL = {"fcnn_width": 128, "cnn_channels": (4, 8, 16, 24), "invert_hidden": None}
DESK_TRAIN = {"max_epochs": 100, "patience": 10, "seed": 0}
DESK_BUDGET_S = 30 * 60


@pytest.fixture
def verdict(capsys):
    def emit(k, ok, detail):
        with capsys.disabled():
            print(f"\nACCEPTANCE {k} {'PASS' if ok else 'FAIL'} {detail}")
        assert ok, detail

    return emit


def crandn(rng, *shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


# ---------------------------------------------------------------------------
# 1-6: algebra, data and gradients


def test_c1_embedding_algebra(verdict):
    t0 = time.perf_counter()
    rng = np.random.default_rng(1)
    worst_hom = worst_iso = 0.0
    for _ in range(200):
        a, b = crandn(rng, 8, 8), crandn(rng, 8, 8)
        ea, eb = embed(a), embed(b)
        worst_hom = max(worst_hom, np.linalg.norm(embed(a @ b) - ea @ eb)
                        / (np.linalg.norm(ea) * np.linalg.norm(eb)))
        # the block embedding doubles the squared Frobenius norm
        worst_iso = max(worst_iso, abs(np.linalg.norm(ea) ** 2 / (2 * np.linalg.norm(a) ** 2) - 1))
    dt = time.perf_counter() - t0
    ok = worst_hom <= 1e-10 and worst_iso <= 1e-12 and dt < 1.0
    verdict(1, ok, f"hom={worst_hom:.2e} iso={worst_iso:.2e} time={dt:.2f}s")


def test_c2_participation_anchors(verdict):
    t0 = time.perf_counter()
    rng = np.random.default_rng(2)
    errs = [abs(participation_ratio(np.eye(78)) - 1 / 78),
            abs(participation_ratio(np.ones((9, 9))) - 1.0)]
    single = np.zeros((7, 7), complex)
    single[2, 5] = 3 - 4j
    errs.append(abs(participation_ratio(single) - 1 / 49))
    scal = 0.0
    for _ in range(100):
        t = crandn(rng, 6, 6)
        c = complex(*rng.standard_normal(2)) * 10 ** rng.uniform(-3, 3)
        scal = max(scal, abs(participation_ratio(c * t) - participation_ratio(t)))
    dt = time.perf_counter() - t0
    ok = max(errs) <= 1e-12 and scal <= 1e-12 and dt < 1.0
    verdict(2, ok, f"anchor_err={max(errs):.1e} scalar_err={scal:.1e} time={dt:.2f}s")


@pytest.fixture(scope="module")
def full_scale():
    t0 = time.perf_counter()
    data = {f: build_dataset(f, count=1000, master_seed=0, n=78) for f in FAMILIES}
    return data, time.perf_counter() - t0


def test_c3_dataset_statistics(verdict, full_scale):
    data, dt = full_scale
    p = {f: participation_ratios(data[f].data).mean() for f in FAMILIES}
    ok = (0.04 <= p["forward"] <= 0.08 and 0.36 <= p["roundtrip"] <= 0.56 and 0.01 <= p["physical"] <= 0.05
          and p["physical"] < p["forward"] < p["roundtrip"] and dt < 300)
    detail = " ".join(f"{f}={v:.4f}" for f, v in p.items())
    verdict(3, ok, f"{detail} time={dt:.0f}s")


def test_c4_structure(verdict, full_scale):
    data, _ = full_scale
    t0 = time.perf_counter()
    rt = data["roundtrip"].data
    sym = max(np.linalg.norm(t - t.T) / np.linalg.norm(t) for t in rt)
    ph = data["physical"].data
    eye = np.eye(78)
    unit = max(np.linalg.norm(t.conj().T @ t - eye) / np.sqrt(78) for t in ph)
    conds = np.linalg.cond(data["forward"].data)
    lo, hi = conds.min(), conds.max()
    ok_cond = lo >= 3 * (1 - 1e-6) and hi <= 10 * (1 + 1e-6)
    dt = time.perf_counter() - t0
    ok = sym <= 1e-10 and unit <= 1e-7 and ok_cond and dt < 120
    verdict(4, ok, f"sym={sym:.1e} unitary={unit:.1e} cond=[{lo:.4f}, {hi:.4f}] time={dt:.1f}s")


def _block_cases():
    def dense(rng):
        model = FCNN(2, width=5, seed=int(rng.integers(1 << 30)))
        x, r = Tensor(rng.standard_normal((2, 4, 4))), Tensor(rng.standard_normal((2, 4, 4)))
        return lambda: ad.sum(ad.mul(model(x), r)), model.params, None

    def conv_pool(rng):
        model = CNN(8, channels=(2, 2, 3, 2), seed=int(rng.integers(1 << 30)))
        x, r = Tensor(rng.standard_normal((1, 16, 16))), Tensor(rng.standard_normal((1, 16, 16)))
        return lambda: ad.sum(ad.mul(model(x), r)), model.params, 6

    def attention(rng):
        model = Attention(3, seed=int(rng.integers(1 << 30)))
        x = Tensor(rng.standard_normal((2, 6, 6)), requires_grad=True)
        r = Tensor(rng.standard_normal((2, 6, 6)))
        return lambda: ad.sum(ad.mul(model(x), r)), {**model.params, "x": x}, None

    def attention_fcnn(rng):
        model = AttentionFCNN(2, width=5, seed=int(rng.integers(1 << 30)))
        x, r = Tensor(rng.standard_normal((2, 4, 4))), Tensor(rng.standard_normal((2, 4, 4)))
        return lambda: ad.sum(ad.mul(model(x), r)), model.params, None

    def similarity_inverse(rng):
        n = 3
        b = Tensor(np.stack([np.eye(n), np.zeros((n, n))]) + 0.3 * rng.standard_normal((2, n, n)),
                   requires_grad=True)
        t = crandn(rng, 2, n, n)
        r = Tensor(rng.standard_normal((2, 2 * n, 2 * n)))
        # B^-1 T B: the gradient flows through the LU inverse path
        return lambda: ad.sum(ad.mul(similarity(b, t), r)), {"b": b}, None

    return [dense, conv_pool, attention, attention_fcnn, similarity_inverse]


def test_c5_gradients(verdict):
    t0 = time.perf_counter()
    worst, failures, count = 0.0, [], 0
    for case in CASES:
        for seed in SEEDS:
            fn, params = case(np.random.default_rng(seed))
            rep = gradient_check(fn, params)
            worst, count = max(worst, rep.max_rel_error), count + 1
            if not rep.passed:
                failures.append((case.__name__, seed))
    for block in _block_cases():
        for seed in SEEDS:
            fn, params, checks = block(np.random.default_rng(seed))
            # a bias shift moves a whole channel, so a 1e-5 stencil can straddle a
            # leaky-relu kink somewhere in the map; the smaller step avoids that
            step = 1e-7 if block.__name__ == "conv_pool" else 1e-5
            rep = gradient_check(fn, params, max_checks=checks, seed=seed, step=step)
            worst, count = max(worst, rep.max_rel_error), count + 1
            if not rep.passed:
                failures.append((block.__name__, seed))
    dt = time.perf_counter() - t0
    ok = not failures and worst <= 1e-4 and dt < 120
    verdict(5, ok, f"instances={count} worst={worst:.1e} failures={failures[:3]} time={dt:.1f}s")


def test_c6_linear_exactness(verdict):
    rng = np.random.default_rng(6)
    worst = {"identity": 0.0, "trace": 0.0, "det": 0.0, "eig": 0.0}
    for k in range(20):
        model = LinearSimilarity(6, seed=k, init_eps=0.3)
        t = crandn(rng, 6, 6)
        tp = model.transform_complex(t)
        norm = np.linalg.norm(t)
        worst["identity"] = max(worst["identity"], np.linalg.norm(model.invert_complex(tp) - t) / norm)
        worst["trace"] = max(worst["trace"], abs(np.trace(tp) - np.trace(t)) / norm)
        worst["det"] = max(worst["det"], abs(np.linalg.det(tp) - np.linalg.det(t)) / abs(np.linalg.det(t)))
        ev_tp = list(np.linalg.eigvals(tp))
        for e in np.linalg.eigvals(t):
            j = int(np.argmin(np.abs(np.array(ev_tp) - e)))
            worst["eig"] = max(worst["eig"], abs(ev_tp.pop(j) - e) / max(1.0, abs(e)))
    ds = build_dataset("physical", count=33, master_seed=6, n=6)
    pipe = build_pipeline("linear", 6, seed=1, init_eps=0.2)
    err, _ = eval_mean_error(pipe, ds.subset("test"))
    ok = (worst["identity"] <= 1e-8 and worst["trace"] <= 1e-8 and worst["det"] <= 1e-8
          and worst["eig"] <= 1e-6 and err <= 1e-8)
    detail = " ".join(f"{k}={v:.1e}" for k, v in worst.items())
    verdict(6, ok, f"{detail} mean_error={err:.1e}")


# ---------------------------------------------------------------------------
# 9: latent-space ratio search


def test_c9_ls_machinery(verdict):
    n = 4
    rng = np.random.default_rng(9)
    basis = rng.standard_normal((2 * n) ** 2)
    rank1 = (rng.standard_normal(2000)[:, None] * basis).reshape(-1, 2 * n, 2 * n)
    noise = rng.standard_normal((2000, 2 * n, 2 * n))
    fired = []
    results = {}
    for name, data in (("rank1", rank1), ("noise", noise)):
        try:
            results[name] = ls_ratio_search(data[:1600], data[1600:], epochs=30, lr=3e-3, seed=0)
        except MonotonicityError as exc:
            fired.append(f"{name}: {exc}")
    r1, nz = results.get("rank1"), results.get("noise")
    ok = (not fired and r1 is not None and not r1.overflow and r1.s_star <= 2 * n
          and nz is not None and nz.overflow)
    detail = (f"rank1 s*={getattr(r1, 's_star', None)} noise={nz.label() if nz else None} "
              f"monotonicity_fired={fired}")
    verdict(9, ok, detail)


# ---------------------------------------------------------------------------
# 7, 8, 10: desk-scale training


def desk_dataset(family):
    return build_dataset(family, count=DESK_COUNT, master_seed=DESK_SEED, n=DESK_N)


def desk_run(family, model, dataset=None):
    dataset = dataset if dataset is not None else desk_dataset(family)
    cfg = TrainConfig(model=model, model_options=dict(DESK_MODEL), **DESK_TRAIN)
    t0 = time.perf_counter()
    record, pipe = train(cfg, dataset)
    elapsed = time.perf_counter() - t0
    test = dataset.subset("test")
    p, _ = eval_participation(pipe, test)
    err, _ = eval_mean_error(pipe, test)
    return {"record": record, "p": p, "err": err, "time": elapsed}


DESK_JOBS = [(f, m) for f in FAMILIES for m in ("linear", "fcnn", "attention_fcnn")] + [("roundtrip", "cnn")]


@pytest.fixture(scope="module")
def desk():
    data = {f: desk_dataset(f) for f in FAMILIES}
    runs = {(f, m): desk_run(f, m, data[f]) for f, m in DESK_JOBS}
    return data, runs


@pytest.mark.slow
def test_c7_desk_scale_ordering(verdict, desk):
    _, runs = desk
    lines, ok = [], True
    for f in FAMILIES:
        lin, fc, af = runs[(f, "linear")], runs[(f, "fcnn")], runs[(f, "attention_fcnn")]
        limit = DENSE_ERR if f == "roundtrip" else SPARSE_ERR
        a = af["p"] < lin["p"]
        b = af["p"] <= fc["p"] + 0.01
        c = af["err"] <= limit
        slow = max(r["time"] for r in (lin, fc, af))
        ok = ok and a and b and c and slow <= DESK_BUDGET_S
        lines.append(f"{f}: p_afcnn={af['p']:.4f} p_lin={lin['p']:.4f} p_fcnn={fc['p']:.4f} "
                     f"err={af['err']:.4f}/{limit} (a={a} b={b} c={c}) max_time={slow:.0f}s")
    verdict(7, ok, "; ".join(lines))


@pytest.mark.slow
def test_c8_cnn_deficiency(verdict, desk):
    _, runs = desk
    cnn, fc = runs[("roundtrip", "cnn")], runs[("roundtrip", "fcnn")]
    ok = cnn["p"] > fc["p"] and cnn["time"] <= DESK_BUDGET_S
    verdict(8, ok, f"roundtrip p_cnn={cnn['p']:.4f} p_fcnn={fc['p']:.4f} time={cnn['time']:.0f}s")


@pytest.mark.slow
def test_c10_determinism(verdict, full_scale, desk):
    data78, _ = full_scale
    data16, runs = desk
    same_data = all(np.array_equal(build_dataset(f, count=1000, master_seed=0, n=78).data, data78[f].data)
                    for f in FAMILIES)
    again16 = {f: desk_dataset(f) for f in FAMILIES}
    same_data = same_data and all(np.array_equal(again16[f].data, data16[f].data) for f in FAMILIES)
    mismatched = [job for job in DESK_JOBS if desk_run(*job, again16[job[0]])["record"] != runs[job]["record"]]
    ok = same_data and not mismatched
    verdict(10, ok, f"datasets_bitwise={same_data} runs_repeated={len(DESK_JOBS)} mismatched={mismatched}")
