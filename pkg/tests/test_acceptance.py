"""Acceptance suite: one test per criterion, each printing a PASS/FAIL
line (run with ``pytest tests/test_acceptance.py -v -s`` to see them).

Every tolerance is pinned here, not calibrated elsewhere. Independent
reference routes (explicit elimination chains, constraint-substituted
least squares, fixed-order dense GEMV, exhaustive recounts) provide the
expected values.
"""

import functools
import itertools
import json
import subprocess
import sys
import time

import numpy as np
import pytest

from duosparse.calibrator import PruneConfig, precompute, prune_layer, score_block
from duosparse.linalg import cholesky_lower, dampen, eliminate_inverse, invert_spd
from duosparse.oracle import duo_loss_and_update, exact_score_column
from duosparse.pipeline import (Layer, LayerStack, calibrate_stack,
                                evaluate_dual_sparse, forward_dense)
from duosparse.simulator import CsrWeights, spmspv, sram_load_fraction
from duosparse.sparsity import magnitude_prune_columns, round_half_up

from conftest import make_spd


def criterion(num, desc):
    def deco(fn):
        @functools.wraps(fn)
        def wrapper(*args, **kwargs):
            try:
                fn(*args, **kwargs)
            except BaseException:
                print(f"FAIL criterion {num:2d}: {desc}", flush=True)
                raise
            print(f"PASS criterion {num:2d}: {desc}", flush=True)
        return wrapper
    return deco


def spd_suite():
    """50 seeded SPD matrices over k in {4, 8, 16, 32}."""
    for seed in range(50):
        k = (4, 8, 16, 32)[seed % 4]
        yield k, make_spd(k, seed=seed)


def inverse_and_factor(h):
    hinv = np.linalg.inv(h)
    hinv = (hinv + hinv.T) / 2
    return hinv, cholesky_lower(hinv)


@criterion(1, "trailing Cholesky submatrix equals Gaussian-eliminated "
              "inverse (1e-7 rel Frobenius)")
def test_criterion_1_cholesky_elimination_identity():
    for k, h in spd_suite():
        hinv, chol = inverse_and_factor(h)
        cur = hinv
        for p in range(k - 1):
            cur = eliminate_inverse(cur, p)
            tail = chol[p + 1:, p + 1:] @ chol[p + 1:, p + 1:].T
            sub = cur[p + 1:, p + 1:]
            assert np.linalg.norm(tail - sub) <= 1e-7 * np.linalg.norm(sub)


@criterion(2, "post-elimination column ratio equals Cholesky column ratio "
              "(1e-7)")
def test_criterion_2_column_ratio_identity():
    for k, h in spd_suite():
        hinv, chol = inverse_and_factor(h)
        cur = hinv
        for p in range(k):
            lhs = cur[:, p] / cur[p, p]
            rhs = chol[:, p] / chol[p, p]
            np.testing.assert_allclose(lhs[p:], rhs[p:], rtol=1e-7, atol=1e-9)
            assert np.all(lhs[:p] == 0.0) and np.all(rhs[:p] == 0.0)
            if p < k - 1:
                cur = eliminate_inverse(cur, p)


@criterion(3, "masked-product U equals row-wise trailing-factor definition "
              "(<= 1e-12)")
def test_criterion_3_masked_u_identity():
    for seed in range(10):
        rng = np.random.default_rng(seed)
        k, m = int(rng.integers(6, 25)), int(rng.integers(12, 49))
        xhat = rng.standard_normal((k, m))
        dx = 0.4 * rng.standard_normal((k, m))
        h, lam = dampen(xhat @ xhat.T, 0.1)
        state = invert_spd(h, lam)
        pre = precompute(state, xhat, dx)
        for p in range(k):
            z = dx[p, :] @ xhat.T
            row = np.zeros(k)
            row[p + 1:] = z[p + 1:] @ state.chol[p + 1:, p + 1:]
            assert np.max(np.abs(pre.u[p, :] - row)) <= 1e-12


@criterion(4, "first-block efficient scores match the direct per-column "
              "scores (1e-7 rel)")
def test_criterion_4_score_equivalence():
    for seed in range(100):
        rng = np.random.default_rng(1000 + seed)
        n = int(rng.integers(2, 9))
        k = int(rng.integers(4, 17))
        m = int(rng.integers(k + 2, 33))
        w = rng.standard_normal((n, k))
        xhat = rng.standard_normal((k, m))
        dx = 0.4 * rng.standard_normal((k, m))
        h, lam = dampen(xhat @ xhat.T, 0.1)
        state = invert_spd(h, lam)
        pre = precompute(state, xhat, dx)
        scores = score_block(w, 0, k, state, pre)
        hinv = state.chol @ state.chol.T
        hinv = (hinv + hinv.T) / 2
        for p in range(k):
            exact = exact_score_column(w, p, hinv, xhat, dx)
            np.testing.assert_allclose(
                scores[:, p], exact, rtol=1e-7,
                atol=1e-12 * max(1.0, float(np.max(np.abs(exact)))))
            if p < k - 1:
                hinv = eliminate_inverse(hinv, p)


@criterion(5, "closed-form update solves the constrained least-squares "
              "(1e-7) and is stationary (1e-4)")
def test_criterion_5_kkt_optimality():
    for seed in range(50):
        rng = np.random.default_rng(2000 + seed)
        k = int(rng.integers(6, 13))
        m = 2 * k + int(rng.integers(0, 8))
        w = rng.standard_normal(k)
        xhat = rng.standard_normal((k, m))
        r = rng.standard_normal(m)
        hinv = np.linalg.inv(xhat @ xhat.T)
        hinv = (hinv + hinv.T) / 2
        p = int(rng.integers(k))
        loss, delta = duo_loss_and_update(w, p, hinv, xhat, r)

        rest = [i for i in range(k) if i != p]
        rhs = (r + w[p] * xhat[p, :]) @ xhat[rest, :].T
        direct = np.linalg.solve(xhat[rest, :] @ xhat[rest, :].T, rhs)
        full = np.empty(k)
        full[rest] = direct
        full[p] = -w[p]
        np.testing.assert_allclose(delta, full, rtol=1e-7, atol=1e-9)

        def objective(d):
            resid = d @ xhat - r
            return resid @ resid

        h = 1e-5
        scale = max(1.0, abs(loss))
        for q in rest:
            e = np.zeros(k)
            e[q] = 1.0
            grad = (objective(delta + h * e) - objective(delta - h * e)) / (2 * h)
            assert abs(grad) <= 1e-4 * scale


@criterion(6, "zero residual collapses to the plain update bitwise; equal "
              "streams make duogpt/sparsegpt bit-identical")
def test_criterion_6_reductions():
    # (a) r = 0 collapses the loss/update to the inverse-diagonal form.
    rng = np.random.default_rng(3000)
    k, m = 10, 24
    w = rng.standard_normal(k)
    xhat = rng.standard_normal((k, m))
    hinv = np.linalg.inv(xhat @ xhat.T)
    hinv = (hinv + hinv.T) / 2
    for p in range(k):
        loss, delta = duo_loss_and_update(w, p, hinv, xhat, np.zeros(m))
        assert loss == w[p] ** 2 / hinv[p, p]
        expected = -(w[p] / hinv[p, p]) * hinv[p, :]
        expected[p] = -w[p]
        assert np.array_equal(delta, expected)

    # (b) identical sparse/dense streams: bit-identical outcomes.
    for seed in range(5):
        rng = np.random.default_rng(3100 + seed)
        w2 = rng.standard_normal((6, 16))
        x = rng.standard_normal((16, 48))
        xhat2, _ = magnitude_prune_columns(x, 0.5)
        for act_order in (False, True):
            base = dict(pw=0.5, px=0.5, block_size=8, act_order=act_order)
            a = prune_layer(w2, xhat2, xhat2,
                            PruneConfig(method="duogpt", **base))
            b = prune_layer(w2, xhat2, xhat2,
                            PruneConfig(method="sparsegpt", **base))
            assert np.array_equal(a.pruned_w, b.pruned_w)
            assert np.array_equal(a.mask_w, b.mask_w)


def _end_to_end_error(seed, method, level):
    rng = np.random.default_rng(seed)
    layers = [Layer(rng.standard_normal((128, 128)), "relu"),
              Layer(rng.standard_normal((128, 128)), "none")]
    stack = LayerStack(layers)
    x0 = rng.standard_normal((128, 512))
    dense = forward_dense(stack, x0)
    cfg = PruneConfig(pw=level, px=level, block_size=128, act_order=True,
                      method=method)
    pruned, _ = calibrate_stack(stack, x0, cfg)
    out = evaluate_dual_sparse(pruned, x0, level)
    return float(np.linalg.norm(out - dense))


@criterion(7, "median dual-sparse error orders duogpt <= sparsegpt <= "
              "wanda <= magnitude; duogpt gap widens with sparsity")
def test_criterion_7_trend_analogue():
    seeds = range(20)
    med = {}
    for method in ("duogpt", "sparsegpt", "wanda", "magnitude"):
        med[method] = float(np.median([_end_to_end_error(s, method, 0.5)
                                       for s in seeds]))
    assert med["duogpt"] <= med["sparsegpt"] <= med["wanda"] <= med["magnitude"]

    gaps = {}
    for level in (0.3, 0.6):
        duo = float(np.median([_end_to_end_error(s, "duogpt", level)
                               for s in seeds]))
        spg = float(np.median([_end_to_end_error(s, "sparsegpt", level)
                               for s in seeds]))
        gaps[level] = spg - duo
    assert gaps[0.6] > gaps[0.3]


@criterion(8, "expectation-mode SRAM fraction is 0.25 +/- 0.01; calibrated "
              "worst case <= 0.30 and <= 1 - px")
def test_criterion_8_sram_fraction():
    rng = np.random.default_rng(4000)
    mask = (rng.random((400, 256)) < 0.5).astype(np.uint8)  # n*k >= 1e5
    frac = sram_load_fraction(mask, 0.5, False)
    assert abs(frac - 0.25) <= 0.01

    layers = [Layer(rng.standard_normal((128, 128)), "relu"),
              Layer(rng.standard_normal((128, 128)), "none")]
    x0 = rng.standard_normal((128, 512))
    cfg = PruneConfig(pw=0.5, px=0.5, block_size=128, act_order=True)
    _, reports = calibrate_stack(LayerStack(layers), x0, cfg)
    for rep in reports:
        worst = sram_load_fraction(rep.outcome.mask_w, 0.5, True)
        assert worst <= 0.30
        assert worst <= 0.5

    for seed in range(5):
        rnd = np.random.default_rng(4100 + seed)
        m2 = (rnd.random((40, 60)) < rnd.random()).astype(np.uint8)
        for px in (0.0, 0.3, 0.5, 0.8, 1.0):
            assert sram_load_fraction(m2, px, True) <= (1 - px) + 1e-12


@criterion(9, "spMspV output equals the fixed-order dense masked GEMV "
              "bit for bit")
def test_criterion_9_spmspv_exactness():
    for seed in range(100):
        rng = np.random.default_rng(5000 + seed)
        n = int(rng.integers(4, 40))
        k = int(rng.integers(4, 40))
        density = float(rng.uniform(0.2, 1.0))
        w = rng.standard_normal((n, k)) * (rng.random((n, k)) < density)
        csr = CsrWeights.from_dense(w)
        x = rng.standard_normal(k)
        mask = (rng.random(k) < rng.uniform(0.2, 1.0)).astype(np.uint8)
        y, counters = spmspv(csr, x, mask)
        ref = np.zeros(n)
        for i in range(k):
            if mask[i]:
                ref += w[:, i] * x[i]
        assert np.array_equal(y, ref)
        assert counters.weights_loaded == sum(
            int(np.count_nonzero(w[:, i])) for i in range(k) if mask[i])


@criterion(10, "precompute+score wall time scales by [2.5, 6] when k "
               "doubles from 512 to 1024 at m = 512")
def test_criterion_10_complexity_scaling():
    try:
        from threadpoolctl import threadpool_limits
    except ImportError:  # pragma: no cover
        import contextlib
        threadpool_limits = lambda limits: contextlib.nullcontext()

    def setup(k, m=512, n=256):
        rng = np.random.default_rng(k)
        w = rng.standard_normal((n, k))
        xhat = rng.standard_normal((k, m))
        dx = 0.3 * rng.standard_normal((k, m))
        h, lam = dampen(xhat @ xhat.T, 0.1)
        return w, xhat, dx, invert_spd(h, lam)

    def run_once(args):
        w, xhat, dx, state = args
        t0 = time.perf_counter()
        pre = precompute(state, xhat, dx)
        score_block(w, 0, w.shape[1], state, pre)
        return time.perf_counter() - t0

    # Interleave the two sizes so a throttling window cannot inflate
    # one side of the ratio; keep the best (least-disturbed) sample.
    with threadpool_limits(limits=1):
        probs = {k: setup(k) for k in (512, 1024)}
        best = {512: np.inf, 1024: np.inf}
        for _ in range(20):
            for k in (512, 1024):
                best[k] = min(best[k], run_once(probs[k]))
    ratio = best[1024] / best[512]
    print(f"  (k 512 -> 1024 wall-time ratio: {ratio:.2f})", flush=True)
    assert 2.5 <= ratio <= 6.0


@criterion(11, "two CLI calibrations with identical flags and seed produce "
               "byte-identical weight and mask files")
def test_criterion_11_cli_determinism(tmp_path):
    from duosparse.io import gen_calibration, write_matrix, write_stack

    rng = np.random.default_rng(6000)
    stack = LayerStack(layers=[
        Layer(rng.standard_normal((32, 32)), "relu"),
        Layer(rng.standard_normal((32, 32)), "none"),
    ])
    manifest = write_stack(stack, tmp_path / "stack")
    calib = tmp_path / "calib.dspm"
    write_matrix(gen_calibration(32, 64, seed=1), calib)

    for run in ("r1", "r2"):
        proc = subprocess.run(
            [sys.executable, "-m", "duosparse.cli", "calibrate",
             "--stack", str(manifest), "--calib", str(calib),
             "--pw", "0.5", "--px", "0.5", "--block-size", "16",
             "--seed", "7", "--out", str(tmp_path / run)],
            capture_output=True, text=True)
        assert proc.returncode == 0, proc.stderr
    for fname in ("layer00_w.dspm", "layer00_mask.dspm",
                  "layer01_w.dspm", "layer01_mask.dspm", "stack.json"):
        a = (tmp_path / "r1" / fname).read_bytes()
        b = (tmp_path / "r2" / fname).read_bytes()
        assert a == b, f"{fname} differs between identical runs"


@criterion(12, "every row x block carries exactly round(pw * B) zeros "
               "across the pw grid")
def test_criterion_12_block_sparsity_contract():
    rng = np.random.default_rng(7000)
    w = rng.standard_normal((12, 64))
    x = rng.standard_normal((64, 128))
    xhat, _ = magnitude_prune_columns(x, 0.5)
    bs = 16
    for pw in (0.3, 0.5, 0.65):
        expected = round_half_up(pw * bs)
        for act_order in (False, True):
            cfg = PruneConfig(pw=pw, px=0.5, block_size=bs,
                              act_order=act_order)
            out = prune_layer(w, xhat, x, cfg)
            mask = out.mask_w
            if act_order:
                mask = mask[:, out.act_order_perm]  # processing order
            for i in range(0, 64, bs):
                zeros = bs - mask[:, i:i + bs].sum(axis=1)
                assert np.all(zeros == expected), (pw, act_order, i)
