"""Command-line surface: data generation, calibration, oracle diffing,
and execution simulation.

Exit codes: 0 success, 1 usage error, 2 file/IO error, 3 numerical or
shape error. With ``--json``, stdout carries exactly one JSON report;
diagnostics always go to stderr.
"""

import argparse
import json
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import io as dio
from .calibrator import METHODS, Precomputed, PruneConfig, precompute
from .errors import (DimensionMismatch, DuoSparseError, InfeasibleSparsity,
                     MalformedCsr, MatrixFileError, NotPositiveDefinite,
                     SingularPivot, TooLargeForOracle)
from .linalg import dampen, eliminate_inverse, invert_spd
from .oracle import duo_loss_and_update, exact_score_column
from .pipeline import calibrate_stack
from .simulator import (CsrWeights, ExecCounters, skew_report, spmspv,
                        sram_load_fraction)
from .sparsity import magnitude_prune_columns, mask_sparsity, round_half_up

REPORT_VERSION = 1
ORACLE_MAX_K = 32
SCORE_TOL = 1e-7
COMP_TOL = 1e-6


class _Parser(argparse.ArgumentParser):
    """ArgumentParser that exits 1 (not 2) on usage errors."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _default_threads() -> int:
    env = os.environ.get("DUOSPARSE_THREADS", "")
    try:
        return max(1, int(env))
    except ValueError:
        return 1


def _emit(report: dict, as_json: bool, human_lines) -> None:
    if as_json:
        print(json.dumps(report, indent=2, sort_keys=True))
    else:
        for line in human_lines:
            print(line)


# ---------------------------------------------------------------------------
# gen-data
# ---------------------------------------------------------------------------

def cmd_gen_data(args) -> dict:
    x = dio.gen_calibration(args.k, args.m, args.seed, args.dist)
    dio.write_matrix(x, args.out)
    return {
        "reportVersion": REPORT_VERSION,
        "command": "gen-data",
        "config": {"k": args.k, "m": args.m, "seed": args.seed,
                   "dist": args.dist},
        "out": args.out,
        "rows": args.k,
        "cols": args.m,
    }


# ---------------------------------------------------------------------------
# calibrate
# ---------------------------------------------------------------------------

def _block_audit(mask: np.ndarray, perm, pw: float, block_size: int) -> dict:
    """Recompute per-(row, block) zero counts in processing order."""
    work = mask if perm is None else mask[:, perm]
    k = work.shape[1]
    ok = True
    counts = []
    for i in range(0, k, block_size):
        bw = min(block_size, k - i)
        expected = round_half_up(pw * bw)
        zeros = bw - np.count_nonzero(work[:, i:i + bw], axis=1)
        counts.append(int(expected))
        if not np.all(zeros == expected):
            ok = False
    return {"expectedZerosPerRowBlock": counts, "exact": ok}


def cmd_calibrate(args) -> dict:
    t0 = time.perf_counter()
    stack, _, _ = dio.read_stack(args.stack)
    calib = dio.read_matrix(args.calib)
    cfg = PruneConfig(pw=args.pw, px=args.px, block_size=args.block_size,
                      damp_ratio=args.damp, act_order=args.act_order,
                      method=args.method, seed=args.seed)
    pruned, reports = calibrate_stack(stack, calib, cfg)

    config_echo = {
        "pw": cfg.pw, "px": cfg.px, "blockSize": cfg.block_size,
        "damp": cfg.damp_ratio, "actOrder": cfg.act_order,
        "method": cfg.method, "seed": cfg.seed,
    }
    masks = [rep.outcome.mask_w for rep in reports]
    manifest_path = dio.write_stack(pruned, args.out, masks=masks,
                                    config=config_echo)

    layer_entries = []
    for rep in reports:
        layer_entries.append({
            "layer": rep.index,
            "rows": rep.outcome.pruned_w.shape[0],
            "cols": rep.outcome.pruned_w.shape[1],
            "reconstructionError": rep.outcome.layer_error,
            "weightSparsity": rep.weight_sparsity,
            "activationSparsity": rep.activation_sparsity,
            "dampingLambda": rep.outcome.damping_lambda,
            "blockAudit": _block_audit(rep.outcome.mask_w,
                                       rep.outcome.act_order_perm,
                                       cfg.pw, cfg.block_size),
            "scoreStats": rep.outcome.score_stats,
            "wallTimeSec": rep.wall_time_sec,
        })

    report = {
        "reportVersion": REPORT_VERSION,
        "command": "calibrate",
        "config": config_echo,
        "manifest": manifest_path,
        "layers": layer_entries,
        "wallTimeSec": time.perf_counter() - t0,
    }
    with open(os.path.join(args.out, "report.json"), "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return report


# ---------------------------------------------------------------------------
# oracle-diff
# ---------------------------------------------------------------------------

def _oracle_diff_column(p, w, hinv_p, chol, dmat, xhat, delta_x, scores_eff):
    """Deviations for one column: score and compensation vs the oracle."""
    exact = exact_score_column(w, p, hinv_p, xhat, delta_x)
    eff = scores_eff[:, p]
    denom = np.maximum(np.abs(exact), 1e-30)
    score_dev = float(np.max(np.abs(eff - exact) / denom))

    k = w.shape[1]
    comp_dev = 0.0
    for r in range(w.shape[0]):
        wp = w[r, p]
        eff_row = np.zeros(k)
        eff_row[p + 1:] = -(wp / chol[p, p]) * chol[p + 1:, p] + wp * dmat[p, p + 1:]
        eff_row[p] = -wp
        r_dec = wp * delta_x[p, :]
        _, oracle_delta = duo_loss_and_update(w[r], p, hinv_p, xhat, r_dec)
        scale = max(float(np.max(np.abs(oracle_delta))), 1e-30)
        comp_dev = max(comp_dev,
                       float(np.max(np.abs(eff_row - oracle_delta)) / scale))
    return score_dev, comp_dev


def cmd_oracle_diff(args) -> dict:
    t0 = time.perf_counter()
    w = dio.read_matrix(args.weights)
    xhat = dio.read_matrix(args.calib_sparse)
    xtilde = dio.read_matrix(args.calib_dense)
    if args.rows is not None:
        w = w[:args.rows]
    n, k = w.shape
    if k > ORACLE_MAX_K:
        raise TooLargeForOracle(
            f"k = {k} exceeds the oracle limit of {ORACLE_MAX_K}")
    if xhat.shape != xtilde.shape or xhat.shape[0] != k:
        raise DimensionMismatch(
            f"weights {w.shape} need calibration inputs with {k} rows, got "
            f"{xhat.shape} and {xtilde.shape}")

    delta_x = xtilde - xhat
    h, lam = dampen(xhat @ xhat.T, args.damp)
    state = invert_spd(h, damping_lambda=lam)
    pre = precompute(state, xhat, delta_x)
    diag = np.diag(state.chol)
    factor = 1.0 / diag**2 + pre.a - pre.b + 2.0 * pre.c
    scores_eff = w**2 * factor[None, :]

    # Successively eliminated inverses: hinvs[p] has indices < p removed.
    hinv = state.chol @ state.chol.T
    hinv = (hinv + hinv.T) / 2.0
    hinvs = [hinv]
    for p in range(k - 1):
        hinvs.append(eliminate_inverse(hinvs[-1], p))

    def work(p):
        return _oracle_diff_column(p, w, hinvs[p], state.chol, pre.d,
                                   xhat, delta_x, scores_eff)

    if args.threads > 1:
        with ThreadPoolExecutor(max_workers=args.threads) as pool:
            devs = list(pool.map(work, range(k)))
    else:
        devs = [work(p) for p in range(k)]

    max_score_dev = max(d[0] for d in devs)
    max_comp_dev = max(d[1] for d in devs)
    passed = max_score_dev <= SCORE_TOL and max_comp_dev <= COMP_TOL
    report = {
        "reportVersion": REPORT_VERSION,
        "command": "oracle-diff",
        "config": {"pw": args.pw, "damp": args.damp, "rows": n, "cols": k,
                   "threads": args.threads},
        "maxScoreDeviation": max_score_dev,
        "maxCompensationDeviation": max_comp_dev,
        "scoreTolerance": SCORE_TOL,
        "compensationTolerance": COMP_TOL,
        "pass": passed,
        "wallTimeSec": time.perf_counter() - t0,
    }
    return report


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------

def cmd_simulate(args) -> dict:
    t0 = time.perf_counter()
    stack, masks, _ = dio.read_stack(args.stack)
    x = dio.read_matrix(args.input)
    if x.shape[0] != stack.input_dim:
        raise DimensionMismatch(
            f"input has {x.shape[0]} rows, stack expects {stack.input_dim}")

    layer_entries = []
    totals = ExecCounters()
    cur = x
    for idx, layer in enumerate(stack.layers):
        mask_w = masks[idx]
        if mask_w is None:
            mask_w = (layer.weight != 0).astype(np.uint8)
        csr = CsrWeights.from_dense(layer.weight)
        xhat, mask_x = magnitude_prune_columns(cur, args.px)
        counters = ExecCounters()
        out = np.zeros((layer.weight.shape[0], cur.shape[1]))
        for c in range(cur.shape[1]):
            y, cnt = spmspv(csr, cur[:, c], mask_x[:, c])
            counters.merge(cnt)
            out[:, c] = y
        if layer.activation == "relu":
            out = np.maximum(out, 0.0)
        fraction = sram_load_fraction(mask_w, args.px, args.worst_case)
        layer_entries.append({
            "layer": idx,
            **counters.as_dict(),
            "sramLoadFraction": fraction,
            "worstCase": args.worst_case,
            "skew": {key: val for key, val in skew_report(mask_w).items()
                     if key != "slabNnz"},
        })
        totals.merge(counters)
        cur = out

    report = {
        "reportVersion": REPORT_VERSION,
        "command": "simulate",
        "config": {"px": args.px, "worstCase": args.worst_case,
                   "columns": x.shape[1]},
        "layers": layer_entries,
        "totals": totals.as_dict(),
        "wallTimeSec": time.perf_counter() - t0,
    }
    return report


# ---------------------------------------------------------------------------
# wiring
# ---------------------------------------------------------------------------

def _build_parser() -> _Parser:
    parser = _Parser(prog="duosparse",
                     description="Dual-sparse pruning calibration toolkit")
    parser.add_argument("--json", action="store_true",
                        help="emit exactly one JSON report on stdout")
    parser.add_argument("--threads", type=int, default=_default_threads(),
                        help="worker cap (default: DUOSPARSE_THREADS or 1)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate seeded calibration data")
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--dist", choices=dio.DISTRIBUTIONS, default="normal")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("calibrate", help="prune a stack against calibration data")
    p.add_argument("--stack", required=True, help="stack manifest JSON")
    p.add_argument("--calib", required=True, help="calibration matrix file")
    p.add_argument("--method", choices=METHODS, default="duogpt")
    p.add_argument("--pw", type=float, default=0.5)
    p.add_argument("--px", type=float, default=0.5)
    p.add_argument("--block-size", type=int, default=128)
    p.add_argument("--damp", type=float, default=0.1)
    p.add_argument("--act-order", action=argparse.BooleanOptionalAction,
                   default=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("oracle-diff",
                       help="validate the efficient path against the oracle")
    p.add_argument("--weights", required=True)
    p.add_argument("--calib-sparse", required=True)
    p.add_argument("--calib-dense", required=True)
    p.add_argument("--pw", type=float, default=0.5)
    p.add_argument("--damp", type=float, default=0.1)
    p.add_argument("--rows", type=int, default=None)
    p.set_defaults(func=cmd_oracle_diff)

    p = sub.add_parser("simulate", help="run the dual-sparse execution model")
    p.add_argument("--stack", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--px", type=float, default=0.5)
    p.add_argument("--worst-case", action=argparse.BooleanOptionalAction,
                   default=True)
    p.set_defaults(func=cmd_simulate)
    return parser


def _human_lines(report: dict):
    cmd = report.get("command")
    if cmd == "gen-data":
        yield (f"wrote {report['rows']}x{report['cols']} "
               f"({report['config']['dist']}) to {report['out']}")
    elif cmd == "calibrate":
        for lay in report["layers"]:
            yield (f"layer {lay['layer']}: error={lay['reconstructionError']:.6g} "
                   f"pw={lay['weightSparsity']:.4f} "
                   f"px={lay['activationSparsity']:.4f} "
                   f"blockExact={lay['blockAudit']['exact']}")
        yield f"pruned stack written to {report['manifest']}"
    elif cmd == "oracle-diff":
        yield (f"score deviation {report['maxScoreDeviation']:.3e} "
               f"(tol {report['scoreTolerance']:.0e}), compensation deviation "
               f"{report['maxCompensationDeviation']:.3e} "
               f"(tol {report['compensationTolerance']:.0e})")
        yield "PASS" if report["pass"] else "FAIL"
    elif cmd == "simulate":
        for lay in report["layers"]:
            yield (f"layer {lay['layer']}: loaded={lay['weightsLoaded']} "
                   f"macs={lay['macs']} fraction={lay['fraction']:.4f} "
                   f"sramLoadFraction={lay['sramLoadFraction']:.4f}")
        tot = report["totals"]
        yield f"total: loaded={tot['weightsLoaded']} of {tot['totalWeights']}"


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        report = args.func(args)
    except TooLargeForOracle as exc:
        print(f"duosparse: {exc}", file=sys.stderr)
        return 1
    except (MatrixFileError, OSError) as exc:
        print(f"duosparse: {exc}", file=sys.stderr)
        return 2
    except (NotPositiveDefinite, SingularPivot, InfeasibleSparsity,
            DimensionMismatch, MalformedCsr, DuoSparseError,
            ValueError) as exc:
        print(f"duosparse: {exc}", file=sys.stderr)
        return 3
    _emit(report, args.json, _human_lines(report))
    if report.get("command") == "oracle-diff" and not report["pass"]:
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
