"""Fast invariant suite behind the `selftest` CLI subcommand.

Each check returns (name, ok, detail); the whole suite runs in seconds.
Checks call library functions through their modules so that an injected
fault (e.g. a broken softmax) is actually exercised.
"""

from __future__ import annotations

from fractions import Fraction

import numpy as np

from . import autodiff as ad
from . import baseline, complexity, ldpc, layers
from .layers import AttentionWeights


def _finite_difference_ok(build_loss, leaves, tol=1e-4) -> bool:
    with ad.Tape() as tape:
        loss = build_loss()
    grads = ad.backward(loss, tape, leaves=leaves)
    for leaf in leaves:
        flat = leaf.data.reshape(-1)
        analytic = grads[leaf].reshape(-1)
        for idx in range(flat.size):
            keep = flat[idx]
            flat[idx] = keep + 1e-5
            up = build_loss().item()
            flat[idx] = keep - 1e-5
            down = build_loss().item()
            flat[idx] = keep
            fd = (up - down) / 2e-5
            diff = abs(analytic[idx] - fd)
            if diff > 1e-7 and diff > tol * max(abs(analytic[idx]), abs(fd)):
                return False
    return True


def check_gradients() -> tuple[str, bool, str]:
    rng = np.random.default_rng(0)
    a = ad.Tensor(rng.standard_normal((3, 4)), requires_grad=True)
    w = ad.Tensor(rng.standard_normal((4, 4)), requires_grad=True)
    gamma = ad.Tensor(np.ones(4), requires_grad=True)
    beta = ad.Tensor(np.zeros(4), requires_grad=True)
    cw = ad.Tensor(rng.standard_normal((3, 3, 2, 2)) * 0.5, requires_grad=True)
    cb = ad.Tensor(rng.standard_normal(2), requires_grad=True)
    cx = ad.Tensor(rng.standard_normal((3, 4, 2)), requires_grad=True)

    ok = _finite_difference_ok(
        lambda: ad.mean_all(ad.softmax(ad.layer_norm(ad.matmul(a, w), gamma, beta), axis=1)
                            * ad.matmul(a, w)),
        [a, w, gamma, beta])
    ok = ok and _finite_difference_ok(
        lambda: ad.mean_all(ad.conv2d(cx, cw, cb) * ad.conv2d(cx, cw, cb)),
        [cx, cw, cb])
    return ("gradient finite-difference", ok, "matmul/softmax/layer_norm/conv2d")


def check_softmax_rows() -> tuple[str, bool, str]:
    rng = np.random.default_rng(1)
    y = ad.softmax(ad.Tensor(rng.standard_normal((8, 13)) * 20.0), axis=1)
    sums = y.data.sum(axis=1)
    shifted = ad.softmax(ad.Tensor(rng.standard_normal((4, 7))), axis=1)
    ok = bool(np.abs(sums - 1.0).max() < 1e-12 and np.isfinite(y.data).all()
              and np.abs(shifted.data.sum(axis=1) - 1.0).max() < 1e-12)
    return ("softmax normalization", ok, f"max row-sum error {np.abs(sums - 1.0).max():.2e}")


def check_degenerate_equivalence() -> tuple[str, bool, str]:
    rng = np.random.default_rng(2)
    worst = 0.0
    for seed in range(8):
        w = AttentionWeights(8, 2, np.random.default_rng(seed))
        x_col = ad.Tensor(rng.standard_normal((9, 1, 8)))
        d1 = np.abs(layers.axial_time_attention(x_col, w).data
                    - layers.global_mhsa(x_col, w).data).max()
        x_row = ad.Tensor(rng.standard_normal((1, 9, 8)))
        d2 = np.abs(layers.axial_freq_attention(x_row, w).data
                    - layers.global_mhsa(x_row, w).data).max()
        worst = max(worst, d1, d2)
    return ("axial/global degenerate equivalence", worst < 1e-10, f"max diff {worst:.2e}")


def check_demapper() -> tuple[str, bool, str]:
    from .phy import Constellation

    rng = np.random.default_rng(3)
    qpsk = Constellation.make(4)
    nu = np.exp(rng.uniform(np.log(0.02), np.log(1.0), 2000))
    x = qpsk.points[rng.integers(0, 4, 2000)] + \
        (rng.standard_normal(2000) + 1j * rng.standard_normal(2000)) * np.sqrt(nu / 2)
    qpsk_gap = np.abs(baseline.maxlog_demap(x, nu, qpsk)
                      - baseline.exact_demap(x, nu, qpsk)).max()
    qam = Constellation.make(16)
    nu16 = np.exp(rng.uniform(np.log(0.02), np.log(0.5), 20000))
    x16 = qam.points[rng.integers(0, 16, 20000)] + \
        (rng.standard_normal(20000) + 1j * rng.standard_normal(20000)) * np.sqrt(nu16 / 2)
    ml = baseline.maxlog_demap(x16, nu16, qam)
    ex = baseline.exact_demap(x16, nu16, qam)
    mask = np.abs(ex) > 0.5
    signs_ok = bool((np.sign(ml[mask]) == np.sign(ex[mask])).all())
    ok = qpsk_gap < 1e-9 and signs_ok
    return ("max-log vs exact demapper", ok,
            f"QPSK gap {qpsk_gap:.2e}, 16-QAM sign agreement {signs_ok}")


def check_ldpc() -> tuple[str, bool, str]:
    code = ldpc.construct(48, col_weight=3, seed=5)
    rng = np.random.default_rng(4)
    c = ldpc.encode(code, rng.integers(0, 2, code.k))
    base = np.where(c == 1, 20.0, -20.0)
    clean = ldpc.decode(code, base)
    ok = clean.converged and (clean.bits == c).all()
    for position in range(code.n):
        llr = base.copy()
        llr[position] = -llr[position]
        result = ldpc.decode(code, llr)
        ok = ok and result.converged and (result.bits == c).all()
    return ("LDPC round trip and single-flip sweep", bool(ok), f"n={code.n}, k={code.k}")


def check_flops() -> tuple[str, bool, str]:
    ok = True
    for t in (2, 5, 14, 16):
        for f in (2, 17, 64, 128):
            for d in (8, 32, 128):
                lhs = Fraction(complexity.attn_flops_global(t, f, d),
                               complexity.attn_flops_axial(t, f, d))
                ok = ok and lhs == Fraction(t * f, t + f)
    printed = f"{complexity.reduction_factor(14, 128):.2f}"
    ok = ok and printed == "12.62"
    return ("attention FLOP reduction identity", bool(ok), f"T=14 F=128 factor {printed}")


ALL_CHECKS = (
    check_gradients,
    check_softmax_rows,
    check_degenerate_equivalence,
    check_demapper,
    check_ldpc,
    check_flops,
)


def run(print_fn=print) -> bool:
    all_ok = True
    for check in ALL_CHECKS:
        try:
            name, ok, detail = check()
        except Exception as err:  # a crashed check is a failed check
            name, ok, detail = check.__name__, False, f"raised {err!r}"
        all_ok = all_ok and ok
        print_fn(f"[{'PASS' if ok else 'FAIL'}] {name:<40} {detail}")
    return all_ok
