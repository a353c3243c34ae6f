"""Acceptance suite: one test per numbered criterion, each printing a
PASS line with the measured values (run with -s or -v to see them)."""

import time

import numpy as np

from depthpack._kernels import DCT_BASIS
from depthpack.channel import ChannelConfig, achieved_bitrate, encode_sequence
from depthpack.datasets import synth_sequence
from depthpack.metrics import decompose_error, sweep
from depthpack.oracle import DEFAULT_PRECISIONS, oracle_labels, switch_count
from depthpack.packing import (
    _rp_pack_arrays,
    _rp_unpack_arrays,
    _vbp_pack_arrays,
    _vbp_unpack_arrays,
    pack_frame,
    unpack_frame,
)
from depthpack.predictor import (
    TrainConfig,
    _forward_batch,
    assemble_dataset,
    baseline_policy,
    init_model,
    l1_loss_and_grads,
    policy_metrics,
    select_precision,
    train,
)
from depthpack.types import ChromaMode, PackingConfig, quantize8

from conftest import make_mixed_sequence

PRECISIONS = (8, 10, 12, 14, 16, 18, 20, 24)


def quantized_roundtrip(d, bits):
    y, u, v = _vbp_pack_arrays(d, bits)
    return _vbp_unpack_arrays(
        quantize8(y) / 255.0, quantize8(u) / 255.0, quantize8(v) / 255.0, bits
    )


def test_01_vbp_roundtrip_bounds():
    start = time.monotonic()
    d = np.arange(65536, dtype=np.float64) * 256 / 2**24  # 24-bit grid points
    worst_margin = []
    for bits in PRECISIONS:
        rec = quantized_roundtrip(d, bits)
        mae = float(np.abs(rec - d).mean())
        bound = 2.0**-bits + (2.0 / 255.0) * 2.0 ** -min(bits, 16)
        assert mae <= bound, f"bits={bits}: MAE {mae} > bound {bound}"
        worst_margin.append(mae / bound)
        assert float(quantized_roundtrip(np.float64(1.0), bits)) == 1.0
    elapsed = time.monotonic() - start
    assert elapsed < 10.0
    print(f"ACCEPTANCE 01 PASS: VBP round-trip MAE within bounds for "
          f"{len(PRECISIONS)} precisions over 65536 grid depths, sentinel exact "
          f"(worst MAE/bound {max(worst_margin):.3f}, {elapsed:.1f}s)")


def test_02_rp_exhaustive_roundtrip():
    start = time.monotonic()
    codes = np.arange(65536)
    recorded_bounds = {512: 0, 2048: 1, 4096: 2}  # measured exhaustively
    for n_p in (512, 2048, 4096):
        y, u, v = _rp_pack_arrays(codes, n_p)
        assert np.array_equal(_rp_unpack_arrays(y, u, v, n_p), codes), n_p
        rec_q = _rp_unpack_arrays(
            quantize8(y) / 255.0, quantize8(u) / 255.0, quantize8(v) / 255.0, n_p
        )
        err = int(np.abs(rec_q - codes).max())
        assert err <= recorded_bounds[n_p]
        assert err <= n_p / 512 + 1
    elapsed = time.monotonic() - start
    assert elapsed < 30.0
    print(f"ACCEPTANCE 02 PASS: RP decode exact for all 65536 codes at "
          f"n_p in 512/2048/4096; quantized errors within recorded bounds "
          f"{recorded_bounds} ({elapsed:.1f}s)")


def test_03_triangle_wave_continuity():
    limit = 1.0 / 255.0 + 1e-6
    window = 2**16
    starts = (0, 2**22, 2**23, 3 * 2**22, 11 * 10**5, 2**24 - window)
    worst = 0.0
    for s in starts:
        k = np.arange(s, s + window + 1, dtype=np.float64)
        d = np.minimum(k / 2**24, 1.0)
        _, u, v = _vbp_pack_arrays(d, 24)
        worst = max(worst, float(np.abs(np.diff(u)).max()),
                    float(np.abs(np.diff(v)).max()))
    assert worst <= limit
    print(f"ACCEPTANCE 03 PASS: max pre-quantization U/V step {worst:.9f} "
          f"<= {limit:.9f} over {len(starts)} exhaustive 2^16-code windows")


def test_04_channel_determinism_and_rate_control(flythrough_60):
    maps, _ = flythrough_60
    packed = [pack_frame(m, PackingConfig.vbp(14)) for m in maps]
    targets = (2.1e4, 2.1e5, 2.1e6)  # two orders of magnitude
    deviations = []
    for target in targets:
        cfg = ChannelConfig(target_bitrate=target, fps=30.0)
        coded = encode_sequence(packed, cfg)
        again = encode_sequence(packed, cfg)
        for a, b in zip(coded, again):
            assert a.bit_count == b.bit_count and a.qp_used == b.qp_used
            assert np.array_equal(
                a.reconstruction.y_plane, b.reconstruction.y_plane
            )
            assert np.array_equal(
                a.reconstruction.u_plane, b.reconstruction.u_plane
            )
            assert np.array_equal(
                a.reconstruction.v_plane, b.reconstruction.v_plane
            )
        achieved = achieved_bitrate(coded, 30.0)
        dev = achieved / target - 1.0
        assert abs(dev) < 0.10, f"target {target}: achieved {achieved}"
        deviations.append(dev)
    print("ACCEPTANCE 04 PASS: bit-identical re-encodes; achieved bitrate "
          "deviations " + ", ".join(f"{d * 100:+.1f}%" for d in deviations)
          + f" at targets {[f'{t:g}' for t in targets]}")


def test_05_precision_bitrate_phenomenon(flythrough_60):
    maps, _ = flythrough_60
    configs = [PackingConfig.vbp(b) for b in PRECISIONS]
    rates = (6e4, 1.5e6, 6e6)
    base = ChannelConfig(1.0, fps=30.0)
    rows = sweep(maps, configs, rates, [ChromaMode.FULL444], base, workers=1)

    def argmin_bits(rate):
        cells = sorted(
            (r for r in rows if r.target_bps == rate), key=lambda r: r.bits_or_np
        )
        return cells[int(np.argmin([c.mae for c in cells]))].bits_or_np

    constrained_argmin = argmin_bits(1.5e6)
    assert constrained_argmin not in (8, 24), "expected an interior minimum"
    assert argmin_bits(6e4) <= argmin_bits(6e6)

    sub_rows = sweep(maps, configs, [6e6], [ChromaMode.SUB420], base, workers=1)
    for cfg in configs:
        full = next(r for r in rows
                    if r.bits_or_np == cfg.parameter and r.target_bps == 6e6)
        sub = next(r for r in sub_rows if r.bits_or_np == cfg.parameter)
        assert sub.mae >= full.mae - 1e-12, f"bits={cfg.parameter}"
    print(f"ACCEPTANCE 05 PASS: interior argmin bits={constrained_argmin} at "
          f"1.5 Mbps; argmin({argmin_bits(6e4)}) at lowest <= "
          f"argmin({argmin_bits(6e6)}) at highest; Sub420 MAE >= Full444 at "
          f"6 Mbps for all {len(configs)} configs")


def test_06_oracle_switching_phenomenon():
    maps, _ = make_mixed_sequence(n_frames=48, width=64, height=64, seed=23)
    records = oracle_labels(
        maps, 6e5, PRECISIONS, ChannelConfig(6e5, fps=30.0, gop=8)
    )
    switches = switch_count(records)
    nonzero_gaps = sum(1 for r in records if r.second_best_gap > 0)
    assert switches >= 1
    assert nonzero_gaps > 0
    print(f"ACCEPTANCE 06 PASS: best precision switches {switches} times over "
          f"{len(records)} frames; {nonzero_gaps} frames have a nonzero "
          f"second-best gap")


def test_07_error_decomposition_consistency(flythrough_60):
    maps, _ = flythrough_60
    gt = maps[0]
    maes_by_bits = []
    for bits in PRECISIONS:
        cfg = PackingConfig.vbp(bits)
        ref = unpack_frame(pack_frame(gt, cfg), cfg)
        report = decompose_error(gt, ref, ref)  # lossless channel
        assert report.codec_mae == 0.0
        assert abs(report.mae - report.packing_mae) <= 1e-12
        maes_by_bits.append(report.packing_mae)
    for lower, higher in zip(maes_by_bits, maes_by_bits[1:]):
        assert higher <= lower + 1e-9
    print(f"ACCEPTANCE 07 PASS: lossless-channel mae == packing_mae to 1e-12 "
          f"and packing MAE non-increasing over bits {PRECISIONS} "
          f"({maes_by_bits[0]:.2e} -> {maes_by_bits[-1]:.2e})")


def test_08_gradient_check():
    rng = np.random.default_rng(17)
    worst = 0.0
    for trial in range(100):
        model = init_model((8, 10, 12), n_features=6, hidden=(7, 5), seed=trial)
        for w in model.weights:
            w[...] = rng.standard_normal(w.shape) * 0.7
        for b in model.biases:
            b[...] = rng.standard_normal(b.shape) * 0.3
        for _ in range(80):  # resample away from L1/rectifier kinks
            x = rng.standard_normal((3, 6))
            y = rng.standard_normal((3, 3))
            out, (_, z1, _, z2, _) = _forward_batch(model, x)
            if min(np.abs(out - y).min(), np.abs(z1).min(),
                   np.abs(z2).min()) > 1e-3:
                break
        _, g_w, g_b = l1_loss_and_grads(model, x, y)
        params = model.weights + model.biases
        grads = g_w + g_b
        h = 1e-6
        num, ana = [], []
        for p, g in zip(params, grads):
            flat = p.ravel()
            for idx in range(flat.size):
                orig = flat[idx]
                flat[idx] = orig + h
                lp, _, _ = l1_loss_and_grads(model, x, y)
                flat[idx] = orig - h
                lm, _, _ = l1_loss_and_grads(model, x, y)
                flat[idx] = orig
                num.append((lp - lm) / (2 * h))
                ana.append(g.ravel()[idx])
        num, ana = np.asarray(num), np.asarray(ana)
        rel = np.linalg.norm(ana - num) / max(
            np.linalg.norm(ana), np.linalg.norm(num)
        )
        worst = max(worst, rel)
        assert rel < 1e-4
    print(f"ACCEPTANCE 08 PASS: analytic vs central-difference gradients agree "
          f"on 100 random draws (worst relative error {worst:.2e})")


def test_09_predictor_beats_baseline():
    start = time.monotonic()
    fly, cam_f = synth_sequence("flythrough", 48, 64, 64, seed=11, fps=30.0)
    orb, cam_o = synth_sequence("orbit", 48, 64, 64, seed=3, fps=30.0)
    mixed, cam_m = make_mixed_sequence(n_frames=48, width=64, height=64, seed=23)
    rates = (1e5, 5e5, 2e6, 8e6)
    xs, ys, records = [], [], []
    for maps, cams in ((fly, cam_f), (orb, cam_o), (mixed, cam_m)):
        for rate in rates:
            recs = oracle_labels(
                maps, rate, DEFAULT_PRECISIONS, ChannelConfig(rate, fps=30.0)
            )
            x, y = assemble_dataset(maps, cams, recs)
            xs.append(x)
            ys.append(y)
            records.extend(recs)
    features = np.concatenate(xs)
    labels = np.concatenate(ys)

    result = train(
        features, labels, DEFAULT_PRECISIONS, TrainConfig(epochs=400, seed=5)
    )
    held_out = result.test_indices
    test_records = [records[i] for i in held_out]
    model_picks = [select_precision(result.model, features[i]) for i in held_out]
    base_picks = [baseline_policy(r.bitrate) for r in test_records]
    frac_model, err_model = policy_metrics(
        test_records, model_picks, DEFAULT_PRECISIONS
    )
    frac_base, err_base = policy_metrics(
        test_records, base_picks, DEFAULT_PRECISIONS
    )
    elapsed = time.monotonic() - start
    assert frac_model >= frac_base
    assert err_model <= err_base
    assert elapsed < 600.0
    print(f"ACCEPTANCE 09 PASS: held-out fraction-of-optimal model "
          f"{frac_model:.3f} >= baseline {frac_base:.3f}; mean error "
          f"{err_model:.5g} <= {err_base:.5g} ({elapsed:.0f}s incl. labels)")


def test_10_dct_matches_brute_force():
    rng = np.random.default_rng(31)
    xs = np.arange(8)
    cos_table = np.cos((2 * xs[None, :] + 1) * xs[:, None] * np.pi / 16)
    alpha = np.array([np.sqrt(1 / 8)] + [np.sqrt(2 / 8)] * 7)

    def brute_forward(block):
        out = np.empty((8, 8))
        for u in range(8):
            for v in range(8):
                acc = 0.0
                for x in range(8):
                    for y in range(8):
                        acc += block[x, y] * cos_table[u, x] * cos_table[v, y]
                out[u, v] = alpha[u] * alpha[v] * acc
        return out

    def brute_inverse(coef):
        out = np.empty((8, 8))
        for x in range(8):
            for y in range(8):
                acc = 0.0
                for u in range(8):
                    for v in range(8):
                        acc += (alpha[u] * alpha[v] * coef[u, v]
                                * cos_table[u, x] * cos_table[v, y])
                out[x, y] = acc
        return out

    worst = 0.0
    for _ in range(1000):
        block = rng.uniform(-128, 127, (8, 8))
        coef = DCT_BASIS @ block @ DCT_BASIS.T
        worst = max(worst, float(np.abs(coef - brute_forward(block)).max()))
        back = DCT_BASIS.T @ coef @ DCT_BASIS
        worst = max(worst, float(np.abs(back - brute_inverse(coef)).max()))
        assert worst < 1e-6
    print(f"ACCEPTANCE 10 PASS: forward/inverse DCT match the O(n^4) "
          f"definition on 1000 random blocks (worst deviation {worst:.2e})")
