"""End-to-end acceptance checks for the whole package.

Eight suites, each a single test that prints one PASS line with its
measured margins when it succeeds:

1. gradients        -- every differentiable op and the full model pass
                       central finite-difference checks (< 1e-4, < 60 s)
2. spectral         -- transform round trips, identity filtering, and a
                       naive DFT oracle agree (< 1e-10)
3. offset immunity  -- the attended view of the difference-attention block
                       ignores per-channel constant offsets (< 1e-9)
4. graphs           -- adjacency normalization matches the dense formula
                       (< 1e-12), attention rows are stochastic (< 1e-12),
                       and channel permutations commute with the graph ops
5. metrics          -- precision/recall/F1 match hand formulas; AUROC
                       matches threshold enumeration (< 1e-12) with exact
                       1.0 / 0.5 endpoints
6. learnability     -- the synthetic 3-class task trains to >= 90% held-out
                       subject accuracy for >= 4 of 5 seeds inside 20
                       epochs and 10 minutes
7. ablations        -- under heavy baseline wander the full model beats the
                       no-difference-attention and single-resolution
                       variants on median test accuracy
8. protocol         -- subject splits never leak subjects (100 fixtures)
                       and identical runs produce bit-identical checkpoints

These intentionally re-derive expectations from scratch (dense formulas,
naive transforms, enumeration) rather than reusing package internals.
"""

import time

import numpy as np
import pytest

from resograph.data import (
    SplitSpec,
    SynthConfig,
    save_dataset,
    split_dataset,
    standardize,
    synth_generate,
)
from resograph.fourier import (
    ComplexSpectrum,
    complex_hadamard,
    irfft,
    irfft_array,
    num_bins,
    rfft,
    rfft_array,
)
from resograph.gradcheck import finite_difference_check, finite_difference_check_many
from resograph.graphs import adjacency_weights, normalize_adjacency
from resograph.metrics import (
    ConfusionCounts,
    accuracy,
    binary_auroc,
    precision_recall_f1,
)
from resograph.network import (
    ArchitectureConfig,
    forward,
    graph_convolution,
    init_params,
    local_graph_attention,
)
from resograph.temporal import (
    DifferenceAttentionParams,
    FrequencyKernel,
    difference_attention,
    frequency_convolution,
    temporal_difference,
)
from resograph.tensor import Tensor, concat, depthwise_conv1d, logsumexp, softmax
from resograph.training import RunConfig, cross_entropy, evaluate, fit_model, train


# -- 1. gradients ----------------------------------------------------------


def _weighted_scalar(f, example, rng):
    """Reduce f's output to a scalar through fixed random weights."""
    w = Tensor(rng.normal(size=f(example).shape))
    return lambda t: (f(t) * w).sum()


def _grad_leaf(rng, *shape):
    return Tensor(rng.normal(size=shape), requires_grad=True)


def _away_from_kink(rng, *shape):
    data = rng.normal(size=shape)
    return Tensor(data + 0.25 * np.sign(data), requires_grad=True)


def test_gradient_suite():
    started = time.monotonic()
    rng = np.random.default_rng(20240817)
    worst = []  # (name, error)

    def check(name, f, x, step=1e-5):
        err = finite_difference_check(_weighted_scalar(f, x, rng), x, step=step)
        assert err < 1e-4, f"{name}: finite-difference error {err:.3e}"
        worst.append((name, err))

    a = _grad_leaf(rng, 3, 4)
    pos = Tensor(rng.uniform(0.5, 2.0, size=(3, 4)), requires_grad=True)
    other = Tensor(rng.normal(size=(3, 4)))
    row = _grad_leaf(rng, 4)  # broadcasts against a

    check("add", lambda t: t + other, a)
    check("add_broadcast", lambda t: a + t, row)
    check("neg", lambda t: -t, a)
    check("sub", lambda t: t - other, a)
    check("rsub", lambda t: 1.5 - t, a)
    check("mul", lambda t: t * other, a)
    check("mul_broadcast", lambda t: a * t, row)
    check("div", lambda t: t / pos, a)
    check("div_wrt_denominator", lambda t: other / t, pos)
    check("rdiv", lambda t: 2.0 / t, pos)
    check("pow", lambda t: t ** 3, a)
    check("exp", lambda t: t.exp(), a)
    check("log", lambda t: t.log(), pos)
    check("sqrt", lambda t: t.sqrt(), pos)
    check("relu", lambda t: t.relu(), _away_from_kink(rng, 3, 4))
    check("reshape", lambda t: t.reshape(4, 3), a)
    check("transpose", lambda t: t.transpose(), a)
    check("getitem", lambda t: t[..., 1:3], a)
    check("sum_all", lambda t: t.sum().reshape(1), a)
    check("sum_axis", lambda t: t.sum(axis=-1), a)
    check("mean", lambda t: t.mean().reshape(1), a)
    check("softmax", lambda t: softmax(t, axis=-1), a)
    check("softmax_axis0", lambda t: softmax(t, axis=0), a)
    check("logsumexp", lambda t: logsumexp(t, axis=-1), a)

    left = _grad_leaf(rng, 3, 4)
    right = _grad_leaf(rng, 4, 2)
    check("matmul_left", lambda t: t @ right, left)
    check("matmul_right", lambda t: left @ t, right)
    bleft = _grad_leaf(rng, 2, 3, 4)
    bright = _grad_leaf(rng, 2, 4, 2)
    check("matmul_batched", lambda t: t @ bright, bleft)
    check("matmul_batched_right", lambda t: bleft @ t, bright)
    check("concat", lambda t: concat([t, other], axis=-1), a)
    check("concat_axis0", lambda t: concat([other, t], axis=0), a)

    signal = _grad_leaf(rng, 5, 8, 2)  # [B, T, C]
    kernels = _grad_leaf(rng, 2, 4)
    cbias = _grad_leaf(rng, 2)
    check("conv_input",
          lambda t: depthwise_conv1d(t, kernels, stride=4, bias=cbias), signal)
    check("conv_kernels",
          lambda t: depthwise_conv1d(signal, t, stride=4, bias=cbias), kernels)
    check("conv_bias",
          lambda t: depthwise_conv1d(signal, kernels, stride=4, bias=t), cbias)

    for t_len in (7, 8):  # odd and even spectra behave differently at the edges
        sig = _grad_leaf(rng, 2, t_len)
        s = num_bins(t_len)
        wr = Tensor(rng.normal(size=(2, s)))
        wi = Tensor(rng.normal(size=(2, s)))

        def spectrum_scalar(t):
            spec = rfft(t)
            return (spec.real * wr).sum() + (spec.imag * wi).sum()

        err = finite_difference_check(spectrum_scalar, sig)
        assert err < 1e-4, f"rfft T={t_len}: {err:.3e}"
        worst.append((f"rfft_{t_len}", err))

        re = _grad_leaf(rng, 2, s)
        im = _grad_leaf(rng, 2, s)
        check(f"irfft_re_{t_len}",
              lambda t: irfft(ComplexSpectrum(t, im, t_len), t_len), re)
        check(f"irfft_im_{t_len}",
              lambda t: irfft(ComplexSpectrum(re, t, t_len), t_len), im)

        kernel = FrequencyKernel(_grad_leaf(rng, 2, s), _grad_leaf(rng, 2, s))
        check(f"freq_conv_input_{t_len}",
              lambda t: frequency_convolution(t, kernel), sig)
        check(f"freq_conv_kreal_{t_len}",
              lambda t: frequency_convolution(sig, FrequencyKernel(t, kernel.imag)),
              kernel.real)
        check(f"freq_conv_kimag_{t_len}",
              lambda t: frequency_convolution(sig, FrequencyKernel(kernel.real, t)),
              kernel.imag)

    ha = ComplexSpectrum(_grad_leaf(rng, 2, 5), _grad_leaf(rng, 2, 5), 8)
    hb = ComplexSpectrum(Tensor(rng.normal(size=(2, 5))),
                         Tensor(rng.normal(size=(2, 5))), 8)
    check("hadamard_real",
          lambda t: complex_hadamard(ComplexSpectrum(t, ha.imag, 8), hb).real,
          ha.real)
    check("hadamard_imag",
          lambda t: complex_hadamard(ComplexSpectrum(ha.real, t, 8), hb).imag,
          ha.imag)

    check("temporal_difference", temporal_difference, _grad_leaf(rng, 3, 6))

    attn = DifferenceAttentionParams(
        queries=[_grad_leaf(rng, 3, 2) for _ in range(2)],
        keys=[_grad_leaf(rng, 3, 2) for _ in range(2)],
        values=[_grad_leaf(rng, 3, 2) for _ in range(2)],
        out_weight=_grad_leaf(rng, 4, 3),
        out_bias=_grad_leaf(rng, 3),
    )
    attn_in = _grad_leaf(rng, 3, 6)
    attn_w = Tensor(rng.normal(size=(3, 6)))
    err = finite_difference_check_many(
        lambda: (difference_attention(attn_in, attn) * attn_w).sum(),
        [attn_in, *attn.queries, *attn.keys, *attn.values,
         attn.out_weight, attn.out_bias],
    )
    assert err < 1e-4, f"difference_attention: {err:.3e}"
    worst.append(("difference_attention", err))

    # full model at a deliberately small but complete configuration:
    # two resolutions, two heads, four-dim embedding, two classes
    arch = ArchitectureConfig(kernel_sizes=(2, 4), embed_dim=4, heads=2,
                              head_dim=2, attn_dim=4, layers=1)
    params = init_params(arch, channels=2, classes=2, input_length=16,
                         rng=np.random.default_rng(7))
    x = Tensor(rng.normal(size=(2, 16, 2)), requires_grad=True)
    labels = np.array([0, 1])
    err_model = finite_difference_check_many(
        lambda: cross_entropy(forward(x, params), labels),
        [x] + params.parameters(),
    )
    assert err_model < 1e-4, f"full model: {err_model:.3e}"

    elapsed = time.monotonic() - started
    assert elapsed < 60.0, f"gradient suite took {elapsed:.1f}s"
    name, value = max(worst, key=lambda item: item[1])
    print(f"\ngradients: PASS  worst op {name} {value:.2e}, "
          f"full model {err_model:.2e}, {elapsed:.1f}s")


# -- 2. spectral -----------------------------------------------------------


def test_spectral_suite():
    rng = np.random.default_rng(31415)

    round_trip = 0.0
    for length in range(1, 513):
        signal = rng.normal(size=length)
        back = irfft_array(rfft_array(signal), length)
        round_trip = max(round_trip, float(np.max(np.abs(back - signal))))
    assert round_trip < 1e-10, f"round trip error {round_trip:.3e}"

    identity = 0.0
    for length in (1, 2, 7, 16, 33, 128):
        x = Tensor(rng.normal(size=(3, length)))
        kernel = FrequencyKernel(Tensor(np.ones((3, num_bins(length)))),
                                 Tensor(np.zeros((3, num_bins(length)))))
        out = frequency_convolution(x, kernel)
        identity = max(identity, float(np.max(np.abs(out.data - x.data))))
    assert identity < 1e-10, f"identity kernel error {identity:.3e}"

    # direct O(T^2) evaluation of the transform definition
    oracle = 0.0
    for _ in range(50):
        length = int(rng.integers(1, 200))
        signal = rng.normal(size=length)
        k = np.arange(num_bins(length))
        n = np.arange(length)
        direct = np.exp(-2j * np.pi * np.outer(k, n) / length) @ signal
        direct.imag[0] = 0.0
        if length % 2 == 0:
            direct.imag[-1] = 0.0
        oracle = max(oracle, float(np.max(np.abs(rfft_array(signal) - direct))))
    assert oracle < 1e-10, f"naive transform disagreement {oracle:.3e}"

    print(f"\nspectral: PASS  round trip {round_trip:.2e}, "
          f"identity {identity:.2e}, naive oracle {oracle:.2e}")


# -- 3. offset immunity ----------------------------------------------------


def _random_attention(rng, channels, heads, head_dim):
    return DifferenceAttentionParams(
        queries=[Tensor(rng.normal(size=(channels, head_dim))) for _ in range(heads)],
        keys=[Tensor(rng.normal(size=(channels, head_dim))) for _ in range(heads)],
        values=[Tensor(rng.normal(size=(channels, head_dim))) for _ in range(heads)],
        out_weight=Tensor(rng.normal(size=(heads * head_dim, channels))),
        out_bias=Tensor(rng.normal(size=(channels,))),
    )


def test_offset_immunity():
    rng = np.random.default_rng(2718)
    attended_drift = 0.0
    full_drift = 0.0
    for _ in range(100):
        channels = int(rng.integers(2, 6))
        length = int(rng.integers(4, 33))
        params = _random_attention(rng, channels, heads=2, head_dim=3)
        x = rng.normal(size=(channels, length))
        offset = rng.uniform(-5.0, 5.0, size=(channels, 1))

        plain = difference_attention(Tensor(x), params).data
        shifted = difference_attention(Tensor(x + offset), params).data

        # the attended summand must not see the offset at all ...
        attended_plain = plain - x
        attended_shifted = shifted - (x + offset)
        attended_drift = max(attended_drift,
                             float(np.max(np.abs(attended_shifted - attended_plain))))
        # ... so the block's output moves by exactly the offset
        full_drift = max(full_drift,
                         float(np.max(np.abs(shifted - (plain + offset)))))
    assert attended_drift < 1e-9, f"attended view moved by {attended_drift:.3e}"
    assert full_drift < 1e-9, f"output moved by offset + {full_drift:.3e}"
    print(f"\noffset immunity: PASS  attended view {attended_drift:.2e}, "
          f"residual path {full_drift:.2e}")


# -- 4. graphs -------------------------------------------------------------


def test_graph_suite():
    rng = np.random.default_rng(1618)

    # dense-formula oracle for the normalized self-looped adjacency
    norm_err = 0.0
    for nodes in range(2, 9):
        for _ in range(5):
            raw = rng.normal(size=(nodes, nodes))
            exp = np.exp(raw - raw.max(axis=-1, keepdims=True))
            soft = exp / exp.sum(axis=-1, keepdims=True)
            looped = soft + np.eye(nodes)
            inv_root = np.diag(1.0 / np.sqrt(looped.sum(axis=-1)))
            expected = inv_root @ looped @ inv_root
            got = normalize_adjacency(Tensor(raw)).data
            norm_err = max(norm_err, float(np.max(np.abs(got - expected))))
    assert norm_err < 1e-12, f"normalization off by {norm_err:.3e}"

    # with the identity as features the attention output IS the row weights
    row_err = 0.0
    for _ in range(20):
        nodes = int(rng.integers(2, 7))
        edge = adjacency_weights(Tensor(rng.normal(size=(nodes, nodes))))
        proj = Tensor(rng.normal(size=(nodes, 3)))
        alpha = local_graph_attention(Tensor(np.eye(nodes)), edge, proj).data
        row_err = max(row_err, float(np.max(np.abs(alpha.sum(axis=-1) - 1.0))))
    assert row_err < 1e-12, f"attention rows sum to 1 +/- {row_err:.3e}"

    # relabeling the four channels must relabel the outputs the same way
    perm_err = 0.0
    for _ in range(10):
        x = rng.normal(size=(4, 6))
        raw = rng.normal(size=(4, 4))
        perm = rng.permutation(4)
        raw_p = raw[perm][:, perm]

        proj = Tensor(rng.normal(size=(6, 3)))
        out = local_graph_attention(Tensor(x), adjacency_weights(Tensor(raw)),
                                    proj).data
        out_p = local_graph_attention(Tensor(x[perm]),
                                      adjacency_weights(Tensor(raw_p)), proj).data
        perm_err = max(perm_err, float(np.max(np.abs(out_p - out[perm]))))

        weight = Tensor(rng.normal(size=(6, 6)))
        conv = graph_convolution(normalize_adjacency(Tensor(raw)),
                                 Tensor(x), weight).data
        conv_p = graph_convolution(normalize_adjacency(Tensor(raw_p)),
                                   Tensor(x[perm]), weight).data
        perm_err = max(perm_err, float(np.max(np.abs(conv_p - conv[perm]))))
    assert perm_err < 1e-12, f"permutation equivariance off by {perm_err:.3e}"

    print(f"\ngraphs: PASS  normalization {norm_err:.2e}, "
          f"row sums {row_err:.2e}, permutation {perm_err:.2e}")


# -- 5. metrics ------------------------------------------------------------


def _enumerated_auroc(scores, positives):
    """Trapezoid area over the ROC points of every distinct threshold."""
    order = np.argsort(-scores, kind="mergesort")
    scores, positives = scores[order], positives[order]
    n_pos, n_neg = positives.sum(), (~positives).sum()
    tpr, fpr = [0.0], [0.0]
    i = 0
    tp = fp = 0
    while i < len(scores):
        j = i
        while j + 1 < len(scores) and scores[j + 1] == scores[i]:
            j += 1
        tp += int(positives[i : j + 1].sum())
        fp += (j - i + 1) - int(positives[i : j + 1].sum())
        tpr.append(tp / n_pos)
        fpr.append(fp / n_neg)
        i = j + 1
    return float(np.trapezoid(tpr, fpr))


def test_metric_suite():
    rng = np.random.default_rng(1729)

    confusion_err = 0.0
    for _ in range(20):
        k = int(rng.integers(2, 6))
        matrix = rng.integers(0, 20, size=(k, k))
        matrix[0, 0] += 1  # keep the total positive
        counts = ConfusionCounts(matrix)

        per_class, macro = precision_recall_f1(counts)
        expected = []
        for c in range(k):
            tp = float(matrix[c, c])
            col = float(matrix[:, c].sum())
            row = float(matrix[c, :].sum())
            p = tp / col if col > 0 else 0.0
            r = tp / row if row > 0 else 0.0
            f = 2 * p * r / (p + r) if p + r > 0 else 0.0
            expected.append((p, r, f))
        diff = np.abs(np.asarray(per_class) - np.asarray(expected)).max()
        diff = max(diff, abs(np.asarray(expected).mean(axis=0) - np.asarray(macro)).max())
        diff = max(diff, abs(accuracy(counts) - matrix.trace() / matrix.sum()))
        confusion_err = max(confusion_err, float(diff))
    assert confusion_err < 1e-12, f"confusion formulas off by {confusion_err:.3e}"

    auroc_err = 0.0
    for case in range(30):
        n = int(rng.integers(4, 40))
        if case % 2:  # force heavy ties half the time
            scores = rng.integers(0, 5, size=n) / 3.0
        else:
            scores = rng.normal(size=n)
        positives = rng.random(n) < 0.5
        if positives.all() or not positives.any():
            positives[0] = not positives[0]
        got = binary_auroc(scores, positives)
        auroc_err = max(auroc_err, abs(got - _enumerated_auroc(scores, positives)))
    assert auroc_err < 1e-12, f"AUROC enumeration disagrees by {auroc_err:.3e}"

    separated = binary_auroc(np.array([0.1, 0.2, 0.8, 0.9]),
                             np.array([False, False, True, True]))
    assert separated == 1.0
    constant = binary_auroc(np.full(6, 0.5), np.array([True, False] * 3))
    assert constant == 0.5

    print(f"\nmetrics: PASS  confusion {confusion_err:.2e}, "
          f"AUROC {auroc_err:.2e}, endpoints exact")


# -- 6/7. training behaviour ----------------------------------------------


def _synth_accuracy(wander, seed, **overrides):
    """Train on the standard synthetic task and return held-out accuracy."""
    config = SynthConfig(timesteps=128, channels=4, classes=3,
                         subjects_per_class=(14, 13, 13), samples_per_subject=20,
                         noise_sigma=0.5, wander_amplitude=wander)
    dataset = synth_generate(config, seed)
    spec = SplitSpec(mode="subject_based", seed=seed)
    train_ds, val_ds, test_ds = split_dataset(dataset, spec)
    train_ds, val_ds, test_ds, _stats = standardize(train_ds, val_ds, test_ds)
    run = RunConfig(epochs=16, batch_size=32, learning_rate=3e-3, seed=seed,
                    **overrides)
    result = fit_model(train_ds, val_ds, run)
    return evaluate(result.params, test_ds, run).accuracy


def test_learnability():
    started = time.monotonic()
    scores = [_synth_accuracy(3.0, seed) for seed in range(5)]
    elapsed = time.monotonic() - started
    reached = sum(score >= 0.90 for score in scores)
    assert reached >= 4, f"only {reached}/5 seeds reached 90%: {scores}"
    assert elapsed < 600.0, f"learnability runs took {elapsed:.0f}s"
    print(f"\nlearnability: PASS  {reached}/5 seeds >= 90% "
          f"({', '.join(f'{s:.3f}' for s in scores)}), {elapsed:.0f}s")


def test_ablation_direction():
    full = [_synth_accuracy(10.0, seed) for seed in range(5)]
    no_attention = [_synth_accuracy(10.0, seed, disable_da=True)
                    for seed in range(5)]
    one_scale = [_synth_accuracy(10.0, seed, single_resolution=True)
                 for seed in range(5)]
    med_full = float(np.median(full))
    med_no_attention = float(np.median(no_attention))
    med_one_scale = float(np.median(one_scale))
    assert med_full > med_no_attention, (
        f"full {med_full:.4f} <= no-attention {med_no_attention:.4f}")
    assert med_full > med_one_scale, (
        f"full {med_full:.4f} <= single-resolution {med_one_scale:.4f}")
    print(f"\nablations: PASS  median full {med_full:.4f} > "
          f"no-attention {med_no_attention:.4f}, "
          f"single-resolution {med_one_scale:.4f}")


# -- 8. protocol -----------------------------------------------------------


def test_protocol_integrity(tmp_path, monkeypatch):
    rng = np.random.default_rng(8128)
    for fixture in range(100):
        classes = int(rng.integers(2, 5))
        config = SynthConfig(
            timesteps=8, channels=1, classes=classes,
            subjects_per_class=tuple(int(v) for v in rng.integers(2, 7, classes)),
            samples_per_subject=int(rng.integers(1, 4)),
            noise_sigma=1.0,
        )
        dataset = synth_generate(config, fixture)
        spec = SplitSpec(mode="subject_based", seed=fixture)
        parts = split_dataset(dataset, spec)
        subjects = [set(part.subject_ids) for part in parts]
        assert not (subjects[0] & subjects[1])
        assert not (subjects[0] & subjects[2])
        assert not (subjects[1] & subjects[2])

    monkeypatch.delenv("RESOGRAPH_CHECKPOINT_DIR", raising=False)
    data_path = tmp_path / "tiny.ds"
    save_dataset(synth_generate(SynthConfig(timesteps=32, channels=2, classes=2,
                                            subjects_per_class=(4, 4),
                                            samples_per_subject=3), 5),
                 data_path)
    run = RunConfig(dataset=str(data_path), checkpoint_dir=str(tmp_path / "ck"),
                    split_mode="sample_based", kernel_sizes=(2, 4), embed_dim=6,
                    heads=2, head_dim=4, attn_dim=5, layers=1, epochs=2,
                    batch_size=8, learning_rate=1e-3, seed=11)
    train(run)
    first = {name: (tmp_path / "ck" / name).read_bytes()
             for name in ("meta", "params.bin")}
    train(run)
    second = {name: (tmp_path / "ck" / name).read_bytes()
              for name in ("meta", "params.bin")}
    assert first == second, "repeated run changed checkpoint bytes"
    print("\nprotocol: PASS  100 leak-free splits, bit-identical reruns")
