import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from virodyne.core import rng_stream
from virodyne.detection import (
    ChannelImpulseResponse,
    DetectorConfig,
    GaussianNoise,
    NonCoherentDifference,
    PoissonNoise,
    ReceivedFrame,
    SequenceML,
    SymbolThreshold,
    _detect_sequence_exhaustive,
    _detect_sequence_viterbi,
    apply_noise,
    default_threshold,
    detect,
    error_probability,
    joint_counts,
    modulate,
    mutual_information,
    wilson_interval,
)
from virodyne.errors import EmptyObservation, MissingChannelModel

CIR1 = ChannelImpulseResponse(taps=[1.0], symbol_interval=1.0)
CIR2 = ChannelImpulseResponse(taps=[2.0, 1.0], symbol_interval=1.0)


class TestModulate:
    def test_all_zero(self):
        assert (modulate([0, 0, 0, 0], CIR2) == 0).all()

    def test_impulse_reproduces_taps(self):
        cir = ChannelImpulseResponse(taps=[3.0, 2.0, 1.0], symbol_interval=1.0)
        assert modulate([1], cir) == pytest.approx([3.0, 2.0, 1.0])

    def test_hand_convolution(self):
        assert modulate([1, 0, 1], CIR2) == pytest.approx([2.0, 1.0, 2.0, 1.0])

    def test_rejects_non_binary(self):
        with pytest.raises(ValueError):
            modulate([0, 2], CIR1)


class TestDetect:
    def test_noiseless_exact_recovery(self):
        bits = np.array([1, 0, 1, 1, 0, 0, 1])
        frame = ReceivedFrame(modulate(bits, CIR1), GaussianNoise(0.1))
        out = detect(frame, CIR1, DetectorConfig(SymbolThreshold(0.5)))
        assert (out.bits == bits).all()

    def test_default_threshold_is_midpoint(self):
        assert default_threshold(CIR2) == 1.0

    def test_sequence_ml_needs_channel(self):
        frame = ReceivedFrame(np.zeros(4), GaussianNoise(1.0))
        with pytest.raises(MissingChannelModel):
            detect(frame, None, DetectorConfig(SequenceML()))

    def test_noncoherent_detects_rises(self):
        # rising edges decide 1 without any channel knowledge
        y = np.array([0.05, 1.1, 1.05, 0.1, 1.2])
        out = detect(ReceivedFrame(y, GaussianNoise(0.1)), None,
                     DetectorConfig(NonCoherentDifference(0.5)))
        assert out.bits.tolist() == [0, 1, 0, 0, 1]

    def test_exhaustive_equals_viterbi(self):
        stream = rng_stream(5, 0)
        noise = GaussianNoise(0.4)
        for _ in range(40):
            bits = (stream.uniform(size=9) < 0.5).astype(int)
            y = apply_noise(modulate(bits, CIR2), noise, stream)
            be, le = _detect_sequence_exhaustive(y, 9, CIR2, noise)
            bv, lv = _detect_sequence_viterbi(y, 9, CIR2, noise)
            assert (be == bv).all()
            assert le == pytest.approx(lv, rel=1e-9)

    def test_viterbi_handles_frames_beyond_exhaustive_limit(self):
        # 24 bits exceeds the brute-force cutoff, exercising the trellis.
        stream = rng_stream(14, 0)
        bits = (stream.uniform(size=24) < 0.5).astype(int)
        noise = GaussianNoise(0.05)
        y = apply_noise(modulate(bits, CIR2), noise, stream)
        out = detect(ReceivedFrame(y, noise), CIR2, DetectorConfig(SequenceML()))
        assert (out.bits == bits).all()

    def test_exhaustive_equals_viterbi_poisson(self):
        stream = rng_stream(6, 0)
        noise = PoissonNoise(60.0)
        for _ in range(25):
            bits = (stream.uniform(size=7) < 0.5).astype(int)
            y = apply_noise(modulate(bits, CIR2), noise, stream)
            be, _ = _detect_sequence_exhaustive(y, 7, CIR2, noise)
            bv, _ = _detect_sequence_viterbi(y, 7, CIR2, noise)
            assert (be == bv).all()

    @given(st.floats(0.1, 100.0))
    @settings(max_examples=30, deadline=None)
    def test_threshold_scaling_equivariance(self, c):
        # scaling samples, taps, theta, sigma by c > 0 keeps decisions
        stream = rng_stream(12, 0)
        bits = (stream.uniform(size=32) < 0.5).astype(int)
        noise = GaussianNoise(0.6)
        y = apply_noise(modulate(bits, CIR2), noise, stream)
        base = detect(ReceivedFrame(y, noise), CIR2,
                      DetectorConfig(SymbolThreshold(1.0)))
        cir_s = ChannelImpulseResponse(taps=CIR2.taps * c, symbol_interval=1.0)
        scaled = detect(ReceivedFrame(y * c, GaussianNoise(0.6 * c)), cir_s,
                        DetectorConfig(SymbolThreshold(1.0 * c)))
        assert (base.bits == scaled.bits).all()


class TestErrorProbability:
    def test_perfect_channel_zero(self):
        est = error_probability(CIR1, DetectorConfig(SymbolThreshold(0.5)),
                                GaussianNoise(1e-9), 8, 200, seed=0)
        assert est.ber == 0.0
        assert est.ci_low == 0.0

    def test_inverted_threshold_is_one(self):
        # Decide via a threshold no sample can reach: all-zero decisions,
        # so BER equals the fraction of 1 bits; with p1=1 that is 1.
        est = error_probability(CIR1, DetectorConfig(SymbolThreshold(1e9), p1=1.0),
                                GaussianNoise(0.1), 8, 200, seed=0)
        assert est.ber == 1.0

    def test_gaussian_tail_oracle(self):
        for ratio in (1.0, 2.0):
            est = error_probability(
                CIR1, DetectorConfig(SymbolThreshold(0.5)),
                GaussianNoise(1.0 / ratio), 1, 20_000, seed=1)
            expected = 0.5 * math.erfc(ratio / (2 * math.sqrt(2)))
            se = math.sqrt(expected * (1 - expected) / 20_000)
            assert abs(est.ber - expected) <= 3 * se

    def test_pure_guessing_limit(self):
        # sigma huge with equal priors: BER near 0.5
        est = error_probability(CIR1, DetectorConfig(SymbolThreshold(0.5)),
                                GaussianNoise(1e6), 4, 10_000, seed=2)
        assert est.ber == pytest.approx(0.5, abs=0.02)

    def test_deterministic_per_seed(self):
        a = error_probability(CIR2, DetectorConfig(SymbolThreshold(None)),
                              GaussianNoise(0.5), 8, 3000, seed=7)
        b = error_probability(CIR2, DetectorConfig(SymbolThreshold(None)),
                              GaussianNoise(0.5), 8, 3000, seed=7)
        assert a == b

    def test_sequence_beats_symbol_under_isi(self):
        noise = GaussianNoise(0.45)
        cir = ChannelImpulseResponse(taps=[1.0, 0.6], symbol_interval=1.0)
        ml = error_probability(cir, DetectorConfig(SequenceML()), noise,
                               12, 1200, seed=3)
        th = error_probability(cir, DetectorConfig(SymbolThreshold(None)), noise,
                               12, 1200, seed=3)
        se = math.sqrt(th.ber * (1 - th.ber) / th.bits_total)
        assert ml.ber <= th.ber + 3 * se

    def test_wilson_interval_brackets(self):
        lo, hi = wilson_interval(10, 100)
        assert lo < 0.1 < hi
        lo, hi = wilson_interval(0, 100)
        assert lo == 0.0 and hi > 0.0


class TestMutualInformation:
    def test_independent_is_zero(self):
        assert mutual_information([[25, 25], [25, 25]]) == pytest.approx(0.0)

    def test_identity_channel_is_one_bit(self):
        assert mutual_information([[50, 0], [0, 50]]) == pytest.approx(1.0)

    def test_bsc_closed_form(self):
        # exact plug-in on the true BSC(0.1) joint distribution
        joint = np.array([[0.45, 0.05], [0.05, 0.45]]) * 1000
        h2 = -(0.1 * math.log2(0.1) + 0.9 * math.log2(0.9))
        assert mutual_information(joint) == pytest.approx(1 - h2, abs=1e-12)

    def test_empty_counts_raise(self):
        with pytest.raises(EmptyObservation):
            mutual_information([[0, 0], [0, 0]])

    def test_non_negative_and_symmetric(self):
        rng = rng_stream(33, 0)
        for _ in range(50):
            counts = rng.integers(0, 50, size=(2, 2))
            if counts.sum() == 0:
                continue
            mi = mutual_information(counts)
            assert mi >= -1e-12
            assert mi == pytest.approx(mutual_information(counts.T), abs=1e-12)

    def test_data_processing_inequality(self):
        # MI(sent, decided) <= MI(sent, quantized raw samples) empirically.
        stream = rng_stream(17, 0)
        n = 100_000
        bits = (stream.uniform(size=n) < 0.5).astype(int)
        y = bits + stream.normal(0, 0.8, size=n)
        decided = (y >= 0.5).astype(int)
        edges = np.quantile(y, [0.25, 0.5, 0.75])
        quantized = np.digitize(y, edges)
        mi_decided = mutual_information(joint_counts(bits, decided))
        table = np.zeros((2, 4))
        np.add.at(table, (bits, quantized), 1)
        mi_quant = mutual_information(table)
        assert mi_decided <= mi_quant + 1e-3

    def test_counts_validation(self):
        with pytest.raises(ValueError):
            mutual_information([[1, -1], [0, 0]])


class TestNoiseModels:
    def test_poisson_counts_scale(self):
        stream = rng_stream(1, 0)
        samples = np.full(20_000, 2.0)
        noisy = apply_noise(samples, PoissonNoise(alpha=50.0), stream)
        assert noisy.mean() == pytest.approx(2.0, rel=0.02)
        # reported values are counts / alpha
        assert np.allclose(noisy * 50.0, np.rint(noisy * 50.0))

    def test_validation(self):
        with pytest.raises(ValueError):
            GaussianNoise(0.0)
        with pytest.raises(ValueError):
            PoissonNoise(-1.0)
        with pytest.raises(ValueError):
            ChannelImpulseResponse(taps=[-0.1], symbol_interval=1.0)
        with pytest.raises(ValueError):
            DetectorConfig(SymbolThreshold(0.5), p1=1.5)
