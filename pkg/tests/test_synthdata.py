import numpy as np
import pytest

from tftargets import dsp, synthdata
from tftargets.signalmodel import measured_snr_db
from tftargets.synthdata import CorpusSpec


def band_fraction_below(x, hz=4000.0):
    power = np.abs(np.fft.rfft(x)) ** 2
    freqs = np.fft.rfftfreq(len(x), 1 / 16000)
    return power[freqs < hz].sum() / power.sum()


class TestClean:
    def test_deterministic(self):
        np.testing.assert_array_equal(synthdata.gen_clean(5, 0.5).samples, synthdata.gen_clean(5, 0.5).samples)
        assert not np.array_equal(synthdata.gen_clean(5, 0.5).samples, synthdata.gen_clean(6, 0.5).samples)

    def test_length_and_peak(self):
        w = synthdata.gen_clean(1, 1.0)
        assert len(w) == 16000 and w.sample_rate_hz == 16000
        assert np.max(np.abs(w.samples)) == pytest.approx(1.0)

    @pytest.mark.parametrize("seed", [0, 1, 2, 3])
    def test_energy_below_4khz(self, seed):
        assert band_fraction_below(synthdata.gen_clean(seed, 1.0).samples) >= 0.7

    def test_too_short(self):
        with pytest.raises(ValueError):
            synthdata.gen_clean(0, 0.1)


class TestNoise:
    def test_white_flat(self):
        w = synthdata.gen_noise("white", 0, 1.0)
        p = np.mean(dsp.stft(w).magnitude ** 2, axis=1)[1:-1]
        db = 10 * np.log10(p / p.mean())
        assert np.all(np.abs(db) <= 3.0)

    def test_ssn_matches_clean_spectrum(self):
        ssn = synthdata.gen_noise("ssn_proxy", 3, 2.0)
        p_ssn = np.mean(dsp.stft(ssn).magnitude ** 2, axis=1)
        p_clean = np.zeros(321)
        for s in range(100, 108):
            p_clean += np.mean(dsp.stft(synthdata.gen_clean(s, 2.0)).magnitude ** 2, axis=1)
        assert np.corrcoef(p_ssn, p_clean)[0, 1] > 0.9

    def test_babble_is_sum_of_talkers(self):
        b = synthdata.gen_noise("babble_proxy", 9, 0.5)
        total = sum(synthdata.gen_clean(s, 0.5).samples for s in synthdata.babble_seeds(9))
        np.testing.assert_allclose(b.samples, total / np.max(np.abs(total)), rtol=1e-12)

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            synthdata.gen_noise("pink", 0, 1.0)


@pytest.fixture(scope="module")
def corpus():
    spec = CorpusSpec(num_utterances=10, utterance_seconds=0.3, snr_grid_db=(-5.0, 0.0, 5.0),
                      num_validation=2, num_test=2, seed=4)
    return spec, synthdata.build_dataset(spec)


class TestDataset:
    def test_cartesian_count(self, corpus):
        _, c = corpus
        assert len(c.train) == 30 and len(c.validation) == 6 and len(c.test) == 6

    def test_seed_sets_disjoint(self, corpus):
        spec, c = corpus
        sets = {}
        for split in synthdata.SPLITS:
            clean, noise = synthdata.split_seeds(spec, split)
            babble = {b for n in noise for b in synthdata.babble_seeds(n)}
            sets[split] = set(clean) | set(noise) | babble
            assert {it.clean_seed for it in c.split(split)} <= set(clean)
        assert not sets["train"] & sets["validation"]
        assert not sets["train"] & sets["test"]
        assert not sets["validation"] & sets["test"]

    def test_snr_labels(self, corpus):
        _, c = corpus
        for it in c.items():
            assert abs(measured_snr_db(it.mixture) - it.mixture.snr_db) < 0.01
            np.testing.assert_allclose(it.mixture.noisy.samples,
                                       it.mixture.clean.samples + it.mixture.noise_scaled.samples, atol=1e-15)
            assert np.max(np.abs(it.mixture.noisy.samples)) <= 1.0

    def test_contexts(self, corpus):
        _, c = corpus
        it = c.train[0]
        np.testing.assert_allclose(it.ctx.A, dsp.stft(it.mixture.clean).magnitude)
        np.testing.assert_allclose(it.ctx.R, dsp.stft(it.mixture.noisy).magnitude)
        assert it.ctx.B.shape == (80, 321)
        assert it.aux.shape == (2, 20)

    def test_deterministic(self, corpus):
        spec, c = corpus
        again = synthdata.build_dataset(spec)
        for a, b in zip(c.items(), again.items()):
            assert a.mixture.noisy.samples.tobytes() == b.mixture.noisy.samples.tobytes()

    def test_cycled_conditions(self):
        spec = CorpusSpec(num_utterances=5, utterance_seconds=0.3, snr_grid_db=(0.0, 5.0),
                          noise_kinds=("white", "ssn_proxy"), num_validation=1, num_test=1,
                          cycle_conditions=True)
        c = synthdata.build_dataset(spec)
        assert len(c.train) == 5
        assert [(it.noise_kind, it.mixture.snr_db) for it in c.train[:4]] == \
               [("white", 0.0), ("white", 5.0), ("ssn_proxy", 0.0), ("ssn_proxy", 5.0)]

    def test_chunks(self, corpus):
        _, c = corpus
        chunks = synthdata.to_chunks(c.train)
        # 0.3 s -> 27 frames -> one full chunk per mixture
        assert len(chunks) == 30 and chunks.noisy.shape == (30, 321, 20) and chunks.aux.shape == (30, 20)
        np.testing.assert_array_equal(chunks.noisy[0], c.train[0].ctx.R[:, :20])
        assert synthdata.to_chunks(c.train, with_aux=False).aux is None


def test_envelope_features_levels():
    clean = synthdata.gen_clean(2, 1.0)
    aux = synthdata.envelope_features(clean, 5)
    assert aux.shape == (5, 20)
    levels = np.unique(aux) * 7
    np.testing.assert_allclose(levels, np.round(levels))
    assert aux.max() == 1.0
    # 97 frames fill 4.85 chunks; the padding reads as level 0
    np.testing.assert_array_equal(aux.reshape(-1)[97:], 0.0)


def test_corpus_round_trip(tmp_path):
    spec = CorpusSpec(num_utterances=2, utterance_seconds=0.3, snr_grid_db=(0.0,), num_validation=1, num_test=1)
    c = synthdata.build_dataset(spec)
    manifest = synthdata.write_corpus(c, tmp_path)
    rows = synthdata.read_manifest(tmp_path)
    assert len(rows) == 4
    assert manifest.read_text().splitlines()[0].split("\t") == list(synthdata.MANIFEST_FIELDS)
    back = synthdata.load_corpus(tmp_path)
    assert [it.item_id for it in back.items()] == [it.item_id for it in c.items()]
    for a, b in zip(c.items(), back.items()):
        np.testing.assert_allclose(a.mixture.noisy.samples, b.mixture.noisy.samples, atol=1 / 32768)
        assert a.mixture.snr_db == b.mixture.snr_db
    synthdata.write_corpus(c, tmp_path / "again")
    assert (tmp_path / "again" / "manifest.tsv").read_bytes() == manifest.read_bytes()
