import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gogenzip import nn
from gogenzip.codec import (
    CompressedPayload,
    ConditionalAutoencoder,
    calibrate_rate_model,
    cr_for_rate,
    dequantize,
    entry_sources,
    fixed_overhead,
    generative_rate,
    latent_dim_for_rate,
    lossless_decode,
    lossless_encode,
    measured_cr,
    merge_reconstruction,
    pack_container,
    quantize,
    quantize_grid,
    rate_budget_for_cr,
    unpack_container,
)
from gogenzip.exceptions import (
    ContainerFormatError,
    ContractError,
    CorruptPayloadError,
    InvalidArgumentError,
)
from gogenzip.model import GenZipModel, ModelConfig

from oracles import container_size, lzma_reference, quantize_reference, rate_budget_reference

D = 816


def payload(d=16, k=2, latent_dim=4, seed=0, task=None, gen=True, lossless=True):
    rng = np.random.default_rng(seed)
    t = d // k
    x = rng.random(d)
    m_s = rng.random(d) < 0.6
    m_c = m_s & (rng.random(d) < 0.5) if gen else np.zeros(d, bool)
    if not lossless:
        m_s = m_c.copy()
    has_gen = bool(m_c.any())
    return CompressedPayload(
        m_s=m_s, m_c=m_c, latent=rng.normal(size=latent_dim) if has_gen else None,
        blob=lossless_encode(x, m_s & ~m_c), bs_class=int(rng.integers(4)),
        hour=int(rng.integers(24)), task_id=task, k=k, t=t, latent_dim=latent_dim,
    )


# ---------------------------------------------------------------- lossless

def test_quantize_matches_reference():
    values = [0.0, 0.5, 1.0, 1 / 3, 0.99999, 0.1, 2.5 / 65536, 3.5 / 65536]
    assert quantize(values).tolist() == quantize_reference(values)


def test_quantize_out_of_range():
    with pytest.raises(ContractError):
        quantize([1.01])
    with pytest.raises(ContractError):
        quantize([-1e-6])
    assert quantize([1.0 + 1e-10]).tolist() == [65535]


def test_lossless_empty_mask():
    assert lossless_encode(np.full(8, 0.3), np.zeros(8, bool)) == b""
    assert lossless_decode(b"", np.zeros(8, bool)).tolist() == [0.0] * 8


def test_lossless_roundtrip_exact_on_grid():
    rng = np.random.default_rng(0)
    x = rng.random(D)
    mask = rng.random(D) < 0.4
    out = lossless_decode(lossless_encode(x, mask), mask)
    np.testing.assert_array_equal(out[mask], quantize_grid(x[mask]))
    assert np.abs(out[mask] - x[mask]).max() <= 2.0**-17 + 1e-15
    assert np.all(out[~mask] == 0)


def test_lossless_half_restores_exactly():
    m = np.ones(1, bool)
    assert lossless_decode(lossless_encode([0.5], m), m)[0] == 0.5


def test_lossless_stream_matches_reference_encoder():
    rng = np.random.default_rng(1)
    x = rng.random(300)
    mask = np.ones(300, bool)
    assert lossless_encode(x, mask) == lzma_reference(x)


def test_lossless_constant_compresses():
    mask = np.ones(D, bool)
    assert len(lossless_encode(np.full(D, 0.5), mask)) < 0.1 * 2 * D


def test_lossless_truncated_blob_raises():
    rng = np.random.default_rng(2)
    x, mask = rng.random(200), np.ones(200, bool)
    blob = lossless_encode(x, mask)
    for cut in (1, len(blob) // 2, len(blob) - 1):
        with pytest.raises(CorruptPayloadError):
            lossless_decode(blob[:cut], mask)
    with pytest.raises(CorruptPayloadError):
        lossless_decode(blob, np.ones(199, bool))
    with pytest.raises(CorruptPayloadError):
        lossless_decode(blob + b"\x00", mask)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(0, 1), min_size=1, max_size=80), st.randoms(use_true_random=False))
def test_lossless_roundtrip_property(values, rnd):
    x = np.array(values)
    mask = np.array([rnd.random() < 0.7 for _ in values])
    out = lossless_decode(lossless_encode(x, mask), mask)
    np.testing.assert_array_equal(out[mask], dequantize(quantize(x[mask])))


# --------------------------------------------------------------- container

def test_container_size_matches_layout():
    p = CompressedPayload(m_s=np.ones(D, bool), m_c=np.ones(D, bool),
                          latent=np.zeros(192), blob=b"", bs_class=0, hour=0, task_id=None,
                          k=34, t=24, latent_dim=192)
    blob = pack_container(p)
    assert len(blob) == container_size(D, 192, 0, True) == 994
    # the latent alone is 4 * 192 bytes; the float-width size ratio is 816 / 192
    assert (D * 4) / (192 * 4) == pytest.approx(4.25)


def test_container_no_sampled_entries():
    z = np.zeros(D, bool)
    p = CompressedPayload(m_s=z, m_c=z, latent=None, blob=b"", bs_class=1, hour=2, task_id=None,
                          k=34, t=24, latent_dim=192)
    blob = pack_container(p)
    assert len(blob) == fixed_overhead(D) == 226
    assert blob[-4:] == b"\x00\x00\x00\x00"
    assert unpack_container(blob).latent is None


def test_container_header_fields():
    p = payload(task=5)
    blob = pack_container(p)
    assert blob[:4] == b"GGZP"
    version, bs, hour, task, k, t, ld, flags = struct.unpack_from("<HHBHHHHB", blob, 4)
    assert (version, bs, hour, task, k, t, ld, flags) == (1, p.bs_class, p.hour, 5, 2, 8, 4, 1)
    assert struct.unpack_from("<HHBHHHHB", pack_container(payload(task=None)), 4)[3] == 0xFFFF


def test_container_halving_latent_shrinks_by_bytes():
    def size(ld):
        return len(pack_container(CompressedPayload(
            m_s=np.ones(D, bool), m_c=np.ones(D, bool), latent=np.zeros(ld), blob=b"",
            bs_class=0, hour=0, task_id=None, k=34, t=24, latent_dim=ld)))
    assert size(192) - size(96) == 96 * 4


def test_container_latent_absent_with_positive_latent_dim():
    p = payload(gen=False)
    q = unpack_container(pack_container(p))
    assert q.latent is None and q.latent_dim == 4 and q == p


def test_container_roundtrip_many():
    rng = np.random.default_rng(0)
    for i in range(200):
        d = int(rng.integers(1, 40))
        k = int(rng.choice([j for j in range(1, d + 1) if d % j == 0]))
        p = payload(d=d, k=k, latent_dim=int(rng.integers(1, 6)), seed=i,
                    task=None if i % 3 else int(rng.integers(0, 10)))
        blob = pack_container(p)
        q = unpack_container(blob)
        assert q == p
        assert pack_container(q) == blob


def test_pack_rejects_invalid_payloads():
    p = payload()
    p.m_c = p.m_c | ~p.m_s
    with pytest.raises(ContractError):
        pack_container(p)
    p = payload(gen=True)
    p.latent = None
    with pytest.raises(ContractError):
        pack_container(p)


def test_unpack_errors_carry_offsets():
    blob = pack_container(payload())
    with pytest.raises(ContainerFormatError) as err:
        unpack_container(b"GGZQ" + blob[4:])
    assert err.value.offset == 0
    with pytest.raises(ContainerFormatError):
        unpack_container(blob[:4] + b"\x02\x00" + blob[6:])
    with pytest.raises(ContainerFormatError):
        unpack_container(blob[:10])
    with pytest.raises(ContainerFormatError):
        unpack_container(blob + b"\x00")
    with pytest.raises(ContainerFormatError):
        unpack_container(blob[:-1])


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 10**6), st.data())
def test_byte_flip_is_rejected_or_visible(seed, data):
    p = payload(seed=seed)
    blob = bytearray(pack_container(p))
    pos = data.draw(st.integers(0, len(blob) - 1))
    blob[pos] ^= data.draw(st.integers(1, 255))
    try:
        q = unpack_container(bytes(blob))
    except ContainerFormatError:
        return
    # Some bytes (context fields, latent values) carry no redundancy; a flip
    # there yields a different but well-formed payload. The blob itself must
    # still decode or fail loudly, never produce a partial result.
    assert q != p
    try:
        lossless_decode(q.blob, q.lossless_mask)
    except CorruptPayloadError:
        pass


# ------------------------------------------------------------------- merge

def test_merge_pure_lossless():
    rng = np.random.default_rng(0)
    x = rng.random(20)
    m_s, m_c = np.ones(20, bool), np.zeros(20, bool)
    values = lossless_decode(lossless_encode(x, m_s), m_s)
    out = merge_reconstruction(np.zeros(20), values, m_s, m_c)
    np.testing.assert_array_equal(out, quantize_grid(x))


def test_merge_pure_imputation():
    g = np.linspace(0, 1, 10)
    z = np.zeros(10, bool)
    np.testing.assert_array_equal(merge_reconstruction(g, np.full(10, 9.0), z, z), g)


def test_merge_partition_and_contract():
    rng = np.random.default_rng(1)
    m_s = rng.random(50) < 0.6
    m_c = m_s & (rng.random(50) < 0.5)
    src = entry_sources(m_s, m_c)
    out = merge_reconstruction(np.full(50, 1.0), np.full(50, 2.0), m_s, m_c)
    assert set(np.unique(src)) <= {0, 1, 2}
    np.testing.assert_array_equal(out == 2.0, src == 2)
    with pytest.raises(ContractError):
        merge_reconstruction(np.zeros(2), np.zeros(2), [False, False], [True, False])


# ------------------------------------------------------------- autoencoder

def ae(latent=8, d=12, c=4, seed=0):
    params = nn.ParamSet()
    return params, ConditionalAutoencoder(params, d, c, latent, np.random.default_rng(seed),
                                          hidden=(16, 8))


def test_encoder_total_and_deterministic():
    _, model = ae()
    ctx = nn.Tensor(np.random.default_rng(1).normal(size=(2, 4)))
    z = model.encode(np.zeros((2, 12)), ctx).data
    assert z.shape == (2, 8) and np.all(np.isfinite(z))
    assert model.encode(np.zeros((2, 12)), ctx).data.tobytes() == z.tobytes()


def test_decoder_clamped_and_context_sensitive():
    _, model = ae(seed=3)
    rng = np.random.default_rng(2)
    lat = rng.normal(size=(1, 8)) * 50
    out = model.decode(lat, nn.Tensor(rng.normal(size=(1, 4)))).data
    assert out.min() >= 0 and out.max() <= 1
    lat = rng.normal(size=(1, 8))
    a = model.decode(lat, nn.Tensor(np.zeros((1, 4)))).data
    b = model.decode(lat, nn.Tensor(np.ones((1, 4)))).data
    assert not np.array_equal(a, b)


def test_float32_latent_changes_mae_by_less_than_1e6():
    params, model = ae(latent=16, d=40, c=4)
    rng = np.random.default_rng(5)
    x = rng.random((32, 40))
    ctx = nn.Tensor(rng.normal(size=(32, 4)))
    z = model.encode(x, ctx).data
    full = model.decode(z, ctx).data
    wire = model.decode(z.astype("<f4").astype(np.float64), ctx).data
    assert abs(np.abs(full - x).mean() - np.abs(wire - x).mean()) < 1e-6


def test_autoencoder_training_beats_mean_baseline():
    rng = np.random.default_rng(0)
    k, t = 3, 8
    hours = np.arange(t)
    base = np.stack([0.5 + 0.3 * np.sin(2 * np.pi * (hours + s) / t) for s in range(k)])
    x = np.clip(base[None] * rng.uniform(0.6, 1.0, size=(200, k, 1))
                + 0.02 * rng.normal(size=(200, k, t)), 0, 1).reshape(200, -1)
    params, model = ae(latent=4, d=k * t, c=2, seed=1)
    opt = nn.Adam(params, lr=3e-3)
    ctx = nn.Tensor(np.zeros((200, 2)))
    for _ in range(300):
        params.zero_grad()
        loss = nn.square(model.decode(model.encode(x, ctx), ctx) - x).mean()
        opt.step(nn.backward(loss, params))
    mae = np.abs(model.decode(model.encode(x, ctx), ctx).data - x).mean()
    baseline = np.abs(x - x.reshape(200, k, t).mean(axis=(0, 2)).repeat(t)).mean()
    assert mae < baseline


# ------------------------------------------------------------- rate model

def test_generative_rate_formula():
    assert generative_rate(192, D) == pytest.approx(192 * 32 / (D * 16))
    assert round(generative_rate(192, D), 4) == 0.4706


def test_calibration_random_vs_constant():
    rng = np.random.default_rng(0)
    noisy = calibrate_rate_model(rng.random((100, D)), 32, rng=np.random.default_rng(1))
    assert 0.95 < noisy.r_lc < 1.2
    const = calibrate_rate_model(np.full((100, D), 0.25), 32)
    assert const.r_lc < 0.2
    assert noisy.r_ge == generative_rate(32, D)


def test_calibration_errors():
    with pytest.raises(ContractError):
        calibrate_rate_model(np.zeros((99, 8)), 4)
    with pytest.raises(ContractError):
        calibrate_rate_model(np.zeros((100, 8)), 4, masks=np.zeros((100, 8), bool))


def test_rate_accounting_predicts_container_bytes():
    rng = np.random.default_rng(3)
    hours = np.arange(24)
    x = np.clip(0.5 + 0.3 * np.sin(2 * np.pi * hours / 24)[None, None]
                * rng.uniform(0.5, 1.0, size=(150, 34, 1))
                + 0.01 * rng.normal(size=(150, 34, 24)), 0, 1).reshape(150, -1)
    model = calibrate_rate_model(x, 32, rng=np.random.default_rng(4))
    m_s = rng.random((150, D)) < 0.5
    m_c = m_s & (rng.random((150, D)) < 0.3)
    predicted = model.predict_container_bytes(m_s, m_c).sum()
    actual = 0
    for i in range(150):
        gen = bool(m_c[i].any())
        actual += len(pack_container(CompressedPayload(
            m_s=m_s[i], m_c=m_c[i], latent=np.zeros(32) if gen else None,
            blob=lossless_encode(x[i], m_s[i] & ~m_c[i]), bs_class=0, hour=0, task_id=None,
            k=34, t=24, latent_dim=32)))
    assert abs(predicted - actual) / actual < 0.15


def test_rate_budget_for_cr_matches_reference():
    for cr in (2.9, 3.5, 1.5):
        assert rate_budget_for_cr(cr, D) == pytest.approx(
            rate_budget_reference(cr, D, fixed_overhead(D)), rel=1e-12)
        assert cr_for_rate(rate_budget_for_cr(cr, D), D) == pytest.approx(cr)
    assert round(rate_budget_for_cr(2.9, D), 3) == 0.206
    assert round(rate_budget_for_cr(3.5, D), 3) == 0.147
    with pytest.raises(InvalidArgumentError):
        rate_budget_for_cr(8.0, D)
    with pytest.raises(InvalidArgumentError):
        rate_budget_for_cr(0.0, D)


def test_latent_dim_for_rate():
    assert latent_dim_for_rate(generative_rate(84, D), D) == 84


def test_measured_cr():
    windows = np.zeros((3, 4, 6))
    assert measured_cr(windows, [b"x" * 48] * 3) == 1.0
    assert measured_cr(2, [b"x" * 10, b"x" * 6], d=8) == 2.0
    with pytest.raises(InvalidArgumentError):
        measured_cr(0, [], d=8)


# ------------------------------------------------------------ model wire path

def test_model_wire_path_roundtrip():
    model = GenZipModel(ModelConfig(k=4, t=24, n_classes=2, latent_dim=5, ae_hidden=(16, 8)))
    rng = np.random.default_rng(0)
    x = rng.random((6, 96))
    payloads, dec = model.compress_batch(x, rng.integers(0, 2, 6), rng.integers(0, 24, 6),
                                         deterministic=False, rng=rng)
    blobs = [pack_container(p) for p in payloads]
    again = [unpack_container(b) for b in blobs]
    assert all(a == b for a, b in zip(again, payloads))
    out = model.decompress_batch(again)
    lossless = dec.m_s & ~dec.m_c
    np.testing.assert_array_equal(out[lossless], quantize_grid(x)[lossless])
    assert out.min() >= 0 and out.max() <= 1
