import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import tiny_config
from lifecode.config import EncoderConfig, ModelConfig, TokenizerConfig, preset
from lifecode.delta import delta_rule_chunkwise, delta_rule_recurrent
from lifecode.encoder import (
    ATTENTION,
    _ffn,
    DELTA,
    Encoder,
    StrandPair,
    attention_block,
    delta_block,
    fuse_strands,
    init_attention_block,
    init_delta_block,
    init_encoder,
    layer_schedule,
    split_strands,
    strand_reverse,
    swap_halves,
)
from lifecode.errors import IdOutOfRange, LengthNotMultipleOfThree, OddDim, ShapeMismatch
from lifecode.ingest import TokenVocab
from lifecode.model import LifeCodeModel, init_model
from lifecode.numerics import Tensor, grad_check
from lifecode.numerics.functional import rmsnorm
from lifecode.params import Initializer, ParamModule
from lifecode.seqcore import reverse_complement_tokens
from lifecode.tokenizer import Tokenizer, init_tokenizer, mlm_loss, trans_loss


def _delta_inputs(rng, L, dk=6, dv=5, per_channel=False, lead=(2, 3)):
    q = rng.normal(size=(*lead, L, dk))
    k = rng.normal(size=(*lead, L, dk))
    k /= np.linalg.norm(k, axis=-1, keepdims=True)
    v = rng.normal(size=(*lead, L, dv))
    a = 1 / (1 + np.exp(-rng.normal(size=(*lead, L, dk if per_channel else 1)) - 1.5))
    b = 1 / (1 + np.exp(-rng.normal(size=(*lead, L, 1))))
    return q, k, v, a, b


def _naive_delta(q, k, v, a, b):
    # textbook loop: S <- alpha S (I - beta k k^T) + beta v k^T ; o = S q
    *lead, L, dk = k.shape
    out = np.zeros((*lead, L, v.shape[-1]))
    for idx in np.ndindex(*lead):
        S = np.zeros((v.shape[-1], dk))
        for t in range(L):
            kt, vt, bt = k[idx][t], v[idx][t], b[idx][t, 0]
            decay = np.broadcast_to(a[idx][t], (dk,))
            S = (S * decay) @ (np.eye(dk) - bt * np.outer(kt, kt)) + bt * np.outer(vt, kt)
            out[idx][t] = S @ q[idx][t]
    return out


# -- gated delta rule ---------------------------------------------------------------
@pytest.mark.parametrize("per_channel", [False, True])
def test_recurrent_matches_textbook_loop(rng, per_channel):
    q, k, v, a, b = _delta_inputs(rng, 11, per_channel=per_channel, lead=(2,))
    np.testing.assert_allclose(delta_rule_recurrent(q, k, v, a, b).data, _naive_delta(q, k, v, a, b),
                               atol=1e-12)


@pytest.mark.parametrize("L,chunk", [(16, 1), (16, 16), (37, 8), (5, 32), (64, 16)])
@pytest.mark.parametrize("per_channel", [False, True])
def test_chunkwise_matches_recurrent(rng, L, chunk, per_channel):
    q, k, v, a, b = _delta_inputs(rng, L, per_channel=per_channel)
    o1 = delta_rule_recurrent(q, k, v, a, b).data
    o2 = delta_rule_chunkwise(q, k, v, a, b, chunk=chunk).data
    assert np.abs(o1 - o2).max() < 1e-10


def test_zero_write_strength_gives_zero_output(rng):
    q, k, v, a, _ = _delta_inputs(rng, 10)
    b = np.zeros((2, 3, 10, 1))
    assert np.array_equal(delta_rule_recurrent(q, k, v, a, b).data, np.zeros((2, 3, 10, 5)))
    assert np.abs(delta_rule_chunkwise(q, k, v, a, b, chunk=4).data).max() == 0.0


def test_recurrent_states_start_at_zero(rng):
    q, k, v, a, b = _delta_inputs(rng, 6)
    o, states = delta_rule_recurrent(q, k, v, a, b, return_states=True)
    assert states.shape == (2, 3, 7, 5, 6)
    assert not states[..., 0, :, :].any()
    np.testing.assert_allclose(o.data[..., -1, :], np.einsum("...vk,...k->...v", states[..., -1, :, :],
                                                             q[..., -1, :]), atol=1e-12)


def test_delta_shape_errors(rng):
    q, k, v, a, b = _delta_inputs(rng, 6)
    with pytest.raises(ShapeMismatch):
        delta_rule_recurrent(q[..., :5], k, v, a, b)
    with pytest.raises(ShapeMismatch):
        delta_rule_chunkwise(q, k, v, a, b[..., :5, :])


# -- strands and schedule ---------------------------------------------------------
def test_split_and_fuse_strands():
    E = Tensor(np.array([[1.0, 2, 3, 4]]))
    p = split_strands(E)
    assert p.plus.data.tolist() == [[1, 2]] and p.minus.data.tolist() == [[3, 4]]
    assert np.array_equal(fuse_strands(p).data, E.data)
    assert isinstance(p, StrandPair)
    with pytest.raises(OddDim):
        split_strands(Tensor(np.zeros((2, 3))))


def test_layer_schedule_examples():
    s = layer_schedule(24, 11)
    assert [i for i, k in enumerate(s) if k == ATTENTION] == [11, 23]
    assert s.count(DELTA) == 22
    assert [i for i, k in enumerate(layer_schedule(4, 3)) if k == ATTENTION] == [3]
    assert layer_schedule(12, 12) == [DELTA] * 12
    assert layer_schedule(3, None) == [DELTA] * 3
    assert layer_schedule(3, 0) == [ATTENTION] * 3


def test_paper_preset_block_counts():
    mc, tc = preset("paper")
    s = layer_schedule(mc.encoder.n_layers, mc.encoder.attn_every)
    assert (s.count(DELTA), s.count(ATTENTION)) == (22, 2)
    assert mc.tokenizer.codon_dim == 768 and mc.encoder.model_dim == 1024
    assert tc.warmup_steps == 10_000


# -- blocks ---------------------------------------------------------------------------
def _block_params(kind, dim=8, heads=2, ls=0.5, seed=0):
    init = Initializer(seed)
    if kind == DELTA:
        return init_delta_block(init, "b.", dim, heads, False, 4, 4 * dim, ls)
    return init_attention_block(init, "b.", dim, 4 * dim, ls)


def test_delta_block_without_writes_is_residual_plus_ffn(rng):
    p = _block_params(DELTA)
    p["b.b_beta"] = Tensor(np.full(2, -1e4))     # sigmoid -> exactly 0 write strength
    mod = ParamModule(p)
    x = Tensor(rng.normal(size=(1, 7, 8)))
    y = delta_block(mod, "b.", x, np.ones((1, 7), bool), 2)
    p2 = dict(p)
    p2["b.ls1"] = Tensor(np.zeros(8))
    y_res = delta_block(ParamModule(p2), "b.", x, np.ones((1, 7), bool), 2)
    np.testing.assert_allclose(y.data, y_res.data, atol=1e-15)


def test_delta_block_impls_agree(rng):
    mod = ParamModule(_block_params(DELTA))
    x = Tensor(rng.normal(size=(2, 13, 8)))
    nonpad = np.ones((2, 13), bool)
    nonpad[1, 10:] = False
    a = delta_block(mod, "b.", x, nonpad, 2, impl="recurrent").data
    b = delta_block(mod, "b.", x, nonpad, 2, impl="chunkwise", chunk=4).data
    assert np.abs(a - b).max() < 1e-12


def test_attention_block_single_token_uses_value_path(rng):
    p = _block_params(ATTENTION)
    mod = ParamModule(p)
    x = Tensor(rng.normal(size=(1, 1, 8)))
    y = attention_block(mod, "b.", x, np.ones((1, 1), bool), 2)
    h = rmsnorm(x, p["b.norm1"]).data
    # softmax over a single key is 1, so the mixer returns that token's value
    mixed = x.data + (h @ p["b.wv"].data @ p["b.wo"].data) * p["b.ls1"].data
    np.testing.assert_allclose(y.data, _ffn(mod, "b.", Tensor(mixed), 1e-6).data, atol=1e-12)


def test_attention_block_ignores_padded_keys(rng):
    mod = ParamModule(_block_params(ATTENTION))
    x = rng.normal(size=(1, 6, 8))
    nonpad = np.array([[True] * 4 + [False] * 2])
    y1 = attention_block(mod, "b.", Tensor(x), nonpad, 2).data
    x2 = x.copy()
    x2[0, 4:] = rng.normal(size=(2, 8))
    y2 = attention_block(mod, "b.", Tensor(x2), nonpad, 2).data
    np.testing.assert_allclose(y1[0, :4], y2[0, :4], atol=1e-12)


# -- encoder --------------------------------------------------------------------------
def _encoder(seed=0, **kw):
    cfg = EncoderConfig(**{"model_dim": 16, "n_layers": 4, "attn_every": 1, "heads": 2,
                           "layer_scale_init": 0.5, "delta_chunk": 4, **kw})
    return Encoder(cfg, init_encoder(cfg, Initializer(seed)))


def test_zero_parameters_give_identity(rng):
    enc = _encoder()
    for name, t in enc.params.items():
        t.data = np.zeros_like(t.data) if not name.endswith(("norm1", "norm2")) else t.data
    E = rng.normal(size=(2, 9, 16))
    assert np.array_equal(enc.encode(E).data, E)


def test_single_position_reversal_is_trivial(rng):
    enc = _encoder()
    E = rng.normal(size=(1, 1, 16))
    H = enc.encode(E).data
    p = split_strands(Tensor(E))
    nonpad = np.ones((1, 1), bool)
    f_plus = enc.stack(p.plus, nonpad).data
    f_minus = enc.stack(p.minus, nonpad).data
    np.testing.assert_allclose(H, np.concatenate([f_plus, f_minus], axis=-1), atol=1e-14)


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 14), st.sampled_from([None, 0, 1, 3]),
       st.booleans())
def test_strand_swap_equivariance(seed, L, attn_every, per_channel):
    rng = np.random.default_rng(seed)
    enc = _encoder(seed, attn_every=attn_every, per_channel_gate=per_channel)
    E = rng.normal(size=(2, L, 16))
    lhs = enc.encode(strand_reverse(E)).data
    rhs = strand_reverse(enc.encode(E).data)
    assert np.abs(lhs - rhs).max() < 1e-12


def test_swap_halves_and_strand_reverse_are_involutions(rng):
    E = rng.normal(size=(3, 5, 6))
    assert np.array_equal(swap_halves(swap_halves(E)), E)
    assert np.array_equal(strand_reverse(strand_reverse(E)), E)


# -- tokenizer ------------------------------------------------------------------------
def _tokenizer(d=4, **kw):
    cfg = TokenizerConfig(embed_dim=d, heads=2, layer_scale_init=0.5, delta_chunk=4, **kw)
    return Tokenizer(cfg, init_tokenizer(cfg, Initializer(0)))


def test_embed_examples():
    tok = _tokenizer()
    table = tok.embedding_table().data
    assert np.array_equal(tok.embed([0]).data[0], table[0])
    e = tok.embed([5, 7, 5]).data
    assert np.array_equal(e[0], e[2])
    with pytest.raises(IdOutOfRange):
        tok.embed([9])


def test_tied_embedding_commutes_with_complement():
    tok = _tokenizer(d=6)
    table = tok.embedding_table().data
    from lifecode.seqcore import COMPLEMENT_IDS
    np.testing.assert_array_equal(table[COMPLEMENT_IDS], swap_halves(table))


def test_codon_condense_and_detokenize_shapes():
    tok = _tokenizer(d=4)
    E = Tensor(np.random.default_rng(0).normal(size=(6, 4)))
    C = tok.codon_condense(E)
    assert C.shape == (2, 8)
    assert tok.detokenize(C).shape == (6, 9)
    assert tok.translate_head(C).shape == (2, 21)
    with pytest.raises(LengthNotMultipleOfThree):
        tok.codon_condense(Tensor(np.zeros((5, 4))))


def test_translate_head_dead_network_is_uniform():
    tok = _tokenizer(d=4)
    logits = tok.translate_head(Tensor(np.zeros((3, 8)))).data
    assert np.array_equal(logits, np.zeros((3, 21)))


def test_tokenizer_losses_examples():
    uniform = Tensor(np.zeros((1, 6, 9)))
    targets = np.array([[5, -100, 7, -100, -100, 8]])
    assert abs(float(mlm_loss(uniform, targets).data) - math.log(9)) < 1e-12
    aa = np.array([[3, -100]])
    assert abs(float(trans_loss(Tensor(np.zeros((1, 2, 21))), aa).data) - math.log(21)) < 1e-12
    perfect = np.full((1, 2, 21), -1e4)
    perfect[0, 0, 3] = 1e4
    assert float(trans_loss(Tensor(perfect), aa).data) < 1e-12
    # the ignored DNA-window cell can say anything
    perfect[0, 1] = np.random.default_rng(0).normal(size=21) * 100
    assert float(trans_loss(Tensor(perfect), aa).data) < 1e-12


def test_end_to_end_shape_law(tiny_model):
    toks = np.random.default_rng(0).integers(0, 9, size=(3, 15))
    out = tiny_model.forward(toks)
    assert out.codons.shape == (3, 5, 16)
    assert out.hidden.shape == (3, 5, 16)
    assert out.nt_logits.shape == (3, 15, 9)
    assert out.aa_logits.shape == (3, 5, 21)
    assert out.protein.shape == (3, 5, 4)


def test_token_rc_equivariance_through_embedding():
    cfg = tiny_config(embed_dim=8, model_dim=8)
    model = LifeCodeModel(cfg, init_model(cfg, 1))
    enc = Encoder(cfg.encoder, init_encoder(cfg.encoder, Initializer(3)))
    x = np.random.default_rng(2).integers(5, 9, size=12)
    a = enc.encode(model.tokenizer.embed(reverse_complement_tokens(x)[None])).data
    b = strand_reverse(enc.encode(model.tokenizer.embed(x[None])).data)
    assert np.abs(a - b).max() < 1e-12


def test_bridged_model_runs():
    cfg = tiny_config(embed_dim=8, model_dim=24)
    model = LifeCodeModel(cfg, init_model(cfg, 0))
    assert model.bridged
    out = model.forward(np.random.default_rng(0).integers(5, 9, size=(1, 9)))
    assert out.hidden.shape == (1, 3, 24) and out.nt_logits.shape == (1, 9, 9)


def test_tokenizer_loss_gradients():
    cfg = tiny_config(embed_dim=4, model_dim=8)
    params = init_model(cfg, 0)
    model = LifeCodeModel(cfg, params)
    toks = TokenVocab.encode("ATGGCCAAGTAA")[None]
    inp = toks.copy()
    inp[0, 3:6] = 4
    nt_t = np.where(inp == 4, toks, -100)
    aa_t = np.array([[12, 0, 8, 20]])
    names = [n for n in params if n.startswith("tokenizer/")]

    def f(*ts):
        for n, t in zip(names, ts):
            params[n] = t
        out = model.tokenizer_forward(inp)
        return mlm_loss(out.nt_logits, nt_t) + trans_loss(out.aa_logits, aa_t)

    assert grad_check(f, [params[n] for n in names], eps=1e-3, stencil=4) < 1e-6


def test_config_validation_rejects_odd_dims():
    from lifecode.errors import ConfigError
    with pytest.raises((ConfigError, OddDim)):
        ModelConfig(TokenizerConfig(embed_dim=5), EncoderConfig(), 4).validate()


def test_delta_state_stays_bounded(rng):
    for _ in range(5):
        q, k, v, a, b = _delta_inputs(rng, 200)
        a = np.minimum(a, 0.9)
        _, states = delta_rule_recurrent(q, k, v, a, b, return_states=True)
        bound = np.linalg.norm(v, axis=-1).max() / (1 - a.max())
        assert np.linalg.norm(states, axis=(-2, -1)).max() < 2 * bound
