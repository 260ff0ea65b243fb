"""Sentence-pair classifier: P(same narrative | s1, s2, mixture).

Sentences are encoded by a stacked BiLSTM (z = final forward and backward states of the
top layer, e = top-layer per-token outputs). Optional extras are mutual attention
(m_1->2 = sum_j softmax_j(z1 . e2_j) e2_j) and a Kim-style convolutional reader over the
whole mixture (c). The score is sigmoid(u1' W u2) with u_i = [z_i; m_i->other; c].
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..corpus import UNK_ID, Vocabulary
from .config import ModelConfig
from .layers import (attention_backward, attention_forward, bilstm_layer_backward,
                     bilstm_layer_forward, conv_maxpool_backward, conv_maxpool_forward,
                     dropout_mask, event_ffnn_backward, event_ffnn_forward, reverse_index,
                     sigmoid, softplus, xavier)

NONE_TOKEN = "<none>"
# keeps initial logits near 0 (loss near ln 2) even when the context vector is large
BILINEAR_INIT_SCALE = 0.1


class ModelError(ValueError):
    pass


def init_params(config: ModelConfig, vocab_size: int, rng: np.random.Generator) -> dict[str, np.ndarray]:
    p: dict[str, np.ndarray] = {}
    if config.use_events:
        p["word_embed"] = xavier(rng, vocab_size, config.event_word_dim)
        p["event_W"] = xavier(rng, 5 * config.event_word_dim, config.embed_dim)
        p["event_b"] = np.zeros(config.embed_dim)
    else:
        p["embed"] = xavier(rng, vocab_size, config.embed_dim)
    hid = config.lstm_hidden
    for layer in range(config.lstm_layers):
        d_in = config.embed_dim if layer == 0 else 2 * hid
        for direction in "fb":
            p[f"lstm{layer}_{direction}_W"] = xavier(rng, d_in + hid, 4 * hid)
            p[f"lstm{layer}_{direction}_b"] = np.zeros(4 * hid)
    if config.use_context:
        for w in config.cnn_filter_widths:
            p[f"conv{w}_W"] = xavier(rng, w * config.embed_dim, config.cnn_filters_per_width)
            p[f"conv{w}_b"] = np.zeros(config.cnn_filters_per_width)
    u = config.bilinear_dim
    p["bilinear"] = BILINEAR_INIT_SCALE * xavier(rng, u, u)
    return p


def expected_shapes(config: ModelConfig, vocab_size: int) -> dict[str, tuple[int, ...]]:
    return {k: v.shape for k, v in init_params(config, vocab_size, np.random.default_rng(0)).items()}


@dataclass
class EncodedSalad:
    sentences: list
    context: list


@dataclass
class PairBatch:
    first: list
    second: list
    contexts: list
    context_index: np.ndarray

    def __len__(self) -> int:
        return len(self.first)


class PairClassifier:
    def __init__(self, config: ModelConfig, vocab: Vocabulary, params: dict | None = None,
                 seed: int = 0):
        self.config = config
        self.vocab = vocab
        if params is None:
            params = init_params(config, len(vocab), np.random.default_rng(seed))
        self.params = params
        self._check_shapes()
        self._encoded: dict[int, tuple[object, EncodedSalad]] = {}

    def _check_shapes(self):
        want = expected_shapes(self.config, len(self.vocab))
        if set(want) != set(self.params):
            missing = sorted(set(want) ^ set(self.params))
            raise ModelError(f"parameter set does not match the configuration: {missing}")
        for name, shape in want.items():
            if self.params[name].shape != shape:
                raise ModelError(f"parameter {name} has shape {self.params[name].shape}, "
                                 f"expected {shape} for {self.config.variant} with vocabulary "
                                 f"of {len(self.vocab)}")

    @property
    def variant(self) -> str:
        return self.config.variant

    # --- preparing inputs -------------------------------------------------------------

    def _event_ids(self, event) -> tuple:
        none_id = self.vocab.lookup(NONE_TOKEN)

        def slot(word):
            return none_id if word is None else self.vocab.lookup(word)

        return (self.vocab.lookup(event.verb), slot(event.subj), slot(event.dobj),
                tuple((self.vocab.lookup(p), self.vocab.lookup(o)) for p, o in event.pps))

    def encode_item(self, item) -> list:
        if self.config.use_events:
            if item.events is None:
                raise ModelError("event model needs event-tuple salads")
            seq = [self._event_ids(e) for e in item.events]
        else:
            seq = [self.vocab.lookup(t) for t in item.tokens]
        seq = seq[:self.config.max_sentence_len]
        if not seq:
            raise ModelError("cannot encode an empty sentence")
        return seq

    def encode_salad(self, salad) -> EncodedSalad:
        cached = self._encoded.get(id(salad))
        if cached is not None and cached[0] is salad:
            return cached[1]
        sentences = [self.encode_item(it) for it in salad.items]
        context = [x for s in sentences for x in s][:self.config.context_cap]
        enc = EncodedSalad(sentences, context)
        self._encoded[id(salad)] = (salad, enc)
        return enc

    def make_batch(self, pairs, salads) -> PairBatch:
        """``pairs`` holds (i, j, salad_index) triples into ``salads``."""
        ctx_slot: dict[int, int] = {}
        contexts, first, second, index = [], [], [], []
        for i, j, k in pairs:
            enc = self.encode_salad(salads[k])
            first.append(enc.sentences[i])
            second.append(enc.sentences[j])
            if k not in ctx_slot:
                ctx_slot[k] = len(contexts)
                contexts.append(enc.context)
            index.append(ctx_slot[k])
        if self.config.use_context:
            self._check_context(contexts)
        return PairBatch(first, second, contexts, np.array(index, dtype=int))

    def _check_context(self, contexts):
        smallest = min(self.config.cnn_filter_widths)
        for ctx in contexts:
            if len(ctx) == 0:
                raise ModelError("cannot read the context of an empty mixture")
            if len(ctx) < smallest:
                raise ModelError("context shorter than filter")

    # --- input layer ------------------------------------------------------------------

    def _input_forward(self, seqs, rng):
        lengths = np.array([len(s) for s in seqs])
        t_max = int(lengths.max())
        n = len(seqs)
        mask = np.arange(t_max)[None, :] < lengths[:, None]
        dim = self.config.embed_dim
        if self.config.use_events:
            slots, pp_ids, pp_event, pos = [], [], [], []
            for r, seq in enumerate(seqs):
                for t, ev in enumerate(seq):
                    for pp in ev[3]:
                        pp_ids.append(pp)
                        pp_event.append(len(slots))
                    slots.append(ev[:3])
                    pos.append(r * t_max + t)
            slots = np.array(slots, dtype=int).reshape(-1, 3)
            pp_ids = np.array(pp_ids, dtype=int).reshape(-1, 2)
            pp_event = np.array(pp_event, dtype=int)
            pos = np.array(pos, dtype=int)
            h, ffnn_cache = event_ffnn_forward(self.params["word_embed"], slots, pp_ids, pp_event,
                                               len(slots), self.params["event_W"],
                                               self.params["event_b"])
            x = np.zeros((n * t_max, dim))
            x[pos] = h
            x = x.reshape(n, t_max, dim)
            lookup = (ffnn_cache, pos)
        else:
            ids = np.full((n, t_max), UNK_ID, dtype=int)
            for r, seq in enumerate(seqs):
                ids[r, :len(seq)] = seq
            x = self.params["embed"][ids] * mask[:, :, None]
            lookup = ids
        drop = dropout_mask(rng, x.shape, self.config.dropout_rate)
        if drop is not None:
            x = x * drop
        return x, mask, lengths, (lookup, mask, drop)

    def _input_backward(self, dx, cache, grads):
        lookup, mask, drop = cache
        if drop is not None:
            dx = dx * drop
        if self.config.use_events:
            ffnn_cache, pos = lookup
            dh = dx.reshape(-1, dx.shape[2])[pos]
            dE, dW, db = event_ffnn_backward(dh, ffnn_cache, len(self.vocab))
            grads["word_embed"] += dE
            grads["event_W"] += dW
            grads["event_b"] += db
        else:
            np.add.at(grads["embed"], lookup[mask], dx[mask])

    # --- sentence encoder -------------------------------------------------------------

    def _encode_forward(self, seqs, rng):
        x, mask, lengths, in_cache = self._input_forward(seqs, rng)
        rev = reverse_index(lengths, x.shape[1])
        caches = []
        h = x
        for layer in range(self.config.lstm_layers):
            drop = None
            if layer > 0:
                drop = dropout_mask(rng, h.shape, self.config.dropout_rate)
                if drop is not None:
                    h = h * drop
            p = self.params
            h, hf, hb, cache = bilstm_layer_forward(
                h, mask, rev, p[f"lstm{layer}_f_W"], p[f"lstm{layer}_f_b"],
                p[f"lstm{layer}_b_W"], p[f"lstm{layer}_b_b"])
            caches.append((cache, drop))
        z = np.concatenate([hf, hb], axis=1)
        return z, h, mask, (in_cache, caches)

    def _encode_backward(self, dz, de, cache, grads):
        in_cache, caches = cache
        hid = self.config.lstm_hidden
        dy, dhf, dhb = de, dz[:, :hid], dz[:, hid:]
        for layer in reversed(range(self.config.lstm_layers)):
            layer_cache, drop = caches[layer]
            dx, (dWf, dbf, dWb, dbb) = bilstm_layer_backward(dy, dhf, dhb, layer_cache)
            grads[f"lstm{layer}_f_W"] += dWf
            grads[f"lstm{layer}_f_b"] += dbf
            grads[f"lstm{layer}_b_W"] += dWb
            grads[f"lstm{layer}_b_b"] += dbb
            if drop is not None:
                dx = dx * drop
            dy = dx
            dhf = np.zeros_like(dhf)
            dhb = np.zeros_like(dhb)
        self._input_backward(dy, in_cache, grads)

    # --- context reader ---------------------------------------------------------------

    def _context_forward(self, contexts, rng):
        x, mask, lengths, in_cache = self._input_forward(contexts, rng)
        outs, caches = [], []
        for w in self.config.cnn_filter_widths:
            out, cache = conv_maxpool_forward(x, lengths, self.params[f"conv{w}_W"],
                                              self.params[f"conv{w}_b"], w)
            outs.append(out)
            caches.append(cache)
        return np.concatenate(outs, axis=1), (in_cache, caches, x.shape)

    def _context_backward(self, dc, cache, grads):
        in_cache, caches, x_shape = cache
        nf = self.config.cnn_filters_per_width
        dx = np.zeros(x_shape)
        for k, w in enumerate(self.config.cnn_filter_widths):
            F = self.params[f"conv{w}_W"]
            dxk, dF, db = conv_maxpool_backward(dc[:, k * nf:(k + 1) * nf], caches[k],
                                                x_shape, F.shape)
            dx += dxk
            grads[f"conv{w}_W"] += dF
            grads[f"conv{w}_b"] += db
        self._input_backward(dx, in_cache, grads)

    # --- bilinear head ----------------------------------------------------------------

    def _block_mask(self) -> np.ndarray | None:
        if self.config.composition != "sum":
            return None
        u = self.config.bilinear_dim
        m = np.zeros((u, u))
        start = 0
        for _, size in self.config.bilinear_blocks:
            m[start:start + size, start:start + size] = 1.0
            start += size
        return m

    def _bilinear_weight(self) -> np.ndarray:
        mask = self._block_mask()
        W = self.params["bilinear"]
        return W if mask is None else W * mask

    def forward(self, batch: PairBatch, rng=None):
        """Returns logits for each pair and a cache for ``backward``. Dropout iff ``rng``."""
        b = len(batch)
        z, e, mask, enc_cache = self._encode_forward(batch.first + batch.second, rng)
        z1, z2 = z[:b], z[b:]
        u1, u2 = [z1], [z2]
        att = None
        if self.config.use_attention:
            m12, a12, c12 = attention_forward(z1, e[b:], mask[b:])
            m21, a21, c21 = attention_forward(z2, e[:b], mask[:b])
            u1.append(m12)
            u2.append(m21)
            att = (c12, c21, a12, a21)
        ctx = None
        if self.config.use_context:
            C, ctx_cache = self._context_forward(batch.contexts, rng)
            c = C[batch.context_index]
            u1.append(c)
            u2.append(c)
            ctx = (ctx_cache, C.shape)
        u1 = np.concatenate(u1, axis=1)
        u2 = np.concatenate(u2, axis=1)
        W = self._bilinear_weight()
        logits = np.einsum("bi,ij,bj->b", u1, W, u2)
        return logits, (b, u1, u2, W, enc_cache, e.shape, att, ctx, batch.context_index)

    def backward(self, dlogits, cache) -> dict[str, np.ndarray]:
        b, u1, u2, W, enc_cache, e_shape, att, ctx, ctx_index = cache
        grads = {k: np.zeros_like(v) for k, v in self.params.items()}
        dW = u1.T @ (dlogits[:, None] * u2)
        mask = self._block_mask()
        grads["bilinear"] += dW if mask is None else dW * mask
        du1 = dlogits[:, None] * (u2 @ W.T)
        du2 = dlogits[:, None] * (u1 @ W)
        s = self.config.sentence_dim
        dz = np.concatenate([du1[:, :s], du2[:, :s]], axis=0)
        de = np.zeros(e_shape)
        offset = s
        if att is not None:
            c12, c21, _, _ = att
            dz1, de2 = attention_backward(du1[:, offset:offset + s], c12)
            dz2, de1 = attention_backward(du2[:, offset:offset + s], c21)
            dz[:b] += dz1
            dz[b:] += dz2
            de[b:] += de2
            de[:b] += de1
            offset += s
        if ctx is not None:
            ctx_cache, c_shape = ctx
            dc = du1[:, offset:] + du2[:, offset:]
            dC = np.zeros(c_shape)
            np.add.at(dC, ctx_index, dc)
            self._context_backward(dC, ctx_cache, grads)
        self._encode_backward(dz, de, enc_cache, grads)
        return grads

    def loss_and_grads(self, batch: PairBatch, labels, rng=None):
        """Mean binary cross-entropy over the batch and its parameter gradients."""
        y = np.asarray(labels, dtype=float)
        logits, cache = self.forward(batch, rng)
        loss = float(np.mean(softplus(logits) - y * logits))
        grads = self.backward((sigmoid(logits) - y) / len(y), cache)
        return loss, grads

    def loss(self, batch: PairBatch, labels) -> float:
        y = np.asarray(labels, dtype=float)
        logits, _ = self.forward(batch)
        return float(np.mean(softplus(logits) - y * logits))

    # --- inference --------------------------------------------------------------------

    def predict(self, batch: PairBatch) -> np.ndarray:
        logits, _ = self.forward(batch)
        return sigmoid(logits)

    def encode_sentence(self, seq, train_mode: bool = False, rng=None):
        """(z, e) for one encoded sentence (ids, or event id tuples in event mode)."""
        seq = list(seq)[:self.config.max_sentence_len]
        if not seq:
            raise ModelError("cannot encode an empty sentence")
        if train_mode and rng is None:
            rng = np.random.default_rng()
        z, e, _, _ = self._encode_forward([seq], rng if train_mode else None)
        return z[0], e[0, :len(seq)]

    def context_vector(self, salad, train_mode: bool = False, rng=None) -> np.ndarray:
        if not self.config.use_context:
            raise ModelError("model has no context reader")
        enc = self.encode_salad(salad)
        self._check_context([enc.context])
        C, _ = self._context_forward([enc.context], rng if train_mode else None)
        return C[0]

    def score_pair(self, i: int, j: int, salad) -> float:
        batch = self.make_batch([(i, j, 0)], [salad])
        return float(self.predict(batch)[0])

    def attention(self, i: int, j: int, salad) -> tuple[np.ndarray, np.ndarray]:
        """(alpha_i->j over tokens of j, alpha_j->i over tokens of i)."""
        if not self.config.use_attention:
            raise ModelError("model has no attention")
        enc = self.encode_salad(salad)
        zi, ei = self.encode_sentence(enc.sentences[i])
        zj, ej = self.encode_sentence(enc.sentences[j])
        _, a_ij = mutual_attention(zi, ej)
        _, a_ji = mutual_attention(zj, ei)
        return a_ij, a_ji

    def probability_matrix(self, salad) -> np.ndarray:
        """P(same | s_i, s_j, salad) for every ordered pair, encoding each sentence once."""
        enc = self.encode_salad(salad)
        n = len(enc.sentences)
        z, e, mask, _ = self._encode_forward(enc.sentences, None)
        s = self.config.sentence_dim
        parts_a = [np.broadcast_to(z[:, None, :], (n, n, s))]
        parts_b = [np.broadcast_to(z[None, :, :], (n, n, s))]
        if self.config.use_attention:
            # m[i, j] = attention of z_i over the tokens of sentence j
            logits = np.einsum("ik,jtk->ijt", z, e)
            logits = np.where(mask[None, :, :], logits, -np.inf)
            logits -= logits.max(axis=2, keepdims=True)
            w = np.exp(logits)
            alpha = w / w.sum(axis=2, keepdims=True)
            m = np.einsum("ijt,jtk->ijk", alpha, e)
            parts_a.append(m)
            parts_b.append(m.transpose(1, 0, 2))
        if self.config.use_context:
            self._check_context([enc.context])
            C, _ = self._context_forward([enc.context], None)
            cb = np.broadcast_to(C[0], (n, n, C.shape[1]))
            parts_a.append(cb)
            parts_b.append(cb)
        ua = np.concatenate(parts_a, axis=2)
        ub = np.concatenate(parts_b, axis=2)
        logits = np.einsum("iju,uv,ijv->ij", ua, self._bilinear_weight(), ub)
        return sigmoid(logits)


def mutual_attention(z1: np.ndarray, e2: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Summary of sentence 2 as seen from sentence 1: (m_1->2, alpha_1->2)."""
    z1 = np.asarray(z1, dtype=float)
    e2 = np.asarray(e2, dtype=float)
    if e2.ndim != 2 or e2.shape[0] == 0 or z1.shape != (e2.shape[1],):
        raise ModelError(f"attention dimension mismatch: z {z1.shape} vs e {e2.shape}")
    m, alpha, _ = attention_forward(z1[None], e2[None], np.ones((1, e2.shape[0]), dtype=bool))
    return m[0], alpha[0]
