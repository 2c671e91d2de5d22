#include "repbench/model.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace repbench {

void ModelConfig::validate() const {
    if (enc_layers < 1) throw std::invalid_argument("model: enc_layers must be >= 1");
    if (dec_layers < 1) throw std::invalid_argument("model: dec_layers must be >= 1");
    if (dim < 1) throw std::invalid_argument("model: dim must be >= 1");
    if (heads < 1) throw std::invalid_argument("model: heads must be >= 1");
    if (dim % heads != 0) throw std::invalid_argument("model: dim must be divisible by heads");
    if (ffn_dim < 1) throw std::invalid_argument("model: ffn_dim must be >= 1");
    if (max_src_len < 1) throw std::invalid_argument("model: max_src_len must be >= 1");
    if (max_tgt_len < 1) throw std::invalid_argument("model: max_tgt_len must be >= 1");
    if (vocab_size < 5) throw std::invalid_argument("model: vocab_size must cover the specials");
    if (dropout_rate < 0.0 || dropout_rate >= 1.0)
        throw std::invalid_argument("model: dropout_rate must lie in [0, 1)");
}

ModelConfig ModelConfig::full_scale_gcd() {
    ModelConfig cfg;
    cfg.enc_layers = 4;
    cfg.dec_layers = 4;
    cfg.dim = 512;
    cfg.heads = 8;
    cfg.ffn_dim = 2048;
    cfg.max_src_len = 8;
    cfg.max_tgt_len = 8;
    return cfg;
}

ModelConfig ModelConfig::full_scale_eigen(int matrix_dim) {
    ModelConfig cfg;
    cfg.enc_layers = 4;
    cfg.dec_layers = 1;
    cfg.dim = 512;
    cfg.heads = 8;
    cfg.ffn_dim = 2048;
    cfg.max_src_len = 3 * matrix_dim * matrix_dim;
    cfg.max_tgt_len = 3 * matrix_dim + 1;
    return cfg;
}

Layout build_layout(const ModelConfig& cfg) {
    cfg.validate();
    Layout ly;
    int d = cfg.dim, f = cfg.ffn_dim, v = cfg.vocab_size;

    auto add = [&](const std::string& name, int rows, int cols, TensorRole role) {
        ly.infos.push_back(TensorInfo{name, rows, cols, role});
        return static_cast<int>(ly.infos.size()) - 1;
    };
    auto add_ln = [&](const std::string& prefix) {
        LnIdx idx;
        idx.g = add(prefix + ".g", 1, d, TensorRole::LnGain);
        idx.b = add(prefix + ".b", 1, d, TensorRole::LnBias);
        return idx;
    };
    auto add_attn = [&](const std::string& prefix) {
        AttnIdx idx;
        idx.wq = add(prefix + ".wq", d, d, TensorRole::Weight);
        idx.bq = add(prefix + ".bq", 1, d, TensorRole::Bias);
        idx.wk = add(prefix + ".wk", d, d, TensorRole::Weight);
        idx.bk = add(prefix + ".bk", 1, d, TensorRole::Bias);
        idx.wv = add(prefix + ".wv", d, d, TensorRole::Weight);
        idx.bv = add(prefix + ".bv", 1, d, TensorRole::Bias);
        idx.wo = add(prefix + ".wo", d, d, TensorRole::Weight);
        idx.bo = add(prefix + ".bo", 1, d, TensorRole::Bias);
        return idx;
    };
    auto add_ffn = [&](const std::string& prefix) {
        FfnIdx idx;
        idx.w1 = add(prefix + ".w1", f, d, TensorRole::Weight);
        idx.b1 = add(prefix + ".b1", 1, f, TensorRole::Bias);
        idx.w2 = add(prefix + ".w2", d, f, TensorRole::Weight);
        idx.b2 = add(prefix + ".b2", 1, d, TensorRole::Bias);
        return idx;
    };

    ly.tok_emb = add("tok_emb", v, d, TensorRole::Embedding);
    ly.src_pos = add("src_pos", cfg.max_src_len, d, TensorRole::Embedding);
    ly.tgt_pos = add("tgt_pos", cfg.max_tgt_len, d, TensorRole::Embedding);

    for (int l = 0; l < cfg.enc_layers; ++l) {
        std::string p = "enc." + std::to_string(l);
        EncLayerIdx layer;
        layer.ln1 = add_ln(p + ".ln1");
        layer.attn = add_attn(p + ".attn");
        layer.ln2 = add_ln(p + ".ln2");
        layer.ffn = add_ffn(p + ".ffn");
        ly.enc.push_back(layer);
    }
    for (int l = 0; l < cfg.dec_layers; ++l) {
        std::string p = "dec." + std::to_string(l);
        DecLayerIdx layer;
        layer.ln1 = add_ln(p + ".ln1");
        layer.self_attn = add_attn(p + ".self");
        layer.ln2 = add_ln(p + ".ln2");
        layer.cross_attn = add_attn(p + ".cross");
        layer.ln3 = add_ln(p + ".ln3");
        layer.ffn = add_ffn(p + ".ffn");
        ly.dec.push_back(layer);
    }
    ly.enc_ln = add_ln("enc_ln");
    ly.dec_ln = add_ln("dec_ln");
    ly.out_w = add("out.w", v, d, TensorRole::Weight);
    ly.out_b = add("out.b", 1, v, TensorRole::Bias);
    return ly;
}

int64_t parameter_count(const ModelConfig& cfg) {
    Layout ly = build_layout(cfg);
    int64_t n = 0;
    for (const auto& t : ly.infos) n += static_cast<int64_t>(t.rows) * t.cols;
    return n;
}

template <typename T>
ModelState<T> init_model(const ModelConfig& cfg, uint64_t seed) {
    cfg.validate();
    ModelState<T> state;
    state.config = cfg;
    state.layout = build_layout(cfg);
    state.tensors.reserve(state.layout.infos.size());

    Rng rng(derive_seed(seed, 0x494e4954));
    double emb_std = 1.0 / std::sqrt(static_cast<double>(cfg.dim));
    for (const auto& info : state.layout.infos) {
        Mat<T> m(info.rows, info.cols);
        switch (info.role) {
            case TensorRole::Embedding:
                for (int i = 0; i < info.rows; ++i)
                    for (int j = 0; j < info.cols; ++j) m(i, j) = static_cast<T>(rng.normal(0.0, emb_std));
                break;
            case TensorRole::Weight: {
                double bound = std::sqrt(6.0 / (info.rows + info.cols));
                for (int i = 0; i < info.rows; ++i)
                    for (int j = 0; j < info.cols; ++j)
                        m(i, j) = static_cast<T>((rng.uniform() * 2.0 - 1.0) * bound);
                break;
            }
            case TensorRole::Bias:
            case TensorRole::LnBias: m.setZero(); break;
            case TensorRole::LnGain: m.setOnes(); break;
        }
        state.tensors.push_back(std::move(m));
    }
    return state;
}

template <typename T>
std::vector<Mat<T>> zero_grads(const ModelState<T>& state) {
    std::vector<Mat<T>> grads;
    grads.reserve(state.tensors.size());
    for (const auto& t : state.tensors) grads.push_back(Mat<T>::Zero(t.rows(), t.cols()));
    return grads;
}

TokenBatch make_token_batch(const std::vector<TokenSeq>& srcs, const std::vector<TokenSeq>& tgts) {
    if (srcs.empty() || srcs.size() != tgts.size())
        throw std::invalid_argument("batch: sources and targets must be nonempty and aligned");
    TokenBatch b;
    b.batch = static_cast<int>(srcs.size());
    for (const auto& s : srcs) b.src_len = std::max(b.src_len, static_cast<int>(s.size()));
    for (const auto& t : tgts) b.tgt_len = std::max(b.tgt_len, static_cast<int>(t.size()));
    if (b.src_len == 0 || b.tgt_len == 0) throw std::invalid_argument("batch: empty sequence");
    b.src.assign(static_cast<size_t>(b.batch) * b.src_len, vocab::PAD);
    b.dec_in.assign(static_cast<size_t>(b.batch) * b.tgt_len, vocab::PAD);
    b.targets.assign(static_cast<size_t>(b.batch) * b.tgt_len, vocab::PAD);
    b.src_lens.resize(b.batch);
    b.tgt_lens.resize(b.batch);
    for (int i = 0; i < b.batch; ++i) {
        const auto& s = srcs[i];
        const auto& t = tgts[i];
        b.src_lens[i] = static_cast<int>(s.size());
        b.tgt_lens[i] = static_cast<int>(t.size());
        for (size_t j = 0; j < s.size(); ++j) b.src[static_cast<size_t>(i) * b.src_len + j] = s[j];
        b.dec_in[static_cast<size_t>(i) * b.tgt_len] = vocab::BOS;
        for (size_t j = 0; j + 1 < t.size(); ++j)
            b.dec_in[static_cast<size_t>(i) * b.tgt_len + j + 1] = t[j];
        for (size_t j = 0; j < t.size(); ++j) b.targets[static_cast<size_t>(i) * b.tgt_len + j] = t[j];
    }
    return b;
}

// --- Transformer -------------------------------------------------------------

namespace {
constexpr double kLnEps = 1e-5;
}

template <typename T>
Transformer<T>::Transformer(ModelConfig cfg) : cfg_(cfg) {
    cfg_.validate();
}

template <typename T>
void Transformer<T>::check_tokens(const std::vector<int32_t>& tokens) const {
    for (int32_t id : tokens)
        if (id < 0 || id >= cfg_.vocab_size)
            throw std::invalid_argument("model: token id out of vocabulary");
}

template <typename T>
Mat<T> Transformer<T>::embed(const ModelState<T>& s, const std::vector<int32_t>& tokens, int rows,
                             int len, int emb_idx, int pos_idx) const {
    const Mat<T>& tok = s.tensors[emb_idx];
    const Mat<T>& pos = s.tensors[pos_idx];
    Mat<T> x(rows, cfg_.dim);
    for (int r = 0; r < rows; ++r) x.row(r) = tok.row(tokens[r]) + pos.row(r % len);
    return x;
}

template <typename T>
Mat<T> Transformer<T>::layer_norm(const ModelState<T>& s, const Mat<T>& x, const LnIdx& idx,
                                  LnCache* cache) const {
    const auto& g = s.tensors[idx.g];
    const auto& b = s.tensors[idx.b];
    int n = static_cast<int>(x.rows()), d = static_cast<int>(x.cols());
    Mat<T> xhat(n, d), y(n, d);
    std::vector<T> rstd(n);
    for (int r = 0; r < n; ++r) {
        T mu = x.row(r).mean();
        T var = (x.row(r).array() - mu).square().mean();
        T rs = static_cast<T>(1.0 / std::sqrt(static_cast<double>(var) + kLnEps));
        rstd[r] = rs;
        xhat.row(r) = (x.row(r).array() - mu) * rs;
        y.row(r) = xhat.row(r).cwiseProduct(g.row(0)) + b.row(0);
    }
    if (cache) {
        cache->xhat = std::move(xhat);
        cache->rstd = std::move(rstd);
    }
    return y;
}

template <typename T>
void Transformer<T>::layer_norm_backward(const ModelState<T>& s, const LnIdx& idx, const LnCache& cache,
                                         const Mat<T>& dy, Mat<T>& dx, std::vector<Mat<T>>& grads) const {
    const auto& g = s.tensors[idx.g];
    int n = static_cast<int>(dy.rows()), d = static_cast<int>(dy.cols());
    dx.resize(n, d);
    Mat<T> dxhat(1, d);
    for (int r = 0; r < n; ++r) {
        grads[idx.g].row(0) += dy.row(r).cwiseProduct(cache.xhat.row(r));
        grads[idx.b].row(0) += dy.row(r);
        dxhat = dy.row(r).cwiseProduct(g.row(0));
        T m1 = dxhat.mean();
        T m2 = dxhat.row(0).cwiseProduct(cache.xhat.row(r)).mean();
        dx.row(r) = (dxhat.row(0).array() - m1 - cache.xhat.row(r).array() * m2) * cache.rstd[r];
    }
}

template <typename T>
Mat<T> Transformer<T>::linear(const ModelState<T>& s, const Mat<T>& x, int w, int b) const {
    Mat<T> y(x.rows(), s.tensors[w].rows());
    y.noalias() = x * s.tensors[w].transpose();
    if (b >= 0) y.rowwise() += s.tensors[b].row(0);
    return y;
}

template <typename T>
void Transformer<T>::linear_backward(const ModelState<T>& s, const Mat<T>& x, int w, int b,
                                     const Mat<T>& dy, Mat<T>* dx, std::vector<Mat<T>>& grads) const {
    grads[w].noalias() += dy.transpose() * x;
    if (b >= 0) grads[b].row(0) += dy.colwise().sum();
    if (dx) {
        dx->resize(x.rows(), x.cols());
        dx->noalias() = dy * s.tensors[w];
    }
}

template <typename T>
Mat<T> Transformer<T>::attention(const ModelState<T>& s, const AttnIdx& idx, const Mat<T>& q_in,
                                 int batch, int len_q, const Mat<T>& kv_in, int len_k,
                                 const std::vector<int>& key_lens, bool causal, AttnCache* cache) const {
    const int dh = cfg_.head_dim();
    const T alpha = static_cast<T>(1.0 / std::sqrt(static_cast<double>(dh)));
    const T neg_inf = -std::numeric_limits<T>::infinity();

    Mat<T> q = linear(s, q_in, idx.wq, idx.bq);
    Mat<T> k = linear(s, kv_in, idx.wk, idx.bk);
    Mat<T> v = linear(s, kv_in, idx.wv, idx.bv);
    Mat<T> ctx(q.rows(), cfg_.dim);
    Mat<T> probs(static_cast<int64_t>(batch) * cfg_.heads * len_q, len_k);

    for (int b = 0; b < batch; ++b) {
        int klen = key_lens.empty() ? len_k : key_lens[b];
        for (int h = 0; h < cfg_.heads; ++h) {
            auto qb = q.block(b * len_q, h * dh, len_q, dh);
            auto kb = k.block(b * len_k, h * dh, len_k, dh);
            auto vb = v.block(b * len_k, h * dh, len_k, dh);
            Mat<T> scores(len_q, len_k);
            scores.noalias() = qb * kb.transpose();
            scores *= alpha;
            for (int j = klen; j < len_k; ++j) scores.col(j).setConstant(neg_inf);
            if (causal)
                for (int i = 0; i < len_q; ++i)
                    for (int j = i + 1; j < len_k; ++j) scores(i, j) = neg_inf;
            for (int i = 0; i < len_q; ++i) {
                T m = scores.row(i).maxCoeff();
                scores.row(i) = (scores.row(i).array() - m).exp();
                scores.row(i) /= scores.row(i).sum();
            }
            probs.block((static_cast<int64_t>(b) * cfg_.heads + h) * len_q, 0, len_q, len_k) = scores;
            ctx.block(b * len_q, h * dh, len_q, dh).noalias() = scores * vb;
        }
    }

    Mat<T> out = linear(s, ctx, idx.wo, idx.bo);
    if (cache) {
        cache->in_q = q_in;
        cache->in_kv = kv_in;
        cache->q = std::move(q);
        cache->k = std::move(k);
        cache->v = std::move(v);
        cache->ctx = std::move(ctx);
        cache->probs = std::move(probs);
    }
    return out;
}

template <typename T>
void Transformer<T>::attention_backward(const ModelState<T>& s, const AttnIdx& idx,
                                        const AttnCache& cache, int batch, int len_q, int len_k,
                                        const Mat<T>& dout, Mat<T>& dq_in, Mat<T>* dkv_in,
                                        std::vector<Mat<T>>& grads) const {
    const int dh = cfg_.head_dim();
    const T alpha = static_cast<T>(1.0 / std::sqrt(static_cast<double>(dh)));

    Mat<T> dctx;
    linear_backward(s, cache.ctx, idx.wo, idx.bo, dout, &dctx, grads);

    Mat<T> dq = Mat<T>::Zero(cache.q.rows(), cache.q.cols());
    Mat<T> dk = Mat<T>::Zero(cache.k.rows(), cache.k.cols());
    Mat<T> dv = Mat<T>::Zero(cache.v.rows(), cache.v.cols());

    for (int b = 0; b < batch; ++b) {
        for (int h = 0; h < cfg_.heads; ++h) {
            auto p = cache.probs.block((static_cast<int64_t>(b) * cfg_.heads + h) * len_q, 0, len_q, len_k);
            auto dctx_b = dctx.block(b * len_q, h * dh, len_q, dh);
            auto qb = cache.q.block(b * len_q, h * dh, len_q, dh);
            auto kb = cache.k.block(b * len_k, h * dh, len_k, dh);
            auto vb = cache.v.block(b * len_k, h * dh, len_k, dh);

            Mat<T> dp(len_q, len_k);
            dp.noalias() = dctx_b * vb.transpose();
            dv.block(b * len_k, h * dh, len_k, dh).noalias() += p.transpose() * dctx_b;

            // softmax rows: ds = p .* (dp - rowsum(dp .* p))
            Mat<T> ds(len_q, len_k);
            for (int i = 0; i < len_q; ++i) {
                T dot = dp.row(i).cwiseProduct(p.row(i)).sum();
                ds.row(i) = (p.row(i).array() * (dp.row(i).array() - dot)).matrix();
            }
            ds *= alpha;

            dq.block(b * len_q, h * dh, len_q, dh).noalias() += ds * kb;
            dk.block(b * len_k, h * dh, len_k, dh).noalias() += ds.transpose() * qb;
        }
    }

    Mat<T> dq_proj, dk_proj, dv_proj;
    linear_backward(s, cache.in_q, idx.wq, idx.bq, dq, &dq_proj, grads);
    linear_backward(s, cache.in_kv, idx.wk, idx.bk, dk, &dk_proj, grads);
    linear_backward(s, cache.in_kv, idx.wv, idx.bv, dv, &dv_proj, grads);

    if (cache.kv_external) {
        dq_in = std::move(dq_proj);
        *dkv_in += dk_proj + dv_proj;
    } else {
        dq_in = dq_proj + dk_proj + dv_proj;
    }
}

template <typename T>
Mat<T> Transformer<T>::ffn(const ModelState<T>& s, const Mat<T>& x, const FfnIdx& idx, bool train,
                           Rng* dropout_rng, FfnCache* cache) const {
    Mat<T> pre = linear(s, x, idx.w1, idx.b1);
    Mat<T> h = pre.cwiseMax(static_cast<T>(0));
    bool dropout = train && cfg_.dropout_rate > 0.0;
    Mat<T> mask;
    if (dropout) {
        if (!dropout_rng) throw std::invalid_argument("model: dropout requires an rng in train mode");
        T keep_scale = static_cast<T>(1.0 / (1.0 - cfg_.dropout_rate));
        mask.resize(h.rows(), h.cols());
        for (int i = 0; i < h.rows(); ++i)
            for (int j = 0; j < h.cols(); ++j)
                mask(i, j) = dropout_rng->uniform() >= cfg_.dropout_rate ? keep_scale : static_cast<T>(0);
        h = h.cwiseProduct(mask);
    }
    Mat<T> y = linear(s, h, idx.w2, idx.b2);
    if (cache) {
        cache->in = x;
        cache->pre = std::move(pre);
        cache->dropped = std::move(h);
        cache->drop_mask = std::move(mask);
        cache->dropout = dropout;
    }
    return y;
}

template <typename T>
void Transformer<T>::ffn_backward(const ModelState<T>& s, const FfnIdx& idx, const FfnCache& cache,
                                  const Mat<T>& dy, Mat<T>& dx, std::vector<Mat<T>>& grads) const {
    Mat<T> dh;
    linear_backward(s, cache.dropped, idx.w2, idx.b2, dy, &dh, grads);
    if (cache.dropout) dh = dh.cwiseProduct(cache.drop_mask);
    Mat<T> dpre = dh.cwiseProduct((cache.pre.array() > static_cast<T>(0)).template cast<T>().matrix());
    linear_backward(s, cache.in, idx.w1, idx.b1, dpre, &dx, grads);
}

template <typename T>
Mat<T> Transformer<T>::encode(const ModelState<T>& s, const std::vector<int32_t>& src, int batch,
                              int src_len, const std::vector<int>& src_lens, bool train, Rng* rng,
                              Activations* acts) const {
    int rows = batch * src_len;
    Mat<T> x = embed(s, src, rows, src_len, s.layout.tok_emb, s.layout.src_pos);
    if (acts) acts->enc.resize(cfg_.enc_layers);
    for (int l = 0; l < cfg_.enc_layers; ++l) {
        const auto& ly = s.layout.enc[l];
        EncCache* c = acts ? &acts->enc[l] : nullptr;
        Mat<T> a = layer_norm(s, x, ly.ln1, c ? &c->ln1 : nullptr);
        x += attention(s, ly.attn, a, batch, src_len, a, src_len, src_lens, false,
                       c ? &c->attn : nullptr);
        Mat<T> f = layer_norm(s, x, ly.ln2, c ? &c->ln2 : nullptr);
        x += ffn(s, f, ly.ffn, train, rng, c ? &c->ffn : nullptr);
    }
    Mat<T> out = layer_norm(s, x, s.layout.enc_ln, acts ? &acts->enc_final : nullptr);
    return out;
}

template <typename T>
Mat<T> Transformer<T>::decode(const ModelState<T>& s, const std::vector<int32_t>& dec_in, int batch,
                              int tgt_len, const Mat<T>& enc_out, int src_len,
                              const std::vector<int>& src_lens, bool train, Rng* rng,
                              Activations* acts) const {
    int rows = batch * tgt_len;
    Mat<T> y = embed(s, dec_in, rows, tgt_len, s.layout.tok_emb, s.layout.tgt_pos);
    if (acts) acts->dec.resize(cfg_.dec_layers);
    std::vector<int> full_lens; // causal self-attention needs no key mask
    for (int l = 0; l < cfg_.dec_layers; ++l) {
        const auto& ly = s.layout.dec[l];
        DecCache* c = acts ? &acts->dec[l] : nullptr;
        Mat<T> a = layer_norm(s, y, ly.ln1, c ? &c->ln1 : nullptr);
        y += attention(s, ly.self_attn, a, batch, tgt_len, a, tgt_len, full_lens, true,
                       c ? &c->self_attn : nullptr);
        Mat<T> q = layer_norm(s, y, ly.ln2, c ? &c->ln2 : nullptr);
        Mat<T> cross = attention(s, ly.cross_attn, q, batch, tgt_len, enc_out, src_len, src_lens,
                                 false, c ? &c->cross_attn : nullptr);
        if (c) c->cross_attn.kv_external = true;
        y += cross;
        Mat<T> f = layer_norm(s, y, ly.ln3, c ? &c->ln3 : nullptr);
        y += ffn(s, f, ly.ffn, train, rng, c ? &c->ffn : nullptr);
    }
    Mat<T> out = layer_norm(s, y, s.layout.dec_ln, acts ? &acts->dec_final : nullptr);
    return out;
}

template <typename T>
double Transformer<T>::loss(const ModelState<T>& state, const TokenBatch& batch,
                            std::vector<Mat<T>>* grads, Rng* dropout_rng) {
    if (batch.batch < 1) throw std::invalid_argument("batch: empty");
    if (batch.src_len > cfg_.max_src_len) throw std::invalid_argument("batch: src_len exceeds max_src_len");
    if (batch.tgt_len > cfg_.max_tgt_len) throw std::invalid_argument("batch: tgt_len exceeds max_tgt_len");
    check_tokens(batch.src);
    check_tokens(batch.dec_in);
    bool train = grads != nullptr;
    if (train && grads->size() != state.tensors.size())
        throw std::invalid_argument("grads: shape mismatch with model state");

    Activations acts;
    Mat<T> enc_out = encode(state, batch.src, batch.batch, batch.src_len, batch.src_lens, train,
                            dropout_rng, &acts);
    Mat<T> dec_out = decode(state, batch.dec_in, batch.batch, batch.tgt_len, enc_out, batch.src_len,
                            batch.src_lens, train, dropout_rng, &acts);
    Mat<T> logits = linear(state, dec_out, state.layout.out_w, state.layout.out_b);

    int rows = batch.batch * batch.tgt_len;
    int n_valid = 0;
    for (int r = 0; r < rows; ++r)
        if (batch.targets[r] != vocab::PAD) ++n_valid;
    if (n_valid == 0) throw std::invalid_argument("batch: no valid target positions");

    double loss_sum = 0.0;
    Mat<T> dlogits;
    if (train) dlogits = Mat<T>::Zero(rows, cfg_.vocab_size);
    for (int r = 0; r < rows; ++r) {
        int32_t target = batch.targets[r];
        if (target == vocab::PAD) continue;
        T m = logits.row(r).maxCoeff();
        Eigen::Array<T, 1, Eigen::Dynamic> ex = (logits.row(r).array() - m).exp();
        double sum = static_cast<double>(ex.sum());
        loss_sum -= static_cast<double>(logits(r, target) - m) - std::log(sum);
        if (train) {
            dlogits.row(r) = (ex / static_cast<T>(sum)).matrix() / static_cast<T>(n_valid);
            dlogits(r, target) -= static_cast<T>(1.0) / static_cast<T>(n_valid);
        }
    }
    double mean_loss = loss_sum / n_valid;
    if (!train) return mean_loss;

    auto& g = *grads;
    Mat<T> d_dec_out;
    linear_backward(state, dec_out, state.layout.out_w, state.layout.out_b, dlogits, &d_dec_out, g);

    Mat<T> dy;
    layer_norm_backward(state, state.layout.dec_ln, acts.dec_final, d_dec_out, dy, g);

    Mat<T> d_enc_out = Mat<T>::Zero(enc_out.rows(), enc_out.cols());
    for (int l = cfg_.dec_layers - 1; l >= 0; --l) {
        const auto& ly = state.layout.dec[l];
        DecCache& c = acts.dec[l];
        Mat<T> tmp, tmp2;
        ffn_backward(state, ly.ffn, c.ffn, dy, tmp, g);
        layer_norm_backward(state, ly.ln3, c.ln3, tmp, tmp2, g);
        dy += tmp2;
        attention_backward(state, ly.cross_attn, c.cross_attn, batch.batch, batch.tgt_len,
                           batch.src_len, dy, tmp, &d_enc_out, g);
        layer_norm_backward(state, ly.ln2, c.ln2, tmp, tmp2, g);
        dy += tmp2;
        attention_backward(state, ly.self_attn, c.self_attn, batch.batch, batch.tgt_len,
                           batch.tgt_len, dy, tmp, nullptr, g);
        layer_norm_backward(state, ly.ln1, c.ln1, tmp, tmp2, g);
        dy += tmp2;
    }
    // decoder embeddings
    for (int r = 0; r < rows; ++r) {
        g[state.layout.tok_emb].row(batch.dec_in[r]) += dy.row(r);
        g[state.layout.tgt_pos].row(r % batch.tgt_len) += dy.row(r);
    }

    Mat<T> dx;
    layer_norm_backward(state, state.layout.enc_ln, acts.enc_final, d_enc_out, dx, g);
    for (int l = cfg_.enc_layers - 1; l >= 0; --l) {
        const auto& ly = state.layout.enc[l];
        EncCache& c = acts.enc[l];
        Mat<T> tmp, tmp2;
        ffn_backward(state, ly.ffn, c.ffn, dx, tmp, g);
        layer_norm_backward(state, ly.ln2, c.ln2, tmp, tmp2, g);
        dx += tmp2;
        attention_backward(state, ly.attn, c.attn, batch.batch, batch.src_len, batch.src_len, dx,
                           tmp, nullptr, g);
        layer_norm_backward(state, ly.ln1, c.ln1, tmp, tmp2, g);
        dx += tmp2;
    }
    int src_rows = batch.batch * batch.src_len;
    for (int r = 0; r < src_rows; ++r) {
        g[state.layout.tok_emb].row(batch.src[r]) += dx.row(r);
        g[state.layout.src_pos].row(r % batch.src_len) += dx.row(r);
    }
    return mean_loss;
}

template <typename T>
Mat<T> Transformer<T>::forward(const ModelState<T>& state, const TokenSeq& src,
                               const TokenSeq& tgt_prefix, bool train, Rng* dropout_rng) {
    if (src.empty() || tgt_prefix.empty()) throw std::invalid_argument("forward: empty sequence");
    if (static_cast<int>(src.size()) > cfg_.max_src_len)
        throw std::invalid_argument("forward: src exceeds max_src_len");
    if (static_cast<int>(tgt_prefix.size()) > cfg_.max_tgt_len)
        throw std::invalid_argument("forward: tgt_prefix exceeds max_tgt_len");
    check_tokens(src);
    check_tokens(tgt_prefix);
    std::vector<int> src_lens{static_cast<int>(src.size())};
    Mat<T> enc_out = encode(state, src, 1, static_cast<int>(src.size()), src_lens, train,
                            dropout_rng, nullptr);
    Mat<T> dec_out = decode(state, tgt_prefix, 1, static_cast<int>(tgt_prefix.size()), enc_out,
                            static_cast<int>(src.size()), src_lens, train, dropout_rng, nullptr);
    return linear(state, dec_out, state.layout.out_w, state.layout.out_b);
}

template <typename T>
TokenSeq Transformer<T>::greedy_decode(const ModelState<T>& state, const TokenSeq& src, int max_len) {
    auto out = greedy_decode_batch(state, {src}, max_len);
    return out[0];
}

template <typename T>
std::vector<TokenSeq> Transformer<T>::greedy_decode_batch(const ModelState<T>& state,
                                                          const std::vector<TokenSeq>& srcs,
                                                          int max_len) {
    int batch = static_cast<int>(srcs.size());
    if (batch == 0) return {};
    max_len = std::min(max_len, cfg_.max_tgt_len);
    int src_len = 0;
    for (const auto& s : srcs) src_len = std::max(src_len, static_cast<int>(s.size()));
    if (src_len > cfg_.max_src_len) throw std::invalid_argument("decode: src exceeds max_src_len");
    std::vector<int32_t> src(static_cast<size_t>(batch) * src_len, vocab::PAD);
    std::vector<int> src_lens(batch);
    for (int i = 0; i < batch; ++i) {
        check_tokens(srcs[i]);
        src_lens[i] = static_cast<int>(srcs[i].size());
        for (size_t j = 0; j < srcs[i].size(); ++j) src[static_cast<size_t>(i) * src_len + j] = srcs[i][j];
    }

    Mat<T> enc_out = encode(state, src, batch, src_len, src_lens, false, nullptr, nullptr);

    std::vector<TokenSeq> out(batch);
    std::vector<bool> done(batch, false);
    std::vector<int32_t> dec_in(static_cast<size_t>(batch), vocab::BOS);
    int cur_len = 1;
    for (int step = 0; step < max_len; ++step) {
        Mat<T> dec_out = decode(state, dec_in, batch, cur_len, enc_out, src_len, src_lens, false,
                                nullptr, nullptr);
        bool all_done = true;
        std::vector<int32_t> next(batch, vocab::EOS);
        for (int b = 0; b < batch; ++b) {
            if (done[b]) continue;
            Mat<T> logits = linear(state, Mat<T>(dec_out.row((b + 1) * cur_len - 1)),
                                   state.layout.out_w, state.layout.out_b);
            Eigen::Index arg = 0;
            logits.row(0).maxCoeff(&arg);
            next[b] = static_cast<int32_t>(arg);
            out[b].push_back(next[b]);
            if (next[b] == vocab::EOS) done[b] = true;
            if (!done[b]) all_done = false;
        }
        if (all_done || cur_len >= cfg_.max_tgt_len || step + 1 >= max_len) break;
        // grow every row by its next token (EOS for finished rows)
        std::vector<int32_t> grown(static_cast<size_t>(batch) * (cur_len + 1));
        for (int b = 0; b < batch; ++b) {
            for (int j = 0; j < cur_len; ++j)
                grown[static_cast<size_t>(b) * (cur_len + 1) + j] = dec_in[static_cast<size_t>(b) * cur_len + j];
            grown[static_cast<size_t>(b) * (cur_len + 1) + cur_len] = next[b];
        }
        dec_in = std::move(grown);
        ++cur_len;
    }
    return out;
}

template class Transformer<float>;
template class Transformer<double>;
template ModelState<float> init_model<float>(const ModelConfig&, uint64_t);
template ModelState<double> init_model<double>(const ModelConfig&, uint64_t);
template std::vector<Mat<float>> zero_grads<float>(const ModelState<float>&);
template std::vector<Mat<double>> zero_grads<double>(const ModelState<double>&);

} // namespace repbench
