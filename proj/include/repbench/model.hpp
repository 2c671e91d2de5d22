#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "repbench/rng.hpp"
#include "repbench/tokenizer.hpp"

namespace repbench {

template <typename T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct ModelConfig {
    int enc_layers = 4;
    int dec_layers = 4;
    int dim = 512;
    int heads = 8;
    int ffn_dim = 2048;
    int max_src_len = 8;
    int max_tgt_len = 8;
    int vocab_size = vocab::kSize;
    double dropout_rate = 0.0;

    int head_dim() const { return dim / heads; }
    void validate() const; // throws std::invalid_argument naming the bad field

    // Full-scale preset shapes; desk runs shrink dim and layers.
    static ModelConfig full_scale_gcd();
    static ModelConfig full_scale_eigen(int matrix_dim);
};

enum class TensorRole { Embedding, Weight, Bias, LnGain, LnBias };

struct TensorInfo {
    std::string name;
    int rows = 0, cols = 0;
    TensorRole role = TensorRole::Weight;
};

// Per-tensor indices into ModelState::tensors.
struct LnIdx {
    int g = -1, b = -1;
};
struct AttnIdx {
    int wq = -1, bq = -1, wk = -1, bk = -1, wv = -1, bv = -1, wo = -1, bo = -1;
};
struct FfnIdx {
    int w1 = -1, b1 = -1, w2 = -1, b2 = -1;
};
struct EncLayerIdx {
    LnIdx ln1;
    AttnIdx attn;
    LnIdx ln2;
    FfnIdx ffn;
};
struct DecLayerIdx {
    LnIdx ln1;
    AttnIdx self_attn;
    LnIdx ln2;
    AttnIdx cross_attn;
    LnIdx ln3;
    FfnIdx ffn;
};

struct Layout {
    int tok_emb = -1, src_pos = -1, tgt_pos = -1;
    std::vector<EncLayerIdx> enc;
    std::vector<DecLayerIdx> dec;
    LnIdx enc_ln, dec_ln;
    int out_w = -1, out_b = -1;
    std::vector<TensorInfo> infos;
};

Layout build_layout(const ModelConfig& cfg);
int64_t parameter_count(const ModelConfig& cfg);

template <typename T>
struct ModelState {
    ModelConfig config;
    Layout layout;
    std::vector<Mat<T>> tensors;

    int64_t parameter_count() const {
        int64_t n = 0;
        for (const auto& t : tensors) n += t.size();
        return n;
    }
};

// Xavier-uniform weights, dim^-0.5 normal embeddings; deterministic in seed.
template <typename T>
ModelState<T> init_model(const ModelConfig& cfg, uint64_t seed);

template <typename T>
std::vector<Mat<T>> zero_grads(const ModelState<T>& state);

// Padded batch of teacher-forced sequences. Decoder rows are BOS + target
// shifted right; padding is always a tail suffix.
struct TokenBatch {
    int batch = 0, src_len = 0, tgt_len = 0;
    std::vector<int32_t> src;     // batch*src_len
    std::vector<int32_t> dec_in;  // batch*tgt_len
    std::vector<int32_t> targets; // batch*tgt_len, PAD past each sequence end
    std::vector<int> src_lens, tgt_lens;
};

TokenBatch make_token_batch(const std::vector<TokenSeq>& srcs, const std::vector<TokenSeq>& tgts);

template <typename T>
class Transformer {
public:
    explicit Transformer(ModelConfig cfg);

    // Teacher-forced mean cross-entropy over non-PAD target positions.
    // grads != nullptr turns on train mode (exact backprop + dropout).
    double loss(const ModelState<T>& state, const TokenBatch& batch, std::vector<Mat<T>>* grads,
                Rng* dropout_rng = nullptr);

    // Logits for every position of tgt_prefix given src (single sequence).
    Mat<T> forward(const ModelState<T>& state, const TokenSeq& src, const TokenSeq& tgt_prefix,
                   bool train = false, Rng* dropout_rng = nullptr);

    TokenSeq greedy_decode(const ModelState<T>& state, const TokenSeq& src, int max_len);
    std::vector<TokenSeq> greedy_decode_batch(const ModelState<T>& state,
                                              const std::vector<TokenSeq>& srcs, int max_len);

    const ModelConfig& config() const { return cfg_; }

private:
    struct LnCache {
        Mat<T> xhat;
        std::vector<T> rstd;
    };
    struct AttnCache {
        Mat<T> in_q, in_kv; // normalized inputs fed to the projections
        Mat<T> q, k, v, ctx;
        Mat<T> probs; // (rows_q * heads) x len_k stacked per (b, h)
        bool kv_external = false;
    };
    struct FfnCache {
        Mat<T> in, pre, dropped;
        Mat<T> drop_mask;
        bool dropout = false;
    };
    struct EncCache {
        LnCache ln1, ln2;
        AttnCache attn;
        FfnCache ffn;
    };
    struct DecCache {
        LnCache ln1, ln2, ln3;
        AttnCache self_attn, cross_attn;
        FfnCache ffn;
    };
    struct Activations {
        std::vector<EncCache> enc;
        std::vector<DecCache> dec;
        LnCache enc_final, dec_final;
    };

    Mat<T> embed(const ModelState<T>& s, const std::vector<int32_t>& tokens, int rows, int len,
                 int emb_idx, int pos_idx) const;
    Mat<T> layer_norm(const ModelState<T>& s, const Mat<T>& x, const LnIdx& idx, LnCache* cache) const;
    void layer_norm_backward(const ModelState<T>& s, const LnIdx& idx, const LnCache& cache,
                             const Mat<T>& dy, Mat<T>& dx, std::vector<Mat<T>>& grads) const;
    Mat<T> linear(const ModelState<T>& s, const Mat<T>& x, int w, int b) const;
    void linear_backward(const ModelState<T>& s, const Mat<T>& x, int w, int b, const Mat<T>& dy,
                         Mat<T>* dx, std::vector<Mat<T>>& grads) const;
    Mat<T> attention(const ModelState<T>& s, const AttnIdx& idx, const Mat<T>& q_in, int batch,
                     int len_q, const Mat<T>& kv_in, int len_k, const std::vector<int>& key_lens,
                     bool causal, AttnCache* cache) const;
    void attention_backward(const ModelState<T>& s, const AttnIdx& idx, const AttnCache& cache,
                            int batch, int len_q, int len_k, const Mat<T>& dout, Mat<T>& dq_in,
                            Mat<T>* dkv_in, std::vector<Mat<T>>& grads) const;
    Mat<T> ffn(const ModelState<T>& s, const Mat<T>& x, const FfnIdx& idx, bool train,
               Rng* dropout_rng, FfnCache* cache) const;
    void ffn_backward(const ModelState<T>& s, const FfnIdx& idx, const FfnCache& cache,
                      const Mat<T>& dy, Mat<T>& dx, std::vector<Mat<T>>& grads) const;

    Mat<T> encode(const ModelState<T>& s, const std::vector<int32_t>& src, int batch, int src_len,
                  const std::vector<int>& src_lens, bool train, Rng* rng, Activations* acts) const;
    Mat<T> decode(const ModelState<T>& s, const std::vector<int32_t>& dec_in, int batch, int tgt_len,
                  const Mat<T>& enc_out, int src_len, const std::vector<int>& src_lens, bool train,
                  Rng* rng, Activations* acts) const;

    void check_tokens(const std::vector<int32_t>& tokens) const;

    ModelConfig cfg_;
};

extern template class Transformer<float>;
extern template class Transformer<double>;
extern template ModelState<float> init_model<float>(const ModelConfig&, uint64_t);
extern template ModelState<double> init_model<double>(const ModelConfig&, uint64_t);
extern template std::vector<Mat<float>> zero_grads<float>(const ModelState<float>&);
extern template std::vector<Mat<double>> zero_grads<double>(const ModelState<double>&);

} // namespace repbench
