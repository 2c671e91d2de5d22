#include "repbench/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

namespace repbench {

namespace {

constexpr uint32_t kMagic = 0x5242434b; // "RBCK"
constexpr uint32_t kVersion = 1;

template <typename T>
void put(std::ostream& os, const T& v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& is) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is) throw std::runtime_error("checkpoint: truncated file");
    return v;
}

void put_string(std::ostream& os, const std::string& s) {
    put<uint32_t>(os, static_cast<uint32_t>(s.size()));
    os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string get_string(std::istream& is) {
    auto len = get<uint32_t>(is);
    std::string s(len, '\0');
    is.read(s.data(), len);
    if (!is) throw std::runtime_error("checkpoint: truncated string");
    return s;
}

void put_tensor_data(std::ostream& os, const Mat<float>& m) {
    os.write(reinterpret_cast<const char*>(m.data()),
             static_cast<std::streamsize>(sizeof(float) * m.size()));
}

void get_tensor_data(std::istream& is, Mat<float>& m) {
    is.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(sizeof(float) * m.size()));
    if (!is) throw std::runtime_error("checkpoint: truncated tensor data");
}

void put_config(std::ostream& os, const ModelConfig& cfg) {
    put<int32_t>(os, cfg.enc_layers);
    put<int32_t>(os, cfg.dec_layers);
    put<int32_t>(os, cfg.dim);
    put<int32_t>(os, cfg.heads);
    put<int32_t>(os, cfg.ffn_dim);
    put<int32_t>(os, cfg.max_src_len);
    put<int32_t>(os, cfg.max_tgt_len);
    put<int32_t>(os, cfg.vocab_size);
    put<double>(os, cfg.dropout_rate);
}

ModelConfig get_config(std::istream& is) {
    ModelConfig cfg;
    cfg.enc_layers = get<int32_t>(is);
    cfg.dec_layers = get<int32_t>(is);
    cfg.dim = get<int32_t>(is);
    cfg.heads = get<int32_t>(is);
    cfg.ffn_dim = get<int32_t>(is);
    cfg.max_src_len = get<int32_t>(is);
    cfg.max_tgt_len = get<int32_t>(is);
    cfg.vocab_size = get<int32_t>(is);
    cfg.dropout_rate = get<double>(is);
    return cfg;
}

} // namespace

void save_checkpoint(const std::string& path, const ModelState<float>& model,
                     const OptimState<float>* optim, const TrainerCheckpointState* trainer) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("checkpoint: cannot open '" + path + "' for writing");

    put(os, kMagic);
    put(os, kVersion);
    put_config(os, model.config);

    put<uint32_t>(os, static_cast<uint32_t>(model.tensors.size()));
    for (size_t i = 0; i < model.tensors.size(); ++i) {
        const auto& info = model.layout.infos[i];
        put_string(os, info.name);
        put<uint32_t>(os, static_cast<uint32_t>(model.tensors[i].rows()));
        put<uint32_t>(os, static_cast<uint32_t>(model.tensors[i].cols()));
        put_tensor_data(os, model.tensors[i]);
    }

    put<uint8_t>(os, optim ? 1 : 0);
    if (optim) {
        put<int64_t>(os, optim->step_count);
        put<uint64_t>(os, optim->skipped_steps);
        for (const auto& m : optim->m) put_tensor_data(os, m);
        for (const auto& v : optim->v) put_tensor_data(os, v);
    }

    put<uint8_t>(os, trainer ? 1 : 0);
    if (trainer) {
        put(os, trainer->sampler_rng_counter);
        put(os, trainer->sampler_draws);
        put(os, trainer->sampler_fresh);
        put(os, trainer->examples_consumed);
        put(os, trainer->eval_ordinal);
        put(os, trainer->train_loss_sum);
        put(os, trainer->train_loss_batches);
        put(os, trainer->dropout_rng_counter);
    }
    os.flush();
    if (!os) throw std::runtime_error("checkpoint: write to '" + path + "' failed");
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("checkpoint: cannot open '" + path + "'");

    if (get<uint32_t>(is) != kMagic) throw std::runtime_error("checkpoint: bad magic number");
    if (get<uint32_t>(is) != kVersion) throw std::runtime_error("checkpoint: unsupported version");

    LoadedCheckpoint out;
    out.model.config = get_config(is);
    out.model.layout = build_layout(out.model.config);

    auto count = get<uint32_t>(is);
    if (count != out.model.layout.infos.size())
        throw std::runtime_error("checkpoint: tensor count does not match config");
    out.model.tensors.reserve(count);
    for (uint32_t i = 0; i < count; ++i) {
        std::string name = get_string(is);
        auto rows = get<uint32_t>(is);
        auto cols = get<uint32_t>(is);
        const auto& info = out.model.layout.infos[i];
        if (name != info.name || static_cast<int>(rows) != info.rows ||
            static_cast<int>(cols) != info.cols)
            throw std::runtime_error("checkpoint: tensor '" + name + "' does not match layout");
        Mat<float> m(rows, cols);
        get_tensor_data(is, m);
        out.model.tensors.push_back(std::move(m));
    }

    if (get<uint8_t>(is)) {
        OptimState<float> optim = OptimState<float>::zeros_like(out.model.tensors);
        optim.step_count = get<int64_t>(is);
        optim.skipped_steps = get<uint64_t>(is);
        for (auto& m : optim.m) get_tensor_data(is, m);
        for (auto& v : optim.v) get_tensor_data(is, v);
        out.optim = std::move(optim);
    }

    if (get<uint8_t>(is)) {
        TrainerCheckpointState t;
        t.sampler_rng_counter = get<uint64_t>(is);
        t.sampler_draws = get<uint64_t>(is);
        t.sampler_fresh = get<uint64_t>(is);
        t.examples_consumed = get<uint64_t>(is);
        t.eval_ordinal = get<uint64_t>(is);
        t.train_loss_sum = get<double>(is);
        t.train_loss_batches = get<uint64_t>(is);
        t.dropout_rng_counter = get<uint64_t>(is);
        out.trainer = t;
    }
    return out;
}

} // namespace repbench
