#pragma once

// Named parameter store, Adam, and the on-disk checkpoint format.
//
// Checkpoints are two files: a UTF-8 manifest at the given path with one
// "name dim0 dim1 ..." line per tensor in lexicographic name order, and a
// sibling "<path>.bin" blob holding the raw little-endian float32 values
// concatenated in manifest order. Save -> load -> save is bit-exact.

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "sceneflow/error.hpp"
#include "sceneflow/rng.hpp"
#include "sceneflow/tensor.hpp"

namespace sceneflow {

template <typename S>
class ParamStoreT {
  public:
    using Map = std::map<std::string, TensorT<S>>;  // ordered => lexicographic

    bool contains(const std::string& name) const { return params_.count(name) != 0; }

    void add(const std::string& name, TensorT<S> t) {
        if (name.empty() || name.find_first_of(" \t\n\r") != std::string::npos)
            throw ContractError("ParamStore: parameter names must be non-empty and whitespace-free");
        if (contains(name)) throw ContractError("ParamStore: duplicate parameter '" + name + "'");
        t.requires_grad = true;
        params_.emplace(name, std::move(t));
    }

    TensorT<S>& at(const std::string& name) {
        auto it = params_.find(name);
        if (it == params_.end()) throw ContractError("ParamStore: unknown parameter '" + name + "'");
        return it->second;
    }
    const TensorT<S>& at(const std::string& name) const {
        return const_cast<ParamStoreT*>(this)->at(name);
    }

    size_t size() const { return params_.size(); }
    int64_t total_values() const {
        int64_t n = 0;
        for (const auto& [k, v] : params_) n += v.numel();
        return n;
    }

    typename Map::const_iterator begin() const { return params_.begin(); }
    typename Map::const_iterator end() const { return params_.end(); }
    typename Map::iterator begin() { return params_.begin(); }
    typename Map::iterator end() { return params_.end(); }

  private:
    Map params_;
};

using ParamStore = ParamStoreT<float>;

// Kaiming-uniform fan-in initialization matched to the leaky slope used by
// all hidden activations; biases start at zero.
template <typename S>
TensorT<S> kaiming_linear_weight(int fan_in, int fan_out, S slope, Rng& rng) {
    if (fan_in <= 0 || fan_out <= 0) throw DimensionError("init: degenerate weight shape");
    const double gain_sq = 2.0 / (1.0 + static_cast<double>(slope) * static_cast<double>(slope));
    const double bound = std::sqrt(3.0 * gain_sq / static_cast<double>(fan_in));
    TensorT<S> w = TensorT<S>::zeros({fan_in, fan_out});
    for (S& v : w.data)
        v = static_cast<S>((rng.uniform_f64() * 2.0 - 1.0) * bound);
    return w;
}

// Binds store parameters onto a tape once per forward pass and collects
// their gradients after backward(). There is exactly one store behind all
// uses of a parameter, so any weight sharing is sharing by construction.
template <typename S>
class ParamBinderT {
  public:
    ParamBinderT(TapeT<S>& tape, const ParamStoreT<S>& store) : tape_(tape), store_(store) {}

    Var operator()(const std::string& name) {
        auto it = bound_.find(name);
        if (it != bound_.end()) return it->second;
        Var v = tape_.leaf_param(store_.at(name));
        bound_.emplace(name, v);
        return v;
    }

    // Gradient per bound parameter; parameters never bound (or not reached by
    // backward) report zeros.
    std::map<std::string, std::vector<S>> gradients() {
        std::map<std::string, std::vector<S>> out;
        for (const auto& [name, t] : store_) {
            auto it = bound_.find(name);
            if (it == bound_.end())
                out.emplace(name, std::vector<S>(static_cast<size_t>(t.numel()), S(0)));
            else
                out.emplace(name, tape_.grad(it->second));
        }
        return out;
    }

    // Write updated values back into the store (used by tests that edit
    // tape-side values; training updates the store directly instead).
    TapeT<S>& tape() { return tape_; }
    ParamStoreT<S>& store() { return store_; }

  private:
    TapeT<S>& tape_;
    const ParamStoreT<S>& store_;
    std::map<std::string, Var> bound_;
};

using ParamBinder = ParamBinderT<float>;

// One named linear layer: y = x * store[prefix + ".w"] + store[prefix + ".b"].
template <typename S>
Var mlp_linear(TapeT<S>& t, ParamBinderT<S>& p, const std::string& prefix, Var x) {
    return linear(t, x, p(prefix + ".w"), p(prefix + ".b"));
}

// Adam with bias correction. One state slot per parameter name, created on
// first step and shape-checked afterwards.
template <typename S>
class AdamT {
  public:
    AdamT(S beta1 = S(0.9), S beta2 = S(0.999), S eps = S(1e-8))
        : beta1_(beta1), beta2_(beta2), eps_(eps) {}

    int64_t steps() const { return t_; }

    void step(ParamStoreT<S>& store, const std::map<std::string, std::vector<S>>& grads, S lr) {
        ++t_;
        const S bc1 = S(1) - static_cast<S>(std::pow(static_cast<double>(beta1_), static_cast<double>(t_)));
        const S bc2 = S(1) - static_cast<S>(std::pow(static_cast<double>(beta2_), static_cast<double>(t_)));
        for (auto& [name, param] : store) {
            auto git = grads.find(name);
            if (git == grads.end())
                throw ContractError("Adam: missing gradient for '" + name + "'");
            const std::vector<S>& g = git->second;
            if (g.size() != param.data.size())
                throw DimensionError("Adam: gradient size mismatch for '" + name + "'");
            for (S gv : g)
                if (!std::isfinite(static_cast<double>(gv)))
                    throw DivergenceError("Adam: non-finite gradient for '" + name + "'");
            auto& m = m_[name];
            auto& v = v_[name];
            if (m.empty()) {
                m.assign(param.data.size(), S(0));
                v.assign(param.data.size(), S(0));
            }
            for (size_t i = 0; i < param.data.size(); ++i) {
                m[i] = beta1_ * m[i] + (S(1) - beta1_) * g[i];
                v[i] = beta2_ * v[i] + (S(1) - beta2_) * g[i] * g[i];
                const S mh = m[i] / bc1;
                const S vh = v[i] / bc2;
                param.data[i] -= lr * mh / (std::sqrt(vh) + eps_);
            }
        }
    }

  private:
    S beta1_, beta2_, eps_;
    int64_t t_ = 0;
    std::map<std::string, std::vector<S>> m_, v_;
};

using Adam = AdamT<float>;

namespace detail {

inline void put_f32_le(std::string& out, float v) {
    uint32_t bits;
    std::memcpy(&bits, &v, 4);
    out.push_back(static_cast<char>(bits & 0xff));
    out.push_back(static_cast<char>((bits >> 8) & 0xff));
    out.push_back(static_cast<char>((bits >> 16) & 0xff));
    out.push_back(static_cast<char>((bits >> 24) & 0xff));
}

inline float get_f32_le(const unsigned char* p) {
    const uint32_t bits = static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
                          (static_cast<uint32_t>(p[2]) << 16) | (static_cast<uint32_t>(p[3]) << 24);
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
}

}  // namespace detail

inline std::string checkpoint_blob_path(const std::string& manifest_path) {
    return manifest_path + ".bin";
}

template <typename S>
void save_checkpoint(const ParamStoreT<S>& store, const std::string& path) {
    std::string manifest;
    std::string blob;
    for (const auto& [name, t] : store) {
        manifest += name;
        for (int d : t.shape) manifest += ' ' + std::to_string(d);
        manifest += '\n';
        for (S v : t.data) detail::put_f32_le(blob, static_cast<float>(v));
    }
    std::ofstream mf(path, std::ios::binary | std::ios::trunc);
    if (!mf) throw CheckpointError("cannot open checkpoint manifest for writing: " + path);
    mf.write(manifest.data(), static_cast<std::streamsize>(manifest.size()));
    if (!mf) throw CheckpointError("failed writing checkpoint manifest: " + path);
    std::ofstream bf(checkpoint_blob_path(path), std::ios::binary | std::ios::trunc);
    if (!bf) throw CheckpointError("cannot open checkpoint blob for writing: " + checkpoint_blob_path(path));
    bf.write(blob.data(), static_cast<std::streamsize>(blob.size()));
    if (!bf) throw CheckpointError("failed writing checkpoint blob: " + checkpoint_blob_path(path));
}

// Load a checkpoint into an already-built store. The target store defines
// the expected parameter set; any mismatch in names or shapes is an error.
template <typename S>
void load_checkpoint(ParamStoreT<S>& store, const std::string& path) {
    std::ifstream mf(path, std::ios::binary);
    if (!mf) throw CheckpointError("cannot open checkpoint manifest: " + path);
    std::vector<std::pair<std::string, std::vector<int>>> entries;
    std::string line;
    int line_no = 0;
    while (std::getline(mf, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::istringstream ss(line);
        std::string name;
        ss >> name;
        std::vector<int> shape;
        int64_t d;
        while (ss >> d) shape.push_back(static_cast<int>(d));
        if (name.empty() || !ss.eof())  // trailing non-numeric junk
            throw CheckpointError("malformed manifest line " + std::to_string(line_no) + " in " + path);
        entries.emplace_back(std::move(name), std::move(shape));
    }
    if (entries.size() != store.size())
        throw CheckpointError("checkpoint has " + std::to_string(entries.size()) + " tensors, model expects " +
                              std::to_string(store.size()));

    std::ifstream bf(checkpoint_blob_path(path), std::ios::binary);
    if (!bf) throw CheckpointError("cannot open checkpoint blob: " + checkpoint_blob_path(path));
    std::string blob((std::istreambuf_iterator<char>(bf)), std::istreambuf_iterator<char>());

    int64_t expected = 0;
    for (const auto& [name, shape] : entries) expected += TensorT<S>::numel_of(shape);
    if (static_cast<int64_t>(blob.size()) != expected * 4)
        throw CheckpointError("checkpoint blob is " + std::to_string(blob.size()) + " bytes, manifest implies " +
                              std::to_string(expected * 4));

    size_t off = 0;
    for (const auto& [name, shape] : entries) {
        if (!store.contains(name))
            throw CheckpointError("checkpoint tensor '" + name + "' is not part of this model");
        TensorT<S>& dst = store.at(name);
        if (dst.shape != shape) {
            std::string got, want;
            for (int d2 : shape) got += std::to_string(d2) + " ";
            for (int d2 : dst.shape) want += std::to_string(d2) + " ";
            throw CheckpointError("shape mismatch for '" + name + "': checkpoint [ " + got + "], model [ " + want + "]");
        }
        for (size_t i = 0; i < dst.data.size(); ++i, off += 4)
            dst.data[i] = static_cast<S>(detail::get_f32_le(
                reinterpret_cast<const unsigned char*>(blob.data()) + off));
    }
}

}  // namespace sceneflow
