#pragma once

// Alternating minibatch SGD: every iteration samples a batch, updates the
// encoder alone on the soft normalized-cut loss, then updates the whole
// autoencoder on the reconstruction loss. Plain SGD, learning rate divided
// by `lr_decay_factor` every `lr_decay_every` iterations.
//
// The reconstruction loss is reported and optimized as mean squared error
// (the squared L2 norm divided by the element count); this only rescales
// the raw squared-norm objective by a constant.

#include <cmath>
#include <fstream>
#include <optional>
#include <vector>

#include "wnet/affinity.hpp"
#include "wnet/ncut.hpp"
#include "wnet/net.hpp"

namespace wnet {

struct TrainConfig {
    int batch_size = 4;
    double lr_initial = 0.003;
    int lr_decay_every = 1000;
    double lr_decay_factor = 0.1;
    int max_iters = 2000;
    std::uint64_t seed = 1;
    bool ncut_enabled = true;

    void validate() const {
        if (batch_size < 1 || lr_initial <= 0 || lr_decay_every < 1 || max_iters < 0 ||
            lr_decay_factor <= 0)
            throw ParamError("TrainConfig: invalid values");
    }
};

inline double lr_at(const TrainConfig& tc, int iter) {
    return tc.lr_initial * std::pow(tc.lr_decay_factor, iter / tc.lr_decay_every);
}

struct TraceRow {
    int iter;
    double j_reconstr;
    double j_softncut;
    double lr;
};

void write_trace_csv(const std::string& path, const std::vector<TraceRow>& rows, bool append);

template <typename S>
class Trainer {
public:
    Trainer(WNetModel<S> net, TrainConfig tc, AffinityParams ap, std::vector<ImageTensor> images)
        : net_(std::move(net)), tc_(tc), ap_(ap), rng_(tc.seed) {
        tc_.validate();
        ap_.validate();
        if (images.empty()) throw DataError("Trainer: empty dataset");
        for (const auto& img : images) {
            if (img.height != net_.cfg.input_size || img.width != net_.cfg.input_size ||
                img.channels != net_.cfg.in_channels)
                throw DataError("Trainer: image shape does not match network config");
            data_.push_back(image_to_tensor<S>(img));
        }
        images_ = std::move(images);
        affinity_.resize(images_.size());
    }

    // One iteration of the alternating scheme. Both losses are reported in
    // double precision; non-finite values abort with the iteration index.
    TraceRow step() {
        const double lr = lr_at(tc_, iter_);
        const int b = tc_.batch_size;
        std::vector<int> idx(b);
        for (int i = 0; i < b; ++i) idx[i] = rng_.next_int(static_cast<int>(data_.size()));
        Tensor4<S> batch = gather(idx);
        const size_t per = static_cast<size_t>(batch.h) * batch.w * batch.c;

        // a numerically degenerate probability field (a class starved to
        // exactly zero mass) is treated as divergence, like a non-finite loss
        auto diverged = [&](const char* what) -> NumericError {
            return NumericError("training diverged at iteration " + std::to_string(iter_) +
                                " (" + what + ")");
        };
        double j_ncut = 0.0;
        if (tc_.ncut_enabled) {
            Tensor4<S> p = net_.forward_encode(batch, true, &rng_);
            Tensor4<S> dp(p.n, p.h, p.w, p.c);
            const size_t per_p = static_cast<size_t>(p.h) * p.w * p.c;
            SoftSegmentation g;
            for (int i = 0; i < b; ++i) {
                SoftSegmentation ps = tensor_to_soft_seg(p, i);
                try {
                    j_ncut += soft_ncut_with_grad(ps, affinity(idx[i]), g);
                } catch (const NumericError& e) {
                    throw diverged(e.what());
                }
                for (size_t j = 0; j < per_p; ++j)
                    dp.v[i * per_p + j] = static_cast<S>(g.probs[j] / b);
            }
            j_ncut /= b;
            net_.backward_encode(dp);
            net_.sgd_step(ParamPart::Encoder, lr);
        }

        Tensor4<S> recon = net_.forward_full(batch, true, &rng_);
        double j_rec = 0.0;
        Tensor4<S> drecon(recon.n, recon.h, recon.w, recon.c);
        const double scale = 1.0 / (static_cast<double>(per) * b);
        for (size_t i = 0; i < recon.size(); ++i) {
            double diff = static_cast<double>(recon.v[i]) - static_cast<double>(batch.v[i]);
            j_rec += diff * diff;
            drecon.v[i] = static_cast<S>(2.0 * diff * scale);
        }
        j_rec *= scale;
        if (!tc_.ncut_enabled) {
            // encoder output of the reconstruction pass, traced for reference
            try {
                for (int i = 0; i < b; ++i)
                    j_ncut += soft_ncut(tensor_to_soft_seg(net_.p_cache, i), affinity(idx[i]));
            } catch (const NumericError& e) {
                throw diverged(e.what());
            }
            j_ncut /= b;
        }
        net_.backward_full(drecon);
        net_.sgd_step(ParamPart::All, lr);

        if (!std::isfinite(j_rec) || !std::isfinite(j_ncut)) throw diverged("non-finite loss");
        TraceRow row{iter_, j_rec, j_ncut, lr};
        trace_.push_back(row);
        ++iter_;
        return row;
    }

    void run() {
        while (iter_ < tc_.max_iters) step();
    }

    WNetModel<S>& net() { return net_; }
    const std::vector<TraceRow>& trace() const { return trace_; }
    int iter() const { return iter_; }
    Rng& rng() { return rng_; }
    void set_iter(int it) { iter_ = it; }

    const SparseAffinity& affinity(int image_index) {
        auto& slot = affinity_[image_index];
        if (!slot) slot = build_affinity(images_[image_index], ap_);
        return *slot;
    }

private:
    Tensor4<S> gather(const std::vector<int>& idx) const {
        const Tensor4<S>& first = data_[idx[0]];
        Tensor4<S> batch(static_cast<int>(idx.size()), first.h, first.w, first.c);
        const size_t per = static_cast<size_t>(first.h) * first.w * first.c;
        for (size_t i = 0; i < idx.size(); ++i)
            std::copy(data_[idx[i]].v.begin(), data_[idx[i]].v.end(),
                      batch.v.begin() + i * per);
        return batch;
    }

    WNetModel<S> net_;
    TrainConfig tc_;
    AffinityParams ap_;
    Rng rng_;
    std::vector<ImageTensor> images_;
    std::vector<Tensor4<S>> data_;
    std::vector<std::optional<SparseAffinity>> affinity_;
    std::vector<TraceRow> trace_;
    int iter_ = 0;
};

// ---- checkpoints ----------------------------------------------------------
//
// Little-endian binary layout (version 1):
//   "WNCK"  u32 version  u8 dtype(4|8)  u8 separable  u8 batch_norm
//   u8 dropout_is_keep  i32 input_size  i32 k  i32 depth  i32 base_channels
//   i32 in_channels  f64 dropout_p  i64 iter  u64 rng_state
//   u64 tensor_count, then per tensor: u64 element_count, raw scalars.
// Tensor order is the network's fixed state-visitation order.

namespace detail {
template <typename T>
void put(std::ofstream& f, T v) {
    f.write(reinterpret_cast<const char*>(&v), sizeof(T));
}
template <typename T>
T get(std::ifstream& f, const std::string& path) {
    T v{};
    f.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!f) throw FormatError(path + ": truncated checkpoint");
    return v;
}
}  // namespace detail

template <typename S>
void save_checkpoint(WNetModel<S>& net, std::int64_t iter, std::uint64_t rng_state,
                     const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw FormatError("cannot write " + path);
    f.write("WNCK", 4);
    detail::put<std::uint32_t>(f, 1);
    detail::put<std::uint8_t>(f, sizeof(S));
    detail::put<std::uint8_t>(f, net.cfg.separable ? 1 : 0);
    detail::put<std::uint8_t>(f, net.cfg.batch_norm ? 1 : 0);
    detail::put<std::uint8_t>(f, net.cfg.dropout_is_keep ? 1 : 0);
    detail::put<std::int32_t>(f, net.cfg.input_size);
    detail::put<std::int32_t>(f, net.cfg.k);
    detail::put<std::int32_t>(f, net.cfg.depth);
    detail::put<std::int32_t>(f, net.cfg.base_channels);
    detail::put<std::int32_t>(f, net.cfg.in_channels);
    detail::put<double>(f, net.cfg.dropout_p);
    detail::put<std::int64_t>(f, iter);
    detail::put<std::uint64_t>(f, rng_state);
    std::uint64_t count = 0;
    net.visit_state(ParamPart::All, [&](std::vector<S>&) { ++count; });
    detail::put<std::uint64_t>(f, count);
    net.visit_state(ParamPart::All, [&](std::vector<S>& w) {
        detail::put<std::uint64_t>(f, w.size());
        f.write(reinterpret_cast<const char*>(w.data()),
                static_cast<std::streamsize>(w.size() * sizeof(S)));
    });
    if (!f) throw FormatError("short write to " + path);
}

template <typename S>
struct Checkpoint {
    WNetModel<S> net;
    std::int64_t iter = 0;
    std::uint64_t rng_state = 0;
};

template <typename S>
Checkpoint<S> load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw FormatError("cannot open " + path);
    char magic[4];
    f.read(magic, 4);
    if (!f || std::string(magic, 4) != "WNCK") throw FormatError(path + ": not a checkpoint");
    auto version = detail::get<std::uint32_t>(f, path);
    if (version != 1)
        throw FormatError(path + ": unsupported checkpoint version " + std::to_string(version));
    auto dtype = detail::get<std::uint8_t>(f, path);
    if (dtype != sizeof(S))
        throw FormatError(path + ": scalar width " + std::to_string(dtype) +
                          " does not match this build");
    WNetConfig cfg;
    cfg.separable = detail::get<std::uint8_t>(f, path) != 0;
    cfg.batch_norm = detail::get<std::uint8_t>(f, path) != 0;
    cfg.dropout_is_keep = detail::get<std::uint8_t>(f, path) != 0;
    cfg.input_size = detail::get<std::int32_t>(f, path);
    cfg.k = detail::get<std::int32_t>(f, path);
    cfg.depth = detail::get<std::int32_t>(f, path);
    cfg.base_channels = detail::get<std::int32_t>(f, path);
    cfg.in_channels = detail::get<std::int32_t>(f, path);
    cfg.dropout_p = detail::get<double>(f, path);

    Checkpoint<S> ck;
    ck.iter = detail::get<std::int64_t>(f, path);
    ck.rng_state = detail::get<std::uint64_t>(f, path);
    Rng scratch(0);
    ck.net.build(cfg, scratch);
    auto count = detail::get<std::uint64_t>(f, path);
    std::uint64_t expected = 0;
    ck.net.visit_state(ParamPart::All, [&](std::vector<S>&) { ++expected; });
    if (count != expected) throw FormatError(path + ": tensor count mismatch");
    ck.net.visit_state(ParamPart::All, [&](std::vector<S>& w) {
        auto len = detail::get<std::uint64_t>(f, path);
        if (len != w.size()) throw FormatError(path + ": tensor length mismatch");
        f.read(reinterpret_cast<char*>(w.data()),
               static_cast<std::streamsize>(w.size() * sizeof(S)));
        if (!f) throw FormatError(path + ": truncated checkpoint");
    });
    return ck;
}

}  // namespace wnet
