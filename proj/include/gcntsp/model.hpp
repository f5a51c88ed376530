#pragma once

/// @file model.hpp
/// @brief Residual gated graph ConvNet that maps a TSP instance to a dense
/// edge-probability heat-map, plus its class-weighted training loss.
///
/// Forward pass for a batch of B instances with n nodes each:
///
///   node input   x_i  = A1 * coord_i + b1                                 [B n, h]
///   edge input   e_ij = (A2 * d_ij + b2) || A3 * onehot(knn_ij)            [B n n, h]
///   per layer    gate_ij = sigmoid(e_ij) / (sum_{j' != i} sigmoid(e_ij') + eps)
///                x_i += relu(BN(W1 x_i + sum_{j != i} gate_ij * W2 x_j))
///                e_ij += relu(BN(W3 e_ij + W4 x_i + W5 x_j))
///   classifier   (l_mlp - 1) x [affine h -> h, relu], affine h -> 2
///
/// Both updates of a layer read the layer's input features. The heat-map is the
/// class-1 softmax probability of every directed edge, with a zero diagonal.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "autodiff.hpp"
#include "core.hpp"
#include "errors.hpp"
#include "rng.hpp"

namespace gcntsp {

/// n x n directed edge probabilities; entry (i, i) is unused and kept at 0.
using HeatMap = SquareMatrix<double>;

struct GcnConfig {
    std::size_t l_conv = 8;
    std::size_t l_mlp = 3;
    std::size_t h = 64;
    std::size_t k = 20;
    double epsilon_gate = 1e-20;

    void validate() const {
        if (h < 2 || h % 2 != 0) throw InvalidArgument("hidden width h must be even, got " + std::to_string(h));
        if (l_conv < 1) throw InvalidArgument("l_conv must be >= 1");
        if (l_mlp < 1) throw InvalidArgument("l_mlp must be >= 1");
        if (k < 1) throw InvalidArgument("k must be >= 1");
        if (!(epsilon_gate > 0.0)) throw InvalidArgument("epsilon_gate must be positive");
    }

    /// Neighbour count actually used for an n-node instance.
    std::size_t effective_k(std::size_t n) const noexcept { return std::min(k, n - 1); }

    friend bool operator==(const GcnConfig&, const GcnConfig&) = default;
};

struct ClassWeights {
    double w0;
    double w1;
};

/// Balanced weights for the absent (0) and present (1) edge classes of TSP-n:
/// w0 = n^2 / ((n^2 - 2n) c), w1 = n^2 / (2n c), c = 2.
inline ClassWeights class_weights(std::size_t n) {
    if (n < 3) throw InvalidArgument("class_weights needs n >= 3");
    const double nn = static_cast<double>(n) * static_cast<double>(n);
    const double c = 2.0;
    return {nn / ((nn - 2.0 * static_cast<double>(n)) * c), nn / (2.0 * static_cast<double>(n) * c)};
}

/// Constant inputs for one forward pass over B instances of equal size n.
template <typename T>
struct GraphBatch {
    std::size_t batch = 0;
    std::size_t n = 0;
    ad::Tensor<T> coords;   // [B n, 2]
    ad::Tensor<T> dist;     // [B n n, 1]
    ad::Tensor<T> knn;      // [B n n, 3], one-hot of {0, 1, 2}
    std::shared_ptr<const std::vector<std::uint32_t>> src; // edge row -> node row of i
    std::shared_ptr<const std::vector<std::uint32_t>> dst; // edge row -> node row of j

    GraphBatch() = default;

    GraphBatch(std::span<const TspInstance> instances, const GcnConfig& cfg) {
        if (instances.empty()) throw InvalidArgument("empty batch");
        batch = instances.size();
        n = instances[0].size();
        const std::size_t k = cfg.effective_k(n);
        std::vector<T> c(batch * n * 2), d(batch * n * n), onehot(batch * n * n * 3, T(0));
        auto s = std::make_shared<std::vector<std::uint32_t>>(batch * n * n);
        auto t = std::make_shared<std::vector<std::uint32_t>>(batch * n * n);
        for (std::size_t b = 0; b < batch; ++b) {
            const auto& inst = instances[b];
            if (inst.size() != n) throw InvalidArgument("all instances in a batch must have the same n");
            const DistanceMatrix dm = pairwise_distances(inst);
            const auto ind = knn_indicator(dm, k);
            for (std::size_t i = 0; i < n; ++i) {
                c[(b * n + i) * 2] = static_cast<T>(inst[i].x);
                c[(b * n + i) * 2 + 1] = static_cast<T>(inst[i].y);
                for (std::size_t j = 0; j < n; ++j) {
                    const std::size_t r = (b * n + i) * n + j;
                    d[r] = static_cast<T>(dm(i, j));
                    onehot[r * 3 + static_cast<std::size_t>(ind(i, j))] = T(1);
                    (*s)[r] = static_cast<std::uint32_t>(b * n + i);
                    (*t)[r] = static_cast<std::uint32_t>(b * n + j);
                }
            }
        }
        coords = ad::Tensor<T>::from({batch * n, 2}, std::move(c));
        dist = ad::Tensor<T>::from({batch * n * n, 1}, std::move(d));
        knn = ad::Tensor<T>::from({batch * n * n, 3}, std::move(onehot));
        src = std::move(s);
        dst = std::move(t);
    }
};

template <typename T>
class GcnModel {
  public:
    using Tensor = ad::Tensor<T>;
    using Tape = ad::Tape<T>;

    /// Weights are drawn uniformly from +-sqrt(1 / fan_in); batch-norm scales start at 1.
    explicit GcnModel(GcnConfig config = {}, std::uint64_t seed = 0) : config_(config) {
        config_.validate();
        Rng rng(seed);
        const std::size_t h = config_.h, half = h / 2;
        auto uniform = [&](const std::string& name, ad::Shape shape, std::size_t fan_in) {
            std::vector<T> v(ad::shape_numel(shape));
            const double bound = std::sqrt(1.0 / static_cast<double>(fan_in));
            for (auto& x : v) x = static_cast<T>(rng.uniform(-bound, bound));
            return params_.add(name, std::move(shape), std::move(v));
        };
        auto constant = [&](const std::string& name, std::size_t size, T value) {
            return params_.add(name, {size}, std::vector<T>(size, value));
        };

        uniform("embed.A1", {h, 2}, 2);
        uniform("embed.b1", {h}, 2);
        uniform("embed.A2", {half, 1}, 1);
        uniform("embed.b2", {half}, 1);
        uniform("embed.A3", {half, 3}, 3);
        for (std::size_t l = 0; l < config_.l_conv; ++l) {
            const std::string p = layer_prefix(l);
            for (const char* w : {"W1", "W2", "W3", "W4", "W5"}) uniform(p + w, {h, h}, h);
            constant(p + "bn_node.gamma", h, T(1));
            constant(p + "bn_node.beta", h, T(0));
            constant(p + "bn_edge.gamma", h, T(1));
            constant(p + "bn_edge.beta", h, T(0));
            params_.add_batch_norm(p + "bn_node", h);
            params_.add_batch_norm(p + "bn_edge", h);
        }
        for (std::size_t m = 0; m < config_.l_mlp; ++m) {
            const std::size_t out = (m + 1 == config_.l_mlp) ? 2 : h;
            uniform(mlp_prefix(m) + "weight", {out, h}, h);
            uniform(mlp_prefix(m) + "bias", {out}, h);
        }
    }

    // Copies would share parameter storage.
    GcnModel(const GcnModel&) = delete;
    GcnModel& operator=(const GcnModel&) = delete;
    GcnModel(GcnModel&&) noexcept = default;
    GcnModel& operator=(GcnModel&&) noexcept = default;

    const GcnConfig& config() const noexcept { return config_; }
    ad::ParamStore<T>& params() noexcept { return params_; }
    const ad::ParamStore<T>& params() const noexcept { return params_; }

    Tensor embed_nodes(Tape& tape, const GraphBatch<T>& g) {
        return ad::linear(tape, g.coords, p("embed.A1"), &p("embed.b1"));
    }

    Tensor embed_edges(Tape& tape, const GraphBatch<T>& g) {
        Tensor dist = ad::linear(tape, g.dist, p("embed.A2"), &p("embed.b2"));
        Tensor knn = ad::linear(tape, g.knn, p("embed.A3"));
        return ad::concat(tape, dist, knn);
    }

    struct LayerOutput {
        Tensor x;
        Tensor e;
    };

    LayerOutput gcn_layer(Tape& tape, std::size_t layer, const Tensor& x, const Tensor& e,
                          const GraphBatch<T>& g, bool training) {
        const std::string pre = layer_prefix(layer);
        Tensor self = ad::linear(tape, x, p(pre + "W1"));
        Tensor msg = ad::linear(tape, x, p(pre + "W2"));
        Tensor gates = ad::gate_normalize(tape, ad::sigmoid(tape, e), g.n, static_cast<T>(config_.epsilon_gate));
        Tensor agg = ad::neighbor_sum(tape, gates, msg, g.n);
        Tensor node_pre = ad::batch_norm(tape, ad::add(tape, self, agg), p(pre + "bn_node.gamma"),
                                         p(pre + "bn_node.beta"), params_.batch_norm(pre + "bn_node"),
                                         training);
        Tensor x_next = ad::add(tape, x, ad::relu(tape, node_pre));

        Tensor edge_self = ad::linear(tape, e, p(pre + "W3"));
        Tensor from_src = ad::gather_rows(tape, ad::linear(tape, x, p(pre + "W4")), g.src);
        Tensor from_dst = ad::gather_rows(tape, ad::linear(tape, x, p(pre + "W5")), g.dst);
        Tensor edge_pre = ad::batch_norm(tape, ad::add(tape, ad::add(tape, edge_self, from_src), from_dst),
                                         p(pre + "bn_edge.gamma"), p(pre + "bn_edge.beta"),
                                         params_.batch_norm(pre + "bn_edge"), training);
        Tensor e_next = ad::add(tape, e, ad::relu(tape, edge_pre));
        return {std::move(x_next), std::move(e_next)};
    }

    /// Edge logits [B n n, 2].
    Tensor mlp_classify(Tape& tape, const Tensor& e) {
        Tensor y = e;
        for (std::size_t m = 0; m < config_.l_mlp; ++m) {
            y = ad::linear(tape, y, p(mlp_prefix(m) + "weight"), &p(mlp_prefix(m) + "bias"));
            if (m + 1 < config_.l_mlp) y = ad::relu(tape, y);
        }
        return y;
    }

    Tensor forward(Tape& tape, const GraphBatch<T>& g, bool training) {
        Tensor x = embed_nodes(tape, g);
        Tensor e = embed_edges(tape, g);
        for (std::size_t l = 0; l < config_.l_conv; ++l) {
            auto out = gcn_layer(tape, l, x, e, g, training);
            x = std::move(out.x);
            e = std::move(out.e);
        }
        return mlp_classify(tape, e);
    }

    /// Class-weighted cross-entropy over the off-diagonal directed edges of the
    /// batch, weighting each edge by the weight of its true class, then averaging.
    Tensor loss(Tape& tape, const Tensor& logits, std::span<const Tour> tours, std::size_t n) {
        if (logits.rows() != tours.size() * n * n)
            throw ShapeError("loss: logits " + ad::shape_string(logits.shape()) + " vs " +
                               std::to_string(tours.size()) + " tours of n=" + std::to_string(n));
        auto labels = std::make_shared<std::vector<int>>(logits.rows(), -1);
        for (std::size_t b = 0; b < tours.size(); ++b) {
            const AdjacencyTarget adj = tour_to_adjacency(tours[b]);
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < n; ++j)
                    if (i != j) (*labels)[(b * n + i) * n + j] = adj(i, j);
        }
        const ClassWeights w = class_weights(n);
        return ad::weighted_cross_entropy<T>(tape, logits, std::move(labels),
                                             {static_cast<T>(w.w0), static_cast<T>(w.w1)});
    }

    /// Class-1 softmax probabilities as one heat-map per instance.
    static std::vector<HeatMap> heatmaps(const Tensor& logits, std::size_t batch, std::size_t n) {
        std::vector<HeatMap> maps(batch, HeatMap(n, 0.0));
        const auto v = logits.values();
        for (std::size_t b = 0; b < batch; ++b)
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < n; ++j) {
                    if (i == j) continue;
                    const std::size_t r = ((b * n + i) * n + j) * 2;
                    // p1 = 1 / (1 + exp(l0 - l1))
                    const double diff = static_cast<double>(v[r]) - static_cast<double>(v[r + 1]);
                    maps[b](i, j) = 1.0 / (1.0 + std::exp(diff));
                }
        return maps;
    }

    struct Evaluation {
        HeatMap heatmap;
        double loss = 0.0; // only set when a target tour is given
    };

    /// Evaluation-mode forward pass of a single instance. It only reads the
    /// parameters and frozen batch-norm statistics, so concurrent calls are safe.
    Evaluation evaluate(const TspInstance& instance, const Tour* target = nullptr) const {
        auto& self = const_cast<GcnModel&>(*this);
        Tape tape(false);
        GraphBatch<T> g(std::span<const TspInstance>(&instance, 1), config_);
        Tensor logits = self.forward(tape, g, false);
        Evaluation out{heatmaps(logits, 1, instance.size()).front(), 0.0};
        if (target)
            out.loss = static_cast<double>(
                self.loss(tape, logits, std::span<const Tour>(target, 1), instance.size()).item());
        return out;
    }

    HeatMap predict(const TspInstance& instance) const { return evaluate(instance).heatmap; }

    static std::string layer_prefix(std::size_t l) { return "layer" + std::to_string(l) + "."; }
    static std::string mlp_prefix(std::size_t m) { return "mlp" + std::to_string(m) + "."; }

  private:
    Tensor& p(const std::string& name) { return params_.get(name); }

    GcnConfig config_;
    ad::ParamStore<T> params_;
};

} // namespace gcntsp
