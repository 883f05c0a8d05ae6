// Reverse-mode automatic differentiation on a flat op tape, plus Adam.
// The primitive set is closed and minimal: matmul, add (with rank-1 row
// broadcast), elementwise mul, scalar scale, sin, abs, column/row concat,
// column slice, grouped row mean, latent-grid interpolation, weighted sum,
// and fused softmax cross-entropy. Templated on the scalar type so the
// same graph runs in float for training and double for gradient checks.
#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "atlasloom/geometry.hpp"

namespace atlasloom::ad {

// Deterministic splitmix64-based generator. Self-contained so that seeded
// runs produce identical streams on every platform.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    static std::uint64_t mix(std::uint64_t x) {
        x += 0x9e3779b97f4a7c15ull;
        x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
        x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
        return x ^ (x >> 31);
    }

    // Stream for a derived unit (per subject, per stack, per voxel).
    static Rng derive(std::uint64_t seed, std::uint64_t index) {
        return Rng(mix(seed ^ (0x9e3779b97f4a7c15ull * (index + 1))));
    }

    std::uint64_t next_u64() {
        state_ += 0x9e3779b97f4a7c15ull;
        std::uint64_t x = state_;
        x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
        x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
        return x ^ (x >> 31);
    }

    // Uniform in [0, 1).
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform_range(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n).
    std::uint64_t uniform_int(std::uint64_t n) { return next_u64() % n; }

    // Standard normal via Box-Muller; the pair partner is cached.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        spare_ = r * std::sin(2.0 * kPi * u2);
        has_spare_ = true;
        return r * std::cos(2.0 * kPi * u2);
    }

  private:
    std::uint64_t state_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

using Shape = std::vector<int>;

inline std::int64_t shape_size(const Shape& s) {
    std::int64_t n = 1;
    for (int d : s) n *= d;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::string r = "[";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) r += "x";
        r += std::to_string(s[i]);
    }
    return r + "]";
}

template <typename T>
struct TensorT {
    Shape shape;
    std::vector<T> values;
    bool requires_grad = false;

    TensorT() = default;
    TensorT(Shape s, T fill = T(0)) : shape(std::move(s)) {
        values.assign(static_cast<std::size_t>(shape_size(shape)), fill);
    }

    std::int64_t size() const { return static_cast<std::int64_t>(values.size()); }

    static TensorT zeros(Shape s) { return TensorT(std::move(s)); }

    static TensorT gaussian(Shape s, double stddev, Rng& rng) {
        TensorT t(std::move(s));
        for (auto& v : t.values) v = static_cast<T>(rng.normal() * stddev);
        return t;
    }

    static TensorT uniform(Shape s, double lo, double hi, Rng& rng) {
        TensorT t(std::move(s));
        for (auto& v : t.values) v = static_cast<T>(rng.uniform_range(lo, hi));
        return t;
    }

    template <typename U>
    TensorT<U> cast() const {
        TensorT<U> t;
        t.shape = shape;
        t.requires_grad = requires_grad;
        t.values.resize(values.size());
        for (std::size_t i = 0; i < values.size(); ++i) t.values[i] = static_cast<U>(values[i]);
        return t;
    }
};

using Tensor = TensorT<float>;

// Spatial extent a latent grid spans, world mm per axis.
struct LatticeExtent {
    Vec3 lo, hi;
};

enum class Op {
    Leaf,
    MatMul,
    Add,
    AddRowBroadcast,
    Mul,
    Scale,
    Sin,
    Abs,
    ConcatCols,
    ConcatRows,
    SliceCols,
    MeanRowGroups,
    WeightedSum,
    SoftmaxXentSum,
    InterpLatent,
};

template <typename T>
class TapeT {
  public:
    using Id = int;

    Id leaf(const TensorT<T>& t, bool requires_grad) {
        Node n;
        n.op = Op::Leaf;
        n.value = t;
        n.requires_grad = requires_grad;
        nodes_.push_back(std::move(n));
        return static_cast<Id>(nodes_.size() - 1);
    }

    // a: [B,m] times w: [n,m] (row-major, out features first) -> [B,n].
    Id matmul(Id a, Id w);

    // Same-shape elementwise add, or b as a rank-1 bias broadcast over rows.
    Id add(Id a, Id b);
    Id mul(Id a, Id b);
    Id scale(Id a, T s);
    Id sin_op(Id a);
    Id abs_op(Id a);

    Id concat_cols(Id a, Id b);
    Id concat_rows(Id a, Id b);
    Id slice_cols(Id a, int from, int to);

    // [B*K, n] -> [B, n], mean over each group of K consecutive rows.
    Id mean_row_groups(Id a, int group);

    // sum_i w_i * a_i over the flattened tensor -> scalar [1].
    Id weighted_sum(Id a, std::vector<T> w);

    // sum_i w_i * CE(softmax(logits_i), labels_i) -> scalar [1].
    Id softmax_xent_sum(Id logits, std::vector<int> labels, std::vector<T> w);

    // Channel-wise trilinear interpolation of a latent grid at world
    // coordinates. latent shape is {nx, ny, nz, dz} with the channel
    // fastest; coords is a flat B*3 array kept in double so the lattice
    // arithmetic is identical for float and double tapes. Output [B, dz].
    Id interp_latent(Id latent, std::vector<double> coords, const LatticeExtent& extent);

    const TensorT<T>& value(Id id) const { return nodes_[check(id)].value; }
    const TensorT<T>& grad(Id id) const { return nodes_[check(id)].grad; }
    std::size_t node_count() const { return nodes_.size(); }

    // Reverse sweep from a scalar loss node.
    void backward(Id loss);

  private:
    struct Node {
        Op op = Op::Leaf;
        Id a = -1, b = -1;
        TensorT<T> value;
        TensorT<T> grad;
        bool requires_grad = false;
        int i0 = 0, i1 = 0;
        T s = T(0);
        std::vector<T> fdata;
        std::vector<double> ddata;
        std::vector<int> idata;
        LatticeExtent extent{};
    };

    int check(Id id) const {
        if (id < 0 || static_cast<std::size_t>(id) >= nodes_.size())
            throw std::invalid_argument("tape: node id out of range");
        return id;
    }

    Id push(Node n) {
        const bool ra = n.a >= 0 && nodes_[n.a].requires_grad;
        const bool rb = n.b >= 0 && nodes_[n.b].requires_grad;
        n.requires_grad = ra || rb;
        nodes_.push_back(std::move(n));
        return static_cast<Id>(nodes_.size() - 1);
    }

    void ensure_grad(Node& n) {
        if (n.grad.values.empty()) n.grad = TensorT<T>::zeros(n.value.shape);
    }

    void backward_node(Node& n);

    std::vector<Node> nodes_;
};

using Tape = TapeT<float>;

// Bias-corrected Adam over a fixed set of parameter tensors.
template <typename T>
struct AdamStateT {
    T lr = static_cast<T>(1e-4);
    T beta1 = static_cast<T>(0.9);
    T beta2 = static_cast<T>(0.999);
    T eps = static_cast<T>(1e-8);
    std::int64_t step = 0;
    bool last_step_rejected = false;
    std::vector<std::vector<T>> m, v;

    void init(const std::vector<TensorT<T>*>& params) {
        m.clear();
        v.clear();
        for (const auto* p : params) {
            m.emplace_back(p->values.size(), T(0));
            v.emplace_back(p->values.size(), T(0));
        }
    }
};

using AdamState = AdamStateT<float>;

// Applies one update in place. A non-finite gradient anywhere rejects the
// whole step (params, moments and counter untouched) and returns false.
template <typename T>
bool adam_step(const std::vector<TensorT<T>*>& params,
               const std::vector<const TensorT<T>*>& grads, AdamStateT<T>& state);

extern template class TapeT<float>;
extern template class TapeT<double>;
extern template bool adam_step<float>(const std::vector<TensorT<float>*>&,
                                      const std::vector<const TensorT<float>*>&,
                                      AdamStateT<float>&);
extern template bool adam_step<double>(const std::vector<TensorT<double>*>&,
                                       const std::vector<const TensorT<double>*>&,
                                       AdamStateT<double>&);

}  // namespace atlasloom::ad
