#include "atlasloom/autodiff.hpp"

#include <algorithm>
#include <cmath>

namespace atlasloom::ad {

namespace {

template <typename T>
void require(bool cond, const std::string& msg) {
    if (!cond) throw std::invalid_argument(msg);
}

inline bool is_matrix(const Shape& s) { return s.size() == 2; }

}  // namespace

template <typename T>
typename TapeT<T>::Id TapeT<T>::matmul(Id a, Id w) {
    const auto& av = nodes_[check(a)].value;
    const auto& wv = nodes_[check(w)].value;
    require<T>(is_matrix(av.shape) && is_matrix(wv.shape) && av.shape[1] == wv.shape[1],
               "matmul: incompatible shapes " + shape_str(av.shape) + " and " +
                   shape_str(wv.shape));
    const int B = av.shape[0], m = av.shape[1], n = wv.shape[0];

    Node node;
    node.op = Op::MatMul;
    node.a = a;
    node.b = w;
    node.value = TensorT<T>::zeros({B, n});
    const T* A = av.values.data();
    const T* W = wv.values.data();
    T* O = node.value.values.data();
#pragma omp parallel for schedule(static)
    for (int bi = 0; bi < B; ++bi) {
        const T* arow = A + static_cast<std::int64_t>(bi) * m;
        T* orow = O + static_cast<std::int64_t>(bi) * n;
        for (int j = 0; j < n; ++j) {
            const T* wrow = W + static_cast<std::int64_t>(j) * m;
            T s = T(0);
            for (int k = 0; k < m; ++k) s += arow[k] * wrow[k];
            orow[j] = s;
        }
    }
    return push(std::move(node));
}

template <typename T>
typename TapeT<T>::Id TapeT<T>::add(Id a, Id b) {
    const auto& av = nodes_[check(a)].value;
    const auto& bv = nodes_[check(b)].value;
    Node node;
    node.a = a;
    node.b = b;
    if (av.shape == bv.shape) {
        node.op = Op::Add;
        node.value = av;
        for (std::size_t i = 0; i < node.value.values.size(); ++i)
            node.value.values[i] += bv.values[i];
    } else if (is_matrix(av.shape) && bv.shape.size() == 1 && av.shape[1] == bv.shape[0]) {
        node.op = Op::AddRowBroadcast;
        node.value = av;
        const int B = av.shape[0], n = av.shape[1];
        for (int bi = 0; bi < B; ++bi)
            for (int j = 0; j < n; ++j)
                node.value.values[static_cast<std::size_t>(bi) * n + j] += bv.values[j];
    } else {
        require<T>(false, "add: incompatible shapes " + shape_str(av.shape) + " and " +
                              shape_str(bv.shape));
    }
    return push(std::move(node));
}

template <typename T>
typename TapeT<T>::Id TapeT<T>::mul(Id a, Id b) {
    const auto& av = nodes_[check(a)].value;
    const auto& bv = nodes_[check(b)].value;
    require<T>(av.shape == bv.shape, "mul: incompatible shapes " + shape_str(av.shape) + " and " +
                                         shape_str(bv.shape));
    Node node;
    node.op = Op::Mul;
    node.a = a;
    node.b = b;
    node.value = av;
    for (std::size_t i = 0; i < node.value.values.size(); ++i) node.value.values[i] *= bv.values[i];
    return push(std::move(node));
}

template <typename T>
typename TapeT<T>::Id TapeT<T>::scale(Id a, T s) {
    const auto& av = nodes_[check(a)].value;
    Node node;
    node.op = Op::Scale;
    node.a = a;
    node.s = s;
    node.value = av;
    for (auto& v : node.value.values) v *= s;
    return push(std::move(node));
}

template <typename T>
typename TapeT<T>::Id TapeT<T>::sin_op(Id a) {
    const auto& av = nodes_[check(a)].value;
    Node node;
    node.op = Op::Sin;
    node.a = a;
    node.value = av;
    for (auto& v : node.value.values) v = std::sin(v);
    return push(std::move(node));
}

template <typename T>
typename TapeT<T>::Id TapeT<T>::abs_op(Id a) {
    const auto& av = nodes_[check(a)].value;
    Node node;
    node.op = Op::Abs;
    node.a = a;
    node.value = av;
    for (auto& v : node.value.values) v = std::abs(v);
    return push(std::move(node));
}

template <typename T>
typename TapeT<T>::Id TapeT<T>::concat_cols(Id a, Id b) {
    const auto& av = nodes_[check(a)].value;
    const auto& bv = nodes_[check(b)].value;
    require<T>(is_matrix(av.shape) && is_matrix(bv.shape) && av.shape[0] == bv.shape[0],
               "concat_cols: incompatible shapes " + shape_str(av.shape) + " and " +
                   shape_str(bv.shape));
    const int B = av.shape[0], m = av.shape[1], n = bv.shape[1];
    Node node;
    node.op = Op::ConcatCols;
    node.a = a;
    node.b = b;
    node.i0 = m;
    node.value = TensorT<T>::zeros({B, m + n});
    for (int bi = 0; bi < B; ++bi) {
        T* out = node.value.values.data() + static_cast<std::int64_t>(bi) * (m + n);
        std::copy_n(av.values.data() + static_cast<std::int64_t>(bi) * m, m, out);
        std::copy_n(bv.values.data() + static_cast<std::int64_t>(bi) * n, n, out + m);
    }
    return push(std::move(node));
}

template <typename T>
typename TapeT<T>::Id TapeT<T>::concat_rows(Id a, Id b) {
    const auto& av = nodes_[check(a)].value;
    const auto& bv = nodes_[check(b)].value;
    require<T>(is_matrix(av.shape) && is_matrix(bv.shape) && av.shape[1] == bv.shape[1],
               "concat_rows: incompatible shapes " + shape_str(av.shape) + " and " +
                   shape_str(bv.shape));
    Node node;
    node.op = Op::ConcatRows;
    node.a = a;
    node.b = b;
    node.i0 = av.shape[0];
    node.value = TensorT<T>::zeros({av.shape[0] + bv.shape[0], av.shape[1]});
    std::copy(av.values.begin(), av.values.end(), node.value.values.begin());
    std::copy(bv.values.begin(), bv.values.end(), node.value.values.begin() + av.values.size());
    return push(std::move(node));
}

template <typename T>
typename TapeT<T>::Id TapeT<T>::slice_cols(Id a, int from, int to) {
    const auto& av = nodes_[check(a)].value;
    require<T>(is_matrix(av.shape) && from >= 0 && to <= av.shape[1] && from < to,
               "slice_cols: bad range on shape " + shape_str(av.shape));
    const int B = av.shape[0], n = av.shape[1], w = to - from;
    Node node;
    node.op = Op::SliceCols;
    node.a = a;
    node.i0 = from;
    node.i1 = to;
    node.value = TensorT<T>::zeros({B, w});
    for (int bi = 0; bi < B; ++bi)
        std::copy_n(av.values.data() + static_cast<std::int64_t>(bi) * n + from, w,
                    node.value.values.data() + static_cast<std::int64_t>(bi) * w);
    return push(std::move(node));
}

template <typename T>
typename TapeT<T>::Id TapeT<T>::mean_row_groups(Id a, int group) {
    const auto& av = nodes_[check(a)].value;
    require<T>(is_matrix(av.shape) && group >= 1 && av.shape[0] % group == 0,
               "mean_row_groups: rows of " + shape_str(av.shape) + " not divisible by group " +
                   std::to_string(group));
    const int B = av.shape[0] / group, n = av.shape[1];
    Node node;
    node.op = Op::MeanRowGroups;
    node.a = a;
    node.i0 = group;
    node.value = TensorT<T>::zeros({B, n});
    // Pairwise summation: exact when the group is a power of two and the
    // rows are identical, so a zero-width PSF reproduces the plain forward
    // bit for bit.
    std::vector<T> scratch;
    for (int bi = 0; bi < B; ++bi) {
        T* out = node.value.values.data() + static_cast<std::int64_t>(bi) * n;
        const T* in = av.values.data() + static_cast<std::int64_t>(bi) * group * n;
        scratch.assign(in, in + static_cast<std::int64_t>(group) * n);
        int m = group;
        while (m > 1) {
            const int half = m / 2;
            for (int k = 0; k < half; ++k)
                for (int j = 0; j < n; ++j)
                    scratch[static_cast<std::size_t>(k) * n + j] +=
                        scratch[static_cast<std::size_t>(k + half) * n + j];
            if (m % 2 == 1)
                for (int j = 0; j < n; ++j)
                    scratch[static_cast<std::size_t>(half - 1) * n + j] +=
                        scratch[static_cast<std::size_t>(m - 1) * n + j];
            m = half;
        }
        for (int j = 0; j < n; ++j) out[j] = scratch[static_cast<std::size_t>(j)] / group;
    }
    return push(std::move(node));
}

template <typename T>
typename TapeT<T>::Id TapeT<T>::weighted_sum(Id a, std::vector<T> w) {
    const auto& av = nodes_[check(a)].value;
    require<T>(static_cast<std::int64_t>(w.size()) == av.size(),
               "weighted_sum: weight count " + std::to_string(w.size()) + " vs tensor " +
                   shape_str(av.shape));
    Node node;
    node.op = Op::WeightedSum;
    node.a = a;
    node.value = TensorT<T>::zeros({1});
    T s = T(0);
    for (std::size_t i = 0; i < w.size(); ++i) s += w[i] * av.values[i];
    node.value.values[0] = s;
    node.fdata = std::move(w);
    return push(std::move(node));
}

template <typename T>
typename TapeT<T>::Id TapeT<T>::softmax_xent_sum(Id logits, std::vector<int> labels,
                                                 std::vector<T> w) {
    const auto& lv = nodes_[check(logits)].value;
    require<T>(is_matrix(lv.shape), "softmax_xent_sum: logits must be rank 2");
    const int B = lv.shape[0], C = lv.shape[1];
    require<T>(static_cast<int>(labels.size()) == B && static_cast<int>(w.size()) == B,
               "softmax_xent_sum: labels/weights must match batch " + std::to_string(B));
    for (int i = 0; i < B; ++i)
        require<T>(labels[i] >= 0 && labels[i] < C,
                   "softmax_xent_sum: label " + std::to_string(labels[i]) + " out of range");

    Node node;
    node.op = Op::SoftmaxXentSum;
    node.a = logits;
    node.value = TensorT<T>::zeros({1});
    T total = T(0);
    for (int i = 0; i < B; ++i) {
        const T* row = lv.values.data() + static_cast<std::int64_t>(i) * C;
        T mx = row[0];
        for (int c = 1; c < C; ++c) mx = std::max(mx, row[c]);
        T sum = T(0);
        for (int c = 0; c < C; ++c) sum += std::exp(row[c] - mx);
        const T lse = mx + std::log(sum);
        total += w[static_cast<std::size_t>(i)] * (lse - row[labels[static_cast<std::size_t>(i)]]);
    }
    node.value.values[0] = total;
    node.idata = std::move(labels);
    node.fdata = std::move(w);
    return push(std::move(node));
}

template <typename T>
typename TapeT<T>::Id TapeT<T>::interp_latent(Id latent, std::vector<double> coords,
                                              const LatticeExtent& extent) {
    const auto& lv = nodes_[check(latent)].value;
    require<T>(lv.shape.size() == 4, "interp_latent: latent must be rank 4");
    require<T>(coords.size() % 3 == 0, "interp_latent: coords must be B*3");
    const int nx = lv.shape[0], ny = lv.shape[1], nz = lv.shape[2], dz = lv.shape[3];
    const int B = static_cast<int>(coords.size() / 3);

    Node node;
    node.op = Op::InterpLatent;
    node.a = latent;
    node.extent = extent;
    node.value = TensorT<T>::zeros({B, dz});

    const int dims[3] = {nx, ny, nz};
    const double lo[3] = {extent.lo.x, extent.lo.y, extent.lo.z};
    const double hi[3] = {extent.hi.x, extent.hi.y, extent.hi.z};
    const T* codes = lv.values.data();
    T* out = node.value.values.data();

#pragma omp parallel for schedule(static)
    for (int bi = 0; bi < B; ++bi) {
        int i0[3], i1[3];
        double f[3];
        for (int c = 0; c < 3; ++c) {
            const double span = hi[c] - lo[c];
            double u = 0.0;
            if (dims[c] > 1 && span != 0.0)
                u = (coords[static_cast<std::size_t>(bi) * 3 + c] - lo[c]) / span * (dims[c] - 1);
            u = std::min(std::max(u, 0.0), static_cast<double>(dims[c] - 1));
            i0[c] = static_cast<int>(std::floor(u));
            if (i0[c] > dims[c] - 2) i0[c] = std::max(0, dims[c] - 2);
            i1[c] = std::min(i0[c] + 1, dims[c] - 1);
            f[c] = u - i0[c];
        }
        T* orow = out + static_cast<std::int64_t>(bi) * dz;
        for (int cz = 0; cz < 2; ++cz) {
            const int iz = cz ? i1[2] : i0[2];
            const double wz = cz ? f[2] : 1.0 - f[2];
            for (int cy = 0; cy < 2; ++cy) {
                const int iy = cy ? i1[1] : i0[1];
                const double wy = cy ? f[1] : 1.0 - f[1];
                for (int cx = 0; cx < 2; ++cx) {
                    const int ix = cx ? i1[0] : i0[0];
                    const T wgt = static_cast<T>((cx ? f[0] : 1.0 - f[0]) * wy * wz);
                    const T* cell =
                        codes + (static_cast<std::int64_t>(ix) +
                                 static_cast<std::int64_t>(nx) *
                                     (iy + static_cast<std::int64_t>(ny) * iz)) *
                                    dz;
                    for (int d = 0; d < dz; ++d) orow[d] += wgt * cell[d];
                }
            }
        }
    }
    node.ddata = std::move(coords);
    return push(std::move(node));
}

template <typename T>
void TapeT<T>::backward(Id loss) {
    Node& ln = nodes_[check(loss)];
    if (ln.value.size() != 1)
        throw std::invalid_argument("backward: loss must be scalar, got " +
                                    shape_str(ln.value.shape));
    // Pre-allocate gradients for every participating node so callers can
    // read a zero gradient when a branch received none.
    for (auto& n : nodes_)
        if (n.requires_grad) ensure_grad(n);
    ensure_grad(ln);
    ln.grad.values[0] = T(1);
    for (Id i = static_cast<Id>(nodes_.size()) - 1; i >= 0; --i) {
        Node& n = nodes_[static_cast<std::size_t>(i)];
        if (!n.requires_grad || n.grad.values.empty() || n.op == Op::Leaf) continue;
        backward_node(n);
    }
}

template <typename T>
void TapeT<T>::backward_node(Node& n) {
    Node* na = n.a >= 0 ? &nodes_[static_cast<std::size_t>(n.a)] : nullptr;
    Node* nb = n.b >= 0 ? &nodes_[static_cast<std::size_t>(n.b)] : nullptr;
    const bool ga = na && na->requires_grad;
    const bool gb = nb && nb->requires_grad;
    if (ga) ensure_grad(*na);
    if (gb) ensure_grad(*nb);
    const T* g = n.grad.values.data();

    switch (n.op) {
        case Op::MatMul: {
            const int B = na->value.shape[0], m = na->value.shape[1], nn = nb->value.shape[0];
            if (ga) {
                const T* W = nb->value.values.data();
                T* da = na->grad.values.data();
#pragma omp parallel for schedule(static)
                for (int bi = 0; bi < B; ++bi) {
                    const T* grow = g + static_cast<std::int64_t>(bi) * nn;
                    T* darow = da + static_cast<std::int64_t>(bi) * m;
                    for (int j = 0; j < nn; ++j) {
                        const T gj = grow[j];
                        const T* wrow = W + static_cast<std::int64_t>(j) * m;
                        for (int k = 0; k < m; ++k) darow[k] += gj * wrow[k];
                    }
                }
            }
            if (gb) {
                const T* A = na->value.values.data();
                T* dw = nb->grad.values.data();
#pragma omp parallel for schedule(static)
                for (int j = 0; j < nn; ++j) {
                    T* dwrow = dw + static_cast<std::int64_t>(j) * m;
                    for (int bi = 0; bi < B; ++bi) {
                        const T gj = g[static_cast<std::int64_t>(bi) * nn + j];
                        const T* arow = A + static_cast<std::int64_t>(bi) * m;
                        for (int k = 0; k < m; ++k) dwrow[k] += gj * arow[k];
                    }
                }
            }
            break;
        }
        case Op::Add: {
            if (ga)
                for (std::size_t i = 0; i < n.grad.values.size(); ++i) na->grad.values[i] += g[i];
            if (gb)
                for (std::size_t i = 0; i < n.grad.values.size(); ++i) nb->grad.values[i] += g[i];
            break;
        }
        case Op::AddRowBroadcast: {
            const int B = na->value.shape[0], nn = na->value.shape[1];
            if (ga)
                for (std::size_t i = 0; i < n.grad.values.size(); ++i) na->grad.values[i] += g[i];
            if (gb) {
                T* db = nb->grad.values.data();
                for (int bi = 0; bi < B; ++bi) {
                    const T* grow = g + static_cast<std::int64_t>(bi) * nn;
                    for (int j = 0; j < nn; ++j) db[j] += grow[j];
                }
            }
            break;
        }
        case Op::Mul: {
            if (ga)
                for (std::size_t i = 0; i < n.grad.values.size(); ++i)
                    na->grad.values[i] += g[i] * nb->value.values[i];
            if (gb)
                for (std::size_t i = 0; i < n.grad.values.size(); ++i)
                    nb->grad.values[i] += g[i] * na->value.values[i];
            break;
        }
        case Op::Scale: {
            if (ga)
                for (std::size_t i = 0; i < n.grad.values.size(); ++i)
                    na->grad.values[i] += n.s * g[i];
            break;
        }
        case Op::Sin: {
            if (ga)
                for (std::size_t i = 0; i < n.grad.values.size(); ++i)
                    na->grad.values[i] += g[i] * std::cos(na->value.values[i]);
            break;
        }
        case Op::Abs: {
            // Subgradient at zero is zero.
            if (ga)
                for (std::size_t i = 0; i < n.grad.values.size(); ++i) {
                    const T v = na->value.values[i];
                    na->grad.values[i] += v > T(0) ? g[i] : (v < T(0) ? -g[i] : T(0));
                }
            break;
        }
        case Op::ConcatCols: {
            const int B = n.value.shape[0], total = n.value.shape[1], m = n.i0;
            const int nn = total - m;
            for (int bi = 0; bi < B; ++bi) {
                const T* grow = g + static_cast<std::int64_t>(bi) * total;
                if (ga) {
                    T* da = na->grad.values.data() + static_cast<std::int64_t>(bi) * m;
                    for (int j = 0; j < m; ++j) da[j] += grow[j];
                }
                if (gb) {
                    T* db = nb->grad.values.data() + static_cast<std::int64_t>(bi) * nn;
                    for (int j = 0; j < nn; ++j) db[j] += grow[m + j];
                }
            }
            break;
        }
        case Op::ConcatRows: {
            const std::size_t na_count = na->value.values.size();
            if (ga)
                for (std::size_t i = 0; i < na_count; ++i) na->grad.values[i] += g[i];
            if (gb)
                for (std::size_t i = 0; i < nb->value.values.size(); ++i)
                    nb->grad.values[i] += g[na_count + i];
            break;
        }
        case Op::SliceCols: {
            const int B = n.value.shape[0], w = n.value.shape[1];
            const int src_n = na->value.shape[1];
            if (ga)
                for (int bi = 0; bi < B; ++bi) {
                    T* da = na->grad.values.data() + static_cast<std::int64_t>(bi) * src_n + n.i0;
                    const T* grow = g + static_cast<std::int64_t>(bi) * w;
                    for (int j = 0; j < w; ++j) da[j] += grow[j];
                }
            break;
        }
        case Op::MeanRowGroups: {
            const int B = n.value.shape[0], nn = n.value.shape[1], K = n.i0;
            if (ga) {
                const T inv = T(1) / static_cast<T>(K);
                T* da = na->grad.values.data();
                for (int bi = 0; bi < B; ++bi) {
                    const T* grow = g + static_cast<std::int64_t>(bi) * nn;
                    for (int k = 0; k < K; ++k) {
                        T* darow = da + (static_cast<std::int64_t>(bi) * K + k) * nn;
                        for (int j = 0; j < nn; ++j) darow[j] += grow[j] * inv;
                    }
                }
            }
            break;
        }
        case Op::WeightedSum: {
            if (ga) {
                const T g0 = g[0];
                for (std::size_t i = 0; i < n.fdata.size(); ++i)
                    na->grad.values[i] += g0 * n.fdata[i];
            }
            break;
        }
        case Op::SoftmaxXentSum: {
            if (!ga) break;
            const int B = na->value.shape[0], C = na->value.shape[1];
            const T g0 = g[0];
            const T* logits = na->value.values.data();
            T* dl = na->grad.values.data();
            for (int i = 0; i < B; ++i) {
                const T* row = logits + static_cast<std::int64_t>(i) * C;
                T* drow = dl + static_cast<std::int64_t>(i) * C;
                T mx = row[0];
                for (int c = 1; c < C; ++c) mx = std::max(mx, row[c]);
                T sum = T(0);
                for (int c = 0; c < C; ++c) sum += std::exp(row[c] - mx);
                const T wi = n.fdata[static_cast<std::size_t>(i)];
                for (int c = 0; c < C; ++c) {
                    T p = std::exp(row[c] - mx) / sum;
                    if (c == n.idata[static_cast<std::size_t>(i)]) p -= T(1);
                    drow[c] += g0 * wi * p;
                }
            }
            break;
        }
        case Op::InterpLatent: {
            if (!ga) break;
            const int B = n.value.shape[0], dz = n.value.shape[1];
            const int dims[3] = {na->value.shape[0], na->value.shape[1], na->value.shape[2]};
            const double lo[3] = {n.extent.lo.x, n.extent.lo.y, n.extent.lo.z};
            const double hi[3] = {n.extent.hi.x, n.extent.hi.y, n.extent.hi.z};
            T* dcodes = na->grad.values.data();
            // Serial scatter keeps accumulation order fixed.
            for (int bi = 0; bi < B; ++bi) {
                int i0[3], i1[3];
                double f[3];
                for (int c = 0; c < 3; ++c) {
                    const double span = hi[c] - lo[c];
                    double u = 0.0;
                    if (dims[c] > 1 && span != 0.0)
                        u = (n.ddata[static_cast<std::size_t>(bi) * 3 + c] - lo[c]) / span *
                            (dims[c] - 1);
                    u = std::min(std::max(u, 0.0), static_cast<double>(dims[c] - 1));
                    i0[c] = static_cast<int>(std::floor(u));
                    if (i0[c] > dims[c] - 2) i0[c] = std::max(0, dims[c] - 2);
                    i1[c] = std::min(i0[c] + 1, dims[c] - 1);
                    f[c] = u - i0[c];
                }
                const T* grow = g + static_cast<std::int64_t>(bi) * dz;
                for (int cz = 0; cz < 2; ++cz) {
                    const int iz = cz ? i1[2] : i0[2];
                    const double wz = cz ? f[2] : 1.0 - f[2];
                    for (int cy = 0; cy < 2; ++cy) {
                        const int iy = cy ? i1[1] : i0[1];
                        const double wy = cy ? f[1] : 1.0 - f[1];
                        for (int cx = 0; cx < 2; ++cx) {
                            const int ix = cx ? i1[0] : i0[0];
                            const T wgt = static_cast<T>((cx ? f[0] : 1.0 - f[0]) * wy * wz);
                            T* cell = dcodes + (static_cast<std::int64_t>(ix) +
                                                static_cast<std::int64_t>(dims[0]) *
                                                    (iy + static_cast<std::int64_t>(dims[1]) * iz)) *
                                                   dz;
                            for (int d = 0; d < dz; ++d) cell[d] += wgt * grow[d];
                        }
                    }
                }
            }
            break;
        }
        case Op::Leaf:
            break;
    }
}

template <typename T>
bool adam_step(const std::vector<TensorT<T>*>& params,
               const std::vector<const TensorT<T>*>& grads, AdamStateT<T>& state) {
    if (params.size() != grads.size() || params.size() != state.m.size())
        throw std::invalid_argument("adam_step: parameter/gradient/state count mismatch");
    for (std::size_t p = 0; p < params.size(); ++p) {
        if (grads[p]->values.size() != params[p]->values.size())
            throw std::invalid_argument("adam_step: gradient shape mismatch at parameter " +
                                        std::to_string(p));
        for (const T gv : grads[p]->values)
            if (!std::isfinite(static_cast<double>(gv))) {
                state.last_step_rejected = true;
                return false;
            }
    }
    state.last_step_rejected = false;
    state.step += 1;
    const double bc1 = 1.0 - std::pow(static_cast<double>(state.beta1), state.step);
    const double bc2 = 1.0 - std::pow(static_cast<double>(state.beta2), state.step);
    for (std::size_t p = 0; p < params.size(); ++p) {
        T* w = params[p]->values.data();
        const T* g = grads[p]->values.data();
        T* m = state.m[p].data();
        T* v = state.v[p].data();
        const std::size_t count = params[p]->values.size();
        for (std::size_t i = 0; i < count; ++i) {
            m[i] = state.beta1 * m[i] + (T(1) - state.beta1) * g[i];
            v[i] = state.beta2 * v[i] + (T(1) - state.beta2) * g[i] * g[i];
            const T mhat = static_cast<T>(m[i] / bc1);
            const T vhat = static_cast<T>(v[i] / bc2);
            w[i] -= state.lr * mhat / (std::sqrt(vhat) + state.eps);
        }
    }
    return true;
}

template class TapeT<float>;
template class TapeT<double>;
template bool adam_step<float>(const std::vector<TensorT<float>*>&,
                               const std::vector<const TensorT<float>*>&, AdamStateT<float>&);
template bool adam_step<double>(const std::vector<TensorT<double>*>&,
                                const std::vector<const TensorT<double>*>&, AdamStateT<double>&);

}  // namespace atlasloom::ad
