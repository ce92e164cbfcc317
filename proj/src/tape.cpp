// Copyright Contributors to the factorfields Project
// SPDX-License-Identifier: Apache-2.0

#include "factorfields/tape.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace factorfields {

namespace {

template <typename T>
T sigmoid(T x) {
    return x >= T(0) ? T(1) / (T(1) + std::exp(-x)) : std::exp(x) / (T(1) + std::exp(x));
}

template <typename T>
T softplus(T x) {
    // log(1 + e^x) without overflow
    return x > T(0) ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

}  // namespace

template <typename T>
typename Tape<T>::Var Tape<T>::push(Node n) {
    nodes_.push_back(std::move(n));
    return Var{nodes_.size() - 1};
}

template <typename T>
const typename Tape<T>::Node &Tape<T>::node(Var v) const {
    if (v.id >= nodes_.size()) throw std::logic_error("tape variable does not refer to a recorded node");
    return nodes_[v.id];
}

template <typename T>
typename Tape<T>::Node &Tape<T>::node(Var v) {
    if (v.id >= nodes_.size()) throw std::logic_error("tape variable does not refer to a recorded node");
    return nodes_[v.id];
}

template <typename T>
typename Tape<T>::Var Tape<T>::constant(std::size_t rows, std::size_t cols, std::vector<T> values) {
    if (values.size() != rows * cols) throw std::invalid_argument("constant: value count does not match shape");
    Node n;
    n.rows = rows;
    n.cols = cols;
    n.value = std::move(values);
    return push(std::move(n));
}

template <typename T>
typename Tape<T>::Var Tape<T>::parameter(ParamTensor<T> &p) {
    Node n;
    n.rows = 1;
    n.cols = p.size();
    n.value = p.values;
    n.requires_grad = p.learnable;
    ParamTensor<T> *pp = &p;
    n.back = [pp](Tape &t, std::size_t self) {
        const auto &g = t.nodes_[self].grad;
        for (std::size_t i = 0; i < g.size(); ++i) pp->grad[i] += g[i];
    };
    return push(std::move(n));
}

template <typename T>
typename Tape<T>::Var Tape<T>::gather(std::size_t rows, std::size_t cols, std::vector<GatherLookup<T>> lookups) {
    Node n;
    n.rows = rows;
    n.cols = cols;
    n.value.assign(rows * cols, T(0));
    for (const auto &lk : lookups) {
        if (lk.table == nullptr) throw std::invalid_argument("gather: lookup without table");
        const bool broadcast = lk.table_channels == 1 && lk.out_channels > 1;
        if (!broadcast && lk.out_channels != lk.table_channels)
            throw std::invalid_argument("gather: channel mismatch for table '" + lk.table->name + "'");
        if (lk.out_offset + lk.out_channels > cols) throw std::invalid_argument("gather: output columns out of range");
        if (lk.index.size() != rows * lk.corners || lk.weight.size() != rows * lk.corners)
            throw std::invalid_argument("gather: corner buffers do not match row count");
        const std::size_t table_rows = lk.table->size() / lk.table_channels;
        const T *tab = lk.table->values.data();
        for (std::size_t r = 0; r < rows; ++r) {
            T *__restrict out = n.value.data() + r * cols + lk.out_offset;
            for (std::size_t c = 0; c < lk.corners; ++c) {
                const std::size_t row = lk.index[r * lk.corners + c];
                if (row >= table_rows) throw std::out_of_range("gather: table row out of range in '" + lk.table->name + "'");
                const T w = lk.weight[r * lk.corners + c];
                const T *__restrict src = tab + row * lk.table_channels;
                if (broadcast) {
                    const T v = w * src[0];
                    for (std::size_t k = 0; k < lk.out_channels; ++k) out[k] += v;
                } else {
                    for (std::size_t k = 0; k < lk.out_channels; ++k) out[k] += w * src[k];
                }
            }
        }
        n.requires_grad = n.requires_grad || lk.table->learnable;
    }
    n.back = [lookups = std::move(lookups), rows, cols](Tape &t, std::size_t self) {
        const auto &g = t.nodes_[self].grad;
        for (const auto &lk : lookups) {
            if (!lk.table->learnable) continue;
            const bool broadcast = lk.table_channels == 1 && lk.out_channels > 1;
            T *gt = lk.table->grad.data();
            for (std::size_t r = 0; r < rows; ++r) {
                const T *__restrict gr = g.data() + r * cols + lk.out_offset;
                T gsum = T(0);
                if (broadcast)
                    for (std::size_t k = 0; k < lk.out_channels; ++k) gsum += gr[k];
                for (std::size_t c = 0; c < lk.corners; ++c) {
                    const std::size_t row = lk.index[r * lk.corners + c];
                    const T w = lk.weight[r * lk.corners + c];
                    T *__restrict dst = gt + row * lk.table_channels;
                    if (broadcast) {
                        dst[0] += w * gsum;
                    } else {
                        for (std::size_t k = 0; k < lk.out_channels; ++k) dst[k] += w * gr[k];
                    }
                }
            }
        }
    };
    return push(std::move(n));
}

template <typename T>
typename Tape<T>::Var Tape<T>::linear(Var x, ParamTensor<T> &weight, ParamTensor<T> *bias) {
    const Node &in = node(x);
    if (weight.shape.size() != 2 || weight.shape[1] != in.cols)
        throw std::invalid_argument("linear: weight '" + weight.name + "' does not match input width " +
                                    std::to_string(in.cols));
    const std::size_t out_dim = weight.shape[0];
    const std::size_t in_dim = in.cols;
    if (bias != nullptr && bias->size() != out_dim) throw std::invalid_argument("linear: bias size mismatch");
    const std::size_t rows = in.rows;

    std::vector<T> wt(in_dim * out_dim);
    for (std::size_t o = 0; o < out_dim; ++o)
        for (std::size_t i = 0; i < in_dim; ++i) wt[i * out_dim + o] = weight.values[o * in_dim + i];

    Node n;
    n.rows = rows;
    n.cols = out_dim;
    n.value.assign(rows * out_dim, T(0));
    const T *xv = in.value.data();
    for (std::size_t r = 0; r < rows; ++r) {
        T *__restrict y = n.value.data() + r * out_dim;
        if (bias != nullptr)
            for (std::size_t o = 0; o < out_dim; ++o) y[o] = bias->values[o];
        const T *xr = xv + r * in_dim;
        for (std::size_t i = 0; i < in_dim; ++i) {
            const T a = xr[i];
            if (a == T(0)) continue;
            const T *__restrict w = wt.data() + i * out_dim;
            for (std::size_t o = 0; o < out_dim; ++o) y[o] += a * w[o];
        }
    }
    n.requires_grad = in.requires_grad || weight.learnable || (bias != nullptr && bias->learnable);
    const std::size_t xid = x.id;
    ParamTensor<T> *wp = &weight;
    n.back = [xid, wp, bias, rows, in_dim, out_dim](Tape &t, std::size_t self) {
        const auto &g = t.nodes_[self].grad;
        Node &in = t.nodes_[xid];
        if (wp->learnable) {
            T *gw = wp->grad.data();
            for (std::size_t r = 0; r < rows; ++r) {
                const T *xr = in.value.data() + r * in_dim;
                const T *gr = g.data() + r * out_dim;
                for (std::size_t o = 0; o < out_dim; ++o) {
                    const T go = gr[o];
                    if (go == T(0)) continue;
                    T *__restrict row = gw + o * in_dim;
                    for (std::size_t i = 0; i < in_dim; ++i) row[i] += go * xr[i];
                }
            }
        }
        if (bias != nullptr && bias->learnable) {
            T *gb = bias->grad.data();
            for (std::size_t r = 0; r < rows; ++r) {
                const T *gr = g.data() + r * out_dim;
                for (std::size_t o = 0; o < out_dim; ++o) gb[o] += gr[o];
            }
        }
        if (in.requires_grad) {
            const T *w = wp->values.data();
            for (std::size_t r = 0; r < rows; ++r) {
                T *__restrict gx = in.grad.data() + r * in_dim;
                const T *gr = g.data() + r * out_dim;
                for (std::size_t o = 0; o < out_dim; ++o) {
                    const T go = gr[o];
                    if (go == T(0)) continue;
                    const T *__restrict wr = w + o * in_dim;
                    for (std::size_t i = 0; i < in_dim; ++i) gx[i] += go * wr[i];
                }
            }
        }
    };
    return push(std::move(n));
}

template <typename T>
typename Tape<T>::Var Tape<T>::activation(Var x, Activation a) {
    const Node &in = node(x);
    Node n;
    n.rows = in.rows;
    n.cols = in.cols;
    n.value = in.value;
    n.requires_grad = in.requires_grad;
    if (a == Activation::Relu) n.relu_input = x.id;
    switch (a) {
        case Activation::Identity: break;
        case Activation::Relu:
            for (T &v : n.value) v = v > T(0) ? v : T(0);
            break;
        case Activation::Sigmoid:
            for (T &v : n.value) v = sigmoid(v);
            break;
        case Activation::Softplus:
            for (T &v : n.value) v = softplus(v);
            break;
    }
    const std::size_t xid = x.id;
    n.back = [xid, a](Tape &t, std::size_t self) {
        Node &in = t.nodes_[xid];
        if (!in.requires_grad) return;
        const Node &out = t.nodes_[self];
        const std::size_t count = out.value.size();
        for (std::size_t i = 0; i < count; ++i) {
            const T g = out.grad[i];
            T d = T(1);
            switch (a) {
                case Activation::Identity: break;
                case Activation::Relu: d = in.value[i] > T(0) ? T(1) : T(0); break;
                case Activation::Sigmoid: d = out.value[i] * (T(1) - out.value[i]); break;
                case Activation::Softplus: d = sigmoid(in.value[i]); break;
            }
            in.grad[i] += g * d;
        }
    };
    return push(std::move(n));
}

template <typename T>
typename Tape<T>::Var Tape<T>::hadamard(Var a, Var b) {
    const Node &na = node(a);
    const Node &nb = node(b);
    if (na.rows != nb.rows || na.cols != nb.cols) throw std::invalid_argument("hadamard: shape mismatch");
    Node n;
    n.rows = na.rows;
    n.cols = na.cols;
    n.value.resize(na.value.size());
    for (std::size_t i = 0; i < n.value.size(); ++i) n.value[i] = na.value[i] * nb.value[i];
    n.requires_grad = na.requires_grad || nb.requires_grad;
    const std::size_t aid = a.id, bid = b.id;
    n.back = [aid, bid](Tape &t, std::size_t self) {
        const auto &g = t.nodes_[self].grad;
        Node &na = t.nodes_[aid];
        Node &nb = t.nodes_[bid];
        // Read both operands before writing so that a == b accumulates both terms.
        if (na.requires_grad)
            for (std::size_t i = 0; i < g.size(); ++i) na.grad[i] += g[i] * nb.value[i];
        if (nb.requires_grad)
            for (std::size_t i = 0; i < g.size(); ++i) nb.grad[i] += g[i] * na.value[i];
    };
    return push(std::move(n));
}

template <typename T>
typename Tape<T>::Var Tape<T>::concat(std::span<const Var> parts) {
    if (parts.empty()) throw std::invalid_argument("concat: no inputs");
    const std::size_t rows = node(parts[0]).rows;
    std::size_t cols = 0;
    std::vector<std::size_t> ids, offsets;
    for (Var p : parts) {
        const Node &np = node(p);
        if (np.rows != rows) throw std::invalid_argument("concat: row count mismatch");
        ids.push_back(p.id);
        offsets.push_back(cols);
        cols += np.cols;
    }
    Node n;
    n.rows = rows;
    n.cols = cols;
    n.value.resize(rows * cols);
    for (std::size_t j = 0; j < ids.size(); ++j) {
        const Node &np = nodes_[ids[j]];
        for (std::size_t r = 0; r < rows; ++r)
            std::copy_n(np.value.data() + r * np.cols, np.cols, n.value.data() + r * cols + offsets[j]);
        n.requires_grad = n.requires_grad || np.requires_grad;
    }
    n.back = [ids, offsets, rows, cols](Tape &t, std::size_t self) {
        const auto &g = t.nodes_[self].grad;
        for (std::size_t j = 0; j < ids.size(); ++j) {
            Node &np = t.nodes_[ids[j]];
            if (!np.requires_grad) continue;
            for (std::size_t r = 0; r < rows; ++r)
                for (std::size_t c = 0; c < np.cols; ++c) np.grad[r * np.cols + c] += g[r * cols + offsets[j] + c];
        }
    };
    return push(std::move(n));
}

template <typename T>
typename Tape<T>::Var Tape<T>::slice(Var x, std::size_t col_begin, std::size_t col_count) {
    const Node &in = node(x);
    if (col_begin + col_count > in.cols) throw std::invalid_argument("slice: column range out of bounds");
    Node n;
    n.rows = in.rows;
    n.cols = col_count;
    n.value.resize(in.rows * col_count);
    for (std::size_t r = 0; r < in.rows; ++r)
        std::copy_n(in.value.data() + r * in.cols + col_begin, col_count, n.value.data() + r * col_count);
    n.requires_grad = in.requires_grad;
    const std::size_t xid = x.id;
    n.back = [xid, col_begin, col_count](Tape &t, std::size_t self) {
        Node &in = t.nodes_[xid];
        if (!in.requires_grad) return;
        const auto &g = t.nodes_[self].grad;
        for (std::size_t r = 0; r < in.rows; ++r)
            for (std::size_t c = 0; c < col_count; ++c) in.grad[r * in.cols + col_begin + c] += g[r * col_count + c];
    };
    return push(std::move(n));
}

template <typename T>
typename Tape<T>::Var Tape<T>::scale_columns(Var x, std::vector<T> multipliers) {
    const Node &in = node(x);
    if (multipliers.size() != in.cols) throw std::invalid_argument("scale_columns: multiplier count mismatch");
    Node n;
    n.rows = in.rows;
    n.cols = in.cols;
    n.value.resize(in.value.size());
    for (std::size_t r = 0; r < in.rows; ++r)
        for (std::size_t c = 0; c < in.cols; ++c) n.value[r * in.cols + c] = in.value[r * in.cols + c] * multipliers[c];
    n.requires_grad = in.requires_grad;
    const std::size_t xid = x.id;
    n.back = [xid, m = std::move(multipliers)](Tape &t, std::size_t self) {
        Node &in = t.nodes_[xid];
        if (!in.requires_grad) return;
        const auto &g = t.nodes_[self].grad;
        for (std::size_t r = 0; r < in.rows; ++r)
            for (std::size_t c = 0; c < in.cols; ++c) in.grad[r * in.cols + c] += g[r * in.cols + c] * m[c];
    };
    return push(std::move(n));
}

template <typename T>
typename Tape<T>::Var Tape<T>::sum(Var x) {
    const Node &in = node(x);
    Node n;
    n.rows = 1;
    n.cols = 1;
    T s = T(0);
    for (T v : in.value) s += v;
    n.value = {s};
    n.requires_grad = in.requires_grad;
    const std::size_t xid = x.id;
    n.back = [xid](Tape &t, std::size_t self) {
        Node &in = t.nodes_[xid];
        if (!in.requires_grad) return;
        const T g = t.nodes_[self].grad[0];
        for (T &v : in.grad) v += g;
    };
    return push(std::move(n));
}

template <typename T>
typename Tape<T>::Var Tape<T>::mse(Var pred, std::span<const T> target) {
    const Node &in = node(pred);
    if (target.size() != in.value.size()) throw std::invalid_argument("mse: target size mismatch");
    if (in.value.empty()) throw std::invalid_argument("mse: empty prediction");
    Node n;
    n.rows = 1;
    n.cols = 1;
    double s = 0.0;
    for (std::size_t i = 0; i < target.size(); ++i) {
        const double d = double(in.value[i]) - double(target[i]);
        s += d * d;
    }
    n.value = {T(s / double(target.size()))};
    n.requires_grad = in.requires_grad;
    const std::size_t xid = pred.id;
    n.back = [xid, tgt = std::vector<T>(target.begin(), target.end())](Tape &t, std::size_t self) {
        Node &in = t.nodes_[xid];
        if (!in.requires_grad) return;
        const T scale = T(2) * t.nodes_[self].grad[0] / T(tgt.size());
        for (std::size_t i = 0; i < tgt.size(); ++i) in.grad[i] += scale * (in.value[i] - tgt[i]);
    };
    return push(std::move(n));
}

template <typename T>
typename Tape<T>::Var Tape<T>::composite(Var density, Var rgb, std::vector<T> deltas, std::size_t samples_per_ray,
                                         std::array<T, 3> background) {
    const Node &ns = node(density);
    const Node &nc = node(rgb);
    if (ns.cols != 1 || nc.cols != 3 || ns.rows != nc.rows)
        throw std::invalid_argument("composite: expected [N x 1] density and [N x 3] colour");
    if (samples_per_ray == 0 || ns.rows % samples_per_ray != 0 || deltas.size() != ns.rows)
        throw std::invalid_argument("composite: sample count does not divide the batch");
    const std::size_t rays = ns.rows / samples_per_ray;
    const std::size_t S = samples_per_ray;

    Node n;
    n.rows = rays;
    n.cols = 3;
    n.value.assign(rays * 3, T(0));
    // Per-sample alpha and transmittance before the sample, plus residual transmittance per ray.
    std::vector<T> alpha(rays * S), trans(rays * S), residual(rays);
    for (std::size_t r = 0; r < rays; ++r) {
        T tr = T(1);
        T *out = n.value.data() + r * 3;
        for (std::size_t i = 0; i < S; ++i) {
            const std::size_t s = r * S + i;
            const T a = T(1) - std::exp(-ns.value[s] * deltas[s]);
            alpha[s] = a;
            trans[s] = tr;
            const T w = tr * a;
            for (int c = 0; c < 3; ++c) out[c] += w * nc.value[s * 3 + c];
            tr *= (T(1) - a);
        }
        residual[r] = tr;
        for (int c = 0; c < 3; ++c) out[c] += tr * background[c];
    }
    n.requires_grad = ns.requires_grad || nc.requires_grad;
    const std::size_t sid = density.id, cid = rgb.id;
    n.back = [sid, cid, rays, S, background, deltas = std::move(deltas), alpha = std::move(alpha),
              trans = std::move(trans), residual = std::move(residual)](Tape &t, std::size_t self) {
        const auto &g = t.nodes_[self].grad;
        Node &ns = t.nodes_[sid];
        Node &nc = t.nodes_[cid];
        for (std::size_t r = 0; r < rays; ++r) {
            const T *gr = g.data() + r * 3;
            // remaining[c]: colour contributed by everything behind the current sample
            T remaining[3];
            for (int c = 0; c < 3; ++c) remaining[c] = residual[r] * background[c];
            for (std::size_t i = S; i-- > 0;) {
                const std::size_t s = r * S + i;
                const T w = trans[s] * alpha[s];
                const T after = trans[s] * (T(1) - alpha[s]);
                const T *col = nc.value.data() + s * 3;
                if (nc.requires_grad)
                    for (int c = 0; c < 3; ++c) nc.grad[s * 3 + c] += w * gr[c];
                if (ns.requires_grad) {
                    T d = T(0);
                    for (int c = 0; c < 3; ++c) d += gr[c] * (after * col[c] - remaining[c]);
                    ns.grad[s] += deltas[s] * d;
                }
                for (int c = 0; c < 3; ++c) remaining[c] += w * col[c];
            }
        }
    };
    return push(std::move(n));
}

template <typename T>
void Tape<T>::backward(Var loss) {
    if (nodes_.empty()) throw std::logic_error("backward: no forward pass has been recorded on this tape");
    Node &out = node(loss);
    if (out.rows != 1 || out.cols != 1) throw std::logic_error("backward: loss must be a scalar node");
    for (std::size_t i = 0; i <= loss.id; ++i) {
        Node &n = nodes_[i];
        if (n.requires_grad) n.grad.assign(n.value.size(), T(0));
    }
    if (!out.requires_grad) return;
    out.grad[0] = T(1);
    for (std::size_t i = loss.id + 1; i-- > 0;) {
        Node &n = nodes_[i];
        if (n.requires_grad && n.back) n.back(*this, i);
    }
}

template <typename T>
std::vector<std::uint8_t> Tape<T>::relu_pattern() const {
    std::vector<std::uint8_t> out;
    for (const Node &n : nodes_) {
        if (n.relu_input == std::numeric_limits<std::size_t>::max()) continue;
        for (T v : nodes_[n.relu_input].value) out.push_back(v > T(0) ? 1 : 0);
    }
    return out;
}

template class Tape<float>;
template class Tape<double>;

}  // namespace factorfields
