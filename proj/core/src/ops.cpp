#include "flash/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

#include "flash/fft.hpp"

namespace flash::ops {

namespace {

using MatR = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapR = Eigen::Map<MatR>;
using CMapR = Eigen::Map<const MatR>;

using detail::Node;

std::vector<double>& gbuf(Node& out, std::size_t i) { return out.inputs[i]->grad_buffer(); }
bool wants(const Node& out, std::size_t i) { return out.inputs[i]->requires_grad; }

// Row-by-row accumulation keeps the summation order independent of alignment.
template <class M>
void add_column_sums(const M& g, double* out) {
    for (Eigen::Index r = 0; r < g.rows(); ++r)
        for (Eigen::Index c = 0; c < g.cols(); ++c) out[c] += g(r, c);
}

[[noreturn]] void shape_error(const char* op, const std::string& what) {
    throw std::invalid_argument(std::string(op) + ": " + what);
}

std::vector<std::size_t> contiguous_strides(const Shape& s) {
    std::vector<std::size_t> st(s.size(), 1);
    for (std::size_t i = s.size(); i-- > 1;) st[i - 1] = st[i] * s[i];
    return st;
}

// ---- broadcasting -------------------------------------------------------

struct Broadcast {
    Shape out;
    std::vector<std::size_t> sa, sb;  // per-axis strides, 0 where broadcast
    bool same = false;
};

Broadcast plan_broadcast(const char* op, const Shape& a, const Shape& b) {
    if (a.size() != b.size())
        shape_error(op, "rank mismatch " + shape_str(a) + " vs " + shape_str(b));
    Broadcast p;
    p.same = a == b;
    p.out.resize(a.size());
    auto ca = contiguous_strides(a), cb = contiguous_strides(b);
    p.sa.resize(a.size());
    p.sb.resize(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i] != b[i] && a[i] != 1 && b[i] != 1)
            shape_error(op, "cannot broadcast " + shape_str(a) + " with " + shape_str(b));
        p.out[i] = std::max(a[i], b[i]);
        p.sa[i] = a[i] == 1 ? 0 : ca[i];
        p.sb[i] = b[i] == 1 ? 0 : cb[i];
    }
    return p;
}

// Calls fn(out_index, a_index, b_index) for every output element in order.
template <typename Fn>
void for_each_broadcast(const Broadcast& p, Fn&& fn) {
    const std::size_t n = shape_numel(p.out);
    if (p.same) {
        for (std::size_t i = 0; i < n; ++i) fn(i, i, i);
        return;
    }
    const std::size_t rank = p.out.size();
    if (rank == 0) {
        fn(0, 0, 0);
        return;
    }
    std::vector<std::size_t> idx(rank, 0);
    std::size_t ia = 0, ib = 0;
    const std::size_t inner = p.out[rank - 1];
    const std::size_t ia_step = p.sa[rank - 1], ib_step = p.sb[rank - 1];
    for (std::size_t o = 0; o < n; o += inner) {
        std::size_t a = ia, b = ib;
        for (std::size_t k = 0; k < inner; ++k, a += ia_step, b += ib_step) fn(o + k, a, b);
        // advance odometer over axes [0, rank-1)
        for (std::size_t ax = rank - 1; ax-- > 0;) {
            ++idx[ax];
            ia += p.sa[ax];
            ib += p.sb[ax];
            if (idx[ax] < p.out[ax]) break;
            ia -= p.sa[ax] * idx[ax];
            ib -= p.sb[ax] * idx[ax];
            idx[ax] = 0;
        }
    }
}

enum class BinOp { add, sub, mul };

Tensor binary(const char* name, BinOp op, const Tensor& a, const Tensor& b) {
    Broadcast p = plan_broadcast(name, a.shape(), b.shape());
    const auto& da = a.data();
    const auto& db = b.data();
    std::vector<double> out(shape_numel(p.out));
    switch (op) {
        case BinOp::add:
            for_each_broadcast(p, [&](std::size_t o, std::size_t i, std::size_t j) { out[o] = da[i] + db[j]; });
            break;
        case BinOp::sub:
            for_each_broadcast(p, [&](std::size_t o, std::size_t i, std::size_t j) { out[o] = da[i] - db[j]; });
            break;
        case BinOp::mul:
            for_each_broadcast(p, [&](std::size_t o, std::size_t i, std::size_t j) { out[o] = da[i] * db[j]; });
            break;
    }
    Shape shape = p.out;
    return Tensor::make_result(std::move(shape), std::move(out), {a, b}, [p, op](Node& n) {
        const auto& g = n.grad;
        const auto& xa = n.inputs[0]->data;
        const auto& xb = n.inputs[1]->data;
        if (wants(n, 0)) {
            auto& ga = gbuf(n, 0);
            if (op == BinOp::mul)
                for_each_broadcast(p, [&](std::size_t o, std::size_t i, std::size_t j) { ga[i] += g[o] * xb[j]; });
            else
                for_each_broadcast(p, [&](std::size_t o, std::size_t i, std::size_t) { ga[i] += g[o]; });
        }
        if (wants(n, 1)) {
            auto& gb = gbuf(n, 1);
            if (op == BinOp::mul)
                for_each_broadcast(p, [&](std::size_t o, std::size_t i, std::size_t j) { gb[j] += g[o] * xa[i]; });
            else if (op == BinOp::add)
                for_each_broadcast(p, [&](std::size_t o, std::size_t, std::size_t j) { gb[j] += g[o]; });
            else
                for_each_broadcast(p, [&](std::size_t o, std::size_t, std::size_t j) { gb[j] -= g[o]; });
        }
    });
}

// Elementwise map where the derivative is a function of (x, y).
template <typename F, typename DF>
Tensor unary(const Tensor& x, F f, DF df) {
    const auto& d = x.data();
    std::vector<double> out(d.size());
    for (std::size_t i = 0; i < d.size(); ++i) out[i] = f(d[i]);
    return Tensor::make_result(x.shape(), std::move(out), {x}, [df](Node& n) {
        auto& gx = gbuf(n, 0);
        const auto& xin = n.inputs[0]->data;
        for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += n.grad[i] * df(xin[i], n.data[i]);
    });
}

// Splits `shape` around `axis` into outer * len * inner.
struct AxisSplit {
    std::size_t outer = 1, len = 1, inner = 1;
};

AxisSplit split_axis(const char* op, const Shape& s, std::size_t axis) {
    if (axis >= s.size())
        shape_error(op, "axis " + std::to_string(axis) + " out of range for " + shape_str(s));
    AxisSplit a;
    for (std::size_t i = 0; i < axis; ++i) a.outer *= s[i];
    a.len = s[axis];
    for (std::size_t i = axis + 1; i < s.size(); ++i) a.inner *= s[i];
    return a;
}

std::vector<double> permute_values(std::span<const double> src, const Shape& shape,
                                   const std::vector<std::size_t>& perm) {
    const std::size_t rank = shape.size();
    auto st = contiguous_strides(shape);
    Shape out_shape(rank);
    std::vector<std::size_t> src_stride(rank);
    for (std::size_t i = 0; i < rank; ++i) {
        out_shape[i] = shape[perm[i]];
        src_stride[i] = st[perm[i]];
    }
    std::vector<double> out(src.size());
    if (src.empty()) return out;
    if (rank == 0) {
        out[0] = src[0];
        return out;
    }
    std::vector<std::size_t> idx(rank, 0);
    std::size_t off = 0;
    const std::size_t inner = out_shape[rank - 1], step = src_stride[rank - 1];
    for (std::size_t o = 0; o < out.size(); o += inner) {
        std::size_t s = off;
        for (std::size_t k = 0; k < inner; ++k, s += step) out[o + k] = src[s];
        for (std::size_t ax = rank - 1; ax-- > 0;) {
            ++idx[ax];
            off += src_stride[ax];
            if (idx[ax] < out_shape[ax]) break;
            off -= src_stride[ax] * idx[ax];
            idx[ax] = 0;
        }
    }
    return out;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) { return binary("add", BinOp::add, a, b); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary("sub", BinOp::sub, a, b); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary("mul", BinOp::mul, a, b); }

Tensor scale(const Tensor& x, double factor) {
    return unary(x, [factor](double v) { return v * factor; }, [factor](double, double) { return factor; });
}

Tensor square(const Tensor& x) {
    return unary(x, [](double v) { return v * v; }, [](double v, double) { return 2.0 * v; });
}

Tensor abs(const Tensor& x) {
    return unary(
        x, [](double v) { return std::abs(v); },
        [](double v, double) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); });
}

Tensor relu(const Tensor& x) {
    return unary(x, [](double v) { return v > 0.0 ? v : 0.0; }, [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor gelu(const Tensor& x) {
    constexpr double inv_sqrt2 = 0.70710678118654752440;
    const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
    const auto& d = x.data();
    std::vector<double> out(d.size()), cdf(d.size());
    for (std::size_t i = 0; i < d.size(); ++i) {
        cdf[i] = 0.5 * (1.0 + std::erf(d[i] * inv_sqrt2));
        out[i] = d[i] * cdf[i];
    }
    return Tensor::make_result(x.shape(), std::move(out), {x}, [cdf = std::move(cdf), inv_sqrt_2pi](Node& n) {
        auto& gx = gbuf(n, 0);
        const auto& xin = n.inputs[0]->data;
        for (std::size_t i = 0; i < gx.size(); ++i)
            gx[i] += n.grad[i] * (cdf[i] + xin[i] * inv_sqrt_2pi * std::exp(-0.5 * xin[i] * xin[i]));
    });
}

Tensor sigmoid(const Tensor& x) {
    return unary(
        x,
        [](double v) {
            if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
            const double e = std::exp(v);
            return e / (1.0 + e);
        },
        [](double, double y) { return y * (1.0 - y); });
}

Tensor softmax(const Tensor& x, std::size_t axis) {
    const AxisSplit s = split_axis("softmax", x.shape(), axis);
    const auto& d = x.data();
    std::vector<double> out(d.size());
    for (std::size_t o = 0; o < s.outer; ++o) {
        for (std::size_t in = 0; in < s.inner; ++in) {
            const std::size_t base = o * s.len * s.inner + in;
            double mx = d[base];
            for (std::size_t k = 1; k < s.len; ++k) mx = std::max(mx, d[base + k * s.inner]);
            double total = 0.0;
            for (std::size_t k = 0; k < s.len; ++k) {
                const double e = std::exp(d[base + k * s.inner] - mx);
                out[base + k * s.inner] = e;
                total += e;
            }
            for (std::size_t k = 0; k < s.len; ++k) out[base + k * s.inner] /= total;
        }
    }
    return Tensor::make_result(x.shape(), std::move(out), {x}, [s](Node& n) {
        auto& gx = gbuf(n, 0);
        const auto& y = n.data;
        const auto& g = n.grad;
        for (std::size_t o = 0; o < s.outer; ++o) {
            for (std::size_t in = 0; in < s.inner; ++in) {
                const std::size_t base = o * s.len * s.inner + in;
                double dot = 0.0;
                for (std::size_t k = 0; k < s.len; ++k) dot += g[base + k * s.inner] * y[base + k * s.inner];
                for (std::size_t k = 0; k < s.len; ++k) {
                    const std::size_t i = base + k * s.inner;
                    gx[i] += y[i] * (g[i] - dot);
                }
            }
        }
    });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& offset, double eps) {
    if (x.rank() == 0) shape_error("layer_norm", "scalar input");
    const std::size_t dim = x.shape().back();
    if (gain.numel() != dim || offset.numel() != dim)
        shape_error("layer_norm", "gain/offset length must equal last axis " + std::to_string(dim));
    const std::size_t rows = x.numel() / dim;
    const auto& d = x.data();
    const auto& g = gain.data();
    const auto& b = offset.data();
    std::vector<double> out(d.size());
    std::vector<double> mean(rows), inv(rows);
    for (std::size_t r = 0; r < rows; ++r) {
        const double* row = d.data() + r * dim;
        double mu = 0.0;
        for (std::size_t k = 0; k < dim; ++k) mu += row[k];
        mu /= static_cast<double>(dim);
        double var = 0.0;
        for (std::size_t k = 0; k < dim; ++k) var += (row[k] - mu) * (row[k] - mu);
        var /= static_cast<double>(dim);
        const double is = 1.0 / std::sqrt(var + eps);
        mean[r] = mu;
        inv[r] = is;
        for (std::size_t k = 0; k < dim; ++k) out[r * dim + k] = (row[k] - mu) * is * g[k] + b[k];
    }
    return Tensor::make_result(
        x.shape(), std::move(out), {x, gain, offset},
        [dim, rows, mean = std::move(mean), inv = std::move(inv)](Node& n) {
            const auto& xin = n.inputs[0]->data;
            const auto& gn = n.inputs[1]->data;
            const auto& gy = n.grad;
            const bool wx = wants(n, 0), wg = wants(n, 1), wb = wants(n, 2);
            std::vector<double> xhat(dim), dxhat(dim);
            for (std::size_t r = 0; r < rows; ++r) {
                const std::size_t base = r * dim;
                double sum_d = 0.0, sum_dx = 0.0;
                for (std::size_t k = 0; k < dim; ++k) {
                    xhat[k] = (xin[base + k] - mean[r]) * inv[r];
                    dxhat[k] = gy[base + k] * gn[k];
                    sum_d += dxhat[k];
                    sum_dx += dxhat[k] * xhat[k];
                }
                if (wx) {
                    auto& gx = gbuf(n, 0);
                    const double c = inv[r] / static_cast<double>(dim);
                    for (std::size_t k = 0; k < dim; ++k)
                        gx[base + k] += c * (static_cast<double>(dim) * dxhat[k] - sum_d - xhat[k] * sum_dx);
                }
                if (wg) {
                    auto& gg = gbuf(n, 1);
                    for (std::size_t k = 0; k < dim; ++k) gg[k] += gy[base + k] * xhat[k];
                }
                if (wb) {
                    auto& gb = gbuf(n, 2);
                    for (std::size_t k = 0; k < dim; ++k) gb[k] += gy[base + k];
                }
            }
        });
}

Tensor matmul(const Tensor& a, const Tensor& b, bool trans_a, bool trans_b) {
    const Shape& sa = a.shape();
    const Shape& sb = b.shape();
    if (sa.size() != sb.size() || (sa.size() != 2 && sa.size() != 3))
        shape_error("matmul", "expected matching rank 2 or 3, got " + shape_str(sa) + " and " + shape_str(sb));
    const bool batched = sa.size() == 3;
    const std::size_t batch = batched ? sa[0] : 1;
    if (batched && sb[0] != batch) shape_error("matmul", "batch mismatch " + shape_str(sa) + " vs " + shape_str(sb));
    const std::size_t ar = sa[sa.size() - 2], ac = sa.back();
    const std::size_t br = sb[sb.size() - 2], bc = sb.back();
    const std::size_t m = trans_a ? ac : ar, k = trans_a ? ar : ac;
    const std::size_t k2 = trans_b ? bc : br, nn = trans_b ? br : bc;
    if (k != k2) shape_error("matmul", "inner dims differ: " + shape_str(sa) + " x " + shape_str(sb));

    std::vector<double> out(batch * m * nn, 0.0);
    const auto& da = a.data();
    const auto& db = b.data();
    for (std::size_t i = 0; i < batch; ++i) {
        CMapR A(da.data() + i * ar * ac, ar, ac);
        CMapR B(db.data() + i * br * bc, br, bc);
        MapR C(out.data() + i * m * nn, m, nn);
        if (!trans_a && !trans_b) C.noalias() = A * B;
        else if (!trans_a && trans_b) C.noalias() = A * B.transpose();
        else if (trans_a && !trans_b) C.noalias() = A.transpose() * B;
        else C.noalias() = A.transpose() * B.transpose();
    }
    Shape shape = batched ? Shape{batch, m, nn} : Shape{m, nn};
    return Tensor::make_result(std::move(shape), std::move(out), {a, b},
                               [=](Node& n) {
                                   const auto& xa = n.inputs[0]->data;
                                   const auto& xb = n.inputs[1]->data;
                                   const bool wa = wants(n, 0), wb = wants(n, 1);
                                   for (std::size_t i = 0; i < batch; ++i) {
                                       CMapR A(xa.data() + i * ar * ac, ar, ac);
                                       CMapR B(xb.data() + i * br * bc, br, bc);
                                       CMapR G(n.grad.data() + i * m * nn, m, nn);
                                       if (wa) {
                                           MapR GA(gbuf(n, 0).data() + i * ar * ac, ar, ac);
                                           if (!trans_a && !trans_b) GA.noalias() += G * B.transpose();
                                           else if (!trans_a && trans_b) GA.noalias() += G * B;
                                           else if (trans_a && !trans_b) GA.noalias() += B * G.transpose();
                                           else GA.noalias() += B.transpose() * G.transpose();
                                       }
                                       if (wb) {
                                           MapR GB(gbuf(n, 1).data() + i * br * bc, br, bc);
                                           if (!trans_a && !trans_b) GB.noalias() += A.transpose() * G;
                                           else if (!trans_a && trans_b) GB.noalias() += G.transpose() * A;
                                           else if (trans_a && !trans_b) GB.noalias() += A * G;
                                           else GB.noalias() += G.transpose() * A.transpose();
                                       }
                                   }
                               });
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
    if (weight.rank() != 2) shape_error("linear", "weight must be [in, out], got " + shape_str(weight.shape()));
    const std::size_t in = weight.size(0), outd = weight.size(1);
    if (x.rank() == 0 || x.shape().back() != in)
        shape_error("linear", "input " + shape_str(x.shape()) + " incompatible with weight " +
                                  shape_str(weight.shape()));
    const bool has_bias = bias.defined();
    if (has_bias && bias.numel() != outd) shape_error("linear", "bias length must be " + std::to_string(outd));
    const std::size_t rows = x.numel() / in;

    std::vector<double> out(rows * outd);
    {
        CMapR X(x.data().data(), rows, in);
        CMapR W(weight.data().data(), in, outd);
        MapR Y(out.data(), rows, outd);
        Y.noalias() = X * W;
        if (has_bias) {
            Eigen::Map<const Eigen::RowVectorXd> bv(bias.data().data(), outd);
            Y.rowwise() += bv;
        }
    }
    Shape shape = x.shape();
    shape.back() = outd;
    std::vector<Tensor> inputs{x, weight};
    if (has_bias) inputs.push_back(bias);
    return Tensor::make_result(std::move(shape), std::move(out), std::move(inputs),
                               [rows, in, outd, has_bias](Node& n) {
                                   CMapR G(n.grad.data(), rows, outd);
                                   CMapR X(n.inputs[0]->data.data(), rows, in);
                                   CMapR W(n.inputs[1]->data.data(), in, outd);
                                   if (wants(n, 0)) {
                                       MapR GX(gbuf(n, 0).data(), rows, in);
                                       GX.noalias() += G * W.transpose();
                                   }
                                   if (wants(n, 1)) {
                                       MapR GW(gbuf(n, 1).data(), in, outd);
                                       GW.noalias() += X.transpose() * G;
                                   }
                                   if (has_bias && wants(n, 2)) {
                                       add_column_sums(G, gbuf(n, 2).data());
                                   }
                               });
}

Tensor reshape(const Tensor& x, Shape shape) {
    if (shape_numel(shape) != x.numel())
        shape_error("reshape", "cannot reshape " + shape_str(x.shape()) + " to " + shape_str(shape));
    std::vector<double> out(x.data().begin(), x.data().end());
    return Tensor::make_result(std::move(shape), std::move(out), {x},
                               [](Node& n) { n.inputs[0]->accumulate(std::move(n.grad)); });
}

Tensor permute(const Tensor& x, const std::vector<std::size_t>& perm) {
    const Shape& s = x.shape();
    if (perm.size() != s.size()) shape_error("permute", "permutation rank mismatch");
    std::vector<std::size_t> inverse(perm.size(), perm.size());
    for (std::size_t i = 0; i < perm.size(); ++i) {
        if (perm[i] >= perm.size() || inverse[perm[i]] != perm.size())
            shape_error("permute", "invalid permutation");
        inverse[perm[i]] = i;
    }
    Shape out_shape(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) out_shape[i] = s[perm[i]];
    auto out = permute_values(x.data(), s, perm);
    Shape os = out_shape;
    return Tensor::make_result(std::move(out_shape), std::move(out), {x},
                               [os, inverse](Node& n) {
                                   n.inputs[0]->accumulate(permute_values(n.grad, os, inverse));
                               });
}

namespace {

// Destination flat index for every source element under a per-axis roll.
std::vector<std::size_t> roll_map(const Shape& s, const std::vector<std::ptrdiff_t>& shifts) {
    const std::size_t rank = s.size();
    auto st = contiguous_strides(s);
    const std::size_t n = shape_numel(s);
    std::vector<std::size_t> dest(n);
    std::vector<std::size_t> norm(rank);
    for (std::size_t a = 0; a < rank; ++a) {
        const auto len = static_cast<std::ptrdiff_t>(s[a]);
        norm[a] = len == 0 ? 0 : static_cast<std::size_t>(((shifts[a] % len) + len) % len);
    }
    std::vector<std::size_t> idx(rank, 0);
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t d = 0;
        for (std::size_t a = 0; a < rank; ++a) d += ((idx[a] + norm[a]) % s[a]) * st[a];
        dest[i] = d;
        for (std::size_t a = rank; a-- > 0;) {
            if (++idx[a] < s[a]) break;
            idx[a] = 0;
        }
    }
    return dest;
}

}  // namespace

Tensor roll(const Tensor& x, const std::vector<std::ptrdiff_t>& shifts) {
    if (shifts.size() != x.rank()) shape_error("roll", "one shift per axis required");
    auto dest = roll_map(x.shape(), shifts);
    const auto& d = x.data();
    std::vector<double> out(d.size());
    for (std::size_t i = 0; i < d.size(); ++i) out[dest[i]] = d[i];
    return Tensor::make_result(x.shape(), std::move(out), {x}, [dest = std::move(dest)](Node& n) {
        auto& gx = gbuf(n, 0);
        for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += n.grad[dest[i]];
    });
}

Tensor slice(const Tensor& x, std::size_t axis, std::size_t begin, std::size_t end) {
    const AxisSplit s = split_axis("slice", x.shape(), axis);
    if (begin > end || end > s.len) shape_error("slice", "range out of bounds");
    const std::size_t len = end - begin;
    Shape shape = x.shape();
    shape[axis] = len;
    const auto& d = x.data();
    std::vector<double> out(s.outer * len * s.inner);
    for (std::size_t o = 0; o < s.outer; ++o)
        std::copy_n(d.begin() + static_cast<std::ptrdiff_t>((o * s.len + begin) * s.inner), len * s.inner,
                    out.begin() + static_cast<std::ptrdiff_t>(o * len * s.inner));
    return Tensor::make_result(std::move(shape), std::move(out), {x}, [s, begin, len](Node& n) {
        auto& gx = gbuf(n, 0);
        for (std::size_t o = 0; o < s.outer; ++o)
            for (std::size_t k = 0; k < len * s.inner; ++k)
                gx[(o * s.len + begin) * s.inner + k] += n.grad[o * len * s.inner + k];
    });
}

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
    if (parts.empty()) shape_error("concat", "no inputs");
    Shape shape = parts[0].shape();
    if (axis >= shape.size()) shape_error("concat", "axis out of range");
    std::vector<std::size_t> lens;
    std::size_t total = 0;
    for (const auto& p : parts) {
        Shape ps = p.shape();
        if (ps.size() != shape.size()) shape_error("concat", "rank mismatch");
        for (std::size_t i = 0; i < ps.size(); ++i)
            if (i != axis && ps[i] != shape[i])
                shape_error("concat", "shape mismatch " + shape_str(ps) + " vs " + shape_str(shape));
        lens.push_back(ps[axis]);
        total += ps[axis];
    }
    const AxisSplit s = split_axis("concat", shape, axis);
    shape[axis] = total;
    std::vector<double> out(s.outer * total * s.inner);
    std::size_t offset = 0;
    for (std::size_t p = 0; p < parts.size(); ++p) {
        const auto& d = parts[p].data();
        for (std::size_t o = 0; o < s.outer; ++o)
            std::copy_n(d.begin() + static_cast<std::ptrdiff_t>(o * lens[p] * s.inner), lens[p] * s.inner,
                        out.begin() + static_cast<std::ptrdiff_t>((o * total + offset) * s.inner));
        offset += lens[p];
    }
    return Tensor::make_result(std::move(shape), std::move(out), parts, [s, lens, total](Node& n) {
        std::size_t off = 0;
        for (std::size_t p = 0; p < lens.size(); ++p) {
            if (wants(n, p)) {
                auto& g = gbuf(n, p);
                for (std::size_t o = 0; o < s.outer; ++o)
                    for (std::size_t k = 0; k < lens[p] * s.inner; ++k)
                        g[o * lens[p] * s.inner + k] += n.grad[(o * total + off) * s.inner + k];
            }
            off += lens[p];
        }
    });
}

Tensor index_select(const Tensor& table, const std::vector<std::size_t>& rows) {
    if (table.rank() == 0) shape_error("index_select", "scalar table");
    const std::size_t nrows = table.size(0);
    const std::size_t width = table.numel() / nrows;
    const auto& d = table.data();
    std::vector<double> out(rows.size() * width);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i] >= nrows) shape_error("index_select", "row index out of range");
        std::copy_n(d.begin() + static_cast<std::ptrdiff_t>(rows[i] * width), width,
                    out.begin() + static_cast<std::ptrdiff_t>(i * width));
    }
    Shape shape = table.shape();
    shape[0] = rows.size();
    return Tensor::make_result(std::move(shape), std::move(out), {table}, [rows, width](Node& n) {
        auto& g = gbuf(n, 0);
        for (std::size_t i = 0; i < rows.size(); ++i)
            for (std::size_t k = 0; k < width; ++k) g[rows[i] * width + k] += n.grad[i * width + k];
    });
}

Tensor sum(const Tensor& x) {
    double total = 0.0;
    for (double v : x.data()) total += v;
    return Tensor::make_result(Shape{}, {total}, {x}, [](Node& n) {
        auto& g = gbuf(n, 0);
        for (auto& v : g) v += n.grad[0];
    });
}

Tensor mean(const Tensor& x) {
    const double count = static_cast<double>(x.numel());
    return scale(sum(x), 1.0 / count);
}

Tensor mean_axis(const Tensor& x, std::size_t axis) {
    const AxisSplit s = split_axis("mean_axis", x.shape(), axis);
    Shape shape = x.shape();
    shape[axis] = 1;
    const auto& d = x.data();
    std::vector<double> out(s.outer * s.inner, 0.0);
    const double inv = 1.0 / static_cast<double>(s.len);
    for (std::size_t o = 0; o < s.outer; ++o)
        for (std::size_t k = 0; k < s.len; ++k)
            for (std::size_t in = 0; in < s.inner; ++in) out[o * s.inner + in] += d[(o * s.len + k) * s.inner + in];
    for (auto& v : out) v *= inv;
    return Tensor::make_result(std::move(shape), std::move(out), {x}, [s, inv](Node& n) {
        auto& g = gbuf(n, 0);
        for (std::size_t o = 0; o < s.outer; ++o)
            for (std::size_t k = 0; k < s.len; ++k)
                for (std::size_t in = 0; in < s.inner; ++in)
                    g[(o * s.len + k) * s.inner + in] += n.grad[o * s.inner + in] * inv;
    });
}

Tensor max_axis(const Tensor& x, std::size_t axis) {
    const AxisSplit s = split_axis("max_axis", x.shape(), axis);
    if (s.len == 0) shape_error("max_axis", "empty axis");
    Shape shape = x.shape();
    shape[axis] = 1;
    const auto& d = x.data();
    std::vector<double> out(s.outer * s.inner);
    std::vector<std::size_t> arg(s.outer * s.inner);
    for (std::size_t o = 0; o < s.outer; ++o)
        for (std::size_t in = 0; in < s.inner; ++in) {
            std::size_t best = (o * s.len) * s.inner + in;
            for (std::size_t k = 1; k < s.len; ++k) {
                const std::size_t i = (o * s.len + k) * s.inner + in;
                if (d[i] > d[best]) best = i;
            }
            out[o * s.inner + in] = d[best];
            arg[o * s.inner + in] = best;
        }
    return Tensor::make_result(std::move(shape), std::move(out), {x}, [arg = std::move(arg)](Node& n) {
        auto& g = gbuf(n, 0);
        for (std::size_t i = 0; i < arg.size(); ++i) g[arg[i]] += n.grad[i];
    });
}

Tensor dropout(const Tensor& x, double p, Rng& rng, bool training) {
    if (!(p >= 0.0 && p < 1.0)) throw std::invalid_argument("dropout: p must lie in [0, 1)");
    if (!training || p == 0.0) return x;
    const double keep_scale = 1.0 / (1.0 - p);
    const auto& d = x.data();
    std::vector<double> mask(d.size());
    std::vector<double> out(d.size());
    for (std::size_t i = 0; i < d.size(); ++i) {
        mask[i] = rng.uniform() >= p ? keep_scale : 0.0;
        out[i] = d[i] * mask[i];
    }
    return Tensor::make_result(x.shape(), std::move(out), {x}, [mask = std::move(mask)](Node& n) {
        auto& g = gbuf(n, 0);
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * mask[i];
    });
}

namespace {

// Column matrix [H*W, k*k*Cin]; out-of-image taps stay zero.
void im2col(const double* x, std::size_t h, std::size_t w, std::size_t cin, std::size_t k, PadMode pad,
            double* cols) {
    const auto r = static_cast<std::ptrdiff_t>(k / 2);
    const std::size_t row_len = k * k * cin;
    for (std::size_t i = 0; i < h; ++i)
        for (std::size_t j = 0; j < w; ++j) {
            double* dst = cols + (i * w + j) * row_len;
            for (std::size_t di = 0; di < k; ++di) {
                const auto si = static_cast<std::ptrdiff_t>(i) + static_cast<std::ptrdiff_t>(di) - r;
                for (std::size_t dj = 0; dj < k; ++dj, dst += cin) {
                    auto sj = static_cast<std::ptrdiff_t>(j) + static_cast<std::ptrdiff_t>(dj) - r;
                    if (si < 0 || si >= static_cast<std::ptrdiff_t>(h)) continue;
                    if (pad == PadMode::circular_horizontal) {
                        const auto ww = static_cast<std::ptrdiff_t>(w);
                        sj = ((sj % ww) + ww) % ww;
                    } else if (sj < 0 || sj >= static_cast<std::ptrdiff_t>(w)) {
                        continue;
                    }
                    std::copy_n(x + (static_cast<std::size_t>(si) * w + static_cast<std::size_t>(sj)) * cin, cin, dst);
                }
            }
        }
}

void col2im_add(const double* cols, std::size_t h, std::size_t w, std::size_t cin, std::size_t k, PadMode pad,
                double* gx) {
    const auto r = static_cast<std::ptrdiff_t>(k / 2);
    const std::size_t row_len = k * k * cin;
    for (std::size_t i = 0; i < h; ++i)
        for (std::size_t j = 0; j < w; ++j) {
            const double* src = cols + (i * w + j) * row_len;
            for (std::size_t di = 0; di < k; ++di) {
                const auto si = static_cast<std::ptrdiff_t>(i) + static_cast<std::ptrdiff_t>(di) - r;
                for (std::size_t dj = 0; dj < k; ++dj, src += cin) {
                    auto sj = static_cast<std::ptrdiff_t>(j) + static_cast<std::ptrdiff_t>(dj) - r;
                    if (si < 0 || si >= static_cast<std::ptrdiff_t>(h)) continue;
                    if (pad == PadMode::circular_horizontal) {
                        const auto ww = static_cast<std::ptrdiff_t>(w);
                        sj = ((sj % ww) + ww) % ww;
                    } else if (sj < 0 || sj >= static_cast<std::ptrdiff_t>(w)) {
                        continue;
                    }
                    double* dst = gx + (static_cast<std::size_t>(si) * w + static_cast<std::size_t>(sj)) * cin;
                    for (std::size_t c = 0; c < cin; ++c) dst[c] += src[c];
                }
            }
        }
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, PadMode pad) {
    if (x.rank() != 3) shape_error("conv2d", "input must be [H, W, Cin], got " + shape_str(x.shape()));
    if (weight.rank() != 4 || weight.size(0) != weight.size(1))
        shape_error("conv2d", "weight must be [k, k, Cin, Cout], got " + shape_str(weight.shape()));
    const std::size_t h = x.size(0), w = x.size(1), cin = x.size(2);
    const std::size_t k = weight.size(0), cout = weight.size(3);
    if (k % 2 == 0) shape_error("conv2d", "kernel size must be odd");
    if (weight.size(2) != cin)
        shape_error("conv2d", "weight expects " + std::to_string(weight.size(2)) + " input channels, got " +
                                  std::to_string(cin));
    const bool has_bias = bias.defined();
    if (has_bias && bias.numel() != cout) shape_error("conv2d", "bias length mismatch");

    const std::size_t row_len = k * k * cin;
    const std::size_t pixels = h * w;
    std::vector<double> out(pixels * cout);
    {
        std::vector<double> cols(pixels * row_len, 0.0);
        im2col(x.data().data(), h, w, cin, k, pad, cols.data());
        CMapR C(cols.data(), pixels, row_len);
        CMapR W(weight.data().data(), row_len, cout);
        MapR Y(out.data(), pixels, cout);
        Y.noalias() = C * W;
        if (has_bias) Y.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(bias.data().data(), cout);
    }
    std::vector<Tensor> inputs{x, weight};
    if (has_bias) inputs.push_back(bias);
    return Tensor::make_result(
        Shape{h, w, cout}, std::move(out), std::move(inputs), [=](Node& n) {
            CMapR G(n.grad.data(), pixels, cout);
            if (wants(n, 1)) {
                std::vector<double> cols(pixels * row_len, 0.0);
                im2col(n.inputs[0]->data.data(), h, w, cin, k, pad, cols.data());
                CMapR C(cols.data(), pixels, row_len);
                MapR GW(gbuf(n, 1).data(), row_len, cout);
                GW.noalias() += C.transpose() * G;
            }
            if (wants(n, 0)) {
                CMapR W(n.inputs[1]->data.data(), row_len, cout);
                std::vector<double> gcols(pixels * row_len);
                MapR GC(gcols.data(), pixels, row_len);
                GC.noalias() = G * W.transpose();
                col2im_add(gcols.data(), h, w, cin, k, pad, gbuf(n, 0).data());
            }
            if (has_bias && wants(n, 2)) {
                add_column_sums(G, gbuf(n, 2).data());
            }
        });
}

Tensor fft2d(const Tensor& x) {
    if (x.rank() != 2) shape_error("fft2d", "input must be [H, W]");
    const std::size_t h = x.size(0), w = x.size(1);
    ComplexGrid f = flash::fft2d(x.data(), h, w);
    std::vector<double> out(h * w * 2);
    for (std::size_t i = 0; i < h * w; ++i) {
        out[2 * i] = f.real[i];
        out[2 * i + 1] = f.imag[i];
    }
    // Adjoint of the DFT on a real input: Re(unnormalised inverse DFT of the
    // upstream complex gradient).
    return Tensor::make_result(Shape{h, w, 2}, std::move(out), {x}, [h, w](Node& n) {
        ComplexGrid g(h, w);
        for (std::size_t i = 0; i < h * w; ++i) {
            g.real[i] = n.grad[2 * i];
            g.imag[i] = n.grad[2 * i + 1];
        }
        ComplexGrid back = ifft2d_unnormalized(g);
        auto& gx = gbuf(n, 0);
        for (std::size_t i = 0; i < h * w; ++i) gx[i] += back.real[i];
    });
}

Tensor ifft2d_real(const Tensor& c) {
    if (c.rank() != 3 || c.size(2) != 2) shape_error("ifft2d_real", "input must be [H, W, 2]");
    const std::size_t h = c.size(0), w = c.size(1);
    ComplexGrid in(h, w);
    const auto& d = c.data();
    for (std::size_t i = 0; i < h * w; ++i) {
        in.real[i] = d[2 * i];
        in.imag[i] = d[2 * i + 1];
    }
    InverseResult r = flash::ifft2d(in);
    // d(Re ifft)/dC is the forward DFT of the real upstream gradient over H*W.
    return Tensor::make_result(Shape{h, w}, std::move(r.values), {c}, [h, w](Node& n) {
        ComplexGrid f = flash::fft2d(n.grad, h, w);
        const double s = 1.0 / static_cast<double>(h * w);
        auto& gc = gbuf(n, 0);
        for (std::size_t i = 0; i < h * w; ++i) {
            gc[2 * i] += f.real[i] * s;
            gc[2 * i + 1] += f.imag[i] * s;
        }
    });
}

Tensor complex_abs(const Tensor& c) {
    if (c.rank() != 3 || c.size(2) != 2) shape_error("complex_abs", "input must be [H, W, 2]");
    const std::size_t n = c.size(0) * c.size(1);
    const auto& d = c.data();
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = std::hypot(d[2 * i], d[2 * i + 1]);
    return Tensor::make_result(Shape{c.size(0), c.size(1)}, std::move(out), {c}, [n](Node& node) {
        auto& g = gbuf(node, 0);
        const auto& d = node.inputs[0]->data;
        for (std::size_t i = 0; i < n; ++i) {
            const double m = node.data[i];
            if (m == 0.0) continue;  // subgradient 0 at the origin
            g[2 * i] += node.grad[i] * d[2 * i] / m;
            g[2 * i + 1] += node.grad[i] * d[2 * i + 1] / m;
        }
    });
}

}  // namespace flash::ops
