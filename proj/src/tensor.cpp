#include "hiertax/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace hiertax {

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

bool Tensor::all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.cols() != b.rows()) {
        throw std::invalid_argument("matmul: shape mismatch");
    }
    Tensor out(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        auto o = out.row(i);
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const double aik = a(i, k);
            if (aik == 0.0) {
                continue;
            }
            const auto br = b.row(k);
            for (std::size_t j = 0; j < o.size(); ++j) {
                o[j] += aik * br[j];
            }
        }
    }
    return out;
}

void add_matmul_at_b(const Tensor& a, const Tensor& b, Tensor& out) {
    if (a.rows() != b.rows() || out.rows() != a.cols() || out.cols() != b.cols()) {
        throw std::invalid_argument("add_matmul_at_b: shape mismatch");
    }
    for (std::size_t n = 0; n < a.rows(); ++n) {
        const auto ar = a.row(n);
        const auto br = b.row(n);
        for (std::size_t k = 0; k < ar.size(); ++k) {
            const double ank = ar[k];
            if (ank == 0.0) {
                continue;
            }
            auto o = out.row(k);
            for (std::size_t j = 0; j < br.size(); ++j) {
                o[j] += ank * br[j];
            }
        }
    }
}

Tensor matmul_a_bt(const Tensor& a, const Tensor& b) {
    if (a.cols() != b.cols()) {
        throw std::invalid_argument("matmul_a_bt: shape mismatch");
    }
    Tensor out(a.rows(), b.rows());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        const auto ar = a.row(i);
        for (std::size_t k = 0; k < b.rows(); ++k) {
            const auto br = b.row(k);
            double s = 0.0;
            for (std::size_t j = 0; j < ar.size(); ++j) {
                s += ar[j] * br[j];
            }
            out(i, k) = s;
        }
    }
    return out;
}

Tensor hconcat(std::span<const Tensor* const> parts) {
    if (parts.empty()) {
        return {};
    }
    const auto rows = parts.front()->rows();
    std::size_t cols = 0;
    for (const auto* p : parts) {
        if (p->rows() != rows) {
            throw std::invalid_argument("hconcat: row count mismatch");
        }
        cols += p->cols();
    }
    Tensor out(rows, cols);
    for (std::size_t r = 0; r < rows; ++r) {
        auto o = out.row(r);
        std::size_t at = 0;
        for (const auto* p : parts) {
            const auto src = p->row(r);
            std::copy(src.begin(), src.end(), o.begin() + static_cast<std::ptrdiff_t>(at));
            at += src.size();
        }
    }
    return out;
}

Tensor column_slice(const Tensor& t, std::size_t begin, std::size_t width) {
    if (begin + width > t.cols()) {
        throw std::invalid_argument("column_slice: out of range");
    }
    Tensor out(t.rows(), width);
    for (std::size_t r = 0; r < t.rows(); ++r) {
        const auto src = t.row(r).subspan(begin, width);
        std::copy(src.begin(), src.end(), out.row(r).begin());
    }
    return out;
}

Tensor gather_rows(const Tensor& t, std::span<const std::size_t> indices) {
    Tensor out(indices.size(), t.cols());
    for (std::size_t i = 0; i < indices.size(); ++i) {
        const auto src = t.row(indices[i]);
        std::copy(src.begin(), src.end(), out.row(i).begin());
    }
    return out;
}

} // namespace hiertax
