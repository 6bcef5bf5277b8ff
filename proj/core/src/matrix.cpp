#include "kite/matrix.hpp"

#include <cmath>
#include <string>

#include "kite/errors.hpp"

namespace kite {

namespace {

std::string shape_str(const Matrix& m) {
    return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

}  // namespace

void Matrix::set_row(std::size_t r, std::span<const float> values) {
    if (values.size() != cols_) {
        throw ShapeError("set_row: expected " + std::to_string(cols_) +
                         " values, got " + std::to_string(values.size()));
    }
    std::copy(values.begin(), values.end(), data_.begin() + r * cols_);
}

Matrix Matrix::slice_rows(std::size_t first, std::size_t last) const {
    Matrix out(last - first, cols_);
    std::copy(data_.begin() + first * cols_, data_.begin() + last * cols_,
              out.data());
    return out;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) {
        throw ShapeError("matmul: lhs " + shape_str(a) +
                         " incompatible with rhs " + shape_str(b));
    }
    return matmul_cols(a, b, 0, b.cols());
}

Matrix matmul_cols(const Matrix& a, const Matrix& b, std::size_t col_begin,
                   std::size_t ncols) {
    if (a.cols() != b.rows()) {
        throw ShapeError("matmul: lhs " + shape_str(a) +
                         " incompatible with rhs " + shape_str(b));
    }
    if (col_begin + ncols > b.cols()) {
        throw ShapeError("matmul: column block [" + std::to_string(col_begin) +
                         ", " + std::to_string(col_begin + ncols) +
                         ") exceeds rhs " + shape_str(b));
    }
    Matrix out(a.rows(), ncols);
    const std::size_t inner = a.cols();
    for (std::size_t i = 0; i < a.rows(); ++i) {
        const float* arow = a.data() + i * inner;
        for (std::size_t j = 0; j < ncols; ++j) {
            double acc = 0.0;
            const float* bcol = b.data() + col_begin + j;
            for (std::size_t k = 0; k < inner; ++k) {
                acc += static_cast<double>(arow[k]) *
                       static_cast<double>(bcol[k * b.cols()]);
            }
            out.at(i, j) = static_cast<float>(acc);
        }
    }
    return out;
}

Matrix softmax_rows(const Matrix& scores, float scale) {
    Matrix out(scores.rows(), scores.cols());
    for (std::size_t i = 0; i < scores.rows(); ++i) {
        double max_val = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < scores.cols(); ++j) {
            const float s = scores.at(i, j);
            if (s == kMasked) continue;
            const double scaled = static_cast<double>(s) * scale;
            if (scaled > max_val) max_val = scaled;
        }
        if (max_val == -std::numeric_limits<double>::infinity()) {
            throw DegenerateMaskError("softmax_rows: row " + std::to_string(i) +
                                      " is fully masked");
        }
        double sum = 0.0;
        for (std::size_t j = 0; j < scores.cols(); ++j) {
            const float s = scores.at(i, j);
            if (s == kMasked) {
                out.at(i, j) = 0.0f;
                continue;
            }
            const double e = std::exp(static_cast<double>(s) * scale - max_val);
            out.at(i, j) = static_cast<float>(e);
            sum += e;
        }
        for (std::size_t j = 0; j < scores.cols(); ++j) {
            if (scores.at(i, j) != kMasked) {
                out.at(i, j) = static_cast<float>(out.at(i, j) / sum);
            }
        }
    }
    return out;
}

Matrix apply_rope(const Matrix& states, std::span<const std::size_t> positions,
                  float base) {
    if (states.cols() % 2 != 0) {
        throw ShapeError("apply_rope: dimension " + std::to_string(states.cols()) +
                         " is odd");
    }
    if (positions.size() != states.rows()) {
        throw ShapeError("apply_rope: " + std::to_string(positions.size()) +
                         " positions for " + std::to_string(states.rows()) +
                         " rows");
    }
    const std::size_t half = states.cols() / 2;
    Matrix out(states.rows(), states.cols());
    for (std::size_t r = 0; r < states.rows(); ++r) {
        const double pos = static_cast<double>(positions[r]);
        for (std::size_t i = 0; i < half; ++i) {
            const double freq = std::pow(static_cast<double>(base),
                                         -2.0 * static_cast<double>(i) /
                                             static_cast<double>(states.cols()));
            const double angle = pos * freq;
            const double c = std::cos(angle);
            const double s = std::sin(angle);
            const double x = states.at(r, 2 * i);
            const double y = states.at(r, 2 * i + 1);
            out.at(r, 2 * i) = static_cast<float>(x * c - y * s);
            out.at(r, 2 * i + 1) = static_cast<float>(x * s + y * c);
        }
    }
    return out;
}

Matrix layer_norm(const Matrix& states, std::span<const float> gain, float eps) {
    if (gain.size() != states.cols()) {
        throw ShapeError("layer_norm: gain length " + std::to_string(gain.size()) +
                         " for width " + std::to_string(states.cols()));
    }
    Matrix out(states.rows(), states.cols());
    for (std::size_t r = 0; r < states.rows(); ++r) {
        double mean = 0.0;
        for (std::size_t c = 0; c < states.cols(); ++c) {
            mean += states.at(r, c);
        }
        mean /= static_cast<double>(states.cols());
        double var = 0.0;
        for (std::size_t c = 0; c < states.cols(); ++c) {
            const double d = states.at(r, c) - mean;
            var += d * d;
        }
        var /= static_cast<double>(states.cols());
        const double inv = 1.0 / std::sqrt(var + static_cast<double>(eps));
        for (std::size_t c = 0; c < states.cols(); ++c) {
            out.at(r, c) = static_cast<float>((states.at(r, c) - mean) * inv *
                                              static_cast<double>(gain[c]));
        }
    }
    return out;
}

Matrix gelu(const Matrix& states) {
    static const double k = std::sqrt(2.0 / 3.14159265358979323846);
    Matrix out(states.rows(), states.cols());
    for (std::size_t i = 0; i < states.size(); ++i) {
        const double x = states.data()[i];
        out.data()[i] = static_cast<float>(
            0.5 * x * (1.0 + std::tanh(k * (x + 0.044715 * x * x * x))));
    }
    return out;
}

Matrix add(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw ShapeError("add: " + shape_str(a) + " vs " + shape_str(b));
    }
    Matrix out(a.rows(), a.cols());
    for (std::size_t i = 0; i < a.size(); ++i) {
        out.data()[i] = a.data()[i] + b.data()[i];
    }
    return out;
}

Matrix concat_rows(const Matrix& a, const Matrix& b) {
    if (a.rows() == 0) return b;
    if (b.rows() == 0) return a;
    if (a.cols() != b.cols()) {
        throw ShapeError("concat_rows: " + shape_str(a) + " vs " + shape_str(b));
    }
    Matrix out(a.rows() + b.rows(), a.cols());
    std::copy(a.data(), a.data() + a.size(), out.data());
    std::copy(b.data(), b.data() + b.size(), out.data() + a.size());
    return out;
}

}  // namespace kite
