#pragma once

#include <cstddef>
#include <limits>
#include <span>
#include <vector>

namespace kite {

// Dense row-major float matrix. All kernels accumulate in double and store
// results as float, so outputs are identical across runs.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, float fill = 0.0f)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    bool empty() const { return data_.empty(); }

    float& at(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    float at(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    std::span<float> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
    std::span<const float> row(std::size_t r) const {
        return {data_.data() + r * cols_, cols_};
    }

    float* data() { return data_.data(); }
    const float* data() const { return data_.data(); }
    std::size_t size() const { return data_.size(); }

    void set_row(std::size_t r, std::span<const float> values);

    // Rows [first, last) as a fresh matrix.
    Matrix slice_rows(std::size_t first, std::size_t last) const;

    bool operator==(const Matrix& other) const = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<float> data_;
};

// Additive mask sentinel: masked scores become exactly zero after softmax.
inline constexpr float kMasked = -std::numeric_limits<float>::infinity();

// a x b. Throws ShapeError naming both operand shapes on mismatch.
Matrix matmul(const Matrix& a, const Matrix& b);

// a x b[:, col_begin : col_begin + ncols] without materializing the block.
// Used for per-head projections out of packed d_model x d_model weights.
Matrix matmul_cols(const Matrix& a, const Matrix& b, std::size_t col_begin,
                   std::size_t ncols);

// Row-wise softmax of scale * scores. Entries equal to kMasked come out as
// exactly zero; a fully masked row raises DegenerateMaskError.
Matrix softmax_rows(const Matrix& scores, float scale);

// Rotary position embedding: consecutive dim pairs (2i, 2i+1) of row r are
// rotated by positions[r] * base^(-2i/d). Preserves row norms.
Matrix apply_rope(const Matrix& states, std::span<const std::size_t> positions,
                  float base);

// Per-row layer normalization with gain only (no shift).
Matrix layer_norm(const Matrix& states, std::span<const float> gain,
                  float eps = 1e-5f);

// GELU (tanh approximation), elementwise.
Matrix gelu(const Matrix& states);

Matrix add(const Matrix& a, const Matrix& b);

// Stack b below a. Column counts must match; either side may have 0 rows.
Matrix concat_rows(const Matrix& a, const Matrix& b);

}  // namespace kite
