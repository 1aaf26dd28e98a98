#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace playertrack {

/// Row-major matrix of per-detection appearance embeddings. Row i belongs to
/// the i-th data line of the detections file.
class EmbeddingMatrix {
public:
    EmbeddingMatrix() = default;
    EmbeddingMatrix(std::size_t rows, std::size_t dim);
    EmbeddingMatrix(std::size_t rows, std::size_t dim, std::vector<float> data);

    std::size_t rows() const { return rows_; }
    std::size_t dim() const { return dim_; }

    std::span<const float> row(std::size_t r) const { return {data_.data() + r * dim_, dim_}; }
    std::span<float> row(std::size_t r) { return {data_.data() + r * dim_, dim_}; }

    const std::vector<float>& data() const { return data_; }

    friend bool operator==(const EmbeddingMatrix&, const EmbeddingMatrix&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t dim_ = 0;
    std::vector<float> data_;
};

}  // namespace playertrack
