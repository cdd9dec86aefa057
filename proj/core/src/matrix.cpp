#include "rangead/matrix.hpp"

#include <algorithm>
#include <string>

#include "rangead/error.hpp"

namespace rangead {

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) {
        throw ShapeError("matrix data holds " + std::to_string(data_.size()) + " values, expected " +
                         std::to_string(rows_) + "x" + std::to_string(cols_));
    }
}

Matrix Matrix::select_rows(std::span<const std::size_t> indices) const {
    Matrix out(indices.size(), cols_);
    for (std::size_t i = 0; i < indices.size(); ++i) {
        if (indices[i] >= rows_) {
            throw ShapeError("row index " + std::to_string(indices[i]) + " out of range");
        }
        std::ranges::copy(row(indices[i]), out.row(i).begin());
    }
    return out;
}

void Matrix::append_row(std::span<const double> values) {
    if (rows_ == 0 && cols_ == 0) {
        cols_ = values.size();
    }
    if (values.size() != cols_) {
        throw ShapeError("appended row has " + std::to_string(values.size()) + " values, expected " +
                         std::to_string(cols_));
    }
    data_.insert(data_.end(), values.begin(), values.end());
    ++rows_;
}

void rethrow_with_prefix(const Error& err, const std::string& prefix) {
    const std::string msg = prefix + err.what();
    switch (err.kind()) {
        case ErrorKind::config:
            throw ConfigError(msg);
        case ErrorKind::data:
            throw DataError(msg);
        case ErrorKind::shape:
            throw ShapeError(msg);
        case ErrorKind::numeric:
            throw NumericError(msg);
    }
    throw Error(err.kind(), msg);
}

}  // namespace rangead
