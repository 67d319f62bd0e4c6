#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace hack {

using Vector = std::vector<double>;
using Matrix = std::vector<Vector>;  // row-major, one example per row

double dot(std::span<const double> a, std::span<const double> b);
double norm2(std::span<const double> a);
double cosine_similarity(std::span<const double> a, std::span<const double> b);

/// Column count shared by every row; throws data_error on ragged input.
std::size_t column_count(const Matrix& x);

Vector to_double(std::span<const float> v);
std::vector<float> to_float(std::span<const double> v);

}  // namespace hack
