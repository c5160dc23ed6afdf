#pragma once

// Exact integer linear algebra. Everything here works on arbitrary-precision
// integers; there is no floating point anywhere in the decision path.

#include "nestdoe/error.hpp"

#include <boost/multiprecision/cpp_int.hpp>

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace nestdoe {

using BigInt = boost::multiprecision::cpp_int;
/// Always in lowest terms with a positive denominator.
using Rational = boost::multiprecision::cpp_rational;

/// Dense row-major matrix of arbitrary-precision integers. A model matrix is
/// stored transposed: one row per parameter, one column per run.
class IntegerMatrix {
public:
    IntegerMatrix(std::size_t rows, std::size_t cols)
        : rows_(rows), cols_(cols), data_(rows * cols) {
        if (rows == 0 || cols == 0)
            throw DimensionError("IntegerMatrix needs at least one row and one column");
    }

    IntegerMatrix(std::initializer_list<std::initializer_list<long long>> rows)
        : IntegerMatrix(rows.size(), rows.size() == 0 ? 0 : rows.begin()->size()) {
        std::size_t r = 0;
        for (const auto& row : rows) {
            if (row.size() != cols_)
                throw DimensionError("ragged initializer for IntegerMatrix");
            std::size_t c = 0;
            for (long long v : row)
                (*this)(r, c++) = v;
            ++r;
        }
    }

    static IntegerMatrix identity(std::size_t n) {
        IntegerMatrix m(n, n);
        for (std::size_t i = 0; i < n; ++i)
            m(i, i) = 1;
        return m;
    }

    [[nodiscard]] std::size_t rows() const noexcept { return rows_; }
    [[nodiscard]] std::size_t cols() const noexcept { return cols_; }

    BigInt& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    const BigInt& operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    [[nodiscard]] IntegerMatrix select_columns(std::span<const std::size_t> columns) const {
        IntegerMatrix out(rows_, columns.size());
        for (std::size_t j = 0; j < columns.size(); ++j) {
            if (columns[j] >= cols_)
                throw ArgumentError("column index " + std::to_string(columns[j]) + " out of range");
            for (std::size_t i = 0; i < rows_; ++i)
                out(i, j) = (*this)(i, columns[j]);
        }
        return out;
    }

    [[nodiscard]] IntegerMatrix transpose() const {
        IntegerMatrix out(cols_, rows_);
        for (std::size_t i = 0; i < rows_; ++i)
            for (std::size_t j = 0; j < cols_; ++j)
                out(j, i) = (*this)(i, j);
        return out;
    }

    /// Column `c` as a dense vector.
    [[nodiscard]] std::vector<BigInt> column(std::size_t c) const {
        std::vector<BigInt> out(rows_);
        for (std::size_t i = 0; i < rows_; ++i)
            out[i] = (*this)(i, c);
        return out;
    }

    friend bool operator==(const IntegerMatrix&, const IntegerMatrix&) = default;

private:
    std::size_t rows_;
    std::size_t cols_;
    std::vector<BigInt> data_;
};

inline IntegerMatrix operator*(const IntegerMatrix& a, const IntegerMatrix& b) {
    if (a.cols() != b.rows())
        throw DimensionError("matrix product: inner dimensions differ");
    IntegerMatrix out(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const BigInt& aik = a(i, k);
            if (aik == 0)
                continue;
            for (std::size_t j = 0; j < b.cols(); ++j)
                out(i, j) += aik * b(k, j);
        }
    return out;
}

/// m * u for a dense vector u of length m.cols().
inline std::vector<BigInt> product(const IntegerMatrix& m, std::span<const BigInt> u) {
    if (u.size() != m.cols())
        throw DimensionError("matrix-vector product: length mismatch");
    std::vector<BigInt> out(m.rows());
    for (std::size_t i = 0; i < m.rows(); ++i)
        for (std::size_t j = 0; j < m.cols(); ++j)
            if (u[j] != 0)
                out[i] += m(i, j) * u[j];
    return out;
}

inline std::ostream& operator<<(std::ostream& os, const IntegerMatrix& m) {
    for (std::size_t i = 0; i < m.rows(); ++i) {
        for (std::size_t j = 0; j < m.cols(); ++j)
            os << (j ? " " : "") << m(i, j);
        os << '\n';
    }
    return os;
}

namespace detail {

// Forward Bareiss elimination on a copy of `m`. Returns the rank; `det_out`
// receives the signed determinant when the matrix is square.
inline std::size_t bareiss(IntegerMatrix m, BigInt* det_out) {
    const std::size_t rows = m.rows();
    const std::size_t cols = m.cols();
    BigInt prev = 1;
    int sign = 1;
    std::size_t rank = 0;
    for (std::size_t c = 0; c < cols && rank < rows; ++c) {
        std::size_t piv = rank;
        while (piv < rows && m(piv, c) == 0)
            ++piv;
        if (piv == rows)
            continue;
        if (piv != rank) {
            for (std::size_t j = 0; j < cols; ++j)
                std::swap(m(piv, j), m(rank, j));
            sign = -sign;
        }
        const BigInt pivot = m(rank, c);
        for (std::size_t i = rank + 1; i < rows; ++i) {
            const BigInt lead = m(i, c);
            for (std::size_t j = c + 1; j < cols; ++j)
                m(i, j) = (pivot * m(i, j) - lead * m(rank, j)) / prev;
            m(i, c) = 0;
        }
        prev = pivot;
        ++rank;
    }
    if (det_out != nullptr)
        *det_out = (rank == rows && rows == cols) ? BigInt(sign * prev) : BigInt(0);
    return rank;
}

} // namespace detail

/// Rank over the rationals, by fraction-free elimination.
inline std::size_t rank(const IntegerMatrix& m) { return detail::bareiss(m, nullptr); }

inline BigInt determinant(const IntegerMatrix& m) {
    if (m.rows() != m.cols())
        throw DimensionError("determinant of a non-square " + std::to_string(m.rows()) + "x" +
                             std::to_string(m.cols()) + " matrix");
    BigInt det;
    detail::bareiss(m, &det);
    return det;
}

/// Divides out the gcd of the entries and makes the first nonzero entry
/// positive. A zero vector is left unchanged.
inline void make_primitive(std::span<BigInt> u) {
    BigInt g = 0;
    for (const auto& v : u)
        if (v != 0)
            g = boost::multiprecision::gcd(g, BigInt(abs(v)));
    if (g == 0)
        return;
    auto first = std::find_if(u.begin(), u.end(), [](const BigInt& v) { return v != 0; });
    if (*first < 0)
        g = -g;
    if (g != 1)
        for (auto& v : u)
            v /= g;
}

/// If the columns of `m` listed in `columns` are minimally dependent, returns
/// the primitive kernel vector of `m` supported exactly on them (length
/// m.cols(), first nonzero entry positive). Otherwise returns nullopt.
inline std::optional<std::vector<BigInt>> minimal_kernel_vector(const IntegerMatrix& m,
                                                                std::span<const std::size_t> columns) {
    if (columns.empty())
        throw ArgumentError("minimal_kernel_vector: empty column set");
    const std::size_t rows = m.rows();
    const std::size_t k = columns.size();
    IntegerMatrix sub = m.select_columns(columns);

    // Fraction-free Gauss-Jordan: every pivot column ends as d * e_row.
    BigInt d = 1;
    std::vector<std::size_t> pivot_row_of(k, rows);
    std::vector<bool> row_used(rows, false);
    std::optional<std::size_t> free_column;
    for (std::size_t c = 0; c < k; ++c) {
        std::size_t r = 0;
        while (r < rows && (row_used[r] || sub(r, c) == 0))
            ++r;
        if (r == rows) {
            if (free_column)
                return std::nullopt; // nullity >= 2
            free_column = c;
            continue;
        }
        const BigInt pivot = sub(r, c);
        for (std::size_t i = 0; i < rows; ++i) {
            if (i == r)
                continue;
            const BigInt lead = sub(i, c);
            for (std::size_t j = 0; j < k; ++j)
                if (j != c)
                    sub(i, j) = (pivot * sub(i, j) - lead * sub(r, j)) / d;
            sub(i, c) = 0;
        }
        d = pivot;
        row_used[r] = true;
        pivot_row_of[c] = r;
    }
    if (!free_column)
        return std::nullopt;

    const std::size_t f = *free_column;
    std::vector<BigInt> u(m.cols());
    for (std::size_t c = 0; c < k; ++c)
        u[columns[c]] = (c == f) ? d : BigInt(-sub(pivot_row_of[c], f));
    for (std::size_t c = 0; c < k; ++c)
        if (u[columns[c]] == 0)
            return std::nullopt; // a proper subset is already dependent
    make_primitive(u);
    return u;
}

} // namespace nestdoe
