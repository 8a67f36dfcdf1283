#include "capret/linalg.hpp"

#include "capret/errors.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace capret {

Matrix Matrix::identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

Matrix Matrix::from_rows(const std::vector<Vec>& rows) {
    Matrix m;
    for (const auto& r : rows) m.append_row(r);
    return m;
}

void Matrix::append_row(VecView v) {
    if (rows_ == 0 && cols_ == 0) cols_ = v.size();
    if (v.size() != cols_) {
        throw ShapeError("row of length " + std::to_string(v.size()) + " appended to matrix with " +
                         std::to_string(cols_) + " columns");
    }
    data_.insert(data_.end(), v.begin(), v.end());
    ++rows_;
}

void require_same_dim(VecView a, VecView b, const char* what) {
    if (a.size() != b.size()) {
        throw ShapeError(std::string(what) + ": dimension mismatch (" + std::to_string(a.size()) +
                         " vs " + std::to_string(b.size()) + ")");
    }
}

double dot(VecView a, VecView b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double norm(VecView a) { return std::sqrt(dot(a, a)); }

double cosine(VecView a, VecView b) {
    require_same_dim(a, b, "cosine");
    const double na = norm(a);
    const double nb = norm(b);
    if (na == 0.0 || nb == 0.0) throw DataError("cosine of a zero-norm vector is undefined");
    return std::clamp(dot(a, b) / (na * nb), -1.0, 1.0);
}

Vec softmax(VecView logits, double temperature) {
    Vec out(logits.size());
    if (logits.empty()) return out;
    const double mx = *std::max_element(logits.begin(), logits.end());
    double z = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        out[i] = std::exp((logits[i] - mx) / temperature);
        z += out[i];
    }
    for (double& w : out) w /= z;
    return out;
}

double log_sum_exp(VecView x) {
    const double mx = *std::max_element(x.begin(), x.end());
    double s = 0.0;
    for (double v : x) s += std::exp(v - mx);
    return mx + std::log(s);
}

}  // namespace capret
